//! Command-line front end. Exit codes: 0 success, 2 argument error,
//! 3 input format error, 4 verification failure, 1 anything else.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::assessor::{
    average_fiedler_with, verify_lemma1, verify_ncut_oracle, verify_theorem1, BoundTrialReport,
    DEFAULT_ASSESSMENT_SAMPLES,
};
use crate::driver::{run_ablation_with, run_mocl, to_json, RunConfig, SCHEMA_VERSION};
use crate::error::Error;
use crate::io::{fpm1_inputs, read_fpm1, write_fpm1};
use crate::model::verify_gradients;
use crate::patchgraph::{KernelSpec, LaplacianKind};
use crate::spectral_cut::maskcut;
use crate::stream::{oracle_view, StreamState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "cuter", version, about = "Spectral cut-out replay for multi-label continual learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Average Fiedler value over FPM1 feature maps.
    Assess {
        /// An FPM1 file or a directory of them.
        #[arg(long)]
        features: PathBuf,
        /// gaussian-median, gaussian:<sigma>, cosine-continuous,
        /// cosine-binarized[:<tau>], or a JSON object.
        #[arg(long, default_value = "gaussian-median")]
        kernel: String,
        #[arg(long, value_enum, default_value_t = Laplacian::Unnormalized)]
        laplacian: Laplacian,
        /// Use at most this many files, in name order.
        #[arg(long, default_value_t = DEFAULT_ASSESSMENT_SAMPLES)]
        samples: usize,
        #[arg(long)]
        source_id: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Iterative MaskCut on one FPM1 feature map.
    Cut {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 3)]
        iters: usize,
        #[arg(long, default_value = "gaussian-median")]
        kernel: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full online continual learning run, or an ablation sweep when the
    /// config has an `ablation` block.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write held-out stream samples as FPM1 files with JSON annotations.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        samples: usize,
        #[arg(long, default_value = "probe")]
        tag: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Randomized checks of bounds, gradients and the NCut relaxation.
    Verify {
        #[arg(value_enum)]
        check: Check,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Laplacian {
    Unnormalized,
    Normalized,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Check {
    Lemma1,
    Theorem1,
    Gradcheck,
    NcutOracle,
}

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config { .. } => EXIT_USAGE,
            Error::Format { .. } | Error::Io(_) | Error::Json(_) => EXIT_INPUT,
            _ => EXIT_FAILURE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Serialize)]
struct Versioned<'a, T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    body: &'a T,
}

fn write_json<T: Serialize>(path: &Path, body: &T) -> Result<(), Failure> {
    let text = to_json(&Versioned {
        schema_version: SCHEMA_VERSION,
        body,
    })?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(Error::from)?;
    }
    fs::write(path, text).map_err(Error::from)?;
    Ok(())
}

/// Parses the short kernel forms or a JSON object.
pub fn parse_kernel(text: &str) -> Result<KernelSpec, Failure> {
    let text = text.trim();
    let spec = if text.starts_with('{') {
        serde_json::from_str(text).map_err(|e| Failure::usage(format!("--kernel: {e}")))?
    } else {
        let (name, arg) = match text.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (text, None),
        };
        let num = |a: &str| a.parse::<f64>().map_err(|_| Failure::usage(format!("--kernel: bad number {a:?}")));
        match (name, arg) {
            ("gaussian-median", None) => KernelSpec::gaussian_median(),
            ("gaussian", Some(s)) => KernelSpec::gaussian(num(s)?),
            ("cosine-continuous", None) => KernelSpec::cosine_continuous(),
            ("cosine-binarized", None) => {
                let d = KernelSpec::default();
                KernelSpec::cosine_binarized(d.tau_sim, d.epsilon_floor)
            }
            ("cosine-binarized", Some(t)) => KernelSpec::cosine_binarized(num(t)?, KernelSpec::default().epsilon_floor),
            _ => return Err(Failure::usage(format!("--kernel: unknown kernel {text:?}"))),
        }
    };
    spec.validate()?;
    Ok(spec)
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?;
            RunConfig::from_json(&text).map_err(|e| match e {
                Error::Config { path: field, message } => {
                    Failure::usage(format!("{}: invalid configuration at {field}: {message}", p.display()))
                }
                other => other.into(),
            })
        }
    }
}

fn merge_bound_reports(check: &str, parts: Vec<BoundTrialReport>) -> BoundTrialReport {
    let mut out = BoundTrialReport {
        check: check.to_owned(),
        trials: 0,
        violations: 0,
        max_slack: f64::INFINITY,
        resamples: 0,
        notes: Vec::new(),
    };
    for p in parts {
        out.trials += p.trials;
        out.violations += p.violations;
        out.max_slack = out.max_slack.min(p.max_slack);
        out.resamples += p.resamples;
        out.notes.extend(p.notes);
    }
    out
}

#[derive(Serialize)]
struct GradcheckReport {
    check: &'static str,
    trials: usize,
    rel_tol: f64,
    max_rel_err: f64,
    failures: usize,
    per_regularizer: Vec<crate::model::GradSuiteEntry>,
}

const GRADCHECK_REL_TOL: f64 = 1e-4;
const THEOREM1_NODES: usize = 12;
const THEOREM1_NOISE: f64 = 0.3;
const LEMMA1_MAX_NODES: usize = 10;
const NCUT_MAX_NODES: usize = 12;

/// Prints a report to stdout and optionally to a file.
fn emit<T: Serialize>(body: &T, out: Option<&Path>) -> Result<(), Failure> {
    let text = to_json(&Versioned {
        schema_version: SCHEMA_VERSION,
        body,
    })?;
    print!("{text}");
    if let Some(p) = out {
        fs::write(p, &text).map_err(Error::from)?;
    }
    Ok(())
}

fn verify(check: Check, trials: Option<usize>, seed: u64, out: Option<&Path>) -> Result<(), Failure> {
    let passed = match check {
        Check::Lemma1 => {
            let r = verify_lemma1(trials.unwrap_or(200), LEMMA1_MAX_NODES, seed)?;
            emit(&r, out)?;
            r.passed()
        }
        Check::Theorem1 => {
            let t = trials.unwrap_or(200);
            let parts = vec![
                verify_theorem1(t - t / 2, 2, THEOREM1_NODES, THEOREM1_NOISE, seed)?,
                verify_theorem1(t / 2, 3, THEOREM1_NODES, THEOREM1_NOISE, seed.wrapping_add(1))?,
            ];
            let r = merge_bound_reports("theorem1", parts);
            emit(&r, out)?;
            r.passed()
        }
        Check::Gradcheck => {
            let t = trials.unwrap_or(20);
            let suite = verify_gradients(t, seed, GRADCHECK_REL_TOL)?;
            let r = GradcheckReport {
                check: "gradcheck",
                trials: t,
                rel_tol: GRADCHECK_REL_TOL,
                max_rel_err: suite.iter().map(|e| e.max_rel_err).fold(0.0, f64::max),
                failures: suite.iter().map(|e| e.failures).sum(),
                per_regularizer: suite,
            };
            emit(&r, out)?;
            eprintln!("max relative error {:.3e}", r.max_rel_err);
            r.failures == 0
        }
        Check::NcutOracle => {
            let r = verify_ncut_oracle(trials.unwrap_or(100), NCUT_MAX_NODES, seed)?;
            emit(&r, out)?;
            r.passed()
        }
    };
    if passed {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_VERIFY,
            message: "verification failed".into(),
        })
    }
}

fn assess(
    features: &Path,
    kernel: &str,
    laplacian: Laplacian,
    samples: usize,
    source_id: Option<String>,
    out: &Path,
) -> Result<(), Failure> {
    let k = parse_kernel(kernel)?;
    if samples == 0 {
        return Err(Failure::usage("--samples must be at least 1"));
    }
    if !features.exists() {
        return Err(Failure::input(format!("{}: no such file or directory", features.display())));
    }
    let files = fpm1_inputs(features)?;
    if files.is_empty() {
        return Err(Failure::input(format!("{}: no inputs", features.display())));
    }
    let fms = files.iter().take(samples).map(|f| read_fpm1(f)).collect::<Result<Vec<_>, _>>()?;
    let which = match laplacian {
        Laplacian::Unnormalized => LaplacianKind::Unnormalized,
        Laplacian::Normalized => LaplacianKind::Normalized,
    };
    let id = source_id.unwrap_or_else(|| {
        features
            .file_stem()
            .map_or_else(|| "features".into(), |s| s.to_string_lossy().into_owned())
    });
    let report = average_fiedler_with(&id, &fms, &k, which)?;
    write_json(out, &report)
}

fn cut(features: &Path, iters: usize, kernel: &str, out: &Path) -> Result<(), Failure> {
    if iters == 0 {
        return Err(Failure::usage("--iters must be at least 1"));
    }
    let k = parse_kernel(kernel)?;
    let fm = read_fpm1(features)?;
    let result = maskcut(&fm, &k, iters)?;
    write_json(out, &result)
}

fn simulate(config: Option<&Path>, out: &Path) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    match &cfg.ablation {
        None => {
            let art = run_mocl(&cfg)?;
            art.write(out)?;
        }
        Some(ab) => {
            let table = run_ablation_with(&cfg, &ab.variants, &ab.seeds, |art| art.write(&out.join(art.config.run_id())))?;
            fs::create_dir_all(out).map_err(Error::from)?;
            fs::write(out.join("ablation.csv"), table.to_csv()).map_err(Error::from)?;
            fs::write(out.join("ablation.json"), to_json(&table)?).map_err(Error::from)?;
            fs::write(out.join("config.echo.json"), to_json(&cfg)?).map_err(Error::from)?;
            for s in &table.summary {
                println!(
                    "{:<12} last mAP {:.4}  avg mAP {:.4}  Fiedler {:.4}  AP50 {:.4}",
                    s.variant.name(),
                    s.last_map,
                    s.avg_map,
                    s.final_fiedler,
                    s.final_ap50
                );
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SampleAnnotation<'a> {
    file: String,
    labels: &'a [usize],
    boxes: Vec<(usize, crate::spectral_cut::BBox)>,
}

fn generate(config: Option<&Path>, samples: usize, tag: &str, out: &Path) -> Result<(), Failure> {
    if samples == 0 {
        return Err(Failure::usage("--samples must be at least 1"));
    }
    let cfg = load_config(config)?;
    let stream = StreamState::new(cfg.effective_stream())?;
    let set = stream.held_out(tag, samples);
    fs::create_dir_all(out).map_err(Error::from)?;
    let width = samples.to_string().len();
    let mut notes = Vec::with_capacity(set.len());
    for (i, s) in set.iter().enumerate() {
        let file = format!("{tag}_{i:0width$}.fpm1");
        write_fpm1(&out.join(&file), &s.raw)?;
        let (labels, boxes) = oracle_view(s);
        notes.push(SampleAnnotation {
            file,
            labels,
            boxes: boxes.to_vec(),
        });
    }
    write_json(&out.join("annotations.json"), &serde_json::json!({ "samples": notes }))
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Assess {
            features,
            kernel,
            laplacian,
            samples,
            source_id,
            out,
        } => assess(&features, &kernel, laplacian, samples, source_id, &out),
        Command::Cut {
            features,
            iters,
            kernel,
            out,
        } => cut(&features, iters, &kernel, &out),
        Command::Simulate { config, out } => simulate(config.as_deref(), &out),
        Command::Generate {
            config,
            samples,
            tag,
            out,
        } => generate(config.as_deref(), samples, &tag, &out),
        Command::Verify {
            check,
            trials,
            seed,
            out,
        } => verify(check, trials, seed, out.as_deref()),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patchgraph::{Bandwidth, KernelKind};

    #[test]
    fn kernel_short_forms() {
        assert_eq!(parse_kernel("gaussian-median").unwrap(), KernelSpec::gaussian_median());
        let g = parse_kernel("gaussian:0.5").unwrap();
        assert_eq!(g.sigma, Bandwidth::Fixed(0.5));
        let c = parse_kernel("cosine-binarized:0.3").unwrap();
        assert_eq!((c.kind, c.tau_sim), (KernelKind::CosineBinarized, 0.3));
        assert_eq!(parse_kernel("laplace").unwrap_err().code, EXIT_USAGE);
        assert_eq!(parse_kernel("gaussian:-1").unwrap_err().code, EXIT_USAGE);
        let j = parse_kernel(r#"{"kind":"gaussian","sigma":{"fixed":2.0},"tau_sim":0.2,"epsilon_floor":1e-5}"#).unwrap();
        assert_eq!(j.sigma, Bandwidth::Fixed(2.0));
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["cuter", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["cuter", "verify", "lemma2"]), EXIT_USAGE);
        assert_eq!(run(["cuter", "--help"]), EXIT_OK);
    }
}
