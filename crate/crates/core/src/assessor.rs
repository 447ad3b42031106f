//! Annotation-free localization assessment by averaged Fiedler value, and
//! randomized harnesses checking the spectral bounds the assessment and the
//! regularizer rest on.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inf_norm, spectral_norm, SymMatrix};
use crate::patchgraph::{
    build_adjacency, cheeger_constant_bruteforce_with, fiedler_value, max_degree,
    CheegerNormalization, FeatureMap, KernelSpec, LaplacianKind, PatchGraph,
    BRUTE_FORCE_MAX_NODES,
};
use crate::seeding::derive_rng;
use crate::spectral_cut::{brute_force_ncut, ncut_bipartition};

/// Sample count used when assessing from a downstream subset.
pub const DEFAULT_ASSESSMENT_SAMPLES: usize = 64;

const BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSample {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentReport {
    pub source_id: String,
    pub mean_fiedler: f64,
    pub per_sample: Vec<f64>,
    pub kernel: KernelSpec,
    pub laplacian: LaplacianKind,
    pub sample_count: usize,
    #[serde(default)]
    pub skipped: Vec<SkippedSample>,
}

pub fn average_fiedler(
    source_id: &str,
    fms: &[FeatureMap],
    k: &KernelSpec,
) -> Result<AssessmentReport> {
    average_fiedler_with(source_id, fms, k, LaplacianKind::Unnormalized)
}

/// Mean Fiedler value over feature maps. Maps that fail to form a graph are
/// skipped and listed; an error is returned only when every map fails.
pub fn average_fiedler_with(
    source_id: &str,
    fms: &[FeatureMap],
    k: &KernelSpec,
    which: LaplacianKind,
) -> Result<AssessmentReport> {
    if fms.is_empty() {
        return Err(Error::config("features", "no inputs"));
    }
    let mut per_sample = Vec::with_capacity(fms.len());
    let mut skipped = Vec::new();
    let mut last_err = None;
    for (index, fm) in fms.iter().enumerate() {
        match build_adjacency(fm, k).and_then(|g| fiedler_value(&g, which)) {
            Ok(v) => per_sample.push(v),
            Err(e) => {
                skipped.push(SkippedSample {
                    index,
                    reason: e.to_string(),
                });
                last_err = Some(e);
            }
        }
    }
    if per_sample.is_empty() {
        return Err(last_err.expect("at least one failure"));
    }
    let mean_fiedler = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    Ok(AssessmentReport {
        source_id: source_id.to_owned(),
        mean_fiedler,
        sample_count: per_sample.len(),
        per_sample,
        kernel: *k,
        laplacian: which,
        skipped,
    })
}

/// Lower mean Fiedler value first; ties by source id.
pub fn rank_sources(mut reports: Vec<AssessmentReport>) -> Vec<AssessmentReport> {
    reports.sort_by(|a, b| {
        a.mean_fiedler
            .total_cmp(&b.mean_fiedler)
            .then_with(|| a.source_id.cmp(&b.source_id))
    });
    reports
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundTrialReport {
    pub check: String,
    pub trials: usize,
    pub violations: usize,
    /// Tightest margin (bound minus bounded quantity) observed over all checks.
    pub max_slack: f64,
    #[serde(default)]
    pub resamples: usize,
    /// Free-form diagnostics that do not count as violations.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl BoundTrialReport {
    fn new(check: &str) -> Self {
        Self {
            check: check.to_owned(),
            trials: 0,
            violations: 0,
            max_slack: f64::INFINITY,
            resamples: 0,
            notes: Vec::new(),
        }
    }

    fn record(&mut self, slack: f64, scale: f64) -> bool {
        self.max_slack = self.max_slack.min(slack);
        let ok = slack >= -BOUND_TOL * (1.0 + scale);
        if !ok {
            self.violations += 1;
        }
        ok
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Dense random graph with i.i.d. uniform(0, 1) weights.
pub fn random_uniform_graph(n: usize, rng: &mut impl Rng) -> PatchGraph {
    PatchGraph::from_adjacency(SymMatrix::from_upper_fn(n, |i, j| {
        if i == j {
            0.0
        } else {
            rng.gen_range(0.0..1.0)
        }
    }))
    .expect("uniform weights form a valid adjacency")
}

/// Margins of the two Cheeger-type inequalities for a single graph.
#[derive(Debug, Clone, Copy)]
pub struct CheegerMargins {
    /// `λ2(L)/2 ≤ i(G) ≤ √(2Δλ2(L))` with the isoperimetric number `i(G)`.
    pub degree_form: (f64, f64),
    /// `λ2(L_sym)/2 ≤ φ(G) ≤ √(2λ2(L_sym))` with the conductance `φ(G)`.
    pub normalized_form: (f64, f64),
    /// Whether `λ2(L)/2 ≤ φ(G)` held (unnormalized value, volume ratio).
    pub mixed_lower_holds: bool,
}

pub fn cheeger_margins(g: &PatchGraph) -> Result<CheegerMargins> {
    let l2 = fiedler_value(g, LaplacianKind::Unnormalized)?;
    let iso = cheeger_constant_bruteforce_with(g, CheegerNormalization::Cardinality)?;
    let delta = max_degree(g);
    let degree_form = (iso - l2 / 2.0, (2.0 * delta * l2).sqrt() - iso);

    let conductance = cheeger_constant_bruteforce_with(g, CheegerNormalization::Volume)?;
    let normalized_form = match fiedler_value(g, LaplacianKind::Normalized) {
        Ok(l2n) => (conductance - l2n / 2.0, (2.0 * l2n).sqrt() - conductance),
        // isolated node: conductance is 0 and so is the normalized bound's subject
        Err(Error::IsolatedNode { .. }) => (0.0, 0.0),
        Err(e) => return Err(e),
    };
    Ok(CheegerMargins {
        degree_form,
        normalized_form,
        mixed_lower_holds: l2 / 2.0 <= conductance + BOUND_TOL,
    })
}

/// Randomized check of the Cheeger inequalities on dense uniform graphs of
/// 2..=`n_max` nodes, with the Cheeger constant found by enumeration.
pub fn verify_lemma1(trials: usize, n_max: usize, seed: u64) -> Result<BoundTrialReport> {
    if !(2..=BRUTE_FORCE_MAX_NODES).contains(&n_max) {
        return Err(Error::SizeLimit {
            n: n_max,
            max: BRUTE_FORCE_MAX_NODES,
        });
    }
    let mut report = BoundTrialReport::new("lemma1");
    let mut mixed_failures = 0;
    for t in 0..trials {
        let mut rng = derive_rng(seed, "lemma1", t as u64);
        let n = rng.gen_range(2..=n_max);
        let g = random_uniform_graph(n, &mut rng);
        let m = cheeger_margins(&g)?;
        let scale = max_degree(&g);
        report.record(m.degree_form.0, scale);
        report.record(m.degree_form.1, scale);
        report.record(m.normalized_form.0, 1.0);
        report.record(m.normalized_form.1, 1.0);
        if !m.mixed_lower_holds {
            mixed_failures += 1;
        }
        report.trials += 1;
    }
    report.notes.push(format!(
        "unnormalized λ2/2 exceeded the volume-normalized Cheeger constant in {mixed_failures} of {trials} graphs (not a bound)"
    ));
    Ok(report)
}

/// `(λ2(L), ‖ε‖₂ + ‖ε‖_∞)` for `A = A* + ε`.
pub fn theorem1_sides(a_star: &SymMatrix, eps: &SymMatrix) -> Result<(f64, f64)> {
    let a = a_star.add(eps);
    let g = PatchGraph::from_adjacency(a)?;
    let l2 = fiedler_value(&g, LaplacianKind::Unnormalized)?;
    let bound = spectral_norm(eps)? + inf_norm(eps);
    Ok((l2, bound))
}

/// Block-diagonal ideal adjacency with uniform(0.5, 1) weights inside
/// `blocks` contiguous groups of random sizes (at least one node each).
pub fn random_block_adjacency(n: usize, blocks: usize, rng: &mut impl Rng) -> (SymMatrix, Vec<usize>) {
    let mut sizes = vec![1usize; blocks];
    for _ in 0..(n - blocks) {
        sizes[rng.gen_range(0..blocks)] += 1;
    }
    let mut label = Vec::with_capacity(n);
    for (b, &s) in sizes.iter().enumerate() {
        label.extend(std::iter::repeat(b).take(s));
    }
    let a = SymMatrix::from_upper_fn(n, |i, j| {
        if i != j && label[i] == label[j] {
            rng.gen_range(0.5..1.0)
        } else {
            0.0
        }
    });
    (a, label)
}

/// Randomized check of `λ2(L) ≤ ‖ε‖₂ + ‖ε‖_∞` for block-diagonal-plus-noise
/// adjacencies. Noise entries are uniform(−s, s) with zero diagonal; an entry
/// that would make the adjacency negative is redrawn and counted.
pub fn verify_theorem1(
    trials: usize,
    blocks: usize,
    n: usize,
    noise_scale: f64,
    seed: u64,
) -> Result<BoundTrialReport> {
    if blocks < 2 || blocks > n {
        return Err(Error::config("blocks", "need 2 <= blocks <= n"));
    }
    if !(noise_scale >= 0.0) {
        return Err(Error::config("noise_scale", "must be nonnegative"));
    }
    let mut report = BoundTrialReport::new("theorem1");
    for t in 0..trials {
        let mut rng = derive_rng(seed, "theorem1", t as u64);
        let (a_star, _) = random_block_adjacency(n, blocks, &mut rng);
        let mut eps = SymMatrix::zeros(n);
        for i in 0..n {
            for j in (i + 1)..n {
                if noise_scale == 0.0 {
                    continue;
                }
                let mut e = rng.gen_range(-noise_scale..noise_scale);
                while a_star.get(i, j) + e < 0.0 {
                    report.resamples += 1;
                    e = rng.gen_range(-noise_scale..noise_scale);
                }
                eps.set(i, j, e);
            }
        }
        let (l2, bound) = theorem1_sides(&a_star, &eps)?;
        report.record(bound - l2, bound);
        report.trials += 1;
    }
    Ok(report)
}

/// Relaxed NCut against the exhaustive minimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcutOracleReport {
    pub trials: usize,
    /// Relaxed energy strictly below the exhaustive optimum (must be 0).
    pub below_oracle: usize,
    pub within_ratio: usize,
    pub ratio_limit: f64,
    pub worst_ratio: f64,
    pub planted_trials: usize,
    pub planted_recovered: usize,
}

impl NcutOracleReport {
    pub const RATIO_LIMIT: f64 = 1.2;
    pub const MIN_WITHIN_FRACTION: f64 = 0.9;

    pub fn within_fraction(&self) -> f64 {
        if self.trials == 0 {
            return 1.0;
        }
        self.within_ratio as f64 / self.trials as f64
    }

    pub fn passed(&self) -> bool {
        self.below_oracle == 0
            && self.within_fraction() >= Self::MIN_WITHIN_FRACTION
            && self.planted_recovered == self.planted_trials
    }
}

/// Two dense blocks with cross weights at most 1% of the weakest
/// within-block weight. Returns the graph and each node's block.
pub fn planted_two_block_graph(n: usize, rng: &mut impl Rng) -> (PatchGraph, Vec<u8>) {
    let first = rng.gen_range(2..=n - 2);
    let mut block: Vec<u8> = (0..n).map(|i| u8::from(i >= first)).collect();
    for i in (1..n).rev() {
        block.swap(i, rng.gen_range(0..=i));
    }
    let within_min = 0.5;
    let a = SymMatrix::from_upper_fn(n, |i, j| {
        if i == j {
            0.0
        } else if block[i] == block[j] {
            rng.gen_range(within_min..1.0)
        } else {
            rng.gen_range(0.0..=0.01 * within_min)
        }
    });
    (PatchGraph::from_adjacency(a).expect("valid weights"), block)
}

/// Random dense graphs with `3 <= n <= n_max` nodes, plus one planted
/// two-block graph per trial.
pub fn verify_ncut_oracle(trials: usize, n_max: usize, seed: u64) -> Result<NcutOracleReport> {
    if !(4..=BRUTE_FORCE_MAX_NODES).contains(&n_max) {
        return Err(Error::config("n_max", format!("must lie in 4..={BRUTE_FORCE_MAX_NODES}")));
    }
    let mut r = NcutOracleReport {
        trials: 0,
        below_oracle: 0,
        within_ratio: 0,
        ratio_limit: NcutOracleReport::RATIO_LIMIT,
        worst_ratio: 1.0,
        planted_trials: 0,
        planted_recovered: 0,
    };
    for t in 0..trials {
        let mut rng = derive_rng(seed, "ncut-oracle", t as u64);
        let n = rng.gen_range(3..=n_max);
        let g = random_uniform_graph(n, &mut rng);
        let relaxed = ncut_bipartition(&g)?;
        let exact = brute_force_ncut(&g)?;
        if relaxed.energy < exact.energy - BOUND_TOL * (1.0 + exact.energy) {
            r.below_oracle += 1;
        }
        let ratio = relaxed.energy / exact.energy;
        r.worst_ratio = r.worst_ratio.max(ratio);
        if ratio <= NcutOracleReport::RATIO_LIMIT {
            r.within_ratio += 1;
        }
        r.trials += 1;

        let (g, block) = planted_two_block_graph(rng.gen_range(4..=n_max), &mut rng);
        let relaxed = ncut_bipartition(&g)?;
        let same = relaxed.side_of.iter().zip(&block).all(|(s, b)| s == b);
        let swapped = relaxed.side_of.iter().zip(&block).all(|(s, b)| s != b);
        if same || swapped {
            r.planted_recovered += 1;
        }
        r.planted_trials += 1;
    }
    Ok(r)
}
