use std::path::Path;
use std::process::{Command, Output};

use cuter::assessor::AssessmentReport;
use cuter::io::write_fpm1;
use cuter::patchgraph::FeatureMap;
use cuter::spectral_cut::CutResult;
use serde_json::Value;

fn cuter(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cuter")).args(args).output().unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Two-object 6x6 map with distinct prototypes.
fn two_object_map(shift: f64) -> FeatureMap {
    let mut data = Vec::new();
    for r in 0..6 {
        for c in 0..6 {
            let v = if r < 2 && c < 2 {
                [1.0, 0.0, 0.0]
            } else if r >= 3 && c >= 3 {
                [0.0, 1.0, 0.0]
            } else {
                [0.0, 0.0, 1.0]
            };
            data.extend(v.iter().map(|x| x + shift * ((r * 6 + c) % 5) as f64));
        }
    }
    FeatureMap::new(6, 6, 3, data).unwrap()
}

const SMALL_RUN: &str = r#"{ "stream": { "samples_per_task": 16, "n_tasks": 2 }, "eval_samples": 16, "probe_samples": 4 }"#;

#[test]
fn assess_counts_directory_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let maps = dir.path().join("maps");
    std::fs::create_dir(&maps).unwrap();
    for i in 0..3 {
        write_fpm1(&maps.join(format!("m{i}.fpm1")), &two_object_map(0.01 * i as f64)).unwrap();
    }
    std::fs::write(maps.join("notes.txt"), "ignored").unwrap();
    let out = dir.path().join("report.json");
    let o = cuter(&["assess", "--features", arg(&maps), "--out", arg(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: AssessmentReport = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report.sample_count, 3);
    assert_eq!(report.per_sample.len(), 3);
    assert!(report.mean_fiedler > 0.0);
}

#[test]
fn assess_empty_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = cuter(&["assess", "--features", arg(dir.path()), "--out", arg(&out)]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("no inputs"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn assess_corrupt_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("broken.fpm1");
    std::fs::write(&bad, b"NOPE\x01\x00\x00\x00").unwrap();
    let o = cuter(&["assess", "--features", arg(&bad), "--out", arg(&dir.path().join("r.json"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("broken.fpm1"), "{}", stderr(&o));
}

#[test]
fn cut_respects_iteration_budget() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("m.fpm1");
    write_fpm1(&map, &two_object_map(0.0)).unwrap();
    let out = dir.path().join("cut.json");
    let o = cuter(&["cut", "--features", arg(&map), "--iters", "2", "--out", arg(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let res: CutResult = serde_json::from_str(&text).unwrap();
    assert!(!res.iterations.is_empty() && res.iterations.len() <= 2);
    assert_eq!((res.grid_h, res.grid_w), (6, 6));
    // reserializing the parsed result reproduces the file minus its envelope
    let mut file: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(file["schema_version"], 1);
    file.as_object_mut().unwrap().remove("schema_version");
    assert_eq!(serde_json::to_value(&res).unwrap(), file);
}

#[test]
fn cut_zero_iterations_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("m.fpm1");
    write_fpm1(&map, &two_object_map(0.0)).unwrap();
    let o = cuter(&["cut", "--features", arg(&map), "--iters", "0", "--out", arg(&dir.path().join("c.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_writes_artifacts_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, SMALL_RUN).unwrap();
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = cuter(&["simulate", "--config", arg(&cfg), "--out", arg(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        let mut files: Vec<String> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        files.sort();
        let contents: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(out.join(f)).unwrap()).collect();
        runs.push((files, contents));
    }
    let files = &runs[0].0;
    for f in ["metrics.csv", "fiedler.csv", "checkpoint.cmp1", "config.echo.json", "buffer_task0.json", "buffer_task1.json"] {
        assert!(files.iter().any(|x| x == f), "missing {f} in {files:?}");
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn simulate_config_echo_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, SMALL_RUN).unwrap();
    let first = dir.path().join("first");
    assert!(cuter(&["simulate", "--config", arg(&cfg), "--out", arg(&first)]).status.success());
    let echo = first.join("config.echo.json");
    let second = dir.path().join("second");
    assert!(cuter(&["simulate", "--config", arg(&echo), "--out", arg(&second)]).status.success());
    for f in ["metrics.csv", "fiedler.csv", "checkpoint.cmp1", "config.echo.json"] {
        assert_eq!(std::fs::read(first.join(f)).unwrap(), std::fs::read(second.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn simulate_ablation_emits_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{ "stream": { "samples_per_task": 16, "n_tasks": 2 }, "eval_samples": 16, "probe_samples": 4,
             "ablation": { "variants": ["rs_baseline", "cuter"], "seeds": [3, 4] } }"#,
    )
    .unwrap();
    let out = dir.path().join("abl");
    let o = cuter(&["simulate", "--config", arg(&cfg), "--out", arg(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("rs_baseline") && stdout.contains("cuter"), "{stdout}");
    let csv = std::fs::read_to_string(out.join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4, "{csv}");
    for run in ["rs_baseline_s3", "rs_baseline_s4", "cuter_s3", "cuter_s4"] {
        assert!(out.join(run).join("metrics.csv").exists(), "{run}");
    }
    let table: Value = serde_json::from_str(&std::fs::read_to_string(out.join("ablation.json")).unwrap()).unwrap();
    assert_eq!(table["summary"].as_array().unwrap().len(), 2);
}

#[test]
fn simulate_bad_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{ "selection": { "tau1": 0.9, "tau2": 0.5 } }"#).unwrap();
    let o = cuter(&["simulate", "--config", arg(&cfg), "--out", arg(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("selection"), "{}", stderr(&o));

    std::fs::write(&cfg, r#"{ "stream": { "n_tasks": "five" } }"#).unwrap();
    let o = cuter(&["simulate", "--config", arg(&cfg), "--out", arg(&dir.path().join("y"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("stream.n_tasks"), "{}", stderr(&o));
}

#[test]
fn generate_writes_readable_maps() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gen");
    let o = cuter(&["generate", "--samples", "3", "--tag", "t", "--out", arg(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let notes: Value = serde_json::from_str(&std::fs::read_to_string(out.join("annotations.json")).unwrap()).unwrap();
    let samples = notes["samples"].as_array().unwrap();
    assert_eq!(samples.len(), 3);
    for s in samples {
        let fm = cuter::io::read_fpm1(&out.join(s["file"].as_str().unwrap())).unwrap();
        assert_eq!((fm.grid_h(), fm.grid_w()), (8, 8));
        assert_eq!(s["labels"].as_array().unwrap().len(), s["boxes"].as_array().unwrap().len());
    }
}

#[test]
fn verify_checks_exit_cleanly() {
    for (check, trials) in [("lemma1", "30"), ("theorem1", "30"), ("gradcheck", "2"), ("ncut-oracle", "10")] {
        let o = cuter(&["verify", check, "--trials", trials, "--seed", "5"]);
        assert_eq!(o.status.code(), Some(0), "{check}: {}", stderr(&o));
        let v: Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(v["schema_version"], 1);
    }
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(cuter(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(cuter(&["verify", "nonsense"]).status.code(), Some(2));
}
