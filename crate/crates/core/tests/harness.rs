use std::fs;
use std::path::Path;

use emac::harness::{self, read_csv, Algo, RunConfig, Summary};
use emac::Error;

fn tiny() -> RunConfig {
    RunConfig {
        total_steps: Some(650),
        eval_every: 200,
        eval_episodes: 2,
        warmup_steps: 300,
        batch_size: 8,
        hidden: vec![8],
        seeds: vec![3],
        ..RunConfig::default()
    }
}

fn bytes(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap()
}

#[test]
fn baseline_label_equals_zeroed_emac() {
    let dir = tempfile::tempdir().unwrap();
    let zeroed = RunConfig {
        alpha: 0.0,
        beta: 0.0,
        ..tiny()
    };
    let baseline = RunConfig {
        algo: Algo::Ddpg,
        ..tiny()
    };
    harness::run(&zeroed, &dir.path().join("a")).unwrap();
    harness::run(&baseline, &dir.path().join("b")).unwrap();
    let curve = |d: &str| bytes(&dir.path().join(d).join("seed_3/curve.csv"));
    assert_eq!(curve("a"), curve("b"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let c = RunConfig {
        diag_every: Some(300),
        ..tiny()
    };
    harness::run(&c, &dir.path().join("a")).unwrap();
    harness::run(&c, &dir.path().join("b")).unwrap();
    for file in [
        "seed_3/curve.csv",
        "seed_3/diagnostics.csv",
        "summary.json",
        "config.json",
    ] {
        assert_eq!(
            bytes(&dir.path().join("a").join(file)),
            bytes(&dir.path().join("b").join(file)),
            "{file}"
        );
    }
}

#[test]
fn artifacts_are_complete_and_recomputable() {
    let dir = tempfile::tempdir().unwrap();
    let c = RunConfig {
        seeds: vec![1, 2],
        ..tiny()
    };
    let (summary, runs) = harness::run(&c, dir.path()).unwrap();
    for run in &runs {
        let rows = read_csv(&harness::seed_dir(dir.path(), run.seed).join("curve.csv")).unwrap();
        assert_eq!(rows.len(), 650 / 200);
        assert!(rows.windows(2).all(|w| w[0].0 < w[1].0));
        let means: Vec<f64> = rows.iter().map(|r| r.1[0]).collect();
        let tail = &means[means.len().saturating_sub(harness::FINAL_SCORE_WINDOW)..];
        assert_eq!(harness::mean_std(tail, 0).0, run.final_score);
    }
    let on_disk: Summary =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(on_disk, summary);
    let echoed = RunConfig::from_file(&dir.path().join("config.json")).unwrap();
    assert_eq!(echoed, c.resolved());
}

#[test]
fn single_value_sweep_equals_single_run() {
    let dir = tempfile::tempdir().unwrap();
    let rows = harness::sweep(&tiny(), "beta", &["0.5".into()], &dir.path().join("sweep")).unwrap();
    let (summary, _) = harness::run(&tiny(), &dir.path().join("single")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].summary, summary);
    assert_eq!(
        bytes(&dir.path().join("sweep/beta_0.5/seed_3/curve.csv")),
        bytes(&dir.path().join("single/seed_3/curve.csv"))
    );
}

#[test]
fn projection_and_prioritization_sweeps_have_the_ablation_shape() {
    let dir = tempfile::tempdir().unwrap();
    let base = RunConfig {
        total_steps: Some(400),
        ..tiny()
    };
    let u = harness::sweep(
        &base,
        "u",
        &["4".into(), "16".into(), "32".into()],
        &dir.path().join("u"),
    )
    .unwrap();
    assert_eq!(
        u.iter().map(|r| r.value.as_str()).collect::<Vec<_>>(),
        vec!["4", "16", "32"]
    );
    let echoed = RunConfig::from_file(&dir.path().join("u/u_32/config.json")).unwrap();
    assert_eq!(echoed.u, 32);
    let beta = harness::sweep(
        &base,
        "beta",
        &["0".into(), "0.5".into()],
        &dir.path().join("beta"),
    )
    .unwrap();
    assert_eq!(beta.len(), 2);
    let table = fs::read_to_string(dir.path().join("beta/sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.starts_with("value,seed,final_score\n0,3,"));
}

#[test]
fn unsweepable_axis_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let r = harness::sweep(&tiny(), "env", &["reacher".into()], dir.path());
    assert!(matches!(r, Err(Error::NotSweepable(_))));
    assert!(!dir.path().join("sweep.csv").exists());
}

#[test]
fn reacher_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let c = RunConfig {
        env: "reacher".into(),
        diag_every: Some(200),
        ..tiny()
    };
    let (_, runs) = harness::run(&c, dir.path()).unwrap();
    assert_eq!(runs[0].diagnostics.len(), 3);
    assert!(runs[0].diagnostics.iter().all(|s| s.is_finite()));
}
