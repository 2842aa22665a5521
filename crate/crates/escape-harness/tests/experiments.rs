//! In-process integration tests of the experiment drivers: artifact layout,
//! the raw-sample/summary round-trip invariant, explicit censoring, and the
//! sanity of each experiment's aggregates at smoke scale.

use std::fs;
use std::path::Path;

use escape_harness::{run_experiment, ExperimentKind, ExperimentSpec};

fn smoke_spec(kind: ExperimentKind, dir: &Path, seeds: u64) -> ExperimentSpec {
    let mut spec = ExperimentSpec::default_for(kind);
    spec.seeds = (0..seeds).collect();
    spec.output_dir = dir.to_path_buf();
    if kind == ExperimentKind::DimensionScaling {
        spec.dims = vec![10, 50];
    }
    spec
}

#[test]
fn every_summary_reproduces_from_its_raw_samples() {
    let dir = tempfile::tempdir().expect("tempdir");
    for kind in [
        ExperimentKind::DimensionScaling,
        ExperimentKind::Convergence,
        ExperimentKind::SuccessRate,
        ExperimentKind::NoiseRobustness,
    ] {
        let spec = smoke_spec(kind, dir.path(), 3);
        let table = run_experiment(&spec).expect("experiment runs");
        assert!(!table.rows.is_empty(), "{}: empty results table", kind.name());
        table
            .verify_raw_roundtrip()
            .unwrap_or_else(|e| panic!("{}: {e}", kind.name()));
        for row in &table.rows {
            assert!(
                row.raw_path.is_file(),
                "{}: raw samples missing for `{}`",
                kind.name(),
                row.key
            );
        }
    }
}

#[test]
fn censored_rows_carry_no_summary() {
    let dir = tempfile::tempdir().expect("tempdir");
    let spec = smoke_spec(ExperimentKind::Convergence, dir.path(), 3);
    let table = run_experiment(&spec).expect("experiment runs");
    let by_key = |needle: &str| {
        table
            .rows
            .iter()
            .find(|r| r.key.contains(needle))
            .unwrap_or_else(|| panic!("no row for `{needle}`"))
    };
    // Plain descent stalls on the saddle manifold and censors at the cap, so
    // its cell must publish no finite median at all.
    let gd = by_key("quartic-10/gd");
    assert!(gd.summary.is_none(), "censored cell published {:?}", gd.summary);
    let psd = by_key("quartic-10/psd");
    let s = psd.summary.as_ref().expect("uncensored cell has a summary");
    assert!(s.ci_low <= s.median && s.median <= s.ci_high);
    assert_eq!(s.n, 3);
    // The summary table renders censoring explicitly.
    let summary = fs::read_to_string(dir.path().join("convergence").join("summary.txt"))
        .expect("summary written");
    assert!(summary.contains(">cap"), "summary:\n{summary}");
}

#[test]
fn convergence_methods_share_the_trajectory_on_the_convex_problem() {
    let dir = tempfile::tempdir().expect("tempdir");
    let spec = smoke_spec(ExperimentKind::Convergence, dir.path(), 2);
    run_experiment(&spec).expect("experiment runs");
    let base = dir.path().join("convergence").join("convex_quadratic-50");
    for seed in 0..2 {
        let gd = fs::read(base.join("gd").join(format!("trace_{seed}.csv"))).expect("gd trace");
        for method in ["psd", "psd_probe"] {
            let other = fs::read(base.join(method).join(format!("trace_{seed}.csv")))
                .expect("method trace");
            assert_eq!(gd, other, "seed {seed}: {method} trace differs from gd on a convex problem");
        }
    }
}

#[test]
fn scaling_summary_reports_fit_and_episode_table() {
    let dir = tempfile::tempdir().expect("tempdir");
    let spec = smoke_spec(ExperimentKind::DimensionScaling, dir.path(), 3);
    let table = run_experiment(&spec).expect("experiment runs");
    assert_eq!(table.rows.len(), 2, "one row per dimension");
    let exp = dir.path().join("dimension_scaling");
    let summary = fs::read_to_string(exp.join("summary.txt")).expect("summary written");
    assert!(summary.contains("episode length fit"), "summary:\n{summary}");
    assert!(summary.contains("R²"), "summary:\n{summary}");
    let results = fs::read_to_string(exp.join("results.csv")).expect("results written");
    let mut lines = results.lines();
    let header = lines.next().expect("header");
    assert!(header.starts_with("d,episode_len,"), "header: {header}");
    assert_eq!(lines.count(), 2);
    assert!(exp.join("d10").join("trace_0.csv").is_file());
}

#[test]
fn single_dimension_sweep_skips_the_fit_with_a_warning() {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut spec = smoke_spec(ExperimentKind::DimensionScaling, dir.path(), 3);
    spec.dims = vec![10];
    run_experiment(&spec).expect("experiment runs");
    let summary = fs::read_to_string(
        dir.path().join("dimension_scaling").join("summary.txt"),
    )
    .expect("summary written");
    assert!(
        summary.contains("warning") && !summary.contains("episode length fit:"),
        "summary:\n{summary}"
    );
}

#[test]
fn success_rate_tallies_every_episode_ordinal() {
    let dir = tempfile::tempdir().expect("tempdir");
    let spec = smoke_spec(ExperimentKind::SuccessRate, dir.path(), 5);
    run_experiment(&spec).expect("experiment runs");
    let exp = dir.path().join("success_rate");
    let results = fs::read_to_string(exp.join("results.csv")).expect("results written");
    let mut lines = results.lines();
    assert_eq!(
        lines.next(),
        Some("episode_ordinal,n,successes,success_rate,std_err,theory_line")
    );
    let first = lines.next().expect("at least one ordinal row");
    let cells: Vec<&str> = first.split(',').collect();
    assert_eq!(cells[0], "0");
    let n: u64 = cells[1].parse().expect("attempt count");
    let succ: u64 = cells[2].parse().expect("success count");
    assert!(succ <= n && n <= 5);
    assert_eq!(cells[5], "0.9375", "theory line is a fixed constant");
}

#[test]
fn noise_levels_are_the_protocol_ratios() {
    let dir = tempfile::tempdir().expect("tempdir");
    let spec = smoke_spec(ExperimentKind::NoiseRobustness, dir.path(), 2);
    let table = run_experiment(&spec).expect("experiment runs");
    assert_eq!(table.rows.len(), 4, "one row per noise level");
    let results = fs::read_to_string(
        dir.path().join("noise_robustness").join("results.csv"),
    )
    .expect("results written");
    for ratio in ["0", "1", "10", "100"] {
        assert!(
            results.lines().any(|l| l.starts_with(&format!("{ratio},"))),
            "missing noise ratio {ratio} in:\n{results}"
        );
    }
    let stochastic_trace = dir
        .path()
        .join("noise_robustness")
        .join("noise_100")
        .join("trace_0.csv");
    let trace = fs::read_to_string(stochastic_trace).expect("stochastic trace");
    assert!(trace.starts_with("iter,phase,f,grad_norm,episode_id,batch_size,trigger_threshold,triggered\n"));
}

#[test]
fn lemma_checks_is_not_a_table_experiment() {
    let dir = tempfile::tempdir().expect("tempdir");
    let spec = smoke_spec(ExperimentKind::LemmaChecks, dir.path(), 1);
    let err = run_experiment(&spec).expect_err("lemma_checks has its own entry point");
    assert!(err.to_string().contains("check"), "error: {err}");
}

#[test]
fn invalid_specs_are_rejected_before_any_run() {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut spec = smoke_spec(ExperimentKind::SuccessRate, dir.path(), 3);
    spec.seeds = vec![7, 7];
    assert!(run_experiment(&spec).is_err(), "duplicate seeds must fail");
    spec.seeds = Vec::new();
    assert!(run_experiment(&spec).is_err(), "empty seeds must fail");
    let mut spec = smoke_spec(ExperimentKind::DimensionScaling, dir.path(), 2);
    spec.dims = Vec::new();
    assert!(run_experiment(&spec).is_err(), "empty dims must fail");
    assert!(
        fs::read_dir(dir.path()).expect("readable").next().is_none(),
        "rejected specs must not leave artifacts"
    );
}
