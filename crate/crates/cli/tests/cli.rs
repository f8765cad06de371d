//! End-to-end tests of the `rg-optim` binary: exit codes, error messages,
//! and determinism of the files it writes.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

use rg_optim::csvio::{read_dataset, read_semantic};
use rg_optim::runner::derive_seed;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rg-optim"))
}

fn run_bin(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary should spawn")
}

fn write_file(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// A small minibatch logistic-regression run exercising diagnostics,
/// weight decay, a poly schedule, and uniform scaling.
fn logreg_run_text() -> &'static str {
    r#"{
        "type": "run",
        "objective": {"kind": "logreg", "n": 48, "dim": 4, "classes": 3, "separation": 3.0, "seed": 11},
        "batch_size": 8,
        "optimizer": {"kind": "momentum", "alpha": 0.9, "weight_decay": 0.0005},
        "schedule": {"kind": "poly", "base_lr": 0.05, "power": 0.9, "max_iter": 40},
        "scaling": {"kind": "uniform", "low": 0.0, "high": 1.0},
        "max_steps": 40,
        "base_seed": 7,
        "diagnostics_every": 10,
        "log_path": "traj.csv"
    }"#
}

#[test]
fn run_rerun_is_semantically_identical_and_exits_zero() {
    let dir = tempdir().unwrap();
    let config = write_file(dir.path(), "run.json", logreg_run_text());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");

    for out in [&out_a, &out_b] {
        let output = run_bin(&["run", "--config", &config, "--out", out.to_str().unwrap()]);
        assert!(output.status.success(), "{}", stderr_of(&output));
    }
    let a = read_semantic(&out_a.join("traj.csv")).unwrap();
    let b = read_semantic(&out_b.join("traj.csv")).unwrap();
    assert_eq!(a, b, "semantic trajectory columns must be reproducible");
    // 1 step-0 row + 40 step rows + header.
    assert_eq!(a.lines().count(), 42);
}

#[test]
fn invalid_uniform_range_fails_naming_both_bounds() {
    let dir = tempdir().unwrap();
    let bad = logreg_run_text().replace(
        r#"{"kind": "uniform", "low": 0.0, "high": 1.0}"#,
        r#"{"kind": "uniform", "low": 1.0, "high": 0.5}"#,
    );
    let config = write_file(dir.path(), "bad.json", &bad);
    let output = run_bin(&["run", "--config", &config]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = stderr_of(&output);
    assert!(stderr.contains("low"), "{stderr}");
    assert!(stderr.contains("high"), "{stderr}");
}

#[test]
fn unknown_config_key_is_named_in_error() {
    let dir = tempdir().unwrap();
    let bad = logreg_run_text().replace("\"alpha\": 0.9", "\"alpha\": 0.9, \"momentun\": 0.8");
    let config = write_file(dir.path(), "typo.json", &bad);
    let output = run_bin(&["run", "--config", &config]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = stderr_of(&output);
    assert!(stderr.contains("momentun"), "{stderr}");
}

#[test]
fn run_subcommand_rejects_sweep_config() {
    let dir = tempdir().unwrap();
    let config = write_file(dir.path(), "sweep.json", &degenerate_sweep_text());
    let output = run_bin(&["run", "--config", &config]);
    assert_eq!(output.status.code(), Some(2));
    assert!(
        stderr_of(&output).contains("sweep"),
        "{}",
        stderr_of(&output)
    );
}

#[test]
fn gen_data_round_trips_bitwise() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("blobs.csv");
    let output = run_bin(&[
        "gen-data",
        "--kind",
        "blobs",
        "--n",
        "50",
        "--dim",
        "4",
        "--classes",
        "3",
        "--separation",
        "3.5",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr_of(&output));

    let back = read_dataset(&out).unwrap();
    let reference = rg_optim_core::gen_blobs(50, 4, 3, 3.5, 7).unwrap();
    assert_eq!(back.n(), reference.n());
    assert_eq!(back.dim(), reference.dim());
    assert_eq!(back.classes(), reference.classes());
    for i in 0..reference.n() {
        assert_eq!(back.label(i), reference.label(i));
        for (a, b) in back.feature_row(i).iter().zip(reference.feature_row(i)) {
            assert_eq!(a.to_bits(), b.to_bits(), "feature drift at sample {i}");
        }
    }
}

#[test]
fn gen_data_rejects_unknown_kind() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let output = run_bin(&[
        "gen-data",
        "--kind",
        "moons",
        "--n",
        "10",
        "--dim",
        "2",
        "--classes",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(
        stderr_of(&output).contains("moons"),
        "{}",
        stderr_of(&output)
    );
}

fn run_body_text() -> &'static str {
    r#"
        "objective": {"kind": "logreg", "n": 30, "dim": 3, "classes": 2, "separation": 3.0, "seed": 3},
        "batch_size": 5,
        "optimizer": {"kind": "sgd"},
        "schedule": {"kind": "constant", "base_lr": 0.1},
        "scaling": {"kind": "uniform", "low": 0.0, "high": 1.0},
        "max_steps": 15,
        "diagnostics_every": 5
    "#
}

fn degenerate_sweep_text() -> String {
    format!(
        r#"{{"type": "sweep", "base": {{ {} , "base_seed": 77 }}, "axes": {{}}, "seeds_per_cell": 1}}"#,
        run_body_text()
    )
}

/// A one-cell, one-replicate sweep must reproduce exactly the run obtained by
/// materializing the template with the derived replicate seed.
#[test]
fn degenerate_sweep_matches_run_with_derived_seed() {
    let dir = tempdir().unwrap();
    let sweep_config = write_file(dir.path(), "sweep.json", &degenerate_sweep_text());
    let sweep_out = dir.path().join("sweep_out");
    let output = run_bin(&[
        "sweep",
        "--config",
        &sweep_config,
        "--parallelism",
        "1",
        "--out",
        sweep_out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr_of(&output));

    let run_text = format!(
        r#"{{"type": "run", {} , "base_seed": {}}}"#,
        run_body_text(),
        derive_seed(77, 0, 0)
    );
    let run_config = write_file(dir.path(), "run.json", &run_text);
    let run_out = dir.path().join("run_out");
    let output = run_bin(&[
        "run",
        "--config",
        &run_config,
        "--out",
        run_out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr_of(&output));

    let from_sweep = read_semantic(&sweep_out.join("runs").join("cell000_rep000.csv")).unwrap();
    let from_run = read_semantic(&run_out.join("run.csv")).unwrap();
    assert_eq!(from_sweep, from_run);
}

#[test]
fn step_zero_row_is_scaling_invariant() {
    let dir = tempdir().unwrap();
    let scalings = [
        r#"{"kind": "identity"}"#,
        r#"{"kind": "uniform", "low": 0.0, "high": 1.0}"#,
        r#"{"kind": "cyclical", "cycle_low": 0.5, "cycle_high": 1.5, "cycle_length": 4}"#,
    ];
    let mut first_rows = Vec::new();
    for (i, scaling) in scalings.iter().enumerate() {
        let text =
            logreg_run_text().replace(r#"{"kind": "uniform", "low": 0.0, "high": 1.0}"#, scaling);
        let config = write_file(dir.path(), &format!("cfg{i}.json"), &text);
        let out = dir.path().join(format!("out{i}"));
        let output = run_bin(&["run", "--config", &config, "--out", out.to_str().unwrap()]);
        assert!(output.status.success(), "{}", stderr_of(&output));
        let semantic = read_semantic(&out.join("traj.csv")).unwrap();
        // Line 0 is the header; line 1 is the step-0 (pre-training) row.
        first_rows.push(semantic.lines().nth(1).unwrap().to_owned());
    }
    assert_eq!(first_rows[0], first_rows[1]);
    assert_eq!(first_rows[0], first_rows[2]);
}

#[test]
fn diverged_run_exits_nonzero_and_logs_failure_row() {
    let dir = tempdir().unwrap();
    let text = r#"{
        "type": "run",
        "objective": {"kind": "quadratic", "dim": 10, "condition_number": 100.0, "seed": 5},
        "optimizer": {"kind": "sgd"},
        "schedule": {"kind": "constant", "base_lr": 3.0},
        "scaling": {"kind": "identity"},
        "max_steps": 400,
        "base_seed": 1
    }"#;
    let config = write_file(dir.path(), "explode.json", text);
    let out = dir.path();
    let output = run_bin(&["run", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1), "{}", stderr_of(&output));
    assert!(
        stderr_of(&output).contains("diverged"),
        "{}",
        stderr_of(&output)
    );

    let log = std::fs::read_to_string(out.join("run.csv")).unwrap();
    let last = log.lines().last().unwrap();
    let loss_field = last.split(',').nth(1).unwrap();
    assert!(
        loss_field
            .parse::<f64>()
            .map(|v| !v.is_finite())
            .unwrap_or(false),
        "expected a non-finite loss in the failure row, got {last:?}"
    );
}

/// Thread-count settings (flag and environment variable) must not change any
/// output byte that is compared for reproducibility.
#[test]
fn sweep_outputs_do_not_depend_on_parallelism_source() {
    let dir = tempdir().unwrap();
    let text = format!(
        r#"{{
            "type": "sweep",
            "base": {{ {} , "base_seed": 55 }},
            "axes": {{"lr": [0.1, 0.02], "scaling": [{{"kind": "identity"}}, {{"kind": "uniform", "low": 0.0, "high": 1.0}}]}},
            "seeds_per_cell": 2,
            "loss_threshold": 0.5
        }}"#,
        run_body_text()
    );
    let config = write_file(dir.path(), "sweep.json", &text);

    let out_flag = dir.path().join("flag");
    let output = run_bin(&[
        "sweep",
        "--config",
        &config,
        "--parallelism",
        "1",
        "--out",
        out_flag.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr_of(&output));

    let out_env = dir.path().join("env");
    let output = bin()
        .args([
            "sweep",
            "--config",
            &config,
            "--out",
            out_env.to_str().unwrap(),
        ])
        .env("RG_OPTIM_THREADS", "4")
        .output()
        .expect("binary should spawn");
    assert!(output.status.success(), "{}", stderr_of(&output));

    for name in ["summary.csv", "plot_loss.csv"] {
        let a = std::fs::read_to_string(out_flag.join(name)).unwrap();
        let b = std::fs::read_to_string(out_env.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs across parallelism settings");
    }
    for cell in 0..4 {
        for rep in 0..2 {
            let name = format!("cell{cell:03}_rep{rep:03}.csv");
            let a = read_semantic(&out_flag.join("runs").join(&name)).unwrap();
            let b = read_semantic(&out_env.join("runs").join(&name)).unwrap();
            assert_eq!(a, b, "{name} differs across parallelism settings");
        }
    }
}
