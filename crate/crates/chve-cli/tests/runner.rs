//! End-to-end runner tests: stationary runs, energy decay, reproducibility,
//! and the CLI binary contract.

use chve_cli::config::{preset, InitialPhase, Scheme};
use chve_cli::runner::run;
use std::process::Command;

#[test]
fn stationary_run_keeps_the_initial_snapshot() {
    for scheme in [Scheme::Cs, Scheme::Dsav] {
        let mut cfg = preset("tc1a").unwrap();
        cfg.scheme = scheme;
        cfg.nx = 8;
        cfg.ny = 8;
        cfg.steps = 1;
        cfg.initial = InitialPhase::Random {
            mean: 0.0,
            amplitude: 0.0,
            centered: true,
        };
        let outcome = run(&cfg).unwrap();
        let first = &outcome.reports[0];
        let last = outcome.reports.last().unwrap();
        assert!((last.lyapunov - first.lyapunov).abs() <= 1e-12);
        assert!((last.mass - first.mass).abs() <= 1e-12);
        assert!(last.phi_min.abs() <= 1e-12 && last.phi_max.abs() <= 1e-12);
        assert!((last.max_f - first.max_f).abs() <= 1e-12);
    }
}

#[test]
fn tc1a_hundred_steps_decreases_energy_monotonically() {
    let mut cfg = preset("tc1a").unwrap();
    cfg.nx = 16;
    cfg.ny = 16;
    cfg.steps = 100;
    cfg.seed = 2024;
    let outcome = run(&cfg).unwrap();
    assert_eq!(outcome.reports.len(), 101);
    for pair in outcome.reports.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        assert!(
            b.lyapunov <= a.lyapunov + 1e-10 * (1.0 + a.lyapunov.abs()),
            "Lyapunov increased at step {}",
            b.step
        );
        assert!((b.mass - outcome.reports[0].mass).abs() <= 1e-10);
    }
}

#[test]
fn identical_config_gives_bitwise_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preset("tc1a").unwrap();
    cfg.nx = 8;
    cfg.ny = 8;
    cfg.steps = 5;
    cfg.scheme = Scheme::Dsav;
    cfg.vtk_every = 5;
    let mut bytes = Vec::new();
    for sub in ["a", "b"] {
        cfg.out_dir = Some(dir.path().join(sub));
        let outcome = run(&cfg).unwrap();
        bytes.push(std::fs::read(outcome.csv_path.unwrap()).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    // Snapshots at cadence 5 with 5 steps: step 0 and step 5.
    assert!(dir.path().join("a/snap_000000.vtk").exists());
    assert!(dir.path().join("a/snap_000005.vtk").exists());
}

#[test]
fn written_vtk_reparses_to_the_same_values() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = preset("tc2a").unwrap();
    cfg.nx = 12;
    cfg.ny = 12;
    cfg.steps = 1;
    cfg.vtk_every = 1;
    cfg.out_dir = Some(dir.path().to_path_buf());
    let outcome = run(&cfg).unwrap();
    let text = std::fs::read_to_string(dir.path().join("snap_000001.vtk")).unwrap();
    let parsed = chve_cli::vtk::parse_vtk(&text).unwrap();
    assert_eq!(parsed.scalars["phi"], outcome.final_state.phi.values);
    assert_eq!(parsed.scalars["mu"], outcome.final_state.mu.values);
    for i in 0..parsed.points.len() {
        assert_eq!(parsed.vectors["v"][i][0], outcome.final_state.v.values[2 * i]);
    }
}

#[test]
fn cs_and_dsav_stay_qualitatively_close_over_ten_steps() {
    let mut cfg = preset("tc1a").unwrap();
    cfg.nx = 8;
    cfg.ny = 8;
    cfg.steps = 10;
    cfg.seed = 7;
    cfg.scheme = Scheme::Cs;
    let cs = run(&cfg).unwrap();
    cfg.scheme = Scheme::Dsav;
    let dsav = run(&cfg).unwrap();
    for outcome in [&cs, &dsav] {
        for pair in outcome.reports.windows(2) {
            assert!(pair[1].lyapunov <= pair[0].lyapunov + 1e-10);
        }
    }
    let l2: f64 = cs
        .final_state
        .phi
        .values
        .iter()
        .zip(&dsav.final_state.phi.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    // Reported, not asserted tightly: the schemes are distinct discretizations.
    println!("phase L2 distance after 10 steps: {l2:e}");
    assert!(l2.is_finite());
}

#[test]
fn binary_reports_config_errors_on_stderr() {
    let out = Command::new(env!("CARGO_BIN_EXE_chve"))
        .args(["--preset", "nope"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let last = stderr.lines().last().unwrap_or("");
    assert!(
        last.starts_with("last_error: "),
        "missing machine-readable error line, got: {stderr}"
    );
}

#[test]
fn binary_runs_a_small_case_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_chve"))
        .args(["--preset", "TC1a", "--scheme", "dsav", "--steps", "2", "--seed", "3"])
        .args(["--mesh", "6", "6"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("series.csv")).unwrap();
    let rows = chve_cli::csv::parse_csv(&csv).unwrap();
    assert_eq!(rows.len(), 3);
}
