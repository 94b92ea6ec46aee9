use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use pseudop_core::field_io::field_io_write;
use pseudop_core::regularize::{inf_convolution, InfConvParams};
use pseudop_core::solver::{solve_dirichlet, SolveConfig};
use pseudop_core::{DegeneracyExponent, GridSpec, ScalarField};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn pseudop(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_pseudop"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn run_kind(kind: &str, cfg: &str, out: &Path) -> (i32, String) {
    let c = fixtures().join(cfg);
    pseudop(&[
        kind,
        "--config",
        c.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
}

/// Writes the binary input fields under `tests/fixtures`. Run with
/// `cargo test -p pseudop-cli --test cli -- --ignored` after changing them.
#[test]
#[ignore]
fn regenerate_fixtures() {
    let dir = fixtures();
    let g33 = GridSpec::centered(2, 1.0, 33).unwrap();
    let g65 = GridSpec::centered(2, 1.0, 65).unwrap();

    let y0 = [0.05, -0.03];
    let bowl = ScalarField::from_fn(&g65, |z| {
        let r2 = (z[0] - y0[0]).powi(2) + (z[1] - y0[1]).powi(2);
        4.0625f64.min(0.5 + 1000.0 * r2)
    })
    .unwrap();
    let bowl = inf_convolution(&bowl, InfConvParams::new(0.005).unwrap()).unwrap();
    field_io_write(&bowl, &dir.join("bowl.bin")).unwrap();

    let rough = ScalarField::from_fn(&g33, |x| {
        (9.0 * x[0]).sin() * (7.0 * x[1]).cos() + x[0].abs()
    })
    .unwrap();
    field_io_write(&rough, &dir.join("rough.bin")).unwrap();

    let boundary = ScalarField::from_fn(&g33, |x| {
        1.0 + 2.0 * x[0] + x[1] + 0.3 * (x[0] * x[1]).sin()
    })
    .unwrap();
    field_io_write(&boundary, &dir.join("boundary.bin")).unwrap();
    let forcing = ScalarField::from_fn(&g33, |x| 0.2 + 0.2 * x[0] * x[0]).unwrap();
    field_io_write(&forcing, &dir.join("forcing.bin")).unwrap();

    let zero = ScalarField::constant(&g33, 0.0).unwrap();
    let positive =
        ScalarField::from_fn(&g33, |x| 3.0 + x[0] + 0.5 * x[1] + 0.25 * x[0] * x[1]).unwrap();
    let cfg = SolveConfig::new(1e-9, 500_000, 0.9, 0.0).unwrap();
    let p1 = DegeneracyExponent::new(1.0).unwrap();
    let (harmonic, rep) = solve_dirichlet(&g33, &zero, &positive, p1, &cfg).unwrap();
    assert!(rep.converged);
    field_io_write(&harmonic, &dir.join("harmonic.bin")).unwrap();

    let root = ScalarField::from_fn(&g65, |x| (x[0] * x[0] + x[1] * x[1]).sqrt().sqrt()).unwrap();
    field_io_write(&root, &dir.join("root.bin")).unwrap();
    let spike = ScalarField::from_fn(&g65, |x| {
        ((x[0] * x[0] + x[1] * x[1]).sqrt() + 0.01).powf(-0.5)
    })
    .unwrap();
    field_io_write(&spike, &dir.join("spike.bin")).unwrap();
}

#[test]
fn every_kind_runs_from_fixtures() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (
            "solve",
            "solve_poisson.cfg",
            0,
            &["report.json", "convergence.csv", "convergence.svg"][..],
        ),
        ("solve", "solve_separable.cfg", 0, &["convergence.csv"][..]),
        (
            "solve",
            "solve_dirichlet.cfg",
            0,
            &["solution.bin", "residual_trace.csv", "residual_trace.svg"][..],
        ),
        (
            "slide",
            "slide.cfg",
            0,
            &["records.csv", "classes.csv", "measure.txt"][..],
        ),
        ("slide", "slide_sliced.cfg", 0, &["records.csv"][..]),
        (
            "infconv",
            "infconv.cfg",
            0,
            &["infconv.bin", "infconv.csv"][..],
        ),
        ("harnack", "harnack.cfg", 0, &["harnack.csv"][..]),
        (
            "holder",
            "holder.cfg",
            0,
            &["oscillation.csv", "oscillation.svg"][..],
        ),
        ("tail", "tail.cfg", 0, &["tail.csv", "tail.svg"][..]),
        ("cz-check", "cz.cfg", 0, &["instances.csv"][..]),
        ("cz-check", "cz_predecessor.cfg", 0, &["instances.csv"][..]),
    ];
    for (kind, cfg, code, files) in cases {
        let out = tmp.path().join(cfg);
        let (status, err) = run_kind(kind, cfg, &out);
        assert_eq!(status, code, "{cfg}: {err}");
        for f in files.iter().chain(&["report.json"]) {
            assert!(out.join(f).is_file(), "{cfg}: missing {f}");
        }
        let report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
        assert_eq!(report["kind"], kind);
    }
}

#[test]
fn convergence_csv_has_order_column() {
    let tmp = tempfile::tempdir().unwrap();
    let (status, _) = run_kind("solve", "solve_poisson.cfg", tmp.path());
    assert_eq!(status, 0);
    let csv = fs::read_to_string(tmp.path().join("convergence.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "points_per_axis,h,error,order,steps,residual,converged"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][3], "");
    for r in &rows[1..] {
        assert!(r[3].parse::<f64>().unwrap() >= 1.8);
    }
}

#[test]
fn barrier_verify_reports_selection_and_fails_raw_margin() {
    let tmp = tempfile::tempdir().unwrap();
    let (status, err) = run_kind("barrier-verify", "barrier.cfg", tmp.path());
    // The raw residual > 1 check cannot hold at the outer sample points.
    assert_eq!(status, 2, "{err}");
    assert!(err.contains("raw_residual_above_one"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["result"]["a"], 16.0);
    assert!(
        report["result"]["min_normalized_residual"]
            .as_f64()
            .unwrap()
            > 0.0
    );
    let csv = fs::read_to_string(tmp.path().join("ladder.csv")).unwrap();
    assert!(csv.ends_with("16,selected\n"));
}

#[test]
fn slide_reproduces_frozen_report() {
    let tmp = tempfile::tempdir().unwrap();
    let (status, err) = run_kind("slide", "slide.cfg", tmp.path());
    assert_eq!(status, 0, "{err}");
    for name in ["records.csv", "classes.csv", "measure.txt"] {
        let got = fs::read_to_string(tmp.path().join(name)).unwrap();
        let want = fs::read_to_string(fixtures().join("golden").join(name)).unwrap();
        assert!(got == want, "{name} differs from the frozen copy");
    }
}

#[test]
fn usage_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let (status, err) = run_kind("barrier-verify", "bad_lambda.cfg", tmp.path());
    assert_eq!(status, 1);
    assert!(err.contains("lambda") && err.contains("line 2"), "{err}");
    let (status, err) = run_kind("barrier-verify", "bad_key.cfg", tmp.path());
    assert_eq!(status, 1);
    assert!(err.contains("lamda") && err.contains("line 2"), "{err}");
    let (status, err) = run_kind("holder", "barrier.cfg", tmp.path());
    assert_eq!(status, 1);
    assert!(err.contains("barrier-verify"), "{err}");
    let (status, _) = pseudop(&["solve"]);
    assert_eq!(status, 1);
    let (status, _) = pseudop(&["frobnicate", "--config", "x"]);
    assert_eq!(status, 1);
    let (status, err) = pseudop(&["holder", "--config", "/nonexistent/cfg"]);
    assert_eq!(status, 1);
    assert!(err.contains("/nonexistent/cfg"));
}

#[test]
fn missing_input_field_names_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("h.cfg");
    fs::write(&cfg, "kind = holder\nfield = absent.bin\n").unwrap();
    let (status, err) = pseudop(&[
        "holder",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(status, 1);
    assert!(err.contains("absent.bin"), "{err}");
}

#[test]
fn seed_changes_random_instances_only_through_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let c = fixtures().join("cz.cfg");
    let run = |seed: &str, dir: &str| {
        let out = tmp.path().join(dir);
        let (s, _) = pseudop(&[
            "cz-check",
            "--config",
            c.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert_eq!(s, 0);
        fs::read_to_string(out.join("instances.csv")).unwrap()
    };
    assert_eq!(run("5", "a"), run("5", "b"));
    assert_ne!(run("5", "c"), run("6", "d"));
}
