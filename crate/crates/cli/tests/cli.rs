use std::fs;
use std::path::Path;
use std::process::Command;

use lpqr_cli::config::{BenchConfig, FitConfig, SimulateConfig};
use lpqr_cli::io::{read_matrix_csv, read_theta_csv, FitSummary, TruthSidecar};
use lpqr_cli::{cli_main, read_panel_csv, write_fit, write_panel_csv, CliError, RunConfig};
use lpqr_core::{compute_column_scales, extract_factors, fit, generate, Design, DesignSpec, SolverConfig, TuningGrid};
use proptest::prelude::*;

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> i32 {
    cli_main(std::iter::once("lpqr").chain(args.iter().copied()))
}

#[test]
fn reads_single_cell_panel() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "p.csv", "unit,period,y,x1\nu1,2000-01,0.5,1.0\n");
    let data = read_panel_csv(&path).unwrap();
    assert_eq!((data.n(), data.t_len(), data.p()), (1, 1, 1));
    assert_eq!(data.y()[(0, 0)], 0.5);
    assert_eq!(data.x(0, 0, 0), 1.0);
}

#[test]
fn indexes_by_first_appearance() {
    let dir = tempfile::tempdir().unwrap();
    let text = "unit,period,y\nb,t2,1\na,t2,2\nb,t1,3\na,t1,4\n";
    let data = read_panel_csv(&write(dir.path(), "p.csv", text)).unwrap();
    assert_eq!(data.p(), 0);
    // Rows: b, a. Columns: t2, t1.
    assert_eq!(data.y().as_slice(), &[1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn rejects_malformed_panels() {
    let dir = tempfile::tempdir().unwrap();
    let dup = write(dir.path(), "dup.csv", "unit,period,y\nu1,t1,1\nu1,t1,2\n");
    assert!(matches!(read_panel_csv(&dup), Err(CliError::DuplicateCell { .. })));

    let mut text = String::from("unit,period,y,x1\n");
    for u in 1..=2 {
        for t in 1..=3 {
            if (u, t) != (2, 2) {
                text.push_str(&format!("u{u},t{t},1,2\n"));
            }
        }
    }
    let unbalanced = write(dir.path(), "unbalanced.csv", &text);
    match read_panel_csv(&unbalanced) {
        Err(CliError::UnbalancedPanel { unit, period, .. }) => assert_eq!((unit.as_str(), period.as_str()), ("u2", "t2")),
        other => panic!("{other:?}"),
    }

    let bad = write(dir.path(), "bad.csv", "unit,period,y\nu1,t1,abc\n");
    assert!(matches!(read_panel_csv(&bad), Err(CliError::Parse { line: 2, .. })));
    let empty = write(dir.path(), "empty.csv", "");
    assert!(matches!(read_panel_csv(&empty), Err(CliError::EmptyFile { .. })));
    let header_only = write(dir.path(), "header.csv", "unit,period,y\n");
    assert!(matches!(read_panel_csv(&header_only), Err(CliError::EmptyFile { .. })));
    let wrong_header = write(dir.path(), "hdr.csv", "id,time,y\n1,1,1\n");
    assert!(matches!(read_panel_csv(&wrong_header), Err(CliError::Parse { line: 1, .. })));
    let short_row = write(dir.path(), "short.csv", "unit,period,y,x1\n1,1,1\n");
    assert_eq!(read_panel_csv(&short_row).unwrap_err().category(), "data");
}

#[test]
fn simulated_panel_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    for design in [Design::D1, Design::D4] {
        let inst = generate(&DesignSpec::new(design, 7, 5, 3, 21)).unwrap();
        let path = dir.path().join("panel.csv");
        write_panel_csv(&inst.data, &path).unwrap();
        assert_eq!(read_panel_csv(&path).unwrap(), inst.data);
    }
}

#[test]
fn fit_outputs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(&DesignSpec::new(Design::D1, 12, 10, 3, 2)).unwrap();
    let scales = compute_column_scales(&inst.data).unwrap();
    let fitted = fit(&inst.data, &SolverConfig::default().with_penalties(1e-4, 5e-3), &scales).unwrap();
    assert!(fitted.rank_estimate >= 1);
    let decomposition = extract_factors(&fitted.pi, fitted.rank_estimate).unwrap();
    let summary = FitSummary::new(&fitted, &inst.data, serde_json::json!({"note": "test"}));
    let paths = write_fit(&fitted, Some(&decomposition), &scales, &summary, dir.path()).unwrap();
    assert_eq!(paths.len(), 5);

    let theta = read_theta_csv(&dir.path().join("theta.csv")).unwrap();
    for (a, b) in theta.iter().zip(fitted.theta.iter()) {
        assert!((a - b).abs() <= 1e-12);
    }
    let pi = read_matrix_csv(&dir.path().join("pi.csv")).unwrap();
    assert_eq!(pi.shape(), (12, 10));
    assert_eq!(pi, fitted.pi);
    let factors = read_matrix_csv(&dir.path().join("factors.csv")).unwrap();
    assert_eq!(factors.shape(), (10, fitted.rank_estimate));

    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    for key in [
        "tau", "nu1", "nu2", "rank", "sparsity", "objective", "iterations", "converged", "primal_residual",
        "dual_residual", "config",
    ] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    let back: FitSummary = serde_json::from_value(json).unwrap();
    assert_eq!(back, summary);
}

#[test]
fn simulate_then_fit_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(run(&["simulate", "--design", "D1", "--n", "100", "--p", "5", "--T", "100", "--seed", "7", "--out", out]), 0);
    let truth: TruthSidecar = serde_json::from_str(&fs::read_to_string(dir.path().join("truth.json")).unwrap()).unwrap();
    assert_eq!((truth.n, truth.t_len, truth.p, truth.seed), (100, 100, 5, 7));
    assert_eq!(truth.rng, lpqr_core::sim::RNG_ALGORITHM);
    assert_eq!(truth.theta, vec![1.0; 5]);

    let panel = dir.path().join("panel.csv");
    let fit_dir = dir.path().join("fit");
    let code = run(&[
        "fit", "--input", panel.to_str().unwrap(), "--tau", "0.5", "--nu1", "1e-5", "--nu2", "1e-4", "--out",
        fit_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let summary: FitSummary = serde_json::from_str(&fs::read_to_string(fit_dir.join("summary.json")).unwrap()).unwrap();
    assert!(summary.converged);
    assert_eq!((summary.n, summary.t_len, summary.p), (100, 100, 5));
}

#[test]
fn several_quantile_levels_get_their_own_directories() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(&DesignSpec::new(Design::D3, 10, 8, 2, 1)).unwrap();
    let panel = dir.path().join("panel.csv");
    write_panel_csv(&inst.data, &panel).unwrap();
    let out = dir.path().join("fits");
    let code = run(&["fit", "--input", panel.to_str().unwrap(), "--tau", "0.1,0.5,0.9", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    for tau in ["0.1", "0.5", "0.9"] {
        let s: FitSummary =
            serde_json::from_str(&fs::read_to_string(out.join(format!("tau_{tau}/summary.json"))).unwrap()).unwrap();
        assert_eq!(s.tau.to_string(), tau);
    }
}

#[test]
fn tune_picks_a_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(&DesignSpec::new(Design::D1, 20, 20, 3, 5)).unwrap();
    let panel = dir.path().join("panel.csv");
    write_panel_csv(&inst.data, &panel).unwrap();
    let out = dir.path().join("tune");
    let code = run(&[
        "tune", "--input", panel.to_str().unwrap(), "--grid-nu1", "1e-4,1e-5", "--grid-nu2", "1e-2,1e-2.5,1e-3",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let table = fs::read_to_string(out.join("selection.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 6);
    let s: FitSummary = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!([1e-4, 1e-5].contains(&s.nu1));
    assert!([1e-2, 10f64.powf(-2.5), 1e-3].contains(&s.nu2));
}

#[test]
fn factors_command_writes_decomposition() {
    let dir = tempfile::tempdir().unwrap();
    let pi = lpqr_core::sim::deterministic_pi(6, 8);
    let path = dir.path().join("pi.csv");
    lpqr_cli::io::write_matrix_csv(&pi, &path).unwrap();
    let out = dir.path().join("f");
    assert_eq!(run(&["factors", "--pi", path.to_str().unwrap(), "--rank", "1", "--out", out.to_str().unwrap()]), 0);
    let factors = read_matrix_csv(&out.join("factors.csv")).unwrap();
    let loadings = read_matrix_csv(&out.join("loadings.csv")).unwrap();
    assert!((&loadings * factors.transpose() - &pi).norm() <= 1e-10 * pi.norm());
    let variance = fs::read_to_string(out.join("variance.csv")).unwrap();
    assert!(variance.lines().nth(1).unwrap().starts_with("1,"));

    assert_eq!(run(&["factors", "--pi", path.to_str().unwrap(), "--rank", "9", "--out", out.to_str().unwrap()]), 2);
}

#[test]
fn bench_writes_one_row_per_method_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &str| {
        vec![
            "bench".to_string(), "--design".into(), "D1".into(), "--n".into(), "10".into(), "--p".into(), "3".into(),
            "--T".into(), "10".into(), "--seed".into(), "3".into(), "--reps".into(), "3".into(), "--methods".into(),
            "l1nnqr,l1qr".into(), "--grid-nu1".into(), "1e-4".into(), "--grid-nu2".into(), "1e-2,1e-3".into(),
            "--out".into(), out.to_string(),
        ]
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let argv = args(out.to_str().unwrap());
        assert_eq!(cli_main(std::iter::once("lpqr".to_string()).chain(argv)), 0);
    }
    let first = fs::read(a.join("bench.csv")).unwrap();
    assert_eq!(first, fs::read(b.join("bench.csv")).unwrap());
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().starts_with("l1-NN-QR,D1,10,3,10,3,0,"));
}

#[test]
fn exit_codes_follow_error_categories() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(run(&["fit"]), 2);
    assert_eq!(run(&["frobnicate"]), 2);
    let panel = write(dir.path(), "p.csv", "unit,period,y,x1\n1,1,1,1\n1,2,2,1\n2,1,3,2\n2,2,1,0\n");
    let panel = panel.to_str().unwrap();
    assert_eq!(run(&["fit", "--input", panel, "--tau", "1.5", "--out", out]), 2);
    assert_eq!(run(&["fit", "--input", panel, "--eta", "-1", "--out", out]), 2);
    assert_eq!(run(&["fit", "--input", "/nonexistent/panel.csv", "--out", out]), 3);
    let dup = write(dir.path(), "dup.csv", "unit,period,y\n1,1,1\n1,1,1\n");
    assert_eq!(run(&["fit", "--input", dup.to_str().unwrap(), "--out", out]), 3);
    // Hitting the iteration cap is a result, not a failure.
    assert_eq!(run(&["fit", "--input", panel, "--max-iter", "1", "--out", out]), 0);
    let s: FitSummary = serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!(!s.converged);
}

#[test]
fn binary_reports_one_line_errors() {
    let output = Command::new(env!("CARGO_BIN_EXE_lpqr"))
        .args(["fit", "--input", "/nonexistent.csv", "--out", std::env::temp_dir().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1);
    assert!(stderr.starts_with("error[io]: "));

    let output = Command::new(env!("CARGO_BIN_EXE_lpqr")).args(["simulate", "--n", "3"]).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8(output.stderr).unwrap().starts_with("error[usage]: "));
}

fn design() -> impl Strategy<Value = Design> {
    prop_oneof![Just(Design::D1), Just(Design::D2), Just(Design::D3), Just(Design::D4)]
}

fn solver() -> impl Strategy<Value = SolverConfig> {
    (0.01f64..0.99, 0.0f64..1.0, 0.0f64..1.0, 1e-3f64..1e3, 1usize..10_000, any::<bool>())
        .prop_map(|(tau, nu1, nu2, eta, max_iter, fix)| SolverConfig {
            eta,
            max_iter,
            fix_pi_zero: fix,
            ..SolverConfig::default().with_tau(tau).with_penalties(nu1, nu2)
        })
}

fn spec() -> impl Strategy<Value = DesignSpec> {
    (design(), 1usize..500, 1usize..500, 1usize..40, any::<u64>(), any::<u64>())
        .prop_map(|(d, n, t, p, seed, stream)| DesignSpec::new(d, n, t, p, seed).with_stream(stream))
}

fn run_config() -> impl Strategy<Value = RunConfig> {
    prop_oneof![
        (solver(), prop::collection::vec(0.01f64..0.99, 1..4)).prop_map(|(solver, taus)| RunConfig::Fit(
            FitConfig { input: "in.csv".into(), out: "out".into(), taus, solver }
        )),
        spec().prop_map(|spec| RunConfig::Simulate(SimulateConfig { out: "sim".into(), spec })),
        (spec(), solver(), 1usize..100, prop::option::of(0.0f64..100.0)).prop_map(|(spec, solver, reps, c1)| {
            RunConfig::Bench(BenchConfig {
                out: "bench".into(),
                spec,
                reps,
                methods: vec!["l1nnqr".into(), "bic-l1qr".into()],
                oracle_tuning: true,
                grid: TuningGrid::default(),
                solver,
                c1,
            })
        }),
    ]
}

proptest! {
    #[test]
    fn run_config_json_is_canonical(config in run_config()) {
        let json = config.to_canonical_json().unwrap();
        let back = RunConfig::from_json(&json).unwrap();
        prop_assert_eq!(&back, &config);
        prop_assert_eq!(back.to_canonical_json().unwrap(), json);
    }
}
