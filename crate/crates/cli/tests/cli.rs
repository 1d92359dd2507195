use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use stablekern::io::write_dataset_csv;
use stablekern::simulation::{run_rng, simulate_output};
use stablekern::{Dataset, EstimateResult};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stablekern"))
        .args(args)
        .env_remove("STABLEKERN_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn tc2_logdet() {
    let o = run(&["kernel", "--family", "TC2", "--beta", "0.5", "--dim", "2", "--logdet"]);
    assert_eq!(o.status.code(), Some(0));
    let v: f64 = stdout(&o).trim().parse().unwrap();
    assert!((v - 0.03125f64.ln()).abs() < 1e-12);
}

#[test]
fn diagonal_kernel_csv() {
    let o = run(&["kernel", "--family", "DI", "--beta", "0.5", "--dim", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "5.0000000000000000e-1,0\n0,2.5000000000000000e-1\n");
}

#[test]
fn inverse_and_factor_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let read = |name: &str, flag: &str| {
        let path = dir.path().join(name);
        let mut args = vec!["kernel", "--family", "DC", "--alpha", "0.4", "--beta", "0.7", "--dim", "6"];
        if !flag.is_empty() {
            args.push(flag);
        }
        args.extend(["--out", path.to_str().unwrap()]);
        assert_eq!(run(&args).status.code(), Some(0));
        stablekern::io::read_matrix_csv(fs::File::open(path).unwrap()).unwrap()
    };
    let k = read("k.csv", "");
    let inv = read("inv.csv", "--inverse");
    let l = read("l.csv", "--cholesky");
    let prod = &k * &inv;
    for i in 0..6 {
        for j in 0..6 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((prod[(i, j)] - want).abs() < 1e-10);
        }
    }
    assert!((&l * l.transpose() - &inv).amax() < 1e-10 * inv.amax());
    assert!(l.upper_triangle().amax() <= l.diagonal().amax());
    assert_eq!(inv[(0, 2)], 0.0);
}

#[test]
fn out_of_range_beta_is_a_domain_error() {
    let o = run(&["kernel", "--family", "TCd", "--delta", "3", "--beta", "1.2", "--dim", "5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("beta"));
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        vec!["kernel", "--family", "TC2", "--dim", "3"],
        vec!["kernel", "--family", "TC", "--beta", "0.5", "--dim", "3", "--bogus"],
        vec!["kernel", "--family", "TC", "--beta", "0.5", "--dim", "3", "--inverse", "--logdet"],
        vec!["kernel", "--family", "XX", "--beta", "0.5", "--dim", "3"],
        vec!["mc", "--study", "1", "--runs", "0"],
        vec!["mc", "--study", "3"],
        vec!["fit", "--data", "x.csv", "--family", "TC", "--sigma2", "0"],
        vec!["nonsense"],
    ] {
        assert_eq!(run(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn maxent_verify_theorems() {
    let tc2 = run(&["maxent-verify", "--family", "TC2", "--beta", "0.8", "--dim", "10", "--tol", "1e-8"]);
    assert_eq!(tc2.status.code(), Some(0), "{}", stderr(&tc2));
    let dc2 = run(&["maxent-verify", "--family", "DC2", "--alpha", "0.5", "--beta", "0.8", "--dim", "10"]);
    assert_eq!(dc2.status.code(), Some(0), "{}", stderr(&dc2));
    assert!(stdout(&dc2).starts_with("max_deviation="));
}

#[test]
fn tampered_bands_fail() {
    let o = run(&["maxent-verify", "--family", "TC2", "--beta", "0.8", "--dim", "10", "--perturb", "1,3,0.1"]);
    assert_eq!(o.status.code(), Some(1));
    // A feasible tamper still completes, but away from the kernel.
    let o = run(&["maxent-verify", "--family", "TC2", "--beta", "0.8", "--dim", "10", "--perturb", "5,6,1e-4"]);
    assert_eq!(o.status.code(), Some(1));
    let line = stdout(&o);
    let dev: f64 = line.lines().next().unwrap().trim_start_matches("max_deviation=").parse().unwrap();
    assert!(dev > 1e-4, "{line}");
}

#[test]
fn ss_has_no_band_characterization() {
    let o = run(&["maxent-verify", "--family", "SS", "--gamma", "0.8", "--dim", "5"]);
    assert_eq!(o.status.code(), Some(1));
}

fn impulse_dataset(dir: &Path, g: &[f64]) -> std::path::PathBuf {
    let n = 120;
    let mut u = vec![0.0; n];
    u[0] = 1.0;
    let mut rng = run_rng(11, 0);
    let (y, _) = simulate_output(g, &u, 100.0, &mut rng).unwrap();
    let path = dir.join("data.csv");
    write_dataset_csv(fs::File::create(&path).unwrap(), &Dataset::new(u, y, None).unwrap()).unwrap();
    path
}

#[test]
fn fit_recovers_impulse_response() {
    let dir = tempfile::tempdir().unwrap();
    let g: Vec<f64> = (1..=50).map(|k| 0.8f64.powi(k)).collect();
    let data = impulse_dataset(dir.path(), &g);
    let out = dir.path().join("fit.json");
    let o = run(&[
        "fit", "--data", data.to_str().unwrap(), "--family", "TC", "--dim", "50",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let fit: EstimateResult = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(fit.g_hat.len(), 50);
    let rms = (g.iter().zip(&fit.g_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 50.0).sqrt();
    assert!(rms < 1e-2, "rms {rms}");
}

#[test]
fn fit_missing_file() {
    let o = run(&["fit", "--data", "/nonexistent/data.csv", "--family", "TC"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn monte_carlo_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let csv = |name: &str, threads: &str| {
        let path = dir.path().join(name);
        let o = run(&[
            "mc", "--study", "1", "--runs", "2", "--seed", "7", "--estimators", "TC",
            "--threads", threads, "--out", path.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stdout(&o).contains("TC,"));
        fs::read(path).unwrap()
    };
    let a = csv("a.csv", "1");
    let b = csv("b.csv", "2");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("run,estimator,airf,"));
}

#[test]
fn monte_carlo_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mc.json");
    fs::write(&cfg, r#"{"study": 2, "runs": 1, "n": 200, "t": 20, "seed": 3, "estimators": ["DI", "SS"]}"#)
        .unwrap();
    let o = run(&["mc", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 3);
    assert!(stderr(&o).contains("SS,"));

    fs::write(&cfg, r#"{"study": 2, "runz": 1}"#).unwrap();
    assert_eq!(run(&["mc", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn psd_outputs() {
    let o = run(&["psd", "--family", "DI", "--beta", "0.5", "--normalize", "--grid", "33"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("theta,phi"));
    let phis: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(phis.len(), 33);
    assert!(phis.iter().all(|&p| p == 1.0));
}

#[test]
fn psd_order_sweeps() {
    let o = run(&["psd", "--family", "TCd", "--beta", "0.8", "--deltas", "1,2,3,4,5,6"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("low-frequency mass"));
    assert!(stderr(&o).contains("increasing=true"), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 1 + 6 * 501);
    let o = run(&["psd", "--family", "HFd", "--beta", "0.8", "--deltas", "1,2,3,4"]);
    assert!(stderr(&o).contains("high-frequency mass"));
    assert!(stderr(&o).contains("increasing=true"), "{}", stderr(&o));
}
