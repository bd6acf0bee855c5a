use std::path::Path;
use std::process::{Command, Output};

use cafe_theta::audio::write_wav_i16;
use cafe_theta::experiments::THETA_GRID;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

fn cafe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cafe-theta"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn header(path: &Path) -> String {
    read(path).lines().next().unwrap().to_string()
}

fn sidecar(path: &Path) -> serde_json::Value {
    let meta = format!("{}.meta.json", path.display());
    serde_json::from_str(&read(Path::new(&meta))).unwrap()
}

#[test]
fn simulate_is_reproducible_and_writes_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = cafe(&[
            "simulate", "--n", "8", "--alpha", "1/100", "--theta", "0", "0.5", "--steps", "20000",
            "--seed", "11", "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(read(&a), read(&b));
    assert_eq!(header(&a), "n,alpha,beta,theta,seed,n1,count,empirical,analytic,kl");
    assert_eq!(read(&a).lines().count(), 1 + 2 * 9);

    let meta = sidecar(&a);
    assert_eq!(meta["tool"], "cafe-theta");
    assert_eq!(meta["command"], "simulate");
    assert_eq!(meta["seed"], 11);
    assert!(meta["version"].is_string());
    assert_eq!(meta["parameters"]["steps"], 20000);
}

#[test]
fn different_seeds_give_different_histograms() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str| {
        let out = dir.path().join(format!("{seed}.csv"));
        let o = cafe(&["simulate", "--n", "8", "--alpha", "1/100", "--steps", "5000", "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        read(&out)
    };
    assert_ne!(run("1"), run("2"));
}

#[test]
fn simulate_json_output() {
    let o = cafe(&["simulate", "--n", "4", "--alpha", "0.02", "--steps", "1000", "--format", "json"]);
    assert!(o.status.success());
    let cells: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(cells.as_array().unwrap().len(), 1);
    assert!(cells[0]["kl"].is_number());
    assert_eq!(cells[0]["cell"]["params"]["n_agents"], 4);
}

#[test]
fn argument_errors_exit_with_two() {
    for args in [
        vec!["simulate", "--n", "8", "--theta", "1.5"],
        vec!["simulate", "--n", "8", "--alpha", "1.2"],
        vec!["simulate", "--n"],
        vec!["simulate", "--steps", "0"],
        vec!["analytic", "--n", "0", "--alpha", "0.01"],
        vec!["heatmap", "--alpha", "abc"],
        vec!["no-such-command"],
    ] {
        let o = cafe(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn missing_input_is_a_data_error() {
    let o = cafe(&["fit", "--input", "/definitely/not/here.csv", "--alpha", "0.01"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn analytic_kinds_are_normalized() {
    for kind in ["theta", "uni", "iso", "exact"] {
        let o = cafe(&["analytic", "--n", "16", "--alpha", "1/200", "--theta", "0.3", "--kind", kind]);
        assert!(o.status.success(), "{kind}");
        let text = String::from_utf8(o.stdout).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("n1,prob"));
        let total: f64 = lines.map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9, "{kind}: {total}");
    }
}

#[test]
fn heatmap_columns_and_boundary() {
    let o = cafe(&["heatmap", "--n", "64", "--alpha", "1/800", "--theta", "0.9", "0.95"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,alpha,beta,theta,p0_analytic,h_alpha,h_beta,theta_star,is_critical_boundary");
    assert!(lines[1].ends_with("false"));
    assert!(lines[2].ends_with("true"));
}

#[test]
fn sweep_hmin_defaults_to_full_theta_grid() {
    let o = cafe(&["sweep-hmin", "--n", "16", "--alpha", "1/50", "--steps", "20000"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let headers = rows.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "theta").unwrap();
    assert!(headers.iter().any(|h| h == "h_min"));
    let thetas: Vec<f64> = rows.records().map(|r| r.unwrap()[col].parse().unwrap()).collect();
    assert_eq!(thetas, THETA_GRID.to_vec());
}

#[test]
fn silence_reports_theory_and_empirical_columns() {
    let o = cafe(&["silence", "--n", "4", "--alpha", "1/200", "--theta", "0", "--steps", "200000"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let head = text.lines().next().unwrap();
    for col in ["theory_mean", "empirical_mean", "theory_var", "empirical_var", "n_observed"] {
        assert!(head.split(',').any(|c| c == col), "{col} missing from {head}");
    }
}

#[test]
fn fit_recovers_rates_from_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let hist = dir.path().join("hist.csv");
    let o = cafe(&[
        "simulate", "--n", "32", "--alpha", "1/100", "--beta", "1/50", "--steps", "400000", "--seed", "5",
        "--out", hist.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let mut counts = String::from("n1,count\n");
    for line in read(&hist).lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        counts.push_str(&format!("{},{}\n", f[5], f[6]));
    }
    let input = dir.path().join("counts.csv");
    std::fs::write(&input, counts).unwrap();

    let o = cafe(&["fit", "--input", input.to_str().unwrap(), "--alpha", "1/100", "--beta", "1/50"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for key in ["params", "h_min", "kl_at_min", "alpha_hat", "beta_hat"] {
        assert!(report.get(key).is_some(), "{key}");
    }
    let a = report["alpha_hat"].as_f64().unwrap();
    let b = report["beta_hat"].as_f64().unwrap();
    assert!((a / 0.01 - 1.0).abs() < 0.15, "alpha_hat {a}");
    assert!((b / 0.02 - 1.0).abs() < 0.15, "beta_hat {b}");
    assert!(report["h_min"].as_f64().unwrap() < 0.1);
}

#[test]
fn weights_round_trip_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let exported = dir.path().join("w.csv");
    let summary = dir.path().join("summary.json");
    let o = cafe(&["weights", "export", "--n", "6", "--theta", "0.4", "--weights", "distance", "--seed", "9", "--out", exported.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(header(&exported), "w_0,w_1,w_2,w_3,w_4,w_5");
    assert_eq!(read(&exported).lines().count(), 7);
    let o = cafe(&["weights", "import", "--input", exported.to_str().unwrap(), "--out", summary.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s: serde_json::Value = serde_json::from_str(&read(&summary)).unwrap();
    assert_eq!(s["n"], 6);
    assert!((s["min_row_sum"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((s["max_diagonal"].as_f64().unwrap() - 0.4).abs() < 1e-12);

    let sim = dir.path().join("sim.csv");
    let o = cafe(&[
        "simulate", "--n", "6", "--alpha", "1/100", "--theta", "0.4", "--steps", "2000",
        "--weights-file", exported.to_str().unwrap(), "--out", sim.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn malformed_weights_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "w_0,w_1\n0.5,0.9\n1,0\n").unwrap();
    let o = cafe(&["weights", "import", "--input", bad.to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn audio_batch_reports_partial_failure() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
    let mut paths = Vec::new();
    for (name, amp) in [("calm", 0.1), ("busy", 0.4)] {
        let samples: Vec<f64> = (0..48_000)
            .map(|i| amp * if (i / 4000) % 2 == 0 { 1.0 } else { 0.2 } * (rng.random::<f64>() - 0.5))
            .collect();
        let p = dir.path().join(format!("{name}.wav"));
        write_wav_i16(&p, &samples, 16_000).unwrap();
        paths.push(p);
    }
    let corrupt = dir.path().join("corrupt.wav");
    std::fs::write(&corrupt, b"not a wave file").unwrap();
    let out = dir.path().join("out");

    let mut args = vec!["audio".to_string()];
    args.extend(paths.iter().map(|p| p.display().to_string()));
    args.push(corrupt.display().to_string());
    args.extend(["--out".into(), out.display().to_string(), "--jobs".into(), "2".into()]);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = cafe(&args);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));

    assert_eq!(header(&out.join("ranking.csv")), "file,variance_of_min_db");
    assert_eq!(read(&out.join("ranking.csv")).lines().count(), 3);
    for stem in ["calm", "busy"] {
        assert_eq!(header(&out.join(format!("{stem}.energy.csv"))), "frame_index,db");
        assert_eq!(header(&out.join(format!("{stem}.fit.csv"))), "n1,empirical,model");
        let fit: serde_json::Value = serde_json::from_str(&read(&out.join(format!("{stem}.fit.json")))).unwrap();
        assert_eq!(fit["params"]["n_agents"], 32);
        assert_eq!(sidecar(&out.join(format!("{stem}.fit.json")))["command"], "audio");
    }

    let o = cafe(&["audio", corrupt.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}
