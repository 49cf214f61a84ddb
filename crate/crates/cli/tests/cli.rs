use std::path::Path;
use std::process::{Command, Output};

fn jkfd(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_jkfd"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn jkfd");
    assert!(
        out.status.success(),
        "jkfd {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn summary(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn scenario_fit_replay_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("sc.json"), r#"{"epochs": 30, "seed": 4}"#).unwrap();
    jkfd(
        d,
        &[
            "gen-scenario",
            "--config",
            "sc.json",
            "--out",
            "scen.csv",
            "--training",
            "train.csv",
            "--training-count",
            "60000",
        ],
    );
    jkfd(
        d,
        &[
            "fit-overbound",
            "--input",
            "train.csv",
            "--method",
            "pgo",
            "--bins",
            "--out",
            "pgo",
        ],
    );
    for f in ["model.json", "cdf.csv", "ccdf.csv"] {
        assert!(d.join("pgo").join(f).exists(), "{f}");
    }
    let cdf = std::fs::read_to_string(d.join("pgo/cdf.csv")).unwrap();
    assert!(cdf.starts_with("x,empirical,gaussian_ob,pgo\n"));

    // any satellite visible through the whole fault window
    let scen = std::fs::read_to_string(d.join("scen.csv")).unwrap();
    let sat_at = |t: &str| -> Vec<String> {
        scen.lines()
            .filter(|l| l.split(',').next() == Some(t))
            .map(|l| l.split(',').nth(1).unwrap().to_string())
            .collect()
    };
    let sat = sat_at("300.0")
        .into_iter()
        .find(|s| sat_at("600.0").contains(s))
        .expect("common satellite");

    let out = jkfd(
        d,
        &[
            "replay",
            "--scenario",
            "scen.csv",
            "--models",
            "pgo/model.json",
            "--tau",
            "0.05",
            "--points",
            "2047",
            "--fault-sat",
            &sat,
            "--fault-start",
            "300",
            "--fault-end",
            "600",
            "--fault-bias",
            "40",
            "--out",
            "timeline.csv",
        ],
    );
    let s = summary(&out);
    assert_eq!(s["delay_s"], 30.0);
    assert_eq!(s["epochs"], 30);
    let timeline = std::fs::read_to_string(d.join("timeline.csv")).unwrap();
    assert_eq!(timeline.lines().count(), 31);
}

#[test]
fn single_column_gaussian_fit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let values: String = (0..2000)
        .map(|i| format!("{}\n", ((i as f64 + 0.5) / 2000.0 - 0.5) * 4.0))
        .collect();
    std::fs::write(d.join("r.csv"), format!("residual\n{values}")).unwrap();
    let out = jkfd(
        d,
        &["fit-overbound", "--input", "r.csv", "--method", "gaussian"],
    );
    let bank = summary(&out);
    assert_eq!(bank["method"], "gaussian");
    assert!(bank["models"][0]["model"]["sigma"].as_f64().unwrap() > 0.0);
}

#[test]
fn simulate_and_bench_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("sim.json"),
        r#"{"grid_spacing_deg": 90, "epochs": 2, "fit_samples": 20000,
            "grid": {"points": 511, "support_sigmas": 10}}"#,
    )
    .unwrap();
    jkfd(d, &["simulate", "--config", "sim.json", "--out", "sim"]);
    for f in [
        "rates_jk_pgo.csv",
        "rates_ss_pgo.csv",
        "rates_jk_gaussian.csv",
        "rates_ss_gaussian.csv",
        "summary.json",
    ] {
        assert!(d.join("sim").join(f).exists(), "{f}");
    }
    let summary_json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("sim/summary.json")).unwrap())
            .unwrap();
    assert!(summary_json.is_object());

    std::fs::write(
        d.join("bench.json"),
        r#"{"epochs": 3, "fit_samples": 20000, "grid": {"points": 1023, "support_sigmas": 10}}"#,
    )
    .unwrap();
    let out = jkfd(d, &["bench", "--config", "bench.json", "--out", "b.csv"]);
    assert_eq!(summary(&out)["epochs"], 3);
    assert_eq!(
        std::fs::read_to_string(d.join("b.csv"))
            .unwrap()
            .lines()
            .count(),
        4
    );
}

#[test]
fn malformed_scenario_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("bad.csv"),
        "epoch_s,sat_id,sat_x_m,sat_y_m,sat_z_m,pseudorange_m,elevation_deg\n0,1,1,2,3,4,x\n",
    )
    .unwrap();
    std::fs::write(
        d.join("m.json"),
        r#"{"method":"gaussian","bins":{"lower_deg":-90,"upper_deg":90,"width_deg":180},
            "models":[{"lower_deg":-90,"upper_deg":90,"count":0,"model":{"kind":"gaussian","sigma":1.0}}]}"#,
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_jkfd"))
        .current_dir(d)
        .args(["replay", "--scenario", "bad.csv", "--models", "m.json"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}
