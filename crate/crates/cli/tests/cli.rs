use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scenario-regret"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

const MSD_CONFIG: &str = r#"{
    "system": {"kind": "msd"},
    "dataset": {"N": 20, "seed": 7},
    "certificate": {"epsilon": 0.1, "beta": 0.01}
}"#;

#[test]
fn certify_counts_and_domain_gate() {
    let o = run(&["certify", "--eps", "0.1", "--beta", "0.1", "--delta", "1"]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.contains("exact N = 22"), "{s}");
    assert!(s.contains("simple N = 67"), "{s}");
    assert!(s.contains("(given)"));

    let o = run(&["certify", "--eps", "0.1", "--beta", "0.1", "--delta", "39"]);
    assert!(stdout(&o).contains("simple N = 827"));

    assert_eq!(code(&run(&["certify", "--eps", "1.5", "--beta", "0.1", "--delta", "1"])), 2);
    assert_eq!(code(&run(&["certify", "--eps", "0.1", "--beta", "0.1"])), 2);
}

#[test]
fn synth_validate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, MSD_CONFIG).unwrap();
    let reg = dir.path().join("regret");
    let hinf = dir.path().join("hinf");

    let o = run(&["synth", "--config", cfg.to_str().unwrap(), "--out", reg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&reg.join("result.json"));
    let gamma_r = r["result"]["gamma_star"].as_f64().unwrap();
    assert!(gamma_r > 0.0);
    assert_eq!(r["result"]["decision_variables"]["structural"], 421);
    assert_eq!(r["certificate"]["delta_source"], "structural");
    assert_eq!(r["config"]["dataset"]["N"], 20);
    assert!(r["result"]["policy"]["phi_u"].is_array());

    let o = run(&[
        "synth",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        hinf.to_str().unwrap(),
        "--objective",
        "hinf",
    ]);
    assert_eq!(code(&o), 0);
    let gamma_h = read_json(&hinf.join("result.json"))["result"]["gamma_star"].as_f64().unwrap();
    assert!(gamma_h >= gamma_r - 1e-6, "{gamma_h} < {gamma_r}");

    let result = reg.join("result.json");
    let result = result.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = run(&[
            "validate",
            "--result",
            result,
            "--validate-samples",
            "300",
            "--seed",
            "5",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
    }
    let ra = std::fs::read(a.join("validation.json")).unwrap();
    assert_eq!(ra, std::fs::read(b.join("validation.json")).unwrap());
    let csv = std::fs::read_to_string(a.join("violations.csv")).unwrap();
    assert!(csv.starts_with("N,eps,beta,delta,rate,seed\n20,0.1,0.01,421,"));

    let rep = dir.path().join("replay");
    let o = run(&["validate", "--result", result, "--replay-training", "--out", rep.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(read_json(&rep.join("validation.json"))["empirical_rate"], 0.0);

    let o = run(&["validate", "--result", result, "--validate-samples", "0"]);
    assert_eq!(code(&o), 2);

    let o = run(&["certify", "--eps", "0.1", "--beta", "0.01", "--result", result]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("delta = 421 (structural)"));
}

#[test]
fn malformed_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for (name, text) in [
        ("syntax.json", "{\"system\": "),
        ("unknown.json", r#"{"system": {"kind": "msd"}, "dataset": {"N": 5, "seed": 1}, "bogus": 1}"#),
        ("empty.json", r#"{"system": {"kind": "msd"}, "dataset": {"N": 0, "seed": 1}}"#),
        ("weights.json", r#"{"system": {"kind": "msd"}, "weights": {"kind": "dense", "q": [[1.0]], "r": [[1.0]]}, "dataset": {"N": 5, "seed": 1}}"#),
    ] {
        let cfg = dir.path().join(name);
        std::fs::write(&cfg, text).unwrap();
        let o = run(&["synth", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 2, "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists(), "{name}");
    }
}

#[test]
fn missing_files_are_io_errors() {
    let o = run(&["validate", "--result", "/nonexistent/result.json"]);
    assert_eq!(code(&o), 5);
    let o = run(&["synth", "--config", "/nonexistent/run.json"]);
    assert_eq!(code(&o), 5);
}

#[test]
fn infeasible_safety_exits_3() {
    // `x_0` enters the first state directly, so `x_0 <= -1` cannot hold for the unit ball.
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let text = r#"{
        "system": {"kind": "affine", "dims": {"n": 1, "m": 1, "p": 1, "d": 1, "horizon": 2},
                   "dynamics": {"steps": [{"a": {"constant": [[1.0]], "coefficients": [[[0.1]]]},
                                           "b": {"constant": [[1.0]]}, "e": {"constant": [[1.0]]}}]}},
        "safety": {"h_x": [[1.0, 0.0]], "h_u": [[0.0, 0.0]], "h": [-1.0], "h_w": [[1.0, 0.0], [0.0, 1.0]]},
        "dataset": {"N": 3, "seed": 0, "distribution": {"low": [-1.0], "high": [1.0]}}
    }"#;
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let o = run(&["synth", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn dump_program_writes_conic_description() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"system": {"kind": "msd", "params": {"horizon": 4}}, "dataset": {"N": 2, "seed": 1}}"#)
        .unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "synth",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--structure",
        "toeplitz",
        "--dump-program",
    ]);
    assert_eq!(code(&o), 0);
    let p = read_json(&out.join("program.json"));
    assert_eq!(p["constraints"].as_array().unwrap().len(), 2);
    let r = read_json(&out.join("result.json"));
    assert_eq!(r["config"]["structure"], "toeplitz");
    assert_eq!(p["num_variables"], r["result"]["decision_variables"]["structural"]);
}

#[test]
fn repro_rejects_unknown_kind() {
    assert_eq!(code(&run(&["repro", "bogus"])), 2);
    assert_eq!(code(&run(&["repro", "cost-comparison", "--scale", "huge"])), 2);
}

#[test]
fn repro_violation_curve_small() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["repro", "violation-curve", "--scale", "small", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(dir.path().join("violation-curve.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("N,delta_used,eps_theory,v_full,v_toeplitz,seed"));
    assert_eq!(lines.count(), 3);
    let m = read_json(&dir.path().join("violation-curve.manifest.json"));
    assert_eq!(m["seeds"]["training"], 2024);
}

#[test]
fn unknown_backend_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"system": {"kind": "msd", "params": {"horizon": 3}}, "dataset": {"N": 2, "seed": 1}}"#)
        .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_scenario-regret"))
        .args(["synth", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()])
        .env("REGRET_SOLVER", "no-such-solver")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}
