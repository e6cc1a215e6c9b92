use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn models() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("models")
}

fn mjp(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_mjp"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn model(name: &str) -> String {
    models().join(name).to_string_lossy().into_owned()
}

fn read(dir: &Path, file: &str) -> String {
    fs::read_to_string(dir.join(file)).unwrap_or_else(|e| panic!("{file}: {e}"))
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let dir = tmp.path().join(name);
        let d = dir.to_str().unwrap();
        let m = model("three_state.json");
        let args = [
            "simulate",
            "--model",
            &m,
            "--interval",
            "0",
            "5",
            "--obs-times",
            "1,2,3",
            "--seed",
            seed,
            "--out",
            d,
        ];
        let (code, err) = mjp(&args);
        assert_eq!(code, 0, "{err}");
        dir
    };
    let a = run("a", "7");
    let b = run("b", "7");
    let c = run("c", "8");
    for f in ["trajectory.csv", "observations.csv"] {
        assert_eq!(read(&a, f), read(&b, f));
    }
    assert_ne!(read(&a, "trajectory.csv"), read(&c, "trajectory.csv"));
    let manifest: serde_json::Value = serde_json::from_str(&read(&a, "run-manifest.json")).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["command"], "simulate");
}

#[test]
fn mmpp_and_ctbn_models_simulate() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("mmpp");
    let (code, err) = mjp(&[
        "simulate",
        "--model",
        &model("mmpp_two_state.json"),
        "--interval",
        "0",
        "10",
        "--out",
        d.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(read(&d, "events.csv").starts_with("time"));
    let d = tmp.path().join("ctbn");
    let (code, err) = mjp(&[
        "simulate",
        "--model",
        &model("chain5x5.json"),
        "--interval",
        "0",
        "4",
        "--obs-times",
        "2",
        "--out",
        d.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(read(&d, "observations.csv").starts_with("time,node,state"));
}

#[test]
fn replay_reproduces_inference_output() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    let args = [
        "infer-mjp",
        "--model",
        &model("three_state.json"),
        "--obs",
        &model("three_state_obs.csv"),
        "--interval",
        "0",
        "4",
        "--burnin",
        "50",
        "--samples",
        "200",
        "--query-times",
        "1,2",
        "--seed",
        "3",
        "--out",
        first.to_str().unwrap(),
    ];
    let (code, err) = mjp(&args);
    assert_eq!(code, 0, "{err}");
    let second = tmp.path().join("second");
    let manifest = first.join("run-manifest.json");
    let (code, err) = mjp(&[
        "replay",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(read(&first, "samples.csv"), read(&second, "samples.csv"));
    assert_eq!(
        read(&first, "marginals.csv"),
        read(&second, "marginals.csv")
    );
}

#[test]
fn conflicting_exact_observations_exit_with_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let m = tmp.path().join("exact.json");
    fs::write(&m, r#"{"rate_matrix": [[-1.0, 1.0], [1.0, -1.0]]}"#).unwrap();
    let obs = tmp.path().join("obs.csv");
    fs::write(&obs, "time,value\n1.0,0\n1.0,1\n").unwrap();
    let out = tmp.path().join("out");
    let (code, err) = mjp(&[
        "infer-mjp",
        "--model",
        m.to_str().unwrap(),
        "--obs",
        obs.to_str().unwrap(),
        "--interval",
        "0",
        "2",
        "--samples",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn existing_output_needs_force() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("keep.txt"), "x").unwrap();
    let d = tmp.path().to_str().unwrap();
    let m = model("three_state.json");
    let (code, _) = mjp(&[
        "simulate",
        "--model",
        &m,
        "--interval",
        "0",
        "1",
        "--out",
        d,
    ]);
    assert_eq!(code, 1);
    let (code, err) = mjp(&[
        "simulate",
        "--model",
        &m,
        "--interval",
        "0",
        "1",
        "--out",
        d,
        "--force",
    ]);
    assert_eq!(code, 0, "{err}");
}

#[test]
fn usage_errors_and_bad_settings_exit_one() {
    assert_eq!(mjp(&["simulate"]).0, 1);
    assert_eq!(mjp(&["no-such-command"]).0, 1);
    assert_eq!(mjp(&["--help"]).0, 0);
    assert_eq!(mjp(&["--version"]).0, 0);
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("b");
    assert_eq!(
        mjp(&["bench", "--repeats", "4", "--out", d.to_str().unwrap()]).0,
        1
    );
    let d = tmp.path().join("k");
    let args = [
        "infer-mjp",
        "--model",
        &model("three_state.json"),
        "--obs",
        &model("three_state_obs.csv"),
        "--interval",
        "0",
        "4",
        "--k",
        "1.0",
        "--out",
        d.to_str().unwrap(),
    ];
    assert_eq!(mjp(&args).0, 1);
}

#[test]
fn oracle_marginals_are_distributions() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("o");
    let (code, err) = mjp(&[
        "oracle",
        "--model",
        &model("three_state.json"),
        "--obs",
        &model("three_state_obs.csv"),
        "--interval",
        "0",
        "4",
        "--grid",
        "9",
        "--out",
        d.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let mut rdr = csv::Reader::from_path(d.join("marginals.csv")).unwrap();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let total: f64 = rec.iter().skip(1).map(|x| x.parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
        rows += 1;
    }
    assert_eq!(rows, 9);
    let summary: serde_json::Value = serde_json::from_str(&read(&d, "summary.json")).unwrap();
    assert!(summary["log_likelihood"].as_f64().unwrap() < 0.0);
}

#[test]
fn short_runs_of_every_sampler() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("mmpp");
    let (code, err) = mjp(&[
        "infer-mmpp",
        "--model",
        &model("mmpp_two_state.json"),
        "--obs",
        &model("mmpp_two_state_events.csv"),
        "--interval",
        "0",
        "10",
        "--learn-rates",
        "--burnin",
        "10",
        "--samples",
        "50",
        "--out",
        d.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(read(&d, "samples.csv").lines().count(), 51);

    let d = tmp.path().join("ctbn");
    let (code, err) = mjp(&[
        "infer-ctbn",
        "--model",
        &model("chain5x5.json"),
        "--obs",
        &model("chain5x5_obs.csv"),
        "--interval",
        "0",
        "20",
        "--burnin",
        "10",
        "--samples",
        "30",
        "--grid",
        "21",
        "--out",
        d.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(read(&d, "band.csv").lines().count(), 1 + 21 * 5);

    let d = tmp.path().join("ess");
    let (code, err) = mjp(&[
        "ess-study",
        "--k",
        "1.5,3",
        "--burnin",
        "10",
        "--samples",
        "100",
        "--replicates",
        "2",
        "--trace-inits",
        "2",
        "--trace-sweeps",
        "3",
        "--out",
        d.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let study = read(&d, "ess_study.csv");
    assert!(study.starts_with("k,mode,replicate,seed"));
    assert_eq!(study.lines().count(), 1 + 2 * 2 * 2);
    assert_eq!(read(&d, "burnin.csv").lines().count(), 1 + 2 * 4);
}
