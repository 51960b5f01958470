use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hkflow::axisym::ProfileSurface;

fn hkflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hkflow")).current_dir(dir).args(args).output().expect("spawn hkflow")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn even_k_is_invalid_input() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hkflow(tmp.path(), &["run", "--k", "4", "--t-end", "0.01"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("k must be odd"), "{}", stderr(&o));
}

#[test]
fn nonpositive_mean_curvature_is_invalid_input() {
    let tmp = tempfile::tempdir().unwrap();
    // A sphere with a deep dimple at the top pole.
    let dented =
        ProfileSurface::from_map(128, |u: f64| (u.sin(), u.cos() - 0.8 * (-(u / 0.35).powi(2)).exp())).unwrap();
    let path = tmp.path().join("dented.txt");
    dented.write(&path).unwrap();
    let o = hkflow(tmp.path(), &["run", "--profile", "dented.txt", "--t-end", "0.01"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("H > 0"), "{}", stderr(&o));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.json"), r#"{"t_end": 0.01, "bogus": 1}"#).unwrap();
    assert_eq!(code(&hkflow(tmp.path(), &["run", "--config", "c.json"])), 2);
    assert_eq!(code(&hkflow(tmp.path(), &["run", "--set", "N=many", "--t-end", "0.01"])), 2);
    assert_eq!(code(&hkflow(tmp.path(), &["frobnicate"])), 2);
}

#[test]
fn run_writes_artifacts_and_resumes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"shape": {"spheroid": {"a": 1.0, "c": 1.5}}, "N": 80, "t_end": 0.01, "output_dir": "out"}"#;
    fs::write(tmp.path().join("c.json"), cfg).unwrap();
    let o = hkflow(tmp.path(), &["run", "--config", "c.json", "--emit-gnuplot"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = tmp.path().join("out");
    for f in [
        "monitors.csv",
        "checkpoint_initial.json",
        "checkpoint_final.json",
        "verdicts.json",
        "metadata.json",
        "monitors.gp",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let csv = fs::read_to_string(out.join("monitors.csv")).unwrap();
    assert!(csv.starts_with("t,dt,H_min,H_max,A2_max,Q_max,lalpha_accum,slack_36_min,qbound_slack,eligible,convex\n"));
    let verdicts: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("verdicts.json")).unwrap()).unwrap();
    assert_eq!(verdicts["config"]["N"], 80);
    assert_eq!(verdicts["ledger"]["ell"], -5);
    assert_eq!(verdicts["summary"]["pass"], true);

    // Same trajectory, later horizon.
    let o = hkflow(
        tmp.path(),
        &["run", "--config", "c.json", "--t-end", "0.02", "--out", "more", "--resume", "out/checkpoint_final.json"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // A different trajectory must not resume from it.
    let o = hkflow(tmp.path(), &["run", "--config", "c.json", "--N", "96", "--resume", "out/checkpoint_final.json"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn stated_identities_fail_verification_corrected_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let levels = "verify.levels=[[64,1e-5],[128,2.5e-6],[256,6.25e-7]]";
    let o = hkflow(tmp.path(), &["verify", "--shape", "spheroid", "--a", "1", "--c", "2", "--set", levels]);
    assert_eq!(code(&o), 1);
    let o = hkflow(
        tmp.path(),
        &["verify", "--shape", "spheroid", "--a", "1", "--c", "2", "--set", levels, "--set", "verify.form=Corrected"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("hkflow-out/verify.json")).unwrap()).unwrap();
    assert_eq!(v["summary"]["consistency"]["pass"], true);
    assert_eq!(v["summary"]["identities"].as_array().unwrap().len(), 4);
    // Sabotaging one term of H_evo must be caught.
    let o = hkflow(
        tmp.path(),
        &[
            "verify",
            "--shape",
            "spheroid",
            "--a",
            "1",
            "--c",
            "2",
            "--set",
            levels,
            "--identities",
            "H_evo",
            "--set",
            r#"verify.corrupt_term={"index":2,"factor":1.01}"#,
        ],
    );
    assert_eq!(code(&o), 1);
}

#[test]
fn sweep_rows_follow_value_order() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_hkflow"))
        .current_dir(tmp.path())
        .env("HKFLOW_THREADS", "2")
        .args(["sweep", "--N", "64", "--t-end", "0.01", "--axis", "alpha", "--values", "7,3,5"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("hkflow-out/sweep.csv")).unwrap();
    let firsts: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(firsts, ["7e0", "3e0", "5e0"]);

    let o =
        hkflow(tmp.path(), &["sweep", "--N", "64", "--t-end", "0.01", "--axis", "alpha", "--values", "", "--out", "e"]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(tmp.path().join("e/sweep.csv")).unwrap().lines().count(), 1);
    let o = hkflow(tmp.path(), &["sweep", "--t-end", "0.01", "--axis", "colour", "--values", "1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn sphere_exact_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let o = hkflow(tmp.path(), &["sphere-exact", "--set", "extra_alphas=[5]"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("hkflow-out/sphere_exact.json")).unwrap()).unwrap();
    assert_eq!(v["t_max"], 1.0 / 32.0);
    assert_eq!(v["lalpha"][0]["divergent"], true);
    assert_eq!(v["lalpha"][1]["divergent"], false);
    let csv = fs::read_to_string(tmp.path().join("hkflow-out/sphere_exact.csv")).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), "0e0,1e0,2e0,2e0,2.03125e0,1.2566370614359172e1");
}

#[test]
fn identical_configs_give_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    for d in ["a", "b"] {
        let o = hkflow(
            tmp.path(),
            &["run", "--shape", "spheroid", "--a", "1", "--c", "1.3", "--N", "64", "--t-end", "0.01", "--out", d],
        );
        assert_eq!(code(&o), 0);
    }
    for f in ["monitors.csv", "checkpoint_final.json", "final_profile.txt"] {
        assert_eq!(
            fs::read(tmp.path().join("a").join(f)).unwrap(),
            fs::read(tmp.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}
