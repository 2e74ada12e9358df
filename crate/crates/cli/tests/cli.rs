use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lda")).args(args).output().expect("spawn lda")
}

fn ok(args: &[&str]) {
    let out = lda(args);
    assert!(
        out.status.success(),
        "lda {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn fixture(dir: &Path) -> PathBuf {
    let sim = dir.join("sim");
    ok(&["simulate", "--seed", "11", "--out", sim.to_str().unwrap()]);
    let profile = dir.join("profile.json");
    fs::write(&profile, r#"{"R_big": 1, "L_USA": 1}"#).unwrap();
    sim.join("events.csv")
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

fn stage_args(stage: &str, input: &str, profile: &str) -> Vec<String> {
    let mut v: Vec<String> = vec![stage.into(), "--input".into(), input.into()];
    let extra: &[&str] = match stage {
        "fit" => &["--decoupled"],
        "rank" => &["--rga-test", "--d", "200", "--seed", "5"],
        "var" => &["--profile", profile, "--mc-sims", "20000", "--seed", "5"],
        "premium" => &["--profile", profile, "--n-sims", "10000", "--seed", "5", "--utilities", "log"],
        _ => &[],
    };
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

const STAGES: [&str; 10] = ["ingest", "describe", "hill", "threshold", "fit", "vuong", "ks-table", "rank", "var", "premium"];

#[test]
fn every_stage_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let input = fixture(tmp.path());
    let profile = tmp.path().join("profile.json");
    for stage in STAGES {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let out = tmp.path().join(format!("{stage}_{run}"));
            let mut args = stage_args(stage, input.to_str().unwrap(), profile.to_str().unwrap());
            args.push("--out".into());
            args.push(out.to_str().unwrap().into());
            ok(&args.iter().map(String::as_str).collect::<Vec<_>>());
            outputs.push(read_dir_sorted(&out));
        }
        assert_eq!(outputs[0], outputs[1], "{stage} output differs between runs");
        let names: Vec<&str> = outputs[0].iter().map(|(n, _)| n.as_str()).collect();
        assert!(names.contains(&"manifest.json"), "{stage}");
        assert!(names.len() > 1, "{stage} wrote no artifacts");
    }
}

#[test]
fn simulate_is_reproducible_and_seed_sensitive() {
    let tmp = tempfile::tempdir().unwrap();
    let d = |n: &str| tmp.path().join(n).to_str().unwrap().to_string();
    ok(&["simulate", "--seed", "3", "--companies", "20", "--out", &d("a")]);
    ok(&["simulate", "--seed", "3", "--companies", "20", "--out", &d("b")]);
    ok(&["simulate", "--seed", "4", "--companies", "20", "--out", &d("c")]);
    let a = fs::read(tmp.path().join("a/events.csv")).unwrap();
    assert_eq!(a, fs::read(tmp.path().join("b/events.csv")).unwrap());
    assert_ne!(a, fs::read(tmp.path().join("c/events.csv")).unwrap());
}

#[test]
fn missing_input_exits_2_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let r = lda(&["describe", "--input", "/nonexistent/losses.csv", "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("input error"));
    assert!(!out.exists() || fs::read_dir(&out).unwrap().next().is_none());
}

#[test]
fn stochastic_stage_without_seed_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let input = fixture(tmp.path());
    let out = tmp.path().join("out");
    let r = lda(&["rank", "--rga-test", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn decoupled_fit_writes_one_table_per_type() {
    let tmp = tempfile::tempdir().unwrap();
    let input = fixture(tmp.path());
    let out = tmp.path().join("fit");
    ok(&["fit", "--decoupled", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let m = manifest(&out);
    assert_eq!(m["stage"], "fit");
    let listed: Vec<String> =
        m["artifacts"].as_array().unwrap().iter().map(|a| a["path"].as_str().unwrap().to_string()).collect();
    let tables = listed.iter().filter(|p| p.starts_with("coefficients_")).count();
    assert!(tables >= 10, "only {tables} per-type coefficient tables");
    assert!(!listed.iter().any(|p| p == "coefficients_all.csv"));
    for a in m["artifacts"].as_array().unwrap() {
        let bytes = fs::read(out.join(a["path"].as_str().unwrap())).unwrap();
        assert_eq!(a["bytes"].as_u64().unwrap() as usize, bytes.len());
    }
}

#[test]
fn config_hash_tracks_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let input = fixture(tmp.path());
    let i = input.to_str().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    ok(&["hill", "--input", i, "--out", a.to_str().unwrap()]);
    ok(&["hill", "--input", i, "--out", b.to_str().unwrap()]);
    ok(&["hill", "--input", i, "--k-min", "8", "--out", c.to_str().unwrap()]);
    let (ma, mb, mc) = (manifest(&a), manifest(&b), manifest(&c));
    assert_eq!(ma["config_sha256"], mb["config_sha256"]);
    assert_ne!(ma["config_sha256"], mc["config_sha256"]);
    assert_eq!(ma["input_sha256"], mc["input_sha256"]);
}

#[test]
fn joint_and_decoupled_are_exclusive() {
    let r = lda(&["fit", "--joint", "--decoupled", "--input", "x.csv", "--out", "y"]);
    assert!(!r.status.success());
}
