use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_specache"));
    for k in ["LINES", "DEPTH_HIT", "DEPTH_MISS", "STRATEGY", "SHADOW", "REGION_MODE", "COLORS", "ORACLE_BUDGET"] {
        c.env_remove(format!("SPECACHE_{k}"));
    }
    c
}

fn corpus(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("corpus")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn run(c: &mut Command) -> (i32, String, String) {
    let Output { status, stdout, stderr } = c.output().unwrap();
    (
        status.code().unwrap(),
        String::from_utf8(stdout).unwrap(),
        String::from_utf8(stderr).unwrap(),
    )
}

fn tail_verdict(text: &str) -> &str {
    let line = text.lines().find(|l| l.starts_with("tail:0")).unwrap();
    line.split_whitespace().nth(3).unwrap()
}

#[test]
fn analyze_flips_final_access_with_speculation() {
    let f = corpus("mispredict_evicts.cfgir");
    let (code, out, _) = run(bin().args(["analyze", &f, "--lines", "4", "--strategy", "jit"]));
    assert_eq!(code, 0);
    assert_eq!(tail_verdict(&out), "miss?");
    let (code, out, _) = run(bin().args(["analyze", &f, "--lines", "4", "--depth-hit", "0", "--depth-miss", "0"]));
    assert_eq!(code, 0);
    assert_eq!(tail_verdict(&out), "hit");
}

#[test]
fn zero_depth_output_equals_baseline() {
    let f = corpus("nested_diamonds.cfgir");
    let a = run(bin().args(["analyze", &f, "--format", "json", "--depth-hit", "0", "--depth-miss", "0"]));
    let b = run(bin().args(["analyze", &f, "--format", "json", "--baseline"]));
    assert_eq!(a, b);
}

#[test]
fn leak_sets_exit_code_one() {
    let f = corpus("sbox_leak.cfgir");
    let (code, out, _) = run(bin().args(["analyze", &f, "--format", "json"]));
    assert_eq!(code, 1);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["leaks"][0]["leaking"], true);
    let (code, _, _) = run(bin().args(["analyze", &f, "--baseline"]));
    assert_eq!(code, 0);
}

#[test]
fn input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfgir");
    std::fs::write(&bad, "var a\nentry b\nblock b: ref nope; exit\n").unwrap();
    let (code, _, err) = run(bin().args(["analyze", bad.to_str().unwrap()]));
    assert_eq!(code, 2);
    assert!(err.contains("undeclared variable `nope`"), "{err}");
    let (code, _, _) = run(bin().args(["analyze", "/definitely/not/here.cfgir"]));
    assert_eq!(code, 2);
    let (code, _, _) = run(bin().args(["analyze", &corpus("straight_line.cfgir"), "--strategy", "sometimes"]));
    assert_eq!(code, 2);
    let (code, _, _) = run(bin().args(["frobnicate"]));
    assert_eq!(code, 2);
}

#[test]
fn env_overrides_file_config_and_flags_override_env() {
    let f = corpus("mispredict_evicts.cfgir");
    let json = |c: &mut Command| -> serde_json::Value {
        let (_, out, _) = run(c);
        serde_json::from_str(&out).unwrap()
    };
    let v = json(bin().args(["analyze", &f, "--format", "json"]));
    assert_eq!(v["config"]["lines"], 4);
    let v = json(bin().env("SPECACHE_LINES", "7").args(["analyze", &f, "--format", "json"]));
    assert_eq!(v["config"]["lines"], 7);
    let v = json(bin().env("SPECACHE_LINES", "7").args(["analyze", &f, "--format", "json", "--lines", "5"]));
    assert_eq!(v["config"]["lines"], 5);
    let v = json(bin().env("SPECACHE_SHADOW", "off").args(["analyze", &f, "--format", "json"]));
    assert_eq!(v["config"]["shadow"], false);
}

#[test]
fn dump_states_prints_bucket_rows() {
    let f = corpus("quantl_trace.cfgir");
    let (code, out, err) = run(bin().args(["analyze", &f, "--dump-states"]));
    assert_eq!(code, 0);
    assert!(err.contains("rotating"));
    let row = out.lines().find(|l| l.starts_with("bb8 in:")).unwrap();
    assert!(row.contains("{∃ril,ril}"), "{row}");
    assert!(row.contains("decis_levl.1"));
}

#[test]
fn oracle_check_passes_and_finds_counterexamples() {
    let (code, out, _) = run(bin().args(["oracle-check", &corpus("merge_strategies.cfgir"), "--lines", "4"]));
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("no violation"));

    let dir = tempfile::tempdir().unwrap();
    let cex = dir.path().join("cex.json");
    let f = corpus("quantl.cfgir");
    let (code, _, err) = run(bin().args([
        "oracle-check",
        &f,
        "--region-mode",
        "rotating",
        "--depth-miss",
        "2",
        "--budget",
        "20000",
        "--emit",
        cex.to_str().unwrap(),
    ]));
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("counterexample"));
    let (code, out, _) = run(bin().args(["replay", &f, "--counterexample", cex.to_str().unwrap()]));
    assert_eq!(code, 0);
    assert!(out.contains("violation"));
    assert!(out.contains("bb1:0"));
}

#[test]
fn corpus_mode_prints_table() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus");
    let (code, out, _) = run(bin().args(["corpus", dir.to_str().unwrap(), "--no-oracle"]));
    assert_eq!(code, 0);
    let header = out.lines().next().unwrap();
    for col in ["Name", "#Miss", "#SpMiss", "#Iteration"] {
        assert!(header.contains(col));
    }
    assert!(out.lines().any(|l| l.starts_with("sbox_leak")));
    let (_, a, _) = run(bin().args(["corpus", dir.to_str().unwrap(), "--no-oracle", "--format", "json"]));
    let (_, b, _) = run(bin().args(["corpus", dir.to_str().unwrap(), "--no-oracle", "--format", "json"]));
    assert_eq!(a, b);
}
