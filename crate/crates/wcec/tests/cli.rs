use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const MODEL: &str = r#"{
  "base_power_mw": 200.0,
  "cycle_time_ns": 2.5,
  "inter_instruction": {"constant": 0.5},
  "opcodes": {
    "maccs": {"base_mw": 24.0, "alpha_mw_per_bit": 3.0},
    "nop": {"base_mw": 23.0, "alpha_mw_per_bit": 0.0},
    "default": {"base_mw": 12.0, "alpha_mw_per_bit": 0.6}
  }
}"#;

fn wcec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wcec")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn data(name: &str) -> String {
    format!("{}/data/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn fir(dir: &Path, op: &str, extra: &[&str]) -> PathBuf {
    let mut args = vec!["fir", "--op", op, "--samples", "4"];
    args.extend_from_slice(extra);
    let o = wcec(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    write(dir, &format!("{op}.asm"), &stdout(&o))
}

#[test]
fn fit_writes_model_and_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.json");
    let o = wcec(&["fit", "--measurements", &data("table1.csv"), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("max |residual|"), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("maccs")).count(), 6);
    let model: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(model["opcodes"]["maccs"]["alpha_mw_per_bit"].as_f64().unwrap() > 0.0);
    assert_eq!(model["opcodes"]["nop"]["alpha_mw_per_bit"].as_f64(), Some(0.0));
}

#[test]
fn wcec_validates_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", MODEL);
    let prog = fir(dir.path(), "maccs", &["--reps", "2"]);
    let o = wcec(&["wcec", s(&prog), "--model", s(&model), "--validate", "200"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["validation"]["verdict"], "PASS");
    assert_eq!(report["validation"]["trials"], 202);
    assert!(report["bound_nj"].as_f64().unwrap() >= report["validation"]["max_observed_nj"].as_f64().unwrap());
    assert!(report["tightening_ratio"].as_f64().unwrap() <= 1.0);
    assert!(stderr(&o).lines().any(|l| l.starts_with("PASS: 202 trials")), "{}", stderr(&o));
}

#[test]
fn threads_sum_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", MODEL);
    let prog = fir(dir.path(), "add", &["--no-dpath"]);
    let bound = |threads: &str| {
        let o = wcec(&["wcec", s(&prog), "--model", s(&model), "--threads", threads]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        serde_json::from_str::<Value>(&stdout(&o)).unwrap()["bound_nj"].as_f64().unwrap()
    };
    let (one, three) = (bound("1"), bound("3"));
    // any predecessor may precede a site once threads interleave
    assert!(three >= 3.0 * one, "{three} < 3 * {one}");
}

#[test]
fn undefined_label_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.asm", "ldc r0, 1\nbt r0, nowhere\nhalt\n");
    let o = wcec(&["asm", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 2") && err.contains("nowhere"), "{err}");
}

#[test]
fn asm_dumps_program_and_cfg() {
    let dir = tempfile::tempdir().unwrap();
    let prog = fir(dir.path(), "nop", &[]);
    let o = wcec(&["asm", s(&prog)]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains(".loopbound 17"), "{text}");
    assert!(text.contains("# loop: header block"), "{text}");
}

#[test]
fn analyze_prints_classes() {
    let dir = tempfile::tempdir().unwrap();
    let prog = fir(dir.path(), "xor", &["--no-dpath"]);
    let o = wcec(&["analyze", s(&prog)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let xor = v["sites"].as_array().unwrap().iter().find(|s| s["opcode"] == "xor").unwrap();
    assert_eq!(xor["ports"][0]["class"], "bounded");
    assert_eq!(xor["ports"][0]["max_bits"], 5);
    // the fill loop stores words read by `in`
    let stw = v["sites"].as_array().unwrap().iter().find(|s| s["opcode"] == "stw").unwrap();
    assert_eq!(stw["ports"][2]["class"], "worst");
    assert_eq!(stw["ports"][2]["max_bits"], 32);
}

#[test]
fn run_reports_energy_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", MODEL);
    let prog = fir(dir.path(), "lmul", &[]);
    let trace = dir.path().join("t.csv");
    let o = wcec(&["run", s(&prog), "--model", s(&model), "--inputs", "rand16", "--threads", "2", "--trace", s(&trace)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let cycles = v["cycles"].as_u64().unwrap();
    assert!(v["avg_power_mw"].as_f64().unwrap() > 200.0);
    assert!(!v["tainted_sites"].as_array().unwrap().is_empty());
    let t = std::fs::read_to_string(&trace).unwrap();
    assert!(t.starts_with("cycle,thread,site,opcode,ports,switch_bits,cost_mw,tainted\n"));
    assert_eq!(t.lines().count() as u64, cycles + 1);
    // same seed, same run
    let again = wcec(&["run", s(&prog), "--model", s(&model), "--inputs", "rand16", "--threads", "2"]);
    assert_eq!(stdout(&again), stdout(&o));
}

#[test]
fn short_input_file_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", MODEL);
    let prog = write(dir.path(), "p.asm", "in r1\nin r2\nadd r3, r1, r2\nout r3\nhalt\n");
    let words = write(dir.path(), "w.txt", "0x10\n");
    let o = wcec(&["run", s(&prog), "--model", s(&model), "--inputs", s(&words)]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("exhausted"));
    let words = write(dir.path(), "w.txt", "0x10 7\n");
    let o = wcec(&["run", s(&prog), "--model", s(&model), "--inputs", s(&words)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn bench_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", MODEL);
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = wcec(&[
            "bench", "--table", "3", "--model", s(&model), "--out", s(&out), "--threads", "2", "--window", "2000",
            "--runs", "2", "--seed", seed,
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        std::fs::read_to_string(out).unwrap()
    };
    let a = run("a.csv", "7");
    assert_eq!(a, run("b.csv", "7"));
    assert_ne!(a, run("c.csv", "8"));
    assert!(a.starts_with("instruction,1,2,3,4,5,6,7\nmaccs in dpath,"));
    assert_eq!(a.lines().count(), 5);
}

#[test]
fn bad_model_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", r#"{"base_power_mw": 200, "cycle_time_ns": 2.5, "opcodes": {}}"#);
    let prog = fir(dir.path(), "add", &[]);
    let o = wcec(&["wcec", s(&prog), "--model", s(&model)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model"), "{}", stderr(&o));
}
