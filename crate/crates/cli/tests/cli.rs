use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pbc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pbc")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn analyze_piecewise_writes_report_and_manifest() {
    let d = tempfile::tempdir().unwrap();
    let o = pbc(&["analyze", "--map", "piecewise", "--out", &out_arg(d.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&d.path().join("analysis.json"));
    let a0 = r["thresholds"]["alpha0"].as_f64().unwrap();
    assert!((a0 - 0.54).abs() < 1e-3);
    let m = json(&d.path().join("manifest.json"));
    assert_eq!(m["command"], "analyze");
    let files: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|f| f["file"].as_str().unwrap()).collect();
    assert_eq!(files, vec!["analysis.json", "dc_trace.csv", "equilibria.csv"]);
    let trace = fs::read_to_string(d.path().join("dc_trace.csv")).unwrap();
    assert!(trace.starts_with("k,d_k,c_k\n"));
    let leftovers: Vec<_> = fs::read_dir(d.path()).unwrap().filter_map(|e| e.ok()).filter(|e| e.file_name().to_string_lossy().ends_with(".tmp")).collect();
    assert!(leftovers.is_empty());
}

#[test]
fn config_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let out = out_arg(d.path());
    assert_eq!(code(&pbc(&["analyze", "--map", "no-such-map", "--out", &out])), 2);
    assert_eq!(code(&pbc(&["analyze", "--out", &out])), 2);
    assert_eq!(code(&pbc(&["analyze", "--map", "ricker", "--out", &out])), 2);
    assert_eq!(code(&pbc(&["verify", "--only", "bogus", "--out", &out])), 2);
    assert_eq!(code(&pbc(&["simulate", "--map", "ricker2", "--alpha", "0.5", "--noise", "cauchy", "--runs", "3", "--out", &out])), 2);
    assert_eq!(code(&pbc(&["frobnicate"])), 2);
    let bad = d.path().join("bad.json");
    fs::write(&bad, r#"{"kind": "piecewise", "domain": [0, 1], "branches": [{"lo": 0, "hi": 1, "expr": "x +* 2"}]}"#).unwrap();
    assert_eq!(code(&pbc(&["analyze", "--map", bad.to_str().unwrap(), "--out", &out])), 2);
}

#[test]
fn analysis_errors_exit_3() {
    let d = tempfile::tempdir().unwrap();
    let out = out_arg(d.path());
    let o = pbc(&["analyze", "--map", "logistic", "--r", "0.5", "--out", &out]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let jump = d.path().join("jump.json");
    fs::write(
        &jump,
        r#"{"kind": "piecewise", "name": "jump", "domain": [0, 3],
            "branches": [{"lo": 0, "hi": 1.5, "expr": "x + 0.5*sin(pi*x)"}, {"lo": 1.5, "hi": 3, "expr": "x + 0.5*sin(pi*x) + 0.01"}]}"#,
    )
    .unwrap();
    let o = pbc(&["analyze", "--map", jump.to_str().unwrap(), "--out", &out]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("discontinuous"));
}

#[test]
fn failing_suite_exits_1() {
    let d = tempfile::tempdir().unwrap();
    let jump = d.path().join("jump.json");
    fs::write(
        &jump,
        r#"{"kind": "piecewise", "name": "jump", "domain": [0, 3],
            "branches": [{"lo": 0, "hi": 1.5, "expr": "x + 0.5*sin(pi*x)"}, {"lo": 1.5, "hi": 3, "expr": "x + 0.5*sin(pi*x) + 0.01"}]}"#,
    )
    .unwrap();
    let o = pbc(&["verify", "--map", jump.to_str().unwrap(), "--only", "continuity", "--out", &out_arg(d.path())]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("jump at x=1.5"));
    let r = json(&d.path().join("verify.json"));
    assert_eq!(r["all_passed"], false);
}

#[test]
fn verify_subset_passes() {
    let d = tempfile::tempdir().unwrap();
    let o = pbc(&["verify", "--only", "endpoints,ordering,reparametrization,sign-pattern", "--out", &out_arg(d.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn replay_reproduces_every_file() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = pbc(&[
        "bifurcate", "--map", "ricker2", "--ell", "0.15", "--n-alpha", "40", "--seed", "9", "--out", &out_arg(a.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let man = a.path().join("manifest.json");
    let o = pbc(&["--replay", man.to_str().unwrap(), "--out", &out_arg(b.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["diagram.csv", "diagram.svg", "bifurcation.json", "manifest.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn replay_detects_tampering() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = pbc(&["simulate", "--map", "ricker2", "--alpha", "0.5", "--ell", "0.1", "--runs", "20", "--out", &out_arg(a.path())]);
    assert_eq!(code(&o), 0);
    let man = a.path().join("manifest.json");
    let text = fs::read_to_string(&man).unwrap().replace("\"seed\": 42", "\"seed\": 43");
    fs::write(&man, text).unwrap();
    let o = pbc(&["--replay", man.to_str().unwrap(), "--out", &out_arg(b.path())]);
    assert_eq!(code(&o), 1);
}

#[test]
fn svg_is_stable_and_sized() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (d, threads) in [(&a, "1"), (&b, "2")] {
        let o = pbc(&["bifurcate", "--map", "piecewise", "--n-alpha", "50", "--threads", threads, "--out", &out_arg(d.path())]);
        assert_eq!(code(&o), 0);
    }
    let sa = fs::read(a.path().join("diagram.svg")).unwrap();
    assert_eq!(sa, fs::read(b.path().join("diagram.svg")).unwrap());
    let text = String::from_utf8(sa).unwrap();
    assert!(text.starts_with(r#"<svg xmlns="http://www.w3.org/2000/svg" width="1200" height="800""#));
    assert!(text.trim_end().ends_with("</svg>"));
    let csv = fs::read_to_string(a.path().join("diagram.csv")).unwrap();
    assert!(csv.starts_with("alpha,sample,x0_id,seed\n"));
}

#[test]
fn simulate_outputs_have_the_documented_columns() {
    let d = tempfile::tempdir().unwrap();
    let out = out_arg(d.path());
    let o = pbc(&["simulate", "--map", "piecewise", "--alpha", "0.59", "--x0", "0.9", "--format", "csv", "--out", &out]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("n,x,alpha\n0,0.9,\n"));
    let s = json(&d.path().join("simulate.json"));
    assert_eq!(s["outcome"].as_str().unwrap().split(':').next(), Some("two-cycle"));
    let o = pbc(&["simulate", "--map", "piecewise", "--alpha", "0.59", "--ell", "0.04", "--runs", "30", "--out", &out]);
    assert_eq!(code(&o), 0);
    let csv = fs::read_to_string(d.path().join("ensemble.csv")).unwrap();
    assert!(csv.starts_with("run_id,seed,outcome,limit,steps\n"));
    assert_eq!(csv.lines().count(), 31);
}

#[test]
fn builtin_and_parametric_ricker_agree() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&pbc(&["analyze", "--map", "ricker2", "--deterministic-only", "--out", &out_arg(a.path())])), 0);
    assert_eq!(
        code(&pbc(&["analyze", "--map", "ricker", "--r", "2.7", "--iterate", "2", "--deterministic-only", "--out", &out_arg(b.path())])),
        0
    );
    let ea = json(&a.path().join("analysis.json"))["analysis"]["equilibria"].clone();
    let eb = json(&b.path().join("analysis.json"))["analysis"]["equilibria"].clone();
    assert_eq!(ea, eb);
}

#[test]
fn map_file_round_trips() {
    let d = tempfile::tempdir().unwrap();
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../maps/piecewise.json");
    let o = pbc(&["analyze", "--map", path.to_str().unwrap(), "--format", "json", "--out", &out_arg(d.path())]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["thresholds"]["underline_alpha"].as_f64().unwrap() - 0.604).abs() < 5e-3);
}
