use std::path::{Path, PathBuf};
use std::process::Command;

use hcg::report::render;
use hcg::{run_experiment, validate_config};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hcg"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn report_of(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    let c = validate_config(&text, None).unwrap();
    render(&run_experiment(&c).unwrap().report)
}

#[test]
fn reports_match_goldens() {
    for name in ["log_vsi", "sphere_vsi"] {
        let got = report_of(&config(&format!("acceptance/{name}.cfg")));
        let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("tests/golden/{name}.json"));
        if std::env::var_os("HCG_BLESS").is_some_and(|v| !v.is_empty()) {
            std::fs::write(&golden, &got).unwrap();
        }
        let want = std::fs::read_to_string(&golden).unwrap();
        assert_eq!(got, want, "{name} differs from golden");
    }
}

#[test]
fn identical_configs_give_identical_bytes() {
    let a = report_of(&config("acceptance/log_homothety.cfg"));
    let b = report_of(&config("acceptance/log_homothety.cfg"));
    assert_eq!(a, b);
}

#[test]
fn reports_round_trip() {
    for name in ["acceptance/log_homothety.cfg", "acceptance/sphere_vsi.cfg", "examples/invsq_classify.cfg"] {
        let s = report_of(&config(name));
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(render(&v), s, "{name}");
        let obj = v.as_object().unwrap();
        let keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        assert_eq!(keys, ["config", "results", "timing", "verdict"]);
    }
}

#[test]
fn expected_verdict_gives_exit_zero_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let st = bin()
        .args(["vsi", "--config"])
        .arg(config("acceptance/log_vsi.cfg"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["verdict"], "vsi");
}

#[test]
fn verdict_mismatch_gives_exit_one_and_still_writes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    std::fs::write(
        &cfg,
        "command = vsi\nmetric.name = warped.sphere\npoints.list = 0, 0, 0\nexpect.verdict = vsi\n",
    )
    .unwrap();
    let out = dir.path().join("r.json");
    let st = bin().args(["run", "-c"]).arg(&cfg).arg("-o").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(1));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["verdict"], "not-vsi");
}

#[test]
fn config_errors_give_exit_two_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("command = vsi\nmetric.name = walker.cos\npoints.list = 0, 1, 0\n", "metric.name"),
        ("command = vsi\nmetric.name = walker.log\npoints.grid.x = 0:1\npoints.grid.y = 1:2:2\npoints.grid.xt = 0:0:1\n", "points.grid.x"),
        ("command = vsi\nmetric.name = walker.log\npoints.list = 0, -2, 0\n", "points.list"),
        ("command = vsi\nmetric.name = walker.log\npoints.list = 0, 1, 0\nlevel = 3\n", "level"),
    ];
    for (i, (text, key)) in cases.iter().enumerate() {
        let cfg = dir.path().join(format!("{i}.cfg"));
        std::fs::write(&cfg, text).unwrap();
        let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{text}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert!(err.contains(&format!("`{key}`")), "{key}: {err}");
    }
}

#[test]
fn command_line_overrides() {
    let out = bin()
        .args(["vsi", "--config"])
        .arg(config("acceptance/sphere_vsi.cfg"))
        .args(["--tol", "100", "--k", "1"])
        .output()
        .unwrap();
    // with a huge tolerance the sphere passes as VSI, which contradicts the expectation
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["config"]["tol"], 100.0);
    assert_eq!(v["config"]["level"], 1);
    let bad = bin()
        .args(["vsi", "--config"])
        .arg(config("acceptance/sphere_vsi.cfg"))
        .args(["--k", "3"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn every_numeric_field_is_finite() {
    fn walk(v: &Value) {
        match v {
            Value::Number(n) => assert!(n.as_f64().unwrap().is_finite()),
            Value::Array(a) => a.iter().for_each(walk),
            Value::Object(o) => o.values().for_each(walk),
            _ => {}
        }
    }
    for name in ["acceptance/log_vsi.cfg", "examples/log_singer.cfg"] {
        walk(&serde_json::from_str(&report_of(&config(name))).unwrap());
    }
}
