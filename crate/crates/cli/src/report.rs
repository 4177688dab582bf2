//! JSON report assembly. Floats are rounded to 12 significant digits and
//! keys are sorted, so the same config always yields the same bytes.

use serde_json::{json, Map, Value};

use crate::config::ExperimentConfig;

/// Rounds to 12 significant digits; non-finite values map to `null`.
pub fn num(v: f64) -> Value {
    if !v.is_finite() {
        return Value::Null;
    }
    let r: f64 = format!("{v:.11e}").parse().expect("formatted float parses");
    let r = if r == 0.0 { 0.0 } else { r };
    serde_json::Number::from_f64(r).map_or(Value::Null, Value::Number)
}

pub fn nums(vs: &[f64]) -> Value {
    Value::Array(vs.iter().map(|v| num(*v)).collect())
}

pub fn config_echo(c: &ExperimentConfig) -> Value {
    let params: Map<String, Value> = c
        .metric_params
        .iter()
        .map(|(k, v)| {
            let v = match v {
                hcg_core::zoo::Param::Num(x) => num(*x),
                hcg_core::zoo::Param::Word(w) => Value::String(w.clone()),
            };
            (k.clone(), v)
        })
        .collect();
    json!({
        "command": c.command.name(),
        "metric": { "name": c.metric_name, "params": params },
        "points": c.points.iter().map(|p| nums(p.coords())).collect::<Vec<_>>(),
        "level": c.level,
        "tol": num(c.tol),
        "expect_verdict": c.expect_verdict,
    })
}

/// The full report document.
pub fn assemble(c: &ExperimentConfig, results: Value, verdict: &str, elapsed_ms: Option<f64>) -> Value {
    json!({
        "config": config_echo(c),
        "results": results,
        "verdict": verdict,
        "timing": elapsed_ms.map(|ms| json!({ "wall_ms": num(ms) })),
    })
}

pub fn render(report: &Value) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}
