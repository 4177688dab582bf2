//! Executes a validated config against the engine.

use std::time::Instant;

use hcg_core::lab::{
    classify_walker_alpha, incompleteness_probe, kappa_estimates, vsi_sweep, IncompletenessOutcome, LevelSetProbe,
    GEODESIC_STEP,
};
use hcg_core::model::{
    build_model, homothety_match_with, isometry_match_with, operator_form_check, singer_profile,
    variable_match_with, CurvatureModel, HomothetyMatch, MatchVerdict, SearchOptions, VariableKind, FAILURE_TOL,
};
use hcg_core::zoo::{homothety_invariant_c, walker_frame};
use hcg_core::{weyl_scalars, Error, Point};
use serde_json::{json, Map, Value};

use crate::config::{Command, ExperimentConfig, VariableScale};
use crate::report::{assemble, num, nums};

/// A finished run: the report and its verdict.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub verdict: String,
    pub report: Value,
}

impl Outcome {
    /// `None` when the config carries no expectation.
    pub fn meets_expectation(&self, c: &ExperimentConfig) -> Option<bool> {
        c.expect_verdict.as_ref().map(|e| *e == self.verdict)
    }
}

pub fn run_experiment(c: &ExperimentConfig) -> Result<Outcome, Error> {
    let t0 = Instant::now();
    let (results, verdict) = match c.command {
        Command::Analyze => analyze(c)?,
        Command::Vsi => vsi(c)?,
        Command::Match => matching(c)?,
        Command::Variable => variable(c)?,
        Command::Classify => classify(c)?,
        Command::Slice => slice(c)?,
        Command::Singer => singer(c)?,
    };
    let elapsed = c.report_timing.then(|| t0.elapsed().as_secs_f64() * 1e3);
    Ok(Outcome {
        report: assemble(c, results, &verdict, elapsed),
        verdict,
    })
}

fn verdict_at(r: f64, tol: f64) -> MatchVerdict {
    if r <= tol {
        MatchVerdict::Success
    } else if r > FAILURE_TOL {
        MatchVerdict::CertifiedFailure
    } else {
        MatchVerdict::Inconclusive
    }
}

fn search_options(c: &ExperimentConfig) -> SearchOptions {
    SearchOptions {
        starts: c.match_starts,
        max_iterations: c.match_max_iterations,
        ..SearchOptions::default()
    }
}

fn match_json(hm: &HomothetyMatch, v: MatchVerdict) -> Value {
    json!({
        "verdict": v.name(),
        "lambda": num(hm.lambda),
        "residuals": nums(&hm.residuals),
        "max_residual": num(hm.max_residual()),
    })
}

fn analyze(c: &ExperimentConfig) -> Result<(Value, String), Error> {
    let g = &c.metric.metric;
    let mut rows = Vec::new();
    for p in &c.points {
        let inv: Map<String, Value> = weyl_scalars(g, p)?.iter().map(|(w, v)| (w.name().to_string(), num(v))).collect();
        let m = build_model(g, p, c.level)?;
        let norms: Vec<f64> = (0..=c.level).map(|l| m.norm(l)).collect();
        let mut row = json!({ "point": nums(p.coords()), "invariants": inv, "level_norms": nums(&norms) });
        if let Some(f) = &c.metric.walker {
            let lambda = walker_frame(f, p).ok().map(|fr| fr.lambda);
            let cc = homothety_invariant_c(f, p).ok();
            row["walker"] = json!({
                "lambda": lambda.map_or(Value::Null, num),
                "c122122": cc.map_or(Value::Null, num),
            });
        }
        rows.push(row);
    }
    Ok((json!({ "points": rows }), "ok".into()))
}

fn vsi(c: &ExperimentConfig) -> Result<(Value, String), Error> {
    let r = vsi_sweep(&c.metric.metric, &c.points, c.tol)?;
    let results = json!({
        "is_vsi": r.is_vsi,
        "max_abs": num(r.max_abs),
        "worst_invariant": r.worst_invariant.name(),
        "worst_point": nums(c.points[r.worst_sample].coords()),
        "samples": c.points.len(),
    });
    Ok((results, if r.is_vsi { "vsi" } else { "not-vsi" }.into()))
}

fn models(c: &ExperimentConfig, k: usize) -> Result<Vec<CurvatureModel>, Error> {
    c.points.iter().map(|p| build_model(&c.metric.metric, p, k)).collect()
}

fn pair_verdict(iso: MatchVerdict, homo: MatchVerdict) -> &'static str {
    use MatchVerdict::*;
    match (iso, homo) {
        (Success, _) => "isometry",
        (CertifiedFailure, Success) => "homothety-not-isometry",
        (_, CertifiedFailure) => "none",
        _ => "inconclusive",
    }
}

fn matching(c: &ExperimentConfig) -> Result<(Value, String), Error> {
    let ms = models(c, c.level)?;
    let opts = search_options(c);
    let mut pairs = Vec::new();
    let mut verdicts = Vec::new();
    for (q, m2) in c.points.iter().zip(&ms).skip(1) {
        let iso = isometry_match_with(&ms[0], m2, &opts)?;
        let homo = homothety_match_with(&ms[0], m2, &opts)?;
        let (vi, vh) = (verdict_at(iso.max_residual(), c.tol), verdict_at(homo.max_residual(), c.tol));
        let v = pair_verdict(vi, vh);
        let mut h = match_json(&homo, vh);
        if vh == MatchVerdict::Success {
            h["operator_check"] = num(operator_form_check(&homo, &ms[0], m2)?);
        }
        pairs.push(json!({
            "q": nums(q.coords()),
            "isometry": match_json(&iso, vi),
            "homothety": h,
            "verdict": v,
        }));
        verdicts.push(v);
    }
    // the weakest pair decides
    let order = ["none", "inconclusive", "homothety-not-isometry", "isometry"];
    let overall = order.iter().find(|o| verdicts.contains(o)).copied().unwrap_or("isometry");
    Ok((json!({ "p": nums(c.points[0].coords()), "pairs": pairs }), overall.into()))
}

fn variable(c: &ExperimentConfig) -> Result<(Value, String), Error> {
    let ms = models(c, c.variable_levels)?;
    let opts = search_options(c);
    let kind = match c.variable_scale {
        VariableScale::Fixed => VariableKind::FixedScale,
        VariableScale::Free => VariableKind::FreeScale,
    };
    let mut pairs = Vec::new();
    // (first failing level, any inconclusive)
    let mut first_fail: Option<usize> = None;
    let mut inconclusive = false;
    for (q, m2) in c.points.iter().zip(&ms).skip(1) {
        let per_level = variable_match_with(&ms[0], m2, kind, &opts)?;
        let mut levels = Vec::new();
        let mut pair_fail = None;
        for (l, hm) in per_level.iter().enumerate() {
            let v = verdict_at(hm.max_residual(), c.tol);
            match v {
                MatchVerdict::CertifiedFailure if pair_fail.is_none() => pair_fail = Some(l),
                MatchVerdict::Inconclusive if pair_fail.is_none() => inconclusive = true,
                _ => {}
            }
            levels.push(match_json(hm, v));
        }
        if let Some(l) = pair_fail {
            first_fail = Some(first_fail.map_or(l, |f| f.min(l)));
        }
        pairs.push(json!({ "q": nums(q.coords()), "levels": levels }));
    }
    let verdict = match (first_fail, inconclusive) {
        (Some(l), _) => format!("fails-at-{l}"),
        (None, true) => "inconclusive".into(),
        (None, false) => "all-levels".into(),
    };
    Ok((json!({ "p": nums(c.points[0].coords()), "pairs": pairs }), verdict))
}

fn spread(vs: &[f64]) -> f64 {
    let max = vs.iter().fold(f64::MIN, |a, b| a.max(*b));
    let min = vs.iter().fold(f64::MAX, |a, b| a.min(*b));
    let mean = vs.iter().sum::<f64>() / vs.len() as f64;
    (max - min) / mean.abs().max(1.0)
}

fn classify(c: &ExperimentConfig) -> Result<(Value, String), Error> {
    if let Some(alpha) = &c.metric.alpha {
        let xs: Vec<f64> = c.points.iter().map(|p| p.coords()[0]).collect();
        let a = classify_walker_alpha(alpha, &xs)?;
        let results = json!({
            "alpha": alpha.name(),
            "c3": num(a.c3),
            "branch1_residual": num(a.branch1_residual),
            "ratio_mean": num(a.ratio_mean),
            "ratio_variance": num(a.ratio_variance),
        });
        let v = if a.branch1_residual <= c.tol { "inverse-square" } else { "not-inverse-square" };
        return Ok((results, v.into()));
    }
    let Some(f) = &c.metric.walker else {
        return Err(Error::Unsupported(format!("classify needs a Walker metric, got `{}`", c.metric_name)));
    };
    let cs: Vec<f64> = c.points.iter().map(|p| homothety_invariant_c(f, p)).collect::<Result<_, _>>()?;
    let s = spread(&cs);
    let results = json!({ "c122122": nums(&cs), "relative_spread": num(s) });
    Ok((results, if s <= c.tol { "constant-c" } else { "varying-c" }.into()))
}

fn outcome_json(o: IncompletenessOutcome) -> Value {
    match o {
        IncompletenessOutcome::Finite { length } => json!({ "kind": "finite", "length": num(length) }),
        IncompletenessOutcome::ExceededBudget { budget } => json!({ "kind": "exceeded-budget", "budget": num(budget) }),
        IncompletenessOutcome::LeftChart { arc_length } => json!({ "kind": "left-chart", "arc_length": num(arc_length) }),
    }
}

fn slice(c: &ExperimentConfig) -> Result<(Value, String), Error> {
    let g = &c.metric.metric;
    let base: Point = c.points[0].clone();
    let probe = LevelSetProbe::new(g, c.slice_invariant, base.clone())?;
    let ks = kappa_estimates(g, &probe, &c.slice_pairs)?;
    let s = spread(&ks);
    let mean = ks.iter().sum::<f64>() / ks.len() as f64;
    let inc = incompleteness_probe(g, &probe, GEODESIC_STEP)?;
    let results = json!({
        "base": nums(base.coords()),
        "invariant": c.slice_invariant.name(),
        "pairs": c.slice_pairs.iter().map(|(a, b)| nums(&[*a, *b])).collect::<Vec<_>>(),
        "kappa": nums(&ks),
        "kappa_mean": num(mean),
        "relative_spread": num(s),
        "incompleteness": outcome_json(inc),
    });
    Ok((results, if s <= c.tol { "kappa-consistent" } else { "kappa-inconsistent" }.into()))
}

fn singer(c: &ExperimentConfig) -> Result<(Value, String), Error> {
    let profiles = c
        .points
        .iter()
        .map(|p| singer_profile(&c.metric.metric, p, c.singer_depth))
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<Value> = c
        .points
        .iter()
        .zip(&profiles)
        .map(|(p, pr)| json!({ "point": nums(p.coords()), "dims": pr.dims, "singer_number": pr.singer_number }))
        .collect();
    let constant = profiles.windows(2).all(|w| w[0] == w[1]);
    Ok((json!({ "points": rows }), if constant { "constant" } else { "varying" }.into()))
}
