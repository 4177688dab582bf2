//! One PASS/FAIL line per acceptance criterion.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use hcg::{run_experiment, validate_config};
use hcg_core::geometry::{curvature, curvature_derivatives, ricci, LocalGeometry};
use hcg_core::lab::{slice_distance, vsi_sweep, LevelSetProbe, VSI_TOL};
use hcg_core::model::{build_model_in_frame, singer_profile};
use hcg_core::zoo::*;
use hcg_core::{weyl_scalars, Jet, MetricField, Point, Signature, WeylInvariant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

/// Criteria that cannot be met as stated; they still print FAIL.
const UNATTAINABLE: &[usize] = &[3];

struct Check {
    ok: bool,
    notes: Vec<String>,
}

impl Check {
    fn new() -> Self {
        Check { ok: true, notes: Vec::new() }
    }

    fn require(&mut self, cond: bool, what: impl Into<String>) {
        if !cond {
            self.ok = false;
            self.notes.push(what.into());
        }
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn walker_points(seed: u64) -> Vec<Point> {
    let mut r = rng(seed);
    (0..25)
        .map(|_| Point::from([r.random_range(-1.0..1.0), r.random_range(0.5..2.0), r.random_range(-1.0..1.0)]))
        .collect()
}

fn oracle_equivalence() -> Check {
    let mut c = Check::new();
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for (i, f) in walker_presets().iter().enumerate() {
        let g = walker_metric(f);
        for p in walker_points(100 + i as u64) {
            let levels = curvature_derivatives(&g, &p, 2).unwrap();
            let oracle = walker_curvature_oracle(f, &p).unwrap();
            for (l, engine) in levels.iter().enumerate() {
                let exact = oracle.tensor(l);
                worst = worst.max(engine.max_abs_diff(&exact) / exact.max_abs().max(1e-12));
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    c.require(worst <= 1e-9, format!("relative error {worst:e}"));
    c.require(secs <= 10.0, format!("runtime {secs:.1} s"));
    c.notes.push(format!("max rel err {worst:.1e}, {secs:.2} s"));
    c
}

fn vsi() -> Check {
    let mut c = Check::new();
    for (i, f) in walker_presets().iter().enumerate() {
        let r = vsi_sweep(&walker_metric(f), &walker_points(200 + i as u64), VSI_TOL).unwrap();
        c.require(r.is_vsi, format!("{} max {:e}", f.name(), r.max_abs));
    }
    let sphere = zoo_metric("warped.sphere", &Params::new()).unwrap();
    let pts: Vec<Point> = (0..5).map(|i| Point::from([0.0, 0.5 + 0.2 * i as f64, 0.3])).collect();
    let r = vsi_sweep(&sphere.metric, &pts, VSI_TOL).unwrap();
    c.require(!r.is_vsi, "warped.sphere not flagged");
    c
}

fn warped_formulas() -> Check {
    let mut c = Check::new();
    let pts = [
        Point::from([0.0, 0.0, 0.0]),
        Point::from([0.7, 0.3, -0.2]),
        Point::from([-1.2, -0.5, 0.9]),
        Point::from([2.0, 1.5, 0.4]),
    ];
    for base in [unit_sphere(), flat_plane()] {
        for t in [0.0, 0.5, 1.0, 2.0] {
            let spec = QStructureSpec::warped(base.clone(), t);
            let g = q_structure_metric(&spec).unwrap();
            for p in &pts {
                let (rho, tau) = ricci(&g, p).unwrap();
                let (rho_x, tau_x) = warped_ricci_oracle(&spec, p).unwrap();
                c.require(rho.max_abs_diff(&rho_x) <= 1e-9 * rho_x.max_abs().max(1.0), format!("ρ t={t}"));
                c.require((tau - tau_x).abs() <= 1e-9 * tau_x.abs().max(1.0), format!("τ t={t}"));
            }
        }
    }
    let g = q_structure_metric(&QStructureSpec::warped(unit_sphere(), 2.0)).unwrap();
    let mut max_tau = 0.0f64;
    let mut max_r = 0.0f64;
    for p in &pts {
        max_tau = max_tau.max(ricci(&g, p).unwrap().1.abs());
        max_r = max_r.max(curvature(&g, p).unwrap().0.max_abs());
    }
    c.require(max_tau <= 1e-9, format!("τ at t=2: {max_tau:e}"));
    c.require(
        max_r > 1e-9,
        format!("R ≠ 0 at t=2 on S² not met: max|R| = {max_r:.1e}, the metric is the flat cone dr² + r²g_S²"),
    );
    c
}

fn frame_normalization() -> Check {
    let mut c = Check::new();
    for f in [WalkerFun::exp(1.0), WalkerFun::log(1.0), WalkerFun::power(3.0, 1.0)] {
        let g = walker_metric(&f);
        for p in walker_points(300).iter().take(10) {
            let fr = walker_frame(&f, p).unwrap();
            let m = build_model_in_frame(&g, p, 1, &fr.matrix()).unwrap();
            let l = fr.lambda;
            let tol = 1e-9 * l.abs().powi(3).max(1.0);
            let r0 = m.component(0).get(&[0, 1, 1, 0]);
            let r1x = m.component(1).get(&[0, 1, 1, 0, 0]);
            let r1y = m.component(1).get(&[0, 1, 1, 0, 1]);
            c.require(
                (r0 - fr.sign * l * l).abs() < tol && r1x.abs() < tol && (r1y - fr.sign * l.powi(3)).abs() < tol,
                format!("{} pushed model", f.name()),
            );
        }
    }
    for p in walker_points(400) {
        let cases = [
            (WalkerFun::exp(1.0), 1.0),
            (WalkerFun::log(1.0), 1.5),
            (WalkerFun::power(3.0, 1.0), 0.0),
            (WalkerFun::power(5.0, 1.0), 2.0 / 3.0),
        ];
        for (f, want) in cases {
            let got = homothety_invariant_c(&f, &p).unwrap();
            c.require((got - want).abs() <= 1e-10, format!("{} c = {got}", f.name()));
        }
    }
    c
}

fn configs() -> Vec<(String, Value)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/acceptance");
    let mut names: Vec<_> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    names
        .into_iter()
        .map(|path| {
            let cfg = validate_config(&std::fs::read_to_string(&path).unwrap(), None).unwrap();
            let out = run_experiment(&cfg).unwrap();
            let name = path.file_stem().unwrap().to_string_lossy().into_owned();
            (name, out.report)
        })
        .collect()
}

fn matching_verdicts(reports: &[(String, Value)], secs: f64) -> Check {
    let mut c = Check::new();
    c.require(reports.len() == 9, format!("{} configs", reports.len()));
    for (name, r) in reports {
        let expect = &r["config"]["expect_verdict"];
        c.require(r["verdict"] == *expect, format!("{name}: {} vs {expect}", r["verdict"]));
    }
    let get = |n: &str| &reports.iter().find(|(name, _)| name == n).unwrap().1;
    for n in ["log_homothety", "pow_homothety"] {
        let r = get(n);
        let yp = r["config"]["points"][0][1].as_f64().unwrap();
        for pair in r["results"]["pairs"].as_array().unwrap() {
            let yq = pair["q"][1].as_f64().unwrap();
            let lambda = pair["homothety"]["lambda"].as_f64().unwrap();
            c.require((lambda - yq / yp).abs() <= 1e-7, format!("{n}: λ = {lambda}, y_Q/y_P = {}", yq / yp));
            c.require(pair["isometry"]["verdict"] == "certified-failure", format!("{n}: isometry not certified failure"));
        }
    }
    let quad = get("quad_exp_match");
    for pair in quad["results"]["pairs"].as_array().unwrap() {
        c.require(pair["homothety"]["verdict"] == "certified-failure", "quad k=1 homothety not certified failure");
    }
    for pair in get("gaussian_variable")["results"]["pairs"].as_array().unwrap() {
        let levels = pair["levels"].as_array().unwrap();
        let ok = levels[..3].iter().all(|l| l["verdict"] == "success") && levels[3]["verdict"] == "certified-failure";
        c.require(ok, "gaussian level pattern");
    }
    c.require(secs <= 60.0, format!("runtime {secs:.1} s"));
    c.notes.push(format!("9 configs in {secs:.1} s"));
    c
}

fn homothety_actions() -> Check {
    let mut c = Check::new();
    let tol = 1e-10;
    let mut r = rng(11);
    for _ in 0..10 {
        let a = r.random_range(0.3..2.0);
        let g = walker_metric(&WalkerFun::exp(a));
        let map = walker_exp_isometry(a, r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        let res = map_residual(&g, &map, 1.0, &walker_points(12)).unwrap();
        c.require(res <= tol, format!("exp isometry a={a}: {res:e}"));
    }
    let g = walker_metric(&WalkerFun::log(1.0));
    for _ in 0..10 {
        let l = r.random_range(0.3..3.0);
        let map = walker_log_homothety(l, r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        let res = map_residual(&g, &map, l, &walker_points(14)).unwrap();
        c.require(res <= tol, format!("log homothety λ={l}: {res:e}"));
    }
    for _ in 0..10 {
        let e = [3.0, -1.0, 0.5, 5.0][r.random_range(0..4)];
        let g = walker_metric(&WalkerFun::power(e, 1.0));
        let l = r.random_range(0.3..3.0);
        let map = walker_power_homothety(e, l, r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        let res = map_residual(&g, &map, l, &walker_points(15)).unwrap();
        c.require(res <= tol, format!("power homothety ε={e} λ={l}: {res:e}"));
    }
    c
}

fn slices(reports: &[(String, Value)]) -> Check {
    let mut c = Check::new();
    let r = &reports.iter().find(|(n, _)| n == "sphere_slice").unwrap().1["results"];
    for k in r["kappa"].as_array().unwrap() {
        let k = k.as_f64().unwrap();
        c.require((k - 2.0).abs() <= 1e-3, format!("κ = {k}"));
    }
    let inc = &r["incompleteness"];
    c.require(
        inc["kind"] == "finite" && (inc["length"].as_f64().unwrap_or(f64::NAN) - 2.0).abs() <= 1e-3,
        format!("incompleteness {inc}"),
    );
    let g = zoo_metric("warped.sphere", &Params::new()).unwrap().metric;
    let probe = LevelSetProbe::new(&g, WeylInvariant::Tau, Point::from([0.0, 0.0, 0.0])).unwrap();
    let signed = |s: f64| {
        let d = slice_distance(&g, &probe, 1.0, s).unwrap();
        if s >= 1.0 { d } else { -d }
    };
    for (s1, s2) in [(1.5, 2.0), (0.8, 1.6), (2.2, 0.7)] {
        let gap = signed(s1 * s2) - signed(s1) - s1 * signed(s2);
        c.require(gap.abs() <= 1e-3, format!("additivity ({s1}, {s2}): {gap:e}"));
    }
    c
}

fn operator_form(reports: &[(String, Value)]) -> Check {
    let mut c = Check::new();
    let mut count = 0;
    for (name, r) in reports {
        let Some(pairs) = r["results"]["pairs"].as_array() else { continue };
        for pair in pairs {
            let h = &pair["homothety"];
            if h["verdict"] == "success" {
                count += 1;
                let res = h["operator_check"].as_f64().unwrap_or(f64::INFINITY);
                c.require(res <= 1e-8, format!("{name}: {res:e}"));
            }
        }
    }
    c.require(count > 0, "no successful homothety matches");
    c.notes.push(format!("{count} matches checked"));
    c
}

fn singer() -> Check {
    let mut c = Check::new();
    for f in walker_presets() {
        let g = walker_metric(&f);
        let profiles: Vec<_> = walker_points(900).iter().take(5).map(|p| singer_profile(&g, p, 3).unwrap()).collect();
        for pr in &profiles {
            c.require(pr.dims[0] <= 4, format!("{} d0 = {}", f.name(), pr.dims[0]));
            c.require(pr.dims.windows(2).all(|w| w[1] <= w[0]), format!("{} chain {:?}", f.name(), pr.dims));
        }
        if ["exp(y)", "ln(y)", "y^3"].contains(&f.name()) {
            c.require(profiles.windows(2).all(|w| w[0] == w[1]), format!("{} varies", f.name()));
        }
    }
    let sym = singer_profile(&walker_metric(&WalkerFun::symmetric()), &Point::from([0.0, 1.0, 0.0]), 3).unwrap();
    c.require(sym.singer_number == 0, format!("y² singer number {}", sym.singer_number));
    c
}

fn generic_riemannian() -> MetricField {
    MetricField::new(
        "generic4",
        Signature::riemannian(4),
        |c: &[Jet]| {
            let mut out = Vec::with_capacity(16);
            for i in 0..4 {
                for j in 0..4 {
                    let v = if i == j {
                        (&c[i] * &c[(i + 1) % 4]).scale(0.2).sin().add_scalar(2.0 + i as f64)
                    } else {
                        (&c[i.min(j)] + &c[i.max(j)].scale(0.5)).scale(0.1).cos().scale(0.3)
                    };
                    out.push(v);
                }
            }
            out
        },
        |p| p.iter().all(|v| v.abs() < 2.0),
    )
}

fn draw(preset: usize, r: &mut ChaCha8Rng) -> (MetricField, Point) {
    let walkers = walker_presets();
    let mut u = |a: f64, b: f64| r.random_range(a..b);
    if preset < walkers.len() {
        return (walker_metric(&walkers[preset]), Point::from([u(-1.0, 1.0), u(0.5, 2.0), u(-1.0, 1.0)]));
    }
    let p3 = Point::from([u(-1.0, 1.0), u(-1.0, 1.0), u(-1.0, 1.0)]);
    match preset - walkers.len() {
        0 => (q_structure_metric(&QStructureSpec::warped(unit_sphere(), 1.0)).unwrap(), p3),
        1 => (q_structure_metric(&QStructureSpec::warped(unit_sphere(), 0.5)).unwrap(), p3),
        2 => (
            q_structure_metric(&QStructureSpec::warped(flat_plane(), 1.0).with_constant_theta(vec![0.6, 0.0])).unwrap(),
            p3,
        ),
        _ => (generic_riemannian(), Point::from([u(-1.0, 1.0), u(-1.0, 1.0), u(-1.0, 1.0), u(-1.0, 1.0)])),
    }
}

fn property_suites() -> Check {
    let mut c = Check::new();
    let mut r = rng(2024);
    let n_presets = walker_presets().len() + 4;
    let mut bad = 0;
    for _ in 0..1000 {
        let preset = r.random_range(0..n_presets);
        let (g, p) = draw(preset, &mut r);
        let lv = curvature_derivatives(&g, &p, 1).unwrap();
        let (rt, dr) = (&lv[0], &lv[1]);
        let m = g.dim();
        let tol = 1e-10 * rt.max_abs().max(1.0);
        let dtol = 1e-9 * dr.max_abs().max(1.0);
        let mut ok = true;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for l in 0..m {
                        let v = rt.get(&[i, j, k, l]);
                        ok &= (v + rt.get(&[j, i, k, l])).abs() <= tol;
                        ok &= (v + rt.get(&[i, j, l, k])).abs() <= tol;
                        ok &= (v - rt.get(&[k, l, i, j])).abs() <= tol;
                        ok &= (v + rt.get(&[i, k, l, j]) + rt.get(&[i, l, j, k])).abs() <= tol;
                        for n in 0..m {
                            let b2 = dr.get(&[i, j, k, l, n]) + dr.get(&[i, j, l, n, k]) + dr.get(&[i, j, n, k, l]);
                            ok &= b2.abs() <= dtol;
                        }
                    }
                }
            }
        }
        let geo = LocalGeometry::new(&g, &p, 2).unwrap();
        let dg = geo.covariant_derivative(&geo.metric_tensor()).unwrap().at_point();
        ok &= dg.max_abs() <= 1e-12 * geo.metric().amax().max(1.0);
        if !ok {
            bad += 1;
        }
    }
    c.require(bad == 0, format!("{bad} of 1000 draws violate symmetries, Bianchi or ∇g = 0"));
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let preset = r.random_range(walker_presets().len()..n_presets);
        let (g, p) = draw(preset, &mut r);
        let base = weyl_scalars(&g, &p).unwrap();
        for s in [0.5, 2.0, 3.0] {
            let scaled = weyl_scalars(&g.scaled(s), &p).unwrap();
            for w in WeylInvariant::ALL {
                let f = s.powi(-(w.order() as i32));
                let expected = f * base.get(w);
                let floor = 1e-6 * base.max_abs() * f;
                let err = (scaled.get(w) - expected).abs() / expected.abs().max(floor).max(1e-300);
                worst = worst.max(err);
            }
        }
    }
    c.require(worst <= 1e-9, format!("scaling law rel err {worst:e}"));
    c
}

fn main() -> ExitCode {
    let t0 = Instant::now();
    let reports = configs();
    let config_secs = t0.elapsed().as_secs_f64();
    let results = [
        (1, "oracle equivalence", oracle_equivalence()),
        (2, "VSI presets, warped sphere non-VSI", vsi()),
        (3, "warped Ricci/scalar formulas and t = 2 boundary", warped_formulas()),
        (4, "frame normalization and homothety constants", frame_normalization()),
        (5, "matching verdicts of the config harness", matching_verdicts(&reports, config_secs)),
        (6, "explicit isometries and homotheties", homothety_actions()),
        (7, "slice distances, incompleteness, additivity", slices(&reports)),
        (8, "operator-form check on homothety matches", operator_form(&reports)),
        (9, "Singer profiles", singer()),
        (10, "property suites and scaling law", property_suites()),
    ];
    let mut unexpected = Vec::new();
    for (n, name, c) in &results {
        let tag = if c.ok { "PASS" } else { "FAIL" };
        let notes = if c.notes.is_empty() { String::new() } else { format!(" ({})", c.notes.join("; ")) };
        println!("criterion {n:>2} {tag}: {name}{notes}");
        if !c.ok && !UNATTAINABLE.contains(n) {
            unexpected.push(*n);
        }
    }
    let passed = results.iter().filter(|r| r.2.ok).count();
    println!("{passed}/{} criteria pass", results.len());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
