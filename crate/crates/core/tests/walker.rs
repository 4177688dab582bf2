mod common;

use common::{rel_err, walker_points};
use hcg_core::geometry::curvature_derivatives;
use hcg_core::lab::{vsi_sweep, VSI_TOL};
use hcg_core::model::build_model_in_frame;
use hcg_core::zoo::*;
use hcg_core::{Jet, Point, WeylInvariant};

#[test]
fn engine_matches_closed_form_curvature_on_presets() {
    for (i, f) in walker_presets().iter().enumerate() {
        let g = walker_metric(f);
        for p in walker_points(100 + i as u64) {
            let levels = curvature_derivatives(&g, &p, 2).unwrap();
            let oracle = walker_curvature_oracle(f, &p).unwrap();
            for (l, engine) in levels.iter().enumerate() {
                let exact = oracle.tensor(l);
                let scale = exact.max_abs().max(1e-12);
                let err = engine.max_abs_diff(&exact) / scale;
                assert!(err <= 1e-9, "{} level {l} at {:?}: {err:e}", f.name(), p);
            }
        }
    }
}

#[test]
fn oracle_components_for_exponential() {
    let f = WalkerFun::exp(1.0);
    let p = Point::from([0.2, 0.7, -0.4]);
    let o = walker_curvature_oracle(&f, &p).unwrap();
    let e = 0.7f64.exp();
    assert!(rel_err(o.r, e) < 1e-14);
    assert_eq!(o.dr_x, 0.0);
    assert!(rel_err(o.dr_y, e) < 1e-14);
    assert!(rel_err(o.ddr_yy, e) < 1e-14);
    assert!(rel_err(o.ddr_xx, -e * e) < 1e-14);
}

#[test]
fn presets_are_vsi_and_the_warped_sphere_is_not() {
    for (i, f) in walker_presets().iter().enumerate() {
        let r = vsi_sweep(&walker_metric(f), &walker_points(200 + i as u64), VSI_TOL).unwrap();
        assert!(r.is_vsi, "{}: {:e}", f.name(), r.max_abs);
    }
    let sphere = zoo_metric("warped.sphere", &Params::new()).unwrap();
    let pts: Vec<Point> = (0..5).map(|i| Point::from([0.0, 0.5 + 0.2 * i as f64, 0.3])).collect();
    let r = vsi_sweep(&sphere.metric, &pts, VSI_TOL).unwrap();
    assert!(!r.is_vsi);
    let tau = hcg_core::weyl_scalars(&sphere.metric, &pts[0]).unwrap().get(WeylInvariant::Tau);
    assert!((tau - 1.5).abs() < 1e-10, "{tau}");
}

#[test]
fn pushed_frame_gives_normal_form() {
    for f in [WalkerFun::exp(1.0), WalkerFun::log(1.0), WalkerFun::power(3.0, 1.0), WalkerFun::power(-1.0, 1.0)] {
        let g = walker_metric(&f);
        for p in walker_points(300).iter().take(10) {
            let fr = walker_frame(&f, p).unwrap();
            for r in fr.relations() {
                assert!(r.abs() < 1e-12);
            }
            let model = build_model_in_frame(&g, p, 1, &fr.matrix()).unwrap();
            assert!((model.gram() - WalkerFrame::gram()).amax() < 1e-12);
            let l = fr.lambda;
            let r0 = model.component(0).get(&[0, 1, 1, 0]);
            let r1x = model.component(1).get(&[0, 1, 1, 0, 0]);
            let r1y = model.component(1).get(&[0, 1, 1, 0, 1]);
            let tol = 1e-9 * l.abs().powi(3).max(1.0);
            assert!((r0 - fr.sign * l * l).abs() < tol, "{} R {r0} vs {}", f.name(), l * l);
            assert!(r1x.abs() < tol, "{} ∇R(ξ1) {r1x}", f.name());
            assert!((r1y - fr.sign * l.powi(3)).abs() < tol, "{} ∇R(ξ2) {r1y}", f.name());
        }
    }
}

#[test]
fn homothety_invariant_constants() {
    let pts = walker_points(400);
    for p in &pts {
        let c = homothety_invariant_c(&WalkerFun::exp(1.0), p).unwrap();
        assert!((c - 1.0).abs() <= 1e-10);
        let c = homothety_invariant_c(&WalkerFun::log(1.0), p).unwrap();
        assert!((c - 1.5).abs() <= 1e-10);
        for eps in [3.0, -1.0, 0.5, 5.0] {
            let c = homothety_invariant_c(&WalkerFun::power(eps, 1.0), p).unwrap();
            assert!((c - (eps - 3.0) / (eps - 2.0)).abs() <= 1e-10, "eps {eps}: {c}");
        }
    }
}

#[test]
fn quadratic_branch_frame_scales_level_one() {
    let f = WalkerFun::quadratic(Alpha::exp());
    let p = Point::from([0.4, 1.0, 0.0]);
    let (fr, c1) = walker_quadratic_frame(&f, &p, 2.0).unwrap();
    let model = build_model_in_frame(&walker_metric(&f), &p, 1, &fr.matrix()).unwrap();
    assert!((model.component(0).get(&[0, 1, 1, 0]) - 4.0).abs() < 1e-10);
    assert!((model.component(1).get(&[0, 1, 1, 0, 0]) - c1 * 8.0).abs() < 1e-9);
}

#[test]
fn frame_errors_on_degenerate_points() {
    let p = Point::from([0.0, 1.0, 0.0]);
    assert!(matches!(
        walker_frame(&WalkerFun::symmetric(), &p),
        Err(hcg_core::Error::VanishingThirdDerivative { .. })
    ));
    assert!(matches!(
        walker_frame(&WalkerFun::zero(), &p),
        Err(hcg_core::Error::VanishingSecondDerivative { .. })
    ));
}

#[test]
fn change_of_variables_reproduces_shifted_profile() {
    let beta = Alpha::new("sin", |x: &Jet| x.sin(), |_| true);
    let f = WalkerFun::quadratic(Alpha::exp());
    let r = change_of_variables_check(&f, &beta, &walker_points(500)).unwrap();
    assert!(r < 1e-12, "{r:e}");
}
