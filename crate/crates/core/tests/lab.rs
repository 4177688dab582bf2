mod common;

use std::f64::consts::PI;

use hcg_core::lab::*;
use hcg_core::model::build_model_in_frame;
use hcg_core::zoo::*;
use hcg_core::{weyl_scalars, Error, Jet, MetricField, Point, Signature, WeylInvariant};
use nalgebra::DMatrix;
use statrs::function::erf::erf;

fn sphere(t: f64) -> MetricField {
    q_structure_metric(&QStructureSpec::warped(unit_sphere(), t)).unwrap()
}

fn origin() -> Point {
    Point::from([0.0, 0.0, 0.0])
}

#[test]
fn vsi_sweep_verdicts() {
    let flat = MetricField::flat(Signature::lorentzian(3));
    let r = vsi_sweep(&flat, &[origin()], VSI_TOL).unwrap();
    assert!(r.is_vsi);
    assert_eq!(r.max_abs, 0.0);
    let log = walker_metric(&WalkerFun::log(1.0));
    assert!(vsi_sweep(&log, &common::walker_points(1), VSI_TOL).unwrap().is_vsi);
    let r = vsi_sweep(&sphere(1.0), &[origin()], VSI_TOL).unwrap();
    assert!(!r.is_vsi);
}

#[test]
fn mu_on_the_warped_sphere() {
    let g = sphere(1.0);
    let probe = LevelSetProbe::new(&g, WeylInvariant::Tau, origin()).unwrap();
    assert_eq!(mu_level(&probe, &g, &origin()).unwrap(), 1.0);
    let mu = mu_level(&probe, &g, &Point::from([2.0, 0.3, -0.1])).unwrap();
    assert!((mu - std::f64::consts::E).abs() < 1e-10, "{mu}");
    let g2 = g.scaled(9.0);
    let p2 = LevelSetProbe::new(&g2, WeylInvariant::Tau, origin()).unwrap();
    let q = Point::from([-0.7, 0.4, 0.2]);
    assert!((mu_level(&p2, &g2, &q).unwrap() - mu_level(&probe, &g, &q).unwrap()).abs() < 1e-10);
}

#[test]
fn mu_of_vanishing_invariant_is_an_error() {
    let g = walker_metric(&WalkerFun::exp(1.0));
    let err = LevelSetProbe::new(&g, WeylInvariant::Tau, Point::from([0.0, 1.0, 0.0])).unwrap_err();
    assert!(matches!(err, Error::VanishingInvariant { ref name, .. } if name == "tau"));
}

#[test]
fn invariants_scale_under_the_translation_homothety() {
    let t = 1.0;
    let g = sphere(t);
    let p = Point::from([0.2, 0.3, -0.4]);
    for a in [-0.8, 0.5, 1.3] {
        let q = Point::from([0.2 + a, 0.3, -0.4]);
        let lambda = (t * a / 2.0f64).exp();
        let (wp, wq) = (weyl_scalars(&g, &p).unwrap(), weyl_scalars(&g, &q).unwrap());
        for w in WeylInvariant::ALL {
            let expected = lambda.powi(-(w.order() as i32)) * wp.get(w);
            assert!((wq.get(w) - expected).abs() <= 1e-8 * expected.abs().max(1e-12), "{w} a={a}");
        }
    }
}

#[test]
fn flat_geodesic_is_a_straight_line() {
    let g = MetricField::flat(Signature::riemannian(2));
    let v = vec![0.6, 0.8];
    let path = geodesic_integrate(&g, &GeodesicState::new(Point::from([1.0, -1.0]), v), 3.0, GEODESIC_STEP).unwrap();
    let end = path.last().unwrap();
    assert!((end.point.coords()[0] - 2.8).abs() < 1e-12);
    assert!((end.point.coords()[1] - 1.4).abs() < 1e-12);
    assert!((end.arc_length - 3.0).abs() < 1e-12);
}

#[test]
fn equator_closes_after_two_pi() {
    let g = unit_sphere();
    let s0 = GeodesicState::new(Point::from([1.0, 0.0]), vec![0.0, 1.0]);
    let path = geodesic_integrate(&g, &s0, 2.0 * PI, GEODESIC_STEP).unwrap();
    let end = &path.last().unwrap().point;
    assert!((end.coords()[0] - 1.0).abs() < 1e-6 && end.coords()[1].abs() < 1e-6, "{end:?}");
    let drift = path
        .iter()
        .map(|s| (s.speed_sq(&g).unwrap() - 1.0).abs())
        .fold(0.0, f64::max);
    assert!(drift <= 1e-7 * 2.0 * PI, "{drift:e}");
}

#[test]
fn radial_geodesic_arc_length() {
    let g = sphere(1.0);
    let s0 = GeodesicState::new(Point::from([0.0, 0.3, 0.2]), vec![1.0, 0.0, 0.0]);
    let len = 2.0 * (0.5f64.exp() - 1.0);
    let path = geodesic_integrate(&g, &s0, len, GEODESIC_STEP).unwrap();
    let end = path.last().unwrap();
    assert!((end.point.coords()[0] - 1.0).abs() < 1e-6);
    assert!(end.point.coords()[1..].iter().zip([0.3, 0.2]).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn rk4_converges_at_fourth_order() {
    let g = unit_sphere();
    let s0 = GeodesicState::new(Point::from([1.0, 0.0]), vec![0.0, 1.0]);
    let err = |h: f64| {
        let end = geodesic_integrate(&g, &s0, PI, h).unwrap().last().unwrap().point.clone();
        ((end.coords()[0] + 1.0).powi(2) + end.coords()[1].powi(2)).sqrt()
    };
    let (e1, e2) = (err(0.04), err(0.02));
    let ratio = e1 / e2;
    assert!((10.0..24.0).contains(&ratio), "{e1:e} {e2:e} {ratio}");
}

#[test]
fn geodesic_reports_domain_exit() {
    let g = unit_sphere();
    let s0 = GeodesicState::new(Point::from([9.0, 0.0]), vec![20.0, 0.0]);
    assert!(matches!(
        geodesic_integrate(&g, &s0, 1.0, GEODESIC_STEP),
        Err(Error::DomainExit { .. })
    ));
}

fn sphere_probe(t: f64, base: Point) -> (MetricField, LevelSetProbe) {
    let g = sphere(t);
    let probe = LevelSetProbe::new(&g, WeylInvariant::Tau, base).unwrap();
    (g, probe)
}

#[test]
fn slice_distances_are_linear_in_the_level() {
    let (g, probe) = sphere_probe(1.0, origin());
    assert_eq!(slice_distance(&g, &probe, 1.7, 1.7).unwrap(), 0.0);
    assert!((slice_distance(&g, &probe, 1.0, 2.0).unwrap() - 2.0).abs() < 1e-3);
    let pairs = [(1.0, 2.0), (0.5, 1.5), (2.0, 3.0), (0.3, 0.9), (1.2, 2.5)];
    let ks = kappa_estimates(&g, &probe, &pairs).unwrap();
    for k in &ks {
        assert!((k - 2.0).abs() < 1e-3, "{ks:?}");
    }
    let spread = ks.iter().fold(0.0f64, |m, k| m.max(*k)) - ks.iter().fold(f64::MAX, |m, k| m.min(*k));
    assert!(spread / 2.0 <= 1e-3);
}

#[test]
fn slice_distance_from_a_shifted_base() {
    let (g, probe) = sphere_probe(1.0, Point::from([2.0 * 2f64.ln(), 0.1, 0.1]));
    // μ here is measured against x₀ = 2 ln 2, so M₂ and M₃ of the original base are levels 1 and 3/2
    let d = slice_distance(&g, &probe, 1.0, 1.5).unwrap();
    assert!((d - 2.0).abs() < 1e-3, "{d}");
}

#[test]
fn slice_additivity() {
    let (g, probe) = sphere_probe(1.0, origin());
    for (s1, s2) in [(1.5, 2.0), (0.8, 1.6), (2.2, 0.7)] {
        let lhs = slice_distance(&g, &probe, 1.0, s1 * s2).unwrap();
        let rhs = slice_distance(&g, &probe, 1.0, s1).unwrap() + s1 * slice_distance(&g, &probe, 1.0, s2).unwrap();
        let signed = |c: f64| if c >= 1.0 { 1.0 } else { -1.0 };
        // distances are unsigned; compare signed arc lengths
        let lhs_s = signed(s1 * s2) * lhs;
        let rhs_s = signed(s1) * slice_distance(&g, &probe, 1.0, s1).unwrap()
            + s1 * signed(s2) * slice_distance(&g, &probe, 1.0, s2).unwrap();
        assert!((lhs_s - rhs_s).abs() < 1e-3, "{s1} {s2}: {lhs} vs {rhs}");
    }
}

#[test]
fn level_outside_reach_is_reported() {
    let (g, probe) = sphere_probe(1.0, origin());
    assert!(matches!(
        arc_to_level(&g, &probe, 50.0, GEODESIC_STEP, 5.0),
        Err(Error::LevelNotReached { .. })
    ));
}

#[test]
fn incompleteness_length_at_t_one() {
    let (g, probe) = sphere_probe(1.0, Point::from([0.0, 0.2, 0.1]));
    match incompleteness_probe(&g, &probe, GEODESIC_STEP).unwrap() {
        IncompletenessOutcome::Finite { length } => assert!((length - 2.0).abs() < 1e-3, "{length}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn incompleteness_length_at_t_two() {
    // every invariant vanishes at t = 2, so μ comes from e^{-tx}, which has τ's weight
    let g = sphere(2.0);
    let base = Point::from([0.0, 0.2, 0.1]);
    assert!(matches!(
        LevelSetProbe::new(&g, WeylInvariant::Tau, base.clone()),
        Err(Error::VanishingInvariant { .. })
    ));
    let probe = LevelSetProbe::custom(&g, "e^-2x", |c: &[Jet]| c[0].scale(-2.0).exp(), 2, base).unwrap();
    match incompleteness_probe(&g, &probe, GEODESIC_STEP).unwrap() {
        IncompletenessOutcome::Finite { length } => assert!((length - 1.0).abs() < 1e-3, "{length}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn flat_space_exhausts_the_budget() {
    let g = MetricField::flat(Signature::riemannian(3));
    let probe = LevelSetProbe::custom(&g, "e^-x", |c: &[Jet]| c[0].scale(-1.0).exp(), 2, origin()).unwrap();
    assert!(matches!(
        incompleteness_probe(&g, &probe, GEODESIC_STEP).unwrap(),
        IncompletenessOutcome::ExceededBudget { .. }
    ));
}

fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

#[test]
fn inverse_square_passes_the_first_branch() {
    let c = classify_walker_alpha(&Alpha::inverse_square(4.0, 1.0), &grid(1.5, 3.0, 20)).unwrap();
    assert!(c.branch1_residual <= 1e-9, "{c:?}");
    assert!((c.c3 - 1.0).abs() < 1e-9);
}

#[test]
fn exponential_ratio_is_constant_one() {
    let c = classify_walker_alpha(&Alpha::exp(), &grid(-1.0, 1.0, 20)).unwrap();
    assert!((c.ratio_mean - 1.0).abs() < 1e-14);
    assert!(c.ratio_variance < 1e-24);
}

#[test]
fn shifted_parabola_is_rejected() {
    let alpha = Alpha::new("x^2+1", |x: &Jet| (x * x).add_scalar(1.0), |_| true);
    let c = classify_walker_alpha(&alpha, &grid(1.0, 2.0, 20)).unwrap();
    assert!(c.branch1_residual > 1e-2, "{c:?}");
    let err = classify_walker_alpha(&alpha, &[0.0]).unwrap_err();
    assert!(matches!(err, Error::VanishingDerivative { .. }));
}

#[test]
fn gaussian_construction_values() {
    for k in 1..=4 {
        let a = variable_ch_construct(k).unwrap();
        assert_eq!(a.derivative(k, 0.0).unwrap(), 1.0);
        assert!((a.derivative(k - 1, 0.0).unwrap() - PI.sqrt() / 2.0).abs() < 1e-10);
        if k >= 2 {
            assert!((a.derivative(k - 2, 0.0).unwrap() - 0.5).abs() < 1e-10);
        }
    }
    let a = variable_ch_construct(3).unwrap();
    for x in [-2.0, -0.5, 0.7, 1.9] {
        let exact = PI.sqrt() / 2.0 * (1.0 + erf(x));
        assert!((a.derivative(2, x).unwrap() - exact).abs() < 1e-10, "{x}");
    }
}

#[test]
fn gaussian_construction_integrates_its_derivative() {
    let a = variable_ch_construct(3).unwrap();
    for l in 0..3 {
        for (lo, hi) in [(-1.0, 0.0), (0.0, 1.5)] {
            let d = |x: f64| a.derivative(l + 1, x).unwrap();
            let integral = adaptive_simpson(&d, lo, hi, 1e-11).unwrap();
            let diff = a.derivative(l, hi).unwrap() - a.derivative(l, lo).unwrap();
            assert!((integral - diff).abs() < 1e-8, "ℓ={l}: {integral} vs {diff}");
        }
    }
}

#[test]
fn gaussian_frame_normalizes_each_level() {
    let k = 2;
    let a = variable_ch_construct(k).unwrap();
    let f = WalkerFun::quadratic(a.alpha());
    let g = walker_metric(&f);
    for x in [-1.0, 0.0, 1.0] {
        let p = Point::from([x, 0.4, 0.0]);
        for l in 0..=k {
            let a11 = a.frame_scale(l, x).unwrap();
            let lambda = a11 * a.derivative(0, x).unwrap().sqrt();
            let (fr, _) = walker_quadratic_frame(&f, &p, lambda).unwrap();
            let model = build_model_in_frame(&g, &p, l, &fr.matrix()).unwrap();
            let idx: Vec<usize> = [0, 1, 1, 0].into_iter().chain(std::iter::repeat_n(0, l)).collect();
            let v = model.component(l).get(&idx);
            assert!((v - 1.0).abs() < 1e-7, "x={x} ℓ={l}: {v}");
        }
    }
}

#[test]
fn characters() {
    let v = character_eval(&CharacterSpec::new(vec![1.0]).unwrap(), &DMatrix::from_element(1, 1, 5.0)).unwrap();
    assert_eq!((v.lambda, v.split), (5.0, true));
    let spec = CharacterSpec::new(vec![1.0, -1.0]).unwrap();
    let v = character_eval(&spec, &DMatrix::from_diagonal(&nalgebra::dvector![2.0, 7.0])).unwrap();
    assert!(!v.split);
    let v = character_eval(
        &CharacterSpec::new(vec![2.0, 1.0]).unwrap(),
        &DMatrix::from_diagonal(&nalgebra::dvector![2.0, 3.0]),
    )
    .unwrap();
    assert!((v.lambda - 12.0).abs() < 1e-12);
    let bad = DMatrix::from_row_slice(2, 2, &[1.0, 4.0, 0.0, -2.0]);
    assert!(matches!(character_eval(&spec, &bad), Err(Error::NonPositiveDiagonal { index: 1, .. })));
    assert!(CharacterSpec::new(vec![0.0, 0.0]).is_err());
}

#[test]
fn characters_are_multiplicative() {
    let mut r = common::rng(77);
    use rand::Rng;
    for _ in 0..50 {
        let n = r.random_range(1..5);
        let spec = CharacterSpec::new((0..n).map(|_| r.random_range(-2.0..2.0)).collect()).unwrap();
        let upper = |r: &mut rand_chacha::ChaCha8Rng| {
            DMatrix::from_fn(n, n, |i, j| match i.cmp(&j) {
                std::cmp::Ordering::Less => r.random_range(-3.0..3.0),
                std::cmp::Ordering::Equal => r.random_range(0.2..4.0),
                std::cmp::Ordering::Greater => 0.0,
            })
        };
        let (h1, h2) = (upper(&mut r), upper(&mut r));
        let l12 = character_eval(&spec, &(&h1 * &h2)).unwrap().lambda;
        let l1 = character_eval(&spec, &h1).unwrap().lambda;
        let l2 = character_eval(&spec, &h2).unwrap().lambda;
        assert!((l12 - l1 * l2).abs() <= 1e-12 * l12.abs());
    }
}
