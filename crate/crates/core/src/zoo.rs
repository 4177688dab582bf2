//! Metric families with closed-form curvature data: three-dimensional
//! Walker metrics, warped products `e^{tx}(dx² + g_N)` and their
//! Q-structure deformations, plus the explicit maps acting on them.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{homothety_pullback_residual, pullback_metric, ricci, LocalGeometry};
use crate::jet::{Jet, UnivariateTaylor};
use crate::metric::{MetricField, Point, Signature};
use crate::tensor::{multi_indices, JetTensor, Slot, TensorAtPoint};

type Fn2 = dyn Fn(&Jet, &Jet) -> Jet + Send + Sync;
type Domain2 = dyn Fn(f64, f64) -> bool + Send + Sync;
type Domain1 = dyn Fn(f64) -> bool + Send + Sync;

/// A function of one variable that can be composed with jets, with a domain.
#[derive(Clone)]
pub struct Alpha {
    name: String,
    fun: Arc<dyn UnivariateTaylor>,
    domain: Arc<Domain1>,
}

impl fmt::Debug for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Alpha({})", self.name)
    }
}

impl Alpha {
    pub fn new(
        name: impl Into<String>,
        fun: impl UnivariateTaylor + 'static,
        domain: impl Fn(f64) -> bool + Send + Sync + 'static,
    ) -> Self {
        Alpha {
            name: name.into(),
            fun: Arc::new(fun),
            domain: Arc::new(domain),
        }
    }

    pub fn exp() -> Self {
        Alpha::new("exp", |x: &Jet| x.exp(), |_| true)
    }

    /// `a (x − x₀)^{-2}` on `x > x₀`.
    pub fn inverse_square(a: f64, x0: f64) -> Self {
        Alpha::new(
            format!("{a}*(x-{x0})^-2"),
            move |x: &Jet| x.add_scalar(-x0).powf(-2.0).scale(a),
            move |x| x > x0,
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn contains(&self, x: f64) -> bool {
        x.is_finite() && (self.domain)(x)
    }

    pub fn apply(&self, x: &Jet) -> Jet {
        self.fun.apply(x)
    }

    /// `α^{(k)}` composed with a jet.
    pub fn apply_derivative(&self, k: usize, x: &Jet) -> Jet {
        let d = self.fun.derivatives(x.value(), x.order() + k);
        x.compose(&d[k..])
    }

    /// `α(x), α'(x), ..., α^{(n)}(x)`.
    pub fn derivatives(&self, x: f64, n: usize) -> Vec<f64> {
        self.fun.derivatives(x, n)
    }
}

/// The defining function `f(x, y)` of a Walker metric.
#[derive(Clone)]
pub struct WalkerFun {
    name: String,
    f: Arc<Fn2>,
    domain: Arc<Domain2>,
}

impl fmt::Debug for WalkerFun {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WalkerFun({})", self.name)
    }
}

impl WalkerFun {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(&Jet, &Jet) -> Jet + Send + Sync + 'static,
        domain: impl Fn(f64, f64) -> bool + Send + Sync + 'static,
    ) -> Self {
        WalkerFun {
            name: name.into(),
            f: Arc::new(f),
            domain: Arc::new(domain),
        }
    }

    pub fn zero() -> Self {
        WalkerFun::new("0", |x, _| Jet::zero(x.space(), x.order()), |_, _| true)
    }

    /// `e^{ay}`.
    pub fn exp(a: f64) -> Self {
        WalkerFun::new(format!("exp({a}y)"), move |_, y| y.scale(a).exp(), |_, _| true)
    }

    /// `c ln y` on `y > 0`.
    pub fn log(c: f64) -> Self {
        WalkerFun::new(format!("{c}*ln(y)"), move |_, y| y.ln().scale(c), |_, y| y > 0.0)
    }

    /// `c y^ε` on `y > 0`.
    pub fn power(eps: f64, c: f64) -> Self {
        WalkerFun::new(format!("{c}*y^{eps}"), move |_, y| y.powf(eps).scale(c), |_, y| y > 0.0)
    }

    /// `½ α(x) y²`.
    pub fn quadratic(alpha: Alpha) -> Self {
        let name = format!("0.5*[{}]*y^2", alpha.name());
        let dom = alpha.clone();
        WalkerFun::new(
            name,
            move |x, y| alpha.apply(x).mul_jet(&y.mul_jet(y)).scale(0.5),
            move |x, _| dom.contains(x),
        )
    }

    /// `y²`: `f_yy` constant, so `∇R = 0`.
    pub fn symmetric() -> Self {
        WalkerFun::power(2.0, 1.0).with_name("y^2")
    }

    /// `y⁴/12`.
    pub fn quartic() -> Self {
        WalkerFun::power(4.0, 1.0 / 12.0).with_name("y^4/12")
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x.is_finite() && y.is_finite() && (self.domain)(x, y)
    }

    pub fn eval(&self, x: &Jet, y: &Jet) -> Jet {
        (self.f)(x, y)
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        let c = Jet::coordinates(&[x, y], 0);
        self.eval(&c[0], &c[1]).value()
    }
}

/// The Walker preset list used throughout the test suites.
pub fn walker_presets() -> Vec<WalkerFun> {
    vec![
        WalkerFun::exp(1.0).with_name("exp(y)"),
        WalkerFun::log(1.0).with_name("ln(y)"),
        WalkerFun::power(3.0, 1.0).with_name("y^3"),
        WalkerFun::power(-1.0, 1.0).with_name("y^-1"),
        WalkerFun::power(0.5, 1.0).with_name("y^0.5"),
        WalkerFun::quadratic(Alpha::exp()).with_name("0.5*exp(x)*y^2"),
        WalkerFun::quartic(),
    ]
}

/// `ds² = −2f dx² + 2 dx dx̃ + dy²` in coordinates `(x, y, x̃)`.
pub fn walker_metric(f: &WalkerFun) -> MetricField {
    let fc = f.clone();
    let fd = f.clone();
    MetricField::new(
        format!("walker[{}]", f.name()),
        Signature::lorentzian(3),
        move |c: &[Jet]| {
            let s = c[0].space().clone();
            let o = c[0].order();
            let z = Jet::zero(&s, o);
            let one = Jet::constant(&s, o, 1.0);
            let g00 = fc.eval(&c[0], &c[1]).scale(-2.0);
            vec![
                g00,
                z.clone(),
                one.clone(),
                z.clone(),
                one.clone(),
                z.clone(),
                one,
                z.clone(),
                z,
            ]
        },
        move |p| fd.contains(p[0], p[1]),
    )
}

/// Partial derivatives of `f` at `(x, y)` used by the curvature formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkerPartials {
    pub f: f64,
    pub f_x: f64,
    pub f_y: f64,
    pub f_yy: f64,
    pub f_xyy: f64,
    pub f_yyy: f64,
    pub f_xxyy: f64,
    pub f_xyyy: f64,
    pub f_yyyy: f64,
}

pub fn walker_partials(f: &WalkerFun, p: &Point) -> Result<WalkerPartials> {
    let (x, y) = (p.coords()[0], p.coords()[1]);
    if !f.contains(x, y) {
        return Err(Error::OutsideDomain {
            metric: f.name().to_string(),
            point: p.0.clone(),
        });
    }
    let c = Jet::coordinates(&[x, y], 4);
    let j = f.eval(&c[0], &c[1]);
    let d = |a: u8, b: u8| j.partial(&[a, b]);
    Ok(WalkerPartials {
        f: d(0, 0),
        f_x: d(1, 0),
        f_y: d(0, 1),
        f_yy: d(0, 2),
        f_xyy: d(1, 2),
        f_yyy: d(0, 3),
        f_xxyy: d(2, 2),
        f_xyyy: d(1, 3),
        f_yyyy: d(0, 4),
    })
}

/// Closed-form values of `R, ∇R, ∇²R` on `(∂x, ∂y, ∂y, ∂x; ...)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkerOracle {
    pub r: f64,
    pub dr_x: f64,
    pub dr_y: f64,
    pub ddr_xx: f64,
    pub ddr_xy: f64,
    pub ddr_yx: f64,
    pub ddr_yy: f64,
}

impl WalkerOracle {
    fn derivative_value(&self, slots: &[usize]) -> f64 {
        match slots {
            [] => self.r,
            [0] => self.dr_x,
            [1] => self.dr_y,
            [0, 0] => self.ddr_xx,
            [0, 1] => self.ddr_xy,
            [1, 0] => self.ddr_yx,
            [1, 1] => self.ddr_yy,
            _ => 0.0,
        }
    }

    /// The complete `∇^ℓR` (`ℓ ≤ 2`) implied by the list: only slots in
    /// `{∂x, ∂y}` carry curvature, and the first four slots follow the
    /// algebraic symmetries of `R(∂x, ∂y, ∂y, ∂x)`.
    pub fn tensor(&self, level: usize) -> TensorAtPoint {
        assert!(level <= 2);
        let rank = level + 4;
        let entries = multi_indices(3, rank)
            .map(|idx| {
                if idx.contains(&2) || idx[0] == idx[1] || idx[2] == idx[3] {
                    return 0.0;
                }
                let s1 = if idx[0] == 0 { 1.0 } else { -1.0 };
                let s2 = if idx[2] == 1 { 1.0 } else { -1.0 };
                s1 * s2 * self.derivative_value(&idx[4..])
            })
            .collect();
        TensorAtPoint::covariant(3, rank, entries)
    }
}

pub fn walker_curvature_oracle(f: &WalkerFun, p: &Point) -> Result<WalkerOracle> {
    let d = walker_partials(f, p)?;
    Ok(WalkerOracle {
        r: d.f_yy,
        dr_x: d.f_xyy,
        dr_y: d.f_yyy,
        ddr_xx: d.f_xxyy - d.f_y * d.f_yyy,
        ddr_xy: d.f_xyyy,
        ddr_yx: d.f_xyyy,
        ddr_yy: d.f_yyyy,
    })
}

/// Null frame `ξ₁ = a₁₁(∂x + f∂x̃ + a₁₂∂y + a₁₃∂x̃)`, `ξ₂ = ∂y + a₂₃∂x̃`,
/// `ξ₃ = a₃₃∂x̃` with `⟨ξ₁, ξ₃⟩ = ⟨ξ₂, ξ₂⟩ = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkerFrame {
    pub a11: f64,
    pub a12: f64,
    pub a13: f64,
    pub a23: f64,
    pub a33: f64,
    pub lambda: f64,
    /// `sign(f_yy)`; the normalized curvature is `sign·λ²`.
    pub sign: f64,
    /// `f(P)`, needed to write `ξ₁` in coordinates.
    pub f: f64,
}

impl WalkerFrame {
    fn from_a11_a12(a11: f64, a12: f64, lambda: f64, sign: f64, f: f64) -> Self {
        WalkerFrame {
            a11,
            a12,
            a13: -0.5 * a12 * a12,
            a23: -a12,
            a33: 1.0 / a11,
            lambda,
            sign,
            f,
        }
    }

    /// `(a₁₂² + 2a₁₃, a₁₂ + a₂₃, a₁₁a₃₃ − 1)`.
    pub fn relations(&self) -> [f64; 3] {
        [
            self.a12 * self.a12 + 2.0 * self.a13,
            self.a12 + self.a23,
            self.a11 * self.a33 - 1.0,
        ]
    }

    /// Columns `ξ₁, ξ₂, ξ₃` in coordinates `(x, y, x̃)`.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            3,
            3,
            &[
                self.a11,
                0.0,
                0.0,
                self.a11 * self.a12,
                1.0,
                0.0,
                self.a11 * (self.f + self.a13),
                self.a23,
                self.a33,
            ],
        )
    }

    /// `ε₁₃ = ε₃₁ = ε₂₂ = 1`.
    pub fn gram() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0])
    }
}

/// Normalization with `λ = f_yyy/f_yy`, `a₁₂ = −f_xyy/f_yyy`,
/// `a₁₁² = λ²/|f_yy|`.
pub fn walker_frame(f: &WalkerFun, p: &Point) -> Result<WalkerFrame> {
    let d = walker_partials(f, p)?;
    if d.f_yy == 0.0 {
        return Err(Error::VanishingSecondDerivative { point: p.0.clone() });
    }
    if d.f_yyy == 0.0 {
        return Err(Error::VanishingThirdDerivative { point: p.0.clone() });
    }
    let lambda = d.f_yyy / d.f_yy;
    let a12 = -d.f_xyy / d.f_yyy;
    let a11 = lambda.abs() / d.f_yy.abs().sqrt();
    Ok(WalkerFrame::from_a11_a12(a11, a12, lambda, d.f_yy.signum(), d.f))
}

/// Normalization for the `f_yyy ≡ 0` branch: with `α = f_yy`, choose
/// `a₁₁² |α| = λ²` for the supplied `λ`; the level-1 coefficient
/// `c₁ = a₁₁³ α_x / λ³` is returned alongside the frame.
pub fn walker_quadratic_frame(f: &WalkerFun, p: &Point, lambda: f64) -> Result<(WalkerFrame, f64)> {
    let d = walker_partials(f, p)?;
    if d.f_yy == 0.0 {
        return Err(Error::VanishingSecondDerivative { point: p.0.clone() });
    }
    if lambda == 0.0 {
        return Err(Error::DivisionByZero("lambda".into()));
    }
    let a11 = lambda.abs() / d.f_yy.abs().sqrt();
    let c1 = a11.powi(3) * d.f_xyy / lambda.powi(3);
    Ok((WalkerFrame::from_a11_a12(a11, 0.0, lambda, d.f_yy.signum(), d.f), c1))
}

/// `c₁₂₂₁₂₂ = f_yy f_yyyy / f_yyy²`.
pub fn homothety_invariant_c(f: &WalkerFun, p: &Point) -> Result<f64> {
    let d = walker_partials(f, p)?;
    if d.f_yyy == 0.0 {
        return Err(Error::DivisionByZero("f_yyy".into()));
    }
    Ok(d.f_yy * d.f_yyyy / (d.f_yyy * d.f_yyy))
}

/// Components of a 1-form on `N`, as jets.
pub type OneFormFn = dyn Fn(&[Jet]) -> Vec<Jet> + Send + Sync;

/// Data of `g = e^{tx}(dx² + dx∘θ + g_N)` on `ℝ × N`, where
/// `dx∘θ = dx ⊗ θ + θ ⊗ dx`.
#[derive(Clone)]
pub struct QStructureSpec {
    pub base: MetricField,
    pub t: f64,
    pub theta: Option<Arc<OneFormFn>>,
}

impl fmt::Debug for QStructureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QStructureSpec")
            .field("base", &self.base.name())
            .field("t", &self.t)
            .field("theta", &self.theta.is_some())
            .finish()
    }
}

impl QStructureSpec {
    pub fn warped(base: MetricField, t: f64) -> Self {
        QStructureSpec { base, t, theta: None }
    }

    /// `θ = Σ θ_a dy^a` with constant coefficients.
    pub fn with_constant_theta(mut self, theta: Vec<f64>) -> Self {
        self.theta = Some(Arc::new(move |y: &[Jet]| {
            theta.iter().map(|c| Jet::constant(y[0].space(), y[0].order(), *c)).collect()
        }));
        self
    }

    pub fn with_theta(mut self, theta: impl Fn(&[Jet]) -> Vec<Jet> + Send + Sync + 'static) -> Self {
        self.theta = Some(Arc::new(theta));
        self
    }

    pub fn dim(&self) -> usize {
        self.base.dim() + 1
    }

    /// `θ` at a base point.
    pub fn theta_at(&self, y: &[f64]) -> Vec<f64> {
        match &self.theta {
            None => vec![0.0; self.base.dim()],
            Some(th) => th(&Jet::coordinates(y, 0)).iter().map(Jet::value).collect(),
        }
    }

    /// `g_N(θ, θ)` at a base point.
    pub fn theta_norm(&self, y: &[f64]) -> Result<f64> {
        let th = self.theta_at(y);
        let ginv = self
            .base
            .matrix_at(&Point::from(y))?
            .try_inverse()
            .ok_or(Error::SingularMetric {
                point: y.to_vec(),
                det: 0.0,
            })?;
        let v = nalgebra::DVector::from_column_slice(&th);
        Ok((v.transpose() * ginv * &v)[(0, 0)])
    }
}

/// Stereographic chart of the unit sphere, `4(du² + dv²)/(1 + u² + v²)²`,
/// restricted to `u² + v² < 100`.
pub fn unit_sphere() -> MetricField {
    MetricField::new(
        "S2",
        Signature::riemannian(2),
        |c: &[Jet]| {
            let r2 = &(&c[0] * &c[0]) + &(&c[1] * &c[1]);
            let conf = r2.add_scalar(1.0).powi(2).recip().scale(4.0);
            let z = Jet::zero(c[0].space(), c[0].order());
            vec![conf.clone(), z.clone(), z, conf]
        },
        |p| p[0] * p[0] + p[1] * p[1] < 100.0,
    )
}

pub fn flat_plane() -> MetricField {
    MetricField::flat(Signature::riemannian(2)).with_name("R2")
}

/// Assembles `e^{tx}(dx² + dx∘θ + g_N)` in coordinates `(x, y¹, ..)`.
/// Points where `g_N(θ, θ) = 1` are removed from the domain; the signature
/// is taken at the base point `y = 0` of `N`'s chart.
pub fn q_structure_metric(spec: &QStructureSpec) -> Result<MetricField> {
    let n = spec.base.dim();
    let m = n + 1;
    let origin = vec![0.0; n];
    let rho0 = spec.theta_norm(&origin)?;
    if (rho0 - 1.0).abs() < 1e-12 {
        return Err(Error::DegenerateQStructure {
            point: std::iter::once(0.0).chain(origin).collect(),
            theta_norm: rho0,
        });
    }
    let base_sig = spec.base.signature();
    let signature = if spec.theta.is_none() || rho0 < 1.0 {
        Signature::new(base_sig.negative, base_sig.positive + 1)
    } else {
        Signature::new(base_sig.negative + 1, base_sig.positive)
    };
    let t = spec.t;
    let base = spec.base.clone();
    let theta = spec.theta.clone();
    let spec_dom = spec.clone();
    let name = match &spec.theta {
        None => format!("warped[{}](t={t})", spec.base.name()),
        Some(_) => format!("qstruct[{}](t={t})", spec.base.name()),
    };
    Ok(MetricField::new(
        name,
        signature,
        move |c: &[Jet]| {
            let conf = c[0].scale(t).exp();
            let gn = base.components_on(&c[1..]);
            let th = theta.as_ref().map(|f| f(&c[1..]));
            let mut out = Vec::with_capacity(m * m);
            for i in 0..m {
                for j in 0..m {
                    let v = match (i, j) {
                        (0, 0) => conf.clone(),
                        (0, b) | (b, 0) => match &th {
                            Some(th) => conf.mul_jet(&th[b - 1]),
                            None => Jet::zero(c[0].space(), c[0].order()),
                        },
                        (a, b) => conf.mul_jet(&gn[(a - 1) * n + (b - 1)]),
                    };
                    out.push(v);
                }
            }
            out
        },
        move |p| {
            let y = Point::from(&p[1..]);
            spec_dom.base.contains(&y)
                && spec_dom
                    .theta_norm(&p[1..])
                    .map(|r| (r - 1.0).abs() > 1e-12)
                    .unwrap_or(false)
        },
    ))
}

/// Checks nondegeneracy at `p` and reports the `g_N(θ, θ) ≠ 1` criterion on
/// failure.
pub fn q_structure_check_point(spec: &QStructureSpec, p: &Point) -> Result<DMatrix<f64>> {
    let r = spec.theta_norm(&p.coords()[1..])?;
    if (r - 1.0).abs() < 1e-12 {
        return Err(Error::DegenerateQStructure {
            point: p.0.clone(),
            theta_norm: r,
        });
    }
    let g = q_structure_metric(spec)?;
    g.matrix_at(p)
}

/// `ρ̃ = ρ_N − (m−2)t²/4 g_N` on the `N` block (zero on the `x` row and
/// column) and `τ̃ = e^{−tx}(τ_N − (m−1)(m−2)t²/4)`.
pub fn warped_ricci_oracle(spec: &QStructureSpec, p: &Point) -> Result<(TensorAtPoint, f64)> {
    if spec.theta.is_some() {
        return Err(Error::Unsupported("warped Ricci oracle needs theta = 0".into()));
    }
    let m = spec.dim();
    let n = m - 1;
    let x = p.coords()[0];
    let y = Point::from(&p.coords()[1..]);
    let (rho_n, tau_n) = ricci(&spec.base, &y)?;
    let gn = spec.base.matrix_at(&y)?;
    let t2 = spec.t * spec.t;
    let shift = (m as f64 - 2.0) * t2 / 4.0;
    let mut rho = TensorAtPoint::zeros(m, vec![Slot::Co, Slot::Co]);
    for a in 0..n {
        for b in 0..n {
            rho.set(&[a + 1, b + 1], rho_n.get(&[a, b]) - shift * gn[(a, b)]);
        }
    }
    let tau = (-spec.t * x).exp() * (tau_n - (m as f64 - 1.0) * shift);
    Ok((rho, tau))
}

/// Max over `samples` of `|θ_{a;b} + θ_{b;a}|` on `g_N`.
pub fn killing_residual(spec: &QStructureSpec, samples: &[Point]) -> Result<f64> {
    let Some(theta) = &spec.theta else {
        return Ok(0.0);
    };
    let n = spec.base.dim();
    let mut worst = 0.0f64;
    for y in samples {
        let geo = LocalGeometry::new(&spec.base, y, 2)?;
        let coords = Jet::coordinates(y.coords(), 1);
        let th = JetTensor::new(n, vec![Slot::Co], theta(&coords));
        let d = geo.covariant_derivative(&th)?.at_point();
        for a in 0..n {
            for b in 0..n {
                worst = worst.max((d.get(&[a, b]) + d.get(&[b, a])).abs());
            }
        }
    }
    Ok(worst)
}

/// Flattening of a Killing 1-form on a flat base: with `ξ = θ^♯`,
/// `ϱ = (1 − |ξ|²)^{-1/2}` and `s = ϱt`, the map
/// `F(x̃, y) = (x̃/ϱ, y + x̃ ξ)` pulls `e^{sx}(dx² + g_N)` back to
/// `e^{tx̃}(dx̃² + dx̃∘θ + g_N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaFlatten {
    pub rho: f64,
    pub s: f64,
    /// `(1 + ϱ²|ξ|²)^{-1/2} s`, which equals `t`.
    pub t_tilde: f64,
    pub residual: f64,
}

pub fn theta_flatten_check(spec: &QStructureSpec, samples: &[Point]) -> Result<ThetaFlatten> {
    let n = spec.base.dim();
    let base_pts: Vec<Point> = samples.iter().map(|p| Point::from(&p.coords()[1..])).collect();
    let kill = killing_residual(spec, &base_pts)?;
    if kill > 1e-9 {
        return Err(Error::NotKilling { residual: kill });
    }
    // the flow of ξ is a translation only when ξ has constant components
    let probe = spec.base.jet_of_metric(&Point::new(vec![0.0; n]), 1)?;
    if probe.iter().any(|j| j.coeffs()[1..].iter().any(|c| c.abs() > 1e-14)) {
        return Err(Error::Unsupported("theta flattening needs a constant-coefficient base metric".into()));
    }
    let origin = vec![0.0; n];
    let theta = spec.theta_at(&origin);
    let gn = spec.base.matrix_at(&Point::new(origin.clone()))?;
    let ginv = gn.clone().try_inverse().expect("base metric invertible");
    let xi: Vec<f64> = (0..n).map(|a| (0..n).map(|b| ginv[(a, b)] * theta[b]).sum()).collect();
    let norm_sq = spec.theta_norm(&origin)?;
    if norm_sq >= 1.0 {
        return Err(Error::XiTooLong { norm_sq });
    }
    let rho = (1.0 - norm_sq).powf(-0.5);
    let s = rho * spec.t;
    let t_tilde = (1.0 + rho * rho * norm_sq).powf(-0.5) * s;
    let target = q_structure_metric(&QStructureSpec::warped(spec.base.clone(), s))?;
    let source = q_structure_metric(spec)?;
    let map = move |c: &[Jet]| -> Vec<Jet> {
        let mut out = vec![c[0].scale(1.0 / rho)];
        for a in 0..n {
            let mut y = c[a + 1].clone();
            y.add_scaled(xi[a], &c[0]);
            out.push(y);
        }
        out
    };
    let mut residual = 0.0f64;
    for p in samples {
        let pulled = pullback_metric(&target, &map, p)?;
        let direct = source.matrix_at(p)?;
        residual = residual.max((pulled - direct).amax());
    }
    Ok(ThetaFlatten {
        rho,
        s,
        t_tilde,
        residual,
    })
}

/// `T(x, y, x̃) = (x, y − β(x), x̃ + yβ'(x))` pulls `g_f` back to `g_f̃` with
/// `f̃ = f(x, y − β) − ½β'² − yβ''`. Returns the max entry deviation over
/// `samples`.
pub fn change_of_variables_check(f: &WalkerFun, beta: &Alpha, samples: &[Point]) -> Result<f64> {
    let g = walker_metric(f);
    let (f1, b1) = (f.clone(), beta.clone());
    let ftilde = WalkerFun::new(
        format!("cov[{}]", f.name()),
        move |x, y| {
            let b = b1.apply(x);
            let bx = b1.apply_derivative(1, x);
            let bxx = b1.apply_derivative(2, x);
            let shifted = f1.eval(x, &(y - &b));
            let mut out = shifted;
            out.add_product_scaled(-0.5, &bx, &bx);
            out.add_product_scaled(-1.0, y, &bxx);
            out
        },
        |_, _| true,
    );
    let gt = walker_metric(&ftilde);
    let b2 = beta.clone();
    let map = move |c: &[Jet]| -> Vec<Jet> {
        let b = b2.apply(&c[0]);
        let bx = b2.apply_derivative(1, &c[0]);
        vec![c[0].clone(), &c[1] - &b, &c[2] + &(&c[1] * &bx)]
    };
    let mut worst = 0.0f64;
    for p in samples {
        let pulled = pullback_metric(&g, &map, p)?;
        let direct = gt.matrix_at(p)?;
        worst = worst.max((pulled - direct).amax());
    }
    Ok(worst)
}

/// A coordinate map given on jets.
pub type MapFn = Arc<dyn Fn(&[Jet]) -> Vec<Jet> + Send + Sync>;

/// Isometry of `M_{e^{ay}}`:
/// `(x, y, x̃) ↦ (e^{-ay₀/2}x + x₀, y + y₀, e^{ay₀/2}x̃ + x̃₀)`.
pub fn walker_exp_isometry(a: f64, x0: f64, y0: f64, xt0: f64) -> MapFn {
    let (s, u) = ((-a * y0 / 2.0).exp(), (a * y0 / 2.0).exp());
    Arc::new(move |c: &[Jet]| {
        vec![
            c[0].scale(s).add_scalar(x0),
            c[1].add_scalar(y0),
            c[2].scale(u).add_scalar(xt0),
        ]
    })
}

/// `(x, y, x̃) ↦ (x, y, x̃ + W(x))`; pulls `g_f` back to `g_{f − W'}`.
pub fn walker_shear(w: Alpha) -> MapFn {
    Arc::new(move |c: &[Jet]| vec![c[0].clone(), c[1].clone(), &c[2] + &w.apply(&c[0])])
}

/// Homothety of `M_{ln y}` with factor `λ`:
/// `(λx + x₀, λy, λx̃ + x̃₀ + λ ln λ · x)`.
pub fn walker_log_homothety(lambda: f64, x0: f64, xt0: f64) -> MapFn {
    let l = lambda * lambda.ln();
    Arc::new(move |c: &[Jet]| {
        let mut xt = c[2].scale(lambda).add_scalar(xt0);
        xt.add_scaled(l, &c[0]);
        vec![c[0].scale(lambda).add_scalar(x0), c[1].scale(lambda), xt]
    })
}

/// Homothety of `M_{y^c}` with factor `λ`:
/// `(λ^{(2−c)/2}x + x₀, λy, λ^{(c+2)/2}x̃ + x̃₀)`.
pub fn walker_power_homothety(c: f64, lambda: f64, x0: f64, xt0: f64) -> MapFn {
    let (s, u) = (lambda.powf((2.0 - c) / 2.0), lambda.powf((c + 2.0) / 2.0));
    Arc::new(move |v: &[Jet]| {
        vec![
            v[0].scale(s).add_scalar(x0),
            v[1].scale(lambda),
            v[2].scale(u).add_scalar(xt0),
        ]
    })
}

/// `x ↦ x + a` on a warped product; scales the metric by `e^{ta}`.
pub fn warped_translation(a: f64) -> MapFn {
    Arc::new(move |c: &[Jet]| {
        let mut out = c.to_vec();
        out[0] = c[0].add_scalar(a);
        out
    })
}

/// Residual of `T*g = λ²g` for a map from this module.
pub fn map_residual(g: &MetricField, map: &MapFn, lambda: f64, samples: &[Point]) -> Result<f64> {
    homothety_pullback_residual(g, map.as_ref(), lambda, samples)
}

/// A parameter value from a config: number or word.
#[derive(Debug, Clone, PartialEq)]
pub enum Param {
    Num(f64),
    Word(String),
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Param::Num(v) => write!(f, "{v}"),
            Param::Word(w) => f.write_str(w),
        }
    }
}

pub type Params = BTreeMap<String, Param>;

/// A resolved zoo entry.
#[derive(Clone, Debug)]
pub struct ZooMetric {
    pub name: String,
    pub metric: MetricField,
    pub walker: Option<WalkerFun>,
    /// `α` of a quadratic Walker profile `½α(x)y²`.
    pub alpha: Option<Alpha>,
    pub qstructure: Option<QStructureSpec>,
}

/// One zoo family: name, accepted parameters with defaults.
#[derive(Debug, Clone, Copy)]
pub struct ZooFamily {
    pub name: &'static str,
    pub params: &'static [(&'static str, &'static str)],
}

pub const ZOO: &[ZooFamily] = &[
    ZooFamily {
        name: "walker.exp",
        params: &[("a", "1")],
    },
    ZooFamily {
        name: "walker.log",
        params: &[("coef", "1")],
    },
    ZooFamily {
        name: "walker.pow",
        params: &[("eps", "3"), ("coef", "1")],
    },
    ZooFamily {
        name: "walker.quad",
        params: &[("alpha", "exp"), ("a", "1"), ("x0", "0"), ("k", "2")],
    },
    ZooFamily {
        name: "warped.sphere",
        params: &[("t", "1")],
    },
    ZooFamily {
        name: "warped.flat",
        params: &[("t", "1")],
    },
    ZooFamily {
        name: "qstruct.flat_theta",
        params: &[("t", "1"), ("theta_u", "0.6"), ("theta_v", "0")],
    },
];

pub fn zoo_names() -> Vec<&'static str> {
    ZOO.iter().map(|z| z.name).collect()
}

fn num(params: &Params, family: &ZooFamily, key: &str) -> Result<f64> {
    match params.get(key) {
        Some(Param::Num(v)) => Ok(*v),
        Some(Param::Word(w)) => Err(Error::InvalidArgument(format!("{}: `{key}` must be numeric, got `{w}`", family.name))),
        None => {
            let (_, d) = family.params.iter().find(|(k, _)| *k == key).expect("declared param");
            Ok(d.parse().expect("numeric default"))
        }
    }
}

fn word(params: &Params, family: &ZooFamily, key: &str) -> String {
    match params.get(key) {
        Some(p) => p.to_string(),
        None => family
            .params
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, d)| d.to_string())
            .expect("declared param"),
    }
}

/// Builds a zoo metric from its name and parameters.
pub fn zoo_metric(name: &str, params: &Params) -> Result<ZooMetric> {
    let family = ZOO.iter().find(|z| z.name == name).ok_or_else(|| {
        Error::InvalidArgument(format!("unknown metric `{name}`; available: {}", zoo_names().join(", ")))
    })?;
    for key in params.keys() {
        if !family.params.iter().any(|(k, _)| k == key) {
            return Err(Error::InvalidArgument(format!(
                "{name}: unknown parameter `{key}`; accepted: {}",
                family.params.iter().map(|(k, _)| *k).collect::<Vec<_>>().join(", ")
            )));
        }
    }
    let walker = |w: WalkerFun| ZooMetric {
        name: name.to_string(),
        metric: walker_metric(&w),
        walker: Some(w),
        alpha: None,
        qstructure: None,
    };
    let warped = |spec: QStructureSpec| -> Result<ZooMetric> {
        Ok(ZooMetric {
            name: name.to_string(),
            metric: q_structure_metric(&spec)?,
            walker: None,
            alpha: None,
            qstructure: Some(spec),
        })
    };
    match name {
        "walker.exp" => Ok(walker(WalkerFun::exp(num(params, family, "a")?))),
        "walker.log" => Ok(walker(WalkerFun::log(num(params, family, "coef")?))),
        "walker.pow" => Ok(walker(WalkerFun::power(
            num(params, family, "eps")?,
            num(params, family, "coef")?,
        ))),
        "walker.quad" => {
            let alpha = match word(params, family, "alpha").as_str() {
                "exp" => Alpha::exp(),
                "invsq" => Alpha::inverse_square(num(params, family, "a")?, num(params, family, "x0")?),
                "gauss" => {
                    let k = num(params, family, "k")?;
                    if k < 1.0 || k.fract() != 0.0 {
                        return Err(Error::InvalidArgument(format!("{name}: `k` must be a positive integer")));
                    }
                    crate::lab::variable_ch_construct(k as usize)?.alpha()
                }
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "{name}: unknown alpha `{other}`; available: exp, invsq, gauss"
                    )))
                }
            };
            Ok(ZooMetric {
                alpha: Some(alpha.clone()),
                ..walker(WalkerFun::quadratic(alpha))
            })
        }
        "warped.sphere" => warped(QStructureSpec::warped(unit_sphere(), num(params, family, "t")?)),
        "warped.flat" => warped(QStructureSpec::warped(flat_plane(), num(params, family, "t")?)),
        "qstruct.flat_theta" => warped(
            QStructureSpec::warped(flat_plane(), num(params, family, "t")?)
                .with_constant_theta(vec![num(params, family, "theta_u")?, num(params, family, "theta_v")?]),
        ),
        _ => unreachable!("family list and match arms agree"),
    }
}
