//! Experiments built on the engine: VSI sweeps, scale functions `μ` and
//! their level sets, geodesics, Walker classification tests, a
//! quadrature-built family of functions with prescribed derivatives, and
//! characters of the upper-triangular group.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::christoffel;
use crate::jet::{Jet, JetSpace, UnivariateTaylor};
use crate::metric::{MetricField, Point};
use crate::weyl::{invariant_with_gradient, weyl_scalars, WeylInvariant};
use crate::zoo::Alpha;

/// Outcome of a VSI sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct VsiReport {
    pub is_vsi: bool,
    pub max_abs: f64,
    pub worst_invariant: WeylInvariant,
    pub worst_sample: usize,
}

pub const VSI_TOL: f64 = 1e-10;

/// VSI iff every catalogue invariant at every sample is at most `tol`.
pub fn vsi_sweep(g: &MetricField, samples: &[Point], tol: f64) -> Result<VsiReport> {
    let mut out = VsiReport {
        is_vsi: true,
        max_abs: 0.0,
        worst_invariant: WeylInvariant::Tau,
        worst_sample: 0,
    };
    for (i, p) in samples.iter().enumerate() {
        for (w, v) in weyl_scalars(g, p)?.iter() {
            if v.abs() > out.max_abs {
                out.max_abs = v.abs();
                out.worst_invariant = w;
                out.worst_sample = i;
            }
        }
    }
    out.is_vsi = out.max_abs <= tol;
    Ok(out)
}

/// Invariants at or below this magnitude count as vanishing.
pub const VANISHING_TOL: f64 = 1e-12;

type ScalarJetFn = dyn Fn(&[Jet]) -> Jet + Send + Sync;

#[derive(Clone)]
enum LevelSource {
    Invariant(WeylInvariant),
    Custom { name: String, f: Arc<ScalarJetFn> },
}

/// `μ(P) = |𝓡(P₀)/𝓡(P)|^{1/ℓ}` for a scalar `𝓡` of order `ℓ`.
#[derive(Clone)]
pub struct LevelSetProbe {
    source: LevelSource,
    order: u32,
    base: Point,
    base_value: f64,
}

impl fmt::Debug for LevelSetProbe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevelSetProbe")
            .field("invariant", &self.name())
            .field("order", &self.order)
            .field("base", &self.base)
            .finish()
    }
}

impl LevelSetProbe {
    pub fn new(g: &MetricField, invariant: WeylInvariant, base: Point) -> Result<Self> {
        let mut probe = LevelSetProbe {
            source: LevelSource::Invariant(invariant),
            order: invariant.order(),
            base: base.clone(),
            base_value: 1.0,
        };
        probe.base_value = probe.raw(g, &base)?.0;
        Ok(probe)
    }

    /// A level function from an arbitrary scalar field of the given order.
    pub fn custom(
        g: &MetricField,
        name: impl Into<String>,
        f: impl Fn(&[Jet]) -> Jet + Send + Sync + 'static,
        order: u32,
        base: Point,
    ) -> Result<Self> {
        let mut probe = LevelSetProbe {
            source: LevelSource::Custom {
                name: name.into(),
                f: Arc::new(f),
            },
            order,
            base: base.clone(),
            base_value: 1.0,
        };
        probe.base_value = probe.raw(g, &base)?.0;
        Ok(probe)
    }

    pub fn name(&self) -> String {
        match &self.source {
            LevelSource::Invariant(w) => w.name().to_string(),
            LevelSource::Custom { name, .. } => name.clone(),
        }
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    fn raw(&self, g: &MetricField, p: &Point) -> Result<(f64, Vec<f64>)> {
        let (v, grad) = match &self.source {
            LevelSource::Invariant(w) => invariant_with_gradient(g, p, *w)?,
            LevelSource::Custom { f, .. } => {
                g.check_point(p)?;
                let j = f(&Jet::coordinates(p.coords(), 1));
                let grad = (0..p.dim()).map(|i| j.derivative(i).value()).collect();
                (j.value(), grad)
            }
        };
        if !v.is_finite() || v.abs() <= VANISHING_TOL {
            return Err(Error::VanishingInvariant {
                name: self.name(),
                point: p.0.clone(),
            });
        }
        Ok((v, grad))
    }

    /// `μ` at `p`.
    pub fn mu(&self, g: &MetricField, p: &Point) -> Result<f64> {
        Ok(self.mu_with_gradient(g, p)?.0)
    }

    /// `μ` and its differential `dμ` (covector) at `p`.
    pub fn mu_with_gradient(&self, g: &MetricField, p: &Point) -> Result<(f64, Vec<f64>)> {
        let (v, dv) = self.raw(g, p)?;
        let l = self.order as f64;
        let mu = (self.base_value / v).abs().powf(1.0 / l);
        let dmu = dv.iter().map(|d| -mu * d / (l * v)).collect();
        Ok((mu, dmu))
    }
}

/// `μ` at `p` for a probe (see [`LevelSetProbe`]).
pub fn mu_level(probe: &LevelSetProbe, g: &MetricField, p: &Point) -> Result<f64> {
    probe.mu(g, p)
}

/// Position, velocity and accumulated arc length along a geodesic.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicState {
    pub point: Point,
    pub velocity: Vec<f64>,
    pub arc_length: f64,
}

impl GeodesicState {
    pub fn new(point: Point, velocity: Vec<f64>) -> Self {
        GeodesicState {
            point,
            velocity,
            arc_length: 0.0,
        }
    }

    /// `g(v, v)` at the current point.
    pub fn speed_sq(&self, g: &MetricField) -> Result<f64> {
        let gm = g.matrix_at(&self.point)?;
        let v = DVector::from_column_slice(&self.velocity);
        Ok((v.transpose() * gm * &v)[(0, 0)])
    }
}

pub const GEODESIC_STEP: f64 = 1e-3;

fn geodesic_rhs(g: &MetricField, x: &[f64], v: &[f64], arc: f64) -> Result<Vec<f64>> {
    let m = x.len();
    let p = Point::from(x);
    if !g.contains(&p) {
        return Err(Error::DomainExit { arc_length: arc });
    }
    let gam = christoffel(g, &p)?;
    let mut out = vec![0.0; 2 * m];
    out[..m].copy_from_slice(v);
    for k in 0..m {
        let mut acc = 0.0;
        for i in 0..m {
            for j in 0..m {
                acc += gam.get(&[i, j, k]) * v[i] * v[j];
            }
        }
        out[m + k] = -acc;
    }
    Ok(out)
}

/// One classical RK4 step of length `h` in the affine parameter.
fn rk4_step(g: &MetricField, s: &GeodesicState, h: f64, speed: f64) -> Result<GeodesicState> {
    let m = s.point.dim();
    let y0: Vec<f64> = s.point.coords().iter().chain(&s.velocity).copied().collect();
    let arc = s.arc_length;
    let eval = |y: &[f64]| geodesic_rhs(g, &y[..m], &y[m..], arc);
    let add = |a: &[f64], b: &[f64], c: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + c * y).collect() };
    let k1 = eval(&y0)?;
    let k2 = eval(&add(&y0, &k1, h / 2.0))?;
    let k3 = eval(&add(&y0, &k2, h / 2.0))?;
    let k4 = eval(&add(&y0, &k3, h))?;
    let y: Vec<f64> = (0..2 * m)
        .map(|i| y0[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    let p = Point::from(&y[..m]);
    if !g.contains(&p) {
        return Err(Error::DomainExit {
            arc_length: arc + h * speed,
        });
    }
    Ok(GeodesicState {
        point: p,
        velocity: y[m..].to_vec(),
        arc_length: arc + h * speed,
    })
}

/// Integrates the geodesic equation over affine length `length` with fixed
/// step `h` and returns every state, starting with `state0`. For a unit
/// initial velocity the affine parameter is arc length.
pub fn geodesic_integrate(g: &MetricField, state0: &GeodesicState, length: f64, h: f64) -> Result<Vec<GeodesicState>> {
    if h <= 0.0 || length < 0.0 {
        return Err(Error::InvalidArgument("geodesic step and length must be positive".into()));
    }
    let speed = state0.speed_sq(g)?.abs().sqrt();
    let n = (length / h).ceil() as usize;
    let mut path = Vec::with_capacity(n + 1);
    path.push(state0.clone());
    let mut done = 0.0;
    for _ in 0..n {
        let step = h.min(length - done);
        if step <= 0.0 {
            break;
        }
        let next = rk4_step(g, path.last().expect("nonempty"), step, speed)?;
        done += step;
        path.push(next);
    }
    Ok(path)
}

/// Unit vector along `±grad μ` at `p`.
fn radial_direction(g: &MetricField, probe: &LevelSetProbe, p: &Point, sign: f64) -> Result<(Vec<f64>, f64)> {
    let (_, dmu) = probe.mu_with_gradient(g, p)?;
    let ginv = g.matrix_at(p)?.try_inverse().ok_or(Error::SingularMetric {
        point: p.0.clone(),
        det: 0.0,
    })?;
    let grad = ginv * DVector::from_column_slice(&dmu);
    let norm_sq: f64 = grad.iter().zip(&dmu).map(|(a, b)| a * b).sum();
    if norm_sq <= 0.0 {
        return Err(Error::VanishingInvariant {
            name: format!("grad {}", probe.name()),
            point: p.0.clone(),
        });
    }
    let norm = norm_sq.sqrt();
    Ok((grad.iter().map(|v| sign * v / norm).collect(), norm))
}

/// Signed arc length from the probe's base point to the level set `μ = c`
/// along the radial geodesic through the base point.
pub fn arc_to_level(g: &MetricField, probe: &LevelSetProbe, c: f64, h: f64, max_length: f64) -> Result<f64> {
    if c <= 0.0 {
        return Err(Error::InvalidArgument("level must be positive".into()));
    }
    let base = probe.base().clone();
    if (c - 1.0).abs() < 1e-15 {
        return Ok(0.0);
    }
    let sign = if c > 1.0 { 1.0 } else { -1.0 };
    let (v, _) = radial_direction(g, probe, &base, sign)?;
    let mut state = GeodesicState::new(base, v);
    let mut mu_prev = 1.0;
    while state.arc_length < max_length {
        let next = match rk4_step(g, &state, h, 1.0) {
            Ok(n) => n,
            Err(Error::DomainExit { .. }) => break,
            Err(e) => return Err(e),
        };
        let mu_next = probe.mu(g, &next.point)?;
        if (mu_prev - c) * (mu_next - c) <= 0.0 {
            // bisection on the partial step length
            let (mut lo, mut hi) = (0.0, h);
            while hi - lo > 1e-10 {
                let mid = 0.5 * (lo + hi);
                let s = rk4_step(g, &state, mid, 1.0)?;
                let mu_mid = probe.mu(g, &s.point)?;
                if (mu_prev - c) * (mu_mid - c) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(sign * (state.arc_length + 0.5 * (lo + hi)));
        }
        state = next;
        mu_prev = mu_next;
    }
    Err(Error::LevelNotReached { level: c })
}

/// Distance between the slices `μ = c` and `μ = d` measured along the
/// radial geodesic through the probe's base point.
pub fn slice_distance(g: &MetricField, probe: &LevelSetProbe, c: f64, d: f64) -> Result<f64> {
    if c == d {
        return Ok(0.0);
    }
    let cap = 1e3;
    let sc = arc_to_level(g, probe, c, GEODESIC_STEP, cap)?;
    let sd = arc_to_level(g, probe, d, GEODESIC_STEP, cap)?;
    Ok((sd - sc).abs())
}

/// `dist / |c − d|` over several pairs.
pub fn kappa_estimates(g: &MetricField, probe: &LevelSetProbe, pairs: &[(f64, f64)]) -> Result<Vec<f64>> {
    pairs
        .iter()
        .map(|&(c, d)| Ok(slice_distance(g, probe, c, d)? / (c - d).abs()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IncompletenessOutcome {
    /// `μ → 0` is reached after this total arc length.
    Finite { length: f64 },
    /// The budget ran out with `μ` still positive.
    ExceededBudget { budget: f64 },
    /// The geodesic left the coordinate chart first.
    LeftChart { arc_length: f64 },
}

/// Follows `−grad μ` from the probe's base point. Each time `μ` drops by a
/// decade the total length is extrapolated linearly in `μ`; two consecutive
/// estimates agreeing to 1e-3 give a finite answer. The arc-length budget is
/// `10 κ` with `κ = 1/|grad μ|` at the base.
pub fn incompleteness_probe(g: &MetricField, probe: &LevelSetProbe, h: f64) -> Result<IncompletenessOutcome> {
    let base = probe.base().clone();
    let (v, grad_norm) = radial_direction(g, probe, &base, -1.0)?;
    let budget = 10.0 / grad_norm;
    let mut state = GeodesicState::new(base, v);
    let mut checkpoint = 0.1;
    let mut last_estimate: Option<f64> = None;
    loop {
        // re-aim along −grad μ so the path stays radial
        let (dir, gn) = radial_direction(g, probe, &state.point, -1.0)?;
        state.velocity = dir;
        let mu = probe.mu(g, &state.point)?;
        if mu < checkpoint {
            let estimate = state.arc_length + mu / gn;
            if let Some(prev) = last_estimate {
                if (estimate - prev).abs() <= 1e-3 * estimate.max(1.0) {
                    return Ok(IncompletenessOutcome::Finite { length: estimate });
                }
            }
            last_estimate = Some(estimate);
            while checkpoint > mu {
                checkpoint /= 10.0;
            }
        }
        if state.arc_length >= budget {
            return Ok(IncompletenessOutcome::ExceededBudget { budget });
        }
        state = match rk4_step(g, &state, h.min(budget - state.arc_length).max(1e-15), 1.0) {
            Ok(s) => s,
            Err(Error::DomainExit { arc_length }) => return Ok(IncompletenessOutcome::LeftChart { arc_length }),
            Err(e) => return Err(e),
        };
    }
}

/// Residual tests for the two Walker classification branches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaClassification {
    /// Least-squares `c₃` in `α³ = c₃ α_x²`.
    pub c3: f64,
    /// `max |α³ − c₃α_x²| / max |α³|` over the samples.
    pub branch1_residual: f64,
    /// Mean of `αα''/α'²`.
    pub ratio_mean: f64,
    /// Sample variance of `αα''/α'²` (0 when constant).
    pub ratio_variance: f64,
}

pub fn classify_walker_alpha(alpha: &Alpha, samples: &[f64]) -> Result<AlphaClassification> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let mut cube = Vec::with_capacity(samples.len());
    let mut dsq = Vec::with_capacity(samples.len());
    let mut ratios = Vec::with_capacity(samples.len());
    for &x in samples {
        if !alpha.contains(x) {
            return Err(Error::OutsideDomain {
                metric: alpha.name().to_string(),
                point: vec![x],
            });
        }
        let d = alpha.derivatives(x, 2);
        if d[1] == 0.0 {
            return Err(Error::VanishingDerivative { x });
        }
        cube.push(d[0].powi(3));
        dsq.push(d[1] * d[1]);
        ratios.push(d[0] * d[2] / (d[1] * d[1]));
    }
    let c3 = cube.iter().zip(&dsq).map(|(a, b)| a * b).sum::<f64>() / dsq.iter().map(|b| b * b).sum::<f64>();
    let scale = cube.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let branch1_residual = cube
        .iter()
        .zip(&dsq)
        .fold(0.0f64, |m, (a, b)| m.max((a - c3 * b).abs()))
        / scale;
    let n = ratios.len() as f64;
    let ratio_mean = ratios.iter().sum::<f64>() / n;
    let ratio_variance = if ratios.len() > 1 {
        ratios.iter().map(|r| (r - ratio_mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(AlphaClassification {
        c3,
        branch1_residual,
        ratio_mean,
        ratio_variance,
    })
}

/// Lower integration limit for the repeated integrals.
const TAIL_START: f64 = -8.0;
pub const QUADRATURE_TOL: f64 = 1e-10;

fn simpson_rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> Option<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Some(left + right + delta / 15.0);
    }
    if depth == 0 {
        return None;
    }
    Some(
        simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
            + simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?,
    )
}

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Option<f64> {
    if a == b {
        return Some(0.0);
    }
    // split into unit panels so the first estimate cannot miss the bump
    let panels = ((b - a).abs().ceil() as usize).max(1);
    let w = (b - a) / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let (lo, hi) = (a + i as f64 * w, a + (i + 1) as f64 * w);
        let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
        let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
        total += simpson_rec(f, lo, hi, fa, fm, fb, whole, tol / panels as f64, 40)?;
    }
    Some(total)
}

/// A function `α` with `α^{(k)}(x) = e^{-x²}` whose lower derivatives are
/// `α^{(ℓ)}(x) = ∫_{-∞}^x α^{(ℓ+1)}`, computed as single integrals
/// `∫ (x−t)^n/n! e^{-t²} dt` with `n = k − ℓ − 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariableAlpha {
    k: usize,
}

impl VariableAlpha {
    pub fn k(&self) -> usize {
        self.k
    }

    /// `α^{(ℓ)}(x)` for any `ℓ ≥ 0`.
    pub fn derivative(&self, l: usize, x: f64) -> Result<f64> {
        if l >= self.k {
            let space = JetSpace::for_vars(1);
            let j = Jet::variable(&space, l - self.k, 0, x);
            let g = (&j * &j).scale(-1.0).exp();
            return Ok(g.partial(&[(l - self.k) as u8]));
        }
        let n = (self.k - l - 1) as i32;
        let fact: f64 = (1..=n).map(f64::from).product();
        let integrand = move |t: f64| (x - t).powi(n) / fact * (-t * t).exp();
        let lo = TAIL_START.min(x - 8.0);
        adaptive_simpson(&integrand, lo, x, QUADRATURE_TOL).ok_or(Error::QuadratureFailed {
            x,
            estimate: f64::NAN,
        })
    }

    /// `α` as a jet-composable function (quadrature failure yields NaN,
    /// which the metric checks reject).
    pub fn alpha(&self) -> Alpha {
        Alpha::new(format!("gauss(k={})", self.k), *self, |x| x.is_finite())
    }

    /// Frame scale `a₁₁ = (α^{(ℓ)})^{-1/(2+ℓ)}` that normalizes level `ℓ`.
    pub fn frame_scale(&self, l: usize, x: f64) -> Result<f64> {
        let v = self.derivative(l, x)?;
        if v <= 0.0 {
            return Err(Error::DivisionByZero(format!("alpha^({l})({x}) = {v}")));
        }
        Ok(v.powf(-1.0 / (2.0 + l as f64)))
    }
}

impl UnivariateTaylor for VariableAlpha {
    fn derivatives(&self, x: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|l| self.derivative(l, x).unwrap_or(f64::NAN)).collect()
    }
}

/// `α` with `α^{(k)} = e^{-x²}`.
pub fn variable_ch_construct(k: usize) -> Result<VariableAlpha> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    Ok(VariableAlpha { k })
}

/// Exponent vector of a character of the upper-triangular group.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacterSpec {
    pub a: Vec<f64>,
}

impl CharacterSpec {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if a.is_empty() || a.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidArgument("character exponents must not all vanish".into()));
        }
        Ok(CharacterSpec { a })
    }

    /// The character splits iff the exponents do not sum to zero.
    pub fn splits(&self) -> bool {
        self.a.iter().sum::<f64>() != 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacterValue {
    pub lambda: f64,
    pub split: bool,
}

/// `λ(H) = Π h_ii^{a_i}`.
pub fn character_eval(spec: &CharacterSpec, h: &DMatrix<f64>) -> Result<CharacterValue> {
    let n = spec.a.len();
    if h.nrows() != n || h.ncols() != n {
        return Err(Error::DimensionMismatch(h.nrows(), n));
    }
    for i in 0..n {
        for j in 0..i {
            if h[(i, j)] != 0.0 {
                return Err(Error::InvalidArgument("matrix is not upper triangular".into()));
            }
        }
        if h[(i, i)] <= 0.0 {
            return Err(Error::NonPositiveDiagonal {
                index: i,
                value: h[(i, i)],
            });
        }
    }
    let lambda = (0..n).map(|i| h[(i, i)].powf(spec.a[i])).product();
    Ok(CharacterValue {
        lambda,
        split: spec.splits(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_integrates_gaussian() {
        let v = adaptive_simpson(&|t: f64| (-t * t).exp(), -8.0, 8.0, 1e-12).unwrap();
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn character_of_scalar() {
        let spec = CharacterSpec::new(vec![1.0]).unwrap();
        let v = character_eval(&spec, &DMatrix::from_element(1, 1, 5.0)).unwrap();
        assert_eq!(v.lambda, 5.0);
        assert!(v.split);
    }

    #[test]
    fn top_derivative_is_gaussian() {
        let a = variable_ch_construct(2).unwrap();
        assert_eq!(a.derivative(2, 0.0).unwrap(), 1.0);
        assert!((a.derivative(3, 1.0).unwrap() + 2.0 * (-1.0f64).exp()).abs() < 1e-14);
    }
}
