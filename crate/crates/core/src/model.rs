//! Pointwise curvature models and their matching under linear isometries,
//! homotheties and per-level (variable) homotheties.
//!
//! A model at `P` is the Gram matrix of a frame of `T_P M` together with the
//! components of `R, ∇R, ..., ∇^k R` in that frame. Two models match as
//! homotheties when some frame map `φ` with `φᵀ ε² φ = ε¹` satisfies
//! `φ* c^{(ℓ),2} = λ^{-ℓ-2} c^{(ℓ),1}` for every level.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::LocalGeometry;
use crate::metric::{MetricField, Point, Signature};
use crate::tensor::{Slot, TensorAtPoint};

/// Highest model level the library builds.
pub const MAX_MODEL_LEVEL: usize = 4;

/// Per-level relative residual below which a match is accepted.
pub const SUCCESS_TOL: f64 = 1e-7;
/// Relative residual above which a failed search is reported as certified.
pub const FAILURE_TOL: f64 = 1e-3;
/// Frobenius norm below which a level counts as identically zero.
pub const ZERO_TOL: f64 = 1e-10;

/// Signature-ordered pseudo-orthonormal frame of `g` by modified
/// Gram–Schmidt with pivoting. Columns are the frame vectors in coordinates;
/// `Fᵀ g F = diag(-1, .., -1, +1, .., +1)`.
pub fn canonical_frame(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = g.nrows();
    let scale = g.amax().max(f64::MIN_POSITIVE);
    let null_tol = 1e-10 * scale;
    let ip = |a: &[f64], b: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                s += a[i] * g[(i, j)] * b[j];
            }
        }
        s
    };
    let mut candidates: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut chosen: Vec<(f64, Vec<f64>)> = Vec::with_capacity(m);
    while !candidates.is_empty() {
        let mut best: Option<(usize, Option<(usize, f64)>, f64)> = None;
        for (a, v) in candidates.iter().enumerate() {
            let n = ip(v, v);
            if n.abs() > null_tol && best.as_ref().is_none_or(|b| n.abs() > b.2.abs()) {
                best = Some((a, None, n));
            }
        }
        if best.is_none() {
            // every candidate is null: try pair sums v_a ± v_b
            for a in 0..candidates.len() {
                for b in (a + 1)..candidates.len() {
                    for sgn in [1.0, -1.0] {
                        let w: Vec<f64> = (0..m).map(|i| candidates[a][i] + sgn * candidates[b][i]).collect();
                        let n = ip(&w, &w);
                        if n.abs() > null_tol && best.as_ref().is_none_or(|bb| n.abs() > bb.2.abs()) {
                            best = Some((a, Some((b, sgn)), n));
                        }
                    }
                }
            }
        }
        let (a, pair, n) = best.ok_or(Error::GramSchmidtBreakdown)?;
        let mut v = candidates[a].clone();
        if let Some((b, sgn)) = pair {
            for i in 0..m {
                v[i] += sgn * candidates[b][i];
            }
        }
        candidates.remove(a);
        let inv = 1.0 / n.abs().sqrt();
        v.iter_mut().for_each(|c| *c *= inv);
        let sign = n.signum();
        for w in candidates.iter_mut() {
            let proj = ip(w, &v) * sign;
            for i in 0..m {
                w[i] -= proj * v[i];
            }
        }
        // re-orthogonalize against earlier choices to limit drift
        for (s, u) in &chosen {
            let proj = ip(&v, u) * s;
            for i in 0..m {
                v[i] -= proj * u[i];
            }
        }
        chosen.push((sign, v));
        // drop candidates that became the zero vector (after a pair pivot)
        candidates.retain(|w| w.iter().any(|c| c.abs() > 1e-14));
    }
    if chosen.len() != m {
        return Err(Error::GramSchmidtBreakdown);
    }
    chosen.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite signs"));
    Ok(DMatrix::from_fn(m, m, |i, j| chosen[j].1[i]))
}

/// A k-curvature model: Gram matrix plus `c^{(ℓ)}` for `ℓ = 0..=k`, all
/// components covariant.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureModel {
    gram: DMatrix<f64>,
    signature: Signature,
    components: Vec<TensorAtPoint>,
}

impl CurvatureModel {
    pub fn new(gram: DMatrix<f64>, components: Vec<TensorAtPoint>) -> Result<Self> {
        let m = gram.nrows();
        if gram.ncols() != m {
            return Err(Error::DimensionMismatch(gram.ncols(), m));
        }
        if (&gram - gram.transpose()).amax() > 1e-12 * gram.amax() {
            return Err(Error::InvalidArgument("gram matrix is not symmetric".into()));
        }
        let signature = Signature::of_matrix(&gram, 1e-12).ok_or(Error::SingularMetric {
            point: vec![],
            det: gram.determinant(),
        })?;
        for (l, c) in components.iter().enumerate() {
            if c.dim() != m || c.rank() != l + 4 || c.variance().iter().any(|s| *s != Slot::Co) {
                return Err(Error::InvalidArgument(format!(
                    "level {l} component must be a covariant rank-{} tensor of dim {m}",
                    l + 4
                )));
            }
        }
        if components.is_empty() {
            return Err(Error::InvalidArgument("model needs at least level 0".into()));
        }
        Ok(CurvatureModel {
            gram,
            signature,
            components,
        })
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    /// Highest level `k`.
    pub fn level(&self) -> usize {
        self.components.len() - 1
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn component(&self, level: usize) -> &TensorAtPoint {
        &self.components[level]
    }

    pub fn components(&self) -> &[TensorAtPoint] {
        &self.components
    }

    /// Frobenius norm of `c^{(ℓ)}` treating the frame as orthonormal.
    pub fn norm(&self, level: usize) -> f64 {
        self.components[level].frobenius()
    }

    pub fn is_zero_at(&self, level: usize) -> bool {
        self.norm(level) <= ZERO_TOL
    }

    /// The same model written in the frame `e'_a = Σ_i B_{ia} e_i`.
    pub fn change_frame(&self, b: &DMatrix<f64>) -> Result<CurvatureModel> {
        CurvatureModel::new(
            b.transpose() * &self.gram * b,
            self.components.iter().map(|c| c.pullback(b)).collect(),
        )
    }

    /// Rewrites the model in a canonical pseudo-orthonormal frame.
    pub fn to_canonical(&self) -> Result<CurvatureModel> {
        let f = canonical_frame(&self.gram)?;
        self.change_frame(&f)
    }

    /// Only levels `0..=k`.
    pub fn truncate(&self, k: usize) -> CurvatureModel {
        CurvatureModel {
            gram: self.gram.clone(),
            signature: self.signature,
            components: self.components[..=k.min(self.level())].to_vec(),
        }
    }

    /// Replaces `c^{(ℓ)}` by `s^{ℓ+2} c^{(ℓ)}`.
    pub fn rescaled(&self, s: f64) -> CurvatureModel {
        CurvatureModel {
            gram: self.gram.clone(),
            signature: self.signature,
            components: self
                .components
                .iter()
                .enumerate()
                .map(|(l, c)| c.scale(s.powi(l as i32 + 2)))
                .collect(),
        }
    }

    /// `∇^ℓ𝔯` in operator form: slot 3 raised with the Gram matrix.
    pub fn operator_form(&self, level: usize) -> Result<TensorAtPoint> {
        let inv = self.gram.clone().try_inverse().ok_or(Error::SingularMetric {
            point: vec![],
            det: self.gram.determinant(),
        })?;
        Ok(self.components[level].raise(3, &inv))
    }

    /// Largest violation of the curvature symmetries (skew in both pairs,
    /// first Bianchi on the first three slots, pair interchange at level 0).
    pub fn symmetry_defect(&self) -> f64 {
        let m = self.dim();
        let mut worst = 0.0f64;
        for (l, c) in self.components.iter().enumerate() {
            for idx in crate::tensor::multi_indices(m, l + 4) {
                let v = c.get(&idx);
                let mut sw = idx.clone();
                sw.swap(0, 1);
                worst = worst.max((v + c.get(&sw)).abs());
                let mut sw = idx.clone();
                sw.swap(2, 3);
                worst = worst.max((v + c.get(&sw)).abs());
                let mut a = idx.clone();
                let mut b = idx.clone();
                (a[0], a[1], a[2]) = (idx[1], idx[2], idx[0]);
                (b[0], b[1], b[2]) = (idx[2], idx[0], idx[1]);
                worst = worst.max((v + c.get(&a) + c.get(&b)).abs());
                if l == 0 {
                    let pair = [idx[2], idx[3], idx[0], idx[1]];
                    worst = worst.max((v - c.get(&pair)).abs());
                }
            }
        }
        worst
    }
}

/// `∇^ℓR(P)`, `ℓ = 0..=k`, in the canonical frame of `g(P)`.
pub fn build_model(g: &MetricField, p: &Point, k: usize) -> Result<CurvatureModel> {
    if k > MAX_MODEL_LEVEL {
        return Err(Error::OrderTooHigh {
            requested: k,
            max: MAX_MODEL_LEVEL,
        });
    }
    let geo = LocalGeometry::new(g, p, k + 2)?;
    let frame = canonical_frame(geo.metric())?;
    model_in_frame(&geo, k, &frame)
}

/// `∇^ℓR(P)` in a caller-supplied frame (columns in coordinates).
pub fn build_model_in_frame(g: &MetricField, p: &Point, k: usize, frame: &DMatrix<f64>) -> Result<CurvatureModel> {
    if k > MAX_MODEL_LEVEL {
        return Err(Error::OrderTooHigh {
            requested: k,
            max: MAX_MODEL_LEVEL,
        });
    }
    let geo = LocalGeometry::new(g, p, k + 2)?;
    model_in_frame(&geo, k, frame)
}

fn model_in_frame(geo: &LocalGeometry, k: usize, frame: &DMatrix<f64>) -> Result<CurvatureModel> {
    let m = geo.dim();
    if frame.nrows() != m || frame.ncols() != m {
        return Err(Error::DimensionMismatch(frame.nrows(), m));
    }
    let levels = geo.curvature_derivatives(k)?;
    CurvatureModel::new(
        frame.transpose() * geo.metric() * frame,
        levels.iter().map(|c| c.pullback(frame)).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatchMode {
    /// `λ = 1` at every level.
    Isometry,
    /// One `λ` shared by all levels.
    Homothety,
    /// Each level matched on its own.
    Variable,
}

impl fmt::Display for MatchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMode::Isometry => "isometry",
            MatchMode::Homothety => "homothety",
            MatchMode::Variable => "variable",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MatchVerdict {
    Success,
    Inconclusive,
    CertifiedFailure,
}

impl MatchVerdict {
    pub fn from_residual(r: f64) -> Self {
        if r < SUCCESS_TOL {
            MatchVerdict::Success
        } else if r > FAILURE_TOL {
            MatchVerdict::CertifiedFailure
        } else {
            MatchVerdict::Inconclusive
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MatchVerdict::Success => "success",
            MatchVerdict::Inconclusive => "inconclusive",
            MatchVerdict::CertifiedFailure => "certified-failure",
        }
    }
}

/// Outcome of a search: the best frame map found, its scaling and
/// per-level relative residuals `‖φ*c² − λ^{-ℓ-2}c¹‖ / ‖λ^{-ℓ-2}c¹‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct HomothetyMatch {
    pub mode: MatchMode,
    pub frame_map: DMatrix<f64>,
    pub lambda: f64,
    pub residuals: Vec<f64>,
    pub verdict: MatchVerdict,
    /// Index of the start that produced the reported map; `None` when the
    /// verdict was decided without a search.
    pub start: Option<usize>,
}

impl HomothetyMatch {
    pub fn converged(&self) -> bool {
        self.verdict == MatchVerdict::Success
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |a, b| a.max(*b))
    }

    /// `max |φᵀ ε² φ − ε¹|`.
    pub fn gram_defect(&self, m1: &CurvatureModel, m2: &CurvatureModel) -> f64 {
        (self.frame_map.transpose() * m2.gram() * &self.frame_map - m1.gram()).amax()
    }
}

/// Search controls. The defaults give 64 quasi-random starts per reflection
/// and at most 200 Levenberg–Marquardt iterations each.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub starts: usize,
    pub max_iterations: usize,
    pub spread: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            starts: 64,
            max_iterations: 200,
            spread: 2.0,
        }
    }
}

fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [usize; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];

/// Halton point `i` in `[-spread, spread]^d`; start 0 is the origin.
fn halton_start(i: usize, d: usize, spread: f64) -> Vec<f64> {
    if i == 0 {
        return vec![0.0; d];
    }
    (0..d).map(|a| spread * (2.0 * radical_inverse(i, PRIMES[a]) - 1.0)).collect()
}

/// Basis `ε A` of the Lie algebra of `O(ε)` for a diagonal `±1` Gram matrix.
fn isometry_generators(gram: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let m = gram.nrows();
    let mut out = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            let mut a = DMatrix::zeros(m, m);
            a[(i, j)] = 1.0;
            a[(j, i)] = -1.0;
            out.push(gram * a);
        }
    }
    out
}

fn combine(gens: &[DMatrix<f64>], theta: &[f64]) -> DMatrix<f64> {
    let m = gens[0].nrows();
    let mut k = DMatrix::zeros(m, m);
    for (g, t) in gens.iter().zip(theta) {
        k += g * *t;
    }
    k
}

fn inner(a: &TensorAtPoint, b: &TensorAtPoint) -> f64 {
    a.entries().iter().zip(b.entries()).map(|(x, y)| x * y).sum()
}

/// Frame-map search between two canonical models restricted to `levels`.
struct Problem<'a> {
    c1: Vec<&'a TensorAtPoint>,
    c2: Vec<&'a TensorAtPoint>,
    exps: Vec<i32>,
    norms: Vec<f64>,
    /// Position in `c1` of the level fixing λ; `None` for isometries.
    pivot: Option<usize>,
}

struct Evaluation {
    residual: Vec<f64>,
    per_level: Vec<f64>,
    lambda: f64,
}

impl Problem<'_> {
    fn evaluate(&self, phi: &DMatrix<f64>) -> Evaluation {
        let pulled: Vec<TensorAtPoint> = self.c2.iter().map(|c| c.pullback(phi)).collect();
        let lambda = match self.pivot {
            None => 1.0,
            Some(p) => {
                let mu = inner(&pulled[p], self.c1[p]) / (self.norms[p] * self.norms[p]);
                let e = self.exps[p];
                let mag = mu.abs().max(1e-300).powf(-1.0 / e as f64);
                if e % 2 == 1 && mu < 0.0 {
                    -mag
                } else {
                    mag
                }
            }
        };
        let mut residual = Vec::new();
        let mut per_level = Vec::with_capacity(self.c1.len());
        for (i, (c1, pc2)) in self.c1.iter().zip(&pulled).enumerate() {
            let mu = lambda.powi(-self.exps[i]);
            let denom = mu.abs() * self.norms[i];
            let mut ss = 0.0;
            for (a, b) in pc2.entries().iter().zip(c1.entries()) {
                let r = (a - mu * b) / denom;
                ss += r * r;
                residual.push(r);
            }
            per_level.push(ss.sqrt());
        }
        Evaluation {
            residual,
            per_level,
            lambda,
        }
    }

    fn cost(e: &Evaluation) -> f64 {
        e.residual.iter().map(|r| r * r).sum()
    }

    /// Derivative of the residual along `φ ↦ φ exp(δ X_a)` at `δ = 0`. The
    /// pullback's derivative is `Σ_s` (X_a applied in slot `s`).
    fn jacobian(&self, phi: &DMatrix<f64>, ev: &Evaluation, gens: &[DMatrix<f64>]) -> DMatrix<f64> {
        let pulled: Vec<TensorAtPoint> = self.c2.iter().map(|c| c.pullback(phi)).collect();
        let mut jac = DMatrix::zeros(ev.residual.len(), gens.len());
        for (a, g) in gens.iter().enumerate() {
            let gt = g.transpose();
            let dp: Vec<Vec<f64>> = pulled
                .iter()
                .map(|t| {
                    let mut acc = vec![0.0; t.entries().len()];
                    for s in 0..t.rank() {
                        for (x, y) in acc.iter_mut().zip(t.apply_on_slot(s, &gt, Slot::Co).entries()) {
                            *x += y;
                        }
                    }
                    acc
                })
                .collect();
            // d(mu)/mu for the pivot level; zero for isometries
            let dlog_mu = match self.pivot {
                None => 0.0,
                Some(p) => {
                    let mu = inner(&pulled[p], self.c1[p]);
                    let dmu: f64 = dp[p].iter().zip(self.c1[p].entries()).map(|(x, y)| x * y).sum();
                    if mu == 0.0 {
                        0.0
                    } else {
                        dmu / mu
                    }
                }
            };
            let mut row = 0;
            for (i, t) in pulled.iter().enumerate() {
                let q = match self.pivot {
                    None => 0.0,
                    Some(p) => self.exps[i] as f64 / self.exps[p] as f64,
                };
                let denom = ev.lambda.abs().powi(-self.exps[i]) * self.norms[i];
                for (x, y) in dp[i].iter().zip(t.entries()) {
                    jac[(row, a)] = (x - q * dlog_mu * y) / denom;
                    row += 1;
                }
            }
        }
        jac
    }

    /// Levenberg–Marquardt with right-multiplicative updates `φ exp(δ·X)`.
    fn refine(&self, mut phi: DMatrix<f64>, gens: &[DMatrix<f64>], max_iter: usize) -> (DMatrix<f64>, Evaluation) {
        let d = gens.len();
        let mut ev = self.evaluate(&phi);
        let mut cost = Self::cost(&ev);
        let mut nu = 1e-3;
        let mut stalled = 0;
        for _ in 0..max_iter {
            if ev.per_level.iter().all(|r| *r < 1e-13) {
                break;
            }
            let jac = self.jacobian(&phi, &ev, gens);
            let rvec = nalgebra::DVector::from_column_slice(&ev.residual);
            let jtj = jac.transpose() * &jac;
            let jtr = jac.transpose() * rvec;
            let mut accepted = false;
            while nu < 1e12 {
                let mut lhs = jtj.clone();
                for a in 0..d {
                    lhs[(a, a)] += nu * (1.0 + jtj[(a, a)]);
                }
                let Some(step) = lhs.lu().solve(&(-&jtr)) else {
                    nu *= 4.0;
                    continue;
                };
                let cand = &phi * combine(gens, step.as_slice()).exp();
                let cev = self.evaluate(&cand);
                let ccost = Self::cost(&cev);
                if ccost.is_finite() && ccost < cost {
                    let gain = (cost - ccost) / cost.max(f64::MIN_POSITIVE);
                    stalled = if gain < 1e-6 { stalled + 1 } else { 0 };
                    phi = cand;
                    ev = cev;
                    cost = ccost;
                    nu = (nu / 3.0).max(1e-12);
                    accepted = true;
                    break;
                }
                nu *= 4.0;
            }
            if !accepted || stalled >= 3 {
                break;
            }
        }
        (phi, ev)
    }
}

fn check_pair(m1: &CurvatureModel, m2: &CurvatureModel) -> Result<()> {
    if m1.dim() != m2.dim() {
        return Err(Error::DimensionMismatch(m1.dim(), m2.dim()));
    }
    if m1.level() != m2.level() {
        return Err(Error::LevelMismatch(m1.level(), m2.level()));
    }
    if m1.signature() != m2.signature() {
        return Err(Error::SignatureMismatch {
            expected: m1.signature().as_pair(),
            found: m2.signature().as_pair(),
        });
    }
    Ok(())
}

fn is_canonical(gram: &DMatrix<f64>) -> bool {
    let m = gram.nrows();
    let mut seen_pos = false;
    for i in 0..m {
        for j in 0..m {
            let v = gram[(i, j)];
            if i != j && v.abs() > 1e-12 {
                return false;
            }
        }
        let v = gram[(i, i)];
        if (v.abs() - 1.0).abs() > 1e-12 || (v < 0.0 && seen_pos) {
            return false;
        }
        seen_pos |= v > 0.0;
    }
    true
}

fn search(
    m1: &CurvatureModel,
    m2: &CurvatureModel,
    levels: &[usize],
    mode: MatchMode,
    opts: &SearchOptions,
) -> Result<HomothetyMatch> {
    // work in canonical frames and transport the answer back
    let (f1, f2) = (canonical_frame(m1.gram())?, canonical_frame(m2.gram())?);
    let (a, b) = if is_canonical(m1.gram()) && is_canonical(m2.gram()) {
        (m1.clone(), m2.clone())
    } else {
        (m1.change_frame(&f1)?, m2.change_frame(&f2)?)
    };
    let to_original = |phi: &DMatrix<f64>| -> DMatrix<f64> {
        if is_canonical(m1.gram()) && is_canonical(m2.gram()) {
            phi.clone()
        } else {
            &f2 * phi * f1.clone().try_inverse().expect("frame invertible")
        }
    };
    let m = a.dim();
    let nlev = levels.len();
    let zero1: Vec<bool> = levels.iter().map(|&l| a.is_zero_at(l)).collect();
    let zero2: Vec<bool> = levels.iter().map(|&l| b.is_zero_at(l)).collect();
    let decided = |lambda: f64, residuals: Vec<f64>, verdict| HomothetyMatch {
        mode,
        frame_map: to_original(&DMatrix::identity(m, m)),
        lambda,
        residuals,
        verdict,
        start: None,
    };
    if zero1.iter().all(|z| *z) && zero2.iter().all(|z| *z) {
        return Ok(decided(1.0, vec![0.0; nlev], MatchVerdict::Success));
    }
    if mode != MatchMode::Isometry && (zero1.iter().all(|z| *z) || zero2.iter().all(|z| *z)) {
        return Err(Error::NoScaling);
    }
    if zero1 != zero2 {
        // pullback by an invertible map cannot turn zero into nonzero
        let residuals = zero1
            .iter()
            .zip(&zero2)
            .map(|(x, y)| if x == y { 0.0 } else { f64::INFINITY })
            .collect();
        return Ok(decided(1.0, residuals, MatchVerdict::CertifiedFailure));
    }

    let active: Vec<usize> = (0..nlev).filter(|&i| !zero1[i]).collect();
    let problem = Problem {
        c1: active.iter().map(|&i| a.component(levels[i])).collect(),
        c2: active.iter().map(|&i| b.component(levels[i])).collect(),
        exps: active.iter().map(|&i| levels[i] as i32 + 2).collect(),
        norms: active.iter().map(|&i| a.norm(levels[i])).collect(),
        pivot: if mode == MatchMode::Isometry { None } else { Some(0) },
    };
    let gens = isometry_generators(a.gram());
    let d = gens.len();
    let patterns: Vec<DMatrix<f64>> = (0..(1usize << m))
        .map(|bits| DMatrix::from_fn(m, m, |i, j| if i != j { 0.0 } else if bits >> i & 1 == 1 { -1.0 } else { 1.0 }))
        .collect();

    let mut best: Option<(f64, usize, DMatrix<f64>, Evaluation)> = None;
    'outer: for s in 0..opts.starts.max(1) {
        let theta = halton_start(s, d, opts.spread);
        let base = combine(&gens, &theta).exp();
        for (pi, sign) in patterns.iter().enumerate() {
            let start_id = s * patterns.len() + pi;
            let (phi, ev) = problem.refine(sign * &base, &gens, opts.max_iterations);
            let worst = ev.per_level.iter().fold(0.0f64, |x, y| x.max(*y));
            let better = best.as_ref().is_none_or(|(w, _, _, _)| worst < *w);
            if worst.is_finite() && better {
                best = Some((worst, start_id, phi, ev));
            }
            if worst < SUCCESS_TOL * 1e-2 {
                break 'outer;
            }
        }
    }
    let (worst, start_id, mut phi, ev) = best.expect("at least one start");
    let mut lambda = ev.lambda;
    if lambda < 0.0 {
        // (−φ, −λ) matches whenever (φ, λ) does
        phi = -phi;
        lambda = -lambda;
    }
    let mut residuals = vec![0.0; nlev];
    for (k, &i) in active.iter().enumerate() {
        residuals[i] = ev.per_level[k];
    }
    Ok(HomothetyMatch {
        mode,
        frame_map: to_original(&phi),
        lambda,
        residuals,
        verdict: MatchVerdict::from_residual(worst),
        start: Some(start_id),
    })
}

/// Linear isometry `φ: T_P → T_Q` with `φ*c^{(ℓ),2} = c^{(ℓ),1}` for all levels.
pub fn isometry_match(m1: &CurvatureModel, m2: &CurvatureModel) -> Result<HomothetyMatch> {
    isometry_match_with(m1, m2, &SearchOptions::default())
}

pub fn isometry_match_with(m1: &CurvatureModel, m2: &CurvatureModel, opts: &SearchOptions) -> Result<HomothetyMatch> {
    check_pair(m1, m2)?;
    let levels: Vec<usize> = (0..=m1.level()).collect();
    search(m1, m2, &levels, MatchMode::Isometry, opts)
}

/// `(φ, λ)` with `φ*c^{(ℓ),2} = λ^{-ℓ-2} c^{(ℓ),1}` for all levels.
pub fn homothety_match(m1: &CurvatureModel, m2: &CurvatureModel) -> Result<HomothetyMatch> {
    homothety_match_with(m1, m2, &SearchOptions::default())
}

pub fn homothety_match_with(m1: &CurvatureModel, m2: &CurvatureModel, opts: &SearchOptions) -> Result<HomothetyMatch> {
    check_pair(m1, m2)?;
    let levels: Vec<usize> = (0..=m1.level()).collect();
    search(m1, m2, &levels, MatchMode::Homothety, opts)
}

/// Whether each level's scaling is pinned to 1 or free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariableKind {
    FixedScale,
    FreeScale,
}

/// Matches every level independently. Each entry carries its own `(φ_ℓ, λ_ℓ)`
/// and a single-entry residual list. Levels where both models vanish
/// succeed with `φ = id`, `λ = 1`.
pub fn variable_match(m1: &CurvatureModel, m2: &CurvatureModel, kind: VariableKind) -> Result<Vec<HomothetyMatch>> {
    variable_match_with(m1, m2, kind, &SearchOptions::default())
}

pub fn variable_match_with(
    m1: &CurvatureModel,
    m2: &CurvatureModel,
    kind: VariableKind,
    opts: &SearchOptions,
) -> Result<Vec<HomothetyMatch>> {
    check_pair(m1, m2)?;
    (0..=m1.level())
        .map(|l| {
            let inner_mode = match kind {
                VariableKind::FixedScale => MatchMode::Isometry,
                VariableKind::FreeScale => MatchMode::Homothety,
            };
            match search(m1, m2, &[l], inner_mode, opts) {
                Ok(mut hm) => {
                    hm.mode = MatchMode::Variable;
                    Ok(hm)
                }
                Err(Error::NoScaling) => Ok(HomothetyMatch {
                    mode: MatchMode::Variable,
                    frame_map: DMatrix::identity(m1.dim(), m1.dim()),
                    lambda: 1.0,
                    residuals: vec![f64::INFINITY],
                    verdict: MatchVerdict::CertifiedFailure,
                    start: None,
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Operator-form check: with `Φ = λφ`, the maximum over levels of
/// `‖𝔯²(Φ·, Φ·; Φ…)Φ − Φ 𝔯¹‖ / ‖Φ 𝔯¹‖`.
pub fn operator_form_check(hm: &HomothetyMatch, m1: &CurvatureModel, m2: &CurvatureModel) -> Result<f64> {
    check_pair(m1, m2)?;
    let big_phi = &hm.frame_map * hm.lambda;
    let phi_t = big_phi.transpose();
    let mut worst = 0.0f64;
    for l in 0..=m1.level() {
        let op1 = m1.operator_form(l)?;
        let op2 = m2.operator_form(l)?;
        let rank = l + 4;
        let mut lhs = op2;
        for s in 0..rank {
            if s != 3 {
                lhs = lhs.apply_on_slot(s, &phi_t, Slot::Co);
            }
        }
        let rhs = op1.apply_on_slot(3, &big_phi, Slot::Contra);
        let scale = rhs.frobenius().max(lhs.frobenius());
        if scale <= ZERO_TOL {
            continue;
        }
        let diff: f64 = lhs
            .entries()
            .iter()
            .zip(rhs.entries())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(diff / scale);
    }
    Ok(worst)
}

/// Dimensions `d_s = dim 𝔥𝔬^s` of the stabilizer chain and the index where
/// it becomes constant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SingerProfile {
    pub dims: Vec<usize>,
    pub singer_number: usize,
}

impl SingerProfile {
    fn from_dims(dims: Vec<usize>) -> Self {
        let last = *dims.last().expect("nonempty");
        let mut s = dims.len() - 1;
        while s > 0 && dims[s - 1] == last {
            s -= 1;
        }
        SingerProfile { dims, singer_number: s }
    }
}

/// Derivation action of an endomorphism `a` on `∇^s𝔯` (output slot 3):
/// `a ∘ T − Σ_inputs T(.., a·, ..)`.
fn derivation_action(t: &TensorAtPoint, a: &DMatrix<f64>) -> TensorAtPoint {
    let at = a.transpose();
    let mut out = t.apply_on_slot(3, a, Slot::Contra);
    for s in 0..t.rank() {
        if s != 3 {
            let term = t.apply_on_slot(s, &at, Slot::Co);
            out = TensorAtPoint::new(
                t.dim(),
                out.variance().to_vec(),
                out.entries().iter().zip(term.entries()).map(|(x, y)| x - y).collect(),
            );
        }
    }
    out
}

/// Stabilizer dimensions of `𝔯, ∇𝔯, ..., ∇^{s_max}𝔯` inside the algebra of
/// `g`-skew endomorphisms plus multiples of the identity.
pub fn singer_profile(g: &MetricField, p: &Point, s_max: usize) -> Result<SingerProfile> {
    let geo = LocalGeometry::new(g, p, s_max + 2)?;
    let m = geo.dim();
    let ginv = geo.inverse_metric();
    let mut basis: Vec<DMatrix<f64>> = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            let mut s = DMatrix::zeros(m, m);
            s[(i, j)] = 1.0;
            s[(j, i)] = -1.0;
            basis.push(ginv * s);
        }
    }
    basis.push(DMatrix::identity(m, m));
    let nb = basis.len();
    let ops: Vec<TensorAtPoint> = geo
        .operator_derivative_jets(s_max)?
        .iter()
        .map(|t| t.at_point())
        .collect();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut dims = Vec::with_capacity(s_max + 1);
    for op in &ops {
        let norm = op.frobenius();
        if norm > ZERO_TOL {
            let cols: Vec<TensorAtPoint> = basis.iter().map(|a| derivation_action(op, a)).collect();
            for r in 0..op.entries().len() {
                rows.push(cols.iter().map(|c| c.entries()[r] / norm).collect());
            }
        }
        let rank = if rows.is_empty() {
            0
        } else {
            let mat = DMatrix::from_fn(rows.len(), nb, |r, c| rows[r][c]);
            let sv = mat.singular_values();
            let smax = sv.max();
            sv.iter().filter(|v| **v > 1e-9 * smax).count()
        };
        dims.push(nb - rank);
    }
    Ok(SingerProfile::from_dims(dims))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lorentz_gram() -> DMatrix<f64> {
        Signature::lorentzian(3).canonical_gram()
    }

    #[test]
    fn canonical_frame_of_null_pair() {
        let g = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let f = canonical_frame(&g).unwrap();
        let gram = f.transpose() * &g * &f;
        assert!((gram - lorentz_gram()).amax() < 1e-14);
    }

    #[test]
    fn all_null_basis_uses_pair_pivot() {
        let g = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let f = canonical_frame(&g).unwrap();
        let gram = f.transpose() * &g * &f;
        assert!((gram - Signature::lorentzian(2).canonical_gram()).amax() < 1e-14);
    }

    #[test]
    fn analytic_jacobian_matches_differences() {
        let g = crate::zoo::walker_metric(&crate::zoo::WalkerFun::log(1.0));
        let m1 = build_model(&g, &Point::from([0.1, 0.9, 0.0]), 1).unwrap().to_canonical().unwrap();
        let m2 = build_model(&g, &Point::from([0.3, 1.4, 0.2]), 1).unwrap().to_canonical().unwrap();
        let gens = isometry_generators(m1.gram());
        let phi = combine(&gens, &[0.3, -0.2, 0.5]).exp();
        for pivot in [None, Some(0)] {
            let pr = Problem {
                c1: vec![m1.component(0), m1.component(1)],
                c2: vec![m2.component(0), m2.component(1)],
                exps: vec![2, 3],
                norms: vec![m1.norm(0), m1.norm(1)],
                pivot,
            };
            let ev = pr.evaluate(&phi);
            let jac = pr.jacobian(&phi, &ev, &gens);
            let h = 1e-6;
            for (a, gen) in gens.iter().enumerate() {
                let plus = pr.evaluate(&(&phi * (gen * h).exp()));
                let minus = pr.evaluate(&(&phi * (gen * -h).exp()));
                for r in 0..ev.residual.len() {
                    let fd = (plus.residual[r] - minus.residual[r]) / (2.0 * h);
                    assert!((fd - jac[(r, a)]).abs() < 1e-6 * (1.0 + fd.abs()), "{pivot:?} r{r} a{a}: {fd} vs {}", jac[(r, a)]);
                }
            }
        }
    }

    #[test]
    fn halton_points_fill_box() {
        let p = halton_start(5, 3, 2.0);
        assert!(p.iter().all(|x| x.abs() <= 2.0));
        assert_eq!(halton_start(0, 3, 2.0), vec![0.0; 3]);
    }

    #[test]
    fn generators_preserve_gram() {
        let e = lorentz_gram();
        for k in isometry_generators(&e) {
            let q = k.exp();
            assert!((q.transpose() * &e * &q - &e).amax() < 1e-13);
        }
    }

    #[test]
    fn zero_models_match_trivially() {
        let e = lorentz_gram();
        let z = CurvatureModel::new(e.clone(), vec![TensorAtPoint::covariant(3, 4, vec![0.0; 81])]).unwrap();
        let hm = homothety_match(&z, &z).unwrap();
        assert!(hm.converged());
        assert_eq!(hm.lambda, 1.0);
    }
}
