//! Coordinate-chart metrics whose components can be expanded as jets.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::jet::{Jet, MAX_JET_ORDER};

/// Chart coordinates of a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: impl Into<Vec<f64>>) -> Self {
        Point(coords.into())
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

impl From<&[f64]> for Point {
    fn from(c: &[f64]) -> Self {
        Point(c.to_vec())
    }
}

impl<const N: usize> From<[f64; N]> for Point {
    fn from(c: [f64; N]) -> Self {
        Point(c.to_vec())
    }
}

/// `(negative, positive)` eigenvalue counts of the metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature {
    pub negative: usize,
    pub positive: usize,
}

impl Signature {
    pub fn new(negative: usize, positive: usize) -> Self {
        Signature { negative, positive }
    }

    pub fn riemannian(m: usize) -> Self {
        Signature::new(0, m)
    }

    pub fn lorentzian(m: usize) -> Self {
        Signature::new(1, m - 1)
    }

    pub fn dim(&self) -> usize {
        self.negative + self.positive
    }

    pub fn as_pair(&self) -> (usize, usize) {
        (self.negative, self.positive)
    }

    /// The canonical Gram matrix `diag(-1, ..., -1, +1, ..., +1)`.
    pub fn canonical_gram(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.dim(), self.dim());
        for i in 0..self.dim() {
            g[(i, i)] = if i < self.negative { -1.0 } else { 1.0 };
        }
        g
    }

    /// Signature of a symmetric matrix; `None` when an eigenvalue is within
    /// `tol * spectral radius` of zero.
    pub fn of_matrix(g: &DMatrix<f64>, tol: f64) -> Option<Signature> {
        let eig = SymmetricEigen::new(g.clone());
        let radius = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut neg = 0;
        let mut pos = 0;
        for &v in eig.eigenvalues.iter() {
            if v.abs() <= tol * radius.max(f64::MIN_POSITIVE) {
                return None;
            }
            if v < 0.0 {
                neg += 1;
            } else {
                pos += 1;
            }
        }
        Some(Signature::new(neg, pos))
    }
}

/// Metric components as a function of coordinate jets; returns the full
/// `m × m` grid in row-major order.
pub type ComponentFn = dyn Fn(&[Jet]) -> Vec<Jet> + Send + Sync;
pub type DomainFn = dyn Fn(&[f64]) -> bool + Send + Sync;

/// A pseudo-Riemannian metric on a single coordinate chart.
#[derive(Clone)]
pub struct MetricField {
    name: String,
    dim: usize,
    signature: Signature,
    components: Arc<ComponentFn>,
    domain: Arc<DomainFn>,
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("signature", &self.signature)
            .finish()
    }
}

/// Relative eigenvalue cutoff below which the metric counts as singular.
pub const SINGULAR_TOL: f64 = 1e-12;

impl MetricField {
    pub fn new(
        name: impl Into<String>,
        signature: Signature,
        components: impl Fn(&[Jet]) -> Vec<Jet> + Send + Sync + 'static,
        domain: impl Fn(&[f64]) -> bool + Send + Sync + 'static,
    ) -> Self {
        let dim = signature.dim();
        assert!(dim >= 2, "metric dimension must be at least 2");
        MetricField {
            name: name.into(),
            dim,
            signature,
            components: Arc::new(components),
            domain: Arc::new(domain),
        }
    }

    /// Constant-coefficient metric `g_ij = entries[i][j]` on all of ℝ^m.
    pub fn constant(name: impl Into<String>, matrix: DMatrix<f64>) -> Self {
        let m = matrix.nrows();
        let sig = Signature::of_matrix(&matrix, SINGULAR_TOL).expect("nondegenerate matrix");
        MetricField::new(
            name,
            sig,
            move |x: &[Jet]| {
                let space = x[0].space().clone();
                let order = x[0].order();
                (0..m * m)
                    .map(|k| Jet::constant(&space, order, matrix[(k / m, k % m)]))
                    .collect()
            },
            |_| true,
        )
    }

    /// Flat `ℝ^m` with the canonical Gram matrix of `signature`.
    pub fn flat(signature: Signature) -> Self {
        MetricField::constant(
            format!("flat({},{})", signature.negative, signature.positive),
            signature.canonical_gram(),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.dim() == self.dim && p.is_finite() && (self.domain)(p.coords())
    }

    /// The constant rescaling `c² g`.
    pub fn scaled(&self, c: f64) -> MetricField {
        let inner = self.components.clone();
        let c2 = c * c;
        MetricField {
            name: format!("{}*{}^2", self.name, c),
            dim: self.dim,
            signature: self.signature,
            components: Arc::new(move |x: &[Jet]| inner(x).iter().map(|j| j.scale(c2)).collect()),
            domain: self.domain.clone(),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn check_point(&self, p: &Point) -> Result<()> {
        if p.dim() != self.dim {
            return Err(Error::DimensionMismatch(p.dim(), self.dim));
        }
        if !self.contains(p) {
            return Err(Error::OutsideDomain {
                metric: self.name.clone(),
                point: p.0.clone(),
            });
        }
        Ok(())
    }

    /// Evaluates the component grid on arbitrary coordinate jets (used for
    /// pullbacks along maps). No domain checks.
    pub fn components_on(&self, coords: &[Jet]) -> Vec<Jet> {
        (self.components)(coords)
    }

    /// Jets of every metric component at `p`, truncated at `order`
    /// (row-major `m × m`).
    pub fn jet_of_metric(&self, p: &Point, order: usize) -> Result<Vec<Jet>> {
        if order > MAX_JET_ORDER {
            return Err(Error::OrderTooHigh {
                requested: order,
                max: MAX_JET_ORDER,
            });
        }
        self.check_point(p)?;
        let coords = Jet::coordinates(p.coords(), order);
        let comps = (self.components)(&coords);
        assert_eq!(comps.len(), self.dim * self.dim, "component grid size");
        let m = self.dim;
        let scale = comps.iter().fold(0.0f64, |a, j| a.max(j.value().abs()));
        for i in 0..m {
            for j in (i + 1)..m {
                let d = (comps[i * m + j].value() - comps[j * m + i].value()).abs();
                if d > 1e-12 * scale.max(1.0) {
                    return Err(Error::AsymmetricMetric { point: p.0.clone() });
                }
            }
        }
        Ok(comps.into_iter().map(|j| j.truncate(order)).collect())
    }

    /// `g_ij(P)` as a matrix, checked for nondegeneracy and signature.
    pub fn matrix_at(&self, p: &Point) -> Result<DMatrix<f64>> {
        let jets = self.jet_of_metric(p, 0)?;
        let m = self.dim;
        let g = DMatrix::from_fn(m, m, |i, j| 0.5 * (jets[i * m + j].value() + jets[j * m + i].value()));
        self.check_nondegenerate(p, &g)?;
        Ok(g)
    }

    pub(crate) fn check_nondegenerate(&self, p: &Point, g: &DMatrix<f64>) -> Result<()> {
        match Signature::of_matrix(g, SINGULAR_TOL) {
            None => Err(Error::SingularMetric {
                point: p.0.clone(),
                det: g.determinant(),
            }),
            Some(sig) if sig != self.signature => Err(Error::SignatureMismatch {
                expected: self.signature.as_pair(),
                found: sig.as_pair(),
            }),
            Some(_) => Ok(()),
        }
    }
}
