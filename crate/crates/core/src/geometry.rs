//! Levi-Civita connection, curvature and iterated covariant derivatives,
//! computed on jets so every derivative is exact up to rounding.
//!
//! Conventions:
//! - `∇_{∂_i} ∂_j = Γ_{ij}{}^k ∂_k`, stored as a `[Co, Co, Contra]` tensor.
//! - `𝔯(x, y) z = ∇_x ∇_y z − ∇_y ∇_x z − ∇_{[x,y]} z`, stored with the output
//!   slot last: `𝔯_{ijk}{}^l`.
//! - `R(x, y, z, w) = g(𝔯(x, y) z, w)`.
//! - Covariant differentiation appends its slot last:
//!   `∇^ℓR(x_1, .., x_4; x_5, .., x_{ℓ+4})`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::metric::{MetricField, Point};
use crate::tensor::{flat_index, multi_indices, JetTensor, Slot, TensorAtPoint};

/// Metric, inverse metric and Christoffel symbols as jets at one point.
#[derive(Debug, Clone)]
pub struct LocalGeometry {
    metric: MetricField,
    point: Point,
    order: usize,
    g: Vec<Jet>,
    ginv: Vec<Jet>,
    gamma: Option<JetTensor>,
    g0: DMatrix<f64>,
    ginv0: DMatrix<f64>,
}

fn jet_matmul(a: &[Jet], b: &[Jet], m: usize) -> Vec<Jet> {
    let order = a
        .iter()
        .chain(b.iter())
        .map(Jet::order)
        .min()
        .unwrap_or(0);
    let space = a[0].space().clone();
    let mut out = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            let mut acc = Jet::zero(&space, order);
            for k in 0..m {
                acc.add_product(&a[i * m + k], &b[k * m + j]);
            }
            out.push(acc);
        }
    }
    out
}

/// Inverse of a jet-valued matrix by the terminating Neumann series
/// `(G₀ + N)⁻¹ = Σ (−G₀⁻¹ N)ⁿ G₀⁻¹`; `N` has no constant term so the
/// series stops at the jet order.
fn jet_inverse(g: &[Jet], g0inv: &DMatrix<f64>, m: usize) -> Vec<Jet> {
    let order = g.iter().map(Jet::order).min().unwrap_or(0);
    let space = g[0].space().clone();
    let a0: Vec<Jet> = (0..m * m)
        .map(|k| Jet::constant(&space, order, g0inv[(k / m, k % m)]))
        .collect();
    let nil: Vec<Jet> = g.iter().map(|j| j.add_scalar(-j.value())).collect();
    let step: Vec<Jet> = jet_matmul(&a0, &nil, m).iter().map(|j| j.scale(-1.0)).collect();
    let mut term = a0.clone();
    let mut sum = a0;
    for _ in 0..order {
        term = jet_matmul(&step, &term, m);
        for (s, t) in sum.iter_mut().zip(&term) {
            s.add_scaled(1.0, t);
        }
    }
    sum
}

impl LocalGeometry {
    /// Expands the metric to `order` at `p`. Curvature needs order ≥ 2,
    /// `∇^ℓR` needs order ≥ ℓ + 2.
    pub fn new(metric: &MetricField, p: &Point, order: usize) -> Result<Self> {
        let m = metric.dim();
        let g = metric.jet_of_metric(p, order)?;
        let g0 = DMatrix::from_fn(m, m, |i, j| g[i * m + j].value());
        metric.check_nondegenerate(p, &g0)?;
        let ginv0 = g0.clone().try_inverse().ok_or_else(|| Error::SingularMetric {
            point: p.0.clone(),
            det: g0.determinant(),
        })?;
        let ginv = jet_inverse(&g, &ginv0, m);
        let mut geo = LocalGeometry {
            metric: metric.clone(),
            point: p.clone(),
            order,
            g,
            ginv,
            gamma: None,
            g0,
            ginv0,
        };
        if order >= 1 {
            geo.gamma = Some(geo.build_christoffel());
        }
        Ok(geo)
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn point(&self) -> &Point {
        &self.point
    }

    pub fn metric_field(&self) -> &MetricField {
        &self.metric
    }

    /// `g_ij(P)`.
    pub fn metric(&self) -> &DMatrix<f64> {
        &self.g0
    }

    /// `g^ij(P)`.
    pub fn inverse_metric(&self) -> &DMatrix<f64> {
        &self.ginv0
    }

    pub fn metric_jets(&self) -> &[Jet] {
        &self.g
    }

    pub fn inverse_metric_jets(&self) -> &[Jet] {
        &self.ginv
    }

    /// The metric as a `(0,2)` jet tensor field.
    pub fn metric_tensor(&self) -> JetTensor {
        JetTensor::new(self.dim(), vec![Slot::Co, Slot::Co], self.g.clone())
    }

    fn build_christoffel(&self) -> JetTensor {
        let m = self.dim();
        let dg: Vec<Vec<Jet>> = (0..m)
            .map(|l| self.g.iter().map(|j| j.derivative(l)).collect())
            .collect();
        let ginv: Vec<Jet> = self.ginv.iter().map(|j| j.truncate(self.order - 1)).collect();
        let space = self.g[0].space().clone();
        let mut entries = Vec::with_capacity(m * m * m);
        for i in 0..m {
            for j in 0..m {
                // first-kind symbols [ij, l]
                let first: Vec<Jet> = (0..m)
                    .map(|l| &(&dg[i][j * m + l] + &dg[j][i * m + l]) - &dg[l][i * m + j])
                    .collect();
                for k in 0..m {
                    let mut acc = Jet::zero(&space, self.order - 1);
                    for (l, f) in first.iter().enumerate() {
                        acc.add_product_scaled(0.5, &ginv[k * m + l], f);
                    }
                    entries.push(acc);
                }
            }
        }
        JetTensor::new(m, vec![Slot::Co, Slot::Co, Slot::Contra], entries)
    }

    fn gamma(&self) -> Result<&JetTensor> {
        self.gamma.as_ref().ok_or(Error::InsufficientOrder {
            available: 0,
            required: 1,
        })
    }

    /// Christoffel symbols as jets (order one less than the metric jets).
    pub fn christoffel_jets(&self) -> Result<&JetTensor> {
        self.gamma()
    }

    pub fn christoffel(&self) -> Result<TensorAtPoint> {
        Ok(self.gamma()?.at_point())
    }

    /// `𝔯_{ijk}{}^l` as jets of order `order − 2`.
    pub fn curvature_operator_jets(&self) -> Result<JetTensor> {
        if self.order < 2 {
            return Err(Error::InsufficientOrder {
                available: self.order,
                required: 2,
            });
        }
        let m = self.dim();
        let gamma = self.gamma()?;
        let dgamma: Vec<Vec<Jet>> = (0..m)
            .map(|v| gamma.entries().iter().map(|j| j.derivative(v)).collect())
            .collect();
        let g = |a: usize, b: usize, c: usize| gamma.get(&[a, b, c]);
        let idx = |a: usize, b: usize, c: usize| flat_index(m, &[a, b, c]);
        let space = self.g[0].space().clone();
        let mut entries = Vec::with_capacity(m.pow(4));
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for l in 0..m {
                        let mut acc = &dgamma[i][idx(j, k, l)] - &dgamma[j][idx(i, k, l)];
                        let mut quad = Jet::zero(&space, self.order - 2);
                        for p in 0..m {
                            quad.add_product(g(j, k, p), g(i, p, l));
                            quad.add_product_scaled(-1.0, g(i, k, p), g(j, p, l));
                        }
                        acc.add_scaled(1.0, &quad);
                        entries.push(acc);
                    }
                }
            }
        }
        Ok(JetTensor::new(
            m,
            vec![Slot::Co, Slot::Co, Slot::Co, Slot::Contra],
            entries,
        ))
    }

    /// `R_{ijkl}` as jets of order `order − 2`.
    pub fn curvature_tensor_jets(&self) -> Result<JetTensor> {
        let op = self.curvature_operator_jets()?;
        Ok(op.apply_on_slot(3, &self.g, Slot::Co))
    }

    /// Covariant derivative of a jet tensor field; the new slot is last.
    pub fn covariant_derivative(&self, t: &JetTensor) -> Result<JetTensor> {
        let available = t.order();
        if available < 1 {
            return Err(Error::InsufficientOrder {
                available,
                required: 1,
            });
        }
        let gamma = self.gamma()?;
        let m = self.dim();
        let rank = t.rank();
        let variance = t.variance().to_vec();
        let mut new_variance = variance.clone();
        new_variance.push(Slot::Co);
        let dt: Vec<Vec<Jet>> = (0..m)
            .map(|v| t.entries().iter().map(|e| e.derivative(v)).collect())
            .collect();
        let mut entries = Vec::with_capacity(m.pow(rank as u32 + 1));
        for idx in multi_indices(m, rank + 1) {
            let (base, j) = (&idx[..rank], idx[rank]);
            let mut acc = dt[j][flat_index(m, base)].clone();
            let mut moved = base.to_vec();
            for s in 0..rank {
                let orig = moved[s];
                for p in 0..m {
                    moved[s] = p;
                    let tv = t.get(&moved);
                    match variance[s] {
                        Slot::Co => acc.add_product_scaled(-1.0, gamma.get(&[j, orig, p]), tv),
                        Slot::Contra => acc.add_product(gamma.get(&[j, p, orig]), tv),
                    }
                }
                moved[s] = orig;
            }
            entries.push(acc);
        }
        Ok(JetTensor::new(m, new_variance, entries))
    }

    /// `[R, ∇R, ..., ∇^levels R]` as jet fields (all covariant).
    pub fn curvature_derivative_jets(&self, levels: usize) -> Result<Vec<JetTensor>> {
        if self.order < levels + 2 {
            return Err(Error::InsufficientOrder {
                available: self.order,
                required: levels + 2,
            });
        }
        let mut out = vec![self.curvature_tensor_jets()?];
        for _ in 0..levels {
            let next = self.covariant_derivative(out.last().expect("nonempty"))?;
            out.push(next);
        }
        Ok(out)
    }

    /// `[𝔯, ∇𝔯, ..., ∇^levels 𝔯]` as jet fields, output slot at position 3.
    pub fn operator_derivative_jets(&self, levels: usize) -> Result<Vec<JetTensor>> {
        if self.order < levels + 2 {
            return Err(Error::InsufficientOrder {
                available: self.order,
                required: levels + 2,
            });
        }
        let mut out = vec![self.curvature_operator_jets()?];
        for _ in 0..levels {
            let next = self.covariant_derivative(out.last().expect("nonempty"))?;
            out.push(next);
        }
        Ok(out)
    }

    /// `∇^ℓR` at the point for `ℓ = 0..=levels`.
    pub fn curvature_derivatives(&self, levels: usize) -> Result<Vec<TensorAtPoint>> {
        Ok(self
            .curvature_derivative_jets(levels)?
            .iter()
            .map(JetTensor::at_point)
            .collect())
    }
}

/// Γ_{ij}{}^k at `p`.
pub fn christoffel(g: &MetricField, p: &Point) -> Result<TensorAtPoint> {
    LocalGeometry::new(g, p, 1)?.christoffel()
}

/// `(R, 𝔯)` at `p`: the `(0,4)` curvature tensor and the `(1,3)` operator
/// with its output slot last.
pub fn curvature(g: &MetricField, p: &Point) -> Result<(TensorAtPoint, TensorAtPoint)> {
    let geo = LocalGeometry::new(g, p, 2)?;
    let op = geo.curvature_operator_jets()?.at_point();
    let r = op.lower(3, geo.metric());
    Ok((r, op))
}

/// `∇^ℓR` at `p` for `ℓ = 0..=levels`.
pub fn curvature_derivatives(g: &MetricField, p: &Point, levels: usize) -> Result<Vec<TensorAtPoint>> {
    LocalGeometry::new(g, p, levels + 2)?.curvature_derivatives(levels)
}

/// Ricci tensor `ρ_{il} = g^{jk} R_{ijkl}` and scalar curvature at `p`.
pub fn ricci(g: &MetricField, p: &Point) -> Result<(TensorAtPoint, f64)> {
    let geo = LocalGeometry::new(g, p, 2)?;
    let r = geo.curvature_tensor_jets()?.at_point();
    let rho = r.contract_with(1, 2, geo.inverse_metric());
    let tau = rho.contract_with(0, 1, geo.inverse_metric()).entries()[0];
    Ok((rho, tau))
}

/// `(T*g)_{ij}(p) = Σ J^a_i g_ab(T(p)) J^b_j` for a coordinate map given on
/// jets. The Jacobian comes from differentiating the map's jets.
pub fn pullback_metric(
    g: &MetricField,
    map: &dyn Fn(&[Jet]) -> Vec<Jet>,
    p: &Point,
) -> Result<DMatrix<f64>> {
    let m = g.dim();
    let coords = Jet::coordinates(p.coords(), 1);
    let image = map(&coords);
    if image.len() != m {
        return Err(Error::DimensionMismatch(image.len(), m));
    }
    let q = Point::new(image.iter().map(Jet::value).collect::<Vec<_>>());
    let gq = g.matrix_at(&q)?;
    let jac = DMatrix::from_fn(m, m, |a, i| image[a].derivative(i).value());
    Ok(jac.transpose() * gq * jac)
}

/// Max over samples of `|(T*g)_{ij} − λ² g_{ij}|`.
pub fn homothety_pullback_residual(
    g: &MetricField,
    map: &dyn Fn(&[Jet]) -> Vec<Jet>,
    lambda: f64,
    samples: &[Point],
) -> Result<f64> {
    let mut worst = 0.0f64;
    for p in samples {
        let pulled = pullback_metric(g, map, p)?;
        let gp = g.matrix_at(p)?;
        let diff = pulled - gp * (lambda * lambda);
        worst = worst.max(diff.amax());
    }
    Ok(worst)
}
