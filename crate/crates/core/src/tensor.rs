//! Dense multi-index arrays with a variance signature.

use nalgebra::DMatrix;

use crate::jet::Jet;

/// Whether a tensor slot is covariant (lower index) or contravariant (upper).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Co,
    Contra,
}

fn strides(dim: usize, rank: usize) -> Vec<usize> {
    let mut s = vec![1; rank];
    for k in (0..rank.saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dim;
    }
    s
}

/// Iterates over all multi-indices of `rank` slots in row-major order.
pub fn multi_indices(dim: usize, rank: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = dim.pow(rank as u32);
    (0..total).map(move |mut flat| {
        let mut idx = vec![0; rank];
        for k in (0..rank).rev() {
            idx[k] = flat % dim;
            flat /= dim;
        }
        idx
    })
}

pub fn flat_index(dim: usize, idx: &[usize]) -> usize {
    idx.iter().fold(0, |acc, &i| acc * dim + i)
}

/// A tensor evaluated at a single point, entries in row-major slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorAtPoint {
    dim: usize,
    variance: Vec<Slot>,
    entries: Vec<f64>,
}

impl TensorAtPoint {
    pub fn new(dim: usize, variance: Vec<Slot>, entries: Vec<f64>) -> Self {
        assert_eq!(entries.len(), dim.pow(variance.len() as u32));
        TensorAtPoint {
            dim,
            variance,
            entries,
        }
    }

    pub fn zeros(dim: usize, variance: Vec<Slot>) -> Self {
        let n = dim.pow(variance.len() as u32);
        Self::new(dim, variance, vec![0.0; n])
    }

    pub fn covariant(dim: usize, rank: usize, entries: Vec<f64>) -> Self {
        Self::new(dim, vec![Slot::Co; rank], entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.variance.len()
    }

    pub fn variance(&self) -> &[Slot] {
        &self.variance
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.entries[flat_index(self.dim, idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let k = flat_index(self.dim, idx);
        self.entries[k] = value;
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Euclidean (component-wise) Frobenius norm.
    pub fn frobenius(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.entries.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.entries.len(), other.entries.len());
        self.entries
            .iter()
            .zip(&other.entries)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Contracts `slot` with `matrix` on the slot's index: the new entry is
    /// `Σ_p M[(i, p)] T[.., p, ..]`. This is the primitive behind raising and
    /// lowering (with the metric or its inverse) and behind frame changes.
    pub fn apply_on_slot(&self, slot: usize, matrix: &DMatrix<f64>, new_kind: Slot) -> Self {
        let dim = self.dim;
        let rank = self.rank();
        let stride = strides(dim, rank)[slot];
        let block = dim * stride;
        let m: Vec<f64> = (0..dim * dim).map(|k| matrix[(k / dim, k % dim)]).collect();
        let mut out = vec![0.0; self.entries.len()];
        for (src, dst) in self.entries.chunks_exact(block).zip(out.chunks_exact_mut(block)) {
            for i in 0..dim {
                let row = &mut dst[i * stride..(i + 1) * stride];
                for p in 0..dim {
                    let c = m[i * dim + p];
                    if c == 0.0 {
                        continue;
                    }
                    for (o, v) in row.iter_mut().zip(&src[p * stride..(p + 1) * stride]) {
                        *o += c * v;
                    }
                }
            }
        }
        let mut variance = self.variance.clone();
        variance[slot] = new_kind;
        TensorAtPoint::new(dim, variance, out)
    }

    /// Lowers a contravariant slot with the metric `g`.
    pub fn lower(&self, slot: usize, metric: &DMatrix<f64>) -> Self {
        assert_eq!(self.variance[slot], Slot::Contra, "slot already covariant");
        self.apply_on_slot(slot, metric, Slot::Co)
    }

    /// Raises a covariant slot with the inverse metric.
    pub fn raise(&self, slot: usize, inverse_metric: &DMatrix<f64>) -> Self {
        assert_eq!(self.variance[slot], Slot::Co, "slot already contravariant");
        self.apply_on_slot(slot, inverse_metric, Slot::Contra)
    }

    /// Pulls back every covariant slot along the linear map whose columns are
    /// the images of the new basis vectors: `T'(e_a, ...) = T(F e_a, ...)`.
    pub fn pullback(&self, frame: &DMatrix<f64>) -> Self {
        assert!(self.variance.iter().all(|s| *s == Slot::Co));
        let ft = frame.transpose();
        let mut out = self.clone();
        for slot in 0..self.rank() {
            out = out.apply_on_slot(slot, &ft, Slot::Co);
        }
        out
    }

    /// Contracts two slots of opposite or equal variance using `metric_like`
    /// to pair them: `Σ_{a,b} M[a][b] T[.., a, .., b, ..]`.
    pub fn contract_with(&self, s1: usize, s2: usize, pairing: &DMatrix<f64>) -> Self {
        assert!(s1 < s2);
        let dim = self.dim;
        let rank = self.rank();
        let variance: Vec<Slot> = self
            .variance
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != s1 && *k != s2)
            .map(|(_, s)| *s)
            .collect();
        let mut out = TensorAtPoint::zeros(dim, variance);
        for idx in multi_indices(dim, rank) {
            let w = pairing[(idx[s1], idx[s2])];
            if w == 0.0 {
                continue;
            }
            let reduced: Vec<usize> = idx
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != s1 && *k != s2)
                .map(|(_, i)| *i)
                .collect();
            let k = flat_index(dim, &reduced);
            out.entries[k] += w * self.get(&idx);
        }
        out
    }
}

/// A tensor field near a point: every entry is a jet.
#[derive(Debug, Clone)]
pub struct JetTensor {
    dim: usize,
    variance: Vec<Slot>,
    entries: Vec<Jet>,
}

impl JetTensor {
    pub fn new(dim: usize, variance: Vec<Slot>, entries: Vec<Jet>) -> Self {
        assert_eq!(entries.len(), dim.pow(variance.len() as u32));
        JetTensor {
            dim,
            variance,
            entries,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.variance.len()
    }

    pub fn variance(&self) -> &[Slot] {
        &self.variance
    }

    pub fn entries(&self) -> &[Jet] {
        &self.entries
    }

    pub fn get(&self, idx: &[usize]) -> &Jet {
        &self.entries[flat_index(self.dim, idx)]
    }

    /// Smallest jet order across entries: the number of further derivatives
    /// this field can still supply.
    pub fn order(&self) -> usize {
        self.entries.iter().map(Jet::order).min().unwrap_or(0)
    }

    /// Order-zero part: the tensor at the center point.
    pub fn at_point(&self) -> TensorAtPoint {
        TensorAtPoint::new(
            self.dim,
            self.variance.clone(),
            self.entries.iter().map(Jet::value).collect(),
        )
    }

    /// Jet analogue of [`TensorAtPoint::apply_on_slot`]; `matrix` is a
    /// row-major `m × m` grid of jets.
    pub fn apply_on_slot(&self, slot: usize, matrix: &[Jet], new_kind: Slot) -> Self {
        let dim = self.dim;
        let stride = strides(dim, self.rank())[slot];
        let order = self.order().min(matrix.iter().map(Jet::order).min().unwrap_or(0));
        let space = self.entries[0].space().clone();
        let entries = (0..self.entries.len())
            .map(|flat| {
                let i = (flat / stride) % dim;
                let base = flat - i * stride;
                let mut acc = Jet::zero(&space, order);
                for p in 0..dim {
                    acc.add_product(&matrix[i * dim + p], &self.entries[base + p * stride]);
                }
                acc
            })
            .collect();
        let mut variance = self.variance.clone();
        variance[slot] = new_kind;
        JetTensor::new(dim, variance, entries)
    }

    /// Raises every covariant slot with the inverse metric jets.
    pub fn raise_all(&self, inverse_metric: &[Jet]) -> Self {
        let mut out = self.clone();
        for slot in 0..self.rank() {
            if out.variance[slot] == Slot::Co {
                out = out.apply_on_slot(slot, inverse_metric, Slot::Contra);
            }
        }
        out
    }

    /// Contracts slots `s1 < s2` against a pairing matrix of jets.
    pub fn contract_with(&self, s1: usize, s2: usize, pairing: &[Jet]) -> Self {
        assert!(s1 < s2);
        let dim = self.dim;
        let rank = self.rank();
        let variance: Vec<Slot> = self
            .variance
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != s1 && *k != s2)
            .map(|(_, s)| *s)
            .collect();
        let order = self.order().min(pairing.iter().map(Jet::order).min().unwrap_or(0));
        let space = self.entries[0].space().clone();
        let mut entries = vec![Jet::zero(&space, order); dim.pow(variance.len() as u32)];
        for idx in multi_indices(dim, rank) {
            let reduced: Vec<usize> = idx
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != s1 && *k != s2)
                .map(|(_, i)| *i)
                .collect();
            let k = flat_index(dim, &reduced);
            entries[k].add_product(&pairing[idx[s1] * dim + idx[s2]], self.get(&idx));
        }
        JetTensor::new(dim, variance, entries)
    }

    /// Full contraction `Σ A[idx] B[idx]` over matching slot lists.
    pub fn dot(&self, other: &JetTensor) -> Jet {
        assert_eq!(self.entries.len(), other.entries.len());
        let order = self.order().min(other.order());
        let mut acc = Jet::zero(self.entries[0].space(), order);
        for (a, b) in self.entries.iter().zip(&other.entries) {
            acc.add_product(a, b);
        }
        acc
    }

    pub fn scalar(&self) -> &Jet {
        assert_eq!(self.rank(), 0);
        &self.entries[0]
    }

    pub fn map(&self, f: impl Fn(&Jet) -> Jet) -> Self {
        JetTensor::new(
            self.dim,
            self.variance.clone(),
            self.entries.iter().map(f).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raise_then_lower_restores_entries() {
        let g = DMatrix::from_row_slice(3, 3, &[-2.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let ginv = g.clone().try_inverse().unwrap();
        let entries: Vec<f64> = (0..27).map(|k| (k as f64 * 0.37).sin()).collect();
        let t = TensorAtPoint::covariant(3, 3, entries);
        let back = t.raise(1, &ginv).lower(1, &g);
        assert!(back.max_abs_diff(&t) < 1e-12 * t.max_abs());
    }

    #[test]
    fn pullback_by_identity_is_identity() {
        let t = TensorAtPoint::covariant(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let id = DMatrix::identity(2, 2);
        assert_eq!(t.pullback(&id), t);
    }

    #[test]
    fn pullback_matches_bilinear_form() {
        // T(Fa, Fb) = (F^T T F)_{ab}
        let t = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, -1.0]);
        let f = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, -1.0, 3.0]);
        let expected = f.transpose() * &t * &f;
        let tt = TensorAtPoint::covariant(2, 2, t.transpose().as_slice().to_vec());
        let p = tt.pullback(&f);
        for a in 0..2 {
            for b in 0..2 {
                assert!((p.get(&[a, b]) - expected[(a, b)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn trace_contraction() {
        let t = TensorAtPoint::covariant(2, 2, vec![1.0, 5.0, 7.0, 3.0]);
        let id = DMatrix::identity(2, 2);
        let c = t.contract_with(0, 1, &id);
        assert_eq!(c.rank(), 0);
        assert_eq!(c.entries(), &[4.0]);
    }
}
