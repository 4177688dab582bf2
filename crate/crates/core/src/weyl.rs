//! A fixed catalogue of Weyl scalar invariants (complete metric contractions
//! of curvature and its covariant derivatives).

use std::fmt;

use crate::error::Result;
use crate::geometry::LocalGeometry;
use crate::jet::Jet;
use crate::metric::{MetricField, Point};
use crate::tensor::JetTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WeylInvariant {
    /// `τ = g^{il} g^{jk} R_{ijkl}`
    Tau,
    /// `|R|² = R_{ijkl} R^{ijkl}`
    RiemannNormSq,
    /// `|ρ|² = g^{ia}g^{jb}g^{kc}g^{ld} R_{ijbl} R_{akcd}`
    RicciNormSq,
    TauSquared,
    /// `Δτ = −g^{ia}g^{jb}g^{kc} R_{ijba;kc}`
    LaplacianTau,
    /// `|∇R|² = R_{ijkl;m} R^{ijkl;m}`
    NablaRNormSq,
    /// `|∇τ|² = g^{kc} τ_{;k} τ_{;c}` with `τ_{;k} = g^{ia}g^{jb}R_{ijba;k}`
    GradTauNormSq,
    /// `tr(ρ³) = ρ_i{}^j ρ_j{}^k ρ_k{}^i`
    RicciCubeTrace,
}

impl WeylInvariant {
    pub const ALL: [WeylInvariant; 8] = [
        WeylInvariant::Tau,
        WeylInvariant::RiemannNormSq,
        WeylInvariant::RicciNormSq,
        WeylInvariant::TauSquared,
        WeylInvariant::LaplacianTau,
        WeylInvariant::NablaRNormSq,
        WeylInvariant::GradTauNormSq,
        WeylInvariant::RicciCubeTrace,
    ];

    /// Total number of metric derivatives in the contraction.
    pub fn order(self) -> u32 {
        match self {
            WeylInvariant::Tau => 2,
            WeylInvariant::RiemannNormSq
            | WeylInvariant::RicciNormSq
            | WeylInvariant::TauSquared
            | WeylInvariant::LaplacianTau => 4,
            WeylInvariant::NablaRNormSq
            | WeylInvariant::GradTauNormSq
            | WeylInvariant::RicciCubeTrace => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            WeylInvariant::Tau => "tau",
            WeylInvariant::RiemannNormSq => "riemann_norm_sq",
            WeylInvariant::RicciNormSq => "ricci_norm_sq",
            WeylInvariant::TauSquared => "tau_sq",
            WeylInvariant::LaplacianTau => "laplacian_tau",
            WeylInvariant::NablaRNormSq => "nabla_riemann_norm_sq",
            WeylInvariant::GradTauNormSq => "grad_tau_norm_sq",
            WeylInvariant::RicciCubeTrace => "ricci_cube_trace",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|w| w.name() == name)
    }

    /// Highest covariant derivative of curvature the contraction uses.
    pub fn curvature_level(self) -> usize {
        match self {
            WeylInvariant::LaplacianTau => 2,
            WeylInvariant::NablaRNormSq | WeylInvariant::GradTauNormSq => 1,
            _ => 0,
        }
    }

    fn index(self) -> usize {
        Self::ALL.iter().position(|w| *w == self).expect("listed")
    }
}

impl fmt::Display for WeylInvariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Values of the whole catalogue at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct WeylScalarSet {
    values: [f64; 8],
}

impl WeylScalarSet {
    pub fn get(&self, w: WeylInvariant) -> f64 {
        self.values[w.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (WeylInvariant, f64)> + '_ {
        WeylInvariant::ALL.iter().map(move |w| (*w, self.get(*w)))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// The catalogue as jets of order `extra` (so `extra = 1` also yields the
/// gradient of every invariant). Requires metric jets of order `4 + extra`.
pub fn weyl_scalar_jets(g: &MetricField, p: &Point, extra: usize) -> Result<Vec<(WeylInvariant, Jet)>> {
    weyl_invariant_jets(g, p, &WeylInvariant::ALL, extra)
}

/// Jets of the requested invariants only; curvature derivatives are taken
/// just as far as the selection needs.
pub fn weyl_invariant_jets(
    g: &MetricField,
    p: &Point,
    which: &[WeylInvariant],
    extra: usize,
) -> Result<Vec<(WeylInvariant, Jet)>> {
    let depth = which.iter().map(|w| w.curvature_level()).max().unwrap_or(0);
    let geo = LocalGeometry::new(g, p, 2 + depth + extra)?;
    let ginv = geo.inverse_metric_jets();
    let levels = geo.curvature_derivative_jets(depth)?;
    let r = &levels[0];

    let tau_of = |t: &JetTensor| -> JetTensor {
        // g^{ia} g^{jb} T_{ijba...}: slots (1,2) then (0,1) of what remains
        t.contract_with(1, 2, ginv).contract_with(0, 1, ginv)
    };

    let rho = r.contract_with(1, 2, ginv);
    let tau = rho.contract_with(0, 1, ginv).scalar().clone();

    let one = |w: WeylInvariant| -> Jet {
        match w {
            WeylInvariant::Tau => tau.clone(),
            WeylInvariant::RiemannNormSq => r.dot(&r.raise_all(ginv)),
            WeylInvariant::RicciNormSq => rho.dot(&rho.raise_all(ginv)),
            WeylInvariant::TauSquared => &tau * &tau,
            WeylInvariant::LaplacianTau => tau_of(&levels[2]).contract_with(0, 1, ginv).scalar().scale(-1.0),
            WeylInvariant::NablaRNormSq => levels[1].dot(&levels[1].raise_all(ginv)),
            WeylInvariant::GradTauNormSq => {
                let grad_tau = tau_of(&levels[1]);
                grad_tau.dot(&grad_tau.raise_all(ginv))
            }
            WeylInvariant::RicciCubeTrace => {
                // ρ_i^j = ρ_{ik} g^{kj}
                let m = geo.dim();
                let mixed = rho.apply_on_slot(1, ginv, crate::tensor::Slot::Contra);
                let mut cube = Jet::zero(tau.space(), mixed.order());
                for i in 0..m {
                    for j in 0..m {
                        for k in 0..m {
                            let ij = mixed.get(&[i, j]);
                            let jk = mixed.get(&[j, k]);
                            let ki = mixed.get(&[k, i]);
                            cube.add_scaled(1.0, &(ij * jk).mul_jet(ki));
                        }
                    }
                }
                cube
            }
        }
    };
    Ok(which.iter().map(|w| (*w, one(*w).truncate(extra))).collect())
}

/// One invariant at `p`.
pub fn invariant_value(g: &MetricField, p: &Point, w: WeylInvariant) -> Result<f64> {
    Ok(weyl_invariant_jets(g, p, &[w], 0)?[0].1.value())
}

/// Every catalogue invariant at `p`.
pub fn weyl_scalars(g: &MetricField, p: &Point) -> Result<WeylScalarSet> {
    let jets = weyl_scalar_jets(g, p, 0)?;
    let mut values = [0.0; 8];
    for (w, j) in jets {
        values[w.index()] = j.value();
    }
    Ok(WeylScalarSet { values })
}

/// One invariant with its coordinate gradient at `p`.
pub fn invariant_with_gradient(g: &MetricField, p: &Point, w: WeylInvariant) -> Result<(f64, Vec<f64>)> {
    let (_, j) = weyl_invariant_jets(g, p, &[w], 1)?.pop().expect("one entry");
    let grad = (0..g.dim()).map(|v| j.derivative(v).value()).collect();
    Ok((j.value(), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Signature;

    #[test]
    fn flat_space_catalogue_vanishes() {
        let g = MetricField::flat(Signature::new(1, 3));
        let w = weyl_scalars(&g, &Point::from([0.0, 1.0, 2.0, 3.0])).unwrap();
        assert_eq!(w.max_abs(), 0.0);
    }

    #[test]
    fn names_round_trip() {
        for w in WeylInvariant::ALL {
            assert_eq!(WeylInvariant::from_name(w.name()), Some(w));
        }
    }
}
