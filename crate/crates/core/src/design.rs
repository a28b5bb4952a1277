//! The quadratic system `(D, b)` of the varying-coefficient least squares.
//!
//! Each sample contributes the Kronecker design vector
//! `(x − μ̂(u)) ⊗ B(u)`. Only `degree + 1` basis entries are nonzero, so the
//! rank-one update is applied block by block without materializing it.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Result, VcldaError};
use crate::meanfit::{check_labels, MeanModel, PriorMode};

#[derive(Debug, Clone, PartialEq)]
pub struct DesignSystem {
    /// `(1/N) Σ B̃ᵢ B̃ᵢᵀ`, dense and symmetric.
    pub dn: Array2<f64>,
    /// `(1/N) Σ B̃ᵢ Zᵢ`.
    pub bn: Array1<f64>,
    pub p: usize,
    pub ln: usize,
    pub n_samples: usize,
}

/// Recoded labels: `±1/2`, or `+π̂₀ / −π̂₁` with estimated priors.
pub fn pseudo_response(y: &[u8], mode: PriorMode, prior_class1: f64) -> Array1<f64> {
    let (pos, neg) = match mode {
        PriorMode::Equal => (0.5, -0.5),
        PriorMode::Estimated => (1.0 - prior_class1, -prior_class1),
    };
    y.iter().map(|&l| if l == 1 { pos } else { neg }).collect()
}

impl DesignSystem {
    pub fn assemble(
        x: ArrayView2<f64>,
        u: ArrayView1<f64>,
        z: ArrayView1<f64>,
        means: &MeanModel,
        mode: PriorMode,
    ) -> Result<Self> {
        let (n, p) = x.dim();
        if u.len() != n || z.len() != n {
            return Err(VcldaError::DimensionMismatch(format!(
                "x has {n} rows, u has {}, z has {}",
                u.len(),
                z.len()
            )));
        }
        if means.num_features() != p {
            return Err(VcldaError::DimensionMismatch(format!(
                "mean model has {} features, data has {p}",
                means.num_features()
            )));
        }
        if n == 0 {
            return Err(VcldaError::InvalidArgument("empty sample".into()));
        }
        let basis = means.basis();
        let ln = basis.num_basis();
        let dim = p * ln;
        let mut dn = Array2::<f64>::zeros((dim, dim));
        let mut bn = Array1::<f64>::zeros(dim);

        for i in 0..n {
            let local = basis.eval_local_scaled(u[i]);
            let centered = &x.row(i) - &means.eval_pooled_mean(u[i], mode);
            let s = local.start;
            let vals = &local.values;
            for j in 0..p {
                let rj = centered[j];
                let row0 = j * ln + s;
                for (a, &va) in vals.iter().enumerate() {
                    bn[row0 + a] += rj * va * z[i];
                }
                // upper triangle of blocks only; mirrored below
                for k in j..p {
                    let c = rj * centered[k];
                    let col0 = k * ln + s;
                    for (a, &va) in vals.iter().enumerate() {
                        let cv = c * va;
                        let mut row = dn.row_mut(row0 + a);
                        for (b, &vb) in vals.iter().enumerate() {
                            row[col0 + b] += cv * vb;
                        }
                    }
                }
            }
        }

        let inv_n = 1.0 / n as f64;
        for j in 0..p {
            for k in j..p {
                for a in 0..ln {
                    for b in 0..ln {
                        let r = j * ln + a;
                        let c = k * ln + b;
                        let v = dn[[r, c]] * inv_n;
                        dn[[r, c]] = v;
                        if k != j {
                            dn[[c, r]] = v;
                        }
                    }
                }
            }
        }
        bn.mapv_inplace(|v| v * inv_n);
        Ok(DesignSystem {
            dn,
            bn,
            p,
            ln,
            n_samples: n,
        })
    }

    /// Build from labels: fits nothing, only recodes `y` and assembles.
    pub fn from_labels(
        x: ArrayView2<f64>,
        u: ArrayView1<f64>,
        y: &[u8],
        means: &MeanModel,
        mode: PriorMode,
    ) -> Result<Self> {
        check_labels(y)?;
        let z = pseudo_response(y, mode, means.prior_class1());
        Self::assemble(x, u, z.view(), means, mode)
    }

    pub fn from_parts(dn: Array2<f64>, bn: Array1<f64>, p: usize, ln: usize) -> Result<Self> {
        let dim = p * ln;
        if dn.dim() != (dim, dim) || bn.len() != dim {
            return Err(VcldaError::DimensionMismatch(format!(
                "system {:?} / {} for p = {p}, ln = {ln}",
                dn.dim(),
                bn.len()
            )));
        }
        Ok(DesignSystem {
            dn,
            bn,
            p,
            ln,
            n_samples: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.p * self.ln
    }

    /// `maxⱼ ‖(b)_(j)‖₂`: the smallest penalty whose solution is zero.
    pub fn lambda_max(&self) -> f64 {
        (0..self.p)
            .map(|j| {
                let g = self.bn.slice(ndarray::s![j * self.ln..(j + 1) * self.ln]);
                g.dot(&g).sqrt()
            })
            .fold(0.0, f64::max)
    }
}
