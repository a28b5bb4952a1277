//! Dense symmetric positive-definite factorization.
//!
//! Every linear solve in the estimator (within-class Gram matrices, the
//! low-dimensional closed form, covariance factors for sampling, the static
//! LDA baseline) goes through [`Cholesky`].

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Largest admissible condition estimate before a system is reported singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Lower-triangular Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Array2<f64>,
}

impl Cholesky {
    /// Factor a symmetric matrix, reading only its lower triangle.
    ///
    /// Returns `None` if a pivot is not strictly positive.
    pub fn factor(a: ArrayView2<f64>) -> Option<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "Cholesky needs a square matrix");
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut diag = a[[j, j]];
            for k in 0..j {
                diag -= l[[j, k]] * l[[j, k]];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return None;
            }
            let ljj = diag.sqrt();
            l[[j, j]] = ljj;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / ljj;
            }
        }
        Some(Cholesky { lower: l })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> ArrayView2<'_, f64> {
        self.lower.view()
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let l = &self.lower;
        let mut y = b.to_owned();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[[i, k]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[[k, i]] * y[k];
            }
            y[i] = s / l[[i, i]];
        }
        y
    }

    /// Solve `A X = B` column by column.
    pub fn solve_matrix(&self, b: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros(b.raw_dim());
        for (j, col) in b.columns().into_iter().enumerate() {
            out.column_mut(j).assign(&self.solve(col));
        }
        out
    }

    /// `L z`, used to turn standard normal draws into correlated ones.
    pub fn lower_mul(&self, z: ArrayView1<f64>) -> Array1<f64> {
        let n = self.dim();
        let mut out = Array1::<f64>::zeros(n);
        for i in 0..n {
            let mut s = 0.0;
            for k in 0..=i {
                s += self.lower[[i, k]] * z[k];
            }
            out[i] = s;
        }
        out
    }

    /// 2-norm condition estimate of the factored matrix.
    ///
    /// Power iteration for the largest eigenvalue, inverse iteration through
    /// the factor for the smallest. Never below the diagonal-pivot ratio,
    /// which is a hard lower bound.
    pub fn condition_estimate(&self, a: ArrayView2<f64>) -> f64 {
        let n = self.dim();
        if n == 0 {
            return 1.0;
        }
        let (mut dmax, mut dmin) = (0.0f64, f64::INFINITY);
        for i in 0..n {
            let d = self.lower[[i, i]] * self.lower[[i, i]];
            dmax = dmax.max(d);
            dmin = dmin.min(d);
        }
        let pivot_ratio = dmax / dmin;

        let start = Array1::from_shape_fn(n, |i| 1.0 + 0.1 * ((i * 7919 % 13) as f64));
        let sym_mul = |v: &Array1<f64>| -> Array1<f64> {
            Array1::from_shape_fn(n, |i| {
                (0..n)
                    .map(|k| {
                        let aik = if k <= i { a[[i, k]] } else { a[[k, i]] };
                        aik * v[k]
                    })
                    .sum()
            })
        };
        let normalize = |v: Array1<f64>| -> (Array1<f64>, f64) {
            let norm = v.dot(&v).sqrt();
            if norm == 0.0 || !norm.is_finite() {
                (v, 0.0)
            } else {
                (v / norm, norm)
            }
        };

        let (mut v, _) = normalize(start.clone());
        let mut lambda_max = 0.0;
        for _ in 0..30 {
            let (next, norm) = normalize(sym_mul(&v));
            lambda_max = norm;
            v = next;
        }
        let (mut w, _) = normalize(start);
        let mut inv_lambda_min = 0.0;
        for _ in 0..30 {
            let (next, norm) = normalize(self.solve(w.view()));
            inv_lambda_min = norm;
            w = next;
        }
        let power_ratio = lambda_max * inv_lambda_min;
        if power_ratio.is_finite() {
            power_ratio.max(pivot_ratio)
        } else {
            f64::INFINITY
        }
    }
}

/// Factor `a` and reject it when it is indefinite or its condition estimate
/// exceeds [`MAX_CONDITION`]. On failure returns the condition estimate
/// (infinite when the factorization itself broke down).
pub fn factor_well_conditioned(a: ArrayView2<f64>) -> std::result::Result<Cholesky, f64> {
    let chol = Cholesky::factor(a).ok_or(f64::INFINITY)?;
    let cond = chol.condition_estimate(a);
    if cond > MAX_CONDITION {
        Err(cond)
    } else {
        Ok(chol)
    }
}
