//! Clamped, uniformly knotted B-spline bases on `[0, 1]`.
//!
//! The *scaled* basis multiplies the standard basis by `sqrt(L)` so that its
//! entries sum to `sqrt(L)` instead of one. All model coefficients in this
//! crate live in the scaled basis.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VcldaError};

pub const DEFAULT_DEGREE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    degree: usize,
    num_basis: usize,
    knots: Vec<f64>,
}

/// The nonzero stretch of a basis evaluation: entries `start..start + values.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalBasis {
    pub start: usize,
    pub values: Vec<f64>,
}

impl SplineBasis {
    /// Clamped basis with equally spaced interior knots.
    pub fn new(degree: usize, num_basis: usize) -> Result<Self> {
        if num_basis < degree + 1 {
            return Err(VcldaError::InvalidDimension { degree, num_basis });
        }
        let interior = num_basis - degree - 1;
        let mut knots = Vec::with_capacity(num_basis + degree + 1);
        knots.extend(std::iter::repeat_n(0.0, degree + 1));
        for i in 1..=interior {
            knots.push(i as f64 / (interior + 1) as f64);
        }
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Ok(SplineBasis {
            degree,
            num_basis,
            knots,
        })
    }

    /// Rebuild from stored parts, checking every invariant.
    pub fn from_parts(degree: usize, num_basis: usize, knots: Vec<f64>) -> Result<Self> {
        if num_basis < degree + 1 {
            return Err(VcldaError::InvalidDimension { degree, num_basis });
        }
        if knots.len() != num_basis + degree + 1 {
            return Err(VcldaError::Format(format!(
                "expected {} knots, found {}",
                num_basis + degree + 1,
                knots.len()
            )));
        }
        let clamped = knots[..=degree].iter().all(|&k| k == 0.0)
            && knots[knots.len() - degree - 1..].iter().all(|&k| k == 1.0);
        if !clamped || knots.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(VcldaError::Format(
                "knots must be nondecreasing and clamped on [0, 1]".into(),
            ));
        }
        Ok(SplineBasis {
            degree,
            num_basis,
            knots,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn num_basis(&self) -> usize {
        self.num_basis
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    fn scale(&self) -> f64 {
        (self.num_basis as f64).sqrt()
    }

    /// Knot span index `k` with `knots[k] <= u < knots[k+1]`; `u = 1` goes to the last span.
    fn span(&self, u: f64) -> usize {
        let last = self.num_basis - 1;
        if u >= self.knots[last + 1] {
            return last;
        }
        // first index in degree..=last whose right knot exceeds u
        let (mut lo, mut hi) = (self.degree, last);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if u < self.knots[mid + 1] {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    }

    /// Nonzero standard basis values at `u` (clamped into `[0, 1]`), Cox–de Boor recursion.
    pub fn eval_local(&self, u: f64) -> LocalBasis {
        let u = clamp_unit(u);
        let d = self.degree;
        let k = self.span(u);
        let t = &self.knots;
        let mut values = vec![0.0; d + 1];
        let mut left = vec![0.0; d + 1];
        let mut right = vec![0.0; d + 1];
        values[0] = 1.0;
        for j in 1..=d {
            left[j] = u - t[k + 1 - j];
            right[j] = t[k + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom > 0.0 { values[r] / denom } else { 0.0 };
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        LocalBasis {
            start: k - d,
            values,
        }
    }

    /// Nonzero scaled basis values at `u`.
    pub fn eval_local_scaled(&self, u: f64) -> LocalBasis {
        let mut local = self.eval_local(u);
        let scale = self.scale();
        local.values.iter_mut().for_each(|v| *v *= scale);
        local
    }

    /// Standard basis `B*(u)`; entries sum to one.
    pub fn eval_unscaled(&self, u: f64) -> Array1<f64> {
        self.expand(self.eval_local(u))
    }

    /// Scaled basis `B(u) = sqrt(L) B*(u)`; entries sum to `sqrt(L)`.
    pub fn eval_scaled(&self, u: f64) -> Array1<f64> {
        self.expand(self.eval_local_scaled(u))
    }

    fn expand(&self, local: LocalBasis) -> Array1<f64> {
        let mut out = Array1::zeros(self.num_basis);
        for (i, v) in local.values.into_iter().enumerate() {
            out[local.start + i] = v;
        }
        out
    }
}

pub(crate) fn clamp_unit(u: f64) -> f64 {
    if u.is_nan() {
        0.0
    } else {
        u.clamp(0.0, 1.0)
    }
}
