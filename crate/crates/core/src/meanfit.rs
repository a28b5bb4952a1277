//! Per-class spline regression of the mean functions on the exposure.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::bspline::SplineBasis;
use crate::error::{Result, VcldaError};
use crate::linalg;

/// Which pooled mean (and pseudo-response coding) the estimator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorMode {
    /// Classes weighted 1/2 each.
    #[default]
    Equal,
    /// Classes weighted by their training frequencies.
    Estimated,
}

impl std::str::FromStr for PriorMode {
    type Err = VcldaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal" | "equal-prior" => Ok(PriorMode::Equal),
            "estimated" | "estimated-prior" => Ok(PriorMode::Estimated),
            other => Err(VcldaError::InvalidArgument(format!(
                "unknown prior mode '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    /// Label 1.
    One,
    /// Label 0.
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanModel {
    basis: SplineBasis,
    coeffs_class1: Array2<f64>,
    coeffs_class0: Array2<f64>,
    prior_class1: f64,
}

pub(crate) fn check_labels(y: &[u8]) -> Result<()> {
    match y.iter().find(|&&l| l > 1) {
        Some(&bad) => Err(VcldaError::InvalidLabel(bad)),
        None => Ok(()),
    }
}

/// Least-squares coefficients (L x p) of every column of `x` regressed on the
/// scaled basis evaluated at `u`.
///
/// One Cholesky factorization of the Gram matrix serves all `p` columns.
pub fn fit_class_coefficients(
    x: ArrayView2<f64>,
    u: ArrayView1<f64>,
    basis: &SplineBasis,
    class_label: u8,
) -> Result<Array2<f64>> {
    let (n, p) = x.dim();
    if u.len() != n {
        return Err(VcldaError::DimensionMismatch(format!(
            "{} exposures for {} rows",
            u.len(),
            n
        )));
    }
    let l = basis.num_basis();
    if n < l {
        return Err(VcldaError::SingularGram {
            class: class_label,
            condition: f64::INFINITY,
        });
    }
    let mut gram = Array2::<f64>::zeros((l, l));
    let mut rhs = Array2::<f64>::zeros((l, p));
    for (i, &ui) in u.iter().enumerate() {
        let local = basis.eval_local_scaled(ui);
        let s = local.start;
        for (a, &va) in local.values.iter().enumerate() {
            for (b, &vb) in local.values.iter().enumerate() {
                gram[[s + a, s + b]] += va * vb;
            }
            let xi = x.row(i);
            let mut row = rhs.row_mut(s + a);
            row.scaled_add(va, &xi);
        }
    }
    let chol = linalg::factor_well_conditioned(gram.view()).map_err(|condition| {
        VcldaError::SingularGram {
            class: class_label,
            condition,
        }
    })?;
    Ok(chol.solve_matrix(rhs.view()))
}

impl MeanModel {
    /// Fit both class mean functions and the class-1 prior.
    pub fn fit(
        x: ArrayView2<f64>,
        u: ArrayView1<f64>,
        y: &[u8],
        basis: &SplineBasis,
    ) -> Result<Self> {
        let (n, _) = x.dim();
        if u.len() != n || y.len() != n {
            return Err(VcldaError::DimensionMismatch(format!(
                "x has {n} rows, u has {}, y has {}",
                u.len(),
                y.len()
            )));
        }
        check_labels(y)?;
        let idx1: Vec<usize> = (0..n).filter(|&i| y[i] == 1).collect();
        let idx0: Vec<usize> = (0..n).filter(|&i| y[i] == 0).collect();
        let coeffs_class1 = fit_subset(x, u, &idx1, basis, 1)?;
        let coeffs_class0 = fit_subset(x, u, &idx0, basis, 0)?;
        Ok(MeanModel {
            basis: basis.clone(),
            coeffs_class1,
            coeffs_class0,
            prior_class1: idx1.len() as f64 / n as f64,
        })
    }

    pub fn from_parts(
        basis: SplineBasis,
        coeffs_class1: Array2<f64>,
        coeffs_class0: Array2<f64>,
        prior_class1: f64,
    ) -> Result<Self> {
        if coeffs_class1.dim() != coeffs_class0.dim() || coeffs_class1.nrows() != basis.num_basis()
        {
            return Err(VcldaError::DimensionMismatch(format!(
                "mean coefficients {:?} / {:?} for basis size {}",
                coeffs_class1.dim(),
                coeffs_class0.dim(),
                basis.num_basis()
            )));
        }
        if !(prior_class1 > 0.0 && prior_class1 < 1.0) {
            return Err(VcldaError::InvalidArgument(format!(
                "class-1 prior {prior_class1} outside (0, 1)"
            )));
        }
        Ok(MeanModel {
            basis,
            coeffs_class1,
            coeffs_class0,
            prior_class1,
        })
    }

    pub fn basis(&self) -> &SplineBasis {
        &self.basis
    }

    pub fn num_features(&self) -> usize {
        self.coeffs_class1.ncols()
    }

    pub fn coeffs(&self, class: Class) -> ArrayView2<'_, f64> {
        match class {
            Class::One => self.coeffs_class1.view(),
            Class::Zero => self.coeffs_class0.view(),
        }
    }

    pub fn prior_class1(&self) -> f64 {
        self.prior_class1
    }

    pub fn prior_class0(&self) -> f64 {
        1.0 - self.prior_class1
    }

    pub fn eval_class_mean(&self, u: f64, class: Class) -> Array1<f64> {
        let local = self.basis.eval_local_scaled(u);
        combine_rows(self.coeffs(class), &local.values, local.start)
    }

    /// Pooled mean `w μ̂₁(u) + (1 − w) μ̂₀(u)`, with `w = 1/2` or the class-1 prior.
    pub fn eval_pooled_mean(&self, u: f64, mode: PriorMode) -> Array1<f64> {
        let w = self.pooled_weight(mode);
        let local = self.basis.eval_local_scaled(u);
        let m1 = combine_rows(self.coeffs_class1.view(), &local.values, local.start);
        let m0 = combine_rows(self.coeffs_class0.view(), &local.values, local.start);
        match mode {
            PriorMode::Equal => (m1 + m0) / 2.0,
            PriorMode::Estimated => m1 * w + m0 * (1.0 - w),
        }
    }

    fn pooled_weight(&self, mode: PriorMode) -> f64 {
        match mode {
            PriorMode::Equal => 0.5,
            PriorMode::Estimated => self.prior_class1,
        }
    }
}

fn fit_subset(
    x: ArrayView2<f64>,
    u: ArrayView1<f64>,
    rows: &[usize],
    basis: &SplineBasis,
    label: u8,
) -> Result<Array2<f64>> {
    let xs = x.select(ndarray::Axis(0), rows);
    let us = u.select(ndarray::Axis(0), rows);
    fit_class_coefficients(xs.view(), us.view(), basis, label)
}

/// `Σ_a values[a] * coeffs.row(start + a)`.
pub(crate) fn combine_rows(coeffs: ArrayView2<f64>, values: &[f64], start: usize) -> Array1<f64> {
    let mut out = Array1::<f64>::zeros(coeffs.ncols());
    for (a, &v) in values.iter().enumerate() {
        out.scaled_add(v, &coeffs.row(start + a));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_inputs(n: usize, p: usize, seed: u64) -> (Array2<f64>, Array1<f64>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |_| rng.random::<f64>() * 4.0 - 2.0);
        let u = Array1::from_shape_fn(n, |_| rng.random::<f64>());
        let y = (0..n).map(|i| (i % 2) as u8).collect();
        (x, u, y)
    }

    #[test]
    fn constants_are_reproduced() {
        let basis = SplineBasis::new(3, 6).unwrap();
        let (_, u, y) = random_inputs(80, 2, 1);
        let x = Array2::from_shape_fn(
            (80, 2),
            |(i, j)| if y[i] == 1 { 3.5 } else { -1.25 + j as f64 },
        );
        let m = MeanModel::fit(x.view(), u.view(), &y, &basis).unwrap();
        for &t in &[0.0, 0.13, 0.5, 0.99, 1.0] {
            let m1 = m.eval_class_mean(t, Class::One);
            let m0 = m.eval_class_mean(t, Class::Zero);
            assert!((m1[0] - 3.5).abs() < 1e-10 && (m1[1] - 3.5).abs() < 1e-10);
            assert!((m0[0] + 1.25).abs() < 1e-10 && (m0[1] + 0.25).abs() < 1e-10);
        }
    }

    #[test]
    fn recovers_known_coefficients() {
        let basis = SplineBasis::new(3, 5).unwrap();
        let a = array![
            [1.0, -2.0],
            [0.5, 0.0],
            [3.0, 1.0],
            [-1.0, 2.5],
            [0.25, -0.75]
        ];
        let (_, u, _) = random_inputs(60, 2, 2);
        let mut x = Array2::<f64>::zeros((60, 2));
        for i in 0..60 {
            let b = basis.eval_scaled(u[i]);
            x.row_mut(i).assign(&b.dot(&a));
        }
        let got = fit_class_coefficients(x.view(), u.view(), &basis, 1).unwrap();
        assert!((got - &a).iter().all(|v| v.abs() < 1e-8));

        // Evaluation oracle: direct B(u)ᵀA.
        let y = vec![1u8; 30]
            .into_iter()
            .chain(vec![0u8; 30])
            .collect::<Vec<_>>();
        let m = MeanModel::fit(x.view(), u.view(), &y, &basis).unwrap();
        for &t in &[0.0, 0.3, 0.77] {
            let direct = basis.eval_scaled(t).dot(&a);
            let fitted = m.eval_class_mean(t, Class::One);
            assert!((direct - fitted).iter().all(|v| v.abs() < 1e-10));
        }
        let at_zero = m.eval_class_mean(0.0, Class::Zero);
        let expected = m.coeffs(Class::Zero).row(0).to_owned() * 5f64.sqrt();
        assert!((at_zero - expected).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn too_few_samples_is_singular() {
        let basis = SplineBasis::new(3, 8).unwrap();
        let (x, u, mut y) = random_inputs(40, 3, 3);
        y.iter_mut().for_each(|l| *l = 0);
        for l in y.iter_mut().take(5) {
            *l = 1;
        }
        assert!(matches!(
            MeanModel::fit(x.view(), u.view(), &y, &basis),
            Err(VcldaError::SingularGram { class: 1, .. })
        ));
    }

    #[test]
    fn residuals_are_basis_orthogonal() {
        let basis = SplineBasis::new(3, 7).unwrap();
        let (x, u, y) = random_inputs(200, 3, 4);
        let m = MeanModel::fit(x.view(), u.view(), &y, &basis).unwrap();
        for (label, class) in [(1u8, Class::One), (0u8, Class::Zero)] {
            let mut acc = Array2::<f64>::zeros((7, 3));
            for i in (0..200).filter(|&i| y[i] == label) {
                let b = basis.eval_scaled(u[i]);
                let r = &x.row(i) - &m.eval_class_mean(u[i], class);
                for a in 0..7 {
                    for j in 0..3 {
                        acc[[a, j]] += b[a] * r[j];
                    }
                }
            }
            assert!(acc.iter().all(|v| v.abs() < 1e-8 * 200.0));
        }
    }

    #[test]
    fn permutation_invariant() {
        let basis = SplineBasis::new(3, 6).unwrap();
        let (x, u, y) = random_inputs(90, 2, 5);
        let m = MeanModel::fit(x.view(), u.view(), &y, &basis).unwrap();
        let perm: Vec<usize> = (0..90).rev().collect();
        let xp = x.select(ndarray::Axis(0), &perm);
        let up = u.select(ndarray::Axis(0), &perm);
        let yp: Vec<u8> = perm.iter().map(|&i| y[i]).collect();
        let mp = MeanModel::fit(xp.view(), up.view(), &yp, &basis).unwrap();
        let diff = &m.coeffs(Class::One) - &mp.coeffs(Class::One);
        assert!(diff.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn pooled_means() {
        let basis = SplineBasis::new(0, 1).unwrap();
        let m = MeanModel::from_parts(basis, array![[1.0, 0.0]], array![[0.0, 1.0]], 0.75).unwrap();
        assert_eq!(
            m.eval_pooled_mean(0.4, PriorMode::Estimated).to_vec(),
            vec![0.75, 0.25]
        );
        assert_eq!(
            m.eval_pooled_mean(0.4, PriorMode::Equal).to_vec(),
            vec![0.5, 0.5]
        );

        let half = MeanModel::from_parts(
            SplineBasis::new(0, 1).unwrap(),
            array![[2.0, -1.0]],
            array![[0.5, 3.0]],
            0.5,
        )
        .unwrap();
        assert_eq!(
            half.eval_pooled_mean(0.2, PriorMode::Equal),
            half.eval_pooled_mean(0.2, PriorMode::Estimated)
        );
    }

    #[test]
    fn rejects_bad_labels() {
        let basis = SplineBasis::new(1, 3).unwrap();
        let (x, u, mut y) = random_inputs(20, 1, 6);
        y[3] = 2;
        assert!(matches!(
            MeanModel::fit(x.view(), u.view(), &y, &basis),
            Err(VcldaError::InvalidLabel(2))
        ));
    }
}
