//! The fitted varying-coefficient discriminant rule, its risks, and baselines.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::bspline::{SplineBasis, DEFAULT_DEGREE};
use crate::design::DesignSystem;
use crate::error::{Result, VcldaError};
use crate::linalg;
use crate::meanfit::{check_labels, Class, MeanModel, PriorMode};
use crate::simulate::ScenarioOracle;
use crate::solver::{self, GammaCoefficients, IstaOptions, IstaReport};

/// Plug-in scale denominators at or below this are rejected.
const MIN_SCALE_DENOMINATOR: f64 = 1e-10;

/// Low-dimensional fits use the closed form; high-dimensional fits use the group lasso.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    #[default]
    Low,
    High,
}

impl std::str::FromStr for Regime {
    type Err = VcldaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" | "low-dim" => Ok(Regime::Low),
            "high" | "high-dim" => Ok(Regime::High),
            other => Err(VcldaError::InvalidArgument(format!(
                "unknown regime '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub degree: usize,
    pub num_basis: usize,
    /// Group-lasso penalty; ignored in the low-dimensional regime.
    pub lambda: f64,
    pub regime: Regime,
    pub mode: PriorMode,
    pub ista: IstaOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            degree: DEFAULT_DEGREE,
            num_basis: 6,
            lambda: 0.0,
            regime: Regime::Low,
            mode: PriorMode::Equal,
            ista: IstaOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    /// Present for group-lasso fits.
    pub ista: Option<IstaReport>,
    pub support: Vec<usize>,
    pub training_risk: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    mean_model: MeanModel,
    gamma: GammaCoefficients,
    mode: PriorMode,
}

impl ClassifierModel {
    pub fn new(mean_model: MeanModel, gamma: GammaCoefficients, mode: PriorMode) -> Result<Self> {
        if gamma.p() != mean_model.num_features() || gamma.ln() != mean_model.basis().num_basis() {
            return Err(VcldaError::DimensionMismatch(format!(
                "gamma ({}, {}) for mean model with {} features and basis size {}",
                gamma.p(),
                gamma.ln(),
                mean_model.num_features(),
                mean_model.basis().num_basis()
            )));
        }
        Ok(ClassifierModel {
            mean_model,
            gamma,
            mode,
        })
    }

    /// Mean fit, system assembly and coefficient solve in one pass.
    pub fn fit(
        x: ArrayView2<f64>,
        u: ArrayView1<f64>,
        y: &[u8],
        config: &FitConfig,
    ) -> Result<(Self, FitReport)> {
        Self::fit_warm(x, u, y, config, None)
    }

    pub(crate) fn fit_warm(
        x: ArrayView2<f64>,
        u: ArrayView1<f64>,
        y: &[u8],
        config: &FitConfig,
        warm_start: Option<&GammaCoefficients>,
    ) -> Result<(Self, FitReport)> {
        let basis = SplineBasis::new(config.degree, config.num_basis)?;
        let means = MeanModel::fit(x, u, y, &basis)?;
        let sys = DesignSystem::from_labels(x, u, y, &means, config.mode)?;
        let (gamma, ista) = solve_system(&sys, config, warm_start)?;
        let model = ClassifierModel::new(means, gamma, config.mode)?;
        let training_risk = model.empirical_risk(x, u, y)?;
        let support = model.gamma.support(0.0);
        Ok((
            model,
            FitReport {
                ista,
                support,
                training_risk,
            },
        ))
    }

    pub fn basis(&self) -> &SplineBasis {
        self.mean_model.basis()
    }

    pub fn mean_model(&self) -> &MeanModel {
        &self.mean_model
    }

    pub fn gamma(&self) -> &GammaCoefficients {
        &self.gamma
    }

    pub fn mode(&self) -> PriorMode {
        self.mode
    }

    pub fn num_features(&self) -> usize {
        self.gamma.p()
    }

    /// θ̂(u): entry `j` is group `j` of γ against the scaled basis at `u`.
    pub fn eval_direction(&self, u: f64) -> Array1<f64> {
        let local = self.basis().eval_local_scaled(u);
        direction_from_local(&self.gamma, &local.values, local.start)
    }

    /// `(x − μ̂(u))ᵀ θ̂(u)`.
    pub fn score(&self, x: ArrayView1<f64>, u: f64) -> Result<f64> {
        self.check_features(x.len())?;
        let centered = &x - &self.mean_model.eval_pooled_mean(u, self.mode);
        Ok(centered.dot(&self.eval_direction(u)))
    }

    pub fn predict(&self, x: ArrayView1<f64>, u: f64) -> Result<u8> {
        let score = self.score(x, u)?;
        match self.mode {
            PriorMode::Equal => Ok(u8::from(score >= 0.0)),
            PriorMode::Estimated => {
                let p1 = self.mean_model.prior_class1();
                let p0 = self.mean_model.prior_class0();
                let gap = self.mean_model.eval_class_mean(u, Class::One)
                    - self.mean_model.eval_class_mean(u, Class::Zero);
                let denom = p1 * p0 * (1.0 - gap.dot(&self.eval_direction(u)));
                if denom <= MIN_SCALE_DENOMINATOR {
                    return Err(VcldaError::DegenerateScale(denom));
                }
                Ok(u8::from(score / denom + (p1 / p0).ln() >= 0.0))
            }
        }
    }

    pub fn predict_batch(&self, x: ArrayView2<f64>, u: ArrayView1<f64>) -> Result<Vec<u8>> {
        if x.nrows() != u.len() {
            return Err(VcldaError::DimensionMismatch(format!(
                "{} rows, {} exposures",
                x.nrows(),
                u.len()
            )));
        }
        self.check_features(x.ncols())?;
        x.outer_iter()
            .zip(u.iter())
            .map(|(row, &ui)| self.predict(row, ui))
            .collect()
    }

    /// Fraction of misclassified test points.
    pub fn empirical_risk(&self, x: ArrayView2<f64>, u: ArrayView1<f64>, y: &[u8]) -> Result<f64> {
        if y.len() != x.nrows() {
            return Err(VcldaError::DimensionMismatch(format!(
                "{} rows, {} labels",
                x.nrows(),
                y.len()
            )));
        }
        let predicted = self.predict_batch(x, u)?;
        Ok(misclassification_rate(&predicted, y))
    }

    /// Risk of this rule at exposure `u` under the true Gaussian model.
    pub fn conditional_risk(&self, truth: &ScenarioOracle, u: f64) -> Result<f64> {
        let theta = self.eval_direction(u);
        let pooled = self.mean_model.eval_pooled_mean(u, PriorMode::Equal);
        linear_rule_risk(truth, u, pooled.view(), theta.view())
    }

    fn check_features(&self, p: usize) -> Result<()> {
        if p != self.num_features() {
            return Err(VcldaError::DimensionMismatch(format!(
                "model has {} features, input has {p}",
                self.num_features()
            )));
        }
        Ok(())
    }
}

fn direction_from_local(gamma: &GammaCoefficients, values: &[f64], start: usize) -> Array1<f64> {
    Array1::from_shape_fn(gamma.p(), |j| {
        let g = gamma.group(j);
        values
            .iter()
            .enumerate()
            .map(|(a, &v)| g[start + a] * v)
            .sum()
    })
}

pub(crate) fn solve_system(
    sys: &DesignSystem,
    config: &FitConfig,
    warm_start: Option<&GammaCoefficients>,
) -> Result<(GammaCoefficients, Option<IstaReport>)> {
    match config.regime {
        Regime::Low => Ok((solver::solve_closed_form(sys)?, None)),
        Regime::High => {
            let (gamma, report) = solver::ista_solve(sys, config.lambda, &config.ista, warm_start)?;
            Ok((gamma, Some(report)))
        }
    }
}

pub fn misclassification_rate(predicted: &[u8], truth: &[u8]) -> f64 {
    assert_eq!(predicted.len(), truth.len());
    if truth.is_empty() {
        return 0.0;
    }
    let wrong = predicted.iter().zip(truth).filter(|(a, b)| a != b).count();
    wrong as f64 / truth.len() as f64
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Risk `Φ(−Δ/2)` of the Bayes rule at separation `Δ`.
pub fn bayes_risk(delta: f64) -> f64 {
    normal_cdf(-delta / 2.0)
}

/// Risk at `u` of the rule `1{(x − center)ᵀ direction ≥ 0}` under the true model.
pub fn linear_rule_risk(
    truth: &ScenarioOracle,
    u: f64,
    center: ArrayView1<f64>,
    direction: ArrayView1<f64>,
) -> Result<f64> {
    let sigma = truth.covariance(u);
    let spread = direction.dot(&sigma.dot(&direction));
    if spread <= 1e-14 {
        return Err(VcldaError::ZeroDirection(u));
    }
    let s = spread.sqrt();
    let a = (&center - &truth.mean(u, Class::One)).dot(&direction) / s;
    let b = (&center - &truth.mean(u, Class::Zero)).dot(&direction) / s;
    Ok(0.5 * normal_cdf(a) + 0.5 * (1.0 - normal_cdf(b)))
}

/// Bayes rule using the true means and covariance at `u`.
pub fn oracle_predict(truth: &ScenarioOracle, x: ArrayView1<f64>, u: f64) -> Result<u8> {
    let direction = truth.bayes_direction(u)?;
    let center = (truth.mean(u, Class::One) + truth.mean(u, Class::Zero)) / 2.0;
    Ok(u8::from((&x - &center).dot(&direction) >= 0.0))
}

/// Classical LDA with sample means and pooled covariance, ignoring the exposure.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticLda {
    center: Array1<f64>,
    direction: Array1<f64>,
}

impl StaticLda {
    pub fn fit(x: ArrayView2<f64>, y: &[u8]) -> Result<Self> {
        let (n, p) = x.dim();
        if y.len() != n {
            return Err(VcldaError::DimensionMismatch(format!(
                "{n} rows, {} labels",
                y.len()
            )));
        }
        check_labels(y)?;
        let idx1: Vec<usize> = (0..n).filter(|&i| y[i] == 1).collect();
        let idx0: Vec<usize> = (0..n).filter(|&i| y[i] == 0).collect();
        if idx1.is_empty() || idx0.is_empty() || n <= p + 1 {
            return Err(VcldaError::SingularCovariance);
        }
        let x1 = x.select(Axis(0), &idx1);
        let x0 = x.select(Axis(0), &idx0);
        let m1 = x1.mean_axis(Axis(0)).expect("nonempty");
        let m0 = x0.mean_axis(Axis(0)).expect("nonempty");
        let c1 = &x1 - &m1;
        let c0 = &x0 - &m0;
        let pooled: Array2<f64> = (c1.t().dot(&c1) + c0.t().dot(&c0)) / (n - 2) as f64;
        let chol = linalg::factor_well_conditioned(pooled.view())
            .map_err(|_| VcldaError::SingularCovariance)?;
        let direction = chol.solve((&m1 - &m0).view());
        Ok(StaticLda {
            center: (m1 + m0) / 2.0,
            direction,
        })
    }

    pub fn predict(&self, x: ArrayView1<f64>) -> u8 {
        u8::from((&x - &self.center).dot(&self.direction) >= 0.0)
    }

    pub fn empirical_risk(&self, x: ArrayView2<f64>, y: &[u8]) -> f64 {
        let predicted: Vec<u8> = x.outer_iter().map(|row| self.predict(row)).collect();
        misclassification_rate(&predicted, y)
    }
}

/// On-disk form of a [`ClassifierModel`]. Floats are written in shortest
/// round-trip decimal, so a saved model predicts bit-identically after loading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub degree: usize,
    pub num_basis: usize,
    pub knots: Vec<f64>,
    pub num_features: usize,
    /// Row-major `num_basis x num_features`.
    pub mean_coeffs_class1: Vec<f64>,
    pub mean_coeffs_class0: Vec<f64>,
    pub gamma: Vec<f64>,
    pub prior_class1: f64,
    pub prior_class0: f64,
    pub mode: PriorMode,
}

const MODEL_FORMAT: &str = "vclda-model-v1";

impl From<&ClassifierModel> for ModelDocument {
    fn from(model: &ClassifierModel) -> Self {
        let basis = model.basis();
        let row_major = |a: ArrayView2<f64>| a.iter().copied().collect::<Vec<_>>();
        ModelDocument {
            format: MODEL_FORMAT.to_string(),
            degree: basis.degree(),
            num_basis: basis.num_basis(),
            knots: basis.knots().to_vec(),
            num_features: model.num_features(),
            mean_coeffs_class1: row_major(model.mean_model.coeffs(Class::One)),
            mean_coeffs_class0: row_major(model.mean_model.coeffs(Class::Zero)),
            gamma: model.gamma.values().to_vec(),
            prior_class1: model.mean_model.prior_class1(),
            prior_class0: model.mean_model.prior_class0(),
            mode: model.mode,
        }
    }
}

impl TryFrom<ModelDocument> for ClassifierModel {
    type Error = VcldaError;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        if doc.format != MODEL_FORMAT {
            return Err(VcldaError::Format(format!(
                "unsupported model format '{}'",
                doc.format
            )));
        }
        let basis = SplineBasis::from_parts(doc.degree, doc.num_basis, doc.knots)?;
        let shape = (doc.num_basis, doc.num_features);
        let matrix = |v: Vec<f64>| {
            Array2::from_shape_vec(shape, v)
                .map_err(|e| VcldaError::Format(format!("mean coefficients: {e}")))
        };
        let means = MeanModel::from_parts(
            basis,
            matrix(doc.mean_coeffs_class1)?,
            matrix(doc.mean_coeffs_class0)?,
            doc.prior_class1,
        )?;
        let gamma =
            GammaCoefficients::new(Array1::from(doc.gamma), doc.num_features, doc.num_basis)?;
        ClassifierModel::new(means, gamma, doc.mode)
    }
}

impl ClassifierModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
