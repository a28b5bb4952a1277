//! Stratified K-fold cross-validation over the basis size and the penalty.
//!
//! Samples are first put in a canonical order (class, exposure, features) so
//! that fold membership and every fit depend only on the set of samples and
//! the seed, never on input order.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bspline::{SplineBasis, DEFAULT_DEGREE};
use crate::classify::{ClassifierModel, FitConfig, FitReport, Regime};
use crate::dataset::Dataset;
use crate::design::DesignSystem;
use crate::error::{Result, VcldaError};
use crate::meanfit::{MeanModel, PriorMode};
use crate::solver::{self, GammaCoefficients, IstaOptions};

/// How the winning grid point is picked from the mean CV risks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionRule {
    /// Lowest mean risk.
    #[default]
    Minimum,
    /// Simplest point whose mean risk is within one standard error of the
    /// lowest, the standard error being that of the best point's fold risks.
    OneStandardError,
}

impl std::str::FromStr for SelectionRule {
    type Err = VcldaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minimum" | "min" => Ok(SelectionRule::Minimum),
            "one-standard-error" | "1se" => Ok(SelectionRule::OneStandardError),
            other => Err(VcldaError::InvalidArgument(format!(
                "unknown selection rule '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvPlan {
    pub k_folds: usize,
    pub ln_grid: Vec<usize>,
    /// Explicit penalties. When absent, each basis size gets `lambda_count`
    /// log-spaced values from the largest useful penalty down to
    /// `lambda_min_ratio` times it.
    pub lambda_grid: Option<Vec<f64>>,
    pub lambda_count: usize,
    pub lambda_min_ratio: f64,
    /// End a fold's penalty path once the fit has at least as many active
    /// coefficients as training samples; smaller penalties are not scored.
    pub stop_at_saturation: bool,
    pub selection: SelectionRule,
    pub seed: u64,
    pub degree: usize,
    pub ista: IstaOptions,
}

impl Default for CvPlan {
    fn default() -> Self {
        CvPlan {
            k_folds: 5,
            ln_grid: vec![4, 5, 6, 8, 10, 12],
            lambda_grid: None,
            lambda_count: 20,
            lambda_min_ratio: 1e-3,
            stop_at_saturation: true,
            selection: SelectionRule::Minimum,
            seed: 0,
            degree: DEFAULT_DEGREE,
            ista: IstaOptions::default(),
        }
    }
}

impl CvPlan {
    fn validate(&self, data: &Dataset) -> Result<()> {
        if self.k_folds < 2 {
            return Err(VcldaError::InvalidArgument("need at least 2 folds".into()));
        }
        let min_class = data.class_count(0).min(data.class_count(1));
        if self.k_folds > min_class {
            return Err(VcldaError::InvalidArgument(format!(
                "{} folds but the smaller class has {min_class} samples",
                self.k_folds
            )));
        }
        if self.ln_grid.is_empty() {
            return Err(VcldaError::InvalidArgument("empty basis-size grid".into()));
        }
        match &self.lambda_grid {
            Some(g) if g.is_empty() || g.iter().any(|&l| !(l >= 0.0)) => Err(
                VcldaError::InvalidArgument("penalty grid must be nonempty and nonnegative".into()),
            ),
            None if self.lambda_count == 0
                || !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio <= 1.0) =>
            {
                Err(VcldaError::InvalidArgument(
                    "invalid automatic penalty grid".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvRecord {
    pub ln: usize,
    pub lambda: f64,
    pub fold: usize,
    pub risk: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub ln: usize,
    pub lambda: f64,
    pub mean_risk: f64,
    /// Standard error of the mean over folds.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub best_ln: usize,
    pub best_lambda: f64,
    pub best_risk: f64,
    /// One row per (grid point, fold).
    pub records: Vec<CvRecord>,
    pub points: Vec<CvPoint>,
    /// Basis sizes dropped because a fold could not support them.
    pub skipped_ln: Vec<usize>,
}

impl CvResult {
    /// CSV with columns `ln,lambda,fold,risk`.
    pub fn table_csv(&self) -> String {
        let mut out = String::from("ln,lambda,fold,risk\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{},{}\n", r.ln, r.lambda, r.fold, r.risk));
        }
        out
    }
}

/// Canonical sample order: by label, then exposure, then features.
fn canonical_order(data: &Dataset) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.sort_by(|&a, &b| {
        data.y[a]
            .cmp(&data.y[b])
            .then_with(|| data.u[a].total_cmp(&data.u[b]))
            .then_with(|| {
                data.x
                    .row(a)
                    .iter()
                    .zip(data.x.row(b).iter())
                    .map(|(p, q)| p.total_cmp(q))
                    .find(|o| *o != Ordering::Equal)
                    .unwrap_or(Ordering::Equal)
            })
    });
    idx
}

/// Fold of each sample of a canonically ordered dataset: each class is
/// shuffled by `seed` and dealt round-robin into `k` folds.
pub fn stratified_folds(y: &[u8], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; y.len()];
    for label in [1u8, 0u8] {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == label).collect();
        members.shuffle(&mut rng);
        for (pos, &i) in members.iter().enumerate() {
            folds[i] = pos % k;
        }
    }
    folds
}

struct Split {
    train: Dataset,
    held_out: Dataset,
}

fn errors_to_risk(model: &ClassifierModel, data: &Dataset) -> f64 {
    let wrong = data
        .x
        .outer_iter()
        .zip(data.u.iter())
        .zip(data.y.iter())
        // a rule that cannot be evaluated counts as a mistake
        .filter(|((row, &u), &y)| model.predict(*row, u).map_or(true, |label| label != y))
        .count();
    wrong as f64 / data.len() as f64
}

fn feasible(splits: &[Split], ln: usize) -> bool {
    splits
        .iter()
        .all(|s| s.train.class_count(0) >= ln && s.train.class_count(1) >= ln)
}

fn is_singular(e: &VcldaError) -> bool {
    matches!(
        e,
        VcldaError::SingularGram { .. } | VcldaError::SingularSystem { .. }
    )
}

fn log_spaced(top: f64, ratio: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![top];
    }
    (0..count)
        .map(|i| {
            if i == 0 {
                top
            } else {
                top * ratio.powf(i as f64 / (count - 1) as f64)
            }
        })
        .collect()
}

/// Scores every grid point and returns the best, with ties going to the
/// smaller basis and then the larger penalty.
///
/// In the low-dimensional regime only the basis size is searched (penalty 0).
pub fn cross_validate(
    data: &Dataset,
    plan: &CvPlan,
    regime: Regime,
    mode: PriorMode,
) -> Result<CvResult> {
    plan.validate(data)?;
    let order = canonical_order(data);
    let data = data.select(&order);
    let folds = stratified_folds(&data.y, plan.k_folds, plan.seed);
    let splits: Vec<Split> = (0..plan.k_folds)
        .map(|f| {
            let train: Vec<usize> = (0..data.len()).filter(|&i| folds[i] != f).collect();
            let held: Vec<usize> = (0..data.len()).filter(|&i| folds[i] == f).collect();
            Split {
                train: data.select(&train),
                held_out: data.select(&held),
            }
        })
        .collect();

    let mut ln_grid = plan.ln_grid.clone();
    ln_grid.sort_unstable();
    ln_grid.dedup();

    let mut records = Vec::new();
    let mut points = Vec::new();
    let mut skipped_ln = Vec::new();
    for &ln in &ln_grid {
        if ln < plan.degree + 1 || !feasible(&splits, ln) {
            skipped_ln.push(ln);
            continue;
        }
        let scored = match regime {
            Regime::Low => score_low(&splits, ln, plan, mode),
            Regime::High => score_high(&data, &splits, ln, plan, mode),
        };
        match scored {
            Ok((lambdas, fold_risks)) => {
                for (li, &lambda) in lambdas.iter().enumerate() {
                    let risks: Vec<f64> = fold_risks.iter().map(|r| r[li]).collect();
                    for (f, &risk) in risks.iter().enumerate() {
                        records.push(CvRecord {
                            ln,
                            lambda,
                            fold: f,
                            risk,
                        });
                    }
                    let (mean_risk, sd) = crate::experiment::mean_and_sd(&risks);
                    points.push(CvPoint {
                        ln,
                        lambda,
                        mean_risk,
                        std_error: sd / (risks.len() as f64).sqrt(),
                    });
                }
            }
            Err(e) if is_singular(&e) => skipped_ln.push(ln),
            Err(e) => return Err(e),
        }
    }

    let simpler = |a: &CvPoint, b: &CvPoint| a.ln.cmp(&b.ln).then(b.lambda.total_cmp(&a.lambda));
    let lowest = points
        .iter()
        .copied()
        .min_by(|a, b| a.mean_risk.total_cmp(&b.mean_risk).then(simpler(a, b)))
        .ok_or(VcldaError::InfeasibleGrid)?;
    let best = match plan.selection {
        SelectionRule::Minimum => lowest,
        SelectionRule::OneStandardError => {
            let bound = lowest.mean_risk + lowest.std_error;
            points
                .iter()
                .copied()
                .filter(|p| p.mean_risk <= bound)
                .min_by(simpler)
                .unwrap_or(lowest)
        }
    };
    Ok(CvResult {
        best_ln: best.ln,
        best_lambda: best.lambda,
        best_risk: best.mean_risk,
        records,
        points,
        skipped_ln,
    })
}

type Scores = (Vec<f64>, Vec<Vec<f64>>);

fn score_low(splits: &[Split], ln: usize, plan: &CvPlan, mode: PriorMode) -> Result<Scores> {
    let config = FitConfig {
        degree: plan.degree,
        num_basis: ln,
        lambda: 0.0,
        regime: Regime::Low,
        mode,
        ista: plan.ista,
    };
    let mut fold_risks = Vec::with_capacity(splits.len());
    for split in splits {
        let t = &split.train;
        let (model, _) = ClassifierModel::fit(t.x.view(), t.u.view(), &t.y, &config)?;
        fold_risks.push(vec![errors_to_risk(&model, &split.held_out)]);
    }
    Ok((vec![0.0], fold_risks))
}

fn fold_system(
    data: &Dataset,
    basis: &SplineBasis,
    mode: PriorMode,
) -> Result<(MeanModel, DesignSystem)> {
    let means = MeanModel::fit(data.x.view(), data.u.view(), &data.y, basis)?;
    let sys = DesignSystem::from_labels(data.x.view(), data.u.view(), &data.y, &means, mode)?;
    Ok((means, sys))
}

fn score_high(
    full: &Dataset,
    splits: &[Split],
    ln: usize,
    plan: &CvPlan,
    mode: PriorMode,
) -> Result<Scores> {
    let basis = SplineBasis::new(plan.degree, ln)?;
    let systems = splits
        .iter()
        .map(|s| fold_system(&s.train, &basis, mode))
        .collect::<Result<Vec<_>>>()?;
    let lambdas = match &plan.lambda_grid {
        Some(grid) => {
            let mut g = grid.clone();
            g.sort_by(|a, b| b.total_cmp(a));
            g
        }
        None => {
            // top of the path zeroes out every fold as well as the full fit
            let (_, full_sys) = fold_system(full, &basis, mode)?;
            let top = systems
                .iter()
                .map(|(_, s)| s.lambda_max())
                .fold(full_sys.lambda_max(), f64::max);
            log_spaced(top, plan.lambda_min_ratio, plan.lambda_count)
        }
    };

    // penalties scored by every fold so far
    let mut limit = lambdas.len();
    let mut fold_risks = Vec::with_capacity(splits.len());
    for (split, (means, sys)) in splits.iter().zip(systems) {
        let mut warm: Option<GammaCoefficients> = None;
        let mut risks = Vec::with_capacity(limit);
        for &lambda in &lambdas[..limit] {
            let (gamma, _) = solver::ista_solve(&sys, lambda, &plan.ista, warm.as_ref())?;
            let model = ClassifierModel::new(means.clone(), gamma.clone(), mode)?;
            risks.push(errors_to_risk(&model, &split.held_out));
            let saturated = gamma.support(0.0).len() * ln >= split.train.len();
            warm = Some(gamma);
            if plan.stop_at_saturation && saturated {
                break;
            }
        }
        limit = risks.len();
        fold_risks.push(risks);
    }
    for risks in &mut fold_risks {
        risks.truncate(limit);
    }
    Ok((lambdas[..limit].to_vec(), fold_risks))
}

/// Cross-validate, then refit on all of `data` at the selected grid point.
pub fn fit_with_cv(
    data: &Dataset,
    plan: &CvPlan,
    regime: Regime,
    mode: PriorMode,
) -> Result<(ClassifierModel, FitReport, CvResult)> {
    let cv = cross_validate(data, plan, regime, mode)?;
    let config = FitConfig {
        degree: plan.degree,
        num_basis: cv.best_ln,
        lambda: cv.best_lambda,
        regime,
        mode,
        ista: plan.ista,
    };
    let canonical = data.select(&canonical_order(data));
    let (model, report) = ClassifierModel::fit(
        canonical.x.view(),
        canonical.u.view(),
        &canonical.y,
        &config,
    )?;
    Ok((model, report, cv))
}

/// Mean of `values` (0 for an empty slice).
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}
