//! Monte Carlo benchmarks: repeated simulate → fit → score over independent trials.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{
    misclassification_rate, oracle_predict, ClassifierModel, FitConfig, Regime, StaticLda,
};
use crate::error::{Result, VcldaError};
use crate::meanfit::PriorMode;
use crate::select::{fit_with_cv, CvPlan};
use crate::simulate::{generate, trial_seed, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Vclda,
    StaticLda,
    Oracle,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Vclda => "vclda",
            Method::StaticLda => "static-lda",
            Method::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = VcldaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vclda" => Ok(Method::Vclda),
            "static-lda" | "lda" => Ok(Method::StaticLda),
            "oracle" => Ok(Method::Oracle),
            other => Err(VcldaError::InvalidArgument(format!(
                "unknown method '{other}'"
            ))),
        }
    }
}

/// How the varying-coefficient fit picks its basis size and penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tuning {
    CrossValidated(CvPlan),
    Fixed { ln: usize, lambda: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: ScenarioConfig,
    pub trials: usize,
    pub methods: Vec<Method>,
    pub tuning: Tuning,
    pub regime: Regime,
    pub prior_mode: PriorMode,
    #[serde(skip)]
    pub output_path: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(scenario: ScenarioConfig, trials: usize) -> Self {
        ExperimentSpec {
            scenario,
            trials,
            methods: vec![Method::Vclda, Method::StaticLda, Method::Oracle],
            tuning: Tuning::CrossValidated(CvPlan::default()),
            regime: Regime::Low,
            prior_mode: PriorMode::Equal,
            output_path: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.trials == 0 {
            return Err(VcldaError::InvalidArgument(
                "trials must be at least 1".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(VcldaError::InvalidArgument("no methods selected".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    /// Scenario seed of this trial; `vclda simulate --seed` with it replays the data.
    pub seed: u64,
    pub risks: BTreeMap<Method, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected_ln: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected_lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean: f64,
    /// Standard deviation of per-trial risks (0 for a single trial).
    pub sd: f64,
    pub cell: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResults {
    pub spec: ExperimentSpec,
    pub summary: Vec<MethodSummary>,
    pub trials: Vec<TrialResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

/// `mean(sd)` to three decimals.
pub fn format_cell(mean: f64, sd: f64) -> String {
    format!("{mean:.3}({sd:.3})")
}

pub fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// One trial: fresh data from the trial seed, every requested method scored on the test set.
pub fn run_trial(spec: &ExperimentSpec, trial: usize) -> Result<TrialResult> {
    let seed = trial_seed(spec.scenario.seed, trial as u64);
    let wrap = |e: VcldaError| VcldaError::TrialFailed {
        trial,
        seed,
        source: Box::new(e),
    };
    let scenario = spec.scenario.with_seed(seed);
    let (train, test, truth) = generate(&scenario).map_err(wrap)?;
    let mut result = TrialResult {
        trial,
        seed,
        risks: BTreeMap::new(),
        selected_ln: None,
        selected_lambda: None,
        support: None,
    };
    for &method in &spec.methods {
        let risk = match method {
            Method::Vclda => {
                let model = match &spec.tuning {
                    Tuning::CrossValidated(plan) => {
                        let plan = CvPlan {
                            seed,
                            ..plan.clone()
                        };
                        let (model, _, cv) =
                            fit_with_cv(&train, &plan, spec.regime, spec.prior_mode)
                                .map_err(wrap)?;
                        result.selected_ln = Some(cv.best_ln);
                        result.selected_lambda = Some(cv.best_lambda);
                        model
                    }
                    Tuning::Fixed { ln, lambda } => {
                        let config = FitConfig {
                            num_basis: *ln,
                            lambda: *lambda,
                            regime: spec.regime,
                            mode: spec.prior_mode,
                            ..FitConfig::default()
                        };
                        let (model, _) =
                            ClassifierModel::fit(train.x.view(), train.u.view(), &train.y, &config)
                                .map_err(wrap)?;
                        result.selected_ln = Some(*ln);
                        result.selected_lambda = Some(*lambda);
                        model
                    }
                };
                if spec.regime == Regime::High {
                    result.support = Some(model.gamma().support(0.0));
                }
                model
                    .empirical_risk(test.x.view(), test.u.view(), &test.y)
                    .map_err(wrap)?
            }
            Method::StaticLda => {
                let lda = StaticLda::fit(train.x.view(), &train.y).map_err(wrap)?;
                lda.empirical_risk(test.x.view(), &test.y)
            }
            Method::Oracle => {
                let predicted = test
                    .x
                    .outer_iter()
                    .zip(test.u.iter())
                    .map(|(row, &u)| oracle_predict(&truth, row, u))
                    .collect::<Result<Vec<u8>>>()
                    .map_err(wrap)?;
                misclassification_rate(&predicted, &test.y)
            }
        };
        result.risks.insert(method, risk);
    }
    Ok(result)
}

/// Runs all trials on `threads` workers (0 = rayon default). Output is
/// ordered by trial index and does not depend on the thread count.
pub fn run_benchmark(spec: &ExperimentSpec, threads: usize) -> Result<BenchmarkResults> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| VcldaError::InvalidArgument(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<TrialResult>> = pool.install(|| {
        (0..spec.trials)
            .into_par_iter()
            .map(|t| run_trial(spec, t))
            .collect()
    });
    let trials = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let mut methods = spec.methods.clone();
    methods.sort();
    methods.dedup();
    let summary = methods
        .iter()
        .map(|&method| {
            let risks: Vec<f64> = trials.iter().map(|t| t.risks[&method]).collect();
            let (mean, sd) = mean_and_sd(&risks);
            MethodSummary {
                method,
                mean,
                sd,
                cell: format_cell(mean, sd),
            }
        })
        .collect();
    Ok(BenchmarkResults {
        spec: spec.clone(),
        summary,
        trials,
        wall_clock_seconds: None,
    })
}

impl BenchmarkResults {
    /// Plain-text table of the per-method cells.
    pub fn render_table(&self) -> String {
        let s = &self.spec.scenario;
        let mut out = format!(
            "direction {} | covariance {} | p = {} | s = {} | n = {} per class | test = {} | trials = {}\n",
            u32::from(s.direction),
            u32::from(s.covariance),
            s.p,
            s.s,
            s.n_per_class,
            s.test_size,
            self.spec.trials
        );
        out.push_str(&format!("{:<12}{}\n", "method", "risk(sd)"));
        for m in &self.summary {
            out.push_str(&format!("{:<12}{}\n", m.method.name(), m.cell));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn summary_for(&self, method: Method) -> Option<&MethodSummary> {
        self.summary.iter().find(|m| m.method == method)
    }
}
