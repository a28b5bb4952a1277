//! Command-line front end: `simulate`, `fit`, `predict`, `cv`, `benchmark`.
//!
//! Exit codes: 0 success, 1 usage/parse/IO error, 2 numerical failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::classify::{ClassifierModel, FitConfig, Regime};
use crate::dataset::{Dataset, Observations};
use crate::error::{Result, VcldaError};
use crate::experiment::{run_benchmark, ExperimentSpec, Method, Tuning};
use crate::meanfit::PriorMode;
use crate::select::{cross_validate, fit_with_cv, CvPlan};
use crate::simulate::{generate, CovarianceKind, Direction, ScenarioConfig};
use crate::solver::IstaOptions;

#[derive(Debug, Parser)]
#[command(
    name = "vclda",
    version,
    about = "Varying-coefficient linear discriminant analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic train/test pair as CSV.
    Simulate(SimulateArgs),
    /// Fit a classifier and write the model file.
    Fit(FitArgs),
    /// Predict labels for a CSV with a saved model.
    Predict(PredictArgs),
    /// Cross-validate basis size and penalty and write the CV table.
    Cv(CvArgs),
    /// Run a Monte Carlo benchmark over independent trials.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Direction function id (1-4).
    #[arg(long)]
    pub direction: Option<u32>,
    /// Covariance family id (1-3).
    #[arg(long)]
    pub covariance: Option<u32>,
    #[arg(long)]
    pub n_per_class: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    /// Nonzero direction entries (defaults to p).
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long)]
    pub test_size: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EstimatorArgs {
    /// Structured config file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Fixed basis size; cross-validated when omitted.
    #[arg(long)]
    pub ln: Option<usize>,
    /// Fixed group-lasso penalty (high regime); cross-validated when omitted.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_parser = parse_regime)]
    pub regime: Option<Regime>,
    #[arg(long, value_parser = parse_prior_mode)]
    pub prior_mode: Option<PriorMode>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// Comma-separated candidate basis sizes.
    #[arg(long, value_delimiter = ',')]
    pub ln_grid: Option<Vec<usize>>,
    /// Comma-separated candidate penalties.
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Training CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Test CSV path.
    #[arg(long)]
    pub test_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// Treat an unconverged ISTA solve as a numerical failure.
    #[arg(long)]
    pub require_converged: bool,
    /// Model output path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Predictions CSV path (standard output when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// CV table CSV path (standard output when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Comma-separated subset of vclda, static-lda, oracle.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Record wall-clock time in the results file (makes it run-dependent).
    #[arg(long)]
    pub timing: bool,
    /// Results JSON path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_regime(s: &str) -> std::result::Result<Regime, String> {
    s.parse().map_err(|e: VcldaError| e.to_string())
}

fn parse_prior_mode(s: &str) -> std::result::Result<PriorMode, String> {
    s.parse().map_err(|e: VcldaError| e.to_string())
}

/// Config file layout. Every key is optional; flags override file values.
///
/// ```toml
/// trials = 100
/// methods = ["vclda", "static-lda", "oracle"]
/// regime = "low"            # or "high"
/// prior_mode = "equal"      # or "estimated"
/// output_path = "results.json"
///
/// [scenario]
/// direction = 1
/// covariance = 1
/// n_per_class = 100
/// p = 5
/// s = 5
/// test_size = 200
/// seed = 1
///
/// [cv]                      # or [fixed] with ln / lambda
/// k_folds = 5
/// ln_grid = [4, 5, 6, 8, 10, 12]
/// ```
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub trials: Option<usize>,
    pub methods: Option<Vec<Method>>,
    pub regime: Option<Regime>,
    pub prior_mode: Option<PriorMode>,
    pub output_path: Option<PathBuf>,
    pub scenario: Option<ScenarioFile>,
    pub cv: Option<CvPlan>,
    pub fixed: Option<FixedFile>,
    pub ista: Option<IstaOptions>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub direction: Option<u32>,
    pub covariance: Option<u32>,
    pub n_per_class: Option<usize>,
    pub p: Option<usize>,
    pub s: Option<usize>,
    pub test_size: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedFile {
    pub ln: Option<usize>,
    pub lambda: Option<f64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| VcldaError::Format(format!("{}: {e}", path.display())))
    }
}

/// The estimator settings shared by `fit`, `cv` and `benchmark`.
struct Estimator {
    regime: Regime,
    mode: PriorMode,
    plan: CvPlan,
    fixed_ln: Option<usize>,
    fixed_lambda: Option<f64>,
}

impl Estimator {
    fn resolve(args: &EstimatorArgs, file: &ConfigFile) -> Result<Self> {
        let mut plan = file.cv.clone().unwrap_or_default();
        if let Some(ista) = file.ista {
            plan.ista = ista;
        }
        if let Some(seed) = args.seed {
            plan.seed = seed;
        }
        if let Some(d) = args.degree {
            plan.degree = d;
        }
        if let Some(k) = args.folds {
            plan.k_folds = k;
        }
        if let Some(g) = &args.ln_grid {
            plan.ln_grid = g.clone();
        }
        if let Some(g) = &args.lambda_grid {
            plan.lambda_grid = Some(g.clone());
        }
        let fixed = file.fixed.as_ref();
        Ok(Estimator {
            regime: args.regime.or(file.regime).unwrap_or_default(),
            mode: args.prior_mode.or(file.prior_mode).unwrap_or_default(),
            plan,
            fixed_ln: args.ln.or(fixed.and_then(|f| f.ln)),
            fixed_lambda: args.lambda.or(fixed.and_then(|f| f.lambda)),
        })
    }

    /// Fixed settings apply when nothing is left to search.
    fn fixed_config(&self) -> Option<FitConfig> {
        let ln = self.fixed_ln?;
        let lambda = match self.regime {
            Regime::Low => 0.0,
            Regime::High => self.fixed_lambda?,
        };
        Some(FitConfig {
            degree: self.plan.degree,
            num_basis: ln,
            lambda,
            regime: self.regime,
            mode: self.mode,
            ista: self.plan.ista,
        })
    }

    /// CV plan restricted to whichever of (ln, lambda) was fixed.
    fn search_plan(&self) -> CvPlan {
        let mut plan = self.plan.clone();
        if let Some(ln) = self.fixed_ln {
            plan.ln_grid = vec![ln];
        }
        if let Some(lambda) = self.fixed_lambda {
            plan.lambda_grid = Some(vec![lambda]);
        }
        plan
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<ConfigFile> {
    path.map_or_else(|| Ok(ConfigFile::default()), |p| ConfigFile::load(p))
}

fn scenario_from(
    args: &ScenarioArgs,
    file: Option<&ScenarioFile>,
    seed: Option<u64>,
) -> Result<ScenarioConfig> {
    let file_default = ScenarioFile::default();
    let f = file.unwrap_or(&file_default);
    let required = |v: Option<usize>, name: &str| {
        v.ok_or_else(|| VcldaError::InvalidArgument(format!("missing scenario parameter '{name}'")))
    };
    let direction = Direction::try_from(args.direction.or(f.direction).unwrap_or(1))?;
    let covariance = CovarianceKind::try_from(args.covariance.or(f.covariance).unwrap_or(1))?;
    let p = required(args.p.or(f.p), "p")?;
    let n = required(args.n_per_class.or(f.n_per_class), "n-per-class")?;
    let s = args.s.or(f.s).unwrap_or(p);
    let mut config = ScenarioConfig::new(direction, covariance, n, p, s);
    if let Some(t) = args.test_size.or(f.test_size) {
        config.test_size = t;
    }
    config.seed = seed.or(f.seed).unwrap_or(0);
    config.validate()?;
    Ok(config)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let config = scenario_from(&args.scenario, None, Some(args.seed))?;
    let (train, test, _) = generate(&config)?;
    train.save_csv(&args.out)?;
    if let Some(path) = &args.test_out {
        test.save_csv(path)?;
    }
    eprintln!(
        "wrote {} training rows{}",
        train.len(),
        args.test_out
            .as_ref()
            .map(|_| format!(" and {} test rows", test.len()))
            .unwrap_or_default()
    );
    Ok(())
}

pub fn cmd_fit(args: &FitArgs) -> Result<()> {
    let file = load_config(args.estimator.config.as_ref())?;
    let est = Estimator::resolve(&args.estimator, &file)?;
    let data = Dataset::load_csv(&args.data)?;
    let (model, report, ln, lambda) = match est.fixed_config() {
        Some(config) => {
            let (model, report) =
                ClassifierModel::fit(data.x.view(), data.u.view(), &data.y, &config)?;
            (model, report, config.num_basis, config.lambda)
        }
        None => {
            let (model, report, cv) = fit_with_cv(&data, &est.search_plan(), est.regime, est.mode)?;
            eprintln!("cross-validated risk {:.3}", cv.best_risk);
            (model, report, cv.best_ln, cv.best_lambda)
        }
    };
    if let Some(ista) = &report.ista {
        if !ista.converged {
            eprintln!(
                "warning: ISTA stopped after {} iterations with KKT residual {:.3e}",
                ista.iterations, ista.kkt_residual
            );
            if args.require_converged {
                return Err(VcldaError::SingularSystem {
                    condition: f64::INFINITY,
                });
            }
        }
    }
    model.save(&args.out)?;
    println!("selected ln = {ln}, lambda = {lambda}");
    println!(
        "samples = {}, features = {}, support size = {}, training risk = {:.3}",
        data.len(),
        data.num_features(),
        report.support.len(),
        report.training_risk
    );
    Ok(())
}

pub fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let model = ClassifierModel::load(&args.model)?;
    let obs = Observations::load_csv(&args.data)?;
    let labels = model.predict_batch(obs.x.view(), obs.u.view())?;
    let mut text = String::from("label\n");
    for l in &labels {
        text.push_str(&format!("{l}\n"));
    }
    let risk_line = obs.y.as_ref().map(|y| {
        format!(
            "risk = {:.3}",
            crate::classify::misclassification_rate(&labels, y)
        )
    });
    match &args.out {
        Some(path) => {
            std::fs::write(path, text)?;
            if let Some(line) = risk_line {
                println!("{line}");
            }
        }
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            if let Some(line) = risk_line {
                eprintln!("{line}");
            }
        }
    }
    Ok(())
}

pub fn cmd_cv(args: &CvArgs) -> Result<()> {
    let file = load_config(args.estimator.config.as_ref())?;
    let est = Estimator::resolve(&args.estimator, &file)?;
    let data = Dataset::load_csv(&args.data)?;
    let cv = cross_validate(&data, &est.search_plan(), est.regime, est.mode)?;
    let table = cv.table_csv();
    match &args.out {
        Some(path) => std::fs::write(path, table)?,
        None => std::io::stdout().write_all(table.as_bytes())?,
    }
    eprintln!(
        "best ln = {}, lambda = {}, cv risk = {:.3}",
        cv.best_ln, cv.best_lambda, cv.best_risk
    );
    Ok(())
}

/// Build the experiment from config file and flags (flags win).
pub fn experiment_from(args: &BenchmarkArgs) -> Result<ExperimentSpec> {
    let file = load_config(args.estimator.config.as_ref())?;
    let est = Estimator::resolve(&args.estimator, &file)?;
    let scenario = scenario_from(&args.scenario, file.scenario.as_ref(), args.estimator.seed)?;
    let mut spec = ExperimentSpec::new(scenario, args.trials.or(file.trials).unwrap_or(100));
    if let Some(methods) = &args.methods {
        spec.methods = methods.iter().map(|m| m.parse()).collect::<Result<_>>()?;
    } else if let Some(methods) = &file.methods {
        spec.methods = methods.clone();
    }
    spec.regime = est.regime;
    spec.prior_mode = est.mode;
    spec.tuning = match est.fixed_config() {
        Some(c) => Tuning::Fixed {
            ln: c.num_basis,
            lambda: c.lambda,
        },
        None => Tuning::CrossValidated(est.search_plan()),
    };
    spec.output_path = args.out.clone().or(file.output_path);
    Ok(spec)
}

pub fn cmd_benchmark(args: &BenchmarkArgs) -> Result<()> {
    let spec = experiment_from(args)?;
    eprintln!("running {} trials", spec.trials);
    let start = Instant::now();
    let mut results = run_benchmark(&spec, args.threads)?;
    let elapsed = start.elapsed().as_secs_f64();
    eprintln!("finished in {elapsed:.1} s");
    if args.timing {
        results.wall_clock_seconds = Some(elapsed);
    }
    if let Some(path) = &spec.output_path {
        std::fs::write(path, results.to_json()?)?;
    }
    print!("{}", results.render_table());
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Cv(a) => cmd_cv(a),
        Command::Benchmark(a) => cmd_benchmark(a),
    }
}

/// Parse arguments, run, and map the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}
