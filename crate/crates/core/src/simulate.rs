//! Synthetic Gaussian scenarios with exposure-dependent means and covariance.
//!
//! Class 1 has mean zero and class 0 has mean `Σ(u) β(u)`, so the Bayes
//! direction `Σ⁻¹(μ₁ − μ₀)` is `−β(u)`. The oracle keeps that sign.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Result, VcldaError};
use crate::linalg::Cholesky;
use crate::meanfit::Class;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Direction {
    /// `βⱼ(u) = 1`
    Constant,
    /// `βⱼ(u) = u`
    Linear,
    /// `βⱼ(u) = sin(4u)`
    Sine,
    /// `βⱼ(u) = eᵘ`
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum CovarianceKind {
    /// `σᵢⱼ = 0.5^|i−j|`
    Ar05,
    /// `σᵢⱼ = u^|i−j|`
    ArU,
    /// `σᵢⱼ = u` off the diagonal, 1 on it
    Exchangeable,
}

impl TryFrom<u32> for Direction {
    type Error = VcldaError;

    fn try_from(id: u32) -> Result<Self> {
        match id {
            1 => Ok(Direction::Constant),
            2 => Ok(Direction::Linear),
            3 => Ok(Direction::Sine),
            4 => Ok(Direction::Exponential),
            other => Err(VcldaError::UnknownDirection(other)),
        }
    }
}

impl From<Direction> for u32 {
    fn from(d: Direction) -> u32 {
        match d {
            Direction::Constant => 1,
            Direction::Linear => 2,
            Direction::Sine => 3,
            Direction::Exponential => 4,
        }
    }
}

impl TryFrom<u32> for CovarianceKind {
    type Error = VcldaError;

    fn try_from(id: u32) -> Result<Self> {
        match id {
            1 => Ok(CovarianceKind::Ar05),
            2 => Ok(CovarianceKind::ArU),
            3 => Ok(CovarianceKind::Exchangeable),
            other => Err(VcldaError::UnknownCovariance(other)),
        }
    }
}

impl From<CovarianceKind> for u32 {
    fn from(c: CovarianceKind) -> u32 {
        match c {
            CovarianceKind::Ar05 => 1,
            CovarianceKind::ArU => 2,
            CovarianceKind::Exchangeable => 3,
        }
    }
}

impl Direction {
    pub fn coefficient(self, u: f64) -> f64 {
        match self {
            Direction::Constant => 1.0,
            Direction::Linear => u,
            Direction::Sine => (4.0 * u).sin(),
            Direction::Exponential => u.exp(),
        }
    }
}

/// `β(u)`: the selected coefficient on the first `s` entries, zero after.
pub fn direction_value(direction: Direction, u: f64, p: usize, s: usize) -> Array1<f64> {
    let c = direction.coefficient(u);
    Array1::from_shape_fn(p, |j| if j < s { c } else { 0.0 })
}

/// `Σ(u)`, with `0⁰ = 1` so the `u^|i−j|` family is the identity at `u = 0`.
pub fn covariance_value(kind: CovarianceKind, u: f64, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((p, p), |(i, j)| {
        let lag = i.abs_diff(j);
        match kind {
            CovarianceKind::Ar05 => 0.5f64.powi(lag as i32),
            CovarianceKind::ArU => {
                if lag == 0 {
                    1.0
                } else {
                    u.powi(lag as i32)
                }
            }
            CovarianceKind::Exchangeable => {
                if lag == 0 {
                    1.0
                } else {
                    u
                }
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_per_class: usize,
    pub p: usize,
    /// Number of nonzero direction entries; equals `p` in low-dimensional scenarios.
    pub s: usize,
    pub direction: Direction,
    pub covariance: CovarianceKind,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_test_size() -> usize {
    200
}

impl ScenarioConfig {
    pub fn new(
        direction: Direction,
        covariance: CovarianceKind,
        n_per_class: usize,
        p: usize,
        s: usize,
    ) -> Self {
        ScenarioConfig {
            n_per_class,
            p,
            s,
            direction,
            covariance,
            test_size: default_test_size(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.s == 0 || self.s > self.p {
            return Err(VcldaError::InvalidArgument(format!(
                "need 1 <= s <= p, got s = {}, p = {}",
                self.s, self.p
            )));
        }
        if self.n_per_class == 0 || self.test_size == 0 {
            return Err(VcldaError::InvalidArgument(
                "sample sizes must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn oracle(&self) -> ScenarioOracle {
        ScenarioOracle {
            direction: self.direction,
            covariance: self.covariance,
            p: self.p,
            s: self.s,
        }
    }
}

/// Ground truth of a scenario, available only in simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioOracle {
    pub direction: Direction,
    pub covariance: CovarianceKind,
    pub p: usize,
    pub s: usize,
}

impl ScenarioOracle {
    pub fn beta(&self, u: f64) -> Array1<f64> {
        direction_value(self.direction, u, self.p, self.s)
    }

    pub fn covariance(&self, u: f64) -> Array2<f64> {
        covariance_value(self.covariance, u, self.p)
    }

    pub fn mean(&self, u: f64, class: Class) -> Array1<f64> {
        match class {
            Class::One => Array1::zeros(self.p),
            Class::Zero => self.covariance(u).dot(&self.beta(u)),
        }
    }

    /// `Σ(u)⁻¹(μ₁(u) − μ₀(u)) = −β(u)`.
    pub fn bayes_direction(&self, u: f64) -> Result<Array1<f64>> {
        if self.covariance == CovarianceKind::Exchangeable && u >= 1.0 && self.p > 1 {
            return Err(VcldaError::SingularCovariance);
        }
        Ok(-self.beta(u))
    }

    /// Mahalanobis separation `Δ(u) = sqrt(βᵀΣβ)`.
    pub fn delta(&self, u: f64) -> f64 {
        let beta = self.beta(u);
        beta.dot(&self.covariance(u).dot(&beta)).max(0.0).sqrt()
    }

    /// Least-squares direction `θ*(u) = β*(u) / (4 + Δ(u)²)` for equal priors;
    /// a positive multiple of the Bayes direction.
    pub fn theta_star(&self, u: f64) -> Result<Array1<f64>> {
        let d = self.delta(u);
        Ok(self.bayes_direction(u)? / (4.0 + d * d))
    }
}

/// Seed of Monte Carlo trial `trial` under master seed `seed` (SplitMix64 finalizer).
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    let mut z = seed.wrapping_add(trial.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws from one scenario; owns the RNG so train and test come from one stream.
pub struct Sampler {
    oracle: ScenarioOracle,
    rng: ChaCha20Rng,
    fixed_factor: Option<Cholesky>,
}

impl Sampler {
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let oracle = config.oracle();
        let fixed_factor = match config.covariance {
            CovarianceKind::Ar05 => Some(
                Cholesky::factor(oracle.covariance(0.0).view())
                    .ok_or(VcldaError::SingularCovariance)?,
            ),
            _ => None,
        };
        Ok(Sampler {
            oracle,
            rng: ChaCha20Rng::seed_from_u64(config.seed),
            fixed_factor,
        })
    }

    fn draw_exposure(&mut self) -> f64 {
        loop {
            let u: f64 = self.rng.random();
            // the exchangeable covariance is singular at u = 1
            if u < 1.0 {
                return u;
            }
        }
    }

    /// One observation of class `label` at exposure `u`.
    pub fn draw_at(&mut self, u: f64, label: u8) -> Result<Array1<f64>> {
        let p = self.oracle.p;
        let z: Array1<f64> = (0..p)
            .map(|_| self.rng.sample::<f64, _>(StandardNormal))
            .collect();
        let noise = match &self.fixed_factor {
            Some(f) => f.lower_mul(z.view()),
            None => Cholesky::factor(self.oracle.covariance(u).view())
                .ok_or(VcldaError::SingularCovariance)?
                .lower_mul(z.view()),
        };
        let class = if label == 1 { Class::One } else { Class::Zero };
        Ok(self.oracle.mean(u, class) + noise)
    }

    /// `n1` class-1 rows followed by `n0` class-0 rows.
    pub fn draw_dataset(&mut self, n1: usize, n0: usize) -> Result<Dataset> {
        let n = n1 + n0;
        let mut x = Array2::<f64>::zeros((n, self.oracle.p));
        let mut u = Array1::<f64>::zeros(n);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let label = u8::from(i < n1);
            let ui = self.draw_exposure();
            x.row_mut(i).assign(&self.draw_at(ui, label)?);
            u[i] = ui;
            y.push(label);
        }
        Dataset::new(x, u, y)
    }
}

/// Balanced training set, balanced test set of `test_size` rows, and the truth.
pub fn generate(config: &ScenarioConfig) -> Result<(Dataset, Dataset, ScenarioOracle)> {
    let mut sampler = Sampler::new(config)?;
    let train = sampler.draw_dataset(config.n_per_class, config.n_per_class)?;
    let test_class1 = config.test_size - config.test_size / 2;
    let test = sampler.draw_dataset(test_class1, config.test_size / 2)?;
    Ok((train, test, config.oracle()))
}
