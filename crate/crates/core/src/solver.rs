//! Solvers for the spline coefficients γ.
//!
//! Low-dimensional fits solve `D γ = b` directly. High-dimensional fits
//! minimize `½ γᵀDγ − bᵀγ + λ Σⱼ ‖γ_(j)‖₂` by proximal gradient (ISTA) with a
//! backtracking step size that never grows.

use ndarray::{s, Array1, ArrayView1, ArrayViewMut1};
use serde::{Deserialize, Serialize};

use crate::design::DesignSystem;
use crate::error::{Result, VcldaError};
use crate::linalg;

/// Stacked per-feature spline coefficients; group `j` is `values[j*ln..(j+1)*ln]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaCoefficients {
    values: Array1<f64>,
    p: usize,
    ln: usize,
}

impl GammaCoefficients {
    pub fn new(values: Array1<f64>, p: usize, ln: usize) -> Result<Self> {
        if values.len() != p * ln {
            return Err(VcldaError::DimensionMismatch(format!(
                "{} coefficients for p = {p}, ln = {ln}",
                values.len()
            )));
        }
        Ok(GammaCoefficients { values, p, ln })
    }

    pub fn zeros(p: usize, ln: usize) -> Self {
        GammaCoefficients {
            values: Array1::zeros(p * ln),
            p,
            ln,
        }
    }

    pub fn values(&self) -> ArrayView1<'_, f64> {
        self.values.view()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn ln(&self) -> usize {
        self.ln
    }

    pub fn group(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.slice(s![j * self.ln..(j + 1) * self.ln])
    }

    pub fn group_norm(&self, j: usize) -> f64 {
        norm(self.group(j))
    }

    /// Features whose coefficient block has norm above `tol`.
    pub fn support(&self, tol: f64) -> Vec<usize> {
        (0..self.p).filter(|&j| self.group_norm(j) > tol).collect()
    }

    pub fn into_values(self) -> Array1<f64> {
        self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IstaOptions {
    pub max_iters: usize,
    /// Stop when `|F_t − F_{t+1}| ≤ rel_tol · |F_t|`. Zero disables the test.
    pub rel_tol: f64,
    /// Backtracking factor ρ in (0, 1).
    pub shrink_rate: f64,
    /// Starting step η₀.
    pub initial_step: f64,
    /// Stop when the KKT residual is at most `kkt_tol · max(1, λ_max)`.
    pub kkt_tol: f64,
}

impl Default for IstaOptions {
    fn default() -> Self {
        IstaOptions {
            max_iters: 10_000,
            rel_tol: 1e-8,
            shrink_rate: 0.5,
            initial_step: 1.0,
            kkt_tol: 1e-6,
        }
    }
}

impl IstaOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0
            || !(self.shrink_rate > 0.0 && self.shrink_rate < 1.0)
            || !(self.initial_step > 0.0)
            || !(self.rel_tol >= 0.0)
            || !(self.kkt_tol >= 0.0)
        {
            return Err(VcldaError::InvalidArgument(format!(
                "invalid ISTA options {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IstaReport {
    pub iterations: usize,
    pub objective: f64,
    pub converged: bool,
    pub kkt_residual: f64,
    /// Objective at the start point followed by one entry per accepted step.
    pub objective_trace: Vec<f64>,
    pub final_step: f64,
}

fn norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// Solve `D γ = b` by Cholesky, rejecting near-singular systems.
pub fn solve_closed_form(sys: &DesignSystem) -> Result<GammaCoefficients> {
    let chol = linalg::factor_well_conditioned(sys.dn.view())
        .map_err(|condition| VcldaError::SingularSystem { condition })?;
    let gamma = chol.solve(sys.bn.view());
    GammaCoefficients::new(gamma, sys.p, sys.ln)
}

/// `½ γᵀDγ − bᵀγ + λ Σⱼ ‖γ_(j)‖₂`.
pub fn objective(gamma: &GammaCoefficients, sys: &DesignSystem, lambda: f64) -> f64 {
    let dg = sys.dn.dot(&gamma.values);
    smooth_value(gamma.values.view(), dg.view(), sys) + lambda * penalty(gamma)
}

/// Gradient of the smooth part, `Dγ − b`.
pub fn smooth_gradient(gamma: &GammaCoefficients, sys: &DesignSystem) -> Array1<f64> {
    sys.dn.dot(&gamma.values) - &sys.bn
}

fn smooth_value(gamma: ArrayView1<f64>, dg: ArrayView1<f64>, sys: &DesignSystem) -> f64 {
    0.5 * gamma.dot(&dg) - sys.bn.dot(&gamma)
}

fn penalty(gamma: &GammaCoefficients) -> f64 {
    (0..gamma.p).map(|j| gamma.group_norm(j)).sum()
}

/// Proximal map of `t ‖·‖₂`: shrinks `v` toward zero by `t` in norm.
pub fn group_soft_threshold(v: ArrayView1<f64>, t: f64) -> Array1<f64> {
    let mut out = v.to_owned();
    soft_threshold_in_place(out.view_mut(), t);
    out
}

fn soft_threshold_in_place(mut v: ArrayViewMut1<f64>, t: f64) {
    let nv = norm(v.view());
    if nv <= t || nv == 0.0 {
        v.fill(0.0);
    } else {
        let factor = (nv - t) / nv;
        v.mapv_inplace(|x| x * factor);
    }
}

/// Largest violation of the group-lasso optimality conditions at `gamma`,
/// given the smooth gradient there.
pub fn kkt_residual(gamma: &GammaCoefficients, grad: ArrayView1<f64>, lambda: f64) -> f64 {
    let ln = gamma.ln;
    (0..gamma.p)
        .map(|j| {
            let gj = grad.slice(s![j * ln..(j + 1) * ln]);
            let cj = gamma.group(j);
            let nc = norm(cj);
            if nc > 0.0 {
                let r = &gj + &(&cj * (lambda / nc));
                norm(r.view())
            } else {
                (norm(gj) - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// `D v`, touching only the row blocks of groups where `v` is nonzero.
///
/// `D` is symmetric, so `D v = Σ_{active j} D[block j, :]ᵀ v_(j)` reads rows contiguously.
fn sparse_group_mul(sys: &DesignSystem, v: ArrayView1<f64>) -> Array1<f64> {
    let ln = sys.ln;
    let mut out = Array1::<f64>::zeros(sys.dim());
    for j in 0..sys.p {
        let block = v.slice(s![j * ln..(j + 1) * ln]);
        if block.iter().all(|&c| c == 0.0) {
            continue;
        }
        for (a, &c) in block.iter().enumerate() {
            if c != 0.0 {
                out.scaled_add(c, &sys.dn.row(j * ln + a));
            }
        }
    }
    out
}

/// Group-lasso ISTA with backtracking.
///
/// Starts from `warm_start` or zero. Each iteration shrinks the step by
/// `shrink_rate` until the quadratic upper bound holds at the proximal point,
/// then accepts that point. Stops on the KKT test, the relative objective
/// change test, or `max_iters`; `converged` reports whether the KKT test holds
/// at the returned point.
pub fn ista_solve(
    sys: &DesignSystem,
    lambda: f64,
    opts: &IstaOptions,
    warm_start: Option<&GammaCoefficients>,
) -> Result<(GammaCoefficients, IstaReport)> {
    opts.validate()?;
    if !(lambda >= 0.0) {
        return Err(VcldaError::InvalidArgument(format!(
            "negative penalty {lambda}"
        )));
    }
    let (p, ln) = (sys.p, sys.ln);
    let mut gamma = match warm_start {
        Some(w) if w.p == p && w.ln == ln => w.clone(),
        Some(w) => {
            return Err(VcldaError::DimensionMismatch(format!(
                "warm start ({}, {}) for system ({p}, {ln})",
                w.p, w.ln
            )))
        }
        None => GammaCoefficients::zeros(p, ln),
    };
    let kkt_target = opts.kkt_tol * sys.lambda_max().max(1.0);

    let mut dg = sparse_group_mul(sys, gamma.values.view());
    let mut grad = &dg - &sys.bn;
    let mut smooth = smooth_value(gamma.values.view(), dg.view(), sys);
    let mut total = smooth + lambda * penalty(&gamma);
    let mut trace = vec![total];
    let mut eta = opts.initial_step;
    let mut kkt = kkt_residual(&gamma, grad.view(), lambda);
    let mut iterations = 0;

    while kkt > kkt_target && iterations < opts.max_iters {
        let mut accepted = None;
        // the step can only shrink ~1075 times before underflow
        for _ in 0..1100 {
            let mut candidate = &gamma.values - &(&grad * eta);
            for j in 0..p {
                soft_threshold_in_place(
                    candidate.slice_mut(s![j * ln..(j + 1) * ln]),
                    eta * lambda,
                );
            }
            let dc = sparse_group_mul(sys, candidate.view());
            let cand_smooth = smooth_value(candidate.view(), dc.view(), sys);
            let step = &candidate - &gamma.values;
            // g(c) ≤ g(γ) + stepᵀ∇g + ‖step‖²/(2η) is exactly stepᵀ D step ≤ ‖step‖²/η
            // for a quadratic g; this form does not cancel near convergence.
            let curvature = step.dot(&(&dc - &dg));
            if curvature * eta <= step.dot(&step) {
                accepted = Some((candidate, dc, cand_smooth));
                break;
            }
            eta *= opts.shrink_rate;
        }
        let Some((candidate, dc, cand_smooth)) = accepted else {
            break;
        };
        gamma.values = candidate;
        dg = dc;
        grad = &dg - &sys.bn;
        smooth = cand_smooth;
        let next_total = smooth + lambda * penalty(&gamma);
        iterations += 1;
        trace.push(next_total);
        kkt = kkt_residual(&gamma, grad.view(), lambda);
        let change = (total - next_total).abs();
        total = next_total;
        if opts.rel_tol > 0.0 && change <= opts.rel_tol * total.abs() {
            break;
        }
    }

    let report = IstaReport {
        iterations,
        objective: total,
        converged: kkt <= kkt_target,
        kkt_residual: kkt,
        objective_trace: trace,
        final_step: eta,
    };
    Ok((gamma, report))
}
