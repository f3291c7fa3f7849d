//! Bias-variance analysis of regularized Gaussian mean estimation.
//!
//! Fitting the mean of `N(μ*, σ²)` from `m` samples with a penalty pulling
//! towards a pre-trained estimate `μ_pre` gives the shrinkage estimator
//! `(1 - β)·x̄ + β·μ_pre` with `β = λ / (1 + λ)`. Its MSE is the quadratic
//! `β²Δ² + (1 - β)²σ²/m` where `Δ = μ_pre - μ*`, which interpolates between
//! the unbiased sample mean (`β = 0`) and the zero-variance pre-trained
//! estimate (`β = 1`).

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::numeric::{compensated_sum, mean_and_stderr};
use crate::par::{map_indexed, Exec};
use crate::rng::{normal, stream_rng};

/// One instance of the Gaussian-fitting problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSpec {
    pub mu_star: f64,
    pub sigma2: f64,
    pub m: usize,
    pub mu_pre: f64,
}

impl Default for GaussianSpec {
    /// `σ² = 1`, `m = 150`, `Δ = 0.1`.
    fn default() -> Self {
        Self { mu_star: 0.0, sigma2: 1.0, m: 150, mu_pre: 0.1 }
    }
}

impl GaussianSpec {
    pub fn new(mu_star: f64, sigma2: f64, m: usize, mu_pre: f64) -> Result<Self> {
        let spec = Self { mu_star, sigma2, m, mu_pre };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(invalid(format!("sigma2 must be positive and finite, got {}", self.sigma2)));
        }
        if self.m == 0 {
            return Err(invalid("sample size m must be at least 1"));
        }
        if !self.mu_star.is_finite() || !self.mu_pre.is_finite() {
            return Err(invalid("means must be finite"));
        }
        Ok(())
    }

    /// Bias of the pre-trained estimate, `μ_pre - μ*`.
    pub fn delta(&self) -> f64 {
        self.mu_pre - self.mu_star
    }

    pub fn mse_mle(&self) -> f64 {
        self.sigma2 / self.m as f64
    }

    pub fn mse_pre(&self) -> f64 {
        let d = self.delta();
        d * d
    }

    pub fn with_m(self, m: usize) -> Self {
        Self { m, ..self }
    }

    pub fn with_delta(self, delta: f64) -> Self {
        Self { mu_pre: self.mu_star + delta, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorKind {
    Mle,
    Pre,
    Reg { lambda: f64 },
}

/// Closed-form MSEs at one regularization weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeoffPoint {
    pub beta: f64,
    pub mse_reg: f64,
    pub mse_mle: f64,
    pub mse_pre: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Optimum {
    pub beta_star: f64,
    pub lambda_star: f64,
    pub mse_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mse_hat: f64,
    /// Plug-in standard error: sample std of the squared errors over `sqrt(trials)`.
    pub stderr: f64,
}

fn sample_mean(sample: &[f64]) -> f64 {
    compensated_sum(sample.iter().copied()) / sample.len() as f64
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && !lambda.is_nan() {
        Ok(())
    } else {
        Err(invalid(format!("lambda must be nonnegative, got {lambda}")))
    }
}

/// Regularized estimate `x̄/(1+λ) + λ·μ_pre/(1+λ)`; `λ = 0` returns `x̄` itself.
pub fn reg_estimate(mean: f64, mu_pre: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        mean
    } else if lambda.is_infinite() {
        mu_pre
    } else {
        (1.0 / (1.0 + lambda)) * mean + (lambda / (1.0 + lambda)) * mu_pre
    }
}

pub fn estimate(kind: EstimatorKind, sample: &[f64], spec: &GaussianSpec) -> Result<f64> {
    match kind {
        EstimatorKind::Pre => Ok(spec.mu_pre),
        EstimatorKind::Mle | EstimatorKind::Reg { .. } if sample.is_empty() => {
            Err(invalid("estimator needs a nonempty sample"))
        }
        EstimatorKind::Mle => Ok(sample_mean(sample)),
        EstimatorKind::Reg { lambda } => {
            check_lambda(lambda)?;
            Ok(reg_estimate(sample_mean(sample), spec.mu_pre, lambda))
        }
    }
}

pub fn mse_closed_form(spec: &GaussianSpec, beta: f64) -> Result<TradeoffPoint> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(invalid(format!("beta must lie in [0, 1], got {beta}")));
    }
    let (mle, pre) = (spec.mse_mle(), spec.mse_pre());
    let mse_reg = beta * beta * pre + (1.0 - beta) * (1.0 - beta) * mle;
    Ok(TradeoffPoint { beta, mse_reg, mse_mle: mle, mse_pre: pre })
}

/// The weights strictly inside `(lo, hi)` beat both MLE and PRE.
pub fn admissible_beta_interval(spec: &GaussianSpec) -> Result<(f64, f64)> {
    let s2 = spec.sigma2;
    let md2 = spec.m as f64 * spec.mse_pre();
    let lo = ((s2 - md2) / (s2 + md2)).max(0.0);
    let hi = (2.0 * s2 / (s2 + md2)).min(1.0);
    if lo < hi {
        Ok((lo, hi))
    } else {
        Err(Error::DegenerateInterval { lo, hi })
    }
}

pub fn optimal_beta(spec: &GaussianSpec) -> Result<Optimum> {
    let d2 = spec.mse_pre();
    if d2 == 0.0 {
        return Err(Error::DegenerateOptimum { beta_limit: 1.0 });
    }
    let s2 = spec.sigma2;
    let md2 = spec.m as f64 * d2;
    Ok(Optimum {
        beta_star: s2 / (s2 + md2),
        lambda_star: s2 / md2,
        mse_min: s2 * d2 / (s2 + md2),
    })
}

/// `E_S[R(μ̂)] = mse / (2σ²) + ½·ln(2πσ²) + ½`.
pub fn expected_risk(spec: &GaussianSpec, mse: f64) -> Result<f64> {
    if !(mse >= 0.0) {
        return Err(invalid(format!("mse must be nonnegative, got {mse}")));
    }
    let s2 = spec.sigma2;
    Ok(mse / (2.0 * s2) + 0.5 * (2.0 * PI * s2).ln() + 0.5)
}

pub fn monte_carlo_mse(spec: &GaussianSpec, kind: EstimatorKind, trials: usize, seed: u64) -> Result<McEstimate> {
    monte_carlo_mse_with(spec, kind, trials, seed, Exec::default())
}

pub fn monte_carlo_mse_with(
    spec: &GaussianSpec,
    kind: EstimatorKind,
    trials: usize,
    seed: u64,
    exec: Exec,
) -> Result<McEstimate> {
    spec.validate()?;
    if trials < 2 {
        return Err(invalid("monte carlo needs at least 2 trials"));
    }
    match kind {
        // Data-independent: every trial has squared error Δ².
        EstimatorKind::Pre => Ok(McEstimate { mse_hat: spec.mse_pre(), stderr: 0.0 }),
        EstimatorKind::Mle => Ok(mc_squared_errors(spec, trials, seed, exec, |mean| mean)),
        EstimatorKind::Reg { lambda } => {
            check_lambda(lambda)?;
            Ok(mc_squared_errors(spec, trials, seed, exec, |mean| reg_estimate(mean, spec.mu_pre, lambda)))
        }
    }
}

/// Trial `t` draws its sample from stream `t` of `seed`.
fn mc_squared_errors<F>(spec: &GaussianSpec, trials: usize, seed: u64, exec: Exec, est: F) -> McEstimate
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    let sd = spec.sigma2.sqrt();
    let errs = map_indexed(exec, trials, |t| {
        let mut rng = stream_rng(seed, t as u64);
        let mut acc = crate::numeric::CompensatedSum::new();
        for _ in 0..spec.m {
            acc.add(spec.mu_star + sd * normal(&mut rng));
        }
        let e = est(acc.value() / spec.m as f64) - spec.mu_star;
        e * e
    });
    let (mse_hat, stderr) = mean_and_stderr(&errs);
    McEstimate { mse_hat, stderr }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Grid of weights β at the fixed spec.
    Beta,
    /// Grid of sample sizes, λ = λ* per point.
    SampleSize,
    /// Grid of biases Δ, λ = λ* per point.
    Bias,
}

/// One row of a sweep: closed-form MSEs plus optional Monte-Carlo check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    pub beta: f64,
    pub lambda: f64,
    pub point: TradeoffPoint,
    pub mc: Option<McEstimate>,
}

impl SweepRow {
    /// `MSE_MLE - MSE_REG`.
    pub fn gap_vs_mle(&self) -> f64 {
        self.point.mse_mle - self.point.mse_reg
    }

    /// `MSE_PRE - MSE_REG`.
    pub fn gap_vs_pre(&self) -> f64 {
        self.point.mse_pre - self.point.mse_reg
    }
}

pub fn sweep(spec: &GaussianSpec, axis: SweepAxis, grid: &[f64], mc_trials: usize, seed: u64) -> Result<Vec<SweepRow>> {
    sweep_with(spec, axis, grid, mc_trials, seed, Exec::default())
}

pub fn sweep_with(
    spec: &GaussianSpec,
    axis: SweepAxis,
    grid: &[f64],
    mc_trials: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    if grid.is_empty() {
        return Err(invalid("sweep grid is empty"));
    }
    if mc_trials == 1 {
        return Err(invalid("mc_trials must be 0 (disabled) or at least 2"));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &v in grid {
        let (point_spec, beta, lambda) = match axis {
            SweepAxis::Beta => {
                let lambda = if v == 1.0 { f64::INFINITY } else { v / (1.0 - v) };
                (*spec, v, lambda)
            }
            SweepAxis::SampleSize => {
                if !(v >= 1.0 && v.fract() == 0.0 && v.is_finite()) {
                    return Err(invalid(format!("sample-size grid values must be positive integers, got {v}")));
                }
                let s = spec.with_m(v as usize);
                let opt = optimal_beta(&s)?;
                (s, opt.beta_star, opt.lambda_star)
            }
            SweepAxis::Bias => {
                if !v.is_finite() {
                    return Err(invalid(format!("bias grid values must be finite, got {v}")));
                }
                let s = spec.with_delta(v);
                let opt = optimal_beta(&s)?;
                (s, opt.beta_star, opt.lambda_star)
            }
        };
        let point = mse_closed_form(&point_spec, beta)?;
        let mc = if mc_trials > 0 {
            let est = mc_squared_errors(&point_spec, mc_trials, seed, exec, |mean| {
                (1.0 - beta) * mean + beta * point_spec.mu_pre
            });
            Some(est)
        } else {
            None
        };
        rows.push(SweepRow { axis_value: v, beta, lambda, point, mc });
    }
    Ok(rows)
}
