//! Time-indexed Gaussian policy over open-loop joint accelerations.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::ControlBatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMode {
    /// One variance per horizon step shared by all joints.
    Isotropic,
    /// An independent variance per step and joint.
    #[default]
    PerJointDiagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CommandMode {
    /// Execute the first mean of the horizon.
    #[default]
    Mean,
    /// Draw the command from the first-step Gaussian.
    Sample,
}

/// Per-step means and diagonal variances, both `H×d`.
///
/// In isotropic mode every row of `variances` holds one repeated value.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub means: DMatrix<f64>,
    pub variances: DMatrix<f64>,
    pub mode: CovarianceMode,
}

impl PolicyParams {
    pub fn new(horizon: usize, dof: usize, initial_variance: f64, mode: CovarianceMode) -> Self {
        PolicyParams {
            means: DMatrix::zeros(horizon, dof),
            variances: DMatrix::from_element(horizon, dof, initial_variance),
            mode,
        }
    }

    pub fn horizon(&self) -> usize {
        self.means.nrows()
    }

    pub fn dof(&self) -> usize {
        self.means.ncols()
    }

    pub fn variance_trace(&self) -> f64 {
        self.variances.sum()
    }
}

/// Step sizes, temperature and clamps for one distribution update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateConfig {
    pub beta: f64,
    pub alpha_mu: f64,
    pub alpha_sigma: f64,
    pub variance_min: f64,
    pub variance_max: f64,
    /// Variance given to the step appended by [`shift`].
    pub initial_variance: f64,
    /// Mean appended by [`shift`]; zero acceleration by default.
    pub default_tail: Vec<f64>,
}

impl UpdateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        for (name, a) in [("alpha_mu", self.alpha_mu), ("alpha_sigma", self.alpha_sigma)] {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1], got {a}")));
            }
        }
        if !(self.variance_min > 0.0 && self.variance_min <= self.variance_max) {
            return Err(Error::Config(format!(
                "variance clamp [{}, {}] is invalid",
                self.variance_min, self.variance_max
            )));
        }
        Ok(())
    }
}

/// `w_i = exp(-(C_i - min C)/β)`. Quarantined (`+∞`) totals get zero weight.
pub fn particle_weights(totals: &DVector<f64>, beta: f64) -> Result<DVector<f64>> {
    let min = totals
        .iter()
        .copied()
        .filter(|c| c.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::Policy(
            "every particle has infinite cost; no weights to normalize".into(),
        ));
    }
    let w = totals.map(|c| if c.is_finite() { (-(c - min) / beta).exp() } else { 0.0 });
    if !(w.sum() > 0.0) {
        return Err(Error::Policy(format!(
            "all particle weights underflowed; increase beta (currently {beta})"
        )));
    }
    Ok(w)
}

fn weighted_mean(controls: &ControlBatch, weights: &DVector<f64>) -> DMatrix<f64> {
    let norm = weights.sum();
    let (h, d) = controls.controls[0].shape();
    let mut acc = DMatrix::zeros(h, d);
    for (u, &w) in controls.controls.iter().zip(weights.iter()) {
        if w > 0.0 {
            acc += u * w;
        }
    }
    acc / norm
}

/// `μ ← (1-α_μ)μ + α_μ Σ w_i u_i / Σ w_i`.
pub fn update_mean(
    policy: &PolicyParams,
    controls: &ControlBatch,
    weights: &DVector<f64>,
    alpha_mu: f64,
) -> PolicyParams {
    let avg = weighted_mean(controls, weights);
    PolicyParams {
        means: &policy.means * (1.0 - alpha_mu) + avg * alpha_mu,
        ..policy.clone()
    }
}

/// Blends the diagonal of the weighted sample covariance around the (already
/// updated) mean into the previous variances, then clamps.
pub fn update_covariance(
    policy: &PolicyParams,
    controls: &ControlBatch,
    weights: &DVector<f64>,
    alpha_sigma: f64,
    variance_min: f64,
    variance_max: f64,
) -> PolicyParams {
    let norm = weights.sum();
    let (h, d) = policy.means.shape();
    let mut spread = DMatrix::zeros(h, d);
    for (u, &w) in controls.controls.iter().zip(weights.iter()) {
        if w > 0.0 {
            let diff = u - &policy.means;
            spread += diff.component_mul(&diff) * w;
        }
    }
    spread /= norm;
    if policy.mode == CovarianceMode::Isotropic {
        for r in 0..h {
            let m = spread.row(r).mean();
            spread.row_mut(r).fill(m);
        }
    }
    let variances = (&policy.variances * (1.0 - alpha_sigma) + spread * alpha_sigma)
        .map(|v| v.clamp(variance_min, variance_max));
    PolicyParams {
        variances,
        ..policy.clone()
    }
}

/// Full distribution update: weights, then mean, then covariance.
pub fn update_distribution(
    policy: &PolicyParams,
    controls: &ControlBatch,
    totals: &DVector<f64>,
    cfg: &UpdateConfig,
) -> Result<PolicyParams> {
    let w = particle_weights(totals, cfg.beta)?;
    let p = update_mean(policy, controls, &w, cfg.alpha_mu);
    Ok(update_covariance(&p, controls, &w, cfg.alpha_sigma, cfg.variance_min, cfg.variance_max))
}

/// Advances the policy one step, appending `default_tail` as the last mean and
/// `initial_variance` as its variance.
pub fn shift(policy: &PolicyParams, default_tail: &[f64], initial_variance: f64) -> PolicyParams {
    let (h, d) = policy.means.shape();
    let mut means = DMatrix::zeros(h, d);
    let mut variances = DMatrix::from_element(h, d, initial_variance);
    for r in 0..h - 1 {
        means.row_mut(r).copy_from(&policy.means.row(r + 1));
        variances.row_mut(r).copy_from(&policy.variances.row(r + 1));
    }
    for j in 0..d {
        means[(h - 1, j)] = default_tail.get(j).copied().unwrap_or(0.0);
    }
    PolicyParams {
        means,
        variances,
        mode: policy.mode,
    }
}

pub fn next_command<R: Rng + ?Sized>(policy: &PolicyParams, mode: CommandMode, rng: &mut R) -> Vec<f64> {
    let mean = policy.means.row(0);
    match mode {
        CommandMode::Mean => mean.iter().copied().collect(),
        CommandMode::Sample => mean
            .iter()
            .zip(policy.variances.row(0).iter())
            .map(|(m, v)| {
                let z: f64 = StandardNormal.sample(rng);
                m + v.sqrt() * z
            })
            .collect(),
    }
}

/// Policy section of an experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub beta: f64,
    pub alpha_mu: f64,
    pub alpha_sigma: f64,
    /// Initial standard deviation of every control dimension.
    pub sigma0: f64,
    /// Standard-deviation floor.
    pub sigma_min: f64,
    pub mode: CovarianceMode,
    pub command_mode: CommandMode,
    /// Optimization iterations per control step.
    pub iterations: usize,
    /// Turns off covariance adaptation (plain MPPI).
    pub adapt_covariance: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            beta: 0.5,
            alpha_mu: 0.9,
            alpha_sigma: 0.5,
            sigma0: 1.0,
            sigma_min: 0.01,
            mode: CovarianceMode::PerJointDiagonal,
            command_mode: CommandMode::Mean,
            iterations: 1,
            adapt_covariance: true,
        }
    }
}

impl PolicyConfig {
    pub fn update_config(&self, dof: usize) -> UpdateConfig {
        let v0 = self.sigma0 * self.sigma0;
        UpdateConfig {
            beta: self.beta,
            alpha_mu: self.alpha_mu,
            alpha_sigma: if self.adapt_covariance { self.alpha_sigma } else { 1.0 },
            variance_min: (self.sigma_min * self.sigma_min).min(v0),
            variance_max: v0,
            initial_variance: v0,
            default_tail: vec![0.0; dof],
        }
    }
}
