//! Two-component univariate Gaussian mixture fitted by EM.
//!
//! Components are labelled after fitting: the higher-mean component is the
//! "confident" one, the lower-mean component the "unconfident" one.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MixtureError {
    #[error("need at least {required} samples to fit, got {got}")]
    InsufficientData { required: usize, got: usize },
    #[error("all {0} samples are identical; a two-component fit is undefined")]
    Degenerate(usize),
    #[error("sample {index} is not finite ({value})")]
    NonFiniteSample { index: usize, value: f64 },
    #[error("invalid mixture parameters: {0}")]
    InvalidParams(String),
    #[error("invalid EM configuration: {0}")]
    InvalidConfig(String),
}

/// Fitted mixture, already labelled so that `mean_u <= mean_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub weight_c: f64,
    pub weight_u: f64,
    pub mean_c: f64,
    pub mean_u: f64,
    pub var_c: f64,
    pub var_u: f64,
}

impl MixtureParams {
    pub fn validate(&self) -> Result<(), MixtureError> {
        let fields = [self.weight_c, self.weight_u, self.mean_c, self.mean_u, self.var_c, self.var_u];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(MixtureError::InvalidParams("non-finite field".into()));
        }
        if self.weight_c < 0.0 || self.weight_u < 0.0 {
            return Err(MixtureError::InvalidParams("negative weight".into()));
        }
        if (self.weight_c + self.weight_u - 1.0).abs() > 1e-9 {
            return Err(MixtureError::InvalidParams(format!(
                "weights sum to {}",
                self.weight_c + self.weight_u
            )));
        }
        if self.var_c <= 0.0 || self.var_u <= 0.0 {
            return Err(MixtureError::InvalidParams("non-positive variance".into()));
        }
        Ok(())
    }

    /// Swaps components if needed so the confident one has the higher mean.
    fn labelled(self) -> Self {
        if self.mean_u <= self.mean_c {
            self
        } else {
            MixtureParams {
                weight_c: self.weight_u,
                weight_u: self.weight_c,
                mean_c: self.mean_u,
                mean_u: self.mean_c,
                var_c: self.var_u,
                var_u: self.var_c,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmConfig {
    pub max_iterations: usize,
    pub loglik_tolerance: f64,
    pub variance_floor: f64,
    pub min_samples: usize,
    /// Recorded with every fit. Initialization is deterministic, so the seed
    /// does not change results.
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            loglik_tolerance: 1e-6,
            variance_floor: 1e-8,
            min_samples: 4,
            seed: 0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<(), MixtureError> {
        if self.max_iterations == 0 {
            return Err(MixtureError::InvalidConfig("max_iterations must be positive".into()));
        }
        if !(self.loglik_tolerance > 0.0) {
            return Err(MixtureError::InvalidConfig("loglik_tolerance must be positive".into()));
        }
        if !(self.variance_floor > 0.0) {
            return Err(MixtureError::InvalidConfig("variance_floor must be positive".into()));
        }
        if self.min_samples == 0 {
            return Err(MixtureError::InvalidConfig("min_samples must be positive".into()));
        }
        Ok(())
    }
}

/// Separation below which the bimodal assumption is considered broken.
pub const WEAK_MEAN_GAP: f64 = 1e-6;
pub const WEAK_MIN_WEIGHT: f64 = 1e-3;

/// Result of an EM run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureFit {
    pub params: MixtureParams,
    /// Set when the components collapsed onto each other or one weight
    /// vanished, so the posterior carries no routing signal.
    pub weak_separation: bool,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood at the initial parameters followed by one entry per
    /// EM iteration.
    pub log_likelihood_trace: Vec<f64>,
}

impl MixtureFit {
    pub fn log_likelihood(&self) -> f64 {
        *self.log_likelihood_trace.last().expect("trace holds the initial value")
    }
}

fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * PI * var).ln() + d * d / var)
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Log joint densities `(ln w_c N_c(x), ln w_u N_u(x))`.
fn ln_joint(x: f64, p: &MixtureParams) -> (f64, f64) {
    (
        p.weight_c.ln() + ln_normal(x, p.mean_c, p.var_c),
        p.weight_u.ln() + ln_normal(x, p.mean_u, p.var_u),
    )
}

/// Sum over samples of the log mixture density.
pub fn log_likelihood(samples: &[f64], params: &MixtureParams) -> Result<f64, MixtureError> {
    params.validate()?;
    Ok(samples
        .iter()
        .map(|&x| {
            let (c, u) = ln_joint(x, params);
            log_sum_exp(c, u)
        })
        .sum())
}

/// Probability that `phi` was drawn from the confident component.
pub fn posterior_confident(phi: f64, params: &MixtureParams) -> Result<f64, MixtureError> {
    params.validate()?;
    let (c, u) = ln_joint(phi, params);
    let posterior = if c == f64::NEG_INFINITY && u == f64::NEG_INFINITY {
        // Both weights zero cannot pass validation; this is the
        // phi-at-infinity case.
        0.5
    } else {
        // 1 / (1 + exp(u - c)); exp overflow yields 0 as required.
        1.0 / (1.0 + (u - c).exp())
    };
    Ok(posterior.clamp(0.0, 1.0))
}

/// Linear-interpolation quantile of an already sorted slice.
fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn initial_params(samples: &[f64]) -> MixtureParams {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    MixtureParams {
        weight_c: 0.5,
        weight_u: 0.5,
        mean_c: sorted_quantile(&sorted, 0.75),
        mean_u: sorted_quantile(&sorted, 0.25),
        var_c: var,
        var_u: var,
    }
}

fn check_samples(samples: &[f64], config: &EmConfig) -> Result<(), MixtureError> {
    config.validate()?;
    if samples.len() < config.min_samples.max(2) {
        return Err(MixtureError::InsufficientData {
            required: config.min_samples.max(2),
            got: samples.len(),
        });
    }
    if let Some((index, &value)) = samples.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(MixtureError::NonFiniteSample { index, value });
    }
    let first = samples[0];
    if samples.iter().all(|&x| x == first) {
        return Err(MixtureError::Degenerate(samples.len()));
    }
    Ok(())
}

/// Fits the mixture from the default (quartile) initialization.
pub fn fit_em(samples: &[f64], config: &EmConfig) -> Result<MixtureFit, MixtureError> {
    fit_em_from(samples, config, None)
}

/// Fits the mixture, optionally warm-starting from earlier parameters.
pub fn fit_em_from(
    samples: &[f64],
    config: &EmConfig,
    warm_start: Option<&MixtureParams>,
) -> Result<MixtureFit, MixtureError> {
    check_samples(samples, config)?;
    let mut params = match warm_start {
        Some(p) => {
            p.validate()?;
            MixtureParams {
                var_c: p.var_c.max(config.variance_floor),
                var_u: p.var_u.max(config.variance_floor),
                ..*p
            }
        }
        None => initial_params(samples),
    };

    let n = samples.len() as f64;
    let mut resp = vec![0.0; samples.len()];
    let mut trace = Vec::with_capacity(config.max_iterations + 1);
    let mut current = e_step(samples, &params, &mut resp);
    trace.push(current);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;

        // M-step from the responsibilities of the current parameters.
        let r_c: f64 = resp.iter().sum();
        let r_u = n - r_c;
        if r_c <= 0.0 || r_u <= 0.0 {
            // One component owns nothing; further iterations cannot move it.
            converged = true;
            break;
        }
        let mean_c = samples.iter().zip(&resp).map(|(x, r)| r * x).sum::<f64>() / r_c;
        let mean_u = samples.iter().zip(&resp).map(|(x, r)| (1.0 - r) * x).sum::<f64>() / r_u;
        let var_c = samples
            .iter()
            .zip(&resp)
            .map(|(x, r)| r * (x - mean_c).powi(2))
            .sum::<f64>()
            / r_c;
        let var_u = samples
            .iter()
            .zip(&resp)
            .map(|(x, r)| (1.0 - r) * (x - mean_u).powi(2))
            .sum::<f64>()
            / r_u;
        let weight_c = r_c / n;
        let previous = params;
        params = MixtureParams {
            weight_c,
            weight_u: 1.0 - weight_c,
            mean_c,
            mean_u,
            var_c: var_c.max(config.variance_floor),
            var_u: var_u.max(config.variance_floor),
        };

        let next = e_step(samples, &params, &mut resp);
        if next < current {
            // An exact EM step cannot lose likelihood, so this is rounding
            // at the fixed point. Keep the better parameters.
            params = previous;
            converged = true;
            break;
        }
        trace.push(next);
        let gain = next - current;
        current = next;
        if gain < config.loglik_tolerance {
            converged = true;
            break;
        }
    }

    let params = params.labelled();
    let weak_separation = (params.mean_c - params.mean_u).abs() < WEAK_MEAN_GAP
        || params.weight_c < WEAK_MIN_WEIGHT
        || params.weight_u < WEAK_MIN_WEIGHT;

    Ok(MixtureFit {
        params,
        weak_separation,
        iterations,
        converged,
        log_likelihood_trace: trace,
    })
}

/// Fills `resp` with the (pre-labelling) first-component responsibilities
/// and returns the log-likelihood.
fn e_step(samples: &[f64], params: &MixtureParams, resp: &mut [f64]) -> f64 {
    let mut ll = 0.0;
    for (r, &x) in resp.iter_mut().zip(samples) {
        let (c, u) = ln_joint(x, params);
        let total = log_sum_exp(c, u);
        ll += total;
        *r = (c - total).exp();
    }
    ll
}
