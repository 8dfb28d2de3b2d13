//! EDM machinery: forward noising at a continuous noise scale, input/output
//! preconditioning, the loss weighting, the curriculum over the log-normal
//! sigma distribution, log-spaced sigma ladders, and the deterministic
//! first-order probability-flow sampler.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{PointCloud, Rng};

#[derive(Debug, Error, PartialEq)]
pub enum EdmError {
    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f64),
}

/// Noise-scale configuration. The curriculum interpolates the log-normal
/// parameters over the initial `curriculum_fraction` of training, then
/// holds them at the final values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EdmConfig {
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Estimated data standard deviation used by the preconditioner.
    pub sigma_data: f64,
    pub mu_init: f64,
    pub mu_final: f64,
    pub sigma_n_init: f64,
    pub sigma_n_final: f64,
    pub curriculum_fraction: f64,
    pub ladder_steps: usize,
}

impl Default for EdmConfig {
    fn default() -> Self {
        Self {
            sigma_min: 0.002,
            sigma_max: 80.0,
            sigma_data: 0.3,
            mu_init: -2.0,
            mu_final: -1.2,
            sigma_n_init: 0.6,
            sigma_n_final: 1.2,
            curriculum_fraction: 0.8,
            ladder_steps: 64,
        }
    }
}

impl EdmConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.sigma_min > 0.0 && self.sigma_min < self.sigma_max) {
            return Err(format!(
                "need 0 < sigma_min < sigma_max, got [{}, {}]",
                self.sigma_min, self.sigma_max
            ));
        }
        if self.sigma_data <= 0.0 {
            return Err("sigma_data must be positive".into());
        }
        if !(self.curriculum_fraction > 0.0 && self.curriculum_fraction <= 1.0) {
            return Err("curriculum_fraction must lie in (0, 1]".into());
        }
        if self.ladder_steps < 2 {
            return Err("ladder needs at least 2 steps".into());
        }
        Ok(())
    }
}

/// The four preconditioning coefficients at a noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreconditionCoeffs {
    pub c_in: f64,
    pub c_out: f64,
    pub c_skip: f64,
    pub c_noise: f64,
}

/// `c_in = 1/sqrt(sigma^2 + sigma_data^2)`, `c_out = sigma*sigma_data*c_in`,
/// `c_skip = sigma_data^2/(sigma^2 + sigma_data^2)`, `c_noise = ln(sigma)/4`.
pub fn precondition(sigma: f64, sigma_data: f64) -> Result<PreconditionCoeffs, EdmError> {
    if sigma <= 0.0 {
        return Err(EdmError::NonPositiveSigma(sigma));
    }
    assert!(sigma_data > 0.0);
    let denom_sq = sigma * sigma + sigma_data * sigma_data;
    let c_in = 1.0 / denom_sq.sqrt();
    Ok(PreconditionCoeffs {
        c_in,
        c_out: sigma * sigma_data * c_in,
        c_skip: sigma_data * sigma_data / denom_sq,
        c_noise: 0.25 * sigma.ln(),
    })
}

/// Per-sigma loss weight `w(sigma) = (sigma^2 + sigma_data^2)^-2`.
pub fn loss_weight(sigma: f64, sigma_data: f64) -> f64 {
    assert!(sigma >= 0.0 && sigma_data > 0.0);
    (sigma * sigma + sigma_data * sigma_data).powi(-2)
}

/// Adds isotropic Gaussian noise at scale `sigma`, returning the noisy
/// cloud together with the unit noise draw so losses can reuse it.
pub fn add_noise(clean: &PointCloud, sigma: f64, rng: &mut Rng) -> (PointCloud, Vec<[f64; 3]>) {
    assert!(sigma >= 0.0);
    let noise: Vec<[f64; 3]> = clean
        .points
        .iter()
        .map(|_| [rng.normal(), rng.normal(), rng.normal()])
        .collect();
    let points = clean
        .points
        .iter()
        .zip(&noise)
        .map(|(p, e)| [p[0] + sigma * e[0], p[1] + sigma * e[1], p[2] + sigma * e[2]])
        .collect();
    (PointCloud { points }, noise)
}

/// Curriculum interpolation of the log-normal parameters at epoch `e` of
/// `total`: progress `alpha = min(e / (fraction * total), 1)` blends the
/// init and final values linearly.
pub fn curriculum_params(epoch: usize, total_epochs: usize, cfg: &EdmConfig) -> (f64, f64) {
    assert!(total_epochs > 0);
    let ramp = cfg.curriculum_fraction * total_epochs as f64;
    let alpha = (epoch as f64 / ramp).min(1.0);
    let mu = (1.0 - alpha) * cfg.mu_init + alpha * cfg.mu_final;
    let sigma_n = (1.0 - alpha) * cfg.sigma_n_init + alpha * cfg.sigma_n_final;
    (mu, sigma_n)
}

/// Draws `sigma = exp(N(mu_n, sigma_n^2))` clamped to the configured range.
pub fn sample_sigma(rng: &mut Rng, mu_n: f64, sigma_n: f64, sigma_min: f64, sigma_max: f64) -> f64 {
    let ln_sigma = mu_n + sigma_n * rng.normal();
    ln_sigma.exp().clamp(sigma_min, sigma_max)
}

/// Strictly decreasing log-uniform ladder from `sigma_max` to `sigma_min`
/// with exact endpoints.
pub fn sigma_ladder(cfg: &EdmConfig) -> Vec<f64> {
    let steps = cfg.ladder_steps;
    assert!(steps >= 2, "ladder needs at least 2 steps");
    let ln_max = cfg.sigma_max.ln();
    let ln_min = cfg.sigma_min.ln();
    let mut ladder: Vec<f64> = (0..steps)
        .map(|i| {
            let t = i as f64 / (steps - 1) as f64;
            (ln_max + t * (ln_min - ln_max)).exp()
        })
        .collect();
    ladder[0] = cfg.sigma_max;
    ladder[steps - 1] = cfg.sigma_min;
    ladder
}

/// The denoiser contract used by the sampler: maps a noisy cloud at noise
/// level `sigma`, conditioned on a latent code, to a cleaned prediction.
pub trait Denoiser {
    fn denoise(&self, noisy: &PointCloud, sigma: f64, latent: &[f64]) -> PointCloud;
}

impl<F> Denoiser for F
where
    F: Fn(&PointCloud, f64, &[f64]) -> PointCloud,
{
    fn denoise(&self, noisy: &PointCloud, sigma: f64, latent: &[f64]) -> PointCloud {
        self(noisy, sigma, latent)
    }
}

/// Deterministic first-order probability-flow sampling: starts from
/// `N(0, sigma_max^2 I)` and walks the sigma ladder with Euler steps
/// `x += (sigma_next - sigma) * (x - D(x, sigma, z)) / sigma`.
pub fn sample_shape<D: Denoiser>(
    denoiser: &D,
    latent: &[f64],
    n_points: usize,
    cfg: &EdmConfig,
    rng: &mut Rng,
) -> PointCloud {
    assert!(n_points >= 1);
    let ladder = sigma_ladder(cfg);
    let mut x = PointCloud {
        points: (0..n_points)
            .map(|_| {
                [
                    cfg.sigma_max * rng.normal(),
                    cfg.sigma_max * rng.normal(),
                    cfg.sigma_max * rng.normal(),
                ]
            })
            .collect(),
    };
    for w in ladder.windows(2) {
        let (sigma, sigma_next) = (w[0], w[1]);
        let denoised = denoiser.denoise(&x, sigma, latent);
        for (p, d) in x.points.iter_mut().zip(&denoised.points) {
            for a in 0..3 {
                p[a] += (sigma_next - sigma) * (p[a] - d[a]) / sigma;
            }
        }
    }
    x
}
