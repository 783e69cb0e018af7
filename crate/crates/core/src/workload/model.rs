//! Burst-buffer request model: a three-parameter log-normal over per-node
//! requests (in kilobytes), its sampler, fitting and goodness of fit.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

const MAX_REJECTIONS: usize = 1_000_000;

/// Log-normal with shape `sigma`, location `location` and scale `scale`:
/// `X = location + scale * exp(sigma * Z)` with standard normal `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormal {
    pub sigma: f64,
    pub location: f64,
    pub scale: f64,
}

impl LogNormal {
    pub fn new(sigma: f64, location: f64, scale: f64) -> Result<Self> {
        if !(sigma > 0.0) || !(scale > 0.0) || !location.is_finite() {
            return Err(Error::Model(format!(
                "invalid log-normal parameters sigma={sigma} location={location} scale={scale}"
            )));
        }
        Ok(Self {
            sigma,
            location,
            scale,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.location + self.scale * (self.sigma * z).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.location {
            return 0.0;
        }
        let z = ((x - self.location) / self.scale).ln() / self.sigma;
        0.5 * erfc(-z / std::f64::consts::SQRT_2)
    }

    pub fn mean(&self) -> f64 {
        self.location + self.scale * (self.sigma * self.sigma / 2.0).exp()
    }

    pub fn median(&self) -> f64 {
        self.location + self.scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstBufferModel {
    pub sigma: f64,
    #[serde(rename = "location_kb")]
    pub location: f64,
    #[serde(rename = "scale_kb")]
    pub scale: f64,
    #[serde(rename = "min_request_bytes")]
    pub min_request: u64,
    #[serde(rename = "max_request_bytes")]
    pub max_request: u64,
    #[serde(rename = "short_job_cutoff_s")]
    pub short_job_cutoff: i64,
    #[serde(rename = "short_job_request_bytes")]
    pub short_job_request: u64,
}

impl Default for BurstBufferModel {
    /// Fit of per-processor memory requests of the METACENTRUM-2013-3 log.
    fn default() -> Self {
        Self {
            sigma: 1.09725,
            location: -150361.0,
            scale: 2714115.0,
            min_request: 1_000_000,
            max_request: 40_000_000_000,
            short_job_cutoff: 120,
            short_job_request: 100_000_000,
        }
    }
}

impl BurstBufferModel {
    pub fn distribution(&self) -> Result<LogNormal> {
        LogNormal::new(self.sigma, self.location, self.scale)
    }

    pub fn validate(&self) -> Result<()> {
        self.distribution()?;
        if self.min_request == 0 || self.min_request > self.max_request {
            return Err(Error::Model(format!(
                "need 0 < min_request ({}) <= max_request ({})",
                self.min_request, self.max_request
            )));
        }
        Ok(())
    }
}

/// Per-node burst-buffer request in bytes. Short jobs get the constant
/// minimal request; others draw from the log-normal truncated to
/// `[min_request, max_request]` by rejection.
pub fn sample_bb_request<R: Rng + ?Sized>(
    model: &BurstBufferModel,
    runtime_hint: i64,
    rng: &mut R,
) -> Result<u64> {
    model.validate()?;
    if runtime_hint <= model.short_job_cutoff {
        return Ok(model.short_job_request);
    }
    let dist = model.distribution()?;
    let (lo, hi) = (model.min_request as f64, model.max_request as f64);
    for _ in 0..MAX_REJECTIONS {
        let bytes = (dist.sample(rng) * 1000.0).round();
        if bytes >= lo && bytes <= hi {
            return Ok(bytes as u64);
        }
    }
    Err(Error::Model(format!(
        "no draw landed in [{lo}, {hi}] bytes after {MAX_REJECTIONS} attempts"
    )))
}

/// Kolmogorov-Smirnov D statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            let above = ((i + 1) as f64 / n - f).abs();
            let below = (i as f64 / n - f).abs();
            above.max(below)
        })
        .fold(0.0, f64::max)
}

/// Mean and (population) standard deviation of `ln(x - theta)`.
fn log_moments(samples: &[f64], theta: f64) -> (f64, f64, f64) {
    let n = samples.len() as f64;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &x in samples {
        let l = (x - theta).ln();
        sum += l;
        sum_sq += l * l;
    }
    let mu = sum / n;
    let var = (sum_sq / n - mu * mu).max(0.0);
    (mu, var.sqrt(), sum)
}

/// Profile log-likelihood in `theta`, constants dropped.
fn profile_loglik(samples: &[f64], theta: f64) -> f64 {
    let (_, sigma, sum_log) = log_moments(samples, theta);
    if sigma <= 0.0 {
        return f64::NEG_INFINITY;
    }
    -(samples.len() as f64) * sigma.ln() - sum_log
}

/// Three-parameter log-normal fit. The location is searched at or below
/// `min(samples) - 1` kB by maximising the profile likelihood, then shape
/// and scale are the closed-form MLE of `ln(x - location)`.
pub fn fit_lognormal(samples: &[f64]) -> Result<LogNormal> {
    if samples.len() < 100 {
        return Err(Error::Fit(format!("need at least 100 samples, got {}", samples.len())));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Fit("non-finite sample".into()));
    }
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Err(Error::Fit("all samples are equal".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let upper = min - 1.0;

    // Offsets below the upper bound, log-spaced over nine decades of sd.
    const GRID: usize = 400;
    let offset = |k: usize| -> f64 {
        if k == 0 {
            0.0
        } else {
            sd * 10f64.powf(-6.0 + 9.0 * (k - 1) as f64 / (GRID - 2) as f64)
        }
    };
    let mut best = (0, f64::NEG_INFINITY);
    for k in 0..GRID {
        let ll = profile_loglik(samples, upper - offset(k));
        if ll > best.1 {
            best = (k, ll);
        }
    }

    // Golden-section refinement between the neighbours of the grid optimum.
    let (mut a, mut b) = (
        offset(best.0.saturating_sub(1)),
        offset((best.0 + 1).min(GRID - 1)),
    );
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let f = |d: f64| profile_loglik(samples, upper - d);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let mut delta = (a + b) / 2.0;
    if f(delta) < best.1 {
        delta = offset(best.0);
    }
    let theta = upper - delta;
    let (mu, sigma, _) = log_moments(samples, theta);
    if !(sigma > 0.0) || !mu.is_finite() {
        return Err(Error::Fit("degenerate spread after location estimate".into()));
    }
    LogNormal::new(sigma, theta, mu.exp()).map_err(|e| Error::Fit(e.to_string()))
}
