//! Check that the log-odds of a two-class Gaussian model are linear in the strength gap.
//!
//! Class A draws `(a, b)` with `a − b = η ~ N(μ, σ²)`; class B is its mirror, so
//! `Δ(η) = ln f(η) − ln f(−η)` and the expected slope is `2μ/σ²`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum LinearityMode {
    ClosedForm,
    MonteCarlo { n_samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearityPoint {
    pub eta: f64,
    pub delta: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearityReport {
    pub mu: f64,
    pub sigma: f64,
    pub slope: f64,
    pub intercept: f64,
    pub expected_slope: f64,
    pub curve: Vec<LinearityPoint>,
}

const MIN_SAMPLES: usize = 10_000;

fn log_normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

pub fn verify_logit_linearity(
    mu: f64,
    sigma: f64,
    eta_grid: &[f64],
    mode: LinearityMode,
) -> Result<LinearityReport> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    if !mu.is_finite() {
        return Err(Error::Domain(format!("mu must be finite, got {mu}")));
    }
    if eta_grid.len() < 2 {
        return Err(Error::InvalidInput("eta grid needs at least two points".into()));
    }
    let deltas: Vec<f64> = match mode {
        LinearityMode::ClosedForm => eta_grid
            .iter()
            .map(|&eta| log_normal_pdf(eta, mu, sigma) - log_normal_pdf(-eta, mu, sigma))
            .collect(),
        LinearityMode::MonteCarlo { n_samples, seed } => {
            if n_samples < MIN_SAMPLES {
                return Err(Error::InvalidInput(format!(
                    "Monte-Carlo mode needs at least {MIN_SAMPLES} samples, got {n_samples}"
                )));
            }
            monte_carlo(mu, sigma, eta_grid, n_samples, seed)?
        }
    };
    let n = eta_grid.len() as f64;
    let mx = eta_grid.iter().sum::<f64>() / n;
    let my = deltas.iter().sum::<f64>() / n;
    let sxx: f64 = eta_grid.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("eta grid has no spread".into()));
    }
    let sxy: f64 = eta_grid
        .iter()
        .zip(&deltas)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let curve = eta_grid
        .iter()
        .zip(&deltas)
        .map(|(&eta, &delta)| LinearityPoint {
            eta,
            delta,
            residual: delta - (slope * eta + intercept),
        })
        .collect();
    Ok(LinearityReport {
        mu,
        sigma,
        slope,
        intercept,
        expected_slope: 2.0 * mu / (sigma * sigma),
        curve,
    })
}

/// Histogram estimate with bins of width `0.2σ` centred on `±η`.
fn monte_carlo(mu: f64, sigma: f64, eta_grid: &[f64], n: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half_var = (sigma * sigma / 2.0).sqrt();
    let a = Normal::new(mu / 2.0, half_var).map_err(|e| Error::Domain(e.to_string()))?;
    let b = Normal::new(-mu / 2.0, half_var).map_err(|e| Error::Domain(e.to_string()))?;
    let half_bin = 0.1 * sigma;
    let mut plus = vec![0u64; eta_grid.len()];
    let mut minus = vec![0u64; eta_grid.len()];
    for _ in 0..n {
        let eta = a.sample(&mut rng) - b.sample(&mut rng);
        for (i, &e) in eta_grid.iter().enumerate() {
            if (eta - e).abs() < half_bin {
                plus[i] += 1;
            }
            if (eta + e).abs() < half_bin {
                minus[i] += 1;
            }
        }
    }
    eta_grid
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            if plus[i] == 0 || minus[i] == 0 {
                return Err(Error::InvalidInput(format!(
                    "no samples near ±{e}; widen n_samples or narrow the grid"
                )));
            }
            Ok((plus[i] as f64).ln() - (minus[i] as f64).ln())
        })
        .collect()
}

/// Symmetric grid `[-σ, σ]` with `points` entries.
pub fn default_grid(sigma: f64, points: usize) -> Vec<f64> {
    let points = points.max(2);
    (0..points)
        .map(|i| -sigma + 2.0 * sigma * i as f64 / (points - 1) as f64)
        .collect()
}
