//! Power-law fit `γ(k) ≈ α / k^β`.

use serde::{Deserialize, Serialize};

use crate::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub alpha: f64,
    pub beta: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
}

/// Least-squares fit of `ln γ = ln α − β ln k`.
pub fn fit_decay(points: &[(f64, f64)]) -> Result<DecayFit, ConfigError> {
    if points.len() < 3 {
        return Err(ConfigError(format!("need at least 3 points, got {}", points.len())));
    }
    if let Some((k, g)) = points.iter().find(|(k, g)| !(*k >= 1.0) || !(*g > 0.0)) {
        return Err(ConfigError(format!("need k >= 1 and gamma > 0, got k = {k}, gamma = {g}")));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|(k, _)| k.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, g)| g.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(ConfigError("all points share the same k".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(DecayFit {
        alpha: intercept.exp(),
        beta: -slope,
        residual: (sse / n).sqrt(),
    })
}
