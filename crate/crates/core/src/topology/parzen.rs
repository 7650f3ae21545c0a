//! Adaptive Parzen-window smoothing of transition histograms.
//!
//! Each ordered camera pair gets its own Gaussian bandwidth, chosen from the
//! number of positive pairs observed for it: sparse pairs are smoothed with a
//! wide kernel so single outliers do not become sharp peaks, while
//! well-populated pairs keep a narrow kernel and retain their timing detail.
//! Bandwidths are in bin units and never drop below one bin.

use serde::{Deserialize, Serialize};

use super::histogram::TransitionHistogram;
use crate::data::CameraId;
use crate::error::{Error, Result};

/// Kernel support is cut off beyond this many standard deviations.
pub const KERNEL_TRUNCATION_SIGMAS: f64 = 6.0;

/// Smoothed, normalized transition-time distribution for one ordered pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionPdf {
    pub from: CameraId,
    pub to: CameraId,
    pub density: Vec<f64>,
    pub sigma: f64,
    pub n_pairs: u64,
}

impl TransitionPdf {
    /// Density at bin `tau`; zero outside the histogram range.
    pub fn value_at(&self, tau: i64) -> f64 {
        if tau < 0 {
            return 0.0;
        }
        self.density.get(tau as usize).copied().unwrap_or(0.0)
    }

    /// False when no positive pair was observed for this camera pair.
    pub fn is_connected(&self) -> bool {
        self.n_pairs > 0
    }
}

/// Bandwidth `max(alpha * exp(-n_pairs / beta), 1)`.
pub fn adaptive_sigma(n_pairs: u64, alpha: f64, beta: f64) -> Result<f64> {
    if !(alpha >= 1.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("alpha must be >= 1, got {alpha}")));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Config(format!("beta must be > 0, got {beta}")));
    }
    Ok((alpha * (-(n_pairs as f64) / beta).exp()).max(1.0))
}

/// Gaussian kernel with standard deviation `sigma`.
pub fn gaussian_kernel(x: f64, sigma: f64) -> f64 {
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
    norm * (-(x * x) / (2.0 * sigma * sigma)).exp()
}

/// Convolves `counts` with a truncated Gaussian of width `sigma` (bin units)
/// and normalizes the result to sum to one. All-zero input yields all-zero
/// output.
pub fn parzen_smooth(counts: &[f64], sigma: f64) -> Vec<f64> {
    let n = counts.len();
    let mut density = vec![0.0; n];
    let reach = (KERNEL_TRUNCATION_SIGMAS * sigma).floor() as usize;
    let kernel: Vec<f64> = (0..=reach).map(|d| gaussian_kernel(d as f64, sigma)).collect();
    for (l, &count) in counts.iter().enumerate() {
        if count == 0.0 {
            continue;
        }
        let lo = l.saturating_sub(reach);
        let hi = (l + reach).min(n.saturating_sub(1));
        for (tau, slot) in density.iter_mut().enumerate().take(hi + 1).skip(lo) {
            *slot += count * kernel[l.abs_diff(tau)];
        }
    }
    let z: f64 = density.iter().sum();
    if z > 0.0 {
        density.iter_mut().for_each(|v| *v /= z);
    }
    density
}

/// Smooths a histogram with its count-adaptive bandwidth.
pub fn estimate_transition_pdf(hist: &TransitionHistogram, alpha: f64, beta: f64) -> Result<TransitionPdf> {
    let n_pairs = hist.n_pairs();
    let sigma = adaptive_sigma(n_pairs, alpha, beta)?;
    let counts: Vec<f64> = hist.bins.iter().map(|&c| c as f64).collect();
    Ok(TransitionPdf {
        from: hist.from,
        to: hist.to,
        density: parzen_smooth(&counts, sigma),
        sigma,
        n_pairs,
    })
}
