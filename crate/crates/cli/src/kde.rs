//! Gaussian kernel density baseline with Silverman's bandwidth.

use std::f64::consts::PI;

/// Kernel mass beyond this many bandwidths is dropped.
const CUTOFF: f64 = 8.0;

pub struct Kde {
    sorted: Vec<f64>,
    bandwidth: f64,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Kde {
    /// `None` for an empty sample or one with non-finite values.
    pub fn silverman(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() || samples.iter().any(|x| !x.is_finite()) {
            return None;
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let sd = (sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
        let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
        let bandwidth = if spread > 0.0 { 0.9 * spread * n.powf(-0.2) } else { 1.0 };
        Some(Self { sorted, bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn eval(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let lo = self.sorted.partition_point(|&v| v < x - CUTOFF * h);
        let hi = self.sorted.partition_point(|&v| v <= x + CUTOFF * h);
        let sum: f64 = self.sorted[lo..hi]
            .iter()
            .map(|&v| (-0.5 * ((x - v) / h).powi(2)).exp())
            .sum();
        sum / (self.sorted.len() as f64 * h * (2.0 * PI).sqrt())
    }
}
