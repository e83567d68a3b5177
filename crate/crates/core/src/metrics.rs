//! Two-sample Kolmogorov–Smirnov distance, the log–log tail error A_CCDF,
//! and a histogram KL divergence for 2D samples.

use crate::distributions::{Density1D, PointCloud};
use crate::error::{Error, Result};

/// Smoothing mass added to every histogram cell.
pub const KL_EPS: f64 = 1e-6;
pub const KL_BINS: usize = 50;

/// Named metric value with provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub name: String,
    pub value: f64,
    pub sample_sizes: Vec<usize>,
    pub seed: u64,
}

fn sorted_copy(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidParameter("NaN in samples".into()));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `sup_x |F_a(x) − F_b(x)|` over the merged support.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    let a = sorted_copy(a)?;
    let b = sorted_copy(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(best)
}

/// One-sample distance `sup_x |F_n(x) − F(x)|` against an analytic cdf.
pub fn ks_against_cdf(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    let xs = sorted_copy(samples)?;
    let n = xs.len() as f64;
    let mut best = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        best = best.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    Ok(best)
}

/// Central mass covered by [`density_ks`].
pub const DENSITY_KS_MASS: f64 = 0.99;
/// Trapezoid intervals used by [`density_ks`].
pub const DENSITY_KS_INTERVALS: usize = 20_000;

/// KS distance between a density estimate and a target law.
///
/// The estimate is integrated with the trapezoid rule on an even grid over
/// the central 99% of the target, starting from the target cdf at the left
/// edge, and compared to the target cdf at every grid point. The estimate is
/// not renormalized.
pub fn density_ks(estimate: impl Fn(f64) -> f64, target: &Density1D) -> Result<f64> {
    let tail = 0.5 * (1.0 - DENSITY_KS_MASS);
    let lo = target.inverse_cdf(tail)?;
    let hi = target.inverse_cdf(1.0 - tail)?;
    let n = DENSITY_KS_INTERVALS;
    let h = (hi - lo) / n as f64;
    let mut cum = target.cdf(lo);
    let mut prev = estimate(lo);
    let mut best = 0.0f64;
    for i in 1..=n {
        let x = lo + h * i as f64;
        let cur = estimate(x);
        if !cur.is_finite() {
            return Err(Error::InvalidParameter(format!("density estimate is {cur} at {x}")));
        }
        cum += 0.5 * h * (prev + cur);
        prev = cur;
        best = best.max((cum - target.cdf(x)).abs());
    }
    Ok(best)
}

/// `Σᵢ |log r₍ᵢ₎ − log g₍ᵢ₎| · log((i+1)/i)` with both samples sorted in
/// decreasing order (`i = 1` is the largest value). If any value is
/// nonpositive both samples are shifted by `1 − min` first.
pub fn accdf_error(real: &[f64], generated: &[f64]) -> Result<f64> {
    if real.len() != generated.len() {
        return Err(Error::DimensionMismatch {
            expected: real.len(),
            got: generated.len(),
        });
    }
    let mut r = sorted_copy(real)?;
    let mut g = sorted_copy(generated)?;
    let min = r[0].min(g[0]);
    if min <= 0.0 {
        let shift = 1.0 - min;
        r.iter_mut().chain(g.iter_mut()).for_each(|v| *v += shift);
    }
    if r[0] <= 0.0 || g[0] <= 0.0 || !r[0].is_finite() || !g[0].is_finite() {
        return Err(Error::InvalidParameter("samples must be positive after shifting".into()));
    }
    let n = r.len();
    let mut total = 0.0;
    for i in 1..=n {
        let (rv, gv) = (r[n - i], g[n - i]);
        total += (rv.ln() - gv.ln()).abs() * ((i + 1) as f64 / i as f64).ln();
    }
    Ok(total)
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Axis-aligned evaluation box: 1st to 99th percentile of `real` per axis.
pub fn percentile_box(real: &PointCloud) -> Result<[(f64, f64); 2]> {
    if real.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: real.dim() });
    }
    let mut out = [(0.0, 0.0); 2];
    for (axis, slot) in out.iter_mut().enumerate() {
        let col = sorted_copy(&real.column(axis))?;
        let (lo, hi) = (percentile(&col, 0.01), percentile(&col, 0.99));
        if !(hi > lo) {
            return Err(Error::DegenerateBox(format!("axis {axis}: [{lo}, {hi}]")));
        }
        *slot = (lo, hi);
    }
    Ok(out)
}

fn histogram(points: &PointCloud, bbox: &[(f64, f64); 2], bins: usize) -> Vec<f64> {
    let mut counts = vec![0.0; bins * bins];
    let mut inside = 0.0;
    for r in points.rows() {
        let mut idx = [0usize; 2];
        let mut ok = true;
        for a in 0..2 {
            let (lo, hi) = bbox[a];
            let u = (r[a] - lo) / (hi - lo);
            if !(0.0..=1.0).contains(&u) {
                ok = false;
                break;
            }
            idx[a] = ((u * bins as f64) as usize).min(bins - 1);
        }
        if ok {
            counts[idx[0] * bins + idx[1]] += 1.0;
            inside += 1.0;
        }
    }
    let n = if inside > 0.0 { inside } else { 1.0 };
    let smoothed: Vec<f64> = counts.iter().map(|c| c / n + KL_EPS).collect();
    let total: f64 = smoothed.iter().sum();
    smoothed.into_iter().map(|v| v / total).collect()
}

/// `KL(hist_real ‖ hist_generated)` on a `bins × bins` grid over the real
/// samples' percentile box. Points outside the box are ignored.
pub fn grid_kl(real: &PointCloud, generated: &PointCloud, bins: usize) -> Result<f64> {
    if bins < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 bins, got {bins}")));
    }
    if generated.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: generated.dim() });
    }
    let bbox = percentile_box(real)?;
    grid_kl_in_box(real, generated, bins, &bbox)
}

pub fn grid_kl_in_box(real: &PointCloud, generated: &PointCloud, bins: usize, bbox: &[(f64, f64); 2]) -> Result<f64> {
    if real.is_empty() || generated.is_empty() {
        return Err(Error::EmptyInput);
    }
    for (axis, (lo, hi)) in bbox.iter().enumerate() {
        if !(hi > lo) {
            return Err(Error::DegenerateBox(format!("axis {axis}: [{lo}, {hi}]")));
        }
    }
    let p = histogram(real, bbox, bins);
    let q = histogram(generated, bbox, bins);
    Ok(p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum::<f64>().max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{Density1D, Density2D};
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    #[test]
    fn density_ks_of_exact_density_is_tiny() {
        let target = Density1D::cauchy(1.0, 2.0).unwrap();
        // Trapezoid error only: h ≈ 0.013 over the central 99%.
        assert!(density_ks(|x| target.pdf(x), &target).unwrap() < 1e-5);
        let shifted = Density1D::cauchy(2.0, 2.0).unwrap();
        let d = density_ks(|x| shifted.pdf(x), &target).unwrap();
        let lo = target.inverse_cdf(0.005).unwrap();
        let offset = shifted.cdf(lo) - target.cdf(lo);
        // The gap F_t − F_s peaks at x = 1.5 with value (2/π)·atan(1/4).
        let expected = (0.25f64).atan() * 2.0 / std::f64::consts::PI + offset;
        assert!((d - expected).abs() < 1e-3, "{d} vs {expected}");
    }

    #[test]
    fn ks_examples() {
        assert_eq!(ks_distance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!((ks_distance(&[1.0, 2.0, 3.0], &[1.5, 2.5, 3.5]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(ks_distance(&[1.0, 2.0], &[5.0, 6.0, 7.0]).unwrap(), 1.0);
        assert!(matches!(ks_distance(&[], &[1.0]), Err(Error::EmptyInput)));
    }

    #[test]
    fn ks_handles_ties() {
        assert_eq!(ks_distance(&[0.0, 0.0, 1.0], &[0.0, 1.0, 1.0]).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn ks_against_cdf_small_for_true_law() {
        let d = Density1D::normal(0.0, 1.0).unwrap();
        let xs = d.sample(20_000, &mut SeededRng::new(1, 0));
        // 1.63/√n is the 1% critical value.
        assert!(ks_against_cdf(&xs, |x| d.cdf(x)).unwrap() < 1.63 / (20_000f64).sqrt());
    }

    #[test]
    fn accdf_examples() {
        let real: Vec<f64> = (1..=50).map(|i| i as f64).collect();
        assert_eq!(accdf_error(&real, &real).unwrap(), 0.0);
        let doubled: Vec<f64> = real.iter().map(|v| 2.0 * v).collect();
        let expected = 2f64.ln() * 51f64.ln();
        assert!((accdf_error(&real, &doubled).unwrap() - expected).abs() < 1e-12);
        let mut rng = SeededRng::new(2, 0);
        let light = Density1D::normal(0.0, 1.0).unwrap().sample(1000, &mut rng);
        let heavy = Density1D::cauchy(0.0, 1.0).unwrap().sample(1000, &mut rng);
        assert!(accdf_error(&light, &heavy).unwrap() > 0.0);
        assert!(accdf_error(&light, &heavy[..10]).is_err());
    }

    #[test]
    fn grid_kl_examples() {
        let mut rng = SeededRng::new(3, 0);
        let a = Density2D::dual_moon().sample(5000, &mut rng);
        assert!(grid_kl(&a, &a, KL_BINS).unwrap() <= 1e-9);
        // Real mass spread evenly over a 10×10 grid, generated mass in one corner cell.
        let spread: Vec<f64> = (0..10_000).flat_map(|i| [(i % 100) as f64 / 99.0, (i / 100) as f64 / 99.0]).collect();
        let real = PointCloud::new(2, spread).unwrap();
        let corner = PointCloud::new(2, [0.5, 0.5].repeat(500)).unwrap();
        let kl = grid_kl(&real, &corner, 10).unwrap();
        assert!(kl > 0.5 * (1.0 / KL_EPS).ln(), "{kl}");
        let flat = PointCloud::new(2, vec![1.0; 20]).unwrap();
        assert!(matches!(grid_kl(&flat, &flat, 10), Err(Error::DegenerateBox(_))));
        assert!(grid_kl(&a, &a, 1).is_err());
    }

    #[test]
    fn metric_report_fields() {
        let r = MetricReport { name: "ks".into(), value: 0.1, sample_sizes: vec![10, 10], seed: 4 };
        assert!(r.value.is_finite() && r.value >= 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn ks_symmetric_and_bounded(a in prop::collection::vec(-10.0f64..10.0, 1..40), b in prop::collection::vec(-10.0f64..10.0, 1..40)) {
            let ab = ks_distance(&a, &b).unwrap();
            prop_assert_eq!(ab, ks_distance(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn grid_kl_nonnegative(seed in 0u64..500) {
            let mut rng = SeededRng::new(seed, 0);
            let a = Density2D::dual_moon().sample(300, &mut rng);
            let b = Density2D::two_rings(1.0, 2.0).unwrap().sample(300, &mut rng);
            prop_assert!(grid_kl(&a, &b, 10).unwrap() >= 0.0);
            prop_assert_eq!(grid_kl(&a, &a, 10).unwrap(), 0.0);
        }
    }
}
