//! Numerical integration: globally adaptive Gauss–Kronrod (7/15) for
//! vector-valued integrands, and fixed Gauss–Legendre rules.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for the odd-indexed Kronrod nodes (XGK[1], XGK[3], XGK[5], XGK[7]).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances for [`integrate_vec`] and [`integrate`].
#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            max_intervals: 4000,
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod_segment<F>(f: &mut F, a: f64, b: f64, dim: usize, scratch: &mut [f64]) -> Segment
where
    F: FnMut(f64, &mut [f64]),
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kronrod = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];

    f(center, scratch);
    for d in 0..dim {
        kronrod[d] = WGK[7] * scratch[d];
        gauss[d] = WG[3] * scratch[d];
    }
    for j in 0..7 {
        let dx = half * XGK[j];
        for &x in &[center - dx, center + dx] {
            f(x, scratch);
            for d in 0..dim {
                kronrod[d] += WGK[j] * scratch[d];
                if j % 2 == 1 {
                    gauss[d] += WG[j / 2] * scratch[d];
                }
            }
        }
    }
    let mut error = 0.0f64;
    for d in 0..dim {
        kronrod[d] *= half;
        gauss[d] *= half;
        let e = (kronrod[d] - gauss[d]).abs();
        error = error.max(if e.is_nan() { f64::INFINITY } else { e });
    }
    Segment {
        a,
        b,
        value: kronrod,
        error,
    }
}

/// Integrates a vector-valued function over `[breaks[0], breaks[last]]`,
/// starting from the segments delimited by `breaks` (sorted ascending).
///
/// The error criterion is the largest component error summed over segments,
/// compared against `max(abs_tol, rel_tol * max_d |I_d|)`.
pub fn integrate_vec<F>(mut f: F, dim: usize, breaks: &[f64], opts: QuadOptions) -> Result<Vec<f64>>
where
    F: FnMut(f64, &mut [f64]),
{
    let mut scratch = vec![0.0; dim];
    let mut heap = BinaryHeap::new();
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            heap.push(kronrod_segment(&mut f, w[0], w[1], dim, &mut scratch));
        }
    }
    if heap.is_empty() {
        return Ok(vec![0.0; dim]);
    }

    loop {
        let mut total = vec![0.0; dim];
        let mut total_error = 0.0;
        for seg in heap.iter() {
            for d in 0..dim {
                total[d] += seg.value[d];
            }
            total_error += seg.error;
        }
        let scale = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tolerance = opts.abs_tol.max(opts.rel_tol * scale);
        if total_error <= tolerance {
            return Ok(total);
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::Quadrature {
                error: total_error,
                tolerance,
            });
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // Interval can no longer be split in floating point.
            return Err(Error::Quadrature {
                error: total_error,
                tolerance,
            });
        }
        heap.push(kronrod_segment(&mut f, worst.a, mid, dim, &mut scratch));
        heap.push(kronrod_segment(&mut f, mid, worst.b, dim, &mut scratch));
    }
}

/// Scalar convenience wrapper around [`integrate_vec`].
pub fn integrate<F>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let v = integrate_vec(|x, out| out[0] = f(x), 1, &[a, b], opts)?;
    Ok(v[0])
}

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes by Newton iteration on the Legendre recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (c + h * x, h * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        self.on_interval(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_polynomial_exact() {
        let v = integrate(|x| x.powi(6) - 2.0 * x, 0.0, 2.0, QuadOptions::default()).unwrap();
        assert!((v - (128.0 / 7.0 - 4.0)).abs() < 1e-12);
    }

    #[test]
    fn kronrod_gaussian_mass() {
        let f = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let v = integrate(f, -12.0, 12.0, QuadOptions::default()).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kronrod_endpoint_singularity() {
        // ∫₀¹ x^{-1/2} dx = 2
        let opts = QuadOptions {
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            max_intervals: 2000,
        };
        let v = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, opts).unwrap();
        assert!((v - 2.0).abs() < 1e-8);
    }

    #[test]
    fn vector_integrand_with_breaks() {
        let v = integrate_vec(
            |x, out| {
                out[0] = 1.0;
                out[1] = if x < 0.5 { 0.0 } else { 1.0 };
            },
            2,
            &[0.0, 0.5, 1.0],
            QuadOptions::default(),
        )
        .unwrap();
        assert!((v[0] - 1.0).abs() < 1e-14);
        assert!((v[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn legendre_rule_integrates_degree_2n_minus_1() {
        let rule = GaussLegendre::new(8);
        let v = rule.integrate(|x| x.powi(15) + x.powi(14), 0.0, 1.0);
        assert!((v - (1.0 / 16.0 + 1.0 / 15.0)).abs() < 1e-14);
        let w: f64 = rule.on_interval(-1.0, 1.0).map(|(_, w)| w).sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn large_legendre_rule_is_accurate() {
        let rule = GaussLegendre::new(1000);
        assert_eq!(rule.len(), 1000);
        let v = rule.integrate(|x| x.sin(), 0.0, std::f64::consts::PI);
        assert!((v - 2.0).abs() < 1e-13);
    }
}
