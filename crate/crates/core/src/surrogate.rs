//! Differentiable relaxation of the rank histogram: logistic soft indicator,
//! Gaussian soft one-hot, and the ℓ¹ loss against the uniform pmf.
//!
//! In the dual orientation a generated point `ỹ` is the probe and the soft
//! count `Σ σ((yᵢ − ỹ)/T)` measures how many of `K` real points lie above
//! it. The classical orientation swaps roles: a real probe against `K`
//! generated points.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

/// Kernel parameters. The sigmoid temperature is relative: the effective
/// temperature is `sigmoid_temperature × robust_scale(reals)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurrogateConfig {
    pub sigmoid_temperature: f64,
    pub onehot_bandwidth: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            sigmoid_temperature: 0.1,
            onehot_bandwidth: 0.5,
        }
    }
}

impl SurrogateConfig {
    pub fn new(sigmoid_temperature: f64, onehot_bandwidth: f64) -> Result<Self> {
        let cfg = Self {
            sigmoid_temperature,
            onehot_bandwidth,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigmoid_temperature > 0.0 && self.onehot_bandwidth > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "temperature {} and bandwidth {} must both be > 0",
                self.sigmoid_temperature, self.onehot_bandwidth
            )));
        }
        Ok(())
    }

    /// Absolute temperature for a batch of reference values.
    pub fn temperature_for(&self, reals: &[f64]) -> f64 {
        self.sigmoid_temperature * robust_scale(reals)
    }
}

/// `min(sample std, IQR/1.349)`, falling back to 1 for degenerate input.
/// The IQR branch keeps heavy-tailed batches from inflating the scale.
pub fn robust_scale(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 1.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    };
    let iqr = (q(0.75) - q(0.25)) / 1.349;
    let s = if iqr > 0.0 { std.min(iqr) } else { std };
    if s.is_finite() && s > 0.0 {
        s
    } else {
        1.0
    }
}

use crate::autodiff::tape_sigmoid as sigmoid;

/// `σ((b − a)/T)`.
pub fn soft_indicator(tape: &mut Tape, a: Var, b: Var, temperature: f64) -> Var {
    let d = tape.sub(b, a);
    let scaled = tape.mul_const(d, 1.0 / temperature);
    tape.sigmoid(scaled)
}

/// Value and derivative in `ỹ` of `Σ σ((yᵢ − ỹ)/T)`.
pub fn soft_count_value(ytilde: f64, reals: &[f64], temperature: f64) -> (f64, f64) {
    let mut value = 0.0;
    let mut deriv = 0.0;
    for &y in reals {
        let s = sigmoid((y - ytilde) / temperature);
        value += s;
        deriv -= s * (1.0 - s) / temperature;
    }
    (value, deriv)
}

/// Soft count of reals above `ytilde`, as a single fused node.
pub fn soft_count(tape: &mut Tape, ytilde: Var, reals: &[f64], temperature: f64) -> Var {
    let (v, d) = soft_count_value(tape.value(ytilde), reals, temperature);
    tape.custom(v, &[(ytilde, d)])
}

/// Soft count of generated points at or below the real probe `y`:
/// `Σ σ((y − ỹᵢ)/T)`.
pub fn soft_count_classical(tape: &mut Tape, y: f64, generated: &[Var], temperature: f64) -> Var {
    let mut value = 0.0;
    let mut parents = Vec::with_capacity(generated.len());
    for &g in generated {
        let s = sigmoid((y - tape.value(g)) / temperature);
        value += s;
        parents.push((g, -s * (1.0 - s) / temperature));
    }
    tape.custom(value, &parents)
}

/// Normalized Gaussian weights over bins `0..=K` and their derivatives in `a`.
pub fn soft_one_hot_values(a: f64, k: usize, bandwidth: f64, values: &mut [f64], derivs: &mut [f64]) {
    let inv_h2 = 1.0 / (bandwidth * bandwidth);
    let mut max_log = f64::NEG_INFINITY;
    for n in 0..=k {
        let z = a - n as f64;
        values[n] = -0.5 * z * z * inv_h2;
        max_log = max_log.max(values[n]);
    }
    let mut total = 0.0;
    for v in values.iter_mut().take(k + 1) {
        *v = (*v - max_log).exp();
        total += *v;
    }
    let mut mean_slope = 0.0;
    for n in 0..=k {
        values[n] /= total;
        derivs[n] = -(a - n as f64) * inv_h2;
        mean_slope += values[n] * derivs[n];
    }
    for n in 0..=k {
        derivs[n] = values[n] * (derivs[n] - mean_slope);
    }
}

/// Entry `n ∝ exp(−(a−n)²/(2h²))`, normalized over `0..=K`.
pub fn soft_one_hot(tape: &mut Tape, a: Var, k: usize, bandwidth: f64) -> Vec<Var> {
    let mut values = vec![0.0; k + 1];
    let mut derivs = vec![0.0; k + 1];
    soft_one_hot_values(tape.value(a), k, bandwidth, &mut values, &mut derivs);
    (0..=k).map(|n| tape.custom(values[n], &[(a, derivs[n])])).collect()
}

/// How the reals of a minibatch are split into `K`-subsets for each probe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SubsetPlan {
    /// Consecutive chunks of the slice as given.
    Contiguous,
    /// One random partition reused by every probe.
    SharedShuffle,
    /// A fresh random partition per probe.
    #[default]
    PerProbeShuffle,
}

/// Soft histogram and its Jacobian with respect to each probe, in the dual
/// orientation. `partitions[i]` holds the reals (grouped in consecutive
/// `K`-chunks) seen by probe `i`.
struct DualHistogram {
    hist: Vec<f64>,
    // jac[i * (K+1) + n] = ∂hist[n]/∂probe_i
    jac: Vec<f64>,
}

fn dual_histogram(probes: &[f64], partitions: &[&[f64]], k: usize, temperature: f64, bandwidth: f64) -> DualHistogram {
    let bins = k + 1;
    let subsets = partitions[0].len() / k;
    let norm = 1.0 / (probes.len() * subsets) as f64;
    let mut hist = vec![0.0; bins];
    let mut jac = vec![0.0; probes.len() * bins];
    let mut values = vec![0.0; bins];
    let mut derivs = vec![0.0; bins];
    for (i, &yt) in probes.iter().enumerate() {
        let part = partitions[i.min(partitions.len() - 1)];
        for chunk in part.chunks_exact(k) {
            let (a, da) = soft_count_value(yt, chunk, temperature);
            soft_one_hot_values(a, k, bandwidth, &mut values, &mut derivs);
            for n in 0..bins {
                hist[n] += values[n] * norm;
                jac[i * bins + n] += derivs[n] * da * norm;
            }
        }
    }
    DualHistogram { hist, jac }
}

fn l1_loss_node(tape: &mut Tape, probes: &[Var], h: &DualHistogram) -> Var {
    let bins = h.hist.len();
    let u = 1.0 / bins as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; probes.len()];
    for n in 0..bins {
        let diff = h.hist[n] - u;
        value += diff.abs();
        let sign = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
        for (i, g) in grad.iter_mut().enumerate() {
            *g += sign * h.jac[i * bins + n];
        }
    }
    tape.custom_iter(value, probes.iter().copied().zip(grad))
}

fn check_sizes(reals: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParameter("rank order k must be positive".into()));
    }
    if reals < k {
        return Err(Error::InsufficientSamples { needed: k, got: reals });
    }
    Ok(())
}

/// Soft histogram values for fixed probes and explicit partitions (no tape).
pub fn soft_histogram(probes: &[f64], partitions: &[&[f64]], k: usize, temperature: f64, bandwidth: f64) -> Result<Vec<f64>> {
    if probes.is_empty() || partitions.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_sizes(partitions[0].len(), k)?;
    Ok(dual_histogram(probes, partitions, k, temperature, bandwidth).hist)
}

/// `‖hist − 𝟙/(K+1)‖₁` with the reals split into consecutive `K`-chunks.
pub fn surrogate_loss(tape: &mut Tape, generated: &[Var], reals: &[f64], k: usize, cfg: &SurrogateConfig) -> Result<Var> {
    check_sizes(reals.len(), k)?;
    cfg.validate()?;
    if generated.is_empty() {
        return Err(Error::EmptyInput);
    }
    let usable = &reals[..(reals.len() / k) * k];
    let temperature = cfg.temperature_for(reals);
    let probes = tape.values(generated);
    let h = dual_histogram(&probes, &[usable], k, temperature, cfg.onehot_bandwidth);
    Ok(l1_loss_node(tape, generated, &h))
}

/// [`surrogate_loss`] with the subset assignment chosen by `plan`.
pub fn surrogate_loss_with_plan<R: Rng + ?Sized>(
    tape: &mut Tape,
    generated: &[Var],
    reals: &[f64],
    k: usize,
    cfg: &SurrogateConfig,
    plan: SubsetPlan,
    rng: &mut R,
) -> Result<Var> {
    match plan {
        SubsetPlan::Contiguous => surrogate_loss(tape, generated, reals, k, cfg),
        SubsetPlan::SharedShuffle => {
            let mut shuffled = reals.to_vec();
            shuffled.shuffle(rng);
            surrogate_loss(tape, generated, &shuffled, k, cfg)
        }
        SubsetPlan::PerProbeShuffle => {
            check_sizes(reals.len(), k)?;
            cfg.validate()?;
            if generated.is_empty() {
                return Err(Error::EmptyInput);
            }
            let temperature = cfg.temperature_for(reals);
            let usable = (reals.len() / k) * k;
            let parts: Vec<Vec<f64>> = generated
                .iter()
                .map(|_| {
                    let mut p = reals.to_vec();
                    p.shuffle(rng);
                    p.truncate(usable);
                    p
                })
                .collect();
            let refs: Vec<&[f64]> = parts.iter().map(Vec::as_slice).collect();
            let probes = tape.values(generated);
            let h = dual_histogram(&probes, &refs, k, temperature, cfg.onehot_bandwidth);
            Ok(l1_loss_node(tape, generated, &h))
        }
    }
}

/// Classical orientation: every real point is ranked against its own row of
/// `K` generated points (`generated.len() == reals.len() · K`).
pub fn classical_surrogate_loss(tape: &mut Tape, reals: &[f64], generated: &[Var], k: usize, cfg: &SurrogateConfig) -> Result<Var> {
    cfg.validate()?;
    if reals.is_empty() {
        return Err(Error::EmptyInput);
    }
    if generated.len() != reals.len() * k {
        return Err(Error::DimensionMismatch {
            expected: reals.len() * k,
            got: generated.len(),
        });
    }
    let temperature = cfg.temperature_for(reals);
    let bins = k + 1;
    let norm = 1.0 / reals.len() as f64;
    let mut hist = vec![0.0; bins];
    // Per generated point, ∂hist[n]/∂ỹ.
    let mut jac = vec![0.0; generated.len() * bins];
    let mut values = vec![0.0; bins];
    let mut derivs = vec![0.0; bins];
    for (r, &y) in reals.iter().enumerate() {
        let row = &generated[r * k..(r + 1) * k];
        let mut a = 0.0;
        let mut slopes = Vec::with_capacity(k);
        for &g in row {
            let s = sigmoid((y - tape.value(g)) / temperature);
            a += s;
            slopes.push(-s * (1.0 - s) / temperature);
        }
        soft_one_hot_values(a, k, cfg.onehot_bandwidth, &mut values, &mut derivs);
        for n in 0..bins {
            hist[n] += values[n] * norm;
            for (j, sl) in slopes.iter().enumerate() {
                jac[(r * k + j) * bins + n] += derivs[n] * sl * norm;
            }
        }
    }
    Ok(l1_loss_node(tape, generated, &DualHistogram { hist, jac }))
}
