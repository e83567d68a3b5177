//! The rank statistic `A_K`, its pmf `Q_K` (empirical and by quadrature) and
//! the discrepancy `d_K`.

use rand::seq::index;
use rand::Rng;

use crate::bernstein::BernsteinBasis;
use crate::distributions::Density1D;
use crate::error::{Error, Result};
use crate::quadrature::{integrate_vec, QuadOptions};

/// Probability vector over ranks `0..=K`.
#[derive(Clone, Debug, PartialEq)]
pub struct RankPmf {
    probs: Vec<f64>,
}

impl RankPmf {
    /// Entries must be nonnegative (up to -1e-12 of rounding noise, which is
    /// clamped) and sum to one within 1e-9.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < -1e-12) {
            return Err(Error::InvalidParameter(format!("pmf entry {bad} is negative")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("pmf sums to {total}")));
        }
        Ok(Self {
            probs: probs.into_iter().map(|p| p.max(0.0)).collect(),
        })
    }

    /// Normalizes nonnegative counts or weights.
    pub fn from_counts(counts: &[f64]) -> Result<Self> {
        let total: f64 = counts.iter().sum();
        if !(total > 0.0) {
            return Err(Error::EmptyInput);
        }
        Self::new(counts.iter().map(|c| c / total).collect())
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            probs: vec![1.0 / (k + 1) as f64; k + 1],
        }
    }

    pub fn k(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Plain ℓ¹ distance to the uniform pmf, without any prefactor.
    pub fn l1_to_uniform(&self) -> f64 {
        let u = 1.0 / self.probs.len() as f64;
        self.probs.iter().map(|p| (p - u).abs()).sum()
    }

    /// `d_K = (1/(K+1)) Σ_n |Q_K(n) − 1/(K+1)|`.
    pub fn discrepancy(&self) -> f64 {
        self.l1_to_uniform() / self.probs.len() as f64
    }

    pub fn max_deviation(&self) -> f64 {
        let u = 1.0 / self.probs.len() as f64;
        self.probs.iter().fold(0.0, |m, p| m.max((p - u).abs()))
    }

    /// Pointwise convex combination `λ·self + (1−λ)·other`.
    pub fn mix(&self, lambda: f64, other: &RankPmf) -> Result<Self> {
        if self.probs.len() != other.probs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.probs.len(),
                got: other.probs.len(),
            });
        }
        Self::new(
            self.probs
                .iter()
                .zip(&other.probs)
                .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
                .collect(),
        )
    }
}

/// Free-function form of [`RankPmf::discrepancy`].
pub fn discrepancy(pmf: &RankPmf) -> f64 {
    pmf.discrepancy()
}

/// Number of entries of `fictitious` that are `≤ y`.
pub fn rank_statistic(y: f64, fictitious: &[f64]) -> usize {
    fictitious.iter().filter(|&&v| v <= y).count()
}

/// Histogram of `rank_statistic(y, subset)` where every `y` in `real_side`
/// is paired with a fresh size-`k` subset of `other_side`, drawn without
/// replacement.
pub fn empirical_pmf<R: Rng + ?Sized>(
    real_side: &[f64],
    other_side: &[f64],
    k: usize,
    rng: &mut R,
) -> Result<RankPmf> {
    empirical_pmf_repeated(real_side, other_side, k, 1, rng)
}

/// Like [`empirical_pmf`] with `repetitions` independent subsets per point.
pub fn empirical_pmf_repeated<R: Rng + ?Sized>(
    real_side: &[f64],
    other_side: &[f64],
    k: usize,
    repetitions: usize,
    rng: &mut R,
) -> Result<RankPmf> {
    if real_side.is_empty() || repetitions == 0 {
        return Err(Error::EmptyInput);
    }
    if k == 0 {
        return Err(Error::InvalidParameter("rank order k must be positive".into()));
    }
    if other_side.len() < k {
        return Err(Error::InsufficientSamples {
            needed: k,
            got: other_side.len(),
        });
    }
    let mut counts = vec![0u64; k + 1];
    for &y in real_side {
        for _ in 0..repetitions {
            let rank = index::sample(rng, other_side.len(), k)
                .iter()
                .filter(|&i| other_side[i] <= y)
                .count();
            counts[rank] += 1;
        }
    }
    let counts: Vec<f64> = counts.into_iter().map(|c| c as f64).collect();
    RankPmf::from_counts(&counts)
}

/// Rao–Blackwellized estimate of `Q_K`: each probe `y` contributes the
/// whole binomial row `b_{n,K}(F̂(y))`, with `F̂` the empirical cdf of
/// `other_side`. This is the Monte Carlo version of
/// `Q_K(n) = ∫ b_{n,K}(F̃(y)) p(y) dy` and has far lower variance than hard
/// counts, which matters once the dual basis amplifies noise.
pub fn smoothed_pmf(real_side: &[f64], other_side: &[f64], k: usize) -> Result<RankPmf> {
    if real_side.is_empty() || other_side.is_empty() {
        return Err(Error::EmptyInput);
    }
    if k == 0 {
        return Err(Error::InvalidParameter("rank order k must be positive".into()));
    }
    let mut sorted = other_side.to_vec();
    sorted.sort_by(f64::total_cmp);
    let basis = BernsteinBasis::new(k);
    let mut acc = vec![0.0; k + 1];
    let mut row = vec![0.0; k + 1];
    let n = sorted.len() as f64;
    for &y in real_side {
        let below = sorted.partition_point(|v| *v <= y) as f64;
        basis.eval_all_into(below / n, (n - below) / n, &mut row);
        for (a, r) in acc.iter_mut().zip(&row) {
            *a += r;
        }
    }
    RankPmf::from_counts(&acc)
}

/// How `Q̂_K` is estimated from samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PmfEstimator {
    /// Hard rank counts against random `K`-subsets.
    HardCounts,
    /// Binomial rows at the empirical cdf ([`smoothed_pmf`]).
    #[default]
    Binomial,
}

impl PmfEstimator {
    pub fn estimate<R: Rng + ?Sized>(self, real_side: &[f64], other_side: &[f64], k: usize, rng: &mut R) -> Result<RankPmf> {
        match self {
            Self::HardCounts => empirical_pmf(real_side, other_side, k, rng),
            Self::Binomial => smoothed_pmf(real_side, other_side, k),
        }
    }
}

/// Truncation level in cdf space for the change of variables.
const T_EPS: f64 = 1e-13;
/// Mass of `p` the `t`-route may ignore before the `y`-route is used.
const T_ROUTE_TAIL_MASS: f64 = 1e-12;
/// Quantile levels of `p` bounding the `y`-route integration range.
const Y_EPS: f64 = 1e-14;

fn quad_options() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-12,
        rel_tol: 1e-12,
        max_intervals: 20_000,
    }
}

fn level_grid(eps: f64) -> Vec<f64> {
    let mut levels = vec![eps];
    let mut lo = 1e-12;
    while lo < 0.05 {
        if lo > eps {
            levels.push(lo);
            levels.push(1.0 - lo);
        }
        lo *= 100.0;
    }
    levels.extend((1..20).map(|i| i as f64 / 20.0));
    levels.push(1.0 - eps);
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    levels
}

fn check_partition(probs: Vec<f64>, k: usize) -> Result<RankPmf> {
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::Quadrature {
            error: (total - 1.0).abs(),
            tolerance: 1e-8,
        });
    }
    debug_assert_eq!(probs.len(), k + 1);
    Ok(RankPmf {
        probs: probs.into_iter().map(|p| p.max(0.0)).collect(),
    })
}

/// Exact `Q_K` for `y ~ p` ranked against `K` draws from `ptilde`.
///
/// Integrates `∫₀¹ b_{n,K}(t) q(F̃⁻¹(t)) dt` with `q = p/p̃` whenever `p`
/// puts negligible mass outside the truncated `t`-range, and otherwise falls
/// back to `∫ b_{n,K}(F̃(y)) p(y) dy`.
pub fn exact_pmf(p: &Density1D, ptilde: &Density1D, k: usize) -> Result<RankPmf> {
    let lo = ptilde.inverse_cdf(T_EPS)?;
    let hi = ptilde.inverse_cdf(1.0 - T_EPS)?;
    let outside = p.cdf(lo) + p.sf(hi);
    if outside <= T_ROUTE_TAIL_MASS {
        exact_pmf_t(p, ptilde, k)
    } else {
        exact_pmf_y(p, ptilde, k)
    }
}

/// `t`-space form `∫ b_{n,K}(t) q(F̃⁻¹(t)) dt` over `[ε, 1−ε]`.
pub fn exact_pmf_t(p: &Density1D, ptilde: &Density1D, k: usize) -> Result<RankPmf> {
    let basis = BernsteinBasis::new(k);
    let mut breaks = level_grid(T_EPS);
    for x in p.breakpoints().into_iter().chain(ptilde.breakpoints()) {
        let t = ptilde.cdf(x);
        if t > T_EPS && t < 1.0 - T_EPS {
            breaks.push(t);
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut failure = None;
    let probs = integrate_vec(
        |t, out| {
            let x = match ptilde.inverse_cdf(t) {
                Ok(x) => x,
                Err(e) => {
                    failure.get_or_insert(e);
                    out.fill(0.0);
                    return;
                }
            };
            let ln_q = p.ln_pdf(x) - ptilde.ln_pdf(x);
            let q = if ln_q == f64::NEG_INFINITY { 0.0 } else { ln_q.exp() };
            basis.eval_all_into(t, 1.0 - t, out);
            for v in out.iter_mut() {
                *v *= q;
            }
        },
        k + 1,
        &breaks,
        quad_options(),
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    check_partition(probs, k)
}

/// `y`-space form `∫ b_{n,K}(F̃(y)) p(y) dy`, split at quantiles of `p`.
pub fn exact_pmf_y(p: &Density1D, ptilde: &Density1D, k: usize) -> Result<RankPmf> {
    let basis = BernsteinBasis::new(k);
    let mut breaks = p.quantile_grid(&level_grid(Y_EPS))?;
    let (lo, hi) = (breaks[0], *breaks.last().expect("nonempty grid"));
    for x in p.breakpoints().into_iter().chain(ptilde.breakpoints()) {
        if x > lo && x < hi {
            breaks.push(x);
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let probs = integrate_vec(
        |y, out| {
            let w = p.pdf(y);
            basis.eval_all_into(ptilde.cdf(y), ptilde.sf(y), out);
            for v in out.iter_mut() {
                *v *= w;
            }
        },
        k + 1,
        &breaks,
        quad_options(),
    )?;
    check_partition(probs, k)
}
