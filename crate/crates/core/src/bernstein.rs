//! Bernstein basis, its Gram matrix and dual basis, the truncated density
//! ratio `q̃_K(t) = Σ Q_K(n) b̃_{n,K}(t)` and the explicit density
//! approximations `p_K` (analytic reference) and `p̂_K` (Monte Carlo).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::compensated::Dd;
use crate::distributions::Density1D;
use crate::error::{Error, Result};
use crate::rank::{exact_pmf, RankPmf};

/// Largest degree whose Gram inverse is computed in exact arithmetic.
pub const MAX_EXACT_DEGREE: usize = 15;
/// Largest supported degree overall.
pub const MAX_DEGREE: usize = 30;
/// Grid size used by the sup-norm checks.
pub const SUP_GRID: usize = 10_000;

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Degree-`K` Bernstein polynomials `b_{n,K}(t) = C(K,n) tⁿ (1−t)^{K−n}`.
#[derive(Clone, Debug)]
pub struct BernsteinBasis {
    k: usize,
    binom: Vec<f64>,
}

impl BernsteinBasis {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            binom: (0..=k).map(|n| binomial(k, n) as f64).collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn eval(&self, n: usize, t: f64) -> f64 {
        self.eval_with_complement(n, t, 1.0 - t)
    }

    /// Evaluates with an explicitly supplied `s = 1 − t`, which callers can
    /// compute more accurately (e.g. from a survival function).
    pub fn eval_with_complement(&self, n: usize, t: f64, s: f64) -> f64 {
        self.binom[n] * t.powi(n as i32) * s.powi((self.k - n) as i32)
    }

    pub fn eval_all_into(&self, t: f64, s: f64, out: &mut [f64]) {
        for (n, o) in out.iter_mut().enumerate().take(self.k + 1) {
            *o = self.eval_with_complement(n, t, s);
        }
    }

    pub fn eval_all(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.k + 1];
        self.eval_all_into(t, 1.0 - t, &mut out);
        out
    }

    fn eval_all_dd(&self, t: f64) -> Vec<Dd> {
        let t_dd = Dd::new(t);
        let s_dd = Dd::ONE - t_dd;
        (0..=self.k)
            .map(|n| t_dd.powi(n as u32) * s_dd.powi((self.k - n) as u32) * self.binom[n])
            .collect()
    }
}

pub fn bernstein_eval(n: usize, k: usize, t: f64) -> f64 {
    assert!(n <= k, "index {n} exceeds degree {k}");
    BernsteinBasis::new(k).eval(n, t)
}

/// Exact Gram matrix `G_{nm} = C(K,n) C(K,m) / ((2K+1) C(2K, n+m))`.
pub fn gram_rational(k: usize) -> Vec<Vec<BigRational>> {
    let big = |v: u128| BigInt::from(v);
    (0..=k)
        .map(|n| {
            (0..=k)
                .map(|m| {
                    BigRational::new(
                        big(binomial(k, n)) * big(binomial(k, m)),
                        big(2 * k as u128 + 1) * big(binomial(2 * k, n + m)),
                    )
                })
                .collect()
        })
        .collect()
}

pub fn gram_matrix(k: usize) -> Vec<Vec<f64>> {
    gram_rational(k)
        .iter()
        .map(|row| row.iter().map(|r| Dd::from_rational(r).hi).collect())
        .collect()
}

fn invert_rational(k: usize) -> Vec<Vec<Dd>> {
    let n = k + 1;
    let mut a = gram_rational(k);
    let mut inv: Vec<Vec<BigRational>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { BigRational::one() } else { BigRational::zero() })
                .collect()
        })
        .collect();
    for col in 0..n {
        // SPD: the diagonal pivot is never zero.
        let pivot = a[col][col].clone();
        for j in 0..n {
            a[col][j] = &a[col][j] / &pivot;
            inv[col][j] = &inv[col][j] / &pivot;
        }
        for row in 0..n {
            if row == col || a[row][col].is_zero() {
                continue;
            }
            let factor = a[row][col].clone();
            for j in 0..n {
                let da = &factor * &a[col][j];
                a[row][j] -= da;
                let di = &factor * &inv[col][j];
                inv[row][j] -= di;
            }
        }
    }
    inv.iter()
        .map(|row| row.iter().map(Dd::from_rational).collect())
        .collect()
}

fn invert_float(k: usize) -> Result<Vec<Vec<Dd>>> {
    let n = k + 1;
    let g = gram_matrix(k);
    let mut a = g.clone();
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for col in 0..n {
        let piv_row = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("nonempty range");
        if !(a[piv_row][col].abs() > 1e-300) {
            return Err(Error::IllConditioned(k));
        }
        a.swap(col, piv_row);
        inv.swap(col, piv_row);
        let pivot = a[col][col];
        for j in 0..n {
            a[col][j] /= pivot;
            inv[col][j] /= pivot;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a[row][col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..n {
                a[row][j] -= factor * a[col][j];
                inv[row][j] -= factor * inv[col][j];
            }
        }
    }
    // Two rounds of refinement X ← X + X(I − GX), residual in double-double.
    let mut x: Vec<Vec<Dd>> = inv.iter().map(|r| r.iter().map(|&v| Dd::new(v)).collect()).collect();
    for _ in 0..2 {
        let mut resid = vec![vec![Dd::ZERO; n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = if i == j { Dd::ONE } else { Dd::ZERO };
                for l in 0..n {
                    acc = acc - x[l][j] * g[i][l];
                }
                resid[i][j] = acc;
            }
        }
        let mut next = x.clone();
        for i in 0..n {
            for j in 0..n {
                let mut acc = Dd::ZERO;
                for l in 0..n {
                    acc = acc + x[i][l] * resid[l][j];
                }
                next[i][j] = next[i][j] + acc;
            }
        }
        x = next;
    }
    if x.iter().flatten().any(|v| !v.hi.is_finite()) {
        return Err(Error::IllConditioned(k));
    }
    Ok(x)
}

fn cached_inverse(k: usize) -> Result<Arc<Vec<Vec<Dd>>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<Vec<Dd>>>>>> = OnceLock::new();
    if k > MAX_DEGREE {
        return Err(Error::DegreeOutOfRange { k, max: MAX_DEGREE });
    }
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(inv) = cache.lock().expect("cache lock").get(&k) {
        return Ok(inv.clone());
    }
    let inv = Arc::new(if k <= MAX_EXACT_DEGREE {
        invert_rational(k)
    } else {
        invert_float(k)?
    });
    cache.lock().expect("cache lock").insert(k, inv.clone());
    Ok(inv)
}

/// Gram matrix, its inverse and the dual basis `b̃_{m,K} = Σ_j (G⁻¹)_{mj} b_{j,K}`.
#[derive(Clone, Debug)]
pub struct DualBasis {
    basis: BernsteinBasis,
    gram: Vec<Vec<f64>>,
    inverse: Arc<Vec<Vec<Dd>>>,
}

impl DualBasis {
    pub fn new(k: usize) -> Result<Self> {
        let inverse = cached_inverse(k)?;
        Ok(Self {
            basis: BernsteinBasis::new(k),
            gram: gram_matrix(k),
            inverse,
        })
    }

    pub fn k(&self) -> usize {
        self.basis.k
    }

    pub fn gram(&self) -> &[Vec<f64>] {
        &self.gram
    }

    pub fn gram_inverse(&self) -> Vec<Vec<f64>> {
        self.inverse
            .iter()
            .map(|row| row.iter().map(|v| v.to_f64()).collect())
            .collect()
    }

    pub fn inverse_row_sums(&self) -> Vec<f64> {
        self.inverse
            .iter()
            .map(|row| row.iter().fold(Dd::ZERO, |acc, &v| acc + v).to_f64())
            .collect()
    }

    pub fn eval(&self, m: usize, t: f64) -> f64 {
        let b = self.basis.eval_all_dd(t);
        self.inverse[m]
            .iter()
            .zip(&b)
            .fold(Dd::ZERO, |acc, (&g, &bj)| acc + g * bj)
            .to_f64()
    }

    pub fn eval_all(&self, t: f64) -> Vec<f64> {
        let b = self.basis.eval_all_dd(t);
        self.inverse
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&b)
                    .fold(Dd::ZERO, |acc, (&g, &bj)| acc + g * bj)
                    .to_f64()
            })
            .collect()
    }

    /// `max_m sup_t |b̃_{m,K}(t)|` over a uniform grid.
    pub fn sup_norm(&self, grid: usize) -> f64 {
        (0..grid)
            .map(|i| i as f64 / (grid - 1) as f64)
            .flat_map(|t| self.eval_all(t))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn dual_basis_eval(m: usize, k: usize, t: f64) -> Result<f64> {
    Ok(DualBasis::new(k)?.eval(m, t))
}

/// Truncated ratio `q̃_K(t) = Σ_n Q_K(n) b̃_{n,K}(t)`.
#[derive(Clone, Debug)]
pub struct RatioApprox {
    coeffs: RankPmf,
    basis: BernsteinBasis,
    // Coefficients in the primal basis: c_j = Σ_n Q_K(n) (G⁻¹)_{nj}.
    primal: Vec<Dd>,
}

impl RatioApprox {
    pub fn new(coeffs: RankPmf) -> Result<Self> {
        let k = coeffs.k();
        let inverse = cached_inverse(k)?;
        let primal = (0..=k)
            .map(|j| {
                coeffs
                    .probs()
                    .iter()
                    .enumerate()
                    .fold(Dd::ZERO, |acc, (n, &q)| acc + inverse[n][j] * q)
            })
            .collect();
        Ok(Self {
            coeffs,
            basis: BernsteinBasis::new(k),
            primal,
        })
    }

    pub fn k(&self) -> usize {
        self.basis.k
    }

    pub fn coeffs(&self) -> &RankPmf {
        &self.coeffs
    }

    /// Evaluates at `t`, clamped into `[0, 1]`.
    pub fn eval(&self, t: f64) -> f64 {
        let b = self.basis.eval_all_dd(t.clamp(0.0, 1.0));
        self.primal
            .iter()
            .zip(&b)
            .fold(Dd::ZERO, |acc, (&c, &bj)| acc + c * bj)
            .to_f64()
    }
}

pub fn truncated_ratio(coeffs: &RankPmf, t: f64) -> Result<f64> {
    Ok(RatioApprox::new(coeffs.clone())?.eval(t))
}

/// `p_K(x) = p̃(x) q̃_K(F̃(x))` for an analytic reference `p̃`.
#[derive(Clone, Debug)]
pub struct ExplicitDensity {
    ratio: RatioApprox,
    reference: Density1D,
}

impl ExplicitDensity {
    pub fn new(p: &Density1D, ptilde: &Density1D, k: usize) -> Result<Self> {
        Self::from_pmf(exact_pmf(p, ptilde, k)?, ptilde.clone())
    }

    pub fn from_pmf(coeffs: RankPmf, reference: Density1D) -> Result<Self> {
        Ok(Self {
            ratio: RatioApprox::new(coeffs)?,
            reference,
        })
    }

    pub fn ratio(&self) -> &RatioApprox {
        &self.ratio
    }

    pub fn eval(&self, x: f64) -> f64 {
        let w = self.reference.pdf(x);
        if w == 0.0 {
            return 0.0;
        }
        w * self.ratio.eval(self.reference.cdf(x))
    }
}

/// Evaluation grid covering the central `1 − 2·1e-4` mass of both densities.
pub fn default_x_grid(p: &Density1D, ptilde: &Density1D, points: usize) -> Result<Vec<f64>> {
    let lo = p.inverse_cdf(1e-4)?.min(ptilde.inverse_cdf(1e-4)?);
    let hi = p.inverse_cdf(1.0 - 1e-4)?.max(ptilde.inverse_cdf(1.0 - 1e-4)?);
    Ok(linspace(lo, hi, points))
}

pub(crate) fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

/// `sup_x |p_K(x) − p(x)|` over `grid` for each degree in `ks`.
pub fn density_limit_check(
    p: &Density1D,
    ptilde: &Density1D,
    ks: &[usize],
    grid: &[f64],
) -> Result<Vec<f64>> {
    ks.iter()
        .map(|&k| {
            let approx = ExplicitDensity::new(p, ptilde, k)?;
            Ok(grid
                .iter()
                .map(|&x| (approx.eval(x) - p.pdf(x)).abs())
                .fold(0.0, f64::max))
        })
        .collect()
}

/// `(lhs, rhs) = (sup_t |q̃_K(t) − 1|, (K+1)² d_K)` on a `10⁴`-point grid
/// over `[0, 1]`.
pub fn sup_deviation_bound_check(p: &Density1D, ptilde: &Density1D, k: usize) -> Result<(f64, f64)> {
    let pmf = exact_pmf(p, ptilde, k)?;
    let rhs = ((k + 1) * (k + 1)) as f64 * pmf.discrepancy();
    let ratio = RatioApprox::new(pmf)?;
    let lhs = linspace(0.0, 1.0, SUP_GRID)
        .into_iter()
        .map(|t| (ratio.eval(t) - 1.0).abs())
        .fold(0.0, f64::max);
    Ok((lhs, rhs))
}

/// Interior grid `t_i = i/(N+1)`, `i = 1..=N`.
pub(crate) fn interior_grid(points: usize) -> Vec<f64> {
    (1..=points).map(|i| i as f64 / (points + 1) as f64).collect()
}

/// Second derivative in `t` of `q̃(t) = q(F̃⁻¹(t))`, `q = p/p̃`.
pub fn ratio_second_derivative(p: &Density1D, ptilde: &Density1D, t: f64) -> Result<Option<f64>> {
    let x = ptilde.inverse_cdf(t)?;
    let (Some([a, a1, a2]), Some([b, b1, b2])) = (p.pdf_derivatives(x), ptilde.pdf_derivatives(x))
    else {
        return Ok(None);
    };
    let q1 = (a1 * b - a * b1) / (b * b);
    let q2 = a2 / b - 2.0 * a1 * b1 / (b * b) - a * b2 / (b * b) + 2.0 * a * b1 * b1 / (b * b * b);
    Ok(Some((q2 * b - q1 * b1) / (b * b * b)))
}

/// `(lhs, rhs) = (sup_t |q̃(t) − 1|, (K+1)² d_K + sup_t |q̃''(t)| / (8K))`
/// on the interior grid of [`SUP_GRID`] points, with the untruncated ratio
/// on the left.
pub fn remark_bound_check(p: &Density1D, ptilde: &Density1D, k: usize) -> Result<(f64, f64)> {
    let pmf = exact_pmf(p, ptilde, k)?;
    let mut lhs = 0.0f64;
    let mut curvature = 0.0f64;
    for t in interior_grid(SUP_GRID) {
        let x = ptilde.inverse_cdf(t)?;
        let q = (p.ln_pdf(x) - ptilde.ln_pdf(x)).exp();
        lhs = lhs.max((q - 1.0).abs());
        let q2 = ratio_second_derivative(p, ptilde, t)?.ok_or_else(|| {
            Error::InvalidParameter(format!("no closed-form derivatives for {p} or {ptilde}"))
        })?;
        curvature = curvature.max(q2.abs());
    }
    let rhs = ((k + 1) * (k + 1)) as f64 * pmf.discrepancy() + curvature / (8.0 * k as f64);
    Ok((lhs, rhs))
}

/// Right-continuous empirical cdf over a sorted copy of the samples.
#[derive(Clone, Debug)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput);
        }
        if samples.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter("NaN in samples".into()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|v| *v <= x) as f64 / self.sorted.len() as f64
    }

    /// `(F̂(x+δ) − F̂(x−δ)) / (2δ)`.
    pub fn density(&self, x: f64, delta: f64) -> f64 {
        (self.eval(x + delta) - self.eval(x - delta)) / (2.0 * delta)
    }
}

/// Monte Carlo estimator `p̂_K(x) = p̂̃(x) q̃_K(F̂̃(x))`, clamped at zero.
#[derive(Clone, Debug)]
pub struct DensityEstimator {
    ratio: RatioApprox,
    cdf: EmpiricalCdf,
    delta: f64,
}

impl DensityEstimator {
    pub const DEFAULT_DELTA: f64 = 0.1;

    pub fn new(coeffs: RankPmf, reference_samples: &[f64], delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!("finite-difference step {delta} must be > 0")));
        }
        Ok(Self {
            ratio: RatioApprox::new(coeffs)?,
            cdf: EmpiricalCdf::new(reference_samples)?,
            delta,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let base = self.cdf.density(x, self.delta);
        if base == 0.0 {
            return 0.0;
        }
        (base * self.ratio.eval(self.cdf.eval(x))).max(0.0)
    }

    pub fn eval_grid(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }
}

pub fn density_estimate(coeffs: &RankPmf, reference_samples: &[f64], delta: f64, x: f64) -> Result<f64> {
    Ok(DensityEstimator::new(coeffs.clone(), reference_samples, delta)?.eval(x))
}
