//! Analytic target distributions, mixtures, 2D synthetic datasets and a
//! tiny text syntax for naming them (`normal(4,2)`, `mixture(0.5*normal(5,2), 0.5*normal(-1,1))`,
//! `dualmoon`, `tworings(1,2)`).

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;
const INVERSE_CDF_MAX_ITER: usize = 200;
const INVERSE_CDF_TOL: f64 = 1e-10;

/// Univariate analytic density.
#[derive(Clone, Debug, PartialEq)]
pub enum Density1D {
    Normal { mu: f64, sigma: f64 },
    Uniform { a: f64, b: f64 },
    Cauchy { loc: f64, scale: f64 },
    /// Support `[scale, ∞)`, cdf `1 − (scale/x)^shape`.
    Pareto { scale: f64, shape: f64 },
    Mixture(Mixture),
}

/// Finite mixture; weights are nonnegative and sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixture {
    weights: Vec<f64>,
    components: Vec<Density1D>,
}

impl Mixture {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Density1D] {
        &self.components
    }

    /// Index of the component with the largest posterior weight at `x`.
    pub fn assign(&self, x: f64) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, (w, c)) in self.weights.iter().zip(&self.components).enumerate() {
            let score = w.ln() + c.ln_pdf(x);
            if score > best_score {
                best_score = score;
                best = i;
            }
        }
        best
    }
}

fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}

impl Density1D {
    pub fn normal(mu: f64, sigma: f64) -> Result<Self> {
        require(mu.is_finite() && sigma.is_finite() && sigma > 0.0, || {
            format!("normal({mu}, {sigma}) needs finite mu and sigma > 0")
        })?;
        Ok(Self::Normal { mu, sigma })
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        require(a.is_finite() && b.is_finite() && b > a, || {
            format!("uniform({a}, {b}) needs finite a < b")
        })?;
        Ok(Self::Uniform { a, b })
    }

    pub fn cauchy(loc: f64, scale: f64) -> Result<Self> {
        require(loc.is_finite() && scale.is_finite() && scale > 0.0, || {
            format!("cauchy({loc}, {scale}) needs finite loc and scale > 0")
        })?;
        Ok(Self::Cauchy { loc, scale })
    }

    pub fn pareto(scale: f64, shape: f64) -> Result<Self> {
        require(
            scale.is_finite() && shape.is_finite() && scale > 0.0 && shape > 0.0,
            || format!("pareto({scale}, {shape}) needs scale > 0 and shape > 0"),
        )?;
        Ok(Self::Pareto { scale, shape })
    }

    /// Weights must be nonnegative and sum to one within 1e-9; they are
    /// renormalized exactly afterwards.
    pub fn mixture(weights: Vec<f64>, components: Vec<Density1D>) -> Result<Self> {
        require(!components.is_empty(), || "mixture needs at least one component".into())?;
        require(weights.len() == components.len(), || {
            format!(
                "mixture has {} weights for {} components",
                weights.len(),
                components.len()
            )
        })?;
        require(weights.iter().all(|w| w.is_finite() && *w >= 0.0), || {
            "mixture weights must be nonnegative".into()
        })?;
        let total: f64 = weights.iter().sum();
        require((total - 1.0).abs() <= 1e-9, || {
            format!("mixture weights sum to {total}, expected 1")
        })?;
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self::Mixture(Mixture {
            weights,
            components,
        }))
    }

    /// Equal-weight mixture.
    pub fn equal_mixture(components: Vec<Density1D>) -> Result<Self> {
        let n = components.len().max(1);
        Self::mixture(vec![1.0 / n as f64; components.len()], components)
    }

    /// `λ·p₁ + (1−λ)·p₂`.
    pub fn blend(lambda: f64, first: Density1D, second: Density1D) -> Result<Self> {
        require((0.0..=1.0).contains(&lambda), || {
            format!("blend weight {lambda} outside [0, 1]")
        })?;
        Self::mixture(vec![lambda, 1.0 - lambda], vec![first, second])
    }

    /// ½N(5,2) + ½N(−1,1).
    pub fn mixture1() -> Self {
        Self::equal_mixture(vec![
            Self::Normal { mu: 5.0, sigma: 2.0 },
            Self::Normal { mu: -1.0, sigma: 1.0 },
        ])
        .expect("valid preset")
    }

    /// ⅓N(5,2) + ⅓N(−1,1) + ⅓N(−10,3).
    pub fn mixture2() -> Self {
        Self::equal_mixture(vec![
            Self::Normal { mu: 5.0, sigma: 2.0 },
            Self::Normal { mu: -1.0, sigma: 1.0 },
            Self::Normal { mu: -10.0, sigma: 3.0 },
        ])
        .expect("valid preset")
    }

    /// ½N(−5,2) + ½Pareto(5,1).
    pub fn mixture3() -> Self {
        Self::equal_mixture(vec![
            Self::Normal { mu: -5.0, sigma: 2.0 },
            Self::Pareto { scale: 5.0, shape: 1.0 },
        ])
        .expect("valid preset")
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Self::Normal { mu, sigma } => {
                let z = (x - mu) / sigma;
                (-0.5 * z * z - LN_SQRT_2PI).exp() / sigma
            }
            Self::Uniform { a, b } => {
                if (a..=b).contains(&x) {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            Self::Cauchy { loc, scale } => {
                let z = (x - loc) / scale;
                1.0 / (PI * scale * (1.0 + z * z))
            }
            Self::Pareto { scale, shape } => {
                if x < scale {
                    0.0
                } else {
                    shape / scale * (scale / x).powf(shape + 1.0)
                }
            }
            Self::Mixture(ref m) => m
                .weights
                .iter()
                .zip(&m.components)
                .map(|(w, c)| w * c.pdf(x))
                .sum(),
        }
    }

    /// Log density; `-inf` outside the support.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            Self::Normal { mu, sigma } => {
                let z = (x - mu) / sigma;
                -0.5 * z * z - sigma.ln() - LN_SQRT_2PI
            }
            Self::Cauchy { loc, scale } => {
                let z = (x - loc) / scale;
                -(PI * scale).ln() - z.mul_add(z, 1.0).ln()
            }
            Self::Pareto { scale, shape } => {
                if x < scale {
                    f64::NEG_INFINITY
                } else {
                    shape.ln() - scale.ln() + (shape + 1.0) * (scale / x).ln()
                }
            }
            Self::Uniform { .. } => self.pdf(x).ln(),
            Self::Mixture(ref m) => {
                let terms: Vec<f64> = m
                    .weights
                    .iter()
                    .zip(&m.components)
                    .map(|(w, c)| w.ln() + c.ln_pdf(x))
                    .collect();
                log_sum_exp(&terms)
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Self::Normal { mu, sigma } => 0.5 * erfc(-(x - mu) / sigma * FRAC_1_SQRT_2),
            Self::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
            Self::Cauchy { loc, scale } => f64::atan2(1.0, -(x - loc) / scale) / PI,
            Self::Pareto { scale, shape } => {
                if x <= scale {
                    0.0
                } else {
                    -(shape * (scale / x).ln()).exp_m1()
                }
            }
            Self::Mixture(ref m) => m
                .weights
                .iter()
                .zip(&m.components)
                .map(|(w, c)| w * c.cdf(x))
                .sum::<f64>()
                .clamp(0.0, 1.0),
        }
    }

    /// Survival function `1 − cdf(x)`, accurate in the right tail.
    pub fn sf(&self, x: f64) -> f64 {
        match *self {
            Self::Normal { mu, sigma } => 0.5 * erfc((x - mu) / sigma * FRAC_1_SQRT_2),
            Self::Uniform { a, b } => ((b - x) / (b - a)).clamp(0.0, 1.0),
            Self::Cauchy { loc, scale } => f64::atan2(1.0, (x - loc) / scale) / PI,
            Self::Pareto { scale, shape } => {
                if x <= scale {
                    1.0
                } else {
                    (scale / x).powf(shape)
                }
            }
            Self::Mixture(ref m) => m
                .weights
                .iter()
                .zip(&m.components)
                .map(|(w, c)| w * c.sf(x))
                .sum::<f64>()
                .clamp(0.0, 1.0),
        }
    }

    /// Quantile function. Closed forms where available; mixtures use a
    /// bracketed Newton/bisection search on the numeric cdf.
    pub fn inverse_cdf(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::ProbabilityOutOfRange(u));
        }
        match *self {
            Self::Normal { mu, sigma } => {
                let mut x = mu - sigma * SQRT_2 * erfc_inv(2.0 * u);
                // One Newton step on whichever tail is better conditioned.
                let p = self.pdf(x);
                if p > 0.0 {
                    let resid = if u < 0.5 {
                        self.cdf(x) - u
                    } else {
                        (1.0 - u) - self.sf(x)
                    };
                    x -= resid / p;
                }
                Ok(x)
            }
            Self::Uniform { a, b } => Ok(a + u * (b - a)),
            Self::Cauchy { loc, scale } => {
                if u < 0.5 {
                    Ok(loc - scale / (PI * u).tan())
                } else {
                    Ok(loc + scale / (PI * (1.0 - u)).tan())
                }
            }
            Self::Pareto { scale, shape } => Ok(scale * (-(-u).ln_1p() / shape).exp()),
            Self::Mixture(ref m) => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for c in &m.components {
                    let q = c.inverse_cdf(u)?;
                    lo = lo.min(q);
                    hi = hi.max(q);
                }
                self.solve_quantile(u, lo, hi)
            }
        }
    }

    fn solve_quantile(&self, u: f64, mut lo: f64, mut hi: f64) -> Result<f64> {
        // Residual r(x) = cdf(x) − u, evaluated through the survival function
        // in the upper half to avoid cancellation.
        let upper = u > 0.5;
        let resid = |x: f64| {
            if upper {
                (1.0 - u) - self.sf(x)
            } else {
                self.cdf(x) - u
            }
        };
        if lo == hi {
            return Ok(lo);
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..INVERSE_CDF_MAX_ITER {
            let r = resid(x);
            if r == 0.0 {
                return Ok(x);
            }
            if r > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let p = self.pdf(x);
            let newton = if p > 0.0 { x - r / p } else { f64::NAN };
            let next = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if next == x || hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()).max(1e-300) {
                break;
            }
            x = next;
        }
        let r = resid(x);
        if r.abs() <= INVERSE_CDF_TOL {
            Ok(x)
        } else {
            Err(Error::InverseCdfNoConvergence {
                u,
                iterations: INVERSE_CDF_MAX_ITER,
            })
        }
    }

    /// `(p, p', p'')` where the density is twice differentiable in closed form.
    pub fn pdf_derivatives(&self, x: f64) -> Option<[f64; 3]> {
        match *self {
            Self::Normal { mu, sigma } => {
                let z = (x - mu) / sigma;
                let p = self.pdf(x);
                Some([p, -z / sigma * p, (z * z - 1.0) / (sigma * sigma) * p])
            }
            Self::Cauchy { loc, scale } => {
                let z = (x - loc) / scale;
                let p = self.pdf(x);
                let s = 1.0 + z * z;
                Some([
                    p,
                    -2.0 * z / (scale * s) * p,
                    p * (6.0 * z * z - 2.0) / (s * s * scale * scale),
                ])
            }
            Self::Uniform { .. } | Self::Pareto { .. } => None,
            Self::Mixture(ref m) => {
                let mut acc = [0.0; 3];
                for (w, c) in m.weights.iter().zip(&m.components) {
                    let d = c.pdf_derivatives(x)?;
                    for i in 0..3 {
                        acc[i] += w * d[i];
                    }
                }
                Some(acc)
            }
        }
    }

    /// Closed support interval (may be infinite).
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Self::Normal { .. } | Self::Cauchy { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Self::Uniform { a, b } => (a, b),
            Self::Pareto { scale, .. } => (scale, f64::INFINITY),
            Self::Mixture(ref m) => m.components.iter().fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), c| {
                    let (a, b) = c.support();
                    (lo.min(a), hi.max(b))
                },
            ),
        }
    }

    /// Points where the density jumps.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = match *self {
            Self::Normal { .. } | Self::Cauchy { .. } => vec![],
            Self::Uniform { a, b } => vec![a, b],
            Self::Pareto { scale, .. } => vec![scale],
            Self::Mixture(ref m) => m.components.iter().flat_map(|c| c.breakpoints()).collect(),
        };
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Normal { mu, sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                mu + sigma * z
            }
            Self::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
            Self::Cauchy { loc, scale } => {
                let u: f64 = rng.random();
                loc + scale * (PI * (u - 0.5)).tan()
            }
            Self::Pareto { scale, shape } => {
                // 1 − U lies in (0, 1]
                let u: f64 = 1.0 - rng.random::<f64>();
                scale * u.powf(-1.0 / shape)
            }
            Self::Mixture(ref m) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let last = m.components.len() - 1;
                for (i, w) in m.weights.iter().enumerate() {
                    acc += w;
                    if u < acc || i == last {
                        return m.components[i].sample_one(rng);
                    }
                }
                unreachable!("mixture has at least one component")
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    /// Quantiles used to split integration ranges.
    pub fn quantile_grid(&self, levels: &[f64]) -> Result<Vec<f64>> {
        levels.iter().map(|&u| self.inverse_cdf(u)).collect()
    }
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Row-major collection of `dim`-dimensional points.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    dim: usize,
    data: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).ok_or(Error::EmptyInput)?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Values of coordinate `axis` across all points.
    pub fn column(&self, axis: usize) -> Vec<f64> {
        self.rows().map(|r| r[axis]).collect()
    }
}

/// Bivariate Gaussian with full covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian2D {
    mean: [f64; 2],
    cov: [[f64; 2]; 2],
    chol: [[f64; 2]; 2],
}

impl Gaussian2D {
    pub fn new(mean: [f64; 2], cov: [[f64; 2]; 2]) -> Result<Self> {
        let [[a, b], [c, d]] = cov;
        require((b - c).abs() <= 1e-12 * (1.0 + b.abs()), || {
            "covariance must be symmetric".into()
        })?;
        require(a > 0.0 && a * d - b * c > 0.0, || {
            "covariance must be positive definite".into()
        })?;
        let l11 = a.sqrt();
        let l21 = b / l11;
        let l22 = (d - l21 * l21).sqrt();
        Ok(Self {
            mean,
            cov,
            chol: [[l11, 0.0], [l21, l22]],
        })
    }

    pub fn isotropic(mean: [f64; 2], sigma: f64) -> Result<Self> {
        Self::new(mean, [[sigma * sigma, 0.0], [0.0, sigma * sigma]])
    }

    pub fn mean(&self) -> [f64; 2] {
        self.mean
    }

    pub fn cov(&self) -> [[f64; 2]; 2] {
        self.cov
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn ln_pdf(&self, x: &[f64]) -> f64 {
        let [[a, b], [_, d]] = self.cov;
        let det = a * d - b * b;
        let dx = x[0] - self.mean[0];
        let dy = x[1] - self.mean[1];
        let quad = (d * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
        -0.5 * quad - 0.5 * det.ln() - 2.0 * LN_SQRT_2PI
    }

    /// Law of `sᵀX`.
    pub fn project(&self, s: &[f64]) -> Density1D {
        let mu = s[0] * self.mean[0] + s[1] * self.mean[1];
        let [[a, b], [_, d]] = self.cov;
        let var = s[0] * s[0] * a + 2.0 * s[0] * s[1] * b + s[1] * s[1] * d;
        Density1D::Normal {
            mu,
            sigma: var.sqrt(),
        }
    }

    /// Law of coordinate `axis`.
    pub fn marginal(&self, axis: usize) -> Density1D {
        Density1D::Normal {
            mu: self.mean[axis],
            sigma: self.cov[axis][axis].sqrt(),
        }
    }

    fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let z0: f64 = rng.sample(StandardNormal);
        let z1: f64 = rng.sample(StandardNormal);
        [
            self.mean[0] + self.chol[0][0] * z0,
            self.mean[1] + self.chol[1][0] * z0 + self.chol[1][1] * z1,
        ]
    }
}

/// Bivariate synthetic targets.
#[derive(Clone, Debug, PartialEq)]
pub enum Density2D {
    /// Two interleaved half circles of radius 1 with Gaussian noise.
    DualMoon { noise: f64 },
    /// Equal mixture of isotropic Gaussians evenly spaced on a circle.
    CircleOfGaussians { count: usize, radius: f64, sigma: f64 },
    /// Two concentric rings with radial Gaussian noise.
    TwoRings { r1: f64, r2: f64, noise: f64 },
    Gaussian(Gaussian2D),
    /// Independent coordinates.
    Product(Box<Density1D>, Box<Density1D>),
}

impl Density2D {
    pub const DEFAULT_MOON_NOISE: f64 = 0.1;
    pub const DEFAULT_RING_NOISE: f64 = 0.05;
    pub const DEFAULT_CIRCLE_RADIUS: f64 = 2.0;
    pub const DEFAULT_CIRCLE_SIGMA: f64 = 0.2;

    pub fn dual_moon() -> Self {
        Self::DualMoon {
            noise: Self::DEFAULT_MOON_NOISE,
        }
    }

    pub fn circle_of_gaussians(count: usize) -> Result<Self> {
        require(count >= 1, || "circle of gaussians needs count >= 1".into())?;
        Ok(Self::CircleOfGaussians {
            count,
            radius: Self::DEFAULT_CIRCLE_RADIUS,
            sigma: Self::DEFAULT_CIRCLE_SIGMA,
        })
    }

    pub fn two_rings(r1: f64, r2: f64) -> Result<Self> {
        require(r1 > 0.0 && r2 > 0.0, || "ring radii must be positive".into())?;
        Ok(Self::TwoRings {
            r1,
            r2,
            noise: Self::DEFAULT_RING_NOISE,
        })
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Self::DualMoon { noise } => require(noise >= 0.0, || "noise must be >= 0".into()),
            Self::CircleOfGaussians {
                count,
                radius,
                sigma,
            } => require(count >= 1 && radius > 0.0 && sigma > 0.0, || {
                "circle of gaussians needs count >= 1, radius > 0, sigma > 0".into()
            }),
            Self::TwoRings { r1, r2, noise } => require(r1 > 0.0 && r2 > 0.0 && noise >= 0.0, || {
                "ring radii must be positive and noise >= 0".into()
            }),
            Self::Gaussian(_) | Self::Product(..) => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        2
    }

    /// Closed-form density where one exists.
    pub fn pdf(&self, x: &[f64]) -> Option<f64> {
        match self {
            Self::Gaussian(g) => Some(g.pdf(x)),
            Self::Product(a, b) => Some(a.pdf(x[0]) * b.pdf(x[1])),
            Self::CircleOfGaussians {
                count,
                radius,
                sigma,
            } => {
                let mut total = 0.0;
                for i in 0..*count {
                    let theta = 2.0 * PI * i as f64 / *count as f64;
                    let g = Gaussian2D::isotropic([radius * theta.cos(), radius * theta.sin()], *sigma)
                        .ok()?;
                    total += g.pdf(x);
                }
                Some(total / *count as f64)
            }
            Self::DualMoon { .. } | Self::TwoRings { .. } => None,
        }
    }

    fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        match self {
            Self::DualMoon { noise } => {
                let theta = PI * rng.random::<f64>();
                let upper = rng.random::<bool>();
                let (x, y) = if upper {
                    (theta.cos(), theta.sin())
                } else {
                    (1.0 - theta.cos(), 0.5 - theta.sin())
                };
                let nx: f64 = rng.sample(StandardNormal);
                let ny: f64 = rng.sample(StandardNormal);
                [x + noise * nx, y + noise * ny]
            }
            Self::CircleOfGaussians {
                count,
                radius,
                sigma,
            } => {
                let i = rng.random_range(0..*count);
                let theta = 2.0 * PI * i as f64 / *count as f64;
                let nx: f64 = rng.sample(StandardNormal);
                let ny: f64 = rng.sample(StandardNormal);
                [radius * theta.cos() + sigma * nx, radius * theta.sin() + sigma * ny]
            }
            Self::TwoRings { r1, r2, noise } => {
                let r = if rng.random::<bool>() { *r1 } else { *r2 };
                let theta = 2.0 * PI * rng.random::<f64>();
                let nr: f64 = rng.sample(StandardNormal);
                let radius = r + noise * nr;
                [radius * theta.cos(), radius * theta.sin()]
            }
            Self::Gaussian(g) => g.sample_point(rng),
            Self::Product(a, b) => [a.sample_one(rng), b.sample_one(rng)],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> PointCloud {
        let mut data = Vec::with_capacity(2 * n);
        for _ in 0..n {
            data.extend_from_slice(&self.sample_point(rng));
        }
        PointCloud { dim: 2, data }
    }
}

/// Either kind of target, as produced by the text parser.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Univariate(Density1D),
    Bivariate(Density2D),
}

impl Target {
    pub fn univariate(self) -> Result<Density1D> {
        match self {
            Self::Univariate(d) => Ok(d),
            Self::Bivariate(d) => Err(Error::Parse(format!("expected a 1D target, got {d}"))),
        }
    }

    pub fn bivariate(self) -> Result<Density2D> {
        match self {
            Self::Bivariate(d) => Ok(d),
            Self::Univariate(d) => Err(Error::Parse(format!("expected a 2D target, got {d}"))),
        }
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut p = Parser::new(s);
        let t = p.target()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("trailing input"));
        }
        Ok(t)
    }
}

impl FromStr for Density1D {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.parse::<Target>()?.univariate()
    }
}

impl FromStr for Density2D {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.parse::<Target>()?.bivariate()
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(s: &'a str) -> Self {
        Self {
            src: s.as_bytes(),
            pos: 0,
        }
    }

    fn error(&self, msg: &str) -> Error {
        Error::Parse(format!(
            "{msg} at offset {} in {:?}",
            self.pos,
            String::from_utf8_lossy(self.src)
        ))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected '{}'", c as char)))
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected a distribution name"));
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).to_ascii_lowercase())
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && matches!(self.src[self.pos], b'0'..=b'9' | b'.' | b'-' | b'+' | b'e' | b'E')
        {
            self.pos += 1;
        }
        let text = String::from_utf8_lossy(&self.src[start..self.pos]).to_string();
        text.parse::<f64>()
            .map_err(|_| self.error(&format!("invalid number {text:?}")))
    }

    fn numbers(&mut self) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        if !self.eat(b'(') {
            return Ok(out);
        }
        if self.eat(b')') {
            return Ok(out);
        }
        loop {
            out.push(self.number()?);
            if self.eat(b')') {
                return Ok(out);
            }
            self.expect(b',')?;
        }
    }

    fn target(&mut self) -> Result<Target> {
        let name = self.ident()?;
        let arity = |args: &[f64], allowed: &[usize], this: &Self| -> Result<()> {
            if allowed.contains(&args.len()) {
                Ok(())
            } else {
                Err(this.error(&format!(
                    "{name} takes {allowed:?} arguments, got {}",
                    args.len()
                )))
            }
        };
        let uni = Target::Univariate;
        let bi = Target::Bivariate;
        match name.as_str() {
            "mixture" => self.mixture().map(uni),
            "product" => {
                self.expect(b'(')?;
                let a = self.target()?.univariate()?;
                self.expect(b',')?;
                let b = self.target()?.univariate()?;
                self.expect(b')')?;
                Ok(bi(Density2D::Product(Box::new(a), Box::new(b))))
            }
            _ => {
                let args = self.numbers()?;
                match name.as_str() {
                    "normal" | "gaussian" => {
                        arity(&args, &[2], self)?;
                        Density1D::normal(args[0], args[1]).map(uni)
                    }
                    "uniform" => {
                        arity(&args, &[2], self)?;
                        Density1D::uniform(args[0], args[1]).map(uni)
                    }
                    "cauchy" => {
                        arity(&args, &[2], self)?;
                        Density1D::cauchy(args[0], args[1]).map(uni)
                    }
                    "pareto" => {
                        arity(&args, &[2], self)?;
                        Density1D::pareto(args[0], args[1]).map(uni)
                    }
                    "mixture1" | "model1" => {
                        arity(&args, &[0], self)?;
                        Ok(uni(Density1D::mixture1()))
                    }
                    "mixture2" | "model2" => {
                        arity(&args, &[0], self)?;
                        Ok(uni(Density1D::mixture2()))
                    }
                    "mixture3" | "model3" => {
                        arity(&args, &[0], self)?;
                        Ok(uni(Density1D::mixture3()))
                    }
                    "dualmoon" => {
                        arity(&args, &[0, 1], self)?;
                        let noise = args.first().copied().unwrap_or(Density2D::DEFAULT_MOON_NOISE);
                        let d = Density2D::DualMoon { noise };
                        d.validate()?;
                        Ok(bi(d))
                    }
                    "circleofgaussians" | "circle" => {
                        arity(&args, &[1, 3], self)?;
                        if args[0] < 1.0 || args[0].fract() != 0.0 {
                            return Err(self.error("component count must be a positive integer"));
                        }
                        let d = Density2D::CircleOfGaussians {
                            count: args[0] as usize,
                            radius: args.get(1).copied().unwrap_or(Density2D::DEFAULT_CIRCLE_RADIUS),
                            sigma: args.get(2).copied().unwrap_or(Density2D::DEFAULT_CIRCLE_SIGMA),
                        };
                        d.validate()?;
                        Ok(bi(d))
                    }
                    "tworings" => {
                        arity(&args, &[2, 3], self)?;
                        let d = Density2D::TwoRings {
                            r1: args[0],
                            r2: args[1],
                            noise: args.get(2).copied().unwrap_or(Density2D::DEFAULT_RING_NOISE),
                        };
                        d.validate()?;
                        Ok(bi(d))
                    }
                    "gaussian2d" => {
                        arity(&args, &[4, 5], self)?;
                        let (sx, sy) = (args[2], args[3]);
                        let rho = args.get(4).copied().unwrap_or(0.0);
                        let g = Gaussian2D::new(
                            [args[0], args[1]],
                            [[sx * sx, rho * sx * sy], [rho * sx * sy, sy * sy]],
                        )?;
                        Ok(bi(Density2D::Gaussian(g)))
                    }
                    other => Err(self.error(&format!("unknown distribution {other:?}"))),
                }
            }
        }
    }

    fn mixture(&mut self) -> Result<Density1D> {
        self.expect(b'(')?;
        let mut weights = Vec::new();
        let mut comps = Vec::new();
        loop {
            let save = self.pos;
            let weighted = matches!(self.peek(), Some(b'0'..=b'9' | b'.' | b'-' | b'+'));
            if weighted {
                let w = self.number()?;
                self.expect(b'*')?;
                weights.push(Some(w));
            } else {
                self.pos = save;
                weights.push(None);
            }
            comps.push(self.target()?.univariate()?);
            if self.eat(b')') {
                break;
            }
            self.expect(b',')?;
        }
        if weights.iter().all(Option::is_none) {
            Density1D::equal_mixture(comps)
        } else if weights.iter().all(Option::is_some) {
            Density1D::mixture(weights.into_iter().map(Option::unwrap).collect(), comps)
        } else {
            Err(self.error("either all or no mixture components must carry weights"))
        }
    }
}

impl fmt::Display for Density1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Normal { mu, sigma } => write!(f, "normal({mu},{sigma})"),
            Self::Uniform { a, b } => write!(f, "uniform({a},{b})"),
            Self::Cauchy { loc, scale } => write!(f, "cauchy({loc},{scale})"),
            Self::Pareto { scale, shape } => write!(f, "pareto({scale},{shape})"),
            Self::Mixture(m) => {
                write!(f, "mixture(")?;
                for (i, (w, c)) in m.weights.iter().zip(&m.components).enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{w}*{c}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl fmt::Display for Density2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DualMoon { noise } => write!(f, "dualmoon({noise})"),
            Self::CircleOfGaussians {
                count,
                radius,
                sigma,
            } => write!(f, "circle({count},{radius},{sigma})"),
            Self::TwoRings { r1, r2, noise } => write!(f, "tworings({r1},{r2},{noise})"),
            Self::Gaussian(g) => {
                let sx = g.cov[0][0].sqrt();
                let sy = g.cov[1][1].sqrt();
                let rho = g.cov[0][1] / (sx * sy);
                write!(
                    f,
                    "gaussian2d({},{},{sx},{sy},{rho})",
                    g.mean[0], g.mean[1]
                )
            }
            Self::Product(a, b) => write!(f, "product({a}, {b})"),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Univariate(d) => d.fmt(f),
            Self::Bivariate(d) => d.fmt(f),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_vec, QuadOptions};
    use crate::rng::SeededRng;
    use rand::Rng;

    fn families() -> Vec<Density1D> {
        vec![
            Density1D::normal(4.0, 2.0).unwrap(),
            Density1D::uniform(-2.0, 2.0).unwrap(),
            Density1D::cauchy(1.0, 2.0).unwrap(),
            Density1D::pareto(1.0, 1.0).unwrap(),
            Density1D::mixture1(),
            Density1D::mixture2(),
            Density1D::mixture3(),
        ]
    }

    #[test]
    fn pdf_examples() {
        let n = Density1D::normal(0.0, 1.0).unwrap();
        assert!((n.pdf(0.0) - 0.398_942_280_4).abs() < 1e-10);
        assert_eq!(Density1D::pareto(1.0, 1.0).unwrap().pdf(0.5), 0.0);
        let c = Density1D::cauchy(1.0, 2.0).unwrap();
        assert!((c.pdf(1.0) - 1.0 / (2.0 * PI)).abs() < 1e-12);
        assert!((c.pdf(1.0) - 0.159_154_94).abs() < 1e-8);
    }

    #[test]
    fn cdf_examples() {
        assert!((Density1D::normal(4.0, 2.0).unwrap().cdf(4.0) - 0.5).abs() < 1e-15);
        assert!((Density1D::pareto(1.0, 1.0).unwrap().cdf(2.0) - 0.5).abs() < 1e-15);
        let m = Density1D::mixture1();
        assert_eq!(m.cdf(f64::INFINITY), 1.0);
        assert!((m.cdf(1e6) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_cdf_examples() {
        assert!(Density1D::normal(0.0, 1.0).unwrap().inverse_cdf(0.5).unwrap().abs() < 1e-14);
        assert!((Density1D::pareto(1.0, 1.0).unwrap().inverse_cdf(0.5).unwrap() - 2.0).abs() < 1e-14);
        let m3 = Density1D::mixture3();
        let x = m3.inverse_cdf(0.25).unwrap();
        assert!((m3.cdf(x) - 0.25).abs() <= 1e-10);
    }

    #[test]
    fn inverse_cdf_rejects_boundary() {
        let n = Density1D::normal(0.0, 1.0).unwrap();
        assert!(matches!(n.inverse_cdf(0.0), Err(Error::ProbabilityOutOfRange(_))));
        assert!(matches!(n.inverse_cdf(1.0), Err(Error::ProbabilityOutOfRange(_))));
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(Density1D::normal(0.0, 0.0).is_err());
        assert!(Density1D::uniform(1.0, 1.0).is_err());
        assert!(Density1D::cauchy(0.0, -1.0).is_err());
        assert!(Density1D::pareto(0.0, 1.0).is_err());
        assert!(Density1D::mixture(vec![0.5, 0.4], vec![Density1D::mixture1(), Density1D::mixture2()]).is_err());
        assert!(Density1D::mixture(vec![1.5, -0.5], vec![Density1D::mixture1(), Density1D::mixture2()]).is_err());
    }

    #[test]
    fn cdf_roundtrip_on_interior_points() {
        let mut rng = SeededRng::new(11, 0);
        for d in families() {
            for _ in 0..100 {
                let u: f64 = rng.random_range(0.001..0.999);
                let x = d.inverse_cdf(u).unwrap();
                assert!((d.cdf(x) - u).abs() <= 1e-10, "{d}: u={u}");
                let back = d.inverse_cdf(d.cdf(x)).unwrap();
                assert!(
                    (back - x).abs() <= 1e-8 * x.abs().max(1.0),
                    "{d}: x={x} back={back}"
                );
            }
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        // Substitution t = F(x) is avoided on purpose: integrate in x between
        // quantiles that bracket all but 2e-9 of the mass.
        for d in families() {
            let mut breaks = d
                .quantile_grid(&[1e-9, 1e-6, 1e-3, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 0.999, 1.0 - 1e-6, 1.0 - 1e-9])
                .unwrap();
            breaks.extend(d.breakpoints());
            breaks.sort_by(f64::total_cmp);
            breaks.dedup();
            let (lo, hi) = (breaks[0], *breaks.last().unwrap());
            let mass = integrate_vec(|x, out| out[0] = d.pdf(x), 1, &breaks, QuadOptions::default())
                .unwrap()[0];
            let outside = d.cdf(lo) + d.sf(hi);
            assert!((mass + outside - 1.0).abs() < 1e-6, "{d}: {mass}");
            assert!(outside <= 1e-8 + 1e-12);
        }
    }

    #[test]
    fn cdf_is_monotone_with_limits() {
        for d in families() {
            let mut prev = 0.0;
            for i in 0..=2000 {
                let x = -60.0 + 0.06 * i as f64;
                let c = d.cdf(x);
                assert!(c >= prev - 1e-15, "{d} not monotone at {x}");
                assert!(d.pdf(x) >= 0.0);
                prev = c;
            }
            assert!(d.cdf(-1e300) < 1e-12);
            assert!(d.cdf(1e300) > 1.0 - 1e-12);
        }
    }

    #[test]
    fn uniform_sample_mean_within_clt_band() {
        let d = Density1D::uniform(-2.0, 2.0).unwrap();
        let xs = d.sample(100_000, &mut SeededRng::new(3, 1));
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() <= 0.02, "{mean}");
    }

    #[test]
    fn sampling_is_reproducible() {
        for d in families() {
            let a = d.sample(500, &mut SeededRng::new(9, 2));
            let b = d.sample(500, &mut SeededRng::new(9, 2));
            assert_eq!(a, b);
        }
        let moon = Density2D::dual_moon();
        let a = moon.sample(1, &mut SeededRng::new(1, 1));
        assert_eq!(a.dim(), 2);
        assert_eq!(a.len(), 1);
        let b = moon.sample(1, &mut SeededRng::new(1, 1));
        assert_eq!(a, b);
    }

    #[test]
    fn mixture_weights_normalized() {
        let m = match Density1D::mixture2() {
            Density1D::Mixture(m) => m,
            _ => unreachable!(),
        };
        assert!((m.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn parse_and_render() {
        let cases = [
            "normal(4,2)",
            "mixture(0.5*normal(5,2), 0.5*normal(-1,1))",
            "pareto(1,1)",
            "cauchy(5,10)",
            "uniform(-2,2)",
            "dualmoon",
            "tworings(1,2)",
            "circle(8)",
            "product(normal(4,2), normal(0,1))",
            "gaussian2d(0.3,0,1,1)",
            "mixture3",
        ];
        for text in cases {
            let t: Target = text.parse().unwrap();
            let again: Target = t.to_string().parse().unwrap();
            assert_eq!(t, again, "{text}");
        }
        let m: Density1D = "mixture(normal(5,2), normal(-1,1))".parse().unwrap();
        assert_eq!(m, Density1D::mixture1());
        assert_eq!("tworings(1,2)".parse::<Density2D>().unwrap(), Density2D::two_rings(1.0, 2.0).unwrap());
    }

    #[test]
    fn parse_errors() {
        for bad in ["normal(1)", "normal(0,-1)", "bogus(1,2)", "mixture(0.5*normal(0,1), normal(1,1))", "normal(0,1) x", "dualmoon(", "circle(2.5)"] {
            assert!(bad.parse::<Target>().is_err(), "{bad}");
        }
        assert!("dualmoon".parse::<Density1D>().is_err());
    }

    #[test]
    fn mixture_assignment_picks_nearest_component() {
        let m = match Density1D::mixture3() {
            Density1D::Mixture(m) => m,
            _ => unreachable!(),
        };
        assert_eq!(m.assign(-5.0), 0);
        assert_eq!(m.assign(50.0), 1);
    }

    #[test]
    fn derivative_formulas_match_finite_differences() {
        for d in [Density1D::normal(0.5, 1.3).unwrap(), Density1D::cauchy(1.0, 2.0).unwrap(), Density1D::mixture1()] {
            for &x in &[-1.7, 0.2, 2.9] {
                let [p, d1, d2] = d.pdf_derivatives(x).unwrap();
                let h = 1e-4;
                let fd1 = (d.pdf(x + h) - d.pdf(x - h)) / (2.0 * h);
                let fd2 = (d.pdf(x + h) - 2.0 * p + d.pdf(x - h)) / (h * h);
                assert!((p - d.pdf(x)).abs() < 1e-15);
                assert!((d1 - fd1).abs() < 1e-8, "{d} {x}");
                assert!((d2 - fd2).abs() < 1e-5, "{d} {x}");
            }
        }
    }

    #[test]
    fn gaussian2d_projection_variance() {
        let g = Gaussian2D::isotropic([0.0, 0.0], 1.0).unwrap();
        let pts = Density2D::Gaussian(g.clone()).sample(20_000, &mut SeededRng::new(5, 5));
        let s = [0.6, 0.8];
        let proj: Vec<f64> = pts.rows().map(|r| s[0] * r[0] + s[1] * r[1]).collect();
        let mean = proj.iter().sum::<f64>() / proj.len() as f64;
        let var = proj.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (proj.len() - 1) as f64;
        // 3σ band for the sample variance of 2·10⁴ normals: 3·√(2/n)
        assert!((var - 1.0).abs() < 3.0 * (2.0 / 20_000f64).sqrt());
        assert_eq!(g.project(&s), Density1D::Normal { mu: 0.0, sigma: 1.0 });
    }
}
