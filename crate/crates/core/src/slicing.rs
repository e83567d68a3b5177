//! Random projections, the sliced discrepancy and sliced density estimates.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::bernstein::{interior_grid, DensityEstimator, SUP_GRID};
use crate::distributions::{Gaussian2D, PointCloud};
use crate::error::{Error, Result};
use crate::rank::{empirical_pmf, exact_pmf, PmfEstimator};
use crate::rng::SeededRng;

/// Unit directions in `ℝ^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionSet {
    dim: usize,
    directions: Vec<Vec<f64>>,
    seed: Option<u64>,
}

fn normalize(v: &mut [f64]) -> Result<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidParameter("direction must be nonzero and finite".into()));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(())
}

impl ProjectionSet {
    /// `count` directions uniform on the sphere (normalized Gaussian vectors).
    pub fn random<R: Rng + ?Sized>(dim: usize, count: usize, rng: &mut R) -> Result<Self> {
        if dim == 0 || count == 0 {
            return Err(Error::InvalidParameter("need dim ≥ 1 and at least one direction".into()));
        }
        let mut directions = Vec::with_capacity(count);
        while directions.len() < count {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            if normalize(&mut v).is_ok() {
                directions.push(v);
            }
        }
        Ok(Self { dim, directions, seed: None })
    }

    pub fn seeded(dim: usize, count: usize, seed: u64) -> Result<Self> {
        let mut rng = SeededRng::named(seed, "projections");
        let mut set = Self::random(dim, count, &mut rng)?;
        set.seed = Some(seed);
        Ok(set)
    }

    /// Normalizes the supplied vectors.
    pub fn fixed(directions: Vec<Vec<f64>>) -> Result<Self> {
        let dim = directions.first().map(Vec::len).ok_or(Error::EmptyInput)?;
        let mut out = Vec::with_capacity(directions.len());
        for mut d in directions {
            if d.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: d.len() });
            }
            normalize(&mut d)?;
            out.push(d);
        }
        Ok(Self { dim, directions: out, seed: None })
    }

    pub fn axis(dim: usize, axis: usize) -> Result<Self> {
        if axis >= dim {
            return Err(Error::DimensionMismatch { expected: dim, got: axis });
        }
        let mut e = vec![0.0; dim];
        e[axis] = 1.0;
        Self::fixed(vec![e])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }
}

/// `sᵀx` for every row.
pub fn project(samples: &PointCloud, direction: &[f64]) -> Result<Vec<f64>> {
    if samples.dim() != direction.len() {
        return Err(Error::DimensionMismatch {
            expected: samples.dim(),
            got: direction.len(),
        });
    }
    Ok(samples
        .rows()
        .map(|r| r.iter().zip(direction).map(|(a, b)| a * b).sum())
        .collect())
}

/// Mean over the directions of `d_K` between projected samples, with real
/// points as probes against `K`-subsets of generated points.
pub fn sliced_discrepancy_with(
    real: &PointCloud,
    generated: &PointCloud,
    k: usize,
    directions: &ProjectionSet,
    rng: &mut SeededRng,
) -> Result<f64> {
    if directions.is_empty() {
        return Err(Error::InvalidParameter("need at least one direction".into()));
    }
    let mut total = 0.0;
    for s in directions.directions() {
        let a = project(real, s)?;
        let b = project(generated, s)?;
        total += empirical_pmf(&a, &b, k, rng)?.discrepancy();
    }
    Ok(total / directions.len() as f64)
}

/// [`sliced_discrepancy_with`] on `l` fresh directions derived from `seed`.
pub fn sliced_discrepancy(real: &PointCloud, generated: &PointCloud, k: usize, l: usize, seed: u64) -> Result<f64> {
    let dirs = ProjectionSet::seeded(real.dim(), l, seed)?;
    let mut rng = SeededRng::named(seed, "subsets");
    sliced_discrepancy_with(real, generated, k, &dirs, &mut rng)
}

/// `p̂(x) = (1/m) Σ_ℓ p̂_ℓ(s_ℓᵀx)` from per-direction 1D estimators.
#[derive(Clone, Debug)]
pub struct SlicedDensityEstimator {
    directions: ProjectionSet,
    slices: Vec<DensityEstimator>,
}

impl SlicedDensityEstimator {
    pub fn new(directions: ProjectionSet, slices: Vec<DensityEstimator>) -> Result<Self> {
        if directions.len() != slices.len() || slices.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: directions.len(),
                got: slices.len(),
            });
        }
        Ok(Self { directions, slices })
    }

    /// Per direction: `Q̂_K` from real probes against the projected generated
    /// points, which also serve as the reference sample.
    pub fn fit(
        real: &PointCloud,
        generated: &PointCloud,
        directions: ProjectionSet,
        k: usize,
        delta: f64,
        estimator: PmfEstimator,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let mut slices = Vec::with_capacity(directions.len());
        for s in directions.directions() {
            let a = project(real, s)?;
            let b = project(generated, s)?;
            let pmf = estimator.estimate(&a, &b, k, rng)?;
            slices.push(DensityEstimator::new(pmf, &b, delta)?);
        }
        Self::new(directions, slices)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let total: f64 = self
            .directions
            .directions()
            .iter()
            .zip(&self.slices)
            .map(|(s, est)| est.eval(s.iter().zip(x).map(|(a, b)| a * b).sum()))
            .sum();
        total / self.slices.len() as f64
    }

    pub fn directions(&self) -> &ProjectionSet {
        &self.directions
    }
}

/// Per-axis grid resolution for the Hessian estimate.
const HESSIAN_GRID: usize = 99;

/// Sup of the operator norm of the Hessian of `(t₁,t₂) ↦ q(F̃₁⁻¹(t₁), F̃₂⁻¹(t₂))`
/// over an interior grid, by central differences. `F̃ᵢ` are the marginal
/// cdfs of `ptilde`.
pub fn ratio_hessian_sup(p: &Gaussian2D, ptilde: &Gaussian2D) -> Result<f64> {
    let m0 = ptilde.marginal(0);
    let m1 = ptilde.marginal(1);
    let q = |t0: f64, t1: f64| -> Result<f64> {
        let x = [m0.inverse_cdf(t0)?, m1.inverse_cdf(t1)?];
        Ok((p.ln_pdf(&x) - ptilde.ln_pdf(&x)).exp())
    };
    let h = 1e-5;
    let mut sup = 0.0f64;
    for t0 in interior_grid(HESSIAN_GRID) {
        for t1 in interior_grid(HESSIAN_GRID) {
            let c = q(t0, t1)?;
            let a = (q(t0 + h, t1)? - 2.0 * c + q(t0 - h, t1)?) / (h * h);
            let d = (q(t0, t1 + h)? - 2.0 * c + q(t0, t1 - h)?) / (h * h);
            let b = (q(t0 + h, t1 + h)? - q(t0 + h, t1 - h)? - q(t0 - h, t1 + h)? + q(t0 - h, t1 - h)?) / (4.0 * h * h);
            // Largest |eigenvalue| of [[a, b], [b, d]].
            let mean = 0.5 * (a + d);
            let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
            sup = sup.max((mean + rad).abs()).max((mean - rad).abs());
        }
    }
    Ok(sup)
}

/// `(lhs, rhs)` with `lhs = max_s sup_t |q̃ˢ(t) − 1|` for the projected
/// ratios on the interior grid and
/// `rhs = (K+1)² max_s d_K(s#p, s#p̃) + ‖∇²q‖∞/(8K)`.
pub fn sliced_bound_check(p: &Gaussian2D, ptilde: &Gaussian2D, k: usize, directions: &ProjectionSet) -> Result<(f64, f64)> {
    if directions.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: directions.dim() });
    }
    let grid = interior_grid(SUP_GRID);
    let mut lhs = 0.0f64;
    let mut max_dk = 0.0f64;
    for s in directions.directions() {
        let ps = p.project(s);
        let pts = ptilde.project(s);
        max_dk = max_dk.max(exact_pmf(&ps, &pts, k)?.discrepancy());
        for &t in &grid {
            let x = pts.inverse_cdf(t)?;
            let q = (ps.ln_pdf(x) - pts.ln_pdf(x)).exp();
            lhs = lhs.max((q - 1.0).abs());
        }
    }
    let rhs = ((k + 1) * (k + 1)) as f64 * max_dk + ratio_hessian_sup(p, ptilde)? / (8.0 * k as f64);
    Ok((lhs, rhs))
}
