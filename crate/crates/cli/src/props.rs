//! Fast numerical property suite behind the `props` subcommand.

use isl_core::bernstein::{default_x_grid, density_limit_check, remark_bound_check, BernsteinBasis, DualBasis};
use isl_core::distributions::{Density1D, Gaussian2D};
use isl_core::quadrature::GaussLegendre;
use isl_core::rank::{discrepancy, empirical_pmf, exact_pmf, exact_pmf_t, exact_pmf_y};
use isl_core::rng::SeededRng;
use isl_core::slicing::{sliced_bound_check, ProjectionSet};

use crate::experiments::Row;

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Headline number written to the results file.
    pub value: f64,
    pub k: usize,
    pub detail: String,
}

impl Check {
    pub fn row(&self) -> Row {
        Row {
            target: "-".into(),
            method: "props".into(),
            k: self.k,
            seed: 0,
            metric: self.name.into(),
            value: self.value,
        }
    }
}

fn normal(mu: f64, sigma: f64) -> isl_core::Result<Density1D> {
    Density1D::normal(mu, sigma)
}

fn check(name: &'static str, k: usize, run: impl FnOnce() -> isl_core::Result<(bool, f64, String)>) -> Check {
    match run() {
        Ok((passed, value, detail)) => Check {
            name,
            passed,
            value,
            k,
            detail,
        },
        Err(e) => Check {
            name,
            passed: false,
            value: f64::NAN,
            k,
            detail: format!("error: {e}"),
        },
    }
}

pub fn run_suite() -> Vec<Check> {
    vec![
        check("uniformity", 10, || {
            let p = normal(0.0, 1.0)?;
            let mut rng = SeededRng::named(1, "props");
            let real = p.sample(100_000, &mut rng);
            let other = p.sample(100_000, &mut rng);
            let dev = empirical_pmf(&real, &other, 10, &mut rng)?
                .probs()
                .iter()
                .map(|q| (q - 1.0 / 11.0).abs())
                .fold(0.0, f64::max);
            let exact = discrepancy(&exact_pmf(&p, &p, 10)?);
            Ok((dev <= 0.01 && exact <= 1e-8, dev, format!("max deviation {dev:.5}, exact d_K {exact:.1e}")))
        }),
        check("convexity", 5, || {
            let (p1, p2, pt) = (normal(-0.5, 1.0)?, normal(1.0, 0.7)?, normal(0.0, 1.3)?);
            let mut worst = f64::INFINITY;
            for i in 1..10 {
                let lambda = i as f64 / 10.0;
                let mixed = Density1D::blend(lambda, p1.clone(), p2.clone())?;
                let bound = lambda * discrepancy(&exact_pmf(&p1, &pt, 5)?)
                    + (1.0 - lambda) * discrepancy(&exact_pmf(&p2, &pt, 5)?);
                worst = worst.min(bound - discrepancy(&exact_pmf(&mixed, &pt, 5)?));
            }
            Ok((worst >= -1e-9, worst, format!("minimum slack {worst:.2e}")))
        }),
        check("bernstein_identities", 15, || {
            let gl = GaussLegendre::new(40);
            let mut worst = 0.0f64;
            for k in 1..=15 {
                let basis = BernsteinBasis::new(k);
                let dual = DualBasis::new(k)?;
                for n in 0..=k {
                    worst = worst.max((gl.integrate(|t| basis.eval(n, t), 0.0, 1.0) - 1.0 / (k + 1) as f64).abs());
                    let bio = gl.integrate(|t| dual.eval(n, t) * basis.eval(n, t), 0.0, 1.0);
                    worst = worst.max((bio - 1.0).abs());
                }
                let s: f64 = dual.eval_all(0.37).iter().sum();
                worst = worst.max((s - (k + 1) as f64).abs());
            }
            Ok((worst <= 1e-7, worst, format!("max identity error {worst:.1e}")))
        }),
        check("two_routes", 8, || {
            let (p, pt) = (normal(0.3, 0.8)?, Density1D::mixture1());
            let a = exact_pmf_t(&p, &pt, 8)?;
            let b = exact_pmf_y(&p, &pt, 8)?;
            let gap = a.probs().iter().zip(b.probs()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            Ok((gap <= 1e-7, gap, format!("route gap {gap:.1e}")))
        }),
        check("density_limit", 15, || {
            let (p, pt) = (normal(0.5, 1.0)?, normal(0.0, 1.0)?);
            let grid = default_x_grid(&p, &pt, 1001)?;
            let errs = density_limit_check(&p, &pt, &[2, 5, 10, 15], &grid)?;
            let ok = errs.windows(2).all(|w| w[1] < w[0]);
            Ok((ok, errs[3], format!("sup errors {errs:.4?}")))
        }),
        check("remark_bound", 10, || {
            let (lhs, rhs) = remark_bound_check(&normal(0.2, 1.0)?, &normal(0.0, 1.1)?, 10)?;
            Ok((lhs <= rhs, rhs - lhs, format!("{lhs:.4} <= {rhs:.4}")))
        }),
        check("sliced_bound", 5, || {
            let p = Gaussian2D::isotropic([0.3, 0.0], 1.0)?;
            let pt = Gaussian2D::isotropic([0.0, 0.0], 1.0)?;
            let (lhs, rhs) = sliced_bound_check(&p, &pt, 5, &ProjectionSet::seeded(2, 16, 3)?)?;
            Ok((lhs <= rhs, rhs - lhs, format!("{lhs:.4} <= {rhs:.4}")))
        }),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for c in run_suite() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
            assert!(c.value.is_finite());
        }
    }
}
