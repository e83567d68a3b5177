//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line
//! and the process exits non-zero when any of them fails.

use std::time::Instant;

use isl_core::autodiff::{Activation, Generator, Tape, Var};
use isl_core::bernstein::{default_x_grid, density_limit_check, sup_deviation_bound_check, BernsteinBasis, DensityEstimator, DualBasis};
use isl_core::distributions::{Density1D, Density2D, Gaussian2D};
use isl_core::metrics::{density_ks, ks_against_cdf};
use isl_core::quadrature::GaussLegendre;
use isl_core::rank::{discrepancy, empirical_pmf_repeated, exact_pmf, exact_pmf_t, exact_pmf_y, PmfEstimator};
use isl_core::rng::SeededRng;
use isl_core::slicing::{sliced_bound_check, ProjectionSet};
use isl_core::surrogate::{classical_surrogate_loss, surrogate_loss, SurrogateConfig};
use isl_core::training::{
    sample_generator_1d, train_classical_isl, train_dual_isl, train_monotone_ot, train_sliced_dual_isl, Orientation, TrainConfig,
};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn normal(mu: f64, sigma: f64) -> Density1D {
    Density1D::normal(mu, sigma).unwrap()
}

/// A Gaussian or a two-component Gaussian mixture with random parameters.
fn random_density<R: Rng>(rng: &mut R) -> Density1D {
    if rng.random_bool(0.5) {
        normal(rng.random_range(-2.0..2.0), rng.random_range(0.5..2.0))
    } else {
        let w = rng.random_range(0.2..0.8);
        Density1D::mixture(
            vec![w, 1.0 - w],
            vec![
                normal(rng.random_range(-3.0..0.0), rng.random_range(0.5..1.5)),
                normal(rng.random_range(0.0..3.0), rng.random_range(0.5..1.5)),
            ],
        )
        .unwrap()
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn fmt(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

fn uniformity() -> Outcome {
    let p = normal(0.0, 1.0);
    let mut rng = SeededRng::named(1, "uniformity");
    let k = 10;
    let real = p.sample(100_000, &mut rng);
    let other = p.sample(100_000, &mut rng);
    let emp = empirical_pmf_repeated(&real, &other, k, 1, &mut rng).map_err(|e| e.to_string())?;
    let dev = emp.probs().iter().map(|q| (q - 1.0 / 11.0).abs()).fold(0.0, f64::max);
    let exact = discrepancy(&exact_pmf(&p, &p, k).map_err(|e| e.to_string())?);
    check(dev <= 0.01 && exact <= 1e-8, format!("max |Q̂ − 1/11| = {dev:.5}, exact d_K = {exact:.2e}"))
}

fn table1_benchmarks() -> Outcome {
    let mut gaussian = Vec::new();
    let mut mixture = Vec::new();
    let mut coverage = Vec::new();
    let mix = Density1D::mixture3();
    let Density1D::Mixture(parts) = &mix else {
        return Err("mixture preset is not a mixture".into());
    };
    for seed in 1..=3u64 {
        let cfg = TrainConfig {
            seed,
            generated_per_batch: Some(300),
            ..TrainConfig::default()
        };
        let g = Generator::mlp_1d(&mut SeededRng::named(seed, "init"));
        let (_, report) = train_dual_isl(g, &normal(4.0, 2.0), &cfg).map_err(|e| e.to_string())?;
        gaussian.push(report.metrics["ks"]);

        let g = Generator::mlp_1d(&mut SeededRng::named(seed, "init"));
        let (g, report) = train_dual_isl(g, &mix, &cfg).map_err(|e| e.to_string())?;
        mixture.push(report.metrics["ks"]);
        let xs = sample_generator_1d(&g, 10_000, &mut SeededRng::named(seed, "coverage")).map_err(|e| e.to_string())?;
        let first = xs.iter().filter(|&&x| parts.assign(x) == 0).count() as f64 / xs.len() as f64;
        coverage.push(first.min(1.0 - first));
    }
    let (mg, mm) = (mean(&gaussian), mean(&mixture));
    let covered = coverage.iter().all(|&c| c >= 0.2);
    check(
        mg <= 0.05 && mm <= 0.25 && covered,
        format!(
            "N(4,2) KS {} mean {mg:.4}; mixture3 KS {} mean {mm:.4}; smaller mode share {}",
            fmt(&gaussian),
            fmt(&mixture),
            fmt(&coverage)
        ),
    )
}

fn convexity() -> Outcome {
    let mut rng = SeededRng::named(3, "convexity");
    let mut worst = f64::INFINITY;
    for case in 0..100 {
        let p1 = random_density(&mut rng);
        let p2 = random_density(&mut rng);
        let pt = random_density(&mut rng);
        let lambda = rng.random_range(0.0..=1.0);
        let k = 1 + case % 10;
        let d1 = discrepancy(&exact_pmf(&p1, &pt, k).map_err(|e| e.to_string())?);
        let d2 = discrepancy(&exact_pmf(&p2, &pt, k).map_err(|e| e.to_string())?);
        let blend = Density1D::blend(lambda, p1, p2).map_err(|e| e.to_string())?;
        let dm = discrepancy(&exact_pmf(&blend, &pt, k).map_err(|e| e.to_string())?);
        worst = worst.min(lambda * d1 + (1.0 - lambda) * d2 - dm);
    }
    check(worst >= -1e-9, format!("minimum slack {worst:.3e} over 100 cases"))
}

fn uniform_bound() -> Outcome {
    let mut rng = SeededRng::named(4, "uniform-bound");
    let mut violations = 0;
    let mut checks = 0;
    let mut worst_ratio = 0.0f64;
    let mut cubic_violations = 0;
    for _ in 0..50 {
        let p = random_density(&mut rng);
        let pt = random_density(&mut rng);
        for k in 1..=10 {
            let (lhs, rhs) = sup_deviation_bound_check(&p, &pt, k).map_err(|e| e.to_string())?;
            checks += 1;
            if lhs > rhs + 1e-8 {
                violations += 1;
                worst_ratio = worst_ratio.max(lhs / rhs);
            }
            // Informational: the same bound with one more factor of K+1.
            if lhs > rhs * (k + 1) as f64 + 1e-8 {
                cubic_violations += 1;
            }
        }
    }
    check(
        violations == 0,
        format!(
            "{violations} of {checks} (pair, K) cases exceed (K+1)²·d_K; worst lhs/rhs {worst_ratio:.3}; \
             (K+1)³·d_K exceeded in {cubic_violations} cases"
        ),
    )
}

fn bernstein_identities() -> Outcome {
    let gl = GaussLegendre::new(40);
    let (mut unity, mut integral, mut dual_sum, mut bio, mut rows) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let ts: Vec<f64> = (0..=200).map(|i| i as f64 / 200.0).collect();
    for k in 1..=15 {
        let basis = BernsteinBasis::new(k);
        let dual = DualBasis::new(k).map_err(|e| e.to_string())?;
        for &t in &ts {
            let s: f64 = (0..=k).map(|n| basis.eval(n, t)).sum();
            unity = unity.max((s - 1.0).abs());
            let d: f64 = dual.eval_all(t).iter().sum();
            dual_sum = dual_sum.max((d - (k + 1) as f64).abs());
        }
        for n in 0..=k {
            let v = gl.integrate(|t| basis.eval(n, t), 0.0, 1.0);
            integral = integral.max((v - 1.0 / (k + 1) as f64).abs());
            for m in 0..=k {
                let v = gl.integrate(|t| dual.eval(m, t) * basis.eval(n, t), 0.0, 1.0);
                let target = if m == n { 1.0 } else { 0.0 };
                bio = bio.max((v - target).abs());
            }
        }
        for r in dual.inverse_row_sums() {
            rows = rows.max((r - (k + 1) as f64).abs());
        }
    }
    check(
        unity <= 1e-12 && integral <= 1e-9 && dual_sum <= 1e-7 && bio <= 1e-7 && rows <= 1e-6,
        format!(
            "unity {unity:.1e}, integral {integral:.1e}, dual sum {dual_sum:.1e}, biorthogonality {bio:.1e}, row sums {rows:.1e}"
        ),
    )
}

/// Mass of `p` outside the `[1e-13, 1 − 1e-13]` quantile range of `ptilde`,
/// which the `t`-form cannot reach in double precision.
fn unreachable_mass(p: &Density1D, ptilde: &Density1D) -> f64 {
    let lo = ptilde.inverse_cdf(1e-13).unwrap();
    let hi = ptilde.inverse_cdf(1.0 - 1e-13).unwrap();
    p.cdf(lo) + p.sf(hi)
}

fn two_routes() -> Outcome {
    let mut rng = SeededRng::named(6, "routes");
    let mut worst = 0.0f64;
    let mut pairs = 0;
    let mut skipped = 0;
    while pairs < 20 {
        let p = random_density(&mut rng);
        let pt = random_density(&mut rng);
        let k = rng.random_range(1..=15);
        if unreachable_mass(&p, &pt) > 1e-12 {
            skipped += 1;
            continue;
        }
        pairs += 1;
        let a = exact_pmf_t(&p, &pt, k).map_err(|e| e.to_string())?;
        let b = exact_pmf_y(&p, &pt, k).map_err(|e| e.to_string())?;
        for (x, y) in a.probs().iter().zip(b.probs()) {
            worst = worst.max((x - y).abs());
        }
    }
    check(
        worst <= 1e-7,
        format!("max route disagreement {worst:.2e} over 20 pairs ({skipped} draws with unreachable tail mass redrawn)"),
    )
}

fn loss_on(gen: &Generator, latents: &[f64], reals: &[f64], k: usize, classical: bool) -> (f64, Vec<f64>) {
    let mut tape = Tape::new();
    let bound = gen.bind(&mut tape);
    let outs: Vec<Var> = latents.iter().map(|&z| gen.forward(&bound, &[z], &mut tape).unwrap()[0]).collect();
    let cfg = SurrogateConfig::new(0.3, 0.5).unwrap();
    let loss = if classical {
        classical_surrogate_loss(&mut tape, reals, &outs, k, &cfg).unwrap()
    } else {
        surrogate_loss(&mut tape, &outs, reals, k, &cfg).unwrap()
    };
    (tape.value(loss), tape.backward(loss).collect(bound.vars()))
}

fn gradient_correctness() -> Outcome {
    let mut rng = SeededRng::named(7, "gradients");
    let mut worst = 0.0f64;
    for net in 0..50 {
        let width = rng.random_range(2..=6);
        let depth = rng.random_range(1..=3);
        let mut sizes = vec![1];
        sizes.extend(std::iter::repeat_n(width, depth));
        sizes.push(1);
        let act = if net % 2 == 0 { Activation::Tanh } else { Activation::Elu };
        let gen = Generator::new(&sizes, act, &mut rng).map_err(|e| e.to_string())?;
        let k = rng.random_range(2..=6);
        let classical = net % 5 == 4;
        let (n_latent, n_real) = if classical { (3 * k, 3) } else { (6, 6 * k) };
        let latents: Vec<f64> = (0..n_latent).map(|_| StandardNormal.sample(&mut rng)).collect();
        let reals: Vec<f64> = (0..n_real).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (_, grad) = loss_on(&gen, &latents, &reals, k, classical);
        let params = gen.params();
        let h = 1e-5;
        for i in 0..params.len() {
            let mut shifted = gen.clone();
            let mut p = params.clone();
            p[i] += h;
            shifted.set_params(&p).unwrap();
            let up = loss_on(&shifted, &latents, &reals, k, classical).0;
            p[i] -= 2.0 * h;
            shifted.set_params(&p).unwrap();
            let down = loss_on(&shifted, &latents, &reals, k, classical).0;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((grad[i] - fd).abs() / fd.abs().max(grad[i].abs()).max(1e-3));
        }
    }
    check(worst <= 1e-4, format!("max relative error {worst:.2e} over 50 networks"))
}

fn density_estimation() -> Outcome {
    let mut results = Vec::new();
    for (name, target) in [("cauchy(1,2)", Density1D::cauchy(1.0, 2.0).unwrap()), ("mixture2", Density1D::mixture2())] {
        let mut ks = Vec::new();
        let mut hard = Vec::new();
        for seed in 1..=3u64 {
            let cfg = TrainConfig {
                seed,
                epochs: 300,
                n_real: 10_000,
                generated_per_batch: Some(300),
                eval_samples: 0,
                ..TrainConfig::default()
            };
            let g = Generator::mlp_1d(&mut SeededRng::named(seed, "init"));
            let (g, _) = train_dual_isl(g, &target, &cfg).map_err(|e| e.to_string())?;
            let mut rng = SeededRng::named(seed, "density");
            let fake = sample_generator_1d(&g, 100_000, &mut rng).map_err(|e| e.to_string())?;
            let real = target.sample(100_000, &mut rng);
            let mut per_estimator = [0.0; 2];
            for (slot, estimator) in per_estimator.iter_mut().zip([PmfEstimator::Binomial, PmfEstimator::HardCounts]) {
                let q = estimator.estimate(&real, &fake, 10, &mut rng).map_err(|e| e.to_string())?;
                let est = DensityEstimator::new(q, &fake, 0.1).map_err(|e| e.to_string())?;
                *slot = density_ks(|x| est.eval(x), &target).map_err(|e| e.to_string())?;
            }
            ks.push(per_estimator[0]);
            hard.push(per_estimator[1]);
        }
        results.push((name, ks, hard));
    }
    let ok = results.iter().all(|(_, ks, _)| mean(ks) <= 0.05);
    let detail: Vec<String> = results
        .iter()
        .map(|(n, ks, hard)| format!("{n} KS {} mean {:.4} (hard counts {})", fmt(ks), mean(ks), fmt(hard)))
        .collect();
    check(ok, detail.join("; "))
}

fn density_limit() -> Outcome {
    let p = normal(0.5, 1.0);
    let pt = normal(0.0, 1.0);
    let grid = default_x_grid(&p, &pt, 2001).map_err(|e| e.to_string())?;
    let errs = density_limit_check(&p, &pt, &[2, 5, 10, 15], &grid).map_err(|e| e.to_string())?;
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    check(decreasing, format!("sup-errors for K = 2, 5, 10, 15: {}", fmt(&errs)))
}

fn monotone_transport() -> Outcome {
    let target = normal(4.0, 2.0);
    let base = normal(0.0, 1.0);
    let mut sups = Vec::new();
    let mut penalties = Vec::new();
    for seed in 1..=3u64 {
        let mut cfg = TrainConfig {
            seed,
            k: 40,
            epochs: 300,
            n_real: 10_000,
            generated_per_batch: Some(300),
            monotonicity_lambda: 100.0,
            final_lr_fraction: 0.01,
            eval_samples: 0,
            ..TrainConfig::default()
        };
        cfg.surrogate.onehot_bandwidth = 0.3;
        let g = Generator::mlp_ot(&mut SeededRng::named(seed, "init"));
        let (g, report) = train_monotone_ot(g, &target, &cfg).map_err(|e| e.to_string())?;
        let mut sup = 0.0f64;
        for i in 0..=400 {
            let z = -2.0 + 4.0 * i as f64 / 400.0;
            let ideal = target.inverse_cdf(base.cdf(z)).map_err(|e| e.to_string())?;
            sup = sup.max((g.eval(&[z]).map_err(|e| e.to_string())?[0] - ideal).abs());
        }
        sups.push(sup);
        penalties.push(report.metrics["penalty"]);
    }
    let cauchy = Density1D::cauchy(5.0, 10.0).unwrap();
    let mut ks = Vec::new();
    for seed in 1..=2u64 {
        let mut cfg = TrainConfig {
            seed,
            epochs: 300,
            n_real: 10_000,
            generated_per_batch: Some(300),
            monotonicity_lambda: 100.0,
            final_lr_fraction: 0.01,
            ..TrainConfig::default()
        };
        cfg.surrogate.onehot_bandwidth = 0.3;
        let g = Generator::mlp_ot(&mut SeededRng::named(seed, "init"));
        let (g, _) = train_monotone_ot(g, &cauchy, &cfg).map_err(|e| e.to_string())?;
        let xs = sample_generator_1d(&g, 10_000, &mut SeededRng::named(seed, "ot-eval")).map_err(|e| e.to_string())?;
        ks.push(ks_against_cdf(&xs, |x| cauchy.cdf(x)).map_err(|e| e.to_string())?);
    }
    let max_pen = penalties.iter().copied().fold(0.0, f64::max);
    check(
        mean(&sups) <= 0.2 && max_pen <= 1e-3 && mean(&ks) <= 0.12,
        format!(
            "map sup-error {} mean {:.4}; penalty max {max_pen:.2e}; cauchy(5,10) KS {} mean {:.4}",
            fmt(&sups),
            mean(&sups),
            fmt(&ks),
            mean(&ks)
        ),
    )
}

fn sliced_dual_moon() -> Outcome {
    let target = Density2D::dual_moon();
    let mut kls = Vec::new();
    for seed in 1..=3u64 {
        let cfg = TrainConfig {
            seed,
            learning_rate: 3e-3,
            eval_samples: 100_000,
            ..TrainConfig::default()
        };
        let g = Generator::mlp_2d(&mut SeededRng::named(seed, "init"));
        let (_, report) = train_sliced_dual_isl(g, &target, &cfg).map_err(|e| e.to_string())?;
        kls.push(report.metrics["grid_kl"]);
    }
    check(mean(&kls) <= 1.0, format!("grid KL {} mean {:.4}", fmt(&kls), mean(&kls)))
}

fn sliced_bound() -> Outcome {
    let origin = Gaussian2D::isotropic([0.0, 0.0], 1.0).unwrap();
    let pairs = [
        (Gaussian2D::isotropic([0.3, 0.0], 1.0).unwrap(), origin.clone()),
        (Gaussian2D::new([0.2, -0.1], [[1.2, 0.0], [0.0, 0.9]]).unwrap(), origin.clone()),
        (Gaussian2D::new([0.1, 0.1], [[1.0, 0.3], [0.3, 1.0]]).unwrap(), Gaussian2D::new([0.0, 0.0], [[1.1, 0.2], [0.2, 1.0]]).unwrap()),
    ];
    let dirs = ProjectionSet::seeded(2, 16, 12).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    let mut ok = true;
    for (p, pt) in &pairs {
        for k in [2, 5, 10] {
            let (lhs, rhs) = sliced_bound_check(p, pt, k, &dirs).map_err(|e| e.to_string())?;
            ok &= lhs <= rhs;
            lines.push(format!("K={k} {lhs:.4}≤{rhs:.4}"));
        }
    }
    check(ok, lines.join(", "))
}

fn timing_order() -> Outcome {
    let target = normal(4.0, 2.0);
    let cfg = TrainConfig {
        epochs: 3,
        eval_samples: 0,
        ..TrainConfig::default()
    };
    let classical_cfg = TrainConfig {
        orientation: Orientation::Classical,
        ..cfg.clone()
    };
    let g = Generator::mlp_1d(&mut SeededRng::named(0, "init"));
    let (_, dual) = train_dual_isl(g.clone(), &target, &cfg).map_err(|e| e.to_string())?;
    let (_, classical) = train_classical_isl(g, &target, &classical_cfg).map_err(|e| e.to_string())?;
    let (a, b) = (dual.seconds_per_epoch(), classical.seconds_per_epoch());
    check(a < b, format!("dual {a:.4} s/epoch, classical {b:.4} s/epoch"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("uniformity of the rank statistic", uniformity),
        ("1D benchmarks N(4,2) and mixture3", table1_benchmarks),
        ("convexity of d_K", convexity),
        ("uniform bound (K+1)^2 d_K", uniform_bound),
        ("Bernstein identities", bernstein_identities),
        ("two-route rank pmf", two_routes),
        ("gradient correctness", gradient_correctness),
        ("density estimation", density_estimation),
        ("explicit density limit", density_limit),
        ("monotone transport", monotone_transport),
        ("sliced DualMoon", sliced_dual_moon),
        ("sliced bound", sliced_bound),
        ("timing order", timing_order),
    ];
    // ACCEPTANCE_ONLY=2,10 restricts the run to the listed criteria.
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} ({secs:.1}s)", i + 1),
            Err(detail) => {
                println!("FAIL {:>2} {name}: {detail} ({secs:.1}s)", i + 1);
                failed.push(i + 1);
            }
        }
    }
    if failed.is_empty() {
        println!("all selected criteria passed");
    } else {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
