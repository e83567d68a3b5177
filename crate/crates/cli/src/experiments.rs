//! Experiment runners. Each seed is an independent replica; replicas run on
//! a rayon pool and their rows are gathered in seed order.

use std::fs;
use std::path::{Path, PathBuf};

use isl_core::autodiff::Generator;
use isl_core::bernstein::DensityEstimator;
use isl_core::distributions::{Density1D, Density2D, Target};
use isl_core::metrics::{density_ks, percentile_box};
use isl_core::rank::PmfEstimator;
use isl_core::rng::SeededRng;
use isl_core::slicing::{ProjectionSet, SlicedDensityEstimator};
use isl_core::training::{
    sample_generator, sample_generator_1d, train_classical_isl, train_dual_isl, train_monotone_ot, train_sliced_dual_isl,
    TrainReport,
};
use rayon::prelude::*;

use crate::config::{Experiment, ExperimentConfig, Method};
use crate::error::{CliError, Result};
use crate::kde::Kde;
use crate::plot::{self, PlotKind};
use crate::props;

pub const RESULTS_HEADER: [&str; 6] = ["target", "method", "k", "seed", "metric", "value"];
pub const TRACE_HEADER: [&str; 3] = ["epoch", "loss", "wallclock_s"];
pub const THREADS_ENV: &str = "ISL_LAB_THREADS";

/// Half-width of the latent window on which transport maps are compared.
const MAP_WINDOW: f64 = 2.0;
const MAP_POINTS: usize = 401;

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub target: String,
    pub method: String,
    pub k: usize,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

/// Paths written by one run.
#[derive(Debug, Default)]
pub struct Summary {
    pub rows: Vec<Row>,
    pub files: Vec<PathBuf>,
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    seed: u64,
    files: Vec<PathBuf>,
    rows: Vec<Row>,
}

impl Ctx<'_> {
    fn row(&mut self, method: &str, metric: &str, value: f64) {
        self.rows.push(Row {
            target: self.cfg.target.clone(),
            method: method.to_string(),
            k: self.cfg.k,
            seed: self.seed,
            metric: metric.to_string(),
            value,
        });
    }

    fn report_rows(&mut self, method: &str, report: &TrainReport) {
        for (name, value) in &report.metrics {
            self.row(method, name, *value);
        }
        if report.learning_rate_halved {
            self.row(method, "learning_rate_halved", 1.0);
        }
    }

    fn path(&self, dir: &str, name: String) -> Result<PathBuf> {
        let dir = self.cfg.out.join(dir);
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(dir.join(name))
    }

    fn trace(&mut self, method: &str, report: &TrainReport, gen: &Generator) -> Result<()> {
        let path = self.path("traces", format!("{method}_seed{}.csv", self.seed))?;
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(TRACE_HEADER)?;
        for (i, (loss, t)) in report.loss_trace.iter().zip(&report.epoch_wallclock).enumerate() {
            w.write_record([(i + 1).to_string(), loss.to_string(), t.to_string()])?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        self.files.push(path.clone());
        if self.cfg.plots && !report.loss_trace.is_empty() {
            let svg = self.path("plots", format!("loss_{method}_seed{}.svg", self.seed))?;
            plot::emit_plot(&path, PlotKind::LossCurve, &svg, None)?;
            self.files.push(svg);
        }
        if self.cfg.checkpoints {
            let ck = self.path("checkpoints", format!("{method}_seed{}.json", self.seed))?;
            gen.save(&ck)?;
            self.files.push(ck);
        }
        Ok(())
    }

    fn density_csv(&mut self, name: String, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<PathBuf> {
        let path = self.path("densities", name)?;
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r.iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        self.files.push(path.clone());
        Ok(path)
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn bench1d(ctx: &mut Ctx, target: &Density1D) -> Result<()> {
    for &method in &ctx.cfg.methods {
        let tc = ctx.cfg.train_config(ctx.seed, method);
        let gen = Generator::mlp_1d(&mut SeededRng::named(ctx.seed, "init"));
        let (gen, report) = match method {
            Method::Classical => train_classical_isl(gen, target, &tc)?,
            _ => train_dual_isl(gen, target, &tc)?,
        };
        ctx.report_rows(method.name(), &report);
        ctx.trace(method.name(), &report, &gen)?;
    }
    Ok(())
}

fn timing(ctx: &mut Ctx, target: &Density1D) -> Result<()> {
    for &method in &ctx.cfg.methods {
        let tc = ctx.cfg.train_config(ctx.seed, method);
        let gen = Generator::mlp_1d(&mut SeededRng::named(ctx.seed, "init"));
        let (gen, report) = match method {
            Method::Classical => train_classical_isl(gen, target, &tc)?,
            _ => train_dual_isl(gen, target, &tc)?,
        };
        ctx.row(method.name(), "seconds_per_epoch", report.seconds_per_epoch());
        ctx.row(method.name(), "wallclock_s", report.wallclock_s);
        ctx.trace(method.name(), &report, &gen)?;
    }
    Ok(())
}

fn density1d(ctx: &mut Ctx, target: &Density1D) -> Result<()> {
    let cfg = ctx.cfg;
    let mut rng = SeededRng::named(ctx.seed, "density");
    let real = target.sample(cfg.density_samples, &mut rng);
    let lo = target.inverse_cdf(0.005)?;
    let hi = target.inverse_cdf(0.995)?;
    let xs = linspace(lo, hi, cfg.grid);
    for &method in &cfg.methods {
        let (estimate, ks): (Vec<f64>, f64) = match method {
            Method::Kde => {
                let kde = Kde::silverman(&real).ok_or_else(|| CliError::Config("empty density sample".into()))?;
                ctx.row(method.name(), "bandwidth", kde.bandwidth());
                (xs.iter().map(|&x| kde.eval(x)).collect(), density_ks(|x| kde.eval(x), target)?)
            }
            _ => {
                let tc = cfg.train_config(ctx.seed, method);
                let gen = Generator::mlp_1d(&mut SeededRng::named(ctx.seed, "init"));
                let (gen, report) = train_dual_isl(gen, target, &tc)?;
                ctx.report_rows(method.name(), &report);
                ctx.trace(method.name(), &report, &gen)?;
                let fake = sample_generator_1d(&gen, cfg.density_samples, &mut rng)?;
                let q = PmfEstimator::Binomial.estimate(&real, &fake, cfg.k, &mut rng)?;
                let est = DensityEstimator::new(q, &fake, cfg.delta)?;
                (est.eval_grid(&xs), density_ks(|x| est.eval(x), target)?)
            }
        };
        ctx.row(method.name(), "density_ks", ks);
        let rows = xs.iter().zip(&estimate).map(|(&x, &p)| vec![x, p]);
        let path = ctx.density_csv(format!("{}_seed{}.csv", method.name(), ctx.seed), &["x", "p_hat"], rows)?;
        if cfg.plots {
            let svg = ctx.path("plots", format!("density_{}_seed{}.svg", method.name(), ctx.seed))?;
            plot::emit_plot(&path, PlotKind::DensityOverlay, &svg, Some(target))?;
            ctx.files.push(svg);
        }
    }
    Ok(())
}

fn transport(ctx: &mut Ctx, target: &Density1D) -> Result<()> {
    let tc = ctx.cfg.train_config(ctx.seed, Method::Dual);
    let gen = Generator::mlp_ot(&mut SeededRng::named(ctx.seed, "init"));
    let (gen, report) = train_monotone_ot(gen, target, &tc)?;
    ctx.report_rows("dual", &report);
    let base = Density1D::normal(0.0, 1.0)?;
    let mut sup = 0.0f64;
    for z in linspace(-MAP_WINDOW, MAP_WINDOW, MAP_POINTS) {
        let ideal = target.inverse_cdf(base.cdf(z))?;
        sup = sup.max((gen.eval(&[z])?[0] - ideal).abs());
    }
    ctx.row("dual", "map_sup_error", sup);
    ctx.trace("dual", &report, &gen)
}

fn bench2d(ctx: &mut Ctx, target: &Density2D) -> Result<Generator> {
    let tc = ctx.cfg.train_config(ctx.seed, Method::Dual);
    let gen = Generator::mlp_2d(&mut SeededRng::named(ctx.seed, "init"));
    let (gen, report) = train_sliced_dual_isl(gen, target, &tc)?;
    ctx.report_rows("dual", &report);
    ctx.trace("dual", &report, &gen)?;
    Ok(gen)
}

fn density2d(ctx: &mut Ctx, target: &Density2D) -> Result<()> {
    let gen = bench2d(ctx, target)?;
    let cfg = ctx.cfg;
    let mut rng = SeededRng::named(ctx.seed, "density");
    let real = target.sample(cfg.density_samples, &mut rng);
    let fake = sample_generator(&gen, cfg.density_samples, &mut rng)?;
    let dirs = ProjectionSet::seeded(2, cfg.projections, ctx.seed)?;
    let est = SlicedDensityEstimator::fit(&real, &fake, dirs, cfg.k, cfg.delta, PmfEstimator::Binomial, &mut rng)?;
    let bbox = percentile_box(&real)?;
    let pad = |(lo, hi): (f64, f64)| (lo - 0.1 * (hi - lo), hi + 0.1 * (hi - lo));
    let (bx, by) = (pad(bbox[0]), pad(bbox[1]));
    let xs = linspace(bx.0, bx.1, cfg.grid);
    let ys = linspace(by.0, by.1, cfg.grid);
    let mut grid = Vec::with_capacity(cfg.grid * cfg.grid);
    let mut l1 = Some(0.0);
    let cell = (xs[1] - xs[0]) * (ys[1] - ys[0]);
    for &y in &ys {
        for &x in &xs {
            let p = est.eval(&[x, y]);
            l1 = match (l1, target.pdf(&[x, y])) {
                (Some(acc), Some(truth)) => Some(acc + (p - truth).abs() * cell),
                _ => None,
            };
            grid.push(vec![x, y, p]);
        }
    }
    if let Some(l1) = l1 {
        ctx.row("dual", "density_grid_l1", l1);
    }
    let path = ctx.density_csv(format!("dual_seed{}.csv", ctx.seed), &["x", "y", "p_hat"], grid.into_iter())?;
    if cfg.plots {
        let svg = ctx.path("plots", format!("contour_dual_seed{}.svg", ctx.seed))?;
        plot::emit_plot(&path, PlotKind::Contour, &svg, None)?;
        ctx.files.push(svg);
    }
    Ok(())
}

fn replica(cfg: &ExperimentConfig, target: &Target, seed: u64) -> Result<(Vec<Row>, Vec<PathBuf>)> {
    let mut ctx = Ctx {
        cfg,
        seed,
        files: Vec::new(),
        rows: Vec::new(),
    };
    match (cfg.experiment, target) {
        (Experiment::Bench1D, Target::Univariate(d)) => bench1d(&mut ctx, d)?,
        (Experiment::Timing, Target::Univariate(d)) => timing(&mut ctx, d)?,
        (Experiment::Density1D, Target::Univariate(d)) => density1d(&mut ctx, d)?,
        (Experiment::MonotoneOT, Target::Univariate(d)) => transport(&mut ctx, d)?,
        (Experiment::Bench2D, Target::Bivariate(d)) => {
            bench2d(&mut ctx, d)?;
        }
        (Experiment::Density2D, Target::Bivariate(d)) => density2d(&mut ctx, d)?,
        (e, _) => return Err(CliError::Config(format!("target has the wrong dimension for {}", e.name()))),
    }
    Ok((ctx.rows, ctx.files))
}

/// Worker count from `ISL_LAB_THREADS`, or `None` for the rayon default.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
    }
}

pub fn write_results(path: &Path, rows: &[Row]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.write_record([
            r.target.clone(),
            r.method.clone(),
            r.k.to_string(),
            r.seed.to_string(),
            r.metric.clone(),
            r.value.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn run(cfg: &ExperimentConfig) -> Result<Summary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    let config_path = cfg.out.join("config.txt");
    fs::write(&config_path, cfg.render()).map_err(|e| CliError::io(&config_path, e))?;
    let mut summary = Summary {
        files: vec![config_path],
        ..Summary::default()
    };
    if cfg.experiment == Experiment::Props {
        let outcome = props::run_suite();
        summary.rows = outcome.iter().map(props::Check::row).collect();
        let results = cfg.out.join("results.csv");
        write_results(&results, &summary.rows)?;
        summary.files.push(results);
        let failed: Vec<&str> = outcome.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        for c in &outcome {
            println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        if !failed.is_empty() {
            return Err(CliError::PropsFailed(failed.join(", ")));
        }
        return Ok(summary);
    }
    let target = cfg.parsed_target()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<(Vec<Row>, Vec<PathBuf>)>> =
        pool.install(|| cfg.seeds.par_iter().map(|&s| replica(cfg, &target, s)).collect());
    for o in outcomes {
        let (rows, files) = o?;
        summary.rows.extend(rows);
        summary.files.extend(files);
    }
    let results = cfg.out.join("results.csv");
    write_results(&results, &summary.rows)?;
    summary.files.push(results);
    Ok(summary)
}

/// Mean of every `(method, metric)` pair over seeds, in first-seen order.
pub fn means(rows: &[Row]) -> Vec<(String, String, f64)> {
    let mut out: Vec<(String, String, f64, usize)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(m, n, _, _)| *m == r.method && *n == r.metric) {
            Some(entry) => {
                entry.2 += r.value;
                entry.3 += 1;
            }
            None => out.push((r.method.clone(), r.metric.clone(), r.value, 1)),
        }
    }
    out.into_iter().map(|(m, n, s, c)| (m, n, s / c as f64)).collect()
}
