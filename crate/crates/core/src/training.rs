//! Training loops: dual-ISL, classical ISL, sliced dual-ISL with random
//! projections, and dual-ISL with a monotonicity penalty for transport maps.
//!
//! Randomness is split into named streams derived from `TrainConfig::seed`:
//! `sampling` (the real dataset), `shuffle` (minibatch order), `noise`
//! (latents), `subsets` (K-subset draws), `projections` and `evaluation`.
//! Generator initialization is left to the caller, conventionally on the
//! `init` stream.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{BoundParams, Generator, Optimizer, OptimizerKind, Tape, Var};
use crate::distributions::{Density1D, Density2D, PointCloud};
use crate::error::{Error, Result};
use crate::metrics::{accdf_error, grid_kl, ks_against_cdf, KL_BINS};
use crate::rng::SeededRng;
use crate::slicing::ProjectionSet;
use crate::surrogate::{classical_surrogate_loss, surrogate_loss_with_plan, SubsetPlan, SurrogateConfig};

/// Which distribution supplies the probe.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Orientation {
    /// Generated probe against K real points.
    #[default]
    Dual,
    /// Real probe against K generated points.
    Classical,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub k: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub orientation: Orientation,
    /// Number of random directions per minibatch (sliced training only).
    pub projections: usize,
    /// Weight of the monotonicity penalty (transport training only).
    pub monotonicity_lambda: f64,
    pub seed: u64,
    /// Size of the real dataset drawn once from the target.
    pub n_real: usize,
    /// Generated probes per minibatch; `None` means `⌊batch/k⌋`.
    pub generated_per_batch: Option<usize>,
    /// One generated point per minibatch.
    pub strict_alg1: bool,
    pub surrogate: SurrogateConfig,
    pub optimizer: OptimizerKind,
    pub grad_clip: Option<f64>,
    pub subset_plan: SubsetPlan,
    /// Replaces the per-minibatch random directions of sliced training.
    pub fixed_directions: Option<Vec<Vec<f64>>>,
    /// Sample size for the final metrics.
    pub eval_samples: usize,
    /// Relative sigmoid temperature at the first epoch. It decays
    /// geometrically to `surrogate.sigmoid_temperature`, reached after
    /// `anneal_fraction` of the epochs and held afterwards.
    pub anneal_from: Option<f64>,
    pub anneal_fraction: f64,
    /// Learning rate at the last epoch as a fraction of `learning_rate`,
    /// reached by geometric decay. 1 keeps the rate constant.
    pub final_lr_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 10,
            epochs: 1000,
            batch_size: 1000,
            learning_rate: 1e-2,
            orientation: Orientation::Dual,
            projections: 10,
            monotonicity_lambda: 1.0,
            seed: 0,
            n_real: 1000,
            generated_per_batch: None,
            strict_alg1: false,
            surrogate: SurrogateConfig::default(),
            optimizer: OptimizerKind::adam(),
            grad_clip: None,
            subset_plan: SubsetPlan::default(),
            fixed_directions: None,
            eval_samples: 10_000,
            anneal_from: Some(0.5),
            anneal_fraction: 0.5,
            final_lr_fraction: 1.0,
        }
    }
}

impl TrainConfig {
    /// Checks the numeric invariants. Zero epochs is accepted and trains
    /// nothing.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if self.batch_size < self.k {
            return Err(Error::InsufficientSamples {
                needed: self.k,
                got: self.batch_size,
            });
        }
        if self.n_real < self.batch_size {
            return Err(Error::InsufficientSamples {
                needed: self.batch_size,
                got: self.n_real,
            });
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.monotonicity_lambda >= 0.0 && self.monotonicity_lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "monotonicity weight must be ≥ 0, got {}",
                self.monotonicity_lambda
            )));
        }
        if self.generated_per_batch == Some(0) {
            return Err(Error::InvalidParameter("generated_per_batch must be positive".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::InvalidParameter(format!("gradient clip must be positive, got {c}")));
            }
        }
        if let Some(t) = self.anneal_from {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidParameter(format!("annealing start temperature must be positive, got {t}")));
            }
        }
        if !(self.anneal_fraction > 0.0 && self.anneal_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "anneal fraction must lie in (0, 1], got {}",
                self.anneal_fraction
            )));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "final learning-rate fraction must lie in (0, 1], got {}",
                self.final_lr_fraction
            )));
        }
        self.surrogate.validate()
    }

    /// Learning-rate multiplier for `epoch`.
    pub fn lr_factor(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return 1.0;
        }
        self.final_lr_fraction.powf(epoch as f64 / (self.epochs - 1) as f64)
    }

    /// Surrogate kernel in force during `epoch`.
    pub fn surrogate_at(&self, epoch: usize) -> SurrogateConfig {
        let mut out = self.surrogate;
        if let Some(start) = self.anneal_from {
            let span = (self.anneal_fraction * self.epochs as f64).max(1.0);
            let f = (epoch as f64 / span).min(1.0);
            out.sigmoid_temperature = start * (self.surrogate.sigmoid_temperature / start).powf(f);
        }
        out
    }

    /// Generated probes drawn for a minibatch of `batch` reals.
    pub fn probes_per_batch(&self, batch: usize) -> usize {
        if self.strict_alg1 {
            1
        } else {
            self.generated_per_batch.unwrap_or(batch / self.k).max(1)
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Mean minibatch loss per epoch.
    pub loss_trace: Vec<f64>,
    /// Seconds since the start of training at the end of each epoch.
    pub epoch_wallclock: Vec<f64>,
    pub metrics: BTreeMap<String, f64>,
    pub wallclock_s: f64,
    /// Set when a non-finite loss forced a restart with half the step size.
    pub learning_rate_halved: bool,
}

impl TrainReport {
    /// Mean seconds per epoch (0 for an empty run).
    pub fn seconds_per_epoch(&self) -> f64 {
        if self.loss_trace.is_empty() {
            0.0
        } else {
            self.wallclock_s / self.loss_trace.len() as f64
        }
    }
}

struct Streams {
    shuffle: SeededRng,
    noise: SeededRng,
    subsets: SeededRng,
    projections: SeededRng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        Self {
            shuffle: SeededRng::named(seed, "shuffle"),
            noise: SeededRng::named(seed, "noise"),
            subsets: SeededRng::named(seed, "subsets"),
            projections: SeededRng::named(seed, "projections"),
        }
    }
}

struct Batch<'a> {
    indices: &'a [usize],
    surrogate: SurrogateConfig,
}

enum EpochError {
    NonFinite(String),
    Fatal(Error),
}

impl From<Error> for EpochError {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFiniteGradient(i) => Self::NonFinite(format!("non-finite gradient at parameter {i}")),
            other => Self::Fatal(other),
        }
    }
}

fn run_loop<F>(mut gen: Generator, cfg: &TrainConfig, mut batch_loss: F) -> Result<(Generator, TrainReport)>
where
    F: FnMut(&Generator, &BoundParams, &mut Tape, Batch<'_>, &mut Streams) -> Result<Var>,
{
    cfg.validate()?;
    let start = Instant::now();
    let mut report = TrainReport::default();
    let mut streams = Streams::new(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, gen.num_params())?.with_clip(cfg.grad_clip);
    let mut order: Vec<usize> = (0..cfg.n_real).collect();
    let mut tape = Tape::new();
    let mut base_lr = cfg.learning_rate;

    for epoch in 0..cfg.epochs {
        opt.set_learning_rate(base_lr * cfg.lr_factor(epoch));
        let saved_params = gen.params();
        let saved_opt = opt.clone();
        loop {
            match run_epoch(&mut gen, &mut opt, cfg, epoch, &mut order, &mut tape, &mut streams, &mut batch_loss) {
                Ok(loss) => {
                    report.loss_trace.push(loss);
                    break;
                }
                Err(EpochError::Fatal(e)) => return Err(e),
                Err(EpochError::NonFinite(reason)) => {
                    if report.learning_rate_halved {
                        return Err(Error::Diverged { epoch, reason });
                    }
                    gen.set_params(&saved_params)?;
                    opt = saved_opt.clone();
                    base_lr *= 0.5;
                    opt.set_learning_rate(base_lr * cfg.lr_factor(epoch));
                    report.learning_rate_halved = true;
                }
            }
        }
        report.epoch_wallclock.push(start.elapsed().as_secs_f64());
    }
    report.wallclock_s = start.elapsed().as_secs_f64();
    Ok((gen, report))
}

fn run_epoch<F>(
    gen: &mut Generator,
    opt: &mut Optimizer,
    cfg: &TrainConfig,
    epoch: usize,
    order: &mut [usize],
    tape: &mut Tape,
    streams: &mut Streams,
    batch_loss: &mut F,
) -> std::result::Result<f64, EpochError>
where
    F: FnMut(&Generator, &BoundParams, &mut Tape, Batch<'_>, &mut Streams) -> Result<Var>,
{
    order.shuffle(&mut streams.shuffle);
    let mut total = 0.0;
    let mut count = 0usize;
    let mut params = gen.params();
    let surrogate = cfg.surrogate_at(epoch);
    for chunk in order.chunks(cfg.batch_size) {
        if chunk.len() < cfg.k {
            continue;
        }
        tape.clear();
        let bound = gen.bind(tape);
        let loss = batch_loss(gen, &bound, tape, Batch { indices: chunk, surrogate }, streams)?;
        let value = tape.value(loss);
        if !value.is_finite() {
            return Err(EpochError::NonFinite(format!("loss evaluated to {value}")));
        }
        let grads = tape.backward(loss).collect(bound.vars());
        opt.step(&mut params, &grads)?;
        gen.set_params(&params)?;
        total += value;
        count += 1;
    }
    Ok(total / count.max(1) as f64)
}

fn standard_normals<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn check_1d(gen: &Generator) -> Result<()> {
    if gen.input_dim() != 1 || gen.output_dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: gen.output_dim().max(gen.input_dim()),
        });
    }
    Ok(())
}

fn forward_scalars(gen: &Generator, bound: &BoundParams, tape: &mut Tape, zs: &[f64]) -> Result<Vec<Var>> {
    zs.iter().map(|&z| Ok(gen.forward(bound, &[z], tape)?[0])).collect()
}

/// Draws `n` outputs of a scalar generator under standard normal latents.
pub fn sample_generator_1d<R: Rng + ?Sized>(gen: &Generator, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    gen.eval_scalar_batch(&standard_normals(n, rng))
}

/// Draws `n` outputs of a generator with `d`-dimensional standard normal latents.
pub fn sample_generator<R: Rng + ?Sized>(gen: &Generator, n: usize, rng: &mut R) -> Result<PointCloud> {
    let d = gen.input_dim();
    let mut data = Vec::with_capacity(n * gen.output_dim());
    for _ in 0..n {
        let z = standard_normals(d, rng);
        data.extend(gen.eval(&z)?);
    }
    PointCloud::new(gen.output_dim(), data)
}

/// KS distance to the target cdf and A_CCDF against fresh target samples.
pub fn evaluate_1d(gen: &Generator, target: &Density1D, n: usize, seed: u64) -> Result<BTreeMap<String, f64>> {
    let mut rng = SeededRng::named(seed, "evaluation");
    let generated = sample_generator_1d(gen, n, &mut rng)?;
    let real = target.sample(n, &mut rng);
    let mut out = BTreeMap::new();
    out.insert("ks".to_string(), ks_against_cdf(&generated, |x| target.cdf(x))?);
    out.insert("accdf".to_string(), accdf_error(&real, &generated)?);
    Ok(out)
}

/// Grid KL divergence between fresh target samples and generator output.
pub fn evaluate_2d(gen: &Generator, target: &Density2D, n: usize, seed: u64) -> Result<BTreeMap<String, f64>> {
    let mut rng = SeededRng::named(seed, "evaluation");
    let generated = sample_generator(gen, n, &mut rng)?;
    let real = target.sample(n, &mut rng);
    let mut out = BTreeMap::new();
    out.insert("grid_kl".to_string(), grid_kl(&real, &generated, KL_BINS)?);
    Ok(out)
}

fn finish_1d(gen: &Generator, target: &Density1D, cfg: &TrainConfig, report: &mut TrainReport) -> Result<()> {
    if cfg.eval_samples > 0 {
        report.metrics = evaluate_1d(gen, target, cfg.eval_samples, cfg.seed)?;
    }
    if let Some(&last) = report.loss_trace.last() {
        report.metrics.insert("final_loss".into(), last);
    }
    Ok(())
}

/// Generated probes ranked against K-subsets of each real minibatch.
pub fn train_dual_isl(gen: Generator, target: &Density1D, cfg: &TrainConfig) -> Result<(Generator, TrainReport)> {
    if cfg.orientation != Orientation::Dual {
        return Err(Error::InvalidParameter("train_dual_isl needs the dual orientation".into()));
    }
    check_1d(&gen)?;
    cfg.validate()?;
    let data = target.sample(cfg.n_real, &mut SeededRng::named(cfg.seed, "sampling"));
    let plan = cfg.subset_plan;
    let (gen, mut report) = run_loop(gen, cfg, |g, bound, tape, batch, streams| {
        let reals: Vec<f64> = batch.indices.iter().map(|&i| data[i]).collect();
        let zs = standard_normals(cfg.probes_per_batch(reals.len()), &mut streams.noise);
        let outs = forward_scalars(g, bound, tape, &zs)?;
        surrogate_loss_with_plan(tape, &outs, &reals, cfg.k, &batch.surrogate, plan, &mut streams.subsets)
    })?;
    finish_1d(&gen, target, cfg, &mut report)?;
    Ok((gen, report))
}

/// Every real point of a minibatch ranked against its own K generated points.
pub fn train_classical_isl(gen: Generator, target: &Density1D, cfg: &TrainConfig) -> Result<(Generator, TrainReport)> {
    if cfg.orientation != Orientation::Classical {
        return Err(Error::InvalidParameter("train_classical_isl needs the classical orientation".into()));
    }
    check_1d(&gen)?;
    cfg.validate()?;
    let data = target.sample(cfg.n_real, &mut SeededRng::named(cfg.seed, "sampling"));
    let (gen, mut report) = run_loop(gen, cfg, |g, bound, tape, batch, streams| {
        let reals: Vec<f64> = batch.indices.iter().map(|&i| data[i]).collect();
        let zs = standard_normals(reals.len() * cfg.k, &mut streams.noise);
        let outs = forward_scalars(g, bound, tape, &zs)?;
        classical_surrogate_loss(tape, &reals, &outs, cfg.k, &batch.surrogate)
    })?;
    finish_1d(&gen, target, cfg, &mut report)?;
    Ok((gen, report))
}

/// Mean of the 1D dual losses over `L` directions drawn afresh for every
/// minibatch (or the fixed directions of the config).
pub fn train_sliced_dual_isl(gen: Generator, target: &Density2D, cfg: &TrainConfig) -> Result<(Generator, TrainReport)> {
    cfg.validate()?;
    let dim = target.dim();
    if gen.output_dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: gen.output_dim(),
        });
    }
    let fixed = match &cfg.fixed_directions {
        Some(dirs) => Some(ProjectionSet::fixed(dirs.clone())?),
        None => {
            if cfg.projections == 0 {
                return Err(Error::InvalidParameter("need at least one projection".into()));
            }
            None
        }
    };
    if let Some(f) = &fixed {
        if f.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: f.dim(),
            });
        }
    }
    let data = target.sample(cfg.n_real, &mut SeededRng::named(cfg.seed, "sampling"));
    let latent = gen.input_dim();
    let plan = cfg.subset_plan;
    let (gen, mut report) = run_loop(gen, cfg, |g, bound, tape, batch, streams| {
        let m = cfg.probes_per_batch(batch.indices.len());
        let mut outs = Vec::with_capacity(m);
        for _ in 0..m {
            let z = standard_normals(latent, &mut streams.noise);
            outs.push(g.forward(bound, &z, tape)?);
        }
        let drawn;
        let dirs = match &fixed {
            Some(f) => f,
            None => {
                drawn = ProjectionSet::random(dim, cfg.projections, &mut streams.projections)?;
                &drawn
            }
        };
        let mut losses = Vec::with_capacity(dirs.len());
        for v in dirs.directions() {
            let reals: Vec<f64> = batch
                .indices
                .iter()
                .map(|&i| data.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
                .collect();
            let probes: Vec<Var> = outs
                .iter()
                .map(|o| {
                    let value = o.iter().zip(v).map(|(&x, w)| tape.value(x) * w).sum();
                    tape.custom_iter(value, o.iter().copied().zip(v.iter().copied()))
                })
                .collect();
            losses.push(surrogate_loss_with_plan(
                tape,
                &probes,
                &reals,
                cfg.k,
                &batch.surrogate,
                plan,
                &mut streams.subsets,
            )?);
        }
        Ok(tape.mean(&losses))
    })?;
    if cfg.eval_samples > 0 {
        report.metrics = evaluate_2d(&gen, target, cfg.eval_samples, cfg.seed)?;
    }
    if let Some(&last) = report.loss_trace.last() {
        report.metrics.insert("final_loss".into(), last);
    }
    Ok((gen, report))
}

/// `(1/N) Σ max{0, f₍ᵢ₎ − f₍ᵢ₊₁₎}` for outputs ordered by ascending input.
pub fn monotonicity_penalty(tape: &mut Tape, outputs: &[Var]) -> Result<Var> {
    if outputs.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: outputs.len(),
        });
    }
    let hinges: Vec<Var> = outputs
        .windows(2)
        .map(|w| {
            let d = tape.sub(w[0], w[1]);
            tape.max0(d)
        })
        .collect();
    let s = tape.sum(&hinges);
    Ok(tape.mul_const(s, 1.0 / outputs.len() as f64))
}

/// Value of [`monotonicity_penalty`] without a tape.
pub fn monotonicity_penalty_value(outputs: &[f64]) -> Result<f64> {
    if outputs.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: outputs.len(),
        });
    }
    let s: f64 = outputs.windows(2).map(|w| (w[0] - w[1]).max(0.0)).sum();
    Ok(s / outputs.len() as f64)
}

/// Dual-ISL on sorted latents plus `λ ·` [`monotonicity_penalty`]. The
/// optimum is the increasing map `F⁻¹ ∘ Φ`.
pub fn train_monotone_ot(gen: Generator, target: &Density1D, cfg: &TrainConfig) -> Result<(Generator, TrainReport)> {
    if !(cfg.monotonicity_lambda > 0.0) {
        return Err(Error::InvalidParameter("monotone transport needs λ > 0".into()));
    }
    check_1d(&gen)?;
    cfg.validate()?;
    let data = target.sample(cfg.n_real, &mut SeededRng::named(cfg.seed, "sampling"));
    let plan = cfg.subset_plan;
    let (gen, mut report) = run_loop(gen, cfg, |g, bound, tape, batch, streams| {
        let reals: Vec<f64> = batch.indices.iter().map(|&i| data[i]).collect();
        let mut zs = standard_normals(cfg.probes_per_batch(reals.len()).max(2), &mut streams.noise);
        zs.sort_by(f64::total_cmp);
        let outs = forward_scalars(g, bound, tape, &zs)?;
        let fit = surrogate_loss_with_plan(tape, &outs, &reals, cfg.k, &batch.surrogate, plan, &mut streams.subsets)?;
        let pen = monotonicity_penalty(tape, &outs)?;
        let weighted = tape.mul_const(pen, cfg.monotonicity_lambda);
        Ok(tape.add(fit, weighted))
    })?;
    finish_1d(&gen, target, cfg, &mut report)?;
    let mut rng = SeededRng::named(cfg.seed, "evaluation");
    let mut zs = standard_normals(1000, &mut rng);
    zs.sort_by(f64::total_cmp);
    let ys = gen.eval_scalar_batch(&zs)?;
    report
        .metrics
        .insert("penalty".into(), monotonicity_penalty_value(&ys)?);
    let inversions = ys.windows(2).filter(|w| w[1] < w[0]).count();
    report.metrics.insert("inversions".into(), inversions as f64);
    Ok((gen, report))
}
