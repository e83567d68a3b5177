use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use isl_core::distributions::Density1D;
use isl_lab::experiments::{self, means};
use isl_lab::plot::{self, PlotKind};
use isl_lab::{CliError, Experiment, ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "isl-lab", version, about = "Rank-based generative training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train 1D generators and report KS and A_CCDF.
    Bench1d(RunArgs),
    /// Recover a 1D density from a trained generator (and a KDE baseline).
    Density1d(RunArgs),
    /// Recover a 2D density by slicing.
    Density2d(RunArgs),
    /// Monotonicity-penalized transport from N(0,1).
    Ot(RunArgs),
    /// Train 2D generators with random projections and report grid KL.
    Bench2d(RunArgs),
    /// Run the numerical property suite.
    Props(RunArgs),
    /// Per-epoch wall time of the training methods.
    Timing(RunArgs),
    /// Render a CSV file as SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat key = value file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    projections: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    n_real: Option<String>,
    /// Probes per minibatch, or "none" for batch/k.
    #[arg(long)]
    generated_per_batch: Option<String>,
    #[arg(long)]
    temperature: Option<String>,
    #[arg(long)]
    bandwidth: Option<String>,
    /// Starting relative temperature, or "none" to disable annealing.
    #[arg(long)]
    anneal_from: Option<String>,
    #[arg(long)]
    final_lr_fraction: Option<String>,
    #[arg(long)]
    eval_samples: Option<String>,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
    /// Comma-separated methods: dual, classical, kde.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    density_samples: Option<String>,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Also write SVG plots.
    #[arg(long)]
    plots: bool,
    #[arg(long)]
    no_checkpoints: bool,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let pairs: [(&'static str, &Option<String>); 20] = [
            ("target", &self.target),
            ("k", &self.k),
            ("epochs", &self.epochs),
            ("batch", &self.batch),
            ("lr", &self.lr),
            ("projections", &self.projections),
            ("lambda", &self.lambda),
            ("n_real", &self.n_real),
            ("generated_per_batch", &self.generated_per_batch),
            ("temperature", &self.temperature),
            ("bandwidth", &self.bandwidth),
            ("anneal_from", &self.anneal_from),
            ("final_lr_fraction", &self.final_lr_fraction),
            ("eval_samples", &self.eval_samples),
            ("seeds", &self.seeds),
            ("methods", &self.methods),
            ("delta", &self.delta),
            ("density_samples", &self.density_samples),
            ("grid", &self.grid),
            ("out", &self.out),
        ];
        let mut out: Vec<(&'static str, String)> =
            pairs.into_iter().filter_map(|(k, v)| v.clone().map(|v| (k, v))).collect();
        if self.plots {
            out.push(("plots", "true".into()));
        }
        if self.no_checkpoints {
            out.push(("checkpoints", "false".into()));
        }
        out
    }

    fn resolve(&self, experiment: Experiment) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::new(experiment);
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            cfg.apply_text(&text)?;
            // The subcommand decides the experiment.
            cfg.experiment = experiment;
        }
        for (key, value) in self.overrides() {
            cfg.set(key, &value)?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct PlotArgs {
    /// CSV written by one of the experiment subcommands.
    #[arg(long)]
    input: PathBuf,
    /// density-overlay, loss-curve or contour.
    #[arg(long)]
    kind: String,
    #[arg(long)]
    output: PathBuf,
    /// Analytic 1D density drawn under a density overlay.
    #[arg(long)]
    target: Option<String>,
}

fn run_experiment(experiment: Experiment, args: &RunArgs) -> Result<()> {
    let cfg = args.resolve(experiment)?;
    let summary = experiments::run(&cfg)?;
    for (method, metric, mean) in means(&summary.rows) {
        println!("{method:<10} {metric:<22} mean {mean:.6}");
    }
    println!("wrote {} files under {}", summary.files.len(), cfg.out.display());
    Ok(())
}

fn run_plot(args: &PlotArgs) -> Result<()> {
    let kind: PlotKind = args.kind.parse()?;
    let truth = match &args.target {
        Some(t) => Some(
            t.parse::<Density1D>()
                .map_err(|e| CliError::Config(format!("target '{t}': {e}")))?,
        ),
        None => None,
    };
    plot::emit_plot(&args.input, kind, &args.output, truth.as_ref())?;
    println!("wrote {}", args.output.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", CliError::Config(e.to_string().trim().to_string()).report());
            return ExitCode::from(2);
        }
    };
    let outcome = match &cli.command {
        Command::Bench1d(a) => run_experiment(Experiment::Bench1D, a),
        Command::Density1d(a) => run_experiment(Experiment::Density1D, a),
        Command::Density2d(a) => run_experiment(Experiment::Density2D, a),
        Command::Ot(a) => run_experiment(Experiment::MonotoneOT, a),
        Command::Bench2d(a) => run_experiment(Experiment::Bench2D, a),
        Command::Props(a) => run_experiment(Experiment::Props, a),
        Command::Timing(a) => run_experiment(Experiment::Timing, a),
        Command::Plot(a) => run_plot(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
