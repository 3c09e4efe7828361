//! `rcflow`: batch experiments for the recursive flow channel estimator.

// Negated comparisons are how NaN arguments get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod exit;
mod experiment;
mod output;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rcflow_core::{InnerSteps, SnrConvention};

use crate::commands::SweepAxis;
use crate::exit::UsageError;
use crate::spec::{ChannelModelSpec, Estimator, ExperimentSpec};

#[derive(Parser)]
#[command(name = "rcflow", version, about = "Recursive flow MIMO channel estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a channel dataset file.
    GenData,
    /// Run the solver on every (SNR, alpha) cell.
    Run,
    /// Evaluate the classical estimators on the same trials as `run`.
    Baseline,
    /// Evaluate the solver along one parameter axis.
    Sweep {
        #[arg(value_enum)]
        axis: SweepAxis,
    },
    /// Per-step Jacobian spectral radii along one trajectory.
    Spectral,
}

/// Every flag overrides the matching field of the `--config` file.
#[derive(Args)]
struct Overrides {
    /// JSON experiment description.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Comma-separated SNR values in dB.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
    /// `pilot-domain` or `channel-domain`.
    #[arg(long, global = true)]
    snr_convention: Option<String>,
    /// Comma-separated pilot densities.
    #[arg(long, global = true, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    n_outer: Option<usize>,
    #[arg(long, global = true, conflicts_with = "adaptive")]
    n_inner: Option<usize>,
    /// Choose the inner step count from the noise level.
    #[arg(long, global = true)]
    adaptive: bool,
    /// `analytic` or a weight file path.
    #[arg(long, global = true)]
    prior: Option<String>,
    /// Worker threads.
    #[arg(long, global = true)]
    parallel: Option<usize>,
    #[arg(long, global = true)]
    n_r: Option<usize>,
    #[arg(long, global = true)]
    n_t: Option<usize>,
    /// `iid`, `exponential:<rho>` or `clustered:<paths>`.
    #[arg(long, global = true)]
    channel_model: Option<String>,
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true)]
    dataset: Option<String>,
    #[arg(long, global = true, value_delimiter = ',', value_enum)]
    estimators: Option<Vec<Estimator>>,
    #[arg(long, global = true, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    beta_grid: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    n_outer_grid: Option<Vec<usize>>,
    #[arg(long, global = true, value_delimiter = ',')]
    n_inner_grid: Option<Vec<usize>>,
}

impl Overrides {
    fn resolve(self) -> Result<ExperimentSpec, UsageError> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::from_file(path)?,
            None => ExperimentSpec::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:expr),* $(,)?) => {
                $(if let Some(v) = self.$flag { $field = v; })*
            };
        }
        set! {
            seed => spec.seed,
            out_dir => spec.out_dir,
            trials => spec.trials,
            snr => spec.snr,
            alpha => spec.alpha,
            lambda => spec.solver.lambda,
            beta => spec.solver.beta,
            n_outer => spec.solver.n_outer,
            prior => spec.prior,
            n_r => spec.n_r,
            n_t => spec.n_t,
            samples => spec.samples,
            dataset => spec.dataset,
            estimators => spec.estimators,
            lambda_grid => spec.lambda_grid,
            beta_grid => spec.beta_grid,
            n_outer_grid => spec.n_outer_grid,
            n_inner_grid => spec.n_inner_grid,
        }
        if let Some(n) = self.parallel {
            spec.parallel = Some(n);
        }
        if let Some(n) = self.n_inner {
            spec.solver.n_inner = InnerSteps::Fixed(n);
        }
        if self.adaptive {
            spec.solver.n_inner = InnerSteps::Adaptive;
        }
        if let Some(m) = &self.channel_model {
            spec.channel_model = ChannelModelSpec::parse(m)?;
        }
        if let Some(c) = &self.snr_convention {
            spec.snr_convention = match c.as_str() {
                "pilot-domain" | "pilot_domain" => SnrConvention::PilotDomain,
                "channel-domain" | "channel_domain" => SnrConvention::ChannelDomain,
                other => return Err(UsageError(format!("unknown SNR convention `{other}`"))),
            };
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn dispatch(command: Command, spec: &ExperimentSpec) -> anyhow::Result<()> {
    match command {
        Command::GenData => commands::gen_data(spec),
        Command::Run => commands::run(spec),
        Command::Baseline => commands::baseline(spec),
        Command::Sweep { axis } => commands::sweep(spec, axis),
        Command::Spectral => commands::spectral(spec),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { 0 });
        }
    };
    let result = cli.overrides.resolve().map_err(anyhow::Error::from).and_then(|spec| dispatch(cli.command, &spec));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code_for(&e))
        }
    }
}
