use anyhow::Context;
use rcflow_core::analysis::{mean_nmse_db, spectral_report, RadiusMethod, SpectralOptions};
use rcflow_core::channelgen::{sample_clustered, sample_gaussian, save_dataset};
use rcflow_core::{InnerSteps, Rng, SolverConfig};

use crate::exit::UsageError;
use crate::experiment::{self, baseline_trial, cells, instance, map_trials, rcflow_trial, Cell, TrialOutcome};
use crate::output::{
    db_cells, ensure_dir, num, write_metadata, write_outputs, Table, SPECTRAL_COLUMNS, SUMMARY_COLUMNS,
    SWEEP_COLUMNS, TIMING_COLUMNS, TRIAL_COLUMNS,
};
use crate::spec::{ChannelSource, ExperimentSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepAxis {
    Snr,
    Alpha,
    #[value(name = "lambda_beta", alias = "lambda-beta")]
    LambdaBeta,
    #[value(name = "n1_n2", alias = "n1-n2")]
    N1N2,
}

impl SweepAxis {
    fn name(self) -> &'static str {
        match self {
            Self::Snr => "snr",
            Self::Alpha => "alpha",
            Self::LambdaBeta => "lambda_beta",
            Self::N1N2 => "n1_n2",
        }
    }
}

pub fn gen_data(spec: &ExperimentSpec) -> anyhow::Result<()> {
    let dims = spec.dims(spec.alpha[0])?;
    let rng = Rng::new(spec.seed);
    let ds = match spec.channel_source(dims)? {
        ChannelSource::Gaussian(m) => sample_gaussian(&m, spec.samples, &rng),
        ChannelSource::Clustered(m) => sample_clustered(&m, spec.samples, &rng),
    };
    ensure_dir(&spec.out_dir)?;
    let path = spec.out_dir.join(&spec.dataset);
    save_dataset(&ds, &path).with_context(|| format!("writing {}", path.display()))?;
    write_metadata(spec, "gen-data", "gen_data", [(spec.dataset.as_str(), &[][..], ds.samples.len())])?;
    println!("wrote {} samples ({}x{}) to {}", ds.samples.len(), dims.n_r, dims.n_t, path.display());
    println!("mean entry power {:.6}", ds.mean_power());
    Ok(())
}

fn trial_row(spec: &ExperimentSpec, estimator: &str, cell: &Cell, o: &TrialOutcome) -> Vec<String> {
    let [db, neg_inf] = db_cells(10.0 * o.nmse.log10());
    vec![
        estimator.to_string(),
        o.trial.to_string(),
        spec.seed.to_string(),
        o.init_seed.map(|s| s.to_string()).unwrap_or_default(),
        num(cell.snr_db),
        num(cell.alpha),
        cell.dims.n_p.to_string(),
        o.n_inner.to_string(),
        db,
        neg_inf,
        num(o.residual),
    ]
}

fn summary_row(estimator: &str, cell: &Cell, outcomes: &[TrialOutcome]) -> Vec<String> {
    let linear: Vec<f64> = outcomes.iter().map(|o| o.nmse).collect();
    let [db, neg_inf] = db_cells(mean_nmse_db(&linear));
    let mean_inner = outcomes.iter().map(|o| o.n_inner as f64).sum::<f64>() / outcomes.len() as f64;
    vec![
        estimator.to_string(),
        num(cell.snr_db),
        num(cell.alpha),
        cell.dims.n_p.to_string(),
        outcomes.len().to_string(),
        db,
        neg_inf,
        num(mean_inner),
    ]
}

fn timing_row(estimator: &str, cell: &Cell, o: &TrialOutcome) -> Vec<String> {
    vec![estimator.to_string(), o.trial.to_string(), num(cell.snr_db), num(cell.alpha), o.wall_ns.to_string()]
}

struct Tables {
    trials: Table,
    summary: Table,
    timing: Table,
}

impl Tables {
    fn new(stem: &str) -> Self {
        Self {
            trials: Table::new(format!("{stem}_trials.csv"), TRIAL_COLUMNS),
            summary: Table::new(format!("{stem}_summary.csv"), SUMMARY_COLUMNS),
            timing: Table::new(format!("{stem}_timing.csv"), TIMING_COLUMNS),
        }
    }

    fn add(&mut self, spec: &ExperimentSpec, estimator: &str, cell: &Cell, outcomes: &[TrialOutcome]) {
        for o in outcomes {
            self.trials.push(trial_row(spec, estimator, cell, o));
            self.timing.push(timing_row(estimator, cell, o));
        }
        self.summary.push(summary_row(estimator, cell, outcomes));
        println!(
            "{estimator:>13}  snr {:>6} dB  alpha {:<5}  mean NMSE {:.3} dB",
            cell.snr_db,
            cell.alpha,
            mean_nmse_db(&outcomes.iter().map(|o| o.nmse).collect::<Vec<_>>())
        );
    }

    fn into_vec(self) -> [Table; 3] {
        [self.trials, self.summary, self.timing]
    }
}

pub fn run(spec: &ExperimentSpec) -> anyhow::Result<()> {
    let pool = experiment::pool(spec.parallel)?;
    let mut tables = Tables::new("run");
    for cell in cells(spec)? {
        let source = spec.channel_source(cell.dims)?;
        let field = experiment::load_prior(spec, &source)?;
        let cfg = spec.solver_config(cell.dims)?;
        let outcomes = map_trials(&pool, spec.trials, |k| rcflow_trial(spec, &source, field.as_ref(), &cell, &cfg, k))?;
        tables.add(spec, "rcflow", &cell, &outcomes);
    }
    write_outputs(spec, "run", "run", &tables.into_vec())
}

pub fn baseline(spec: &ExperimentSpec) -> anyhow::Result<()> {
    if spec.estimators.is_empty() {
        return Err(UsageError("`estimators` must not be empty".into()).into());
    }
    let pool = experiment::pool(spec.parallel)?;
    let mut tables = Tables::new("baseline");
    for cell in cells(spec)? {
        let source = spec.channel_source(cell.dims)?;
        for &est in &spec.estimators {
            let outcomes = map_trials(&pool, spec.trials, |k| baseline_trial(spec, &source, &cell, est, k))?;
            tables.add(spec, est.name(), &cell, &outcomes);
        }
    }
    write_outputs(spec, "baseline", "baseline", &tables.into_vec())
}

/// Mean linear NMSE after each outer pass.
fn mean_curve(outcomes: &[TrialOutcome]) -> Vec<f64> {
    let n = outcomes[0].nmse_per_outer.len();
    (0..n)
        .map(|k| outcomes.iter().map(|o| o.nmse_per_outer[k]).sum::<f64>() / outcomes.len() as f64)
        .collect()
}

/// 1-based index of the smallest entry.
fn argmin_1(curve: &[f64]) -> usize {
    curve
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &v)| if v < best.1 { (i, v) } else { best })
        .0
        + 1
}

pub fn sweep(spec: &ExperimentSpec, axis: SweepAxis) -> anyhow::Result<()> {
    let pool = experiment::pool(spec.parallel)?;
    let mut table = Table::new(format!("sweep_{}.csv", axis.name()), SWEEP_COLUMNS);
    let mut emit = |cell: &Cell, cfg: &SolverConfig, n_outer: usize, n_inner: usize, mean_linear: f64, sweet: Option<usize>| {
        let [db, neg_inf] = db_cells(10.0 * mean_linear.log10());
        println!(
            "{} snr {} alpha {} lambda {} beta {} N1 {n_outer} N2 {n_inner}: {db} dB",
            axis.name(),
            cell.snr_db,
            cell.alpha,
            cfg.lambda,
            cfg.beta
        );
        table.push(vec![
            axis.name().to_string(),
            num(cell.snr_db),
            num(cell.alpha),
            num(cfg.lambda),
            num(cfg.beta),
            n_outer.to_string(),
            n_inner.to_string(),
            spec.trials.to_string(),
            db,
            neg_inf,
            sweet.map(|s| s.to_string()).unwrap_or_default(),
        ]);
    };
    let evaluate = |cell: &Cell, cfg: &SolverConfig| -> anyhow::Result<Vec<TrialOutcome>> {
        let source = spec.channel_source(cell.dims)?;
        let field = experiment::load_prior(spec, &source)?;
        map_trials(&pool, spec.trials, |k| rcflow_trial(spec, &source, field.as_ref(), cell, cfg, k))
    };
    let mean_of = |o: &[TrialOutcome]| o.iter().map(|x| x.nmse).sum::<f64>() / o.len() as f64;

    match axis {
        SweepAxis::Snr | SweepAxis::Alpha => {
            let points: Vec<(f64, f64)> = if axis == SweepAxis::Snr {
                spec.snr.iter().map(|&s| (s, spec.alpha[0])).collect()
            } else {
                spec.alpha.iter().map(|&a| (spec.snr[0], a)).collect()
            };
            for (snr, alpha) in points {
                let cell = Cell::new(spec, snr, alpha)?;
                let cfg = spec.solver_config(cell.dims)?;
                let outcomes = evaluate(&cell, &cfg)?;
                emit(&cell, &cfg, cfg.n_outer, outcomes[0].n_inner, mean_of(&outcomes), None);
            }
        }
        SweepAxis::LambdaBeta => {
            spec.lambda_beta_axes()?;
            let cell = Cell::new(spec, spec.snr[0], spec.alpha[0])?;
            for &lambda in &spec.lambda_grid {
                for &beta in &spec.beta_grid {
                    let cfg = SolverConfig { lambda, beta, record_trace: true, ..spec.solver_config(cell.dims)? };
                    let outcomes = evaluate(&cell, &cfg)?;
                    let sweet = argmin_1(&mean_curve(&outcomes));
                    emit(&cell, &cfg, cfg.n_outer, outcomes[0].n_inner, mean_of(&outcomes), Some(sweet));
                }
            }
        }
        SweepAxis::N1N2 => {
            spec.n1_n2_axes()?;
            let cell = Cell::new(spec, spec.snr[0], spec.alpha[0])?;
            let max_outer = *spec.n_outer_grid.iter().max().expect("validated non-empty");
            for &n_inner in &spec.n_inner_grid {
                // Outer outputs do not depend on how many passes follow, so
                // one run to the largest N1 gives every prefix.
                let cfg = SolverConfig {
                    n_outer: max_outer,
                    n_inner: InnerSteps::Fixed(n_inner),
                    record_trace: true,
                    ..spec.solver_config(cell.dims)?
                };
                let curve = mean_curve(&evaluate(&cell, &cfg)?);
                for &n_outer in &spec.n_outer_grid {
                    emit(&cell, &cfg, n_outer, n_inner, curve[n_outer - 1], None);
                }
            }
        }
    }
    write_outputs(spec, "sweep", &format!("sweep_{}", axis.name()), &[table])
}

pub fn spectral(spec: &ExperimentSpec) -> anyhow::Result<()> {
    let cell = Cell::new(spec, spec.snr[0], spec.alpha[0])?;
    let source = spec.channel_source(cell.dims)?;
    let field = experiment::load_prior(spec, &source)?;
    let (_, meas) = instance(&source, &cell, spec.seed, 0)?;
    let cfg = SolverConfig { seed: experiment::init_seed(spec.seed, 0), ..spec.solver_config(cell.dims)? };
    let opts = SpectralOptions { seed: spec.seed, ..SpectralOptions::default() };
    let report = spectral_report(&meas, field.as_ref(), &cfg, &opts)?;
    let method = |m: RadiusMethod| match m {
        RadiusMethod::Analytic => "analytic",
        RadiusMethod::PowerIteration => "power_iteration",
    };
    let mut table = Table::new("spectral.csv", SPECTRAL_COLUMNS);
    for s in &report.steps {
        table.push(vec![
            s.outer.to_string(),
            s.inner.to_string(),
            num(s.t),
            num(s.w),
            num(s.rho_d),
            method(s.rho_d_method).into(),
            num(s.rho_p),
            method(s.rho_p_method).into(),
            num(s.rho_t),
            method(s.rho_t_method).into(),
            s.rho_t_converged.to_string(),
            num(s.product()),
        ]);
    }
    println!("{} steps, max rho_T {:.6}", report.steps.len(), report.max_rho_t());
    write_outputs(spec, "spectral", "spectral", &[table])
}
