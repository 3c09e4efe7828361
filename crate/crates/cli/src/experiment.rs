//! Trial instances and their evaluation on a worker pool.

use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use rayon::prelude::*;
use rcflow_core::analysis::nmse_linear;
use rcflow_core::baselines::{least_squares, LmmseContext};
use rcflow_core::measurement::{generate_pilots, observe, snr_to_sigma};
use rcflow_core::prior::load_network;
use rcflow_core::solver::run;
use rcflow_core::{
    ChannelMatrix, GaussianAnalyticField, Measurement, Rng, SolverConfig, SystemDims, VelocityField,
};

use crate::exit::UsageError;
use crate::spec::{ChannelSource, Estimator, ExperimentSpec};

/// Stream ids at and above this value seed solver initial states; trial
/// instances use streams `0..trials`.
const INIT_STREAM_BASE: u64 = 1 << 63;

/// One (SNR, pilot density) operating point.
#[derive(Clone, Copy, Debug)]
pub struct Cell {
    pub snr_db: f64,
    pub alpha: f64,
    pub dims: SystemDims,
    pub sigma: f64,
}

impl Cell {
    pub fn new(spec: &ExperimentSpec, snr_db: f64, alpha: f64) -> Result<Self, UsageError> {
        let dims = spec.dims(alpha)?;
        Ok(Self { snr_db, alpha, dims, sigma: snr_to_sigma(snr_db, spec.snr_convention, &dims) })
    }
}

/// Every (SNR, alpha) pair, SNR-major.
pub fn cells(spec: &ExperimentSpec) -> Result<Vec<Cell>, UsageError> {
    let mut out = Vec::new();
    for &snr in &spec.snr {
        for &alpha in &spec.alpha {
            out.push(Cell::new(spec, snr, alpha)?);
        }
    }
    Ok(out)
}

/// Channel, pilots and noisy observation of trial `trial`.
///
/// The channel is the first draw of the trial's stream, so every cell sees
/// the same channel realizations.
pub fn instance(
    source: &ChannelSource,
    cell: &Cell,
    seed: u64,
    trial: usize,
) -> rcflow_core::Result<(ChannelMatrix, Measurement)> {
    let mut rng = Rng::new(seed).fork(trial as u64);
    let h = source.sample(&mut rng);
    let pilots = generate_pilots(&cell.dims, &mut rng)?;
    let meas = observe(&h, &pilots, cell.sigma, &mut rng)?;
    Ok((h, meas))
}

pub fn init_seed(seed: u64, trial: usize) -> u64 {
    Rng::new(seed).fork(INIT_STREAM_BASE + trial as u64).next_u64()
}

pub fn load_prior(spec: &ExperimentSpec, source: &ChannelSource) -> anyhow::Result<Box<dyn VelocityField>> {
    if spec.prior == "analytic" {
        let field = GaussianAnalyticField::zero_mean(spec.n_r, source.row_cov())?;
        return Ok(Box::new(field));
    }
    let path = Path::new(&spec.prior);
    if !path.is_file() {
        return Err(UsageError(format!("weight file {} not found", path.display())).into());
    }
    let net = load_network(path).with_context(|| format!("loading weights from {}", path.display()))?;
    if let Some(shape) = net.state_shape() {
        if shape != (spec.n_r, spec.n_t) {
            return Err(UsageError(format!(
                "weight file expects {}x{} channels, experiment uses {}x{}",
                shape.0, shape.1, spec.n_r, spec.n_t
            ))
            .into());
        }
    }
    Ok(Box::new(net))
}

pub fn pool(parallel: Option<usize>) -> anyhow::Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(parallel.unwrap_or(0)).build()?)
}

/// Evaluates `f` on `0..n` in the pool; results and the reported error
/// follow trial order.
pub fn map_trials<T, F>(pool: &rayon::ThreadPool, n: usize, f: F) -> anyhow::Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> anyhow::Result<T> + Sync,
{
    let results: Vec<anyhow::Result<T>> = pool.install(|| (0..n).into_par_iter().map(&f).collect());
    results.into_iter().collect()
}

#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub trial: usize,
    pub init_seed: Option<u64>,
    pub n_inner: usize,
    pub nmse: f64,
    /// `||Y - H_est P||_F`.
    pub residual: f64,
    /// Linear NMSE after each outer pass, when traced.
    pub nmse_per_outer: Vec<f64>,
    pub wall_ns: u64,
}

pub fn rcflow_trial(
    spec: &ExperimentSpec,
    source: &ChannelSource,
    field: &dyn VelocityField,
    cell: &Cell,
    config: &SolverConfig,
    trial: usize,
) -> anyhow::Result<TrialOutcome> {
    let (h, meas) = instance(source, cell, spec.seed, trial)?;
    let seed = init_seed(spec.seed, trial);
    let cfg = SolverConfig { seed, ..config.clone() };
    let started = Instant::now();
    let est = run(&meas, field, &cfg, cfg.record_trace.then_some(&h))
        .with_context(|| format!("trial {trial} at {} dB, alpha {}", cell.snr_db, cell.alpha))?;
    let wall_ns = started.elapsed().as_nanos() as u64;
    let nmse_per_outer = est
        .trace
        .map(|t| t.nmse_per_outer.iter().map(|db| 10f64.powf(db / 10.0)).collect())
        .unwrap_or_default();
    Ok(TrialOutcome {
        trial,
        init_seed: Some(seed),
        n_inner: est.n_inner_used,
        nmse: nmse_linear(est.h_est.matrix(), h.matrix())?,
        residual: meas.residual_norm(est.h_est.matrix())?,
        nmse_per_outer,
        wall_ns,
    })
}

/// A classical estimator on trial `trial`. LMMSE uses the channel model's
/// transmit covariance.
pub fn baseline_trial(
    spec: &ExperimentSpec,
    source: &ChannelSource,
    cell: &Cell,
    estimator: Estimator,
    trial: usize,
) -> anyhow::Result<TrialOutcome> {
    let (h, meas) = instance(source, cell, spec.seed, trial)?;
    let started = Instant::now();
    let est = match estimator {
        Estimator::Lmmse => LmmseContext::new(&meas.pilots, meas.sigma_pilot, source.row_cov())?.estimate(&meas.y)?,
        Estimator::LeastSquares => least_squares(&meas)?,
    };
    let wall_ns = started.elapsed().as_nanos() as u64;
    Ok(TrialOutcome {
        trial,
        init_seed: None,
        n_inner: 0,
        nmse: nmse_linear(est.matrix(), h.matrix())?,
        residual: meas.residual_norm(est.matrix())?,
        nmse_per_outer: Vec::new(),
        wall_ns,
    })
}
