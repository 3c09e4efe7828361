//! Experiment description shared by every subcommand: a JSON file whose
//! field names the command-line flags mirror in kebab-case.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rcflow_core::channelgen::{ClusteredChannelModel, GaussianChannelModel};
use rcflow_core::{ComplexMatrix, SnrConvention, SolverConfig, SystemDims};
use serde::{Deserialize, Serialize};

use crate::exit::UsageError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelModelSpec {
    Iid,
    Exponential { rho: f64 },
    Clustered { n_paths: usize },
}

impl ChannelModelSpec {
    /// `iid`, `exponential:<rho>` or `clustered:<paths>`.
    pub fn parse(s: &str) -> Result<Self, UsageError> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let bad = || UsageError(format!("unrecognised channel model `{s}`"));
        match (kind, arg) {
            ("iid", None) => Ok(Self::Iid),
            ("exponential", Some(a)) => Ok(Self::Exponential { rho: a.parse().map_err(|_| bad())? }),
            ("clustered", Some(a)) => Ok(Self::Clustered { n_paths: a.parse().map_err(|_| bad())? }),
            _ => Err(bad()),
        }
    }
}

/// A channel generator built from a [`ChannelModelSpec`].
pub enum ChannelSource {
    Gaussian(GaussianChannelModel),
    Clustered(ClusteredChannelModel),
}

impl ChannelSource {
    pub fn sample(&self, rng: &mut rcflow_core::Rng) -> rcflow_core::ChannelMatrix {
        match self {
            Self::Gaussian(m) => m.sample(rng),
            // Each raw realization already has unit expected entry power.
            Self::Clustered(m) => rcflow_core::ChannelMatrix::new(m.sample_raw(rng)),
        }
    }

    /// Transmit-side covariance given to the analytic prior and to LMMSE.
    pub fn row_cov(&self) -> ComplexMatrix {
        match self {
            Self::Gaussian(m) => m.row_cov.clone(),
            Self::Clustered(m) => ComplexMatrix::identity(m.dims.n_t),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub n_r: usize,
    pub n_t: usize,
    pub channel_model: ChannelModelSpec,
    /// `analytic`, or the path of a weight file.
    pub prior: String,
    /// SNR values in dB.
    pub snr: Vec<f64>,
    pub snr_convention: SnrConvention,
    /// Pilot densities `n_p / n_t`.
    pub alpha: Vec<f64>,
    pub solver: SolverConfig,
    /// SNR range in dB mapped onto `solver.sigma_max`/`sigma_min`.
    pub adaptive_snr_range: Option<[f64; 2]>,
    pub trials: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub lambda_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,
    pub n_outer_grid: Vec<usize>,
    pub n_inner_grid: Vec<usize>,
    /// Estimators compared by `baseline`.
    pub estimators: Vec<Estimator>,
    /// Samples written by `gen-data`.
    pub samples: usize,
    /// File name of the `gen-data` output inside `out_dir`.
    pub dataset: String,
    /// Worker threads; defaults to the available parallelism.
    pub parallel: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Lmmse,
    LeastSquares,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Self::Lmmse => "lmmse",
            Self::LeastSquares => "least_squares",
        }
    }
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            n_r: 4,
            n_t: 16,
            channel_model: ChannelModelSpec::Iid,
            prior: "analytic".into(),
            snr: vec![10.0],
            snr_convention: SnrConvention::PilotDomain,
            alpha: vec![0.6],
            solver: SolverConfig::default(),
            adaptive_snr_range: None,
            trials: 100,
            seed: 0,
            out_dir: PathBuf::from("results"),
            lambda_grid: vec![1.0, 2.0, 4.0],
            beta_grid: vec![1.0, 2.0, 4.0],
            n_outer_grid: (1..=10).collect(),
            n_inner_grid: vec![10, 30, 50],
            estimators: vec![Estimator::Lmmse, Estimator::LeastSquares],
            samples: 1000,
            dataset: "channels.rcds".into(),
            parallel: None,
        }
    }
}

fn reject_duplicates<T: ToString>(name: &str, values: &[T]) -> Result<(), UsageError> {
    let mut seen = HashSet::new();
    for v in values {
        if !seen.insert(v.to_string()) {
            return Err(UsageError(format!("duplicate value {} in `{name}`", v.to_string())));
        }
    }
    Ok(())
}

fn non_empty<T>(name: &str, values: &[T]) -> Result<(), UsageError> {
    if values.is_empty() {
        return Err(UsageError(format!("`{name}` must not be empty")));
    }
    Ok(())
}

impl ExperimentSpec {
    pub fn from_file(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        non_empty("snr", &self.snr)?;
        non_empty("alpha", &self.alpha)?;
        reject_duplicates("snr", &self.snr)?;
        reject_duplicates("alpha", &self.alpha)?;
        if self.trials == 0 {
            return Err(UsageError("`trials` must be at least 1".into()));
        }
        if self.snr.iter().any(|s| !s.is_finite()) {
            return Err(UsageError("SNR values must be finite".into()));
        }
        for &a in &self.alpha {
            self.dims(a)?;
        }
        self.solver_config(self.dims(self.alpha[0])?)?.validate().map_err(|e| UsageError(e.to_string()))?;
        if self.parallel == Some(0) {
            return Err(UsageError("`parallel` must be at least 1".into()));
        }
        if self.prior != "analytic" && self.prior.is_empty() {
            return Err(UsageError("`prior` must be `analytic` or a weight file path".into()));
        }
        Ok(())
    }

    pub fn dims(&self, alpha: f64) -> Result<SystemDims, UsageError> {
        SystemDims::with_pilot_density(self.n_r, self.n_t, alpha).map_err(|e| UsageError(e.to_string()))
    }

    /// Solver settings with the adaptive noise range resolved for `dims`.
    pub fn solver_config(&self, dims: SystemDims) -> Result<SolverConfig, UsageError> {
        let cfg = self.solver.clone();
        Ok(match self.adaptive_snr_range {
            Some([lo, hi]) => {
                if !(lo < hi) {
                    return Err(UsageError(format!("adaptive SNR range must be increasing, got [{lo}, {hi}]")));
                }
                cfg.with_sigma_range(lo, hi, self.snr_convention, &dims)
            }
            None => cfg,
        })
    }

    pub fn channel_source(&self, dims: SystemDims) -> Result<ChannelSource, UsageError> {
        let err = |e: rcflow_core::Error| UsageError(format!("channel model: {e}"));
        Ok(match self.channel_model {
            ChannelModelSpec::Iid => ChannelSource::Gaussian(GaussianChannelModel::iid(dims).map_err(err)?),
            ChannelModelSpec::Exponential { rho } => {
                ChannelSource::Gaussian(GaussianChannelModel::exponential(dims, rho).map_err(err)?)
            }
            ChannelModelSpec::Clustered { n_paths } => {
                ChannelSource::Clustered(ClusteredChannelModel::new(dims, n_paths).map_err(err)?)
            }
        })
    }

    pub fn lambda_beta_axes(&self) -> Result<(), UsageError> {
        non_empty("lambda_grid", &self.lambda_grid)?;
        non_empty("beta_grid", &self.beta_grid)?;
        reject_duplicates("lambda_grid", &self.lambda_grid)?;
        reject_duplicates("beta_grid", &self.beta_grid)
    }

    pub fn n1_n2_axes(&self) -> Result<(), UsageError> {
        non_empty("n_outer_grid", &self.n_outer_grid)?;
        non_empty("n_inner_grid", &self.n_inner_grid)?;
        reject_duplicates("n_outer_grid", &self.n_outer_grid)?;
        reject_duplicates("n_inner_grid", &self.n_inner_grid)?;
        if self.n_outer_grid.contains(&0) || self.n_inner_grid.contains(&0) {
            return Err(UsageError("iteration counts must be at least 1".into()));
        }
        Ok(())
    }
}
