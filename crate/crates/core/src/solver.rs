//! The recursive flow solver: denoise, proximal projection onto the
//! measurement, and anchored rectification, repeated over outer iterations
//! with the previous output as the next anchor.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::nmse_db;
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::measurement::{snr_to_sigma, Measurement, SnrConvention};
use crate::prior::VelocityField;
use crate::rng::Rng;
use crate::types::{ChannelMatrix, SystemDims};

/// Smallest annealing weight passed to the proximal step.
pub const MIN_WEIGHT: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSteps {
    Fixed(usize),
    /// Chosen from the noise level by [`adaptive_inner_steps`].
    Adaptive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Exponent of the flow-time schedule.
    pub lambda: f64,
    /// Exponent of the anchor schedule.
    pub beta: f64,
    pub n_outer: usize,
    pub n_inner: InnerSteps,
    pub n_max: usize,
    pub n_min: usize,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub record_trace: bool,
    /// Store the state matrix every this many steps when tracing.
    pub snapshot_every: Option<usize>,
    /// Seed of the initial draw `H ~ CN(0, I)`.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            beta: 2.0,
            n_outer: 10,
            n_inner: InnerSteps::Fixed(30),
            n_max: 50,
            n_min: 3,
            // Channel-domain noise levels at -10 dB and 30 dB.
            sigma_max: 10f64.sqrt(),
            sigma_min: 1e-3f64.sqrt(),
            record_trace: false,
            snapshot_every: None,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) || !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("schedule exponents must be finite and >= 0, got ({}, {})", self.lambda, self.beta));
        }
        if self.n_outer == 0 {
            return bad("n_outer must be at least 1".into());
        }
        if self.n_inner == InnerSteps::Fixed(0) {
            return bad("n_inner must be at least 1".into());
        }
        if self.n_min == 0 || self.n_max < self.n_min {
            return bad(format!("need 1 <= n_min <= n_max, got n_min={} n_max={}", self.n_min, self.n_max));
        }
        if !(self.sigma_min > 0.0 && self.sigma_max > self.sigma_min && self.sigma_max.is_finite()) {
            return bad(format!(
                "need sigma_max > sigma_min > 0, got sigma_max={} sigma_min={}",
                self.sigma_max, self.sigma_min
            ));
        }
        if self.snapshot_every == Some(0) {
            return bad("snapshot_every must be at least 1".into());
        }
        Ok(())
    }

    /// Sets `sigma_max`/`sigma_min` to the noise levels of the lowest and
    /// highest SNR of an operating range.
    pub fn with_sigma_range(mut self, snr_lo_db: f64, snr_hi_db: f64, convention: SnrConvention, dims: &SystemDims) -> Self {
        self.sigma_max = snr_to_sigma(snr_lo_db, convention, dims);
        self.sigma_min = snr_to_sigma(snr_hi_db, convention, dims);
        self
    }

    /// Inner step count used for a measurement with this noise level.
    pub fn inner_steps_for(&self, sigma_pilot: f64) -> usize {
        match self.n_inner {
            InnerSteps::Fixed(n) => n,
            InnerSteps::Adaptive => adaptive_inner_steps(sigma_pilot, self),
        }
    }
}

fn check_index(i: usize, n_inner: usize) -> Result<()> {
    if i >= n_inner {
        return Err(Error::InvalidArgument(format!("step {i} outside 0..{n_inner}")));
    }
    Ok(())
}

/// Flow time `(1 - i/N)^lambda`.
pub fn schedule_t(i: usize, n_inner: usize, lambda: f64) -> Result<f64> {
    check_index(i, n_inner)?;
    Ok((1.0 - i as f64 / n_inner as f64).powf(lambda))
}

/// Anchor weight `(1 - (i+1)/N)^beta`, exactly 0 at the last step.
pub fn schedule_t_prime(i: usize, n_inner: usize, beta: f64) -> Result<f64> {
    check_index(i, n_inner)?;
    if i + 1 == n_inner {
        return Ok(0.0);
    }
    Ok((1.0 - (i + 1) as f64 / n_inner as f64).powf(beta))
}

/// Prior-trust weight `t^2 / (t^2 + (1-t)^2)`.
pub fn anneal_weight(t: f64) -> f64 {
    let a = t * t;
    let b = (1.0 - t) * (1.0 - t);
    a / (a + b)
}

/// Single-step clean estimate `H - t V(H, t)`.
pub fn denoise<F: VelocityField + ?Sized>(h: &ComplexMatrix, t: f64, field: &F) -> Result<ComplexMatrix> {
    let v = field.eval(h, t)?;
    if v.shape() != h.shape() {
        return Err(Error::Shape(format!(
            "velocity field returned {}x{} for a {}x{} state",
            v.rows(),
            v.cols(),
            h.rows(),
            h.cols()
        )));
    }
    h.lin_comb(1.0, &v, -t)
}

/// Measurement-dependent quantities shared by every proximal step.
#[derive(Clone, Debug)]
pub struct ProjectionContext {
    /// `sigma^-2 P P^H`.
    pub m: ComplexMatrix,
    /// `sigma^-2 Y P^H`.
    pub r: ComplexMatrix,
    /// Eigenvectors of `m`.
    pub u: ComplexMatrix,
    /// Eigenvalues of `m`, descending.
    pub lambda_eigs: Vec<f64>,
}

pub fn precompute_projection(meas: &Measurement) -> Result<ProjectionContext> {
    let sigma = meas.sigma_pilot;
    if sigma <= 0.0 {
        return Err(Error::InvalidArgument(
            "proximal projection needs a positive noise level; use least squares for noiseless data".into(),
        ));
    }
    let inv_var = 1.0 / (sigma * sigma);
    let p = meas.pilots.matrix();
    let ph = p.conj_transpose();
    let m = p.matmul(&ph)?.scale(inv_var);
    let r = meas.y.matmul(&ph)?.scale(inv_var);
    let evd = m.hermitian_evd()?;
    Ok(ProjectionContext { m, r, u: evd.vectors, lambda_eigs: evd.values })
}

impl ProjectionContext {
    pub fn lambda_min(&self) -> f64 {
        self.lambda_eigs.iter().copied().fold(f64::INFINITY, f64::min).max(0.0)
    }

    /// `U diag(1/(lambda_i + 1/w)) U^H`.
    pub fn gain(&self, w: f64) -> Result<ComplexMatrix> {
        let w = checked_weight(w)?;
        let inv_w = 1.0 / w;
        let diag: Vec<f64> = self.lambda_eigs.iter().map(|&l| 1.0 / (l.max(0.0) + inv_w)).collect();
        self.u.scale_columns(&diag)?.matmul(&self.u.conj_transpose())
    }

    fn project_with_gain(&self, h_tilde: &ComplexMatrix, w: f64, gain: &ComplexMatrix) -> Result<ComplexMatrix> {
        if h_tilde.shape() != self.r.shape() {
            return Err(Error::Shape(format!(
                "state is {}x{}, measurement implies {}x{}",
                h_tilde.rows(),
                h_tilde.cols(),
                self.r.rows(),
                self.r.cols()
            )));
        }
        self.r.lin_comb(1.0, h_tilde, 1.0 / w)?.matmul(gain)
    }
}

fn checked_weight(w: f64) -> Result<f64> {
    if !(w > 0.0) || w > 1.0 {
        return Err(Error::InvalidArgument(format!("proximal weight must lie in (0, 1], got {w}")));
    }
    Ok(w.max(MIN_WEIGHT))
}

/// Minimizer of `||Y - H P||^2 / (2 sigma^2) + ||H - h_tilde||^2 / (2 w)`.
pub fn proximal_project(h_tilde: &ComplexMatrix, w: f64, ctx: &ProjectionContext) -> Result<ComplexMatrix> {
    let w = checked_weight(w)?;
    let gain = ctx.gain(w)?;
    ctx.project_with_gain(h_tilde, w, &gain)
}

/// `t' anchor + (1 - t') h_proj`.
pub fn rectify(h_proj: &ComplexMatrix, anchor: &ComplexMatrix, t_prime: f64) -> Result<ComplexMatrix> {
    if !(0.0..1.0).contains(&t_prime) {
        return Err(Error::InvalidArgument(format!("anchor weight must lie in [0, 1), got {t_prime}")));
    }
    anchor.lin_comb(t_prime, h_proj, 1.0 - t_prime)
}

/// More inner steps at lower noise: `N_min` at `sigma_max`, `N_max` at
/// `sigma_min`, quadratic in the log-noise ratio in between.
pub fn adaptive_inner_steps(sigma_pilot: f64, config: &SolverConfig) -> usize {
    let sigma = sigma_pilot.clamp(config.sigma_min, config.sigma_max);
    let ratio = (config.sigma_max / sigma).log10() / (config.sigma_max / config.sigma_min).log10();
    let span = (config.n_max - config.n_min) as f64;
    config.n_min + (span * ratio * ratio).floor() as usize
}

/// Scalars recorded at one inner step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub outer: usize,
    pub inner: usize,
    pub t: f64,
    pub t_prime: f64,
    pub w: f64,
    /// `||Y - H_proj P||_F`.
    pub residual: f64,
    /// `||H||_F` after rectification.
    pub state_norm: f64,
    pub nmse_db: Option<f64>,
    pub proj_norm: f64,
    pub denoised_norm: f64,
    /// `||R U diag(1/(lambda + 1/w)) U^H||_F`; with `denoised_norm` it
    /// bounds `proj_norm`.
    pub obs_term: f64,
    pub elapsed_ns: u64,
}

impl StepRecord {
    /// Whether the projected state lies in the ball of radius
    /// `obs_term + denoised_norm` (with rounding slack).
    pub fn within_invariant_ball(&self) -> bool {
        let bound = self.obs_term + self.denoised_norm;
        self.proj_norm <= bound * (1.0 + 1e-12) + 1e-300
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub steps: Vec<StepRecord>,
    /// NMSE of each outer output against the ground truth.
    pub nmse_per_outer: Vec<f64>,
    /// `||H^(k+1) - H^(k)||_F` between consecutive outer outputs, starting
    /// from the initial draw.
    pub fixed_point_residuals: Vec<f64>,
    pub snapshots: Vec<(usize, usize, ComplexMatrix)>,
}

impl SolverTrace {
    pub fn invariant_ball_violations(&self) -> usize {
        self.steps.iter().filter(|s| !s.within_invariant_ball()).count()
    }
}

#[derive(Clone, Debug)]
pub struct Estimate {
    pub h_est: ChannelMatrix,
    pub trace: Option<SolverTrace>,
    pub n_inner_used: usize,
}

/// Initial state and first anchor, `CN(0, I)` from the configured seed.
pub fn initial_state(n_r: usize, n_t: usize, seed: u64) -> Result<ComplexMatrix> {
    Rng::new(seed).complex_gaussian(n_r, n_t, 1.0)
}

pub fn run<F: VelocityField + ?Sized>(
    meas: &Measurement,
    field: &F,
    config: &SolverConfig,
    ground_truth: Option<&ChannelMatrix>,
) -> Result<Estimate> {
    let ctx = precompute_projection(meas)?;
    run_with_context(meas, &ctx, field, config, ground_truth)
}

/// [`run`] with a precomputed projection context for `meas`.
pub fn run_with_context<F: VelocityField + ?Sized>(
    meas: &Measurement,
    ctx: &ProjectionContext,
    field: &F,
    config: &SolverConfig,
    ground_truth: Option<&ChannelMatrix>,
) -> Result<Estimate> {
    config.validate()?;
    let dims = meas.dims();
    if let Some(gt) = ground_truth {
        if gt.matrix().shape() != (dims.n_r, dims.n_t) {
            return Err(Error::Shape("ground truth does not match measurement dimensions".into()));
        }
    }
    let init = initial_state(dims.n_r, dims.n_t, config.seed)?;
    run_from(meas, ctx, field, config, ground_truth, init)
}

/// Runs the solver from an explicit initial state, which is also the first
/// anchor.
pub fn run_from<F: VelocityField + ?Sized>(
    meas: &Measurement,
    ctx: &ProjectionContext,
    field: &F,
    config: &SolverConfig,
    ground_truth: Option<&ChannelMatrix>,
    init: ComplexMatrix,
) -> Result<Estimate> {
    config.validate()?;
    let n_inner = config.inner_steps_for(meas.sigma_pilot);
    let ph = meas.pilots.matrix();

    // Schedules and gains depend only on the inner index.
    let mut steps = Vec::with_capacity(n_inner);
    for i in 0..n_inner {
        let t = schedule_t(i, n_inner, config.lambda)?;
        let t_prime = schedule_t_prime(i, n_inner, config.beta)?;
        let w = anneal_weight(t).max(MIN_WEIGHT);
        let gain = ctx.gain(w)?;
        let obs_term = if config.record_trace { ctx.r.matmul(&gain)?.frobenius_norm() } else { 0.0 };
        steps.push((t, t_prime, w, gain, obs_term));
    }

    let mut trace = config.record_trace.then(SolverTrace::default);
    let started = Instant::now();
    let mut state = init;
    for k in 0..config.n_outer {
        let anchor = state.clone();
        for (i, (t, t_prime, w, gain, obs_term)) in steps.iter().enumerate() {
            let h_tilde = denoise(&state, *t, field)?;
            let h_proj = ctx.project_with_gain(&h_tilde, *w, gain)?;
            let next = anchor.lin_comb(*t_prime, &h_proj, 1.0 - t_prime)?;
            if !next.is_finite() {
                return Err(Error::Diverged { outer: k, inner: i });
            }
            if let Some(tr) = trace.as_mut() {
                let residual = meas.y.sub(&h_proj.matmul(ph)?)?.frobenius_norm();
                tr.steps.push(StepRecord {
                    outer: k,
                    inner: i,
                    t: *t,
                    t_prime: *t_prime,
                    w: *w,
                    residual,
                    state_norm: next.frobenius_norm(),
                    nmse_db: ground_truth.map(|gt| nmse_db(&next, gt.matrix())).transpose()?,
                    proj_norm: h_proj.frobenius_norm(),
                    denoised_norm: h_tilde.frobenius_norm(),
                    obs_term: *obs_term,
                    elapsed_ns: started.elapsed().as_nanos() as u64,
                });
                let step = k * n_inner + i;
                if config.snapshot_every.is_some_and(|n| step.is_multiple_of(n)) {
                    tr.snapshots.push((k, i, next.clone()));
                }
            }
            state = next;
        }
        if let Some(tr) = trace.as_mut() {
            tr.fixed_point_residuals.push(state.sub(&anchor)?.frobenius_norm());
            if let Some(gt) = ground_truth {
                tr.nmse_per_outer.push(nmse_db(&state, gt.matrix())?);
            }
        }
    }
    Ok(Estimate { h_est: ChannelMatrix::new(state), trace, n_inner_used: n_inner })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{generate_pilots, observe, PilotMatrix};
    use crate::prior::{GaussianAnalyticField, ZeroField};
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn schedule_values() {
        assert_eq!(schedule_t(0, 7, 3.3).unwrap(), 1.0);
        assert!((schedule_t(5, 10, 2.0).unwrap() - 0.25).abs() < 1e-15);
        assert!((schedule_t(9, 10, 1.0).unwrap() - 0.1).abs() < 1e-15);
        assert!(schedule_t(10, 10, 1.0).is_err());
        assert_eq!(schedule_t_prime(9, 10, 0.5).unwrap(), 0.0);
        assert!((schedule_t_prime(0, 4, 2.0).unwrap() - 0.5625).abs() < 1e-15);
        assert!((schedule_t_prime(0, 4, 16.0).unwrap() - 0.010023).abs() < 1e-6);
        assert!(schedule_t_prime(4, 4, 1.0).is_err());
    }

    #[test]
    fn schedules_strictly_decrease() {
        for &(lambda, beta) in &[(0.5, 0.5), (2.0, 2.0), (2.0, 16.0)] {
            let n = 40;
            for i in 1..n {
                assert!(schedule_t(i, n, lambda).unwrap() < schedule_t(i - 1, n, lambda).unwrap());
                assert!(schedule_t_prime(i, n, beta).unwrap() < schedule_t_prime(i - 1, n, beta).unwrap());
            }
        }
    }

    #[test]
    fn weight_values() {
        assert_eq!(anneal_weight(1.0), 1.0);
        assert_eq!(anneal_weight(0.0), 0.0);
        assert_eq!(anneal_weight(0.5), 0.5);
        assert!((anneal_weight(0.25) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn denoise_cases() {
        let h = Rng::new(1).complex_gaussian(2, 3, 1.0).unwrap();
        let g = GaussianAnalyticField::zero_mean(2, ComplexMatrix::identity(3)).unwrap();
        assert_eq!(denoise(&h, 0.0, &g).unwrap(), h);
        assert_eq!(denoise(&h, 0.7, &ZeroField).unwrap(), h);
        let half = denoise(&h, 1.0, &g).unwrap();
        assert!(half.sub(&h.scale(0.5)).unwrap().max_abs() < 1e-15);
    }

    fn instance(n_r: usize, n_t: usize, n_p: usize, sigma: f64, seed: u64) -> (ChannelMatrix, Measurement) {
        let dims = SystemDims::new(n_r, n_t, n_p).unwrap();
        let mut rng = Rng::new(seed);
        let p = generate_pilots(&dims, &mut rng).unwrap();
        let h = ChannelMatrix::new(rng.complex_gaussian(n_r, n_t, 1.0).unwrap());
        let m = observe(&h, &p, sigma, &mut rng).unwrap();
        (h, m)
    }

    #[test]
    fn projection_context_orthogonal_pilots() {
        // QPSK pilots with orthogonal rows: P P^H = 2 I, so sigma^2 = 2 gives M = I.
        let q = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4);
        let p = PilotMatrix::new(ComplexMatrix::new(2, 2, vec![q, q, q, -q]).unwrap()).unwrap();
        let meas = Measurement::new(ComplexMatrix::zeros(3, 2), p, 2f64.sqrt()).unwrap();
        let ctx = precompute_projection(&meas).unwrap();
        assert!(ctx.m.sub(&ComplexMatrix::identity(2)).unwrap().max_abs() < 1e-15);
        assert!(ctx.lambda_eigs.iter().all(|&l| (l - 1.0).abs() < 1e-14));
    }

    #[test]
    fn projection_context_reconstructs() {
        let (_, meas) = instance(2, 4, 4, 1.0, 3);
        let ctx = precompute_projection(&meas).unwrap();
        let rebuilt = ctx.u.scale_columns(&ctx.lambda_eigs).unwrap().matmul(&ctx.u.conj_transpose()).unwrap();
        assert!(rebuilt.sub(&ctx.m).unwrap().max_abs() <= 1e-10 * ctx.m.max_abs());
        assert!(ctx.lambda_eigs.iter().all(|&l| l >= -1e-10));
    }

    #[test]
    fn zero_noise_context_rejected() {
        let (_, meas) = instance(2, 4, 3, 0.0, 1);
        assert!(precompute_projection(&meas).is_err());
    }

    #[test]
    fn proximal_matches_dense_solve() {
        let (_, meas) = instance(2, 4, 3, 0.3, 11);
        let ctx = precompute_projection(&meas).unwrap();
        let h_tilde = Rng::new(5).complex_gaussian(2, 4, 1.0).unwrap();
        let w = 0.5;
        let got = proximal_project(&h_tilde, w, &ctx).unwrap();
        let lhs = ctx.m.add(&ComplexMatrix::identity(4).scale(1.0 / w)).unwrap();
        let rhs = ctx.r.add(&h_tilde.scale(1.0 / w)).unwrap();
        let want = lhs.solve_right(&rhs).unwrap();
        assert!(got.sub(&want).unwrap().frobenius_norm() <= 1e-10 * want.frobenius_norm());
    }

    #[test]
    fn proximal_fixed_point_and_prior_limit() {
        let dims = SystemDims::new(3, 5, 4).unwrap();
        let mut rng = Rng::new(8);
        let p = generate_pilots(&dims, &mut rng).unwrap();
        let h = rng.complex_gaussian(3, 5, 1.0).unwrap();
        let y = h.matmul(p.matrix()).unwrap();
        let ctx = precompute_projection(&Measurement::new(y, p, 0.2).unwrap()).unwrap();
        let stay = proximal_project(&h, 0.7, &ctx).unwrap();
        assert!(stay.sub(&h).unwrap().max_abs() < 1e-10);

        let other = rng.complex_gaussian(3, 5, 1.0).unwrap();
        let near = proximal_project(&other, 1e-8, &ctx).unwrap();
        let dev = near.sub(&other).unwrap().frobenius_norm() / other.frobenius_norm();
        assert!(dev <= 1e-6 * (1.0 + ctx.r.frobenius_norm()), "{dev}");
        assert!(proximal_project(&other, 0.0, &ctx).is_err());
        assert!(proximal_project(&other, -0.1, &ctx).is_err());
    }

    #[test]
    fn rectify_cases() {
        let mut rng = Rng::new(2);
        let a = rng.complex_gaussian(2, 2, 1.0).unwrap();
        let b = rng.complex_gaussian(2, 2, 1.0).unwrap();
        assert_eq!(rectify(&a, &b, 0.0).unwrap(), a);
        assert!(rectify(&a, &a, 0.37).unwrap().sub(&a).unwrap().max_abs() < 1e-15);
        let z = ComplexMatrix::zeros(2, 2);
        assert!(rectify(&a, &z, 0.5).unwrap().sub(&a.scale(0.5)).unwrap().max_abs() < 1e-15);
        assert!(rectify(&a, &ComplexMatrix::zeros(3, 2), 0.5).is_err());
        assert!(rectify(&a, &b, 1.0).is_err());
    }

    #[test]
    fn adaptive_budget() {
        let cfg = SolverConfig { n_inner: InnerSteps::Adaptive, ..SolverConfig::default() };
        assert_eq!(adaptive_inner_steps(cfg.sigma_max, &cfg), 3);
        assert_eq!(adaptive_inner_steps(cfg.sigma_min, &cfg), 50);
        assert_eq!(adaptive_inner_steps((cfg.sigma_max * cfg.sigma_min).sqrt(), &cfg), 14);
        assert_eq!(adaptive_inner_steps(1e9, &cfg), 3);
        assert_eq!(adaptive_inner_steps(1e-9, &cfg), 50);
        assert_eq!(cfg.inner_steps_for(cfg.sigma_min), 50);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = [
            SolverConfig { n_min: 0, ..Default::default() },
            SolverConfig { n_max: 2, ..Default::default() },
            SolverConfig { sigma_min: 5.0, ..Default::default() },
            SolverConfig { n_outer: 0, ..Default::default() },
            SolverConfig { n_inner: InnerSteps::Fixed(0), ..Default::default() },
            SolverConfig { lambda: -1.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn scalar_hand_trace() {
        let one = ComplexMatrix::new(1, 1, vec![Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4)]).unwrap();
        let p = PilotMatrix::new(one.clone()).unwrap();
        let y = ComplexMatrix::new(1, 1, vec![c(0.8, -0.3)]).unwrap();
        let meas = Measurement::new(y.clone(), p, 1.0).unwrap();
        let field = GaussianAnalyticField::zero_mean(1, ComplexMatrix::identity(1)).unwrap();
        let cfg = SolverConfig { n_outer: 1, n_inner: InnerSteps::Fixed(1), seed: 77, ..Default::default() };
        let h0 = initial_state(1, 1, 77).unwrap()[(0, 0)];
        let out = run(&meas, &field, &cfg, None).unwrap().h_est.matrix()[(0, 0)];
        // M = |p|^2 = 1, R = y p*, H_proj = (R + H0/2) / 2.
        let r = y[(0, 0)] * one[(0, 0)].conj();
        let want = (r + h0 * 0.5) * 0.5;
        assert!((out - want).norm() < 1e-15, "{out} vs {want}");
    }

    #[test]
    fn near_noiseless_run_is_accurate() {
        let (h, meas) = instance(4, 8, 8, 1e-6, 21);
        let field = GaussianAnalyticField::zero_mean(4, ComplexMatrix::identity(8)).unwrap();
        let cfg = SolverConfig { n_outer: 3, n_inner: InnerSteps::Fixed(10), ..Default::default() };
        let est = run(&meas, &field, &cfg, Some(&h)).unwrap();
        let nmse = nmse_db(est.h_est.matrix(), h.matrix()).unwrap();
        assert!(nmse <= -40.0, "{nmse}");
    }

    #[test]
    fn disjoint_seeds_agree_at_high_snr_with_full_pilots() {
        let (_, meas) = instance(4, 8, 8, 0.01, 4);
        let field = GaussianAnalyticField::zero_mean(4, ComplexMatrix::identity(8)).unwrap();
        let cfg = SolverConfig { n_outer: 20, n_inner: InnerSteps::Fixed(10), ..Default::default() };
        let a = run(&meas, &field, &SolverConfig { seed: 1, ..cfg.clone() }, None).unwrap().h_est;
        let b = run(&meas, &field, &SolverConfig { seed: 2, ..cfg }, None).unwrap().h_est;
        let rel = a.matrix().sub(b.matrix()).unwrap().frobenius_norm() / a.matrix().frobenius_norm();
        assert!(rel < 1e-3, "{rel}");
    }

    #[test]
    fn run_is_deterministic_and_traced() {
        let (h, meas) = instance(2, 6, 4, 0.3, 9);
        let field = GaussianAnalyticField::zero_mean(2, ComplexMatrix::identity(6)).unwrap();
        let cfg = SolverConfig {
            n_outer: 3,
            n_inner: InnerSteps::Fixed(5),
            record_trace: true,
            snapshot_every: Some(5),
            ..Default::default()
        };
        let a = run(&meas, &field, &cfg, Some(&h)).unwrap();
        let b = run(&meas, &field, &cfg, Some(&h)).unwrap();
        assert_eq!(a.h_est, b.h_est);
        let tr = a.trace.unwrap();
        assert_eq!(tr.steps.len(), 15);
        assert_eq!(tr.nmse_per_outer.len(), 3);
        assert_eq!(tr.fixed_point_residuals.len(), 3);
        assert_eq!(tr.snapshots.len(), 3);
        assert_eq!(tr.invariant_ball_violations(), 0);
        assert_eq!(tr.steps.last().unwrap().t_prime, 0.0);
        let final_nmse = tr.steps.last().unwrap().nmse_db.unwrap();
        assert_eq!(final_nmse, *tr.nmse_per_outer.last().unwrap());
    }

    #[test]
    fn diverging_field_reports_step() {
        struct Blowup;
        impl VelocityField for Blowup {
            fn eval(&self, h: &ComplexMatrix, _t: f64) -> Result<ComplexMatrix> {
                Ok(h.map(|_| c(f64::INFINITY, 0.0)))
            }
        }
        let (_, meas) = instance(1, 2, 2, 0.5, 1);
        let cfg = SolverConfig { n_outer: 2, n_inner: InnerSteps::Fixed(3), ..Default::default() };
        let err = run(&meas, &Blowup, &cfg, None).unwrap_err();
        assert!(matches!(err, Error::Diverged { outer: 0, inner: 0 }), "{err}");
    }
}
