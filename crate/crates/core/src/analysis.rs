//! Error metrics and diagnostics for the solver's contraction behaviour.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::measurement::Measurement;
use crate::prior::VelocityField;
use crate::rng::Rng;
use crate::solver::{
    anneal_weight, denoise, initial_state, precompute_projection, proximal_project, rectify, schedule_t,
    schedule_t_prime, ProjectionContext, SolverConfig, SolverTrace,
};

/// `||est - truth||^2 / ||truth||^2`.
pub fn nmse_linear(est: &ComplexMatrix, truth: &ComplexMatrix) -> Result<f64> {
    let denom = truth.frobenius_norm_sq();
    if denom == 0.0 {
        return Err(Error::InvalidArgument("NMSE against an all-zero channel is undefined".into()));
    }
    Ok(est.sub(truth)?.frobenius_norm_sq() / denom)
}

/// NMSE in dB; an exact estimate gives `-inf`.
pub fn nmse_db(est: &ComplexMatrix, truth: &ComplexMatrix) -> Result<f64> {
    Ok(10.0 * nmse_linear(est, truth)?.log10())
}

/// dB of the mean linear NMSE over trials.
pub fn mean_nmse_db(linear: &[f64]) -> f64 {
    if linear.is_empty() {
        return f64::NAN;
    }
    10.0 * (linear.iter().sum::<f64>() / linear.len() as f64).log10()
}

/// Finite stand-in for a dB value in text exports, plus whether it was
/// `-inf`.
pub fn export_db(db: f64) -> (f64, bool) {
    if db == f64::NEG_INFINITY {
        (f64::MIN, true)
    } else {
        (db, false)
    }
}

/// `max_i 1 / (w lambda_i + 1)`, the spectral radius of the proximal step's
/// linear part.
pub fn rho_p_analytic(ctx: &ProjectionContext, w: f64) -> f64 {
    1.0 / (w * ctx.lambda_min() + 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerIteration {
    pub radius: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration on the Jacobian of `op` at `point`, with Jacobian-vector
/// products by central differences of step `fd_step`. Each iterate's
/// estimate is `||J v|| / ||v||`; iteration stops once successive estimates
/// differ by less than `tol` relative.
pub fn spectral_radius_fd<Op>(
    op: Op,
    point: &ComplexMatrix,
    fd_step: f64,
    iters: usize,
    tol: f64,
    rng: &mut Rng,
) -> Result<PowerIteration>
where
    Op: Fn(&ComplexMatrix) -> Result<ComplexMatrix>,
{
    if !(fd_step > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {fd_step}")));
    }
    let mut v = rng.complex_gaussian(point.rows(), point.cols(), 1.0)?;
    v = v.scale(1.0 / v.frobenius_norm());
    let mut prev = f64::NAN;
    for k in 1..=iters {
        let plus = op(&point.lin_comb(1.0, &v, fd_step)?)?;
        let minus = op(&point.lin_comb(1.0, &v, -fd_step)?)?;
        let jv = plus.lin_comb(0.5 / fd_step, &minus, -0.5 / fd_step)?;
        if !jv.is_finite() {
            return Err(Error::NonFinite("Jacobian-vector product".into()));
        }
        let est = jv.frobenius_norm();
        if est == 0.0 {
            return Ok(PowerIteration { radius: 0.0, iterations: k, converged: true });
        }
        if (est - prev).abs() <= tol * est {
            return Ok(PowerIteration { radius: est, iterations: k, converged: true });
        }
        prev = est;
        v = jv.scale(1.0 / est);
    }
    Ok(PowerIteration { radius: prev, iterations: iters, converged: false })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusMethod {
    Analytic,
    PowerIteration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralStep {
    pub outer: usize,
    pub inner: usize,
    pub t: f64,
    pub w: f64,
    pub rho_d: f64,
    pub rho_d_method: RadiusMethod,
    pub rho_p: f64,
    pub rho_p_method: RadiusMethod,
    pub rho_t: f64,
    pub rho_t_method: RadiusMethod,
    pub rho_t_converged: bool,
}

impl SpectralStep {
    /// `rho_p * rho_d`, exact for the composite when the denoiser Jacobian is
    /// a multiple of the identity.
    pub fn product(&self) -> f64 {
        self.rho_p * self.rho_d
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub steps: Vec<SpectralStep>,
}

impl SpectralReport {
    pub fn max_rho_t(&self) -> f64 {
        self.steps.iter().map(|s| s.rho_t).fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralOptions {
    pub fd_step: f64,
    pub iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self { fd_step: 1e-5, iters: 500, tol: 1e-10, seed: 0 }
    }
}

/// Follows the solver trajectory and, at every inner step, measures the
/// Jacobian radii of the denoiser, the proximal step, and their composite at
/// the current state.
pub fn spectral_report<F: VelocityField + ?Sized>(
    meas: &Measurement,
    field: &F,
    config: &SolverConfig,
    opts: &SpectralOptions,
) -> Result<SpectralReport> {
    config.validate()?;
    let ctx = precompute_projection(meas)?;
    let dims = meas.dims();
    let n_inner = config.inner_steps_for(meas.sigma_pilot);
    let mut rng = Rng::new(opts.seed);
    let mut state = initial_state(dims.n_r, dims.n_t, config.seed)?;
    let mut report = SpectralReport::default();

    for k in 0..config.n_outer {
        let anchor = state.clone();
        for i in 0..n_inner {
            let t = schedule_t(i, n_inner, config.lambda)?;
            let t_prime = schedule_t_prime(i, n_inner, config.beta)?;
            let w = anneal_weight(t);

            let (rho_d, rho_d_method) = match field.analytic_denoiser_radius(t) {
                Some(r) => (r, RadiusMethod::Analytic),
                None => {
                    let pi = spectral_radius_fd(
                        |x| denoise(x, t, field),
                        &state,
                        opts.fd_step,
                        opts.iters,
                        opts.tol,
                        &mut rng,
                    )?;
                    (pi.radius, RadiusMethod::PowerIteration)
                }
            };
            let composite = |x: &ComplexMatrix| proximal_project(&denoise(x, t, field)?, w, &ctx);
            let rho_t = spectral_radius_fd(composite, &state, opts.fd_step, opts.iters, opts.tol, &mut rng)?;
            report.steps.push(SpectralStep {
                outer: k,
                inner: i,
                t,
                w,
                rho_d,
                rho_d_method,
                rho_p: rho_p_analytic(&ctx, w),
                rho_p_method: RadiusMethod::Analytic,
                rho_t: rho_t.radius,
                rho_t_method: RadiusMethod::PowerIteration,
                rho_t_converged: rho_t.converged,
            });

            let h_proj = proximal_project(&denoise(&state, t, field)?, w, &ctx)?;
            state = rectify(&h_proj, &anchor, t_prime)?;
            if !state.is_finite() {
                return Err(Error::Diverged { outer: k, inner: i });
            }
        }
    }
    Ok(report)
}

/// `P_0 + sum_i t'_i P_{i+1}` with `P_j = prod_{n=j}^{N-1} (1 - t'_n)`: the
/// total weight that unrolled rectification places on the anchor and the
/// projected estimates. Equals 1.
pub fn partition_of_unity(n_inner: usize, beta: f64) -> Result<f64> {
    if n_inner == 0 {
        return Err(Error::InvalidArgument("n_inner must be at least 1".into()));
    }
    let t_prime: Vec<f64> = (0..n_inner)
        .map(|i| schedule_t_prime(i, n_inner, beta))
        .collect::<Result<_>>()?;
    // prod[j] = P_j, prod[n_inner] = 1.
    let mut prod = vec![1.0; n_inner + 1];
    for j in (0..n_inner).rev() {
        prod[j] = prod[j + 1] * (1.0 - t_prime[j]);
    }
    Ok(prod[0] + (0..n_inner).map(|i| t_prime[i] * prod[i + 1]).sum::<f64>())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsSummary {
    pub nmse_per_outer: Vec<f64>,
    pub sweet_spot_index: usize,
    pub sweet_spot_nmse: f64,
    /// Mean over the last tenth of the outer iterations (at least one).
    pub plateau_nmse: f64,
}

pub fn dynamics_summary(nmse_per_outer: &[f64]) -> Result<DynamicsSummary> {
    if nmse_per_outer.is_empty() {
        return Err(Error::InvalidArgument("no outer iterations to summarise".into()));
    }
    let (idx, best) = nmse_per_outer
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, v)| if v < bv { (i, v) } else { (bi, bv) });
    let tail = nmse_per_outer.len().div_ceil(10).max(1);
    let plateau = nmse_per_outer[nmse_per_outer.len() - tail..].iter().sum::<f64>() / tail as f64;
    Ok(DynamicsSummary {
        nmse_per_outer: nmse_per_outer.to_vec(),
        sweet_spot_index: idx,
        sweet_spot_nmse: best,
        plateau_nmse: plateau,
    })
}

/// Largest denoised-state norm seen along a traced run: an empirical value
/// for the prior's output bound.
pub fn bounded_denoiser_estimate(trace: &SolverTrace) -> f64 {
    trace.steps.iter().map(|s| s.denoised_norm).fold(0.0, f64::max)
}
