use rcflow_core::analysis::{nmse_db, rho_p_analytic, spectral_report, SpectralOptions};
use rcflow_core::baselines::lmmse;
use rcflow_core::measurement::{generate_pilots, observe, snr_to_sigma};
use rcflow_core::solver::{precompute_projection, run, InnerSteps};
use rcflow_core::{
    ChannelMatrix, ComplexMatrix, GaussianAnalyticField, Measurement, Rng, SnrConvention, SolverConfig, SystemDims,
};

fn instance(dims: SystemDims, snr_db: f64, seed: u64) -> (ChannelMatrix, Measurement) {
    let mut rng = Rng::new(seed);
    let p = generate_pilots(&dims, &mut rng).unwrap();
    let h = ChannelMatrix::new(rng.complex_gaussian(dims.n_r, dims.n_t, 1.0).unwrap());
    let sigma = snr_to_sigma(snr_db, SnrConvention::PilotDomain, &dims);
    let m = observe(&h, &p, sigma, &mut rng).unwrap();
    (h, m)
}

fn field(dims: &SystemDims) -> GaussianAnalyticField {
    GaussianAnalyticField::zero_mean(dims.n_r, ComplexMatrix::identity(dims.n_t)).unwrap()
}

#[test]
fn fixed_point_residual_eventually_decreases() {
    let dims = SystemDims::with_pilot_density(4, 16, 0.6).unwrap();
    for seed in 0..5 {
        let (h, meas) = instance(dims, 30.0, seed);
        let cfg = SolverConfig { n_outer: 20, record_trace: true, seed: 100 + seed, ..Default::default() };
        let trace = run(&meas, &field(&dims), &cfg, Some(&h)).unwrap().trace.unwrap();
        let r = &trace.fixed_point_residuals;
        let start = r.len() / 4;
        for k in start + 1..r.len() {
            assert!(r[k] <= r[k - 1] * (1.0 + 1e-9), "seed {seed} outer {k}: {} > {}", r[k], r[k - 1]);
        }
    }
}

#[test]
fn estimates_approach_the_posterior_mean_with_more_outer_passes() {
    let dims = SystemDims::with_pilot_density(4, 16, 0.6).unwrap();
    let (h, meas) = instance(dims, 10.0, 7);
    let post = lmmse(&meas, &ComplexMatrix::identity(16)).unwrap();
    let gap = |n_outer| {
        let cfg = SolverConfig { n_outer, ..Default::default() };
        let est = run(&meas, &field(&dims), &cfg, Some(&h)).unwrap().h_est;
        est.matrix().sub(post.matrix()).unwrap().frobenius_norm() / post.matrix().frobenius_norm()
    };
    let (g1, g10, g60) = (gap(1), gap(10), gap(60));
    assert!(g10 < g1 && g60 < g10, "{g1} {g10} {g60}");
}

#[test]
fn full_pilots_make_seeds_irrelevant_at_high_snr() {
    let dims = SystemDims::new(4, 16, 16).unwrap();
    let (_, meas) = instance(dims, 30.0, 3);
    let cfg = SolverConfig { n_outer: 20, ..Default::default() };
    let a = run(&meas, &field(&dims), &SolverConfig { seed: 1, ..cfg.clone() }, None).unwrap().h_est;
    let b = run(&meas, &field(&dims), &SolverConfig { seed: 2, ..cfg }, None).unwrap().h_est;
    let rel = a.matrix().sub(b.matrix()).unwrap().frobenius_norm() / a.matrix().frobenius_norm();
    assert!(rel < 1e-3, "{rel}");
}

#[test]
fn projection_radius_increases_along_the_schedule_with_excess_pilots() {
    // With more pilots than antennas M is positive definite, so the radius
    // 1/(w lambda_min + 1) grows strictly as w falls.
    let dims = SystemDims::new(2, 6, 9).unwrap();
    let (_, meas) = instance(dims, 5.0, 1);
    let cfg = SolverConfig { n_outer: 1, n_inner: InnerSteps::Fixed(12), ..Default::default() };
    let report = spectral_report(&meas, &field(&dims), &cfg, &SpectralOptions::default()).unwrap();
    for pair in report.steps.windows(2) {
        assert!(pair[1].rho_p > pair[0].rho_p);
    }
    let last = report.steps.last().unwrap();
    assert!((last.rho_d - 1.0 / (1.0 + last.t * last.t)).abs() < 1e-15);
    assert!(last.rho_d > 0.99);
}

#[test]
fn projection_radius_is_one_with_fewer_pilots() {
    let dims = SystemDims::with_pilot_density(4, 16, 0.6).unwrap();
    let (_, meas) = instance(dims, 10.0, 2);
    let ctx = precompute_projection(&meas).unwrap();
    for w in [1e-3, 0.2, 1.0] {
        assert_eq!(rho_p_analytic(&ctx, w), 1.0);
    }
}

#[test]
fn output_nmse_is_reported_per_outer_pass() {
    let dims = SystemDims::with_pilot_density(4, 16, 0.6).unwrap();
    let (h, meas) = instance(dims, 20.0, 4);
    let cfg = SolverConfig { n_outer: 4, record_trace: true, ..Default::default() };
    let est = run(&meas, &field(&dims), &cfg, Some(&h)).unwrap();
    let trace = est.trace.unwrap();
    assert_eq!(trace.nmse_per_outer.len(), 4);
    let last = nmse_db(est.h_est.matrix(), h.matrix()).unwrap();
    assert_eq!(*trace.nmse_per_outer.last().unwrap(), last);
    assert_eq!(est.n_inner_used, 30);
}
