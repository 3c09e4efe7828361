use rcflow_core::baselines::{least_squares, lmmse, LmmseContext};
use rcflow_core::channelgen::GaussianChannelModel;
use rcflow_core::measurement::{generate_pilots, observe};
use rcflow_core::{Complex64, ComplexMatrix, Measurement, Rng, SystemDims};

/// Solves a dense real system by Gauss-Jordan elimination with partial
/// pivoting.
fn real_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    (0..n).map(|i| b[i] / a[i][i]).collect()
}

/// Posterior mean of one channel row given its observed row, from the joint
/// real Gaussian law of `(Re h, Im h, Re y, Im y)`.
///
/// For a circular complex vector with `E[z z^H] = C` the real covariance of
/// `[Re z; Im z]` is `1/2 [[Re C, -Im C], [Im C, Re C]]`.
fn brute_force_row(r_h: &ComplexMatrix, p: &ComplexMatrix, sigma: f64, y: &[Complex64]) -> Vec<Complex64> {
    let (n_t, n_p) = p.shape();
    // Column vector x = h^T has covariance E[x x^H] = conj(R_H).
    let cx = r_h.map(|z| z.conj());
    // y^T = P^T x + n^T.
    let pt = p.transpose();
    let cyy = pt
        .matmul(&cx)
        .unwrap()
        .matmul(&pt.conj_transpose())
        .unwrap()
        .add(&ComplexMatrix::identity(n_p).scale(sigma * sigma))
        .unwrap();
    let cxy = cx.matmul(&pt.conj_transpose()).unwrap();
    let real_block = |c: &ComplexMatrix| -> Vec<Vec<f64>> {
        let (r, k) = c.shape();
        (0..2 * r)
            .map(|i| {
                (0..2 * k)
                    .map(|j| {
                        let z = c[(i % r, j % k)];
                        0.5 * match (i < r, j < k) {
                            (true, true) | (false, false) => z.re,
                            (true, false) => -z.im,
                            (false, true) => z.im,
                        }
                    })
                    .collect()
            })
            .collect()
    };
    let syy = real_block(&cyy);
    let sxy = real_block(&cxy);
    let yr: Vec<f64> = y.iter().map(|z| z.re).chain(y.iter().map(|z| z.im)).collect();
    let alpha = real_solve(syy, yr);
    let xr: Vec<f64> = sxy.iter().map(|row| row.iter().zip(&alpha).map(|(a, b)| a * b).sum()).collect();
    (0..n_t).map(|k| Complex64::new(xr[k], xr[n_t + k])).collect()
}

#[test]
fn matches_joint_gaussian_posterior_mean() {
    for (seed, (n_r, n_t, n_p)) in [(2, 4, 3), (3, 5, 5), (1, 6, 8), (2, 3, 1)].into_iter().enumerate() {
        let dims = SystemDims::new(n_r, n_t, n_p).unwrap();
        let model = GaussianChannelModel::exponential(dims, 0.6).unwrap();
        let mut rng = Rng::new(seed as u64);
        // A complex (non-real) covariance exercises the conjugation convention.
        let a = rng.complex_gaussian(n_t, n_t, 1.0).unwrap();
        let r_h = a.matmul(&a.conj_transpose()).unwrap().add(&model.row_cov).unwrap();
        let pilots = generate_pilots(&dims, &mut rng).unwrap();
        let y = rng.complex_gaussian(n_r, n_p, 2.0).unwrap();
        let sigma = 0.7;
        let meas = Measurement::new(y.clone(), pilots.clone(), sigma).unwrap();
        let est = lmmse(&meas, &r_h).unwrap();
        for i in 0..n_r {
            let want = brute_force_row(&r_h, pilots.matrix(), sigma, y.row(i));
            for (k, w) in want.iter().enumerate() {
                let got = est.matrix()[(i, k)];
                assert!((got - w).norm() <= 1e-9 * (1.0 + w.norm()), "row {i} col {k}: {got} vs {w}");
            }
        }
    }
}

fn mse(est: &ComplexMatrix, truth: &ComplexMatrix) -> f64 {
    est.sub(truth).unwrap().frobenius_norm_sq()
}

#[test]
fn lmmse_dominates_least_squares_and_zero() {
    for (n_p, check_ls) in [(8, true), (5, false)] {
        let dims = SystemDims::new(4, 8, n_p).unwrap();
        let model = GaussianChannelModel::exponential(dims, 0.5).unwrap();
        let ctx_pilots = generate_pilots(&dims, &mut Rng::new(99)).unwrap();
        let sigma = 1.0;
        let ctx = LmmseContext::new(&ctx_pilots, sigma, model.row_cov.clone()).unwrap();
        let (mut e_lmmse, mut e_ls, mut e_zero) = (0.0, 0.0, 0.0);
        for k in 0..300 {
            let mut rng = Rng::new(1000 + k);
            let h = model.sample(&mut rng);
            let meas = observe(&h, &ctx_pilots, sigma, &mut rng).unwrap();
            e_lmmse += mse(ctx.estimate(&meas.y).unwrap().matrix(), h.matrix());
            e_zero += h.matrix().frobenius_norm_sq();
            if check_ls {
                e_ls += mse(least_squares(&meas).unwrap().matrix(), h.matrix());
            }
        }
        assert!(e_lmmse <= e_zero, "{e_lmmse} vs zero {e_zero}");
        if check_ls {
            assert!(e_lmmse <= e_ls, "{e_lmmse} vs ls {e_ls}");
        }
    }
}
