//! Shared fixtures for the criterion benchmarks.

use rcflow_core::measurement::{generate_pilots, observe, snr_to_sigma};
use rcflow_core::{ChannelMatrix, Measurement, Rng, SnrConvention, SystemDims};

/// A Gaussian channel and its pilot observation at the given SNR.
pub fn instance(dims: SystemDims, snr_db: f64, seed: u64) -> (ChannelMatrix, Measurement) {
    let mut rng = Rng::new(seed);
    let pilots = generate_pilots(&dims, &mut rng).expect("valid dims");
    let h = ChannelMatrix::new(rng.complex_gaussian(dims.n_r, dims.n_t, 1.0).expect("unit variance"));
    let sigma = snr_to_sigma(snr_db, SnrConvention::PilotDomain, &dims);
    let meas = observe(&h, &pilots, sigma, &mut rng).expect("matching dims");
    (h, meas)
}
