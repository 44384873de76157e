//! Shared fixtures for the criterion benchmarks.

use entsim_core::squeezer::predict_covariance;
use entsim_core::{AcquisitionConfig, GaussianState, SqueezerParams};

/// The published operating point used throughout the benchmarks.
pub fn reference_state() -> GaussianState {
    let params = SqueezerParams {
        s: 5.41,
        alpha: 0.1304,
        beta: 0.202,
        phi1: 0.0,
        phi2: 0.0,
        g1: 1.0,
        g2: 1.0,
    };
    predict_covariance(&params, 0.51, true).expect("reference point is valid")
}

/// Standard geometry shrunk to `records` records so a single iteration
/// stays in the millisecond range.
pub fn bench_config(records: u32) -> AcquisitionConfig {
    AcquisitionConfig {
        n_records: records,
        ..AcquisitionConfig::standard(0xBEC)
    }
}
