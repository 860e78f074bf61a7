//! Detection and tracking statistics from the moments of the conditional
//! detection probability.

mod moments;
mod params;
pub mod quadrature;
mod runlength;
mod tracking;

use thiserror::Error;

pub use moments::{moment_table, moment_zeta, MomentKernel, MomentTable};
pub use params::{total_slots, Densities, MacParams, RadarParams, DEFAULT_THRESHOLD_DB};
pub use quadrature::{QuadratureConfig, QuadratureError};
pub use runlength::{
    binomial, eval_polynomial, run_ccdf_demoivre, run_ccdf_dp, run_ccdf_polynomial,
    MAX_POLYNOMIAL_LEN,
};
pub use tracking::{
    detection_prob_conditional, expected_burst_count, expected_max_run, expected_tracking_length,
    expected_tracking_length_infinite, tracking_prob, tracking_prob_beta, tracking_prob_demoivre,
    tracking_prob_polynomial, tracking_prob_robust, TrackingMethod, TrackingValue,
    DEFAULT_MAX_TRACKING_ERROR,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("moment of order {needed} requested but the table stops at {available}")]
    InsufficientMoments { needed: usize, available: usize },
    #[error("{what} is numerically unstable here (error bound {error_bound:e})")]
    Unstable {
        what: &'static str,
        error_bound: f64,
    },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}
