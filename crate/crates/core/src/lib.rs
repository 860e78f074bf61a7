//! Tracking probability of an automotive radar in a street network of randomly
//! placed radar-equipped vehicles.
//!
//! Streets form a Poisson line process and vehicles a Poisson point process on
//! every street. Each radar accesses the channel for a block of `T` slots with
//! probability `delta`; the ego radar tracks its target when it detects it in
//! `nu` consecutive slots. The crate provides
//!
//! * [`geometry`]: sampling of street networks and the interferer rules,
//! * [`analytics`]: detection-probability moments by quadrature and the
//!   tracking statistics built on them,
//! * [`simulator`]: a Monte Carlo oracle working slot by slot,
//! * [`optimizer`]: the frame design `(delta, N)` for a latency deadline.

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod geometry;
pub mod optimizer;
pub mod simulator;
pub mod units;
