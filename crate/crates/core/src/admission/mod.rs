//! Flyover admission at the border router: the allocation matrix, the ρ
//! estimator, the pluggable bandwidth policy and setup-request handling.

pub mod estimator;
pub mod filter;
pub mod matrix;
pub mod policy;
mod setup;

pub use estimator::{
    flyover_bandwidth, Admission, EstimatorConfig, Fraction, Grant, RhoEstimator,
};
pub use filter::{BloomFilter, FilterConfig, MembershipFilter};
pub use matrix::{AllocationMatrix, MatrixError, MatrixState, ScheduledUpdate};
pub use policy::{BandwidthPolicy, EstimatorPolicy, EstimatorScope, PolicyRequest};
pub use setup::{admit_setup, SetupVerdict};
