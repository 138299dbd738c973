//! Reference vehicle state estimation for roofed and GNSS-denied areas.
//!
//! The pipeline has three stages: an IMU-only standstill classifier
//! ([`ssc`]) gates an extended Kalman filter ([`ekf`]) whose drift is
//! corrected by LiDAR marker positioning ([`lbpm`]). The [`sim`] module
//! generates ground truth and sensor streams for verification.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ekf;
pub mod error;
pub mod eval;
pub mod io;
pub mod lbpm;
pub mod pipeline;
pub mod profile;
pub mod sim;
pub mod ssc;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    circular_mean, lcp_to_ltp, ltp_to_lcp, normalize_angle, rotate, wrap_two_pi, ImuSample,
    LtpPose, MotionState, Rotation2, Vec2,
};
