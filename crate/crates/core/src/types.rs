//! Planar frames and the records shared by every estimation stage.
//!
//! The world frame is the local tangent plane (x east, y north). The body
//! frame sits at the centre of sprung mass with x towards the hood and y
//! towards the driver. Both planes are assumed parallel, so every transform
//! here is a 2D rigid motion and z never enters the math. Angles are
//! counter-clockwise positive and headings are measured from the world x axis
//! to the body x axis.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

/// Planar vector in metres.
pub type Vec2 = nalgebra::Vector2<f64>;

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = a.rem_euclid(TAU);
    if r > PI {
        let w = r - TAU;
        if w <= -PI {
            PI
        } else {
            w
        }
    } else {
        r
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_two_pi(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Circular mean of a set of angles, in `(-π, π]`.
pub fn circular_mean(angles: impl IntoIterator<Item = f64>) -> f64 {
    let (s, c) = angles
        .into_iter()
        .fold((0.0, 0.0), |(s, c), a| (s + a.sin(), c + a.cos()));
    normalize_angle(s.atan2(c))
}

/// Counter-clockwise planar rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation2 {
    pub angle: f64,
}

impl Rotation2 {
    pub fn new(angle: f64) -> Self {
        Self { angle }
    }

    pub fn inverse(self) -> Self {
        Self { angle: -self.angle }
    }

    pub fn apply(self, p: Vec2) -> Vec2 {
        rotate(p, self)
    }
}

/// Returns `R(angle)·p`.
pub fn rotate(p: Vec2, r: Rotation2) -> Vec2 {
    let (s, c) = r.angle.sin_cos();
    Vec2::new(c * p.x - s * p.y, s * p.x + c * p.y)
}

/// Pose of the body origin in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LtpPose {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
}

impl LtpPose {
    /// Builds a pose with the heading wrapped into `(-π, π]`.
    pub fn new(x: f64, y: f64, psi: f64) -> Self {
        Self {
            x,
            y,
            psi: normalize_angle(psi),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.psi.is_finite()
    }

    /// Applies a body-frame displacement `(dx, dy, dpsi)` expressed in this
    /// pose's own frame.
    pub fn compose(&self, dx: f64, dy: f64, dpsi: f64) -> Self {
        let p = lcp_to_ltp(Vec2::new(dx, dy), self);
        Self::new(p.x, p.y, self.psi + dpsi)
    }
}

/// Maps a body-frame point into the world frame.
pub fn lcp_to_ltp(p_lcp: Vec2, pose: &LtpPose) -> Vec2 {
    pose.position() + rotate(p_lcp, Rotation2::new(pose.psi))
}

/// Inverse of [`lcp_to_ltp`].
pub fn ltp_to_lcp(p_ltp: Vec2, pose: &LtpPose) -> Vec2 {
    rotate(p_ltp - pose.position(), Rotation2::new(-pose.psi))
}

/// One six-axis IMU sample in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ImuSample {
    /// Seconds since the run epoch.
    pub t: f64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
    pub roll_rate: f64,
    pub pitch_rate: f64,
    pub yaw_rate: f64,
}

impl ImuSample {
    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.ax,
            self.ay,
            self.az,
            self.roll_rate,
            self.pitch_rate,
            self.yaw_rate,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Vehicle motion class used by the standstill classifier.
///
/// The discriminants are the on-disk label encoding (0 standstill, 1 motion).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MotionState {
    Standstill = 0,
    Motion = 1,
}

impl MotionState {
    pub fn from_label(label: u8) -> Option<Self> {
        match label {
            0 => Some(MotionState::Standstill),
            1 => Some(MotionState::Motion),
            _ => None,
        }
    }

    pub fn label(self) -> u8 {
        self as u8
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn close(a: Vec2, b: Vec2, tol: f64) {
        assert!((a - b).norm() < tol, "{a:?} != {b:?}");
    }

    #[test]
    fn rotate_examples() {
        close(
            rotate(Vec2::new(1.0, 0.0), Rotation2::new(PI / 2.0)),
            Vec2::new(0.0, 1.0),
            1e-12,
        );
        close(
            rotate(Vec2::new(3.0, 4.0), Rotation2::new(0.0)),
            Vec2::new(3.0, 4.0),
            1e-15,
        );
        close(
            rotate(Vec2::new(1.0, 1.0), Rotation2::new(PI)),
            Vec2::new(-1.0, -1.0),
            1e-12,
        );
    }

    #[test]
    fn lcp_to_ltp_examples() {
        close(
            lcp_to_ltp(Vec2::new(2.0, 0.0), &LtpPose::new(0.0, 0.0, 0.0)),
            Vec2::new(2.0, 0.0),
            1e-15,
        );
        close(
            lcp_to_ltp(Vec2::new(2.0, 0.0), &LtpPose::new(1.0, 1.0, PI / 2.0)),
            Vec2::new(1.0, 3.0),
            1e-12,
        );
        close(
            lcp_to_ltp(Vec2::new(1.0, 2.0), &LtpPose::new(5.0, -3.0, PI)),
            Vec2::new(4.0, -5.0),
            1e-12,
        );
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_angle(0.0), 0.0);
        assert_abs_diff_eq!(normalize_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_eq!(normalize_angle(-PI), PI);
        assert_eq!(normalize_angle(PI), PI);
    }

    #[test]
    fn circular_mean_across_seam() {
        let m = circular_mean([179f64.to_radians(), (-179f64).to_radians()]);
        assert_abs_diff_eq!(m, PI, epsilon = 1e-12);
    }

    #[test]
    fn wrap_two_pi_range() {
        assert_eq!(wrap_two_pi(-1e-300), 0.0);
        assert_abs_diff_eq!(wrap_two_pi(-PI / 2.0), 1.5 * PI, epsilon = 1e-12);
    }

    #[test]
    fn motion_labels() {
        assert_eq!(MotionState::from_label(0), Some(MotionState::Standstill));
        assert_eq!(MotionState::Motion.label(), 1);
        assert_eq!(MotionState::from_label(2), None);
    }

    proptest! {
        #[test]
        fn frame_round_trip(px in -100.0..100.0f64, py in -100.0..100.0f64,
                            x in -1e3..1e3f64, y in -1e3..1e3f64, psi in -10.0..10.0f64) {
            let pose = LtpPose::new(x, y, psi);
            let p = Vec2::new(px, py);
            let back = ltp_to_lcp(lcp_to_ltp(p, &pose), &pose);
            prop_assert!((back - p).norm() < 1e-10);
        }

        #[test]
        fn rotation_preserves_norm(px in -1e3..1e3f64, py in -1e3..1e3f64, a in -20.0..20.0f64) {
            let p = Vec2::new(px, py);
            let q = rotate(p, Rotation2::new(a));
            prop_assert!((q.norm() - p.norm()).abs() < 1e-12 * p.norm().max(1.0));
            let back = Rotation2::new(a).inverse().apply(q);
            prop_assert!((back - p).norm() < 1e-12 * p.norm().max(1.0));
        }

        #[test]
        fn normalize_is_idempotent_and_in_range(a in -1e4..1e4f64) {
            let n = normalize_angle(a);
            prop_assert!(n > -PI && n <= PI);
            prop_assert_eq!(normalize_angle(n), n);
            let k = ((a - n) / TAU).round();
            prop_assert!((a - n - k * TAU).abs() < 1e-9);
        }
    }
}
