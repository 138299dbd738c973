//! Velocity and pose from marker geometry.
//!
//! Between two observation instants τ1 < τ2 the car is assumed to move with
//! constant speed and yaw rate, i.e. along a circular arc of radius
//! `r = v / ψ̇`. The arc displacement is expressed in the body frame at τ1.

use std::f64::consts::{PI, TAU};

use super::{ConeForm, MarkerLibrary, MarkerObservation};
use crate::error::{Error, Result};
use crate::types::{normalize_angle, rotate, LtpPose, Rotation2, Vec2};

/// Below this yaw rate (rad/s) the straight-line limit of the arc is used.
pub const ARC_EPS: f64 = 1e-6;

/// Internal cone angles of two looks at one marker on the paper's branch
/// convention. `theta_m == π` takes the `< π` branch.
pub fn cone_angles(theta_m1: f64, theta_m2: f64, dt: f64, yaw_rate: f64) -> (f64, f64) {
    let v1 = if theta_m1 <= PI {
        theta_m1
    } else {
        TAU - theta_m1
    };
    let v2 = if theta_m2 <= PI {
        PI - theta_m2 + dt * yaw_rate
    } else {
        theta_m2 + dt * yaw_rate - PI
    };
    (v1, v2)
}

/// Speed from the cosine law on the cone angles, as printed:
/// `d_car² = d1² + d2² − 2·d1·d2·cos(π − θv1 − θv2 + Δτ·ψ̇)`.
pub fn velocity_from_cone(
    d_m1: f64,
    d_m2: f64,
    theta_v1: f64,
    theta_v2: f64,
    dt: f64,
    yaw_rate: f64,
) -> f64 {
    let gamma = PI - theta_v1 - theta_v2 + dt * yaw_rate;
    let d2 = d_m1 * d_m1 + d_m2 * d_m2 - 2.0 * d_m1 * d_m2 * gamma.cos();
    d2.max(0.0).sqrt() / dt
}

/// Chord between the two car positions, from the angle between the two
/// lines of sight once the second is rotated into the first body frame.
pub fn chord_geometric(d_m1: f64, d_m2: f64, theta_m1: f64, theta_m2: f64, dpsi: f64) -> f64 {
    let alpha = theta_m2 - theta_m1 - dpsi;
    let half = (0.5 * alpha).sin();
    // (d1 - d2)^2 + 4 d1 d2 sin^2(α/2) avoids cancellation at small α
    let d2 = (d_m1 - d_m2).powi(2) + 4.0 * d_m1 * d_m2 * half * half;
    d2.max(0.0).sqrt()
}

/// Ratio of arc length to chord for a turn of `dpsi`.
pub fn arc_over_chord(dpsi: f64) -> f64 {
    let x = 0.5 * dpsi;
    if x.abs() < 1e-4 {
        1.0 + x * x / 6.0
    } else {
        x / x.sin()
    }
}

/// Speed from two observations of the same marker.
pub fn velocity_from_observations(
    obs1: &MarkerObservation,
    obs2: &MarkerObservation,
    yaw_rate: f64,
    form: ConeForm,
) -> Result<f64> {
    let dt = obs2.t - obs1.t;
    if !(dt > 0.0) {
        return Err(Error::NonPositiveStep(dt));
    }
    if let (Some(a), Some(b)) = (obs1.marker, obs2.marker) {
        if a != b {
            return Err(Error::Input(format!(
                "velocity needs one marker, got {a} and {b}"
            )));
        }
    }
    Ok(match form {
        ConeForm::Printed => {
            let (v1, v2) = cone_angles(obs1.azimuth, obs2.azimuth, dt, yaw_rate);
            velocity_from_cone(obs1.distance, obs2.distance, v1, v2, dt, yaw_rate)
        }
        ConeForm::Geometric => {
            let dpsi = dt * yaw_rate;
            chord_geometric(
                obs1.distance,
                obs2.distance,
                obs1.azimuth,
                obs2.azimuth,
                dpsi,
            ) * arc_over_chord(dpsi)
                / dt
        }
    })
}

/// Body-frame displacement `(Δx, Δy, Δψ)` over `dt` at constant speed and
/// yaw rate.
pub fn arc_displacement(v: f64, yaw_rate: f64, dt: f64) -> (f64, f64, f64) {
    let dpsi = dt * yaw_rate;
    if yaw_rate.abs() > ARC_EPS {
        let r = v / yaw_rate;
        (r * dpsi.sin(), r - r * dpsi.cos(), dpsi)
    } else {
        (v * dt, v * dt * dpsi / 2.0, dpsi)
    }
}

/// Poses at both observation instants from two observations of different
/// markers, given the speed and yaw rate over the interval.
pub fn pose_from_marker_pair(
    obs1: &MarkerObservation,
    obs2: &MarkerObservation,
    ids: (usize, usize),
    lib: &MarkerLibrary,
    v: f64,
    yaw_rate: f64,
) -> Result<(LtpPose, LtpPose)> {
    let (n1, n2) = ids;
    if n1 == n2 {
        return Err(Error::SameMarker(
            lib.get(n1).map_or_else(|| n1.to_string(), |m| m.id.clone()),
        ));
    }
    let m1 = lib
        .get(n1)
        .ok_or_else(|| Error::UnknownMarker(n1.to_string()))?;
    let m2 = lib
        .get(n2)
        .ok_or_else(|| Error::UnknownMarker(n2.to_string()))?;
    let (p1, p2) = (m1.position(), m2.position());
    if (p2 - p1).norm() < 1e-9 {
        return Err(Error::CoincidentMarkers(m1.id.clone(), m2.id.clone()));
    }
    let dt = obs2.t - obs1.t;
    let (dx, dy, dpsi) = arc_displacement(v, yaw_rate, dt);
    let shift = Vec2::new(dx, dy);

    // both markers in the body frame at τ1
    let q1 = obs1.p_m();
    let q2 = shift + rotate(obs2.p_m(), Rotation2::new(dpsi));

    // baseline direction from the marker with the smaller world x
    let (w_from, w_to, b_from, b_to) = if p1.x <= p2.x {
        (p1, p2, q1, q2)
    } else {
        (p2, p1, q2, q1)
    };
    let theta_ltp = (w_to.y - w_from.y).atan2(w_to.x - w_from.x);
    let theta_lcp = (b_to.y - b_from.y).atan2(b_to.x - b_from.x);
    let psi1 = normalize_angle(theta_ltp - theta_lcp);

    let r = Rotation2::new(psi1);
    let o = 0.5 * ((p1 - rotate(q1, r)) + (p2 - rotate(q2, r)));
    let pose1 = LtpPose::new(o.x, o.y, psi1);
    let pose2 = pose1.compose(dx, dy, dpsi);
    Ok((pose1, pose2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lbpm::{lcp_to_azimuth, Marker};
    use crate::types::ltp_to_lcp;

    fn observe(t: f64, p: Vec2, pose: &LtpPose) -> MarkerObservation {
        let (d, az) = lcp_to_azimuth(ltp_to_lcp(p, pose));
        MarkerObservation::new(t, d, az)
    }

    #[test]
    fn cone_angle_examples() {
        assert_eq!(cone_angles(PI / 4.0, 1.0, 0.0, 0.0).0, PI / 4.0);
        assert!((cone_angles(1.5 * PI, 1.0, 0.0, 0.0).0 - PI / 2.0).abs() < 1e-15);
        let (_, v2) = cone_angles(0.0, PI / 2.0, 0.1, 1.0);
        assert!((v2 - (PI / 2.0 + 0.1)).abs() < 1e-15);
    }

    #[test]
    fn stationary_cone_is_zero() {
        let (v1, v2) = cone_angles(1.0, 1.0, 0.1, 0.0);
        assert_eq!(velocity_from_cone(5.0, 5.0, v1, v2, 0.1, 0.0), 0.0);
    }

    #[test]
    fn abeam_straight_pass() {
        // marker 3 m to the right, car passes at 5 m/s
        let m = Vec2::new(0.0, -3.0);
        let a = LtpPose::new(-0.25, 0.0, 0.0);
        let b = LtpPose::new(0.25, 0.0, 0.0);
        let o1 = observe(0.0, m, &a);
        let o2 = observe(0.1, m, &b);
        for form in [ConeForm::Printed, ConeForm::Geometric] {
            let v = velocity_from_observations(&o1, &o2, 0.0, form).unwrap();
            assert!((v - 5.0).abs() < 1e-6, "{form:?}: {v}");
        }
    }

    #[test]
    fn arc_examples() {
        assert_eq!(arc_displacement(10.0, 0.0, 1.0), (10.0, 0.0, 0.0));
        let (dx, dy, dpsi) = arc_displacement(PI, PI / 2.0, 1.0);
        assert!((dx - 2.0).abs() < 1e-12 && (dy - 2.0).abs() < 1e-12);
        assert_eq!(dpsi, PI / 2.0);
        assert_eq!(arc_displacement(0.0, 0.7, 0.5), (0.0, 0.0, 0.35));
    }

    #[test]
    fn pose_at_origin() {
        let lib = MarkerLibrary::new(vec![
            Marker::new("1", 5.0, 1.0),
            Marker::new("2", 7.0, -2.0),
        ])
        .unwrap();
        let car = LtpPose::default();
        let o1 = observe(0.0, lib.position(0), &car);
        let o2 = observe(0.05, lib.position(1), &car);
        let (a, b) = pose_from_marker_pair(&o1, &o2, (0, 1), &lib, 0.0, 0.0).unwrap();
        for p in [a, b] {
            assert!(p.x.abs() < 1e-12 && p.y.abs() < 1e-12 && p.psi.abs() < 1e-12);
        }
    }

    #[test]
    fn pose_offset_recovery() {
        let lib = MarkerLibrary::new(vec![
            Marker::new("1", 5.0, 1.0),
            Marker::new("2", 7.0, -2.0),
        ])
        .unwrap();
        let car = LtpPose::new(3.0, 4.0, PI / 6.0);
        let o1 = observe(0.0, lib.position(0), &car);
        let o2 = observe(0.0, lib.position(1), &car);
        let (a, _) = pose_from_marker_pair(&o1, &o2, (0, 1), &lib, 0.0, 0.0).unwrap();
        assert!((a.x - 3.0).abs() < 1e-9 && (a.y - 4.0).abs() < 1e-9);
        assert!((a.psi - PI / 6.0).abs() < 1e-9);
    }

    #[test]
    fn pose_errors() {
        let lib = MarkerLibrary::new(vec![Marker::new("1", 5.0, 1.0), Marker::new("2", 5.0, 1.0)])
            .unwrap();
        let o = MarkerObservation::new(0.0, 5.0, 0.0);
        assert!(matches!(
            pose_from_marker_pair(&o, &o, (0, 0), &lib, 0.0, 0.0),
            Err(Error::SameMarker(_))
        ));
        assert!(matches!(
            pose_from_marker_pair(&o, &o, (0, 1), &lib, 0.0, 0.0),
            Err(Error::CoincidentMarkers(..))
        ));
    }
}
