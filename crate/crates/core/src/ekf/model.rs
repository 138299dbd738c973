//! Planar process model and its analytic Jacobian.
//!
//! The course over ground is `psi + beta_p`; position follows a circular arc
//! at the mean speed of the step, the heading integrates the yaw rate, speed
//! integrates `ax`, `beta_v` integrates its rate and `beta_p` relaxes towards
//! `beta_v` with time constant `t_beta`. `ay_circ` is re-derived as
//! `v * yaw_rate`. With zero sideslip and acceleration the position update is
//! exactly the constant-radius arc used by the marker positioning.

use super::{idx, StateMatrix, StateVector};
use crate::types::normalize_angle;

/// Below this yaw rate (rad/s) the arc is replaced by its Taylor expansion.
pub const ARC_YAW_RATE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionModel {
    pub t_beta: f64,
}

/// Per-unit-speed displacement along an arc of course `c` and turn rate `w`
/// over `dt`, and its derivative with respect to `w`.
struct UnitArc {
    ux: f64,
    uy: f64,
    dux_dw: f64,
    duy_dw: f64,
}

fn unit_arc(c: f64, w: f64, dt: f64) -> UnitArc {
    let (sc, cc) = c.sin_cos();
    if w.abs() > ARC_YAW_RATE_EPS {
        let (s1, c1) = (c + w * dt).sin_cos();
        let ux = (s1 - sc) / w;
        let uy = (cc - c1) / w;
        UnitArc {
            ux,
            uy,
            dux_dw: (dt * c1 - ux) / w,
            duy_dw: (dt * s1 - uy) / w,
        }
    } else {
        let h = 0.5 * dt * dt;
        UnitArc {
            ux: dt * cc - w * h * sc,
            uy: dt * sc + w * h * cc,
            dux_dw: -h * sc,
            duy_dw: h * cc,
        }
    }
}

impl MotionModel {
    pub fn propagate(&self, x: &StateVector, dt: f64) -> StateVector {
        let w = x[idx::YAW_RATE];
        let v = x[idx::V];
        let ax = x[idx::AX];
        let vm = v + 0.5 * ax * dt;
        let arc = unit_arc(x[idx::PSI] + x[idx::BETA_P], w, dt);
        let relax = (-dt / self.t_beta).exp();
        let v_new = (v + ax * dt).max(0.0);

        let mut out = *x;
        out[idx::X] += vm * arc.ux;
        out[idx::Y] += vm * arc.uy;
        out[idx::PSI] = normalize_angle(x[idx::PSI] + w * dt);
        out[idx::V] = v_new;
        out[idx::BETA_V] = normalize_angle(x[idx::BETA_V] + x[idx::BETA_V_RATE] * dt);
        out[idx::BETA_P] =
            normalize_angle(x[idx::BETA_V] + (x[idx::BETA_P] - x[idx::BETA_V]) * relax);
        out[idx::AY_CIRC] = v_new * w;
        out
    }

    /// `∂ propagate / ∂ x`, evaluated away from the `v >= 0` clamp.
    pub fn jacobian(&self, x: &StateVector, dt: f64) -> StateMatrix {
        let w = x[idx::YAW_RATE];
        let v = x[idx::V];
        let ax = x[idx::AX];
        let vm = v + 0.5 * ax * dt;
        let arc = unit_arc(x[idx::PSI] + x[idx::BETA_P], w, dt);
        let relax = (-dt / self.t_beta).exp();

        let mut f = StateMatrix::identity();
        // d/dcourse of (ux, uy) is (-uy, ux)
        f[(idx::X, idx::PSI)] = -vm * arc.uy;
        f[(idx::X, idx::BETA_P)] = -vm * arc.uy;
        f[(idx::Y, idx::PSI)] = vm * arc.ux;
        f[(idx::Y, idx::BETA_P)] = vm * arc.ux;
        f[(idx::X, idx::YAW_RATE)] = vm * arc.dux_dw;
        f[(idx::Y, idx::YAW_RATE)] = vm * arc.duy_dw;
        f[(idx::X, idx::V)] = arc.ux;
        f[(idx::Y, idx::V)] = arc.uy;
        f[(idx::X, idx::AX)] = 0.5 * dt * arc.ux;
        f[(idx::Y, idx::AX)] = 0.5 * dt * arc.uy;

        f[(idx::PSI, idx::YAW_RATE)] = dt;
        f[(idx::V, idx::AX)] = dt;
        f[(idx::BETA_V, idx::BETA_V_RATE)] = dt;
        f[(idx::BETA_P, idx::BETA_P)] = relax;
        f[(idx::BETA_P, idx::BETA_V)] = 1.0 - relax;

        f[(idx::AY_CIRC, idx::AY_CIRC)] = 0.0;
        f[(idx::AY_CIRC, idx::V)] = w;
        f[(idx::AY_CIRC, idx::AX)] = w * dt;
        f[(idx::AY_CIRC, idx::YAW_RATE)] = v + ax * dt;
        f
    }
}
