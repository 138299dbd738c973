use serde::{Deserialize, Serialize};

use super::{idx, StateVector};

/// One value per state element, in state-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub yaw_rate: f64,
    pub v: f64,
    pub beta_v: f64,
    pub beta_v_rate: f64,
    pub beta_p: f64,
    pub ax: f64,
    pub ay: f64,
    pub ay_circ: f64,
}

impl PerState {
    pub fn to_vector(&self) -> StateVector {
        let mut v = StateVector::zeros();
        v[idx::X] = self.x;
        v[idx::Y] = self.y;
        v[idx::PSI] = self.psi;
        v[idx::YAW_RATE] = self.yaw_rate;
        v[idx::V] = self.v;
        v[idx::BETA_V] = self.beta_v;
        v[idx::BETA_V_RATE] = self.beta_v_rate;
        v[idx::BETA_P] = self.beta_p;
        v[idx::AX] = self.ax;
        v[idx::AY] = self.ay;
        v[idx::AY_CIRC] = self.ay_circ;
        v
    }

    fn all_positive(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite() && *v > 0.0)
    }
}

/// Filter tuning. None of these values come from measured data; they are
/// desk defaults meant to be overridden per vehicle and sensor set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EkfConfig {
    /// Continuous process-noise densities (state unit per √s).
    pub process_noise: PerState,
    /// Initial standard deviations.
    pub initial_sigma: PerState,
    /// σ-damper saturation time in seconds.
    pub t_sat: f64,
    /// Relaxation time of the geometric sideslip towards the dynamic one.
    pub t_beta: f64,
    /// Tail probability of the χ² innovation gate for correction sources.
    pub gate_probability: f64,
    /// Standard deviation left on held rate states during standstill.
    pub standstill_floor: f64,
    /// Plausibility threshold on |beta_p| (rad).
    pub beta_p_threshold: f64,
    /// Plausibility threshold on |ay - ay_circ| (m/s²).
    pub lateral_threshold: f64,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self {
            process_noise: PerState {
                x: 0.02,
                y: 0.02,
                psi: 0.002,
                yaw_rate: 0.5,
                v: 0.05,
                beta_v: 0.005,
                beta_v_rate: 0.01,
                beta_p: 0.005,
                ax: 5.0,
                ay: 5.0,
                ay_circ: 0.1,
            },
            initial_sigma: PerState {
                x: 10.0,
                y: 10.0,
                psi: 0.5,
                yaw_rate: 1.0,
                v: 1.0,
                beta_v: 1.0,
                beta_v_rate: 1.0,
                beta_p: 1.0,
                ax: 1.0,
                ay: 1.0,
                ay_circ: 1.0,
            },
            t_sat: super::damper::DEFAULT_T_SAT,
            t_beta: 0.5,
            gate_probability: 0.999,
            standstill_floor: 1e-3,
            beta_p_threshold: 0.05,
            lateral_threshold: 1.0,
        }
    }
}

impl EkfConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.process_noise.all_positive()
            && self.initial_sigma.all_positive()
            && self.t_sat > 0.0
            && self.t_beta > 0.0
            && self.gate_probability > 0.0
            && self.gate_probability <= 1.0
            && self.standstill_floor > 0.0
            && self.beta_p_threshold > 0.0
            && self.lateral_threshold > 0.0;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::Config(
                "EKF parameters must be positive and gate_probability in (0, 1]".into(),
            ))
        }
    }
}
