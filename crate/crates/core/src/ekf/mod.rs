//! Extended Kalman filter over the 11-element planar vehicle state.
//!
//! State order: `[x, y, psi, yaw_rate, v, beta_v, beta_v_rate, beta_p, ax,
//! ay, ay_circ]`. The measurement vector may carry any subset of
//! `[x, y, psi, yaw_rate, v, beta_v, ax, ay]`; only the present channels are
//! stacked into the correction. Reported σ values pass through a
//! [`SigmaDamper`] before they form the diagonal measurement covariance.

mod config;
mod damper;
mod model;

pub use config::{EkfConfig, PerState};
pub use damper::{damp_sigma, SigmaDamper, SigmaDamperState, DEFAULT_T_SAT};
pub use model::{MotionModel, ARC_YAW_RATE_EPS};

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::types::{normalize_angle, LtpPose};

pub const STATE_DIM: usize = 11;

pub type StateVector = SVector<f64, STATE_DIM>;
pub type StateMatrix = SMatrix<f64, STATE_DIM, STATE_DIM>;

/// Indices into the state vector.
pub mod idx {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const PSI: usize = 2;
    pub const YAW_RATE: usize = 3;
    pub const V: usize = 4;
    pub const BETA_V: usize = 5;
    pub const BETA_V_RATE: usize = 6;
    pub const BETA_P: usize = 7;
    pub const AX: usize = 8;
    pub const AY: usize = 9;
    pub const AY_CIRC: usize = 10;
}

const ANGLE_STATES: [usize; 3] = [idx::PSI, idx::BETA_V, idx::BETA_P];

/// Estimated state with covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub t: f64,
    pub mean: StateVector,
    pub covariance: StateMatrix,
}

impl VehicleState {
    pub fn new(t: f64, mean: StateVector, covariance: StateMatrix) -> Self {
        let mut s = Self {
            t,
            mean,
            covariance,
        };
        s.normalize();
        s
    }

    /// State at rest at `pose` with the configured initial uncertainty.
    pub fn at_pose(t: f64, pose: LtpPose, v: f64, cfg: &EkfConfig) -> Self {
        let mut mean = StateVector::zeros();
        mean[idx::X] = pose.x;
        mean[idx::Y] = pose.y;
        mean[idx::PSI] = pose.psi;
        mean[idx::V] = v;
        let sigma = cfg.initial_sigma.to_vector();
        Self::new(
            t,
            mean,
            StateMatrix::from_diagonal(&sigma.component_mul(&sigma)),
        )
    }

    pub fn x(&self) -> f64 {
        self.mean[idx::X]
    }
    pub fn y(&self) -> f64 {
        self.mean[idx::Y]
    }
    pub fn psi(&self) -> f64 {
        self.mean[idx::PSI]
    }
    pub fn yaw_rate(&self) -> f64 {
        self.mean[idx::YAW_RATE]
    }
    pub fn v(&self) -> f64 {
        self.mean[idx::V]
    }
    pub fn beta_v(&self) -> f64 {
        self.mean[idx::BETA_V]
    }
    pub fn beta_v_rate(&self) -> f64 {
        self.mean[idx::BETA_V_RATE]
    }
    pub fn beta_p(&self) -> f64 {
        self.mean[idx::BETA_P]
    }
    pub fn ax(&self) -> f64 {
        self.mean[idx::AX]
    }
    pub fn ay(&self) -> f64 {
        self.mean[idx::AY]
    }
    pub fn ay_circ(&self) -> f64 {
        self.mean[idx::AY_CIRC]
    }

    pub fn pose(&self) -> LtpPose {
        LtpPose::new(self.x(), self.y(), self.psi())
    }

    /// Standard deviation of state element `i`.
    pub fn std(&self, i: usize) -> f64 {
        self.covariance[(i, i)].max(0.0).sqrt()
    }

    fn normalize(&mut self) {
        for i in ANGLE_STATES {
            self.mean[i] = normalize_angle(self.mean[i]);
        }
        self.mean[idx::V] = self.mean[idx::V].max(0.0);
        self.covariance = symmetrize(&self.covariance);
    }
}

fn symmetrize(p: &StateMatrix) -> StateMatrix {
    (p + p.transpose()) * 0.5
}

/// Process noise for one step of `dt` seconds from continuous densities.
pub fn discrete_process_noise(density: &PerState, dt: f64) -> StateMatrix {
    let q = density.to_vector();
    StateMatrix::from_diagonal(&(q.component_mul(&q) * dt))
}

/// Propagates the state by `dt` and the covariance by `F·P·Fᵀ + Q`.
pub fn predict(
    s: &VehicleState,
    dt: f64,
    q: &StateMatrix,
    model: &MotionModel,
) -> Result<VehicleState> {
    if !(dt > 0.0) {
        return Err(Error::NonPositiveStep(dt));
    }
    let f = model.jacobian(&s.mean, dt);
    let mean = model.propagate(&s.mean, dt);
    let covariance = f * s.covariance * f.transpose() + q;
    Ok(VehicleState::new(s.t + dt, mean, covariance))
}

/// Measurement channels in measurement-vector order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    X,
    Y,
    Psi,
    YawRate,
    V,
    BetaV,
    Ax,
    Ay,
}

impl Channel {
    pub const COUNT: usize = 8;
    pub const ALL: [Channel; Channel::COUNT] = [
        Channel::X,
        Channel::Y,
        Channel::Psi,
        Channel::YawRate,
        Channel::V,
        Channel::BetaV,
        Channel::Ax,
        Channel::Ay,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// State element observed by this channel.
    pub fn state_index(self) -> usize {
        match self {
            Channel::X => idx::X,
            Channel::Y => idx::Y,
            Channel::Psi => idx::PSI,
            Channel::YawRate => idx::YAW_RATE,
            Channel::V => idx::V,
            Channel::BetaV => idx::BETA_V,
            Channel::Ax => idx::AX,
            Channel::Ay => idx::AY,
        }
    }

    pub fn is_angle(self) -> bool {
        matches!(self, Channel::Psi | Channel::BetaV)
    }
}

/// A value with its reported standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub value: f64,
    pub sigma: f64,
}

/// Sparse measurement vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Measurement {
    pub t: f64,
    pub readings: [Option<Reading>; Channel::COUNT],
}

impl Measurement {
    pub fn new(t: f64) -> Self {
        Self {
            t,
            readings: [None; Channel::COUNT],
        }
    }

    pub fn with(mut self, channel: Channel, value: f64, sigma: f64) -> Self {
        self.readings[channel.index()] = Some(Reading { value, sigma });
        self
    }

    pub fn get(&self, channel: Channel) -> Option<Reading> {
        self.readings[channel.index()]
    }

    pub fn channels(&self) -> impl Iterator<Item = (Channel, Reading)> + '_ {
        Channel::ALL
            .into_iter()
            .filter_map(|c| self.get(c).map(|r| (c, r)))
    }

    pub fn is_empty(&self) -> bool {
        self.readings.iter().all(Option::is_none)
    }
}

/// Diagonal measurement covariance as per-channel σ (`c`); variances are `c²`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeasurementCovariance {
    pub sigma: [Option<f64>; Channel::COUNT],
}

impl MeasurementCovariance {
    /// Uses the σ reported in the measurement as is.
    pub fn reported(z: &Measurement) -> Self {
        let mut sigma = [None; Channel::COUNT];
        for (c, r) in z.channels() {
            sigma[c.index()] = Some(r.sigma);
        }
        Self { sigma }
    }

    /// Runs each reported σ through the damper.
    pub fn damped(z: &Measurement, damper: &mut SigmaDamper) -> Self {
        let mut sigma = [None; Channel::COUNT];
        for (c, r) in z.channels() {
            sigma[c.index()] = Some(damper.filter(c, z.t, r.sigma));
        }
        Self { sigma }
    }

    pub fn variance(&self, channel: Channel) -> Option<f64> {
        self.sigma[channel.index()].map(|c| c * c)
    }
}

/// Innovation gate on the squared Mahalanobis distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    Off,
    /// Reject when `yᵀ S⁻¹ y` exceeds the χ² quantile for the measurement
    /// dimension at this probability.
    ChiSquare(f64),
    /// Reject when `yᵀ S⁻¹ y` exceeds this value.
    Threshold(f64),
}

/// χ² quantile with `dof` degrees of freedom.
pub fn chi_square_threshold(dof: usize, probability: f64) -> f64 {
    if probability >= 1.0 {
        return f64::INFINITY;
    }
    ChiSquared::new(dof as f64)
        .map(|d| d.inverse_cdf(probability))
        .unwrap_or(f64::INFINITY)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rejection {
    Empty,
    InvalidSigma(Channel),
    NonFinite,
    Singular,
    Gated { mahalanobis_sq: f64, threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateStatus {
    Applied { mahalanobis_sq: f64 },
    Rejected(Rejection),
}

impl UpdateStatus {
    pub fn is_applied(&self) -> bool {
        matches!(self, UpdateStatus::Applied { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub state: VehicleState,
    pub status: UpdateStatus,
}

/// Standard EKF correction with the present channels only. Angular
/// innovations are wrapped and the covariance uses the Joseph form.
/// A rejected measurement leaves the state unchanged.
pub fn update(
    s: &VehicleState,
    z: &Measurement,
    cov: &MeasurementCovariance,
    gate: Gate,
) -> UpdateOutcome {
    let reject = |r| UpdateOutcome {
        state: s.clone(),
        status: UpdateStatus::Rejected(r),
    };
    let present: Vec<(Channel, Reading)> = z.channels().collect();
    if present.is_empty() {
        return reject(Rejection::Empty);
    }
    let m = present.len();
    let mut h = DMatrix::<f64>::zeros(m, STATE_DIM);
    let mut y = DVector::<f64>::zeros(m);
    let mut r = DMatrix::<f64>::zeros(m, m);
    for (row, (ch, reading)) in present.iter().enumerate() {
        let var = match cov.variance(*ch) {
            Some(v) if v > 0.0 && v.is_finite() => v,
            _ => return reject(Rejection::InvalidSigma(*ch)),
        };
        let si = ch.state_index();
        h[(row, si)] = 1.0;
        let mut innov = reading.value - s.mean[si];
        if ch.is_angle() {
            innov = normalize_angle(innov);
        }
        y[row] = innov;
        r[(row, row)] = var;
    }
    if y.iter().any(|v| !v.is_finite()) {
        return reject(Rejection::NonFinite);
    }
    let p = DMatrix::from_column_slice(STATE_DIM, STATE_DIM, s.covariance.as_slice());
    let pht = &p * h.transpose();
    let innovation_cov = &h * &pht + &r;
    let Some(s_inv) = innovation_cov.clone().try_inverse() else {
        return reject(Rejection::Singular);
    };
    let d2 = (y.transpose() * &s_inv * &y)[(0, 0)];
    if !d2.is_finite() {
        return reject(Rejection::NonFinite);
    }
    let threshold = match gate {
        Gate::Off => f64::INFINITY,
        Gate::ChiSquare(prob) => chi_square_threshold(m, prob),
        Gate::Threshold(t) => t,
    };
    if d2 > threshold {
        return reject(Rejection::Gated {
            mahalanobis_sq: d2,
            threshold,
        });
    }
    let k = &pht * s_inv;
    let dx = &k * &y;
    let mut mean = s.mean;
    for i in 0..STATE_DIM {
        mean[i] += dx[i];
    }
    let i_kh = DMatrix::<f64>::identity(STATE_DIM, STATE_DIM) - &k * &h;
    let joseph = &i_kh * &p * i_kh.transpose() + &k * &r * k.transpose();
    let covariance = StateMatrix::from_iterator(joseph.iter().copied());
    UpdateOutcome {
        state: VehicleState::new(s.t, mean, covariance),
        status: UpdateStatus::Applied { mahalanobis_sq: d2 },
    }
}

const HELD_STATES: [usize; 4] = [idx::V, idx::YAW_RATE, idx::BETA_V_RATE, idx::AY_CIRC];

/// Freezes the vehicle: speed and rates go to zero, pose is kept, and the
/// covariance of the zeroed states collapses to `floor²` without
/// correlations. Idempotent.
pub fn standstill_hold(s: &VehicleState, floor: f64) -> VehicleState {
    let mut out = s.clone();
    for i in HELD_STATES {
        out.mean[i] = 0.0;
        for j in 0..STATE_DIM {
            out.covariance[(i, j)] = 0.0;
            out.covariance[(j, i)] = 0.0;
        }
        out.covariance[(i, i)] = floor * floor;
    }
    out
}

/// Derived consistency values of a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOutputs {
    /// Lateral acceleration of steady circular motion, `v * yaw_rate`.
    pub ay_circ: f64,
    /// `|beta_p|` below its threshold.
    pub sideslip_plausible: bool,
    /// `|ay - ay_circ|` below its threshold.
    pub lateral_plausible: bool,
}

impl EstimatorOutputs {
    pub fn tractive(&self) -> bool {
        self.sideslip_plausible && self.lateral_plausible
    }
}

pub fn estimator_outputs(s: &VehicleState, beta_thresh: f64, a_thresh: f64) -> EstimatorOutputs {
    let ay_circ = s.v() * s.yaw_rate();
    EstimatorOutputs {
        ay_circ,
        sideslip_plausible: s.beta_p().abs() < beta_thresh,
        lateral_plausible: (s.ay() - ay_circ).abs() < a_thresh,
    }
}

/// Single-writer filter wrapping predict/update/hold with the σ-damper and
/// the configured gate.
#[derive(Debug, Clone)]
pub struct Ekf {
    cfg: EkfConfig,
    model: MotionModel,
    state: VehicleState,
    damper: SigmaDamper,
    gate_thresholds: [f64; Channel::COUNT],
}

impl Ekf {
    pub fn new(cfg: EkfConfig, initial: VehicleState) -> Result<Self> {
        cfg.validate()?;
        let gate_thresholds =
            std::array::from_fn(|m| chi_square_threshold(m + 1, cfg.gate_probability));
        Ok(Self {
            model: MotionModel { t_beta: cfg.t_beta },
            damper: SigmaDamper::new(cfg.t_sat),
            state: initial,
            gate_thresholds,
            cfg,
        })
    }

    pub fn config(&self) -> &EkfConfig {
        &self.cfg
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn model(&self) -> &MotionModel {
        &self.model
    }

    /// Predicts forward to `t`. A zero step is a no-op; stepping backwards is
    /// an error.
    pub fn predict_to(&mut self, t: f64) -> Result<()> {
        let dt = t - self.state.t;
        if dt == 0.0 {
            return Ok(());
        }
        let q = discrete_process_noise(&self.cfg.process_noise, dt.max(0.0));
        self.state = predict(&self.state, dt, &q, &self.model)?;
        // keep the clock exact instead of accumulating dt round-off
        self.state.t = t;
        Ok(())
    }

    /// Corrects with `z`, damping its σ first. `gated` enables the χ² gate.
    pub fn update(&mut self, z: &Measurement, gated: bool) -> UpdateStatus {
        let cov = MeasurementCovariance::damped(z, &mut self.damper);
        let n = z.channels().count();
        let gate = if gated && n > 0 {
            Gate::Threshold(self.gate_thresholds[n - 1])
        } else {
            Gate::Off
        };
        let out = update(&self.state, z, &cov, gate);
        self.state = out.state;
        out.status
    }

    /// Holds the vehicle at rest and advances the clock to `t`.
    pub fn hold(&mut self, t: f64) {
        self.state = standstill_hold(&self.state, self.cfg.standstill_floor);
        self.state.t = self.state.t.max(t);
    }

    /// Ends a hold: the held states keep their values but get their initial
    /// uncertainty back, so a spurious hold while moving can be corrected.
    pub fn release(&mut self) {
        let sigma = self.cfg.initial_sigma.to_vector();
        for i in HELD_STATES {
            self.state.covariance[(i, i)] = sigma[i] * sigma[i];
        }
    }

    pub fn outputs(&self) -> EstimatorOutputs {
        estimator_outputs(
            &self.state,
            self.cfg.beta_p_threshold,
            self.cfg.lateral_threshold,
        )
    }
}
