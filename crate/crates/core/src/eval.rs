//! Accuracy of estimates against ground truth.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::EstimateRow;
use crate::lbpm::{LbpmOutput, LbpmUpdate};
use crate::sim::{GroundTruthTrace, TruthSample};
use crate::ssc::Confusion;
use crate::types::{normalize_angle, LtpPose, MotionState};

/// Mean, standard deviation and maximum of absolute errors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub rms: f64,
}

impl ErrorStats {
    pub fn from_errors(errors: impl IntoIterator<Item = f64>) -> Self {
        let e: Vec<f64> = errors.into_iter().map(f64::abs).collect();
        if e.is_empty() {
            return Self::default();
        }
        let n = e.len() as f64;
        let mean = e.iter().sum::<f64>() / n;
        let var = e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self {
            n: e.len(),
            mean,
            std: var.sqrt(),
            max: e.iter().copied().fold(0.0, f64::max),
            rms: (e.iter().map(|x| x * x).sum::<f64>() / n).sqrt(),
        }
    }
}

/// Velocity (m/s), position (m) and orientation (deg) error statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelErrors {
    pub velocity: ErrorStats,
    pub position: ErrorStats,
    pub orientation_deg: ErrorStats,
}

fn pose_errors(est: &LtpPose, truth: &LtpPose) -> (f64, f64) {
    (
        (est.x - truth.x).hypot(est.y - truth.y),
        normalize_angle(est.psi - truth.psi).to_degrees(),
    )
}

fn interpolate(rows: &[EstimateRow], t: f64) -> Option<(LtpPose, f64)> {
    let (first, last) = (rows.first()?, rows.last()?);
    if t < first.t || t > last.t {
        return None;
    }
    let i = rows.partition_point(|r| r.t < t);
    let b = &rows[i];
    if b.t == t || i == 0 {
        return Some((b.pose(), b.v));
    }
    let a = &rows[i - 1];
    let w = (t - a.t) / (b.t - a.t);
    let lerp = |x: f64, y: f64| x + (y - x) * w;
    Some((
        LtpPose::new(
            lerp(a.x, b.x),
            lerp(a.y, b.y),
            a.psi + normalize_angle(b.psi - a.psi) * w,
        ),
        lerp(a.v, b.v),
    ))
}

/// Errors of an estimated trajectory at every truth timestamp it covers,
/// with the estimate linearly interpolated.
pub fn evaluate_trajectory(rows: &[EstimateRow], truth: &[TruthSample]) -> Result<ChannelErrors> {
    let mut v = Vec::new();
    let mut p = Vec::new();
    let mut o = Vec::new();
    for s in truth {
        if let Some((pose, speed)) = interpolate(rows, s.t) {
            let (dp, dpsi) = pose_errors(&pose, &s.pose());
            v.push(speed - s.v);
            p.push(dp);
            o.push(dpsi);
        }
    }
    if p.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok(ChannelErrors {
        velocity: ErrorStats::from_errors(v),
        position: ErrorStats::from_errors(p),
        orientation_deg: ErrorStats::from_errors(o),
    })
}

/// Mean truth speed over `[t1, t2]`: travelled arc length over time when the
/// trajectory is known, otherwise the mean of the sampled speeds.
pub fn mean_truth_speed(truth: &GroundTruthTrace, t1: f64, t2: f64) -> Result<f64> {
    if let Some(tr) = truth.trajectory() {
        let (s1, _, _) = tr.speed.eval(t1);
        let (s2, _, _) = tr.speed.eval(t2);
        if t2 > t1 {
            return Ok((s2 - s1) / (t2 - t1));
        }
        return Ok(truth.state_at(t1)?.v);
    }
    Ok(0.5 * (truth.state_at(t1)?.v + truth.state_at(t2)?.v))
}

/// Errors of raw marker outputs: speed over the pair, pose at τ2.
pub fn evaluate_lbpm_outputs(
    outputs: &[LbpmOutput],
    truth: &GroundTruthTrace,
) -> Result<ChannelErrors> {
    let mut v = Vec::new();
    let mut p = Vec::new();
    let mut o = Vec::new();
    for out in outputs {
        let (Ok(st), Ok(vt)) = (
            truth.state_at(out.t2),
            mean_truth_speed(truth, out.t1, out.t2),
        ) else {
            continue;
        };
        let (dp, dpsi) = pose_errors(&out.pose_t2, &st.pose);
        v.push(out.v - vt);
        p.push(dp);
        o.push(dpsi);
    }
    if p.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok(ChannelErrors {
        velocity: ErrorStats::from_errors(v),
        position: ErrorStats::from_errors(p),
        orientation_deg: ErrorStats::from_errors(o),
    })
}

/// Position errors at instants seen by two consecutive iterations, single
/// estimates against their average.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AveragingErrors {
    /// Both single estimates of each shared instant.
    pub single: ErrorStats,
    pub averaged: ErrorStats,
}

pub fn evaluate_averaging(
    updates: &[LbpmUpdate],
    truth: &GroundTruthTrace,
) -> Result<AveragingErrors> {
    let mut single = Vec::new();
    let mut averaged = Vec::new();
    for (k, u) in updates.iter().enumerate() {
        let Some(avg) = u.averaged else { continue };
        let Some(prev) = updates[..k]
            .iter()
            .rev()
            .map(|p| p.output)
            .find(|p| (p.t2 - avg.t).abs() <= 1e-6)
        else {
            continue;
        };
        let Ok(st) = truth.state_at(avg.t) else {
            continue;
        };
        let err = |pose: &LtpPose| pose_errors(pose, &st.pose).0;
        single.push(err(&prev.pose_t2));
        single.push(err(&u.output.pose_t1));
        averaged.push(err(&avg.pose));
    }
    if averaged.is_empty() {
        return Err(Error::NoOverlap);
    }
    Ok(AveragingErrors {
        single: ErrorStats::from_errors(single),
        averaged: ErrorStats::from_errors(averaged),
    })
}

/// Classifier performance on a labelled stream.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub confusion: Confusion,
    /// Motion samples read as standstill more than `tolerance` samples away
    /// from any change of the true state.
    pub false_positive_outside_tolerance: usize,
    pub tolerance: usize,
    /// Samples from each true stop to the first standstill detection; `None`
    /// when the next drive-off came first.
    pub stop_delays: Vec<Option<usize>>,
}

impl DetectionReport {
    pub fn max_stop_delay(&self) -> Option<usize> {
        self.stop_delays
            .iter()
            .map(|d| d.unwrap_or(usize::MAX))
            .max()
    }
}

pub fn detection_report(
    truth: &[MotionState],
    detected: &[MotionState],
    tolerance: usize,
) -> Result<DetectionReport> {
    use MotionState::*;
    if truth.len() != detected.len() {
        return Err(Error::Input("label streams differ in length".into()));
    }
    let n = truth.len();
    let mut near = vec![false; n];
    for k in 1..n {
        if truth[k] != truth[k - 1] {
            let lo = k.saturating_sub(tolerance);
            let hi = (k + tolerance).min(n);
            near[lo..hi].iter_mut().for_each(|x| *x = true);
        }
    }
    let false_positive_outside_tolerance = (0..n)
        .filter(|&k| truth[k] == Motion && detected[k] == Standstill && !near[k])
        .count();
    let mut stop_delays = Vec::new();
    for k in 1..n {
        if truth[k - 1] == Motion && truth[k] == Standstill {
            let delay = (k..n)
                .take_while(|&j| truth[j] == Standstill)
                .find(|&j| detected[j] == Standstill)
                .map(|j| j - k);
            stop_delays.push(delay);
        }
    }
    Ok(DetectionReport {
        confusion: Confusion::from_pairs(truth.iter().copied(), detected.iter().copied()),
        false_positive_outside_tolerance,
        tolerance,
        stop_delays,
    })
}

/// Per-module timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStat {
    pub module: String,
    pub calls: usize,
    pub median_us: f64,
    pub std_us: f64,
}

/// Everything `evaluate` reports about a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub trajectory: Option<ChannelErrors>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lbpm: Option<ChannelErrors>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<Confusion>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub runtime: Vec<RuntimeStat>,
}

/// Limits checked by `evaluate --assert`, applied to mean errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub velocity_mean: f64,
    pub position_mean: f64,
    pub orientation_mean_deg: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            velocity_mean: 0.2,
            position_mean: 0.10,
            orientation_mean_deg: 1.5,
        }
    }
}

impl Thresholds {
    /// Violations as readable strings; empty when all limits hold.
    pub fn check(&self, e: &ChannelErrors) -> Vec<String> {
        let mut out = Vec::new();
        let mut test = |name: &str, got: f64, limit: f64| {
            if !(got <= limit) {
                out.push(format!("{name} mean {got:.4} exceeds {limit}"));
            }
        };
        test("velocity", e.velocity.mean, self.velocity_mean);
        test("position", e.position.mean, self.position_mean);
        test(
            "orientation",
            e.orientation_deg.mean,
            self.orientation_mean_deg,
        );
        out
    }
}
