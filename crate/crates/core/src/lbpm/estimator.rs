//! Streaming composition of identification, velocity and pose estimation.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{
    arc_displacement, identify_marker, pose_from_marker_pair, velocity_from_observations,
    Identification, LbpmConfig, MarkerLibrary, MarkerObservation,
};
use crate::error::{Error, Result};
use crate::types::{circular_mean, LtpPose};

/// Where the speed of an output came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocitySource {
    /// Same-marker cone pairs of the last sweep.
    Cone,
    /// No recent cone pair; the prior speed was used for the arc model.
    Prior,
}

/// Poses at two instants and the speed between them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LbpmOutput {
    pub t1: f64,
    pub t2: f64,
    pub v: f64,
    pub pose_t1: LtpPose,
    pub pose_t2: LtpPose,
    /// Number of supporting observations: the pose pair plus every cone pair
    /// averaged into `v`. Two means the speed came from the prior.
    pub quality: u32,
    pub velocity_source: VelocitySource,
}

/// Refined estimate of one instant seen by two iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedOutput {
    pub t: f64,
    pub pose: LtpPose,
    pub v: f64,
    pub quality: u32,
}

/// Averages the τ2 estimate of `prev` with the τ1 estimate of `curr`.
pub fn average_outputs(prev: &LbpmOutput, curr: &LbpmOutput) -> Result<AveragedOutput> {
    if (prev.t2 - curr.t1).abs() > 1e-6 {
        return Err(Error::InstantMismatch(prev.t2, curr.t1));
    }
    let (a, b) = (prev.pose_t2, curr.pose_t1);
    Ok(AveragedOutput {
        t: curr.t1,
        pose: LtpPose::new(
            0.5 * (a.x + b.x),
            0.5 * (a.y + b.y),
            circular_mean([a.psi, b.psi]),
        ),
        v: 0.5 * (prev.v + curr.v),
        quality: prev.quality + curr.quality,
    })
}

/// Motion prior used for identification and for the yaw rate of the arc
/// model, normally the filter prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub t: f64,
    pub pose: LtpPose,
    pub v: f64,
    pub yaw_rate: f64,
}

impl Prior {
    /// Pose at `t` along the prior's arc.
    pub fn pose_at(&self, t: f64) -> LtpPose {
        let dt = t - self.t;
        if dt == 0.0 {
            return self.pose;
        }
        let (dx, dy, dpsi) = arc_displacement(self.v, self.yaw_rate, dt);
        self.pose.compose(dx, dy, dpsi)
    }
}

/// One iteration's result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbpmUpdate {
    pub output: LbpmOutput,
    /// Average with the previous iteration at the shared instant `output.t1`.
    pub averaged: Option<AveragedOutput>,
    /// Best estimate at `output.t2`: the averaged τ1 pose carried forward by
    /// this iteration's arc, or the raw τ2 pose without a partner.
    pub corrected_t2: LtpPose,
}

#[derive(Debug, Clone, Copy)]
struct Seen {
    obs: MarkerObservation,
    marker: usize,
    /// τ2 estimate of the output that ended at this observation.
    pose_out: Option<LbpmOutput>,
}

/// Counters for diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LbpmStats {
    pub observations: usize,
    pub not_confident: usize,
    pub velocity_pairs: usize,
    pub outputs: usize,
}

/// Consumes marker observations in time order.
#[derive(Debug, Clone)]
pub struct LbpmEstimator<'a> {
    cfg: LbpmConfig,
    lib: &'a MarkerLibrary,
    last_seen: Vec<Option<MarkerObservation>>,
    velocities: VecDeque<(f64, f64)>,
    recent: VecDeque<Seen>,
    stats: LbpmStats,
}

impl<'a> LbpmEstimator<'a> {
    pub fn new(cfg: LbpmConfig, lib: &'a MarkerLibrary) -> Result<Self> {
        cfg.validate()?;
        if lib.is_empty() {
            return Err(Error::EmptyLibrary);
        }
        Ok(Self {
            last_seen: vec![None; lib.len()],
            velocities: VecDeque::new(),
            recent: VecDeque::new(),
            stats: LbpmStats::default(),
            cfg,
            lib,
        })
    }

    pub fn config(&self) -> &LbpmConfig {
        &self.cfg
    }

    pub fn stats(&self) -> LbpmStats {
        self.stats
    }

    /// Identifies `obs` against the prior; unconfident matches are dropped.
    pub fn identify(&self, obs: &MarkerObservation, prior: &Prior) -> Result<Identification> {
        identify_marker(obs, &prior.pose_at(obs.t), self.lib, self.cfg.match_radius)
    }

    /// Mean cone speed over the averaging window ending at `t`.
    pub fn recent_velocity(&self, t: f64) -> Option<(f64, usize)> {
        let horizon = t - self.cfg.velocity_average_sweeps * self.cfg.sweep_period();
        let (sum, n) = self
            .velocities
            .iter()
            .filter(|(tv, _)| *tv > horizon)
            .fold((0.0, 0), |(s, n), (_, v)| (s + v, n + 1));
        (n > 0).then(|| (sum / n as f64, n))
    }

    pub fn push(&mut self, obs: &MarkerObservation, prior: &Prior) -> Result<Option<LbpmUpdate>> {
        self.stats.observations += 1;
        let id = match obs.marker {
            Some(m) if m < self.lib.len() => m,
            Some(m) => return Err(Error::UnknownMarker(m.to_string())),
            None => {
                let id = self.identify(obs, prior)?;
                if !id.confident {
                    self.stats.not_confident += 1;
                    return Ok(None);
                }
                id.marker
            }
        };
        let obs = obs.with_marker(id);
        let period = self.cfg.sweep_period();

        // velocity from the previous look at the same marker
        if let Some(prev) = self.last_seen[id] {
            let dt = obs.t - prev.t;
            let [lo, hi] = self.cfg.velocity_pair_window;
            if dt >= lo * period && dt <= hi * period {
                let v =
                    velocity_from_observations(&prev, &obs, prior.yaw_rate, self.cfg.cone_form)?;
                self.velocities.push_back((obs.t, v));
                self.stats.velocity_pairs += 1;
            }
        }
        self.last_seen[id] = Some(obs);
        let keep_v = obs.t - self.cfg.velocity_average_sweeps.max(1.0) * period * 2.0;
        while self.velocities.front().is_some_and(|(t, _)| *t < keep_v) {
            self.velocities.pop_front();
        }

        let horizon = obs.t - self.cfg.pose_pair_sweeps * period;
        while self.recent.front().is_some_and(|s| s.obs.t < horizon) {
            self.recent.pop_front();
        }

        // pose partner: the recent different marker with the longest baseline
        let here = self.lib.position(id);
        let partner = self
            .recent
            .iter()
            .enumerate()
            .filter(|(_, s)| s.marker != id && s.obs.t < obs.t)
            .map(|(k, s)| (k, (self.lib.position(s.marker) - here).norm()))
            .filter(|(_, b)| *b >= self.cfg.min_pose_baseline)
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| k);

        let mut update = None;
        if let Some(k) = partner {
            let first = self.recent[k];
            let (v, source, nv) = match self.recent_velocity(obs.t) {
                Some((v, n)) => (v, VelocitySource::Cone, n),
                None => (prior.v.max(0.0), VelocitySource::Prior, 0),
            };
            let (p1, p2) = pose_from_marker_pair(
                &first.obs,
                &obs,
                (first.marker, id),
                self.lib,
                v,
                prior.yaw_rate,
            )?;
            let output = LbpmOutput {
                t1: first.obs.t,
                t2: obs.t,
                v,
                pose_t1: p1,
                pose_t2: p2,
                quality: 2 + nv as u32,
                velocity_source: source,
            };
            let averaged = first
                .pose_out
                .map(|prev| average_outputs(&prev, &output))
                .transpose()?;
            let corrected_t2 = match averaged {
                Some(a) => {
                    let (dx, dy, dpsi) = arc_displacement(v, prior.yaw_rate, obs.t - first.obs.t);
                    a.pose.compose(dx, dy, dpsi)
                }
                None => p2,
            };
            self.stats.outputs += 1;
            update = Some(LbpmUpdate {
                output,
                averaged,
                corrected_t2,
            });
        }
        self.recent.push_back(Seen {
            obs,
            marker: id,
            pose_out: update.map(|u| u.output),
        });
        Ok(update)
    }
}

/// Runs one batch of observations against a fixed rough pose and yaw rate
/// and returns the last output, if the geometry allowed one.
pub fn lbpm_step(
    stream: &[MarkerObservation],
    rough: &LtpPose,
    yaw_rate: f64,
    lib: &MarkerLibrary,
    cfg: &LbpmConfig,
) -> Result<Option<LbpmOutput>> {
    let mut est = LbpmEstimator::new(cfg.clone(), lib)?;
    let t0 = stream.first().map_or(0.0, |o| o.t);
    let prior = Prior {
        t: t0,
        pose: *rough,
        v: 0.0,
        yaw_rate,
    };
    let mut last = None;
    for o in stream {
        if let Some(u) = est.push(o, &prior)? {
            last = Some(u.output);
        }
    }
    Ok(last)
}
