//! End-to-end estimation: standstill gate, filter prediction at the IMU rate
//! and marker-based corrections.
//!
//! IMU samples and marker observations are merged by timestamp. For every
//! IMU sample the classifier decides between holding the state and
//! predicting to the sample time followed by an update with the measured
//! yaw rate and accelerations. Each marker observation first brings the
//! filter to its timestamp, then feeds the marker estimator; an output is
//! applied at once as a pose (and, when cone pairs support it, speed)
//! measurement at its τ2, which is the observation time.
//!
//! With `concurrent` set, point clustering and standstill classification
//! run on their own threads behind bounded queues. Both stages are pure
//! functions of their input streams, so the fused output is identical.

use std::path::Path;
use std::sync::mpsc::sync_channel;

use serde::{Deserialize, Serialize};

use crate::ekf::{Channel, Ekf, EkfConfig, Measurement, UpdateStatus, VehicleState};
use crate::error::{Error, Result};
use crate::io::EstimateRow;
use crate::lbpm::{
    filter_points, Clusterer, LbpmConfig, LbpmEstimator, LbpmUpdate, LidarPoint, MarkerLibrary,
    MarkerObservation, Prior, VelocitySource,
};
use crate::ssc::{Classification, RandomForestModel, SscConfig, StandstillClassifier};
use crate::types::{ImuSample, LtpPose, MotionState};

/// Capacity of the queues between concurrent stages.
pub const QUEUE_CAPACITY: usize = 256;

/// Standard deviations assigned to IMU readings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImuSigma {
    pub yaw_rate: f64,
    pub accel: f64,
}

impl Default for ImuSigma {
    fn default() -> Self {
        Self {
            yaw_rate: 0.01,
            accel: 0.1,
        }
    }
}

/// Accuracy priors of marker-based outputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbpmSigma {
    pub v: f64,
    pub position: f64,
    pub psi: f64,
}

impl Default for LbpmSigma {
    fn default() -> Self {
        Self {
            v: 0.1,
            position: 0.05,
            psi: 0.01,
        }
    }
}

/// Everything that tunes an estimation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub ekf: EkfConfig,
    pub lbpm: LbpmConfig,
    pub ssc: SscConfig,
    pub imu_sigma: ImuSigma,
    pub lbpm_sigma: LbpmSigma,
    /// Hold the state whenever the classifier reports standstill.
    pub use_ssc: bool,
    /// Apply marker-based corrections when LiDAR points are given.
    pub use_lbpm: bool,
    /// Run clustering and classification on separate threads.
    pub concurrent: bool,
    /// After this many consecutive gated-out marker fixes the next one is
    /// applied without the gate. 0 disables re-acquisition.
    pub reacquire_after: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            ekf: EkfConfig::default(),
            lbpm: LbpmConfig::default(),
            ssc: SscConfig::default(),
            imu_sigma: ImuSigma::default(),
            lbpm_sigma: LbpmSigma::default(),
            use_ssc: true,
            use_lbpm: true,
            concurrent: false,
            reacquire_after: 25,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.ekf.validate()?;
        self.lbpm.validate()?;
        self.ssc.validate()?;
        let s = [
            self.imu_sigma.yaw_rate,
            self.imu_sigma.accel,
            self.lbpm_sigma.v,
            self.lbpm_sigma.position,
            self.lbpm_sigma.psi,
        ];
        if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("measurement sigmas must be positive".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Inputs of one run.
#[derive(Debug, Clone, Copy)]
pub struct PipelineInputs<'a> {
    pub imu: &'a [ImuSample],
    /// Raw LiDAR points, time-ordered.
    pub points: Option<&'a [LidarPoint]>,
    pub markers: Option<&'a MarkerLibrary>,
    pub classifier: Option<&'a RandomForestModel>,
    /// Pose at the first IMU sample.
    pub initial_pose: LtpPose,
    pub initial_speed: f64,
}

impl<'a> PipelineInputs<'a> {
    pub fn imu_only(imu: &'a [ImuSample], initial_pose: LtpPose) -> Self {
        Self {
            imu,
            points: None,
            markers: None,
            classifier: None,
            initial_pose,
            initial_speed: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub imu_samples: usize,
    pub standstill_samples: usize,
    pub observations: usize,
    pub lbpm_outputs: usize,
    pub lbpm_applied: usize,
    pub lbpm_rejected: usize,
    /// Outputs dropped because the vehicle was held.
    pub lbpm_skipped: usize,
    /// Outputs applied ungated after a run of rejections.
    pub lbpm_reacquired: usize,
    pub imu_rejected: usize,
}

/// Result of a run.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// One row per IMU sample.
    pub rows: Vec<EstimateRow>,
    /// Classifier output per IMU sample, when a model was given.
    pub classifications: Vec<Classification>,
    pub lbpm: Vec<LbpmUpdate>,
    pub stats: PipelineStats,
    pub final_state: VehicleState,
}

impl PipelineOutput {
    /// Length of the estimated path.
    pub fn path_length(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
            .sum()
    }

    /// Distance between the first and last estimated position.
    pub fn net_displacement(&self) -> f64 {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) => (b.x - a.x).hypot(b.y - a.y),
            _ => 0.0,
        }
    }
}

/// Streaming filter-and-cluster stage.
pub fn observation_stream<'a>(
    points: &'a [LidarPoint],
    cfg: &'a LbpmConfig,
) -> impl Iterator<Item = MarkerObservation> + 'a {
    let mut clusterer = Clusterer::new(cfg);
    let mut kept = filter_points(points, cfg).fuse();
    let mut done = false;
    std::iter::from_fn(move || loop {
        if done {
            return None;
        }
        match kept.next() {
            Some(p) => {
                if let Some(o) = clusterer.push(&p) {
                    return Some(o);
                }
            }
            None => {
                done = true;
                return clusterer.flush();
            }
        }
    })
}

fn validate_inputs(inputs: &PipelineInputs, cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    if inputs.imu.is_empty() {
        return Err(Error::Input("no IMU samples".into()));
    }
    if inputs.imu.windows(2).any(|w| !(w[1].t > w[0].t)) {
        return Err(Error::Input("IMU timestamps must increase".into()));
    }
    if cfg.use_lbpm && inputs.points.is_some_and(|p| !p.is_empty()) && inputs.markers.is_none() {
        return Err(Error::Input("LiDAR input needs a marker library".into()));
    }
    if cfg.use_ssc && inputs.classifier.is_none() {
        return Err(Error::Input(
            "standstill gating needs a classifier model".into(),
        ));
    }
    if !(inputs.initial_pose.is_finite() && inputs.initial_speed.is_finite()) {
        return Err(Error::Input("initial state must be finite".into()));
    }
    Ok(())
}

/// Runs the full pipeline over recorded inputs.
pub fn run(inputs: &PipelineInputs, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    validate_inputs(inputs, cfg)?;
    let points = match (cfg.use_lbpm, inputs.points, inputs.markers) {
        (true, Some(p), Some(_)) => p,
        _ => &[],
    };
    let model = if cfg.use_ssc { inputs.classifier } else { None };
    let classifier = model
        .map(|m| StandstillClassifier::new(m.clone(), cfg.ssc))
        .transpose()?;

    if !cfg.concurrent {
        let obs = observation_stream(points, &cfg.lbpm);
        let classes = classifier.map(|mut c| inputs.imu.iter().map(move |s| c.push(s)));
        return fuse(inputs, cfg, obs, classes.into_iter().flatten());
    }

    std::thread::scope(|scope| {
        let (obs_tx, obs_rx) = sync_channel::<MarkerObservation>(QUEUE_CAPACITY);
        let lbpm_cfg = cfg.lbpm.clone();
        scope.spawn(move || {
            for o in observation_stream(points, &lbpm_cfg) {
                if obs_tx.send(o).is_err() {
                    break;
                }
            }
        });
        let (cls_tx, cls_rx) = sync_channel::<Classification>(QUEUE_CAPACITY);
        if let Some(mut c) = classifier {
            let imu = inputs.imu;
            scope.spawn(move || {
                for s in imu {
                    if cls_tx.send(c.push(s)).is_err() {
                        break;
                    }
                }
            });
        } else {
            drop(cls_tx);
        }
        fuse(inputs, cfg, obs_rx.into_iter(), cls_rx.into_iter())
    })
}

fn fuse(
    inputs: &PipelineInputs,
    cfg: &PipelineConfig,
    observations: impl Iterator<Item = MarkerObservation>,
    mut classes: impl Iterator<Item = Classification>,
) -> Result<PipelineOutput> {
    let t0 = inputs.imu[0].t;
    let initial = VehicleState::at_pose(t0, inputs.initial_pose, inputs.initial_speed, &cfg.ekf);
    let mut ekf = Ekf::new(cfg.ekf.clone(), initial)?;
    let empty = MarkerLibrary::new(Vec::new())?;
    let lib = inputs.markers.unwrap_or(&empty);
    let mut lbpm = if lib.is_empty() {
        None
    } else {
        Some(LbpmEstimator::new(cfg.lbpm.clone(), lib)?)
    };

    let mut stats = PipelineStats::default();
    let mut rows = Vec::with_capacity(inputs.imu.len());
    let mut classifications = Vec::new();
    let mut updates = Vec::new();
    let gated = inputs.classifier.is_some() && cfg.use_ssc;
    let mut held = false;
    let mut rejected_run = 0usize;
    let mut observations = observations.peekable();

    for s in inputs.imu {
        stats.imu_samples += 1;
        while let Some(o) = observations.next_if(|o| o.t < s.t) {
            stats.observations += 1;
            // the filter cannot go back; early points see the initial state
            if !held && o.t > ekf.state().t {
                ekf.predict_to(o.t)?;
            }
            let Some(est) = lbpm.as_mut() else { continue };
            let st = ekf.state();
            let prior = Prior {
                t: st.t,
                pose: st.pose(),
                v: st.v(),
                yaw_rate: st.yaw_rate(),
            };
            let Some(u) = est.push(&o, &prior)? else {
                continue;
            };
            stats.lbpm_outputs += 1;
            if held {
                stats.lbpm_skipped += 1;
            } else {
                let z = lbpm_measurement(&u, cfg, ekf.state().t);
                let force = cfg.reacquire_after > 0 && rejected_run >= cfg.reacquire_after;
                if ekf.update(&z, !force).is_applied() {
                    stats.lbpm_applied += 1;
                    stats.lbpm_reacquired += usize::from(force);
                    rejected_run = 0;
                } else {
                    stats.lbpm_rejected += 1;
                    rejected_run += 1;
                }
            }
            updates.push(u);
        }

        let state = if gated {
            let c = classes
                .next()
                .ok_or_else(|| Error::Input("classifier stream ended early".into()))?;
            classifications.push(c);
            c.state
        } else {
            MotionState::Motion
        };
        let was_held = held;
        held = state == MotionState::Standstill;
        if was_held && !held {
            ekf.release();
        }
        if held {
            stats.standstill_samples += 1;
            ekf.hold(s.t);
        } else {
            if s.t > ekf.state().t {
                ekf.predict_to(s.t)?;
            }
            let z = Measurement::new(s.t)
                .with(Channel::YawRate, s.yaw_rate, cfg.imu_sigma.yaw_rate)
                .with(Channel::Ax, s.ax, cfg.imu_sigma.accel)
                .with(Channel::Ay, s.ay, cfg.imu_sigma.accel);
            if let UpdateStatus::Rejected(_) = ekf.update(&z, false) {
                stats.imu_rejected += 1;
            }
        }
        rows.push(EstimateRow::from_state(ekf.state()));
    }
    // drain so that producer threads never block on a full queue
    observations.for_each(drop);
    classes.for_each(drop);

    Ok(PipelineOutput {
        rows,
        classifications,
        lbpm: updates,
        stats,
        final_state: ekf.state().clone(),
    })
}

fn lbpm_measurement(u: &LbpmUpdate, cfg: &PipelineConfig, t: f64) -> Measurement {
    let p = u.corrected_t2;
    let sp = cfg.lbpm_sigma.position;
    let mut z = Measurement::new(t)
        .with(Channel::X, p.x, sp)
        .with(Channel::Y, p.y, sp)
        .with(Channel::Psi, p.psi, cfg.lbpm_sigma.psi);
    if u.output.velocity_source == VelocitySource::Cone {
        z = z.with(Channel::V, u.output.v, cfg.lbpm_sigma.v);
    }
    z
}

/// Writes the rows as CSV into a byte buffer.
pub fn rows_to_csv(rows: &[EstimateRow]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    crate::io::write_estimate(&mut buf, rows)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn still(n: usize) -> Vec<ImuSample> {
        (0..n)
            .map(|k| ImuSample {
                t: k as f64 * 0.01,
                ..Default::default()
            })
            .collect()
    }

    fn no_ssc() -> PipelineConfig {
        PipelineConfig {
            use_ssc: false,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn quiet_imu_stays_put() {
        let imu = still(500);
        let out = run(
            &PipelineInputs::imu_only(&imu, LtpPose::new(1.0, 2.0, 0.3)),
            &no_ssc(),
        )
        .unwrap();
        assert_eq!(out.rows.len(), 500);
        assert!(out.path_length() < 1e-9);
        let last = out.rows.last().unwrap();
        assert!((last.t - 4.99).abs() < 1e-12);
    }

    #[test]
    fn straight_acceleration_integrates() {
        let imu: Vec<ImuSample> = (0..=200)
            .map(|k| ImuSample {
                t: k as f64 * 0.01,
                ax: 1.0,
                ..Default::default()
            })
            .collect();
        let out = run(
            &PipelineInputs::imu_only(&imu, LtpPose::default()),
            &no_ssc(),
        )
        .unwrap();
        let last = out.rows.last().unwrap();
        // 0.5·a·t² for t = 2
        assert!((last.x - 2.0).abs() < 0.1, "x = {}", last.x);
        assert!((last.v - 2.0).abs() < 0.05);
        assert!(last.y.abs() < 1e-6);
    }

    #[test]
    fn lidar_without_library_is_rejected() {
        let imu = still(10);
        let pts = [LidarPoint {
            t: 0.0,
            distance: 1.0,
            azimuth: 0.0,
            reflectivity: 250,
        }];
        let inputs = PipelineInputs {
            points: Some(&pts),
            ..PipelineInputs::imu_only(&imu, LtpPose::default())
        };
        assert!(matches!(run(&inputs, &no_ssc()), Err(Error::Input(_))));
    }

    #[test]
    fn gating_requires_model() {
        let imu = still(10);
        let r = run(
            &PipelineInputs::imu_only(&imu, LtpPose::default()),
            &PipelineConfig::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn observation_stream_matches_batch() {
        let cfg = LbpmConfig::default();
        let pts: Vec<LidarPoint> = (0..50)
            .map(|k| LidarPoint {
                t: k as f64 * 1e-4 + (k / 5) as f64 * 0.01,
                distance: 5.0 + (k % 5) as f64 * 0.01,
                azimuth: 0.1 * (k / 5) as f64,
                reflectivity: if k % 7 == 0 { 100 } else { 230 },
            })
            .collect();
        let a: Vec<_> = observation_stream(&pts, &cfg).collect();
        let b = crate::lbpm::extract_observations(&pts, &cfg);
        assert_eq!(a, b);
    }
}
