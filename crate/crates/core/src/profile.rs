//! Per-call wall-time measurement of the pipeline modules.

use std::hint::black_box;
use std::time::Instant;

use crate::ekf::{Channel, Ekf, Measurement, VehicleState};
use crate::error::{Error, Result};
use crate::eval::RuntimeStat;
use crate::lbpm::{
    extract_observations, pose_from_marker_pair, velocity_from_observations, LidarPoint,
    MarkerObservation,
};
use crate::pipeline::PipelineConfig;
use crate::sim::{exact_observations, SimRun};
use crate::ssc::{RandomForestModel, StandstillClassifier};

/// Calls run before timing starts.
pub const WARM_UP: usize = 1000;

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Times `calls` invocations of `f(k)` after a warm-up.
pub fn time_calls(module: &str, calls: usize, mut f: impl FnMut(usize)) -> RuntimeStat {
    for k in 0..WARM_UP {
        f(k);
    }
    let mut us = Vec::with_capacity(calls);
    for k in 0..calls {
        let start = Instant::now();
        f(WARM_UP + k);
        us.push(start.elapsed().as_secs_f64() * 1e6);
    }
    let mean = us.iter().sum::<f64>() / calls.max(1) as f64;
    let var = us.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / calls.max(1) as f64;
    us.sort_by(f64::total_cmp);
    RuntimeStat {
        module: module.to_string(),
        calls,
        median_us: if us.is_empty() { 0.0 } else { median(&us) },
        std_us: var.sqrt(),
    }
}

fn sweeps(points: &[LidarPoint], period: f64) -> Vec<&[LidarPoint]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=points.len() {
        let split = i == points.len()
            || (points[i].t / period).floor() != (points[start].t / period).floor();
        if split {
            out.push(&points[start..i]);
            start = i;
        }
    }
    out
}

/// Times clustering, classification, the filter step, velocity and pose
/// estimation over data of one simulated run, cycling through it as often
/// as needed to reach `calls` per module.
pub fn profile(
    run: &SimRun,
    model: &RandomForestModel,
    cfg: &PipelineConfig,
    calls: usize,
) -> Result<Vec<RuntimeStat>> {
    let lbpm = &cfg.lbpm;
    let lib = &run.markers;
    let sweep_points = sweeps(&run.points, lbpm.sweep_period());
    if sweep_points.is_empty() || run.imu.is_empty() {
        return Err(Error::Input(
            "profiling needs IMU samples and LiDAR points".into(),
        ));
    }
    let exact = exact_observations(&run.truth, lib, lbpm);
    let period = lbpm.sweep_period();

    let mut same: Vec<(MarkerObservation, MarkerObservation)> = Vec::new();
    let mut last: Vec<Option<MarkerObservation>> = vec![None; lib.len()];
    let mut pairs: Vec<(MarkerObservation, MarkerObservation)> = Vec::new();
    for w in exact.windows(2) {
        if w[0].marker != w[1].marker && (w[1].t - w[0].t) < period {
            let b =
                (lib.position(w[0].marker.unwrap()) - lib.position(w[1].marker.unwrap())).norm();
            if b >= lbpm.min_pose_baseline {
                pairs.push((w[0], w[1]));
            }
        }
    }
    for o in &exact {
        let m = o.marker.expect("exact observations carry markers");
        if let Some(p) = last[m] {
            if o.t - p.t <= 1.5 * period {
                same.push((p, *o));
            }
        }
        last[m] = Some(*o);
    }
    if same.is_empty() || pairs.is_empty() {
        return Err(Error::Input(
            "run has too few marker observations to profile".into(),
        ));
    }

    let mut stats = Vec::new();
    stats.push(time_calls("clustering", calls, |k| {
        black_box(extract_observations(
            sweep_points[k % sweep_points.len()],
            lbpm,
        ));
    }));

    let mut clf = StandstillClassifier::new(model.clone(), cfg.ssc)?;
    let imu = &run.imu;
    stats.push(time_calls("ssc_classify", calls, |k| {
        black_box(clf.push(&imu[k % imu.len()]));
    }));

    let t0 = run.truth.samples()[0];
    let initial = VehicleState::at_pose(0.0, t0.pose(), t0.v, &cfg.ekf);
    let mut ekf = Ekf::new(cfg.ekf.clone(), initial)?;
    let dt = 1.0 / cfg.ssc.sample_rate;
    let sig = cfg.imu_sigma;
    let mut ekf_err = None;
    stats.push(time_calls("ekf_step", calls, |k| {
        let s = &imu[k % imu.len()];
        let t = (k + 1) as f64 * dt;
        if let Err(e) = ekf.predict_to(t) {
            ekf_err = Some(e);
        }
        let z = Measurement::new(t)
            .with(Channel::YawRate, s.yaw_rate, sig.yaw_rate)
            .with(Channel::Ax, s.ax, sig.accel)
            .with(Channel::Ay, s.ay, sig.accel);
        black_box(ekf.update(&z, false));
    }));
    if let Some(e) = ekf_err {
        return Err(e);
    }

    stats.push(time_calls("velocity", calls, |k| {
        let (a, b) = &same[k % same.len()];
        black_box(velocity_from_observations(a, b, t0.yaw_rate, lbpm.cone_form).ok());
    }));

    stats.push(time_calls("pose", calls, |k| {
        let (a, b) = &pairs[k % pairs.len()];
        let ids = (a.marker.unwrap(), b.marker.unwrap());
        black_box(pose_from_marker_pair(a, b, ids, lib, t0.v, t0.yaw_rate).ok());
    }));
    Ok(stats)
}
