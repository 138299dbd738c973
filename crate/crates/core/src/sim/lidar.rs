//! Rotating single-line LiDAR synthesis.
//!
//! The beam turns clockwise at the configured rate and points along the body
//! x axis at the start of every sweep. A marker is hit when the beam azimuth
//! equals the marker's apparent azimuth; that instant is found by fixed-point
//! iteration because the car moves during the sweep. Each hit yields a few
//! reflective points at consecutive firings around the crossing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::GroundTruthTrace;
use super::NoiseSpec;
use crate::lbpm::{lcp_to_azimuth, LbpmConfig, LidarPoint, MarkerLibrary, MarkerObservation};
use crate::types::{ltp_to_lcp, wrap_two_pi};

/// Sensor-side parameters of the LiDAR model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarSimConfig {
    /// Azimuth step between firings, degrees.
    pub firing_step_deg: f64,
    /// Marker cylinder radius, metres.
    pub marker_radius: f64,
    /// Low-reflectivity returns per sweep.
    pub clutter_per_sweep: usize,
    /// Maximum clutter range, metres.
    pub clutter_max_range: f64,
}

impl Default for LidarSimConfig {
    fn default() -> Self {
        Self {
            firing_step_deg: 0.2,
            marker_radius: 0.05,
            clutter_per_sweep: 20,
            clutter_max_range: 30.0,
        }
    }
}

fn apparent(truth: &GroundTruthTrace, lib: &MarkerLibrary, i: usize, t: f64) -> Option<(f64, f64)> {
    let st = truth.state_at(t).ok()?;
    Some(lcp_to_azimuth(ltp_to_lcp(lib.position(i), &st.pose)))
}

/// Solves the beam crossing of marker `i` within the sweep starting at `t0`.
fn crossing(
    truth: &GroundTruthTrace,
    lib: &MarkerLibrary,
    i: usize,
    t0: f64,
    omega: f64,
    period: f64,
) -> Option<(f64, f64, f64)> {
    let mut t = t0 + apparent(truth, lib, i, t0)?.1 / omega;
    for _ in 0..30 {
        let tc = t.clamp(t0, t0 + period);
        let (_, az) = apparent(truth, lib, i, tc)?;
        let next = t0 + az / omega;
        if (next - t).abs() < 1e-11 {
            let (d, az) = apparent(truth, lib, i, next)?;
            return Some((next, d, az));
        }
        t = next;
    }
    None
}

/// Noise-free marker observations of every sweep, with their true marker.
pub fn exact_observations(
    truth: &GroundTruthTrace,
    lib: &MarkerLibrary,
    cfg: &LbpmConfig,
) -> Vec<MarkerObservation> {
    let (t_start, t_end) = truth.time_range();
    let omega = cfg.angular_rate();
    let period = cfg.sweep_period();
    let first = (t_start / period).ceil() as i64;
    let mut out = Vec::new();
    let mut k = first;
    loop {
        let t0 = k as f64 * period;
        if t0 + period > t_end {
            break;
        }
        let Ok(mid) = truth.state_at(t0 + 0.5 * period) else {
            break;
        };
        let candidates: Vec<usize> = lib
            .within(
                mid.pose.position(),
                cfg.max_marker_range + 2.0 + mid.v * period,
            )
            .collect();
        let mut sweep: Vec<MarkerObservation> = candidates
            .into_iter()
            .filter_map(|i| {
                let (t, d, az) = crossing(truth, lib, i, t0, omega, period)?;
                let inside = t >= t0 && t < t0 + period;
                (inside && d <= cfg.max_marker_range && d > 0.0).then(|| MarkerObservation {
                    t,
                    distance: d,
                    azimuth: wrap_two_pi(az),
                    n_points: 1,
                    marker: Some(i),
                })
            })
            .collect();
        sweep.sort_by(|a, b| a.t.total_cmp(&b.t));
        out.extend(sweep);
        k += 1;
    }
    out
}

/// Point returns of marker hits and clutter, time-ordered. Marker points
/// carry reflectivity ≥ 200, clutter < 200.
pub fn synthesize_lidar(
    truth: &GroundTruthTrace,
    lib: &MarkerLibrary,
    noise: &NoiseSpec,
    cfg: &LbpmConfig,
    sim: &LidarSimConfig,
    seed: u64,
) -> Vec<LidarPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let omega = cfg.angular_rate();
    let period = cfg.sweep_period();
    let step = sim.firing_step_deg.to_radians();
    let n01 = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let mut points = Vec::new();

    for o in exact_observations(truth, lib, cfg) {
        let half = (sim.marker_radius / o.distance).clamp(0.0, 1.0).asin();
        let n = ((2.0 * half / step).floor() as usize + 1).clamp(2, 5);
        for j in 0..n {
            let off = (j as f64 - 0.5 * (n as f64 - 1.0)) * step;
            let t = o.t + off / omega;
            let az = o.azimuth + off + noise.lidar_azimuth_sigma * n01(&mut rng);
            let d = o.distance + noise.lidar_range_sigma * n01(&mut rng);
            points.push(LidarPoint {
                t,
                distance: d.max(0.01),
                azimuth: wrap_two_pi(az),
                reflectivity: rng.random_range(200..=255),
            });
        }
    }

    let (t_start, t_end) = truth.time_range();
    let first = (t_start / period).ceil() as i64;
    let mut k = first;
    while (k as f64 + 1.0) * period <= t_end {
        let t0 = k as f64 * period;
        for _ in 0..sim.clutter_per_sweep {
            let t = t0 + rng.random_range(0.0..period);
            points.push(LidarPoint {
                t,
                distance: rng.random_range(0.5..sim.clutter_max_range.max(0.6)),
                azimuth: wrap_two_pi(omega * (t - t0)),
                reflectivity: rng.random_range(0..200),
            });
        }
        k += 1;
    }
    points.sort_by(|a, b| a.t.total_cmp(&b.t));
    points
}

/// Beam azimuth of a firing at `t`.
pub fn beam_azimuth(t: f64, cfg: &LbpmConfig) -> f64 {
    let period = cfg.sweep_period();
    let phase = t - (t / period).floor() * period;
    wrap_two_pi(cfg.angular_rate() * phase)
}
