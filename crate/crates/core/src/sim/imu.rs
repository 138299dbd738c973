//! IMU synthesis from the reference trajectory.
//!
//! Outputs the analytic body-frame accelerations and rates plus three
//! disturbance sources: white sensor noise; broadband road excitation while
//! rolling, strongest on the roll/pitch rates and the vertical axis; and
//! engine vibration at standstill, either a weak idle tone or band-limited
//! revving vibration on the accelerations during scheduled intervals.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{GroundTruthTrace, NoiseSpec};
use crate::types::{ImuSample, MotionState};

pub const GRAVITY: f64 = 9.81;

const VIBRATION_TONES: usize = 24;

#[derive(Debug, Clone)]
struct Tones {
    freq: Vec<f64>,
    phase: Vec<f64>,
    amp: f64,
}

impl Tones {
    fn band(rng: &mut ChaCha8Rng, band: [f64; 2], rms: f64) -> Self {
        let (lo, hi) = (band[0].min(band[1]), band[0].max(band[1]));
        let freq = (0..VIBRATION_TONES)
            .map(|_| {
                if hi > lo {
                    rng.random_range(lo..hi)
                } else {
                    lo
                }
            })
            .collect();
        let phase = (0..VIBRATION_TONES)
            .map(|_| rng.random_range(0.0..TAU))
            .collect();
        Self {
            freq,
            phase,
            amp: rms * (2.0 / VIBRATION_TONES as f64).sqrt(),
        }
    }

    fn at(&self, t: f64) -> f64 {
        self.freq
            .iter()
            .zip(&self.phase)
            .map(|(f, p)| (TAU * f * t + p).sin())
            .sum::<f64>()
            * self.amp
    }
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        z * sigma
    } else {
        0.0
    }
}

/// One IMU sample per truth sample.
pub fn synthesize_imu(
    truth: &GroundTruthTrace,
    noise: &NoiseSpec,
    raw_gravity: bool,
    seed: u64,
) -> Vec<ImuSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let vib: Vec<Tones> = (0..3)
        .map(|_| Tones::band(&mut rng, noise.vibration_band, noise.vibration_amplitude))
        .collect();
    let idle_phase: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..TAU));
    let white_a = Normal::new(0.0, noise.imu_accel_sigma.max(0.0)).expect("finite sigma");
    let white_g = Normal::new(0.0, noise.imu_gyro_sigma.max(0.0)).expect("finite sigma");

    truth
        .samples()
        .iter()
        .map(|s| {
            let mut out = ImuSample {
                t: s.t,
                ax: s.ax,
                ay: s.ay,
                az: if raw_gravity { GRAVITY } else { 0.0 },
                roll_rate: 0.0,
                pitch_rate: 0.0,
                yaw_rate: s.yaw_rate,
            };
            if s.motion == MotionState::Motion {
                let ra = noise.road_accel + noise.road_accel_per_speed * s.v;
                let rg = noise.road_gyro + noise.road_gyro_per_speed * s.v;
                out.ax += gauss(&mut rng, 0.5 * ra);
                out.ay += gauss(&mut rng, 0.5 * ra);
                out.az += gauss(&mut rng, ra);
                out.roll_rate += gauss(&mut rng, rg);
                out.pitch_rate += gauss(&mut rng, rg);
                out.yaw_rate += gauss(&mut rng, 0.25 * rg);
            } else if truth.vibrating_at(s.t) {
                out.ax += vib[0].at(s.t);
                out.ay += vib[1].at(s.t);
                out.az += vib[2].at(s.t);
            } else if noise.idle_accel > 0.0 {
                let w = TAU * noise.idle_frequency * s.t;
                out.ax += noise.idle_accel * (w + idle_phase[0]).sin();
                out.ay += noise.idle_accel * (w + idle_phase[1]).sin();
                out.az += noise.idle_accel * (w + idle_phase[2]).sin();
            }
            out.ax += white_a.sample(&mut rng);
            out.ay += white_a.sample(&mut rng);
            out.az += white_a.sample(&mut rng);
            out.roll_rate += white_g.sample(&mut rng);
            out.pitch_rate += white_g.sample(&mut rng);
            out.yaw_rate += white_g.sample(&mut rng);
            out
        })
        .collect()
}
