//! Deterministic scenario simulator.
//!
//! A scenario builds a continuous trajectory (path plus speed profile); the
//! ground truth is that trajectory sampled at the IMU rate, and every sensor
//! stream is synthesised from it with a seeded RNG. The same scenario and
//! seed always give bit-identical streams.

mod fields;
mod imu;
mod lidar;
mod trajectory;

pub use fields::{corridor, grid, CorridorSpec};
pub use imu::{synthesize_imu, GRAVITY};
pub use lidar::{beam_azimuth, exact_observations, synthesize_lidar, LidarSimConfig};
pub use trajectory::{KinematicState, Path, PathPoint, Segment, SpeedProfile, Trajectory};

use std::f64::consts::{FRAC_PI_2, TAU};
use std::path::{Path as FsPath, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lbpm::{LbpmConfig, LidarPoint, MarkerLibrary};
use crate::types::{normalize_angle, ImuSample, LtpPose, MotionState};

/// Speed above which the vehicle counts as moving, m/s.
pub const MOTION_SPEED_EPS: f64 = 0.02;

/// IMU sampling rate of the simulator, Hz.
pub const IMU_RATE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Standstill,
    StandstillVibration,
    WalkingRoll,
    DriveBy,
    Slalom,
    Figure8,
    ParkingLoop,
    /// Alternating standstill (idle and revving), walking-speed roll and
    /// normal driving in roughly equal shares; SSC training data.
    ThreeMode,
}

/// Sensor noise and disturbance levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// White accelerometer noise, m/s².
    pub imu_accel_sigma: f64,
    /// White gyroscope noise, rad/s.
    pub imu_gyro_sigma: f64,
    /// RMS of the revving vibration at standstill, m/s².
    pub vibration_amplitude: f64,
    /// Frequency band of the revving vibration, Hz.
    pub vibration_band: [f64; 2],
    /// Road excitation while rolling: accelerometer σ at zero speed, m/s².
    pub road_accel: f64,
    /// Road excitation growth with speed, (m/s²) per (m/s).
    pub road_accel_per_speed: f64,
    /// Road excitation of the rotation rates at zero speed, rad/s.
    pub road_gyro: f64,
    /// Road excitation growth of the rotation rates, (rad/s) per (m/s).
    pub road_gyro_per_speed: f64,
    /// Amplitude of the engine idle tone at standstill, m/s².
    pub idle_accel: f64,
    /// Frequency of the engine idle tone, Hz.
    pub idle_frequency: f64,
    /// LiDAR range noise, m.
    pub lidar_range_sigma: f64,
    /// LiDAR azimuth noise, rad.
    pub lidar_azimuth_sigma: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            imu_accel_sigma: 0.02,
            imu_gyro_sigma: 0.002,
            vibration_amplitude: 0.5,
            vibration_band: [8.0, 30.0],
            road_accel: 0.05,
            road_accel_per_speed: 0.01,
            road_gyro: 0.01,
            road_gyro_per_speed: 0.002,
            idle_accel: 0.03,
            idle_frequency: 25.0,
            lidar_range_sigma: 0.02,
            lidar_azimuth_sigma: 0.05f64.to_radians(),
        }
    }
}

impl NoiseSpec {
    /// All noise and disturbances off.
    pub fn zero() -> Self {
        Self {
            imu_accel_sigma: 0.0,
            imu_gyro_sigma: 0.0,
            vibration_amplitude: 0.0,
            road_accel: 0.0,
            road_accel_per_speed: 0.0,
            road_gyro: 0.0,
            road_gyro_per_speed: 0.0,
            idle_accel: 0.0,
            lidar_range_sigma: 0.0,
            lidar_azimuth_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = [
            self.imu_accel_sigma,
            self.imu_gyro_sigma,
            self.vibration_amplitude,
            self.vibration_band[0],
            self.vibration_band[1],
            self.road_accel,
            self.road_accel_per_speed,
            self.road_gyro,
            self.road_gyro_per_speed,
            self.idle_accel,
            self.idle_frequency,
            self.lidar_range_sigma,
            self.lidar_azimuth_sigma,
        ];
        if v.iter().all(|x| x.is_finite() && *x >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config(
                "noise parameters must be finite and >= 0".into(),
            ))
        }
    }
}

/// Simulator input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: ScenarioKind,
    /// Cruise speed, m/s.
    #[serde(default)]
    pub speed: f64,
    /// Seconds.
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseSpec,
    /// Emit raw accelerations (`az = +g` at rest) instead of
    /// gravity-compensated ones.
    #[serde(default = "raw_gravity_default")]
    pub raw_gravity: bool,
    #[serde(default)]
    pub lidar: LidarSimConfig,
    #[serde(default)]
    pub lbpm: LbpmConfig,
    /// Marker library file; a layout is generated for the kind when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marker_file: Option<PathBuf>,
    #[serde(skip)]
    pub marker_field: Option<MarkerLibrary>,
}

fn raw_gravity_default() -> bool {
    true
}

impl Scenario {
    pub fn new(kind: ScenarioKind, speed: f64, duration: f64, seed: u64) -> Self {
        Self {
            kind,
            speed,
            duration,
            seed,
            noise: NoiseSpec::default(),
            raw_gravity: true,
            lidar: LidarSimConfig::default(),
            lbpm: LbpmConfig::default(),
            marker_file: None,
            marker_field: None,
        }
    }

    pub fn with_noise(mut self, noise: NoiseSpec) -> Self {
        self.noise = noise;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Config(format!(
                "duration {} must be positive",
                self.duration
            )));
        }
        if !(self.speed >= 0.0 && self.speed.is_finite()) {
            return Err(Error::Config(format!("speed {} must be >= 0", self.speed)));
        }
        if self.kind == ScenarioKind::WalkingRoll && self.speed > 1.0 {
            return Err(Error::Config("walking roll speed must be <= 1 m/s".into()));
        }
        self.noise.validate()?;
        self.lbpm.validate()
    }

    /// Reads a TOML scenario. A relative `marker_file` is resolved against
    /// the scenario's directory.
    pub fn load(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut sc: Scenario = toml::from_str(&text)?;
        if let Some(f) = &sc.marker_file {
            let f = if f.is_relative() {
                path.parent().unwrap_or(FsPath::new(".")).join(f)
            } else {
                f.clone()
            };
            sc.marker_field = Some(MarkerLibrary::load(&f)?);
        }
        sc.validate()?;
        Ok(sc)
    }

    /// Speed used when none is given.
    fn cruise(&self) -> f64 {
        if self.speed > 0.0 {
            return self.speed;
        }
        match self.kind {
            ScenarioKind::WalkingRoll => 0.5,
            ScenarioKind::ParkingLoop => 3.0,
            ScenarioKind::Standstill | ScenarioKind::StandstillVibration => 0.0,
            _ => 5.0,
        }
    }
}

/// One truth row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub v: f64,
    pub yaw_rate: f64,
    /// Longitudinal acceleration.
    pub ax: f64,
    /// Lateral acceleration.
    pub ay: f64,
    pub motion: MotionState,
}

impl TruthSample {
    pub fn pose(&self) -> LtpPose {
        LtpPose::new(self.x, self.y, self.psi)
    }

    fn from_state(k: &KinematicState) -> Self {
        Self {
            t: k.t,
            x: k.pose.x,
            y: k.pose.y,
            psi: k.pose.psi,
            v: k.v,
            yaw_rate: k.yaw_rate,
            ax: k.a,
            ay: k.lateral_acceleration(),
            motion: motion_state(k.v),
        }
    }
}

/// Motion state implied by a speed.
pub fn motion_state(v: f64) -> MotionState {
    if v > MOTION_SPEED_EPS {
        MotionState::Motion
    } else {
        MotionState::Standstill
    }
}

/// Truth state at an arbitrary instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthState {
    pub t: f64,
    pub pose: LtpPose,
    pub v: f64,
    pub yaw_rate: f64,
    pub motion: MotionState,
}

/// Sampled ground truth, optionally backed by the continuous trajectory it
/// was sampled from.
#[derive(Debug, Clone)]
pub struct GroundTruthTrace {
    samples: Vec<TruthSample>,
    trajectory: Option<Trajectory>,
    vibration: Vec<[f64; 2]>,
}

impl GroundTruthTrace {
    /// Wraps recorded samples (for example read from CSV). They must be
    /// strictly increasing in time.
    pub fn from_samples(samples: Vec<TruthSample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Input("empty ground truth".into()));
        }
        if samples.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::Input("ground truth timestamps must increase".into()));
        }
        Ok(Self {
            samples,
            trajectory: None,
            vibration: Vec::new(),
        })
    }

    /// Samples `trajectory` at `rate` Hz on `[0, duration)`.
    pub fn sample(trajectory: Trajectory, duration: f64, rate: f64) -> Self {
        let n = (duration * rate).round().max(1.0) as usize;
        let samples = (0..n)
            .map(|k| TruthSample::from_state(&trajectory.state(k as f64 / rate)))
            .collect();
        Self {
            samples,
            trajectory: Some(trajectory),
            vibration: Vec::new(),
        }
    }

    pub fn with_vibration(mut self, intervals: Vec<[f64; 2]>) -> Self {
        self.vibration = intervals;
        self
    }

    pub fn samples(&self) -> &[TruthSample] {
        &self.samples
    }

    pub fn trajectory(&self) -> Option<&Trajectory> {
        self.trajectory.as_ref()
    }

    pub fn vibration_intervals(&self) -> &[[f64; 2]] {
        &self.vibration
    }

    pub fn vibrating_at(&self, t: f64) -> bool {
        self.vibration.iter().any(|[a, b]| t >= *a && t < *b)
    }

    pub fn time_range(&self) -> (f64, f64) {
        (self.samples[0].t, self.samples[self.samples.len() - 1].t)
    }

    pub fn duration(&self) -> f64 {
        let (a, b) = self.time_range();
        b - a
    }

    /// Truth at `t`, exact when the trajectory is known, else interpolated.
    pub fn state_at(&self, t: f64) -> Result<TruthState> {
        let (t0, t1) = self.time_range();
        let tol = 1e-9;
        if !(t >= t0 - tol && t <= t1 + tol) {
            return Err(Error::OutsideTruth(t));
        }
        if let Some(tr) = &self.trajectory {
            let k = tr.state(t);
            return Ok(TruthState {
                t,
                pose: k.pose,
                v: k.v,
                yaw_rate: k.yaw_rate,
                motion: motion_state(k.v),
            });
        }
        let i = self.samples.partition_point(|s| s.t <= t);
        if i == 0 {
            let s = &self.samples[0];
            return Ok(Self::state_of(s));
        }
        if i >= self.samples.len() {
            return Ok(Self::state_of(&self.samples[self.samples.len() - 1]));
        }
        let (a, b) = (&self.samples[i - 1], &self.samples[i]);
        let w = (t - a.t) / (b.t - a.t);
        let lerp = |x: f64, y: f64| x + (y - x) * w;
        let v = lerp(a.v, b.v);
        Ok(TruthState {
            t,
            pose: LtpPose::new(
                lerp(a.x, b.x),
                lerp(a.y, b.y),
                a.psi + normalize_angle(b.psi - a.psi) * w,
            ),
            v,
            yaw_rate: lerp(a.yaw_rate, b.yaw_rate),
            // the state the vehicle is going into
            motion: if w > 0.0 { b.motion } else { a.motion },
        })
    }

    fn state_of(s: &TruthSample) -> TruthState {
        TruthState {
            t: s.t,
            pose: s.pose(),
            v: s.v,
            yaw_rate: s.yaw_rate,
            motion: s.motion,
        }
    }

    pub fn motion_state_at(&self, t: f64) -> Result<MotionState> {
        Ok(self.state_at(t)?.motion)
    }
}

/// Everything one scenario run produces.
#[derive(Debug, Clone)]
pub struct SimRun {
    pub scenario: Scenario,
    pub truth: GroundTruthTrace,
    pub imu: Vec<ImuSample>,
    pub points: Vec<LidarPoint>,
    pub markers: MarkerLibrary,
}

fn slalom_segments(length: f64) -> Vec<Segment> {
    let wavelength = 36.0;
    let periods = (length / wavelength).max(1.0).floor();
    vec![
        Segment::Line { length: 20.0 },
        Segment::Slalom {
            length: periods * wavelength,
            amplitude: 0.25,
            wavelength,
        },
        Segment::Line { length: 40.0 },
    ]
}

fn figure8_segments(radius: f64, loops: usize) -> Vec<Segment> {
    let mut segs = Vec::new();
    for _ in 0..loops {
        segs.push(Segment::Arc {
            length: TAU * radius,
            curvature: 1.0 / radius,
        });
        segs.push(Segment::Arc {
            length: TAU * radius,
            curvature: -1.0 / radius,
        });
    }
    segs
}

fn parking_segments(loops: usize) -> Vec<Segment> {
    let r = 6.0;
    let mut segs = Vec::new();
    for _ in 0..loops {
        for side in [40.0, 20.0, 40.0, 20.0] {
            segs.push(Segment::Line { length: side });
            segs.push(Segment::Arc {
                length: FRAC_PI_2 * r,
                curvature: 1.0 / r,
            });
        }
    }
    segs
}

/// Random, gently curving road for long mixed runs.
fn meander_segments(length: f64, rng: &mut ChaCha8Rng) -> Vec<Segment> {
    let mut segs = Vec::new();
    let mut total = 0.0;
    while total < length {
        let l = rng.random_range(20.0..80.0);
        let seg = if rng.random_bool(0.4) {
            Segment::Line { length: l }
        } else {
            Segment::Arc {
                length: l,
                curvature: rng.random_range(-0.04..0.04),
            }
        };
        total += l;
        segs.push(seg);
    }
    segs
}

/// Speed knots for the three-mode recipe and the revving intervals.
fn three_mode_profile(duration: f64, rng: &mut ChaCha8Rng) -> (Vec<(f64, f64)>, Vec<[f64; 2]>) {
    let mut knots = vec![(0.0, 0.0)];
    let mut vib = Vec::new();
    let mut t = 0.0;
    let share = 40.0;
    while t < duration {
        // standstill: half idle, half revving
        let st = rng.random_range(0.75..1.25) * share;
        let rev0 = t + rng.random_range(0.2..0.4) * st;
        vib.push([rev0, rev0 + 0.5 * st]);
        t += st;
        knots.push((t, 0.0));

        // walking-speed roll
        let wt = rng.random_range(0.75..1.25) * share;
        let wv = rng.random_range(0.3..1.0);
        let ramp = rng.random_range(1.5..3.0);
        knots.push((t + ramp, wv));
        knots.push((t + wt - ramp, wv * rng.random_range(0.6..1.0)));
        t += wt;
        knots.push((t, 0.0));

        // short stop, then normal driving with varying speed
        let gap = rng.random_range(2.0..4.0);
        t += gap;
        knots.push((t, 0.0));
        let nt = rng.random_range(0.75..1.25) * share;
        let end = t + nt;
        let mut tk = t;
        while tk + 12.0 < end {
            tk += rng.random_range(4.0..8.0);
            knots.push((tk, rng.random_range(3.0..15.0)));
        }
        knots.push((end, 0.0));
        t = end;
    }
    (knots, vib)
}

/// Builds the continuous trajectory and revving schedule of a scenario.
pub fn scenario_trajectory(sc: &Scenario) -> Result<(Trajectory, Vec<[f64; 2]>)> {
    sc.validate()?;
    let v = sc.cruise();
    let d = sc.duration;
    let start = LtpPose::default();
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    rng.set_stream(4);
    let whole = vec![[0.0, d + 1.0]];
    let (segments, speed, vib): (Vec<Segment>, SpeedProfile, Vec<[f64; 2]>) = match sc.kind {
        ScenarioKind::Standstill => (vec![], SpeedProfile::constant(0.0)?, vec![]),
        ScenarioKind::StandstillVibration => (vec![], SpeedProfile::constant(0.0)?, whole),
        ScenarioKind::WalkingRoll => {
            let hold = (0.1 * d).min(3.0);
            let ramp = (0.1 * d).min(3.0);
            let knots = vec![
                (0.0, 0.0),
                (hold, 0.0),
                (hold + ramp, v),
                (d - hold - ramp, v),
                (d - hold, 0.0),
            ];
            (
                vec![Segment::Line {
                    length: v * d + 10.0,
                }],
                SpeedProfile::new(knots)?,
                vec![],
            )
        }
        ScenarioKind::DriveBy => (
            vec![Segment::Line {
                length: v * d + 30.0,
            }],
            SpeedProfile::constant(v)?,
            vec![],
        ),
        ScenarioKind::Slalom => (slalom_segments(v * d), SpeedProfile::constant(v)?, vec![]),
        ScenarioKind::Figure8 => {
            // speed varies between 70% and 100% of cruise
            let mut knots = vec![(0.0, v)];
            let mut t = 0.0;
            let mut hi = false;
            while t < d {
                t += rng.random_range(8.0..15.0);
                knots.push((t, if hi { v } else { 0.7 * v }));
                hi = !hi;
            }
            let length: f64 = knots
                .windows(2)
                .map(|w| (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1))
                .sum();
            let radius = 20.0;
            let loops = (length / (2.0 * TAU * radius)).ceil() as usize + 1;
            (
                figure8_segments(radius, loops),
                SpeedProfile::new(knots)?,
                vec![],
            )
        }
        ScenarioKind::ParkingLoop => {
            let ramp = 3.0_f64.min(0.2 * d);
            let knots = vec![(0.0, 0.0), (ramp, v), (d - ramp, v), (d, 0.0)];
            let loops = (v * d / 150.0).ceil() as usize + 1;
            (parking_segments(loops), SpeedProfile::new(knots)?, vec![])
        }
        ScenarioKind::ThreeMode => {
            let (knots, vib) = three_mode_profile(d, &mut rng);
            let length: f64 = knots
                .windows(2)
                .map(|w| (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1))
                .sum();
            (
                meander_segments(length + 100.0, &mut rng),
                SpeedProfile::new(knots)?,
                vib,
            )
        }
    };
    Ok((Trajectory::new(Path::new(start, &segments)?, speed), vib))
}

/// Ground truth of a scenario at the IMU rate.
pub fn generate_truth(sc: &Scenario) -> Result<GroundTruthTrace> {
    let (tr, vib) = scenario_trajectory(sc)?;
    Ok(GroundTruthTrace::sample(tr, sc.duration, IMU_RATE).with_vibration(vib))
}

/// Marker layout used when the scenario does not provide one.
pub fn default_marker_field(sc: &Scenario, truth: &GroundTruthTrace) -> MarkerLibrary {
    let spec = match sc.kind {
        ScenarioKind::ParkingLoop => CorridorSpec {
            spacing: 4.0,
            offset: 3.0,
            ..CorridorSpec::default()
        },
        ScenarioKind::Figure8 => CorridorSpec {
            offset: 3.5,
            ..CorridorSpec::default()
        },
        _ => CorridorSpec::default(),
    };
    match truth.trajectory() {
        Some(tr) if tr.path.length() > 0.0 => corridor(&tr.path, &spec, sc.seed),
        _ => {
            // a parking bay around the origin
            let p = Path::new(
                LtpPose::new(-10.0, 0.0, 0.0),
                &[Segment::Line { length: 20.0 }],
            )
            .expect("fixed path");
            corridor(&p, &spec, sc.seed)
        }
    }
}

/// Runs a scenario end to end.
pub fn simulate(sc: &Scenario) -> Result<SimRun> {
    let truth = generate_truth(sc)?;
    let markers = match &sc.marker_field {
        Some(m) => m.clone(),
        None => default_marker_field(sc, &truth),
    };
    let imu = synthesize_imu(&truth, &sc.noise, sc.raw_gravity, sc.seed);
    let points = synthesize_lidar(&truth, &markers, &sc.noise, &sc.lbpm, &sc.lidar, sc.seed);
    Ok(SimRun {
        scenario: sc.clone(),
        truth,
        imu,
        points,
        markers,
    })
}
