//! CSV readers and writers for every stream the tools exchange.
//!
//! | stream      | header |
//! |-------------|--------|
//! | IMU         | `t,ax,ay,az,roll_rate,pitch_rate,yaw_rate[,label]` |
//! | points      | `t,distance,azimuth_deg,reflectivity` |
//! | truth       | `t,x,y,psi,v,yaw_rate,ax,ay,label` |
//! | estimate    | `t,x,y,psi,v,yaw_rate,beta_v,beta_p,ax,ay,ay_circ,std_x,std_y,std_psi` |
//! | LbPM output | `t1,t2,v,x1,y1,psi1,x2,y2,psi2,quality` |
//!
//! Labels are 0 for standstill and 1 for motion. Azimuth is stored in
//! degrees and held in radians in memory.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::ekf::{idx, VehicleState};
use crate::error::{Error, Result};
use crate::lbpm::{LbpmOutput, LidarPoint, VelocitySource};
use crate::sim::TruthSample;
use crate::types::{ImuSample, LtpPose, MotionState};

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

fn read_rows<T: DeserializeOwned, R: Read>(r: R) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    rdr.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

fn write_rows<T: Serialize, W: Write>(w: W, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush().map_err(|e| Error::Input(e.to_string()))?;
    Ok(())
}

fn label_of(v: Option<u8>) -> Result<Option<MotionState>> {
    v.map(|l| MotionState::from_label(l).ok_or_else(|| Error::Input(format!("label {l} not 0/1"))))
        .transpose()
}

#[derive(Debug, Serialize, Deserialize)]
struct ImuRow {
    t: f64,
    ax: f64,
    ay: f64,
    az: f64,
    roll_rate: f64,
    pitch_rate: f64,
    yaw_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<u8>,
}

/// IMU samples with optional per-sample labels.
pub fn read_imu<R: Read>(r: R) -> Result<(Vec<ImuSample>, Option<Vec<MotionState>>)> {
    let rows: Vec<ImuRow> = read_rows(r)?;
    let mut samples = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for row in &rows {
        let s = ImuSample {
            t: row.t,
            ax: row.ax,
            ay: row.ay,
            az: row.az,
            roll_rate: row.roll_rate,
            pitch_rate: row.pitch_rate,
            yaw_rate: row.yaw_rate,
        };
        if !s.is_finite() {
            return Err(Error::Input(format!(
                "non-finite IMU sample at t = {}",
                row.t
            )));
        }
        if let Some(prev) = samples.last() {
            let prev: &ImuSample = prev;
            if !(s.t > prev.t) {
                return Err(Error::Input(format!(
                    "IMU timestamps not increasing at t = {}",
                    s.t
                )));
            }
        }
        samples.push(s);
        labels.push(label_of(row.label)?);
    }
    let labels = if labels.iter().all(Option::is_some) && !labels.is_empty() {
        Some(labels.into_iter().map(Option::unwrap).collect())
    } else if labels.iter().all(Option::is_none) {
        None
    } else {
        return Err(Error::Input("label column partially filled".into()));
    };
    Ok((samples, labels))
}

pub fn read_imu_file(path: &Path) -> Result<(Vec<ImuSample>, Option<Vec<MotionState>>)> {
    read_imu(open(path)?)
}

pub fn write_imu<W: Write>(
    w: W,
    samples: &[ImuSample],
    labels: Option<&[MotionState]>,
) -> Result<()> {
    if let Some(l) = labels {
        if l.len() != samples.len() {
            return Err(Error::Input("label count differs from sample count".into()));
        }
    }
    write_rows(
        w,
        samples.iter().enumerate().map(|(i, s)| ImuRow {
            t: s.t,
            ax: s.ax,
            ay: s.ay,
            az: s.az,
            roll_rate: s.roll_rate,
            pitch_rate: s.pitch_rate,
            yaw_rate: s.yaw_rate,
            label: labels.map(|l| l[i].label()),
        }),
    )
}

pub fn write_imu_file(
    path: &Path,
    samples: &[ImuSample],
    labels: Option<&[MotionState]>,
) -> Result<()> {
    write_imu(create(path)?, samples, labels)
}

#[derive(Debug, Serialize, Deserialize)]
struct PointRow {
    t: f64,
    distance: f64,
    azimuth_deg: f64,
    reflectivity: u8,
}

pub fn read_points<R: Read>(r: R) -> Result<Vec<LidarPoint>> {
    let rows: Vec<PointRow> = read_rows(r)?;
    rows.into_iter()
        .map(|p| {
            if !(p.distance > 0.0 && p.t.is_finite() && p.azimuth_deg.is_finite()) {
                return Err(Error::Input(format!("invalid LiDAR point at t = {}", p.t)));
            }
            Ok(LidarPoint {
                t: p.t,
                distance: p.distance,
                azimuth: crate::types::wrap_two_pi(p.azimuth_deg.to_radians()),
                reflectivity: p.reflectivity,
            })
        })
        .collect()
}

pub fn read_points_file(path: &Path) -> Result<Vec<LidarPoint>> {
    read_points(open(path)?)
}

pub fn write_points<W: Write>(w: W, points: &[LidarPoint]) -> Result<()> {
    write_rows(
        w,
        points.iter().map(|p| PointRow {
            t: p.t,
            distance: p.distance,
            azimuth_deg: p.azimuth.to_degrees(),
            reflectivity: p.reflectivity,
        }),
    )
}

pub fn write_points_file(path: &Path, points: &[LidarPoint]) -> Result<()> {
    write_points(create(path)?, points)
}

#[derive(Debug, Serialize, Deserialize)]
struct TruthRow {
    t: f64,
    x: f64,
    y: f64,
    psi: f64,
    v: f64,
    yaw_rate: f64,
    ax: f64,
    ay: f64,
    label: u8,
}

pub fn read_truth<R: Read>(r: R) -> Result<Vec<TruthSample>> {
    let rows: Vec<TruthRow> = read_rows(r)?;
    rows.into_iter()
        .map(|r| {
            Ok(TruthSample {
                t: r.t,
                x: r.x,
                y: r.y,
                psi: r.psi,
                v: r.v,
                yaw_rate: r.yaw_rate,
                ax: r.ax,
                ay: r.ay,
                motion: label_of(Some(r.label))?.expect("label present"),
            })
        })
        .collect()
}

pub fn read_truth_file(path: &Path) -> Result<Vec<TruthSample>> {
    read_truth(open(path)?)
}

pub fn write_truth<W: Write>(w: W, samples: &[TruthSample]) -> Result<()> {
    write_rows(
        w,
        samples.iter().map(|s| TruthRow {
            t: s.t,
            x: s.x,
            y: s.y,
            psi: s.psi,
            v: s.v,
            yaw_rate: s.yaw_rate,
            ax: s.ax,
            ay: s.ay,
            label: s.motion.label(),
        }),
    )
}

pub fn write_truth_file(path: &Path, samples: &[TruthSample]) -> Result<()> {
    write_truth(create(path)?, samples)
}

/// One row of the estimated trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub v: f64,
    pub yaw_rate: f64,
    pub beta_v: f64,
    pub beta_p: f64,
    pub ax: f64,
    pub ay: f64,
    pub ay_circ: f64,
    pub std_x: f64,
    pub std_y: f64,
    pub std_psi: f64,
}

impl EstimateRow {
    pub fn from_state(s: &VehicleState) -> Self {
        Self {
            t: s.t,
            x: s.x(),
            y: s.y(),
            psi: s.psi(),
            v: s.v(),
            yaw_rate: s.yaw_rate(),
            beta_v: s.beta_v(),
            beta_p: s.beta_p(),
            ax: s.ax(),
            ay: s.ay(),
            ay_circ: s.ay_circ(),
            std_x: s.std(idx::X),
            std_y: s.std(idx::Y),
            std_psi: s.std(idx::PSI),
        }
    }

    pub fn pose(&self) -> LtpPose {
        LtpPose::new(self.x, self.y, self.psi)
    }
}

pub fn read_estimate<R: Read>(r: R) -> Result<Vec<EstimateRow>> {
    read_rows(r)
}

pub fn read_estimate_file(path: &Path) -> Result<Vec<EstimateRow>> {
    read_estimate(open(path)?)
}

pub fn write_estimate<W: Write>(w: W, rows: &[EstimateRow]) -> Result<()> {
    write_rows(w, rows)
}

pub fn write_estimate_file(path: &Path, rows: &[EstimateRow]) -> Result<()> {
    write_estimate(create(path)?, rows)
}

#[derive(Debug, Serialize, Deserialize)]
struct LbpmRow {
    t1: f64,
    t2: f64,
    v: f64,
    x1: f64,
    y1: f64,
    psi1: f64,
    x2: f64,
    y2: f64,
    psi2: f64,
    quality: u32,
}

pub fn write_lbpm<W: Write>(w: W, outputs: &[LbpmOutput]) -> Result<()> {
    write_rows(
        w,
        outputs.iter().map(|o| LbpmRow {
            t1: o.t1,
            t2: o.t2,
            v: o.v,
            x1: o.pose_t1.x,
            y1: o.pose_t1.y,
            psi1: o.pose_t1.psi,
            x2: o.pose_t2.x,
            y2: o.pose_t2.y,
            psi2: o.pose_t2.psi,
            quality: o.quality,
        }),
    )
}

pub fn write_lbpm_file(path: &Path, outputs: &[LbpmOutput]) -> Result<()> {
    write_lbpm(create(path)?, outputs)
}

/// Reads LbPM outputs. A quality of 2 or less marks a prior-derived speed.
pub fn read_lbpm<R: Read>(r: R) -> Result<Vec<LbpmOutput>> {
    let rows: Vec<LbpmRow> = read_rows(r)?;
    Ok(rows
        .into_iter()
        .map(|r| LbpmOutput {
            t1: r.t1,
            t2: r.t2,
            v: r.v,
            pose_t1: LtpPose::new(r.x1, r.y1, r.psi1),
            pose_t2: LtpPose::new(r.x2, r.y2, r.psi2),
            quality: r.quality,
            velocity_source: if r.quality > 2 {
                VelocitySource::Cone
            } else {
                VelocitySource::Prior
            },
        })
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct ClassRow {
    t: f64,
    standstill_fraction: f64,
    label: u8,
}

/// Per-sample classifier output.
pub fn write_classification<W: Write>(w: W, rows: &[(f64, f64, MotionState)]) -> Result<()> {
    write_rows(
        w,
        rows.iter().map(|(t, f, s)| ClassRow {
            t: *t,
            standstill_fraction: *f,
            label: s.label(),
        }),
    )
}

pub fn write_classification_file(path: &Path, rows: &[(f64, f64, MotionState)]) -> Result<()> {
    write_classification(create(path)?, rows)
}
