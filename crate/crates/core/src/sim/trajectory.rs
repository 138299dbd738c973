//! Continuous reference trajectories: a planar path in arclength combined
//! with a smooth speed profile in time.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{normalize_angle, LtpPose, Vec2};

/// Path primitive, parameterised by arclength `u ∈ [0, length]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Segment {
    Line {
        length: f64,
    },
    /// Constant curvature (1/m, positive turns left).
    Arc {
        length: f64,
        curvature: f64,
    },
    /// Heading `ψ0 + amplitude · sin(2π u / wavelength)` about a straight
    /// baseline.
    Slalom {
        length: f64,
        amplitude: f64,
        wavelength: f64,
    },
}

impl Segment {
    pub fn length(&self) -> f64 {
        match *self {
            Segment::Line { length }
            | Segment::Arc { length, .. }
            | Segment::Slalom { length, .. } => length,
        }
    }

    /// Heading change from the segment start at `u`.
    fn heading(&self, u: f64) -> f64 {
        match *self {
            Segment::Line { .. } => 0.0,
            Segment::Arc { curvature, .. } => curvature * u,
            Segment::Slalom {
                amplitude,
                wavelength,
                ..
            } => amplitude * (TAU * u / wavelength).sin(),
        }
    }

    fn curvature(&self, u: f64) -> f64 {
        match *self {
            Segment::Line { .. } => 0.0,
            Segment::Arc { curvature, .. } => curvature,
            Segment::Slalom {
                amplitude,
                wavelength,
                ..
            } => amplitude * TAU / wavelength * (TAU * u / wavelength).cos(),
        }
    }
}

#[allow(clippy::excessive_precision)]
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
#[allow(clippy::excessive_precision)]
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

#[derive(Debug, Clone, PartialEq)]
struct Placed {
    s0: f64,
    start: Vec2,
    psi0: f64,
    seg: Segment,
    /// Quadrature knots for the slalom: spacing and cumulative offsets.
    knot_step: f64,
    knots: Vec<Vec2>,
}

impl Placed {
    fn new(s0: f64, start: Vec2, psi0: f64, seg: Segment) -> Self {
        let mut p = Self {
            s0,
            start,
            psi0,
            seg,
            knot_step: 0.0,
            knots: Vec::new(),
        };
        if let Segment::Slalom {
            length, wavelength, ..
        } = seg
        {
            p.knot_step = wavelength / 32.0;
            let n = (length / p.knot_step).ceil() as usize;
            let mut acc = Vec2::zeros();
            p.knots.push(acc);
            for k in 0..n {
                let a = k as f64 * p.knot_step;
                acc += p.integrate(a, (a + p.knot_step).min(length));
                p.knots.push(acc);
            }
        }
        p
    }

    fn integrate(&self, a: f64, b: f64) -> Vec2 {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        let mut acc = Vec2::zeros();
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            let (s, c) = (self.psi0 + self.seg.heading(mid + half * x)).sin_cos();
            acc += Vec2::new(c, s) * w;
        }
        acc * half
    }

    /// Offset from the segment start at `u`.
    fn offset(&self, u: f64) -> Vec2 {
        match self.seg {
            Segment::Line { .. } => {
                let (s, c) = self.psi0.sin_cos();
                Vec2::new(c, s) * u
            }
            Segment::Arc { curvature, .. } => {
                let (s0, c0) = self.psi0.sin_cos();
                if curvature.abs() < 1e-9 {
                    return Vec2::new(c0, s0) * u;
                }
                let (s1, c1) = (self.psi0 + curvature * u).sin_cos();
                Vec2::new(s1 - s0, c0 - c1) / curvature
            }
            Segment::Slalom { .. } => {
                let k = ((u / self.knot_step).floor() as usize).min(self.knots.len() - 1);
                let a = k as f64 * self.knot_step;
                self.knots[k] + self.integrate(a, u)
            }
        }
    }
}

/// Point on a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub position: Vec2,
    /// Unwrapped heading.
    pub heading: f64,
    pub curvature: f64,
}

/// Concatenation of segments with continuous position and heading.
/// Beyond its end the path continues straight.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    placed: Vec<Placed>,
    length: f64,
    end: PathPoint,
}

impl Path {
    pub fn new(start: LtpPose, segments: &[Segment]) -> Result<Self> {
        let mut placed = Vec::with_capacity(segments.len());
        let mut s0 = 0.0;
        let mut pos = start.position();
        let mut psi = start.psi;
        for seg in segments {
            let len = seg.length();
            if !(len > 0.0 && len.is_finite()) {
                return Err(Error::Config(format!(
                    "segment length {len} must be positive"
                )));
            }
            if let Segment::Slalom { wavelength, .. } = seg {
                if !(*wavelength > 0.0) {
                    return Err(Error::Config("slalom wavelength must be positive".into()));
                }
            }
            let p = Placed::new(s0, pos, psi, *seg);
            pos = p.start + p.offset(len);
            psi += seg.heading(len);
            s0 += len;
            placed.push(p);
        }
        Ok(Self {
            placed,
            length: s0,
            end: PathPoint {
                position: pos,
                heading: psi,
                curvature: 0.0,
            },
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn start(&self) -> PathPoint {
        self.at(0.0)
    }

    pub fn at(&self, s: f64) -> PathPoint {
        if self.placed.is_empty() || s >= self.length {
            let extra = (s - self.length).max(0.0);
            let (sn, c) = self.end.heading.sin_cos();
            return PathPoint {
                position: self.end.position + Vec2::new(c, sn) * extra,
                heading: self.end.heading,
                curvature: 0.0,
            };
        }
        let s = s.max(0.0);
        let k = self.placed.partition_point(|p| p.s0 <= s).saturating_sub(1);
        let p = &self.placed[k];
        let u = s - p.s0;
        PathPoint {
            position: p.start + p.offset(u),
            heading: p.psi0 + p.seg.heading(u),
            curvature: p.seg.curvature(u),
        }
    }
}

/// Speed at `t` blends between knots with a raised cosine, so acceleration
/// is continuous inside each interval and zero at the knots.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedProfile {
    /// `(t, v)` knots, strictly increasing in time.
    knots: Vec<(f64, f64)>,
    /// Arclength at each knot.
    s_at: Vec<f64>,
}

impl SpeedProfile {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Config("speed profile needs a knot".into()));
        }
        if knots.iter().any(|(_, v)| !(*v >= 0.0)) {
            return Err(Error::Config("speeds must be non-negative".into()));
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Config(
                "speed knots must be increasing in time".into(),
            ));
        }
        let mut s_at = vec![0.0];
        for w in knots.windows(2) {
            let (t0, v0) = w[0];
            let (t1, v1) = w[1];
            s_at.push(s_at.last().unwrap() + 0.5 * (v0 + v1) * (t1 - t0));
        }
        Ok(Self { knots, s_at })
    }

    pub fn constant(v: f64) -> Result<Self> {
        Self::new(vec![(0.0, v)])
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// `(s, v, a)` at time `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let (t_first, v_first) = self.knots[0];
        if t <= t_first {
            return (v_first * (t - t_first), v_first, 0.0);
        }
        let k = self.knots.partition_point(|(tk, _)| *tk <= t) - 1;
        if k + 1 == self.knots.len() {
            let (tk, vk) = self.knots[k];
            return (self.s_at[k] + vk * (t - tk), vk, 0.0);
        }
        let (t0, v0) = self.knots[k];
        let (t1, v1) = self.knots[k + 1];
        let dur = t1 - t0;
        let tau = t - t0;
        let dv = v1 - v0;
        let ph = PI * tau / dur;
        let v = v0 + 0.5 * dv * (1.0 - ph.cos());
        let a = 0.5 * dv * PI / dur * ph.sin();
        let s = self.s_at[k] + v0 * tau + 0.5 * dv * (tau - dur / PI * ph.sin());
        (s, v, a)
    }
}

/// Kinematic truth at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicState {
    pub t: f64,
    pub s: f64,
    pub pose: LtpPose,
    pub v: f64,
    /// Longitudinal acceleration.
    pub a: f64,
    pub yaw_rate: f64,
    pub curvature: f64,
}

impl KinematicState {
    /// Centripetal acceleration `v · ψ̇`.
    pub fn lateral_acceleration(&self) -> f64 {
        self.v * self.yaw_rate
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub path: Path,
    pub speed: SpeedProfile,
}

impl Trajectory {
    pub fn new(path: Path, speed: SpeedProfile) -> Self {
        Self { path, speed }
    }

    pub fn state(&self, t: f64) -> KinematicState {
        let (s, v, a) = self.speed.eval(t);
        let p = self.path.at(s);
        KinematicState {
            t,
            s,
            pose: LtpPose::new(p.position.x, p.position.y, normalize_angle(p.heading)),
            v,
            a,
            yaw_rate: p.curvature * v,
            curvature: p.curvature,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arc_closes_circle() {
        let r = 10.0;
        let path = Path::new(
            LtpPose::default(),
            &[Segment::Arc {
                length: TAU * r,
                curvature: 1.0 / r,
            }],
        )
        .unwrap();
        let q = path.at(0.25 * TAU * r);
        assert!((q.position - Vec2::new(r, r)).norm() < 1e-12);
        assert!(path.at(TAU * r - 1e-9).position.norm() < 1e-8);
    }

    #[test]
    fn slalom_returns_to_baseline() {
        let path = Path::new(
            LtpPose::default(),
            &[Segment::Slalom {
                length: 72.0,
                amplitude: 0.25,
                wavelength: 36.0,
            }],
        )
        .unwrap();
        let end = path.at(72.0 - 1e-12);
        assert!(end.position.y.abs() < 1e-9, "{}", end.position.y);
        // heading derivative matches curvature
        let h = 1e-5;
        let k = (path.at(10.0 + h).heading - path.at(10.0 - h).heading) / (2.0 * h);
        assert!((k - path.at(10.0).curvature).abs() < 1e-8);
        // position derivative matches heading
        let d = (path.at(10.0 + h).position - path.at(10.0 - h).position) / (2.0 * h);
        let psi = path.at(10.0).heading;
        assert!((d - Vec2::new(psi.cos(), psi.sin())).norm() < 1e-8);
    }

    #[test]
    fn speed_profile_integrates() {
        let sp = SpeedProfile::new(vec![(0.0, 0.0), (4.0, 2.0), (10.0, 2.0)]).unwrap();
        let (s, v, a) = sp.eval(4.0);
        assert!((s - 4.0).abs() < 1e-12 && (v - 2.0).abs() < 1e-12 && a.abs() < 1e-12);
        let (s, v, _) = sp.eval(12.0);
        assert!((s - 20.0).abs() < 1e-12 && v == 2.0);
        let h = 1e-6;
        let (s1, v1, _) = sp.eval(1.3 + h);
        let (s0, v0, _) = sp.eval(1.3 - h);
        let (_, v, a) = sp.eval(1.3);
        assert!(((s1 - s0) / (2.0 * h) - v).abs() < 1e-8);
        assert!(((v1 - v0) / (2.0 * h) - a).abs() < 1e-7);
    }
}
