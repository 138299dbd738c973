//! Reflectivity filtering and timestamp clustering of raw LiDAR returns.

use serde::{Deserialize, Serialize};

use super::LbpmConfig;
use crate::types::{normalize_angle, wrap_two_pi, Vec2};

/// One raw return. Azimuth runs clockwise from the body x axis in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarPoint {
    pub t: f64,
    pub distance: f64,
    pub azimuth: f64,
    pub reflectivity: u8,
}

/// A clustered marker return.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerObservation {
    /// Mid-range of the point timestamps.
    pub t: f64,
    pub distance: f64,
    /// Clockwise from the body x axis, `[0, 2π)`.
    pub azimuth: f64,
    pub n_points: usize,
    /// Library index once identified.
    pub marker: Option<usize>,
}

impl MarkerObservation {
    pub fn new(t: f64, distance: f64, azimuth: f64) -> Self {
        Self {
            t,
            distance,
            azimuth: wrap_two_pi(azimuth),
            n_points: 1,
            marker: None,
        }
    }

    /// Marker position in the body frame.
    pub fn p_m(&self) -> Vec2 {
        azimuth_to_lcp(self.distance, self.azimuth)
    }

    pub fn with_marker(mut self, marker: usize) -> Self {
        self.marker = Some(marker);
        self
    }
}

/// Body-frame point at range `d` and clockwise azimuth `theta`.
pub fn azimuth_to_lcp(d: f64, theta: f64) -> Vec2 {
    let (s, c) = theta.sin_cos();
    Vec2::new(d * c, -d * s)
}

/// Range and clockwise azimuth of a body-frame point.
pub fn lcp_to_azimuth(p: Vec2) -> (f64, f64) {
    (p.norm(), wrap_two_pi(-p.y.atan2(p.x)))
}

/// Keeps returns at or above the reflectivity threshold, preserving order.
pub fn filter_points<'a>(
    points: impl IntoIterator<Item = &'a LidarPoint> + 'a,
    cfg: &'a LbpmConfig,
) -> impl Iterator<Item = LidarPoint> + 'a {
    points
        .into_iter()
        .filter(move |p| f64::from(p.reflectivity) >= cfg.reflectivity_threshold)
        .copied()
}

#[derive(Debug, Clone, Copy)]
struct Extent {
    min: f64,
    max: f64,
}

impl Extent {
    fn new(v: f64) -> Self {
        Self { min: v, max: v }
    }

    fn add(&mut self, v: f64) {
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    fn mid(&self) -> f64 {
        0.5 * (self.max + self.min)
    }
}

#[derive(Debug, Clone, Copy)]
struct OpenCluster {
    last_t: f64,
    first_azimuth: f64,
    t: Extent,
    d: Extent,
    az: Extent,
    n: usize,
}

impl OpenCluster {
    fn start(p: &LidarPoint) -> Self {
        Self {
            last_t: p.t,
            first_azimuth: p.azimuth,
            t: Extent::new(p.t),
            d: Extent::new(p.distance),
            az: Extent::new(p.azimuth),
            n: 1,
        }
    }

    fn add(&mut self, p: &LidarPoint) {
        self.last_t = p.t;
        self.t.add(p.t);
        self.d.add(p.distance);
        // unwrap around the first point so a cluster may straddle 0/2π
        self.az
            .add(self.first_azimuth + normalize_angle(p.azimuth - self.first_azimuth));
        self.n += 1;
    }

    fn finish(&self) -> MarkerObservation {
        MarkerObservation {
            t: self.t.mid(),
            distance: self.d.mid(),
            azimuth: wrap_two_pi(self.az.mid()),
            n_points: self.n,
            marker: None,
        }
    }
}

/// Streaming clusterer. Feed time-ordered, already filtered points; a
/// cluster is emitted once a point arrives more than the threshold after the
/// cluster's most recent point.
#[derive(Debug, Clone)]
pub struct Clusterer {
    threshold: f64,
    open: Option<OpenCluster>,
}

impl Clusterer {
    pub fn new(cfg: &LbpmConfig) -> Self {
        Self {
            threshold: cfg.cluster_time_threshold,
            open: None,
        }
    }

    pub fn push(&mut self, p: &LidarPoint) -> Option<MarkerObservation> {
        match &mut self.open {
            Some(c) if p.t - c.last_t <= self.threshold => {
                c.add(p);
                None
            }
            slot => {
                let done = slot.map(|c| c.finish());
                *slot = Some(OpenCluster::start(p));
                done
            }
        }
    }

    /// Closes the open cluster, if any.
    pub fn flush(&mut self) -> Option<MarkerObservation> {
        self.open.take().map(|c| c.finish())
    }
}

/// Batch clustering of time-ordered points.
pub fn cluster_points(points: &[LidarPoint], cfg: &LbpmConfig) -> Vec<MarkerObservation> {
    let mut c = Clusterer::new(cfg);
    let mut out: Vec<MarkerObservation> = points.iter().filter_map(|p| c.push(p)).collect();
    out.extend(c.flush());
    out
}

/// Filter then cluster.
pub fn extract_observations(points: &[LidarPoint], cfg: &LbpmConfig) -> Vec<MarkerObservation> {
    let kept: Vec<LidarPoint> = filter_points(points, cfg).collect();
    cluster_points(&kept, cfg)
}
