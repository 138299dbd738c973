//! Synthetic marker layouts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Path;
use crate::lbpm::{Marker, MarkerLibrary};
use crate::types::Vec2;

/// Markers on both sides of a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorridorSpec {
    /// Along-path spacing, metres.
    pub spacing: f64,
    /// Lateral offset of each row from the path, metres.
    pub offset: f64,
    /// Uniform jitter of each marker in both axes, metres.
    pub jitter: f64,
    /// Markers closer than this to any point of the path are dropped.
    pub clearance: f64,
    /// Markers closer than this to an already placed one are dropped.
    pub min_separation: f64,
}

impl Default for CorridorSpec {
    fn default() -> Self {
        Self {
            spacing: 3.0,
            offset: 4.0,
            jitter: 0.5,
            clearance: 2.0,
            min_separation: 1.5,
        }
    }
}

fn id(i: usize) -> String {
    format!("M{i:04}")
}

/// Marker rows to the left and right of the path, with jitter.
pub fn corridor(path: &Path, spec: &CorridorSpec, seed: u64) -> MarkerLibrary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let len = path.length();
    let n = (len / spec.spacing).floor() as usize + 1;
    let samples: Vec<Vec2> = {
        let step = 0.5;
        let m = (len / step).ceil() as usize + 1;
        (0..m).map(|k| path.at(k as f64 * step).position).collect()
    };
    let mut placed: Vec<Vec2> = Vec::new();
    for k in 0..n {
        let p = path.at(k as f64 * spec.spacing);
        let normal = Vec2::new(-p.heading.sin(), p.heading.cos());
        for side in [1.0, -1.0] {
            let j = Vec2::new(
                rng.random_range(-1.0..=1.0) * spec.jitter,
                rng.random_range(-1.0..=1.0) * spec.jitter,
            );
            let m = p.position + normal * (side * spec.offset) + j;
            let clear = samples.iter().all(|q| (q - m).norm() >= spec.clearance);
            let separated = placed.iter().all(|q| (q - m).norm() >= spec.min_separation);
            if clear && separated {
                placed.push(m);
            }
        }
    }
    library(placed)
}

/// Regular grid covering `[x0, x1] × [y0, y1]`.
pub fn grid(x: [f64; 2], y: [f64; 2], spacing: f64) -> MarkerLibrary {
    let nx = ((x[1] - x[0]) / spacing).floor() as usize + 1;
    let ny = ((y[1] - y[0]) / spacing).floor() as usize + 1;
    let mut pts = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        for j in 0..ny {
            pts.push(Vec2::new(
                x[0] + i as f64 * spacing,
                y[0] + j as f64 * spacing,
            ));
        }
    }
    library(pts)
}

fn library(pts: Vec<Vec2>) -> MarkerLibrary {
    let mut lib = MarkerLibrary::new(
        pts.into_iter()
            .enumerate()
            .map(|(i, p)| Marker::new(id(i), p.x, p.y))
            .collect(),
    )
    .expect("generated ids are unique");
    lib.accuracy = Some("synthetic, exact".into());
    lib
}
