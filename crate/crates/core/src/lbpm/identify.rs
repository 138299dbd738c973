//! Association of clustered returns with library markers.

use serde::{Deserialize, Serialize};

use super::{MarkerLibrary, MarkerObservation};
use crate::error::{Error, Result};
use crate::types::{lcp_to_ltp, LtpPose, Vec2};

/// Residuals within this distance of the match radius count as reaching it.
pub const MATCH_TOLERANCE: f64 = 1e-9;

/// Result of associating one observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    /// Library index of the nearest marker.
    pub marker: usize,
    /// Distance between the apparent and the library position, metres.
    pub residual: f64,
    /// False when the residual reaches the match radius.
    pub confident: bool,
}

/// Apparent world position of an observation seen from `rough`.
pub fn apparent_position(obs: &MarkerObservation, rough: &LtpPose) -> Vec2 {
    lcp_to_ltp(obs.p_m(), rough)
}

/// Nearest library marker to the apparent position.
pub fn identify_marker(
    obs: &MarkerObservation,
    rough: &LtpPose,
    lib: &MarkerLibrary,
    match_radius: f64,
) -> Result<Identification> {
    let p_s = apparent_position(obs, rough);
    let (marker, residual) = lib.nearest(p_s).ok_or(Error::EmptyLibrary)?;
    Ok(Identification {
        marker,
        residual,
        confident: residual < match_radius - MATCH_TOLERANCE,
    })
}

/// Search bounds of [`identify_batch`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchSearch {
    /// Maximum heading error of the rough pose, rad.
    pub max_heading_error: f64,
    /// Maximum position error of the rough pose, metres.
    pub max_position_error: f64,
    /// Heading grid step, rad.
    pub heading_step: f64,
}

impl Default for BatchSearch {
    fn default() -> Self {
        Self {
            max_heading_error: 0.78,
            max_position_error: 0.5,
            heading_step: 0.002,
        }
    }
}

/// Joint association of observations taken (nearly) from one pose.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchIdentification {
    pub ids: Vec<Identification>,
    /// Rough pose after the heading search and translation refinement.
    pub refined: LtpPose,
}

fn score_hypothesis(
    obs: &[MarkerObservation],
    rough: &LtpPose,
    psi: f64,
    lib: &MarkerLibrary,
    search: &BatchSearch,
) -> Option<(f64, LtpPose)> {
    let mut pose = LtpPose::new(rough.x, rough.y, psi);
    // two passes: associate, shift by the mean residual, associate again
    for _ in 0..2 {
        let mut shift = Vec2::zeros();
        for o in obs {
            let p = apparent_position(o, &pose);
            let (i, _) = lib.nearest(p)?;
            shift += lib.position(i) - p;
        }
        shift /= obs.len() as f64;
        pose = LtpPose::new(pose.x + shift.x, pose.y + shift.y, psi);
    }
    if (pose.position() - rough.position()).norm() > search.max_position_error * 1.5 {
        return None;
    }
    let cost = obs
        .iter()
        .map(|o| {
            lib.nearest(apparent_position(o, &pose))
                .map_or(f64::INFINITY, |(_, d)| d * d)
        })
        .sum::<f64>();
    Some((cost, pose))
}

/// Identifies a batch of observations by searching the heading over the rough
/// pose's error bound and refining the translation. The observations are
/// assumed to be taken from one pose (one sweep at low speed). Needs at least
/// two observations at different bearings to disambiguate.
pub fn identify_batch(
    obs: &[MarkerObservation],
    rough: &LtpPose,
    lib: &MarkerLibrary,
    match_radius: f64,
    search: &BatchSearch,
) -> Result<BatchIdentification> {
    if lib.is_empty() {
        return Err(Error::EmptyLibrary);
    }
    if obs.is_empty() {
        return Ok(BatchIdentification {
            ids: Vec::new(),
            refined: *rough,
        });
    }
    let n = (search.max_heading_error / search.heading_step).ceil() as i64;
    let mut best: Option<(f64, LtpPose)> = None;
    for k in -n..=n {
        let psi = rough.psi + k as f64 * search.heading_step;
        if let Some((cost, pose)) = score_hypothesis(obs, rough, psi, lib, search) {
            if best.is_none_or(|(c, _)| cost < c) {
                best = Some((cost, pose));
            }
        }
    }
    let refined = best.map_or(*rough, |(_, p)| p);
    let ids = obs
        .iter()
        .map(|o| identify_marker(o, &refined, lib, match_radius))
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchIdentification { ids, refined })
}
