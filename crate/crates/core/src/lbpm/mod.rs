//! LiDAR marker positioning.
//!
//! Raw returns are filtered by reflectivity and grouped by timestamp into
//! marker observations. Each observation is associated with a surveyed
//! marker from a rough pose. Two looks at the same marker one sweep apart
//! give the travelled distance; two different markers give the full pose.
//!
//! LiDAR azimuth is measured clockwise from the body x axis in `[0, 2π)`,
//! so an observation at range `d` and azimuth `θ` sits at
//! `d · (cos θ, −sin θ)` in the body frame. Cluster values are mid-ranges,
//! `(max + min) / 2`, of the member points.

mod cluster;
mod config;
mod estimator;
mod geometry;
mod identify;
mod library;

pub use cluster::{
    azimuth_to_lcp, cluster_points, extract_observations, filter_points, lcp_to_azimuth, Clusterer,
    LidarPoint, MarkerObservation,
};
pub use config::{ConeForm, LbpmConfig};
pub use estimator::{
    average_outputs, lbpm_step, AveragedOutput, LbpmEstimator, LbpmOutput, LbpmStats, LbpmUpdate,
    Prior, VelocitySource,
};
pub use geometry::{
    arc_displacement, arc_over_chord, chord_geometric, cone_angles, pose_from_marker_pair,
    velocity_from_cone, velocity_from_observations, ARC_EPS,
};
pub use identify::{
    apparent_position, identify_batch, identify_marker, BatchIdentification, BatchSearch,
    Identification, MATCH_TOLERANCE,
};
pub use library::{Marker, MarkerLibrary, SpacingWarning};
