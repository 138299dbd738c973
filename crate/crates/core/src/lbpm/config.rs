use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the travelled chord is recovered from two looks at one marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeForm {
    /// Branch-wise internal cone angles; the yaw terms cancel, so the result
    /// is exact only for straight motion.
    Printed,
    /// Angle between the two line-of-sight vectors after rotating the second
    /// into the first body frame. Exact for constant speed and yaw rate.
    #[default]
    Geometric,
}

/// Tuning of the LiDAR marker positioning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbpmConfig {
    /// Minimum calibrated reflectivity of a marker return (0–255).
    pub reflectivity_threshold: f64,
    /// Maximum gap between consecutive points of one cluster, seconds.
    pub cluster_time_threshold: f64,
    /// Maximum range at which a marker is still resolved, metres.
    pub max_marker_range: f64,
    /// Maximum sensor rotation rate, RPM.
    pub max_rotation_rpm: f64,
    /// Operating rotation rate, RPM. Sets the sweep period.
    pub rotation_rpm: f64,
    /// Identification residual at or above which a match is not confident.
    pub match_radius: f64,
    /// Same-marker pairs are used for velocity when their spacing lies in
    /// `[lo, hi]` sweep periods.
    pub velocity_pair_window: [f64; 2],
    /// Velocity estimates from the last `velocity_average_sweeps` periods are
    /// averaged.
    pub velocity_average_sweeps: f64,
    /// Pose partners are searched among observations of the last
    /// `pose_pair_sweeps` periods.
    pub pose_pair_sweeps: f64,
    /// Markers closer than this baseline are not paired for pose, metres.
    pub min_pose_baseline: f64,
    pub cone_form: ConeForm,
}

impl Default for LbpmConfig {
    fn default() -> Self {
        Self {
            reflectivity_threshold: 200.0,
            cluster_time_threshold: 0.5e-3,
            max_marker_range: 16.0,
            max_rotation_rpm: 1200.0,
            rotation_rpm: 600.0,
            match_radius: 0.5,
            velocity_pair_window: [0.5, 1.5],
            velocity_average_sweeps: 1.0,
            pose_pair_sweeps: 1.0,
            min_pose_baseline: 1.0,
            cone_form: ConeForm::Geometric,
        }
    }
}

impl LbpmConfig {
    /// Smallest marker spacing that still separates into distinct clusters at
    /// maximum range and rotation rate: `d_max · sin(ω_max[RPM] · 6 · Γ_τ)`,
    /// where `ω · 6` converts RPM to degrees per second.
    pub fn d_c_max(&self) -> f64 {
        let deg = self.max_rotation_rpm * 6.0 * self.cluster_time_threshold;
        self.max_marker_range * deg.to_radians().sin()
    }

    /// Sweep period at the operating rotation rate, seconds.
    pub fn sweep_period(&self) -> f64 {
        60.0 / self.rotation_rpm
    }

    /// Operating rotation rate, rad/s.
    pub fn angular_rate(&self) -> f64 {
        self.rotation_rpm * std::f64::consts::TAU / 60.0
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.reflectivity_threshold,
            self.cluster_time_threshold,
            self.max_marker_range,
            self.max_rotation_rpm,
            self.rotation_rpm,
            self.match_radius,
            self.velocity_average_sweeps,
            self.pose_pair_sweeps,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("LbPM parameters must be positive".into()));
        }
        let [lo, hi] = self.velocity_pair_window;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::Config(format!(
                "velocity_pair_window [{lo}, {hi}] must be increasing and positive"
            )));
        }
        if !(self.min_pose_baseline >= 0.0) {
            return Err(Error::Config("min_pose_baseline must be >= 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn d_c_max_is_about_one_metre() {
        let d = LbpmConfig::default().d_c_max();
        assert!((d - 1.0).abs() < 0.01, "{d}");
        // 16 m at 3.6 degrees
        assert!((d - 16.0 * 3.6f64.to_radians().sin()).abs() < 1e-12);
    }

    #[test]
    fn sweep_period_at_600_rpm() {
        assert!((LbpmConfig::default().sweep_period() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_window() {
        let cfg = LbpmConfig {
            velocity_pair_window: [1.5, 0.5],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
