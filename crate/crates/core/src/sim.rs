//! Sensor and tracing configuration shared by policies, datasets and episodes.

use serde::{Deserialize, Serialize};

use crate::geometry::DomeGraph;
use crate::occmap::MapParams;
use crate::scene::CameraIntrinsics;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UtilitySettings {
    pub width: usize,
    pub height: usize,
    /// Number of dome moves the enlarged field of view covers on each side.
    pub lookahead_steps: u32,
    /// Voxels closer than this to the camera are ignored while tracing.
    /// All dome cameras sit inside a 0.4 m ball whose voxels are carved by
    /// every frame.
    pub min_range_m: f64,
}

impl Default for UtilitySettings {
    fn default() -> Self {
        Self { width: 64, height: 64, lookahead_steps: 2, min_range_m: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub sensor: CameraIntrinsics,
    pub max_range_m: f64,
    pub map: MapParams,
    pub utility: UtilitySettings,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            sensor: CameraIntrinsics::default(),
            max_range_m: 10.0,
            map: MapParams::default(),
            utility: UtilitySettings::default(),
        }
    }
}

/// Largest angular displacement of the optical axis in one dome move.
pub fn max_step_angle_deg(dome: &DomeGraph) -> f64 {
    let ratio = (dome.neighbor_radius_m / (2.0 * dome.dome_radius_m)).min(1.0);
    (2.0 * ratio.asin()).to_degrees()
}

impl SimConfig {
    /// Intrinsics of the utility map: the sensor field of view widened by
    /// `lookahead_steps` moves on each side, capped below 180 degrees.
    pub fn utility_intrinsics(&self, dome: &DomeGraph) -> CameraIntrinsics {
        let grow = 2.0 * self.utility.lookahead_steps as f64 * max_step_angle_deg(dome);
        CameraIntrinsics {
            width: self.utility.width,
            height: self.utility.height,
            hfov_deg: (self.sensor.hfov_deg + grow).min(170.0),
            vfov_deg: (self.sensor.vfov_deg + grow).min(169.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomeConfig;

    #[test]
    fn default_utility_fov() {
        let dome = DomeConfig::default().build();
        let delta = max_step_angle_deg(&dome);
        assert!((delta - 14.3615).abs() < 1e-3, "{delta}");
        let u = SimConfig::default().utility_intrinsics(&dome);
        assert!((u.hfov_deg - 117.446).abs() < 1e-2, "{}", u.hfov_deg);
        assert!((u.vfov_deg - 102.446).abs() < 1e-2, "{}", u.vfov_deg);
        u.validate().unwrap();
    }
}
