//! Dense log-odds occupancy grid, depth integration and utility maps.
//!
//! A voxel is Occupied when its occupancy probability reaches `p_occ`, Free
//! when it drops to `p_free`, and Unknown otherwise. Untouched voxels have
//! log-odds 0.

mod snapshot;
pub mod traversal;
mod utility;

use serde::{Deserialize, Serialize};

use crate::geometry::{CameraPose, Vec3};
use crate::scene::{CameraIntrinsics, DepthImage};
use traversal::GridRay;

pub use snapshot::SnapshotError;
pub use utility::{partition_utility, Partition, PartitionScheme, UtilityMap};

/// Ray parameter slack (meters) around a measured endpoint. Voxels the ray
/// leaves within this distance of the endpoint are left untouched, and the
/// hit lands in the voxel containing `range + ENDPOINT_EPS`.
pub const ENDPOINT_EPS: f64 = 1e-7;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MapError {
    #[error("depth image is {got:?} but intrinsics expect {expected:?}")]
    DimensionMismatch { got: (usize, usize), expected: (usize, usize) },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapParams {
    pub resolution_m: f64,
    pub p_hit: f64,
    pub p_miss: f64,
    pub clamp_min: f64,
    pub clamp_max: f64,
    pub p_occ: f64,
    pub p_free: f64,
}

impl Default for MapParams {
    fn default() -> Self {
        Self {
            resolution_m: 0.05,
            p_hit: 0.7,
            p_miss: 0.4,
            clamp_min: -2.0,
            clamp_max: 3.5,
            p_occ: 0.65,
            p_free: 0.35,
        }
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn sigmoid(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

impl MapParams {
    pub fn hit_update(&self) -> f64 {
        logit(self.p_hit)
    }

    pub fn miss_update(&self) -> f64 {
        logit(self.p_miss)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VoxelState {
    Unknown,
    Free,
    Occupied,
}

/// Dense voxel grid of clamped log-odds, x-fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyMap {
    params: MapParams,
    origin: [f64; 3],
    dims: [usize; 3],
    log_odds: Vec<f64>,
    l_hit: f64,
    l_miss: f64,
    l_occ: f64,
    l_free: f64,
}

impl OccupancyMap {
    pub fn new(params: MapParams, origin: [f64; 3], dims: [usize; 3]) -> Self {
        let n = dims[0] * dims[1] * dims[2];
        Self {
            l_hit: params.hit_update(),
            l_miss: params.miss_update(),
            l_occ: logit(params.p_occ),
            l_free: logit(params.p_free),
            params,
            origin,
            dims,
            log_odds: vec![0.0; n],
        }
    }

    pub fn params(&self) -> &MapParams {
        &self.params
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn resolution(&self) -> f64 {
        self.params.resolution_m
    }

    pub fn len(&self) -> usize {
        self.log_odds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_odds.is_empty()
    }

    pub fn index(&self, cell: [usize; 3]) -> usize {
        cell[0] + self.dims[0] * (cell[1] + self.dims[1] * cell[2])
    }

    pub fn cell_of(&self, index: usize) -> [usize; 3] {
        let x = index % self.dims[0];
        let y = (index / self.dims[0]) % self.dims[1];
        [x, y, index / (self.dims[0] * self.dims[1])]
    }

    /// Voxel containing a world point, if inside the grid.
    pub fn locate(&self, p: &Vec3) -> Option<usize> {
        let g = self.to_grid(p);
        let mut cell = [0usize; 3];
        for i in 0..3 {
            let c = g[i].floor();
            if c < 0.0 || c >= self.dims[i] as f64 {
                return None;
            }
            cell[i] = c as usize;
        }
        Some(self.index(cell))
    }

    pub fn to_grid(&self, p: &Vec3) -> [f64; 3] {
        let r = self.params.resolution_m;
        [(p.x - self.origin[0]) / r, (p.y - self.origin[1]) / r, (p.z - self.origin[2]) / r]
    }

    pub fn log_odds(&self, index: usize) -> f64 {
        self.log_odds[index]
    }

    pub fn log_odds_slice(&self) -> &[f64] {
        &self.log_odds
    }

    pub fn set_log_odds(&mut self, index: usize, value: f64) {
        self.log_odds[index] = value.clamp(self.params.clamp_min, self.params.clamp_max);
    }

    pub fn probability(&self, index: usize) -> f64 {
        sigmoid(self.log_odds[index])
    }

    #[inline]
    pub fn state(&self, index: usize) -> VoxelState {
        self.classify(self.log_odds[index])
    }

    #[inline]
    fn classify(&self, l: f64) -> VoxelState {
        if l >= self.l_occ {
            VoxelState::Occupied
        } else if l <= self.l_free {
            VoxelState::Free
        } else {
            VoxelState::Unknown
        }
    }

    #[inline]
    fn update(&mut self, index: usize, delta: f64) {
        let v = &mut self.log_odds[index];
        *v = (*v + delta).clamp(self.params.clamp_min, self.params.clamp_max);
    }

    pub fn apply_hit(&mut self, index: usize) {
        self.update(index, self.l_hit);
    }

    pub fn apply_miss(&mut self, index: usize) {
        self.update(index, self.l_miss);
    }

    /// Ray from a world origin along a unit world direction.
    pub fn ray(&self, origin: &Vec3, dir: &Vec3) -> Option<GridRay> {
        GridRay::new(self.to_grid(origin), [dir.x, dir.y, dir.z], self.params.resolution_m, self.dims)
    }

    /// Integrates one measurement. `range` is the Euclidean distance to the
    /// return, or `None` for no return within `max_range_m`.
    pub fn integrate_ray(&mut self, origin: &Vec3, dir: &Vec3, range: Option<f64>, max_range_m: f64) {
        let Some(ray) = self.ray(origin, dir) else { return };
        match range {
            Some(r) => {
                for v in ray {
                    if v.t_exit <= r - ENDPOINT_EPS {
                        self.apply_miss(v.index);
                    } else if v.t_exit > r + ENDPOINT_EPS {
                        self.apply_hit(v.index);
                        break;
                    }
                }
            }
            None => {
                for v in ray {
                    if v.t_enter >= max_range_m {
                        break;
                    }
                    self.apply_miss(v.index);
                }
            }
        }
    }

    /// Integrates a z-depth frame taken from `pose`.
    pub fn integrate_depth(
        &mut self,
        depth: &DepthImage,
        pose: &CameraPose,
        intrinsics: &CameraIntrinsics,
        max_range_m: f64,
    ) -> Result<(), MapError> {
        if depth.width != intrinsics.width || depth.height != intrinsics.height {
            return Err(MapError::DimensionMismatch {
                got: (depth.width, depth.height),
                expected: (intrinsics.width, intrinsics.height),
            });
        }
        for v in 0..intrinsics.height {
            for u in 0..intrinsics.width {
                let cam = intrinsics.pixel_ray(u, v);
                let norm = cam.norm();
                let dir = pose.to_world(&(cam / norm));
                let z = depth.at(u, v);
                let range = (z > 0.0).then(|| z * norm);
                self.integrate_ray(&pose.position, &dir, range, max_range_m);
            }
        }
        Ok(())
    }

    /// Number of Occupied voxels.
    pub fn count_surface(&self) -> usize {
        let occ = self.l_occ;
        self.log_odds.iter().filter(|&&l| l >= occ).count()
    }

    pub fn count_state(&self, state: VoxelState) -> usize {
        self.log_odds.iter().filter(|&&l| self.classify(l) == state).count()
    }

    /// Whether a ray meets only Unknown voxels between `min_range_m` and
    /// `max_range_m` (or the edge of the grid).
    pub fn ray_unexplored(&self, origin: &Vec3, dir: &Vec3, min_range_m: f64, max_range_m: f64) -> bool {
        let Some(ray) = self.ray(origin, dir) else { return true };
        for v in ray {
            if v.t_enter >= max_range_m {
                break;
            }
            if v.t_exit <= min_range_m {
                continue;
            }
            if self.state(v.index) != VoxelState::Unknown {
                return false;
            }
        }
        true
    }

    /// Ray-traced binary utility map over `intrinsics`' field of view.
    pub fn trace_utility_map(
        &self,
        pose: &CameraPose,
        intrinsics: &CameraIntrinsics,
        min_range_m: f64,
        max_range_m: f64,
    ) -> UtilityMap {
        let mut bits = Vec::with_capacity(intrinsics.width * intrinsics.height);
        for v in 0..intrinsics.height {
            for u in 0..intrinsics.width {
                let dir = pose.to_world(&intrinsics.pixel_ray(u, v).normalize());
                bits.push(self.ray_unexplored(&pose.position, &dir, min_range_m, max_range_m) as u8);
            }
        }
        UtilityMap {
            width: intrinsics.width,
            height: intrinsics.height,
            bits,
            fov_deg: (intrinsics.hfov_deg, intrinsics.vfov_deg),
        }
    }

    /// Marks every Unknown voxel met by a ray (stopping at the first
    /// Occupied one) in `seen`, returning how many were newly marked.
    pub fn mark_unknown_along(
        &self,
        origin: &Vec3,
        dir: &Vec3,
        max_range_m: f64,
        seen: &mut [u32],
        stamp: u32,
    ) -> usize {
        let Some(ray) = self.ray(origin, dir) else { return 0 };
        let mut added = 0;
        for v in ray {
            if v.t_enter >= max_range_m {
                break;
            }
            match self.state(v.index) {
                VoxelState::Occupied => break,
                VoxelState::Free => {}
                VoxelState::Unknown => {
                    if seen[v.index] != stamp {
                        seen[v.index] = stamp;
                        added += 1;
                    }
                }
            }
        }
        added
    }
}
