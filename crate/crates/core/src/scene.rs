//! Procedural box rooms and the pinhole depth renderer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{CameraPose, DomeGraph, Vec3};
use crate::occmap::{MapParams, OccupancyMap};

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("invalid room parameters: {0}")]
    InvalidParams(String),
    #[error("could not place obstacle {index} after {attempts} attempts")]
    PlacementFailed { index: usize, attempts: usize },
    #[error("camera position {0:?} is outside the room")]
    PoseOutsideRoom([f64; 3]),
    #[error("scene validation failed: {0}")]
    Invalid(String),
    #[error("scene document: {0}")]
    Document(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    pub fn contains_point(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        (0..3).all(|i| other.min[i] >= self.min[i] && other.max[i] <= self.max[i])
    }

    pub fn distance_to(&self, p: &Vec3) -> f64 {
        let mut d2 = 0.0;
        for i in 0..3 {
            let e = (self.min[i] - p[i]).max(0.0).max(p[i] - self.max[i]);
            d2 += e * e;
        }
        d2.sqrt()
    }

    pub fn diagonal(&self) -> f64 {
        (0..3).map(|i| (self.max[i] - self.min[i]).powi(2)).sum::<f64>().sqrt()
    }

    /// Entry distance of a ray into the box, if it hits at `t > 0`.
    fn ray_entry(&self, origin: &Vec3, inv_dir: &[f64; 3]) -> Option<f64> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for i in 0..3 {
            let a = (self.min[i] - origin[i]) * inv_dir[i];
            let b = (self.max[i] - origin[i]) * inv_dir[i];
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            // NaN from 0 * inf means the ray is parallel and inside the slab.
            if !lo.is_nan() {
                t0 = t0.max(lo);
            }
            if !hi.is_nan() {
                t1 = t1.min(hi);
            }
        }
        (t0 <= t1 && t0 > 0.0).then_some(t0)
    }

    /// Exit distance of a ray that starts inside the box.
    fn ray_exit(&self, origin: &Vec3, dir: &Vec3) -> f64 {
        let mut t = f64::INFINITY;
        for i in 0..3 {
            if dir[i] > 0.0 {
                t = t.min((self.max[i] - origin[i]) / dir[i]);
            } else if dir[i] < 0.0 {
                t = t.min((self.min[i] - origin[i]) / dir[i]);
            }
        }
        t
    }
}

/// Ranges the room generator samples from. All lengths are in meters and
/// every generated coordinate is snapped to `grid_m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoomParams {
    pub size_x_m: (f64, f64),
    pub size_y_m: (f64, f64),
    pub height_m: (f64, f64),
    pub obstacle_count: (usize, usize),
    pub obstacle_footprint_m: (f64, f64),
    pub obstacle_height_m: (f64, f64),
    /// Fraction of obstacles mounted on a wall above the floor (shelves).
    pub shelf_fraction: f64,
    pub grid_m: f64,
    pub dome_center_height_m: f64,
    pub dome_radius_m: f64,
    pub clearance_margin_m: f64,
    pub max_attempts: usize,
}

impl Default for RoomParams {
    fn default() -> Self {
        Self {
            size_x_m: (3.5, 5.5),
            size_y_m: (3.5, 5.5),
            height_m: (2.4, 3.0),
            obstacle_count: (2, 6),
            obstacle_footprint_m: (0.4, 1.6),
            obstacle_height_m: (0.4, 2.0),
            shelf_fraction: 0.25,
            grid_m: 0.05,
            dome_center_height_m: 1.5,
            dome_radius_m: 0.2,
            clearance_margin_m: 0.1,
            max_attempts: 1000,
        }
    }
}

impl RoomParams {
    pub fn dome_center(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, self.dome_center_height_m)
    }

    pub fn clearance_radius(&self) -> f64 {
        self.dome_radius_m + self.clearance_margin_m
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let ranges = [
            ("size_x_m", self.size_x_m),
            ("size_y_m", self.size_y_m),
            ("height_m", self.height_m),
            ("obstacle_footprint_m", self.obstacle_footprint_m),
            ("obstacle_height_m", self.obstacle_height_m),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo > 0.0 && lo <= hi) {
                return Err(SceneError::InvalidParams(format!("{name} must satisfy 0 < min <= max")));
            }
        }
        if self.obstacle_count.0 > self.obstacle_count.1 {
            return Err(SceneError::InvalidParams("obstacle_count min exceeds max".into()));
        }
        if self.grid_m <= 0.0 {
            return Err(SceneError::InvalidParams("grid_m must be positive".into()));
        }
        let c = self.clearance_radius();
        if self.height_m.0 < 2.2 || self.height_m.0 < self.dome_center_height_m + c {
            return Err(SceneError::InvalidParams("room too low for the dome".into()));
        }
        if self.size_x_m.0 < 4.0 * c || self.size_y_m.0 < 4.0 * c {
            return Err(SceneError::InvalidParams("room too narrow for the dome".into()));
        }
        Ok(())
    }
}

/// A room shell with box obstacles. The dome center sits at `(0, 0, h)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub room: Aabb,
    pub obstacles: Vec<Aabb>,
    pub seed: u64,
    pub params: RoomParams,
}

#[derive(Serialize, Deserialize)]
struct SceneDocument {
    version: u32,
    #[serde(flatten)]
    scene: Scene,
}

const SCENE_VERSION: u32 = 1;

fn snap(x: f64, grid: f64) -> f64 {
    (x / grid).round() * grid
}

fn sample(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Deterministically generates a room for `seed`.
pub fn generate_room(seed: u64, params: &RoomParams) -> Result<Scene, SceneError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = params.grid_m;
    let sx = snap(sample(&mut rng, params.size_x_m), g);
    let sy = snap(sample(&mut rng, params.size_y_m), g);
    let sz = snap(sample(&mut rng, params.height_m), g).max(snap(2.2, g));
    // Dome placed in the middle 40% of the floor plan.
    let x0 = -snap(sx * rng.random_range(0.3..=0.7), g);
    let y0 = -snap(sy * rng.random_range(0.3..=0.7), g);
    let room = Aabb::new([x0, y0, 0.0], [x0 + sx, y0 + sy, sz]);

    let count = rng.random_range(params.obstacle_count.0..=params.obstacle_count.1);
    let center = params.dome_center();
    let clearance = params.clearance_radius();
    let mut obstacles = Vec::with_capacity(count);
    for index in 0..count {
        let mut placed = None;
        for _ in 0..params.max_attempts {
            let w = snap(sample(&mut rng, params.obstacle_footprint_m), g).max(g);
            let d = snap(sample(&mut rng, params.obstacle_footprint_m), g).max(g);
            let h = snap(sample(&mut rng, params.obstacle_height_m), g).max(g);
            let shelf = rng.random_bool(params.shelf_fraction.clamp(0.0, 1.0));
            let bx = snap(rng.random_range(room.min[0]..=(room.max[0] - w).max(room.min[0])), g);
            let by = snap(rng.random_range(room.min[1]..=(room.max[1] - d).max(room.min[1])), g);
            let bz = if shelf {
                snap(rng.random_range(0.5..=(sz - h).max(0.5)), g)
            } else {
                0.0
            };
            let mut b = Aabb::new([bx, by, bz], [bx + w, by + d, bz + h]);
            for i in 0..3 {
                b.max[i] = b.max[i].min(room.max[i]);
            }
            if (0..3).any(|i| b.max[i] - b.min[i] < g * 0.5) {
                continue;
            }
            if room.contains_box(&b) && b.distance_to(&center) > clearance {
                placed = Some(b);
                break;
            }
        }
        match placed {
            Some(b) => obstacles.push(b),
            None => return Err(SceneError::PlacementFailed { index, attempts: params.max_attempts }),
        }
    }
    Ok(Scene { room, obstacles, seed, params: params.clone() })
}

impl Scene {
    pub fn id(&self) -> String {
        format!("room-{}", self.seed)
    }

    /// Checks obstacle containment and dome clearance.
    pub fn validate(&self) -> Result<(), SceneError> {
        let center = self.params.dome_center();
        let clearance = self.params.clearance_radius();
        if self.room.distance_to(&center) > 0.0
            || (0..3).any(|i| center[i] - clearance < self.room.min[i] || center[i] + clearance > self.room.max[i])
        {
            return Err(SceneError::Invalid("dome does not fit inside the room shell".into()));
        }
        for (i, b) in self.obstacles.iter().enumerate() {
            if !self.room.contains_box(b) {
                return Err(SceneError::Invalid(format!("obstacle {i} leaves the room shell")));
            }
            if b.distance_to(&center) <= clearance {
                return Err(SceneError::Invalid(format!("obstacle {i} intersects the dome clearance")));
            }
        }
        Ok(())
    }

    pub fn is_free(&self, p: &Vec3) -> bool {
        self.room.contains_point(p) && !self.obstacles.iter().any(|b| b.contains_point(p))
    }

    /// Distance to the first surface along a unit ray from inside the room.
    pub fn ray_distance(&self, origin: &Vec3, dir: &Vec3) -> f64 {
        let inv = [1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z];
        let mut t = self.room.ray_exit(origin, dir);
        for b in &self.obstacles {
            if let Some(te) = b.ray_entry(origin, &inv) {
                t = t.min(te);
            }
        }
        t
    }

    /// The room shell and obstacles reflected across the plane `x = plane_x`.
    pub fn mirrored_x(&self, plane_x: f64) -> Scene {
        let flip = |b: &Aabb| {
            Aabb::new(
                [2.0 * plane_x - b.max[0], b.min[1], b.min[2]],
                [2.0 * plane_x - b.min[0], b.max[1], b.max[2]],
            )
        };
        Scene {
            room: flip(&self.room),
            obstacles: self.obstacles.iter().map(flip).collect(),
            seed: self.seed,
            params: self.params.clone(),
        }
    }

    /// Occupancy map covering the room plus one voxel layer of wall.
    pub fn empty_map(&self, params: &MapParams) -> OccupancyMap {
        let res = params.resolution_m;
        let mut origin = [0.0; 3];
        let mut dims = [0usize; 3];
        for i in 0..3 {
            origin[i] = self.room.min[i] - res;
            dims[i] = ((self.room.max[i] - self.room.min[i]) / res).round() as usize + 2;
        }
        OccupancyMap::new(params.clone(), origin, dims)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SceneDocument { version: SCENE_VERSION, scene: self.clone() })
            .expect("scene serializes")
    }

    pub fn from_json(text: &str) -> Result<Scene, SceneError> {
        let doc: SceneDocument =
            serde_json::from_str(text).map_err(|e| SceneError::Document(e.to_string()))?;
        if doc.version != SCENE_VERSION {
            return Err(SceneError::Document(format!("unsupported version {}", doc.version)));
        }
        doc.scene.validate()?;
        Ok(doc.scene)
    }

    pub fn load(path: &std::path::Path) -> Result<Scene, SceneError> {
        Scene::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Pinhole intrinsics with a centered principal point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraIntrinsics {
    pub width: usize,
    pub height: usize,
    pub hfov_deg: f64,
    pub vfov_deg: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self { width: 160, height: 120, hfov_deg: 60.0, vfov_deg: 45.0 }
    }
}

impl CameraIntrinsics {
    pub fn new(width: usize, height: usize, hfov_deg: f64, vfov_deg: f64) -> Self {
        Self { width, height, hfov_deg, vfov_deg }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.width < 8 || self.height < 8 {
            return Err(SceneError::InvalidParams("image must be at least 8x8".into()));
        }
        if !(self.hfov_deg < 180.0 && self.hfov_deg > self.vfov_deg && self.vfov_deg > 0.0) {
            return Err(SceneError::InvalidParams("need 180 > hfov > vfov > 0".into()));
        }
        Ok(())
    }

    pub fn fx(&self) -> f64 {
        self.width as f64 / 2.0 / (self.hfov_deg.to_radians() / 2.0).tan()
    }

    pub fn fy(&self) -> f64 {
        self.height as f64 / 2.0 / (self.vfov_deg.to_radians() / 2.0).tan()
    }

    /// Camera-frame ray through the center of pixel `(u, v)` with unit z.
    /// Row 0 is the top of the image.
    pub fn pixel_ray(&self, u: usize, v: usize) -> Vec3 {
        let x = (u as f64 + 0.5 - self.width as f64 / 2.0) / self.fx();
        let y = -(v as f64 + 0.5 - self.height as f64 / 2.0) / self.fy();
        Vec3::new(x, y, 1.0)
    }

    /// Unit camera-frame rays for all pixels, row-major.
    pub fn unit_rays(&self) -> Vec<Vec3> {
        let mut rays = Vec::with_capacity(self.width * self.height);
        for v in 0..self.height {
            for u in 0..self.width {
                rays.push(self.pixel_ray(u, v).normalize());
            }
        }
        rays
    }
}

/// Z-depth image in meters, row-major; `0.0` marks no return.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl DepthImage {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self { width, height, values: vec![value; width * height] }
    }

    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.width + u]
    }
}

/// Renders the z-depth seen from `pose`.
pub fn render_depth(
    scene: &Scene,
    pose: &CameraPose,
    intrinsics: &CameraIntrinsics,
    max_range_m: f64,
) -> Result<DepthImage, SceneError> {
    let o = pose.position;
    if !scene.room.contains_point(&o) {
        return Err(SceneError::PoseOutsideRoom([o.x, o.y, o.z]));
    }
    let mut values = Vec::with_capacity(intrinsics.width * intrinsics.height);
    for v in 0..intrinsics.height {
        for u in 0..intrinsics.width {
            let cam = intrinsics.pixel_ray(u, v);
            let norm = cam.norm();
            let dir = pose.to_world(&(cam / norm));
            let t = scene.ray_distance(&o, &dir);
            values.push(if t <= max_range_m { t / norm } else { 0.0 });
        }
    }
    Ok(DepthImage { width: intrinsics.width, height: intrinsics.height, values })
}

/// Ground-truth frames of every dome viewpoint, in viewpoint order.
pub fn render_all(
    scene: &Scene,
    dome: &DomeGraph,
    intrinsics: &CameraIntrinsics,
    max_range_m: f64,
) -> Result<Vec<DepthImage>, SceneError> {
    dome.viewpoints.iter().map(|pose| render_depth(scene, pose, intrinsics, max_range_m)).collect()
}

/// Occupied-voxel count after integrating the ground-truth depth of every
/// dome viewpoint into a fresh map; the 100% coverage reference.
pub fn full_coverage_reference(
    scene: &Scene,
    dome: &DomeGraph,
    intrinsics: &CameraIntrinsics,
    map_params: &MapParams,
    max_range_m: f64,
) -> Result<usize, SceneError> {
    Ok(full_coverage_map(scene, dome, intrinsics, map_params, max_range_m)?.count_surface())
}

pub fn full_coverage_map(
    scene: &Scene,
    dome: &DomeGraph,
    intrinsics: &CameraIntrinsics,
    map_params: &MapParams,
    max_range_m: f64,
) -> Result<OccupancyMap, SceneError> {
    let mut map = scene.empty_map(map_params);
    for pose in &dome.viewpoints {
        let depth = render_depth(scene, pose, intrinsics, max_range_m)?;
        map.integrate_depth(&depth, pose, intrinsics, max_range_m)
            .map_err(|e| SceneError::Invalid(e.to_string()))?;
    }
    Ok(map)
}
