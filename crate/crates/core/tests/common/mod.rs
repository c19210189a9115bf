//! Shared oracles and fixtures for integration tests and the acceptance run.
#![allow(dead_code)]

use domenbv::geometry::{select_nbv_pose, CameraPose, Direction, DomeGraph, Vec3};
use domenbv::nn::{CnnWeights, InputVariant, LayerSpec, WeightHeader, INPUT_SIZE};
use domenbv::occmap::{MapParams, OccupancyMap, VoxelState, ENDPOINT_EPS};
use domenbv::scene::{render_depth, Aabb, CameraIntrinsics, DepthImage, RoomParams, Scene};
use domenbv::sim::SimConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A voxel interval along a ray: (index, t_enter, t_exit) in meters.
pub type Span = (usize, f64, f64);

/// Voxels crossed by a ray, found by sampling the ray finely and assigning
/// each piece between consecutive samples to the voxel holding its
/// midpoint. Samples are every resolution/10 plus every grid-plane
/// crossing `(k - g0) / (d / res)`, so pieces never straddle a voxel face.
pub fn march_spans(map: &OccupancyMap, origin: &Vec3, dir: &Vec3) -> Vec<Span> {
    let res = map.resolution();
    let dims = map.dims();
    let g0 = map.to_grid(origin);
    let dg = [dir.x / res, dir.y / res, dir.z / res];
    let mut ts = vec![0.0f64];
    let mut t_far = 0.0f64;
    for i in 0..3 {
        if dg[i] == 0.0 {
            continue;
        }
        let inv = 1.0 / dg[i];
        for k in 0..=dims[i] {
            let t = (k as f64 - g0[i]) * inv;
            if t > 0.0 {
                ts.push(t);
                t_far = t_far.max(t);
            }
        }
    }
    let step = res / 10.0;
    let mut m = 1.0;
    while m * step < t_far {
        ts.push(m * step);
        m += 1.0;
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup();

    let mut spans: Vec<Span> = Vec::new();
    let mut entered = false;
    for w in ts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        let mut cell = [0usize; 3];
        let mut inside = true;
        for i in 0..3 {
            let c = (g0[i] + mid * dg[i]).floor();
            if c < 0.0 || c >= dims[i] as f64 {
                inside = false;
                break;
            }
            cell[i] = c as usize;
        }
        if !inside {
            if entered {
                break;
            }
            continue;
        }
        entered = true;
        let index = map.index(cell);
        match spans.last_mut() {
            Some(last) if last.0 == index => last.2 = b,
            _ => spans.push((index, a, b)),
        }
    }
    spans
}

/// Applies one measurement to `map` using marched spans.
pub fn oracle_integrate_ray(map: &mut OccupancyMap, origin: &Vec3, dir: &Vec3, range: Option<f64>, max_range: f64) {
    let spans = march_spans(map, origin, dir);
    match range {
        Some(r) => {
            for (index, _, t_exit) in spans {
                if t_exit <= r - ENDPOINT_EPS {
                    map.apply_miss(index);
                } else if t_exit > r + ENDPOINT_EPS {
                    map.apply_hit(index);
                    break;
                }
            }
        }
        None => {
            for (index, t_enter, _) in spans {
                if t_enter >= max_range {
                    break;
                }
                map.apply_miss(index);
            }
        }
    }
}

pub fn oracle_integrate_depth(map: &mut OccupancyMap, depth: &DepthImage, pose: &CameraPose, intr: &CameraIntrinsics, max_range: f64) {
    for v in 0..intr.height {
        for u in 0..intr.width {
            let cam = intr.pixel_ray(u, v);
            let norm = cam.norm();
            let dir = pose.to_world(&(cam / norm));
            let z = depth.at(u, v);
            oracle_integrate_ray(map, &pose.position, &dir, (z > 0.0).then(|| z * norm), max_range);
        }
    }
}

pub fn oracle_utility_bits(map: &OccupancyMap, pose: &CameraPose, intr: &CameraIntrinsics, min_range: f64, max_range: f64) -> Vec<u8> {
    let mut bits = Vec::new();
    for v in 0..intr.height {
        for u in 0..intr.width {
            let dir = pose.to_world(&intr.pixel_ray(u, v).normalize());
            let unexplored = march_spans(map, &pose.position, &dir)
                .into_iter()
                .take_while(|&(_, t_enter, _)| t_enter < max_range)
                .filter(|&(_, _, t_exit)| t_exit > min_range)
                .all(|(index, _, _)| map.state(index) == VoxelState::Unknown);
            bits.push(unexplored as u8);
        }
    }
    bits
}

/// A 16^3-voxel world: a 0.7 m cube room with a few grid-aligned boxes, a
/// pre-populated map and a camera in free space.
pub struct SmallWorld {
    pub scene: Scene,
    pub map: OccupancyMap,
    pub pose: CameraPose,
    pub intrinsics: CameraIntrinsics,
    pub utility: CameraIntrinsics,
    pub max_range: f64,
    pub min_range: f64,
}

pub fn small_world(seed: u64) -> SmallWorld {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = 0.05;
    let room = Aabb::new([0.0; 3], [0.7; 3]);
    let mut obstacles = Vec::new();
    for _ in 0..rng.random_range(1..=3) {
        let mut min = [0.0; 3];
        let mut max = [0.0; 3];
        for i in 0..3 {
            let a = rng.random_range(0..12) as f64;
            let len = rng.random_range(1..=4) as f64;
            min[i] = a * g;
            max[i] = ((a + len).min(14.0)) * g;
        }
        obstacles.push(Aabb::new(min, max));
    }
    let scene = Scene { room, obstacles, seed, params: RoomParams::default() };
    let mut map = scene.empty_map(&MapParams::default());
    assert_eq!(map.dims(), [16, 16, 16]);
    for i in 0..map.len() {
        if rng.random_bool(0.3) {
            let l = match rng.random_range(0..4) {
                0 => -1.5,
                1 => 2.0,
                2 => rng.random_range(-0.5..0.5),
                _ => rng.random_range(-2.0..3.5),
            };
            map.set_log_odds(i, l);
        }
    }
    let position = loop {
        let p = Vec3::new(rng.random_range(0.05..0.65), rng.random_range(0.05..0.65), rng.random_range(0.05..0.65));
        if scene.is_free(&p) && scene.obstacles.iter().all(|b| b.distance_to(&p) > 0.02) {
            break p;
        }
    };
    let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
    SmallWorld {
        scene,
        map,
        pose: CameraPose::looking_along(position, axis),
        intrinsics: CameraIntrinsics::new(24, 18, 70.0, 55.0),
        utility: CameraIntrinsics::new(16, 16, 100.0, 90.0),
        max_range: if seed % 2 == 0 { 10.0 } else { 0.3 },
        min_range: if seed % 3 == 0 { 0.0 } else { 0.1 },
    }
}

/// Outcome of checking one small world against the marching oracle.
#[derive(Debug, Default)]
pub struct OracleCheck {
    pub rays: usize,
    pub span_mismatches: usize,
    pub voxel_mismatches: usize,
    pub utility_mismatches: usize,
    pub sentinel_rays: usize,
}

impl OracleCheck {
    pub fn exact(&self) -> bool {
        self.span_mismatches == 0 && self.voxel_mismatches == 0 && self.utility_mismatches == 0
    }
}

pub fn check_small_world(seed: u64) -> OracleCheck {
    let w = small_world(seed);
    let depth = render_depth(&w.scene, &w.pose, &w.intrinsics, w.max_range).unwrap();
    let mut out = OracleCheck::default();
    for v in 0..w.intrinsics.height {
        for u in 0..w.intrinsics.width {
            let cam = w.intrinsics.pixel_ray(u, v);
            let dir = w.pose.to_world(&(cam / cam.norm()));
            let fast: Vec<Span> = w
                .map
                .ray(&w.pose.position, &dir)
                .map(|r| r.map(|v| (v.index, v.t_enter, v.t_exit)).collect())
                .unwrap_or_default();
            out.rays += 1;
            out.sentinel_rays += (depth.at(u, v) == 0.0) as usize;
            if fast != march_spans(&w.map, &w.pose.position, &dir) {
                out.span_mismatches += 1;
            }
        }
    }
    let mut fast = w.map.clone();
    fast.integrate_depth(&depth, &w.pose, &w.intrinsics, w.max_range).unwrap();
    let mut slow = w.map.clone();
    oracle_integrate_depth(&mut slow, &depth, &w.pose, &w.intrinsics, w.max_range);
    out.voxel_mismatches = (0..fast.len()).filter(|&i| fast.log_odds(i).to_bits() != slow.log_odds(i).to_bits()).count();

    // Utility bits on the pre-populated map and on the updated one.
    for m in [&w.map, &fast] {
        let bits = m.trace_utility_map(&w.pose, &w.utility, w.min_range, w.max_range).bits;
        let expected = oracle_utility_bits(m, &w.pose, &w.utility, w.min_range, w.max_range);
        out.utility_mismatches += bits.iter().zip(&expected).filter(|(a, b)| a != b).count();
    }
    out
}

/// Viewpoint reached by `steps` straight moves along `d`, using only pose
/// projections (no adjacency shortcuts).
pub fn walk(dome: &DomeGraph, start: usize, d: Direction, steps: usize) -> Vec<usize> {
    let mut path = Vec::new();
    let mut at = start;
    for _ in 0..steps {
        let candidates = &dome.adjacency[at];
        let poses: Vec<CameraPose> = candidates.iter().map(|&j| dome.viewpoints[j].clone()).collect();
        let Ok(k) = select_nbv_pose(&dome.viewpoints[at], d, &poses) else { break };
        at = candidates[k];
        path.push(at);
    }
    path
}

/// Independent two-step lookahead label: re-render every frame and count
/// Occupied voxels directly from log-odds.
pub fn recount_oracle_label(scene: &Scene, dome: &DomeGraph, sim: &SimConfig, map: &OccupancyMap, at: usize, steps: usize) -> (Direction, [usize; 4]) {
    let occ = domenbv::occmap::logit(sim.map.p_occ);
    let mut scores = [0usize; 4];
    for d in Direction::ALL {
        let mut m = map.clone();
        for j in walk(dome, at, d, steps) {
            let pose = &dome.viewpoints[j];
            let depth = render_depth(scene, pose, &sim.sensor, sim.max_range_m).unwrap();
            m.integrate_depth(&depth, pose, &sim.sensor, sim.max_range_m).unwrap();
        }
        scores[d.index()] = m.log_odds_slice().iter().filter(|&&l| l >= occ).count();
    }
    let mut best = 0;
    for i in 1..4 {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    (Direction::ALL[best], scores)
}

/// A 4D network whose logits are the four partition sums: one dense layer
/// with weight 1 from channel `d` to logit `d`.
pub fn partition_sum_weights() -> CnnWeights {
    let n = INPUT_SIZE * INPUT_SIZE;
    let header = WeightHeader {
        variant: InputVariant::FourD,
        input_channels: 4,
        input_height: INPUT_SIZE,
        input_width: INPUT_SIZE,
        layers: vec![LayerSpec::Flatten, LayerSpec::dense(4 * n, 4)],
    };
    let mut params = vec![0.0f32; 4 * 4 * n + 4];
    for d in 0..4 {
        for i in 0..n {
            params[d * 4 * n + d * n + i] = 1.0;
        }
    }
    CnnWeights::from_params(header, &params).unwrap()
}

/// Random Free/Occupied blobs over `map`.
pub fn scribble(map: &mut OccupancyMap, rng: &mut ChaCha8Rng, blobs: usize) {
    let dims = map.dims();
    for _ in 0..blobs {
        let c: Vec<usize> = (0..3).map(|i| rng.random_range(0..dims[i])).collect();
        let r = rng.random_range(1..8usize) as i64;
        let value = if rng.random_bool(0.7) { -2.0 } else { 3.5 };
        for z in c[2] as i64 - r..=c[2] as i64 + r {
            for y in c[1] as i64 - r..=c[1] as i64 + r {
                for x in c[0] as i64 - r..=c[0] as i64 + r {
                    if x >= 0 && y >= 0 && z >= 0 && (x as usize) < dims[0] && (y as usize) < dims[1] && (z as usize) < dims[2] {
                        let i = map.index([x as usize, y as usize, z as usize]);
                        map.set_log_odds(i, value);
                    }
                }
            }
        }
    }
}

fn point_in_triangle(p: (f64, f64), a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> bool {
    let cross = |o: (f64, f64), x: (f64, f64), y: (f64, f64)| (x.0 - o.0) * (y.1 - o.1) - (x.1 - o.1) * (y.0 - o.0);
    let d = [cross(a, b, p), cross(b, c, p), cross(c, a, p)];
    !(d.iter().any(|&x| x < 0.0) && d.iter().any(|&x| x > 0.0))
}

/// Region of pixel (u, v) among the four corner-to-center triangles, with
/// closed triangles tried in Up, Down, Left, Right order.
pub fn triangle_oracle(u: usize, v: usize, w: usize, h: usize) -> Direction {
    let (wf, hf) = (w as f64, h as f64);
    let p = (u as f64 + 0.5, v as f64 + 0.5);
    let c = (wf / 2.0, hf / 2.0);
    if point_in_triangle(p, (0.0, 0.0), (wf, 0.0), c) {
        Direction::Up
    } else if point_in_triangle(p, (0.0, hf), (wf, hf), c) {
        Direction::Down
    } else if point_in_triangle(p, (0.0, 0.0), (0.0, hf), c) {
        Direction::Left
    } else {
        Direction::Right
    }
}

/// Whether the pixel center lies in the closed half-plane of `d`.
pub fn half_plane_oracle(d: Direction, u: usize, v: usize, w: usize, h: usize) -> bool {
    let (x, y) = (u as f64 + 0.5, v as f64 + 0.5);
    match d {
        Direction::Up => y <= h as f64 / 2.0,
        Direction::Down => y >= h as f64 / 2.0,
        Direction::Left => x <= w as f64 / 2.0,
        Direction::Right => x >= w as f64 / 2.0,
    }
}

/// Compares the partition-sum network against BaseGain on `n` random
/// contexts over scribbled room maps. Returns (decisions agreeing, logits
/// equal to sums, contexts).
pub fn partition_network_agreement(n: usize, seed: u64) -> (usize, usize, usize) {
    use domenbv::geometry::DomeConfig;
    use domenbv::occmap::PartitionScheme;
    use domenbv::policies::{basegain_decide, basegain_sums, cnn_decide, cnn_logits, ExplorationContext};
    use domenbv::scene::generate_room;

    let dome = DomeConfig::default().build();
    let sim = SimConfig::default();
    let ui = sim.utility_intrinsics(&dome);
    let weights = partition_sum_weights();
    let depth = DepthImage::filled(sim.sensor.width, sim.sensor.height, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut decisions, mut logits_ok, mut total) = (0, 0, 0);
    let per_room = 100;
    for room in 0..n.div_ceil(per_room) as u64 {
        let scene = generate_room(seed.wrapping_add(room), &RoomParams::default()).unwrap();
        let mut map = scene.empty_map(&sim.map);
        for _ in 0..per_room.min(n - total) {
            scribble(&mut map, &mut rng, 3);
            let ctx = ExplorationContext {
                map: &map,
                viewpoint: rng.random_range(0..dome.len()),
                current_depth: &depth,
                dome: &dome,
                scene: None,
                frames: None,
                sim: &sim,
                utility_intrinsics: &ui,
                seed: 0,
                step: 0,
            };
            let sums = basegain_sums(&ctx, PartitionScheme::TriangularNonOverlap);
            let logits = cnn_logits(&ctx, &weights, InputVariant::FourD).unwrap();
            logits_ok += (logits.map(|x| x as usize) == sums) as usize;
            decisions += (cnn_decide(&ctx, &weights, InputVariant::FourD).unwrap()
                == basegain_decide(&ctx, PartitionScheme::TriangularNonOverlap)) as usize;
            total += 1;
        }
    }
    (decisions, logits_ok, total)
}
