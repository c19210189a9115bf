//! Supervised samples for the direction classifier: partial neighborhood
//! reconstructions, their utility maps and two-step oracle labels.
//!
//! A dataset directory holds `manifest.jsonl`, `dataset.json` (scene and
//! settings needed to rebuild every sample), and two payload files per
//! record: `<id>.depth.f32` (little-endian f32) and `<id>.util.u8` (bytes in
//! {0, 1}), both row-major.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::derive_seed;
use crate::geometry::{Direction, DomeConfig, DomeGraph};
use crate::nn::{depth_channel, resize_nearest, INPUT_SIZE};
use crate::occmap::OccupancyMap;
use crate::policies::{oracle_decide, ExplorationContext, PolicyDecision, PolicyError};
use crate::scene::{render_depth, DepthImage, Scene, SceneError};
use crate::sim::SimConfig;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const INFO_FILE: &str = "dataset.json";

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("no samples for class(es): {}", names(.0))]
    EmptyClass(Vec<Direction>),
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
    #[error("invalid level {0}% (expected 0..=100)")]
    BadLevel(u32),
    #[error("record {id}: {message}")]
    Record { id: String, message: String },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn names(ds: &[Direction]) -> String {
    ds.iter().map(|d| d.name()).collect::<Vec<_>>().join(", ")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// Neighborhood reconstruction levels in percent.
    pub levels: Vec<u32>,
    /// Most subsets drawn per (viewpoint, level).
    pub max_combos: usize,
    pub seed: u64,
    /// Restrict generation to these viewpoints; all when `None`.
    pub viewpoints: Option<Vec<usize>>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { levels: vec![0, 20, 40, 60, 80, 100], max_combos: 10, seed: 0, viewpoints: None }
    }
}

/// Everything needed to rebuild a dataset's maps, stored as `dataset.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub version: u32,
    pub scene: Scene,
    pub dome: DomeConfig,
    pub sim: SimConfig,
    pub config: DatasetConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRecord {
    pub id: String,
    pub scene: String,
    pub viewpoint: usize,
    pub level: u32,
    pub combo: usize,
    /// Neighbor viewpoints whose frames were integrated.
    pub subset: Vec<usize>,
    pub label: Direction,
    /// `64 x 64` depth normalized by the maximum range.
    pub depth: Vec<f32>,
    /// `64 x 64` utility bits.
    pub utility: Vec<u8>,
}

/// One `manifest.jsonl` line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub scene: String,
    pub viewpoint: usize,
    pub level: u32,
    pub combo: usize,
    pub subset: Vec<usize>,
    pub label: Direction,
    pub depth_file: String,
    pub utility_file: String,
    /// `[height, width]` of both payloads.
    pub dims: [usize; 2],
    pub depth_sha256: String,
    pub utility_sha256: String,
}

/// Subset size for `level` percent of `n` neighbors, rounded half up.
pub fn subset_size(level: u32, n: usize) -> usize {
    (level as usize * n + 50) / 100
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn all_combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else { return out };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Distinct `k`-subsets of `0..n` (sorted), at most `max_combos` of them.
/// Every subset is returned when there are few enough; otherwise distinct
/// ones are drawn with `rng`.
pub fn draw_subsets(n: usize, k: usize, max_combos: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    if k > n || max_combos == 0 {
        return Vec::new();
    }
    if binomial(n, k) <= max_combos as u128 {
        return all_combinations(n, k);
    }
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(max_combos);
    while out.len() < max_combos {
        let mut s = index::sample(rng, n, k).into_vec();
        s.sort_unstable();
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

/// Ground-truth frames rendered on first use.
pub struct FrameCache<'a> {
    scene: &'a Scene,
    dome: &'a DomeGraph,
    sim: &'a SimConfig,
    frames: HashMap<usize, DepthImage>,
}

impl<'a> FrameCache<'a> {
    pub fn new(scene: &'a Scene, dome: &'a DomeGraph, sim: &'a SimConfig) -> Self {
        Self { scene, dome, sim, frames: HashMap::new() }
    }

    pub fn get(&mut self, viewpoint: usize) -> Result<&DepthImage, SceneError> {
        if !self.frames.contains_key(&viewpoint) {
            let depth = render_depth(self.scene, &self.dome.viewpoints[viewpoint], &self.sim.sensor, self.sim.max_range_m)?;
            self.frames.insert(viewpoint, depth);
        }
        Ok(&self.frames[&viewpoint])
    }

    /// A fresh map with the frames of `viewpoints` integrated in order.
    pub fn reconstruct(&mut self, viewpoints: &[usize]) -> Result<OccupancyMap, SceneError> {
        let mut map = self.scene.empty_map(&self.sim.map);
        for &j in viewpoints {
            let (sensor, max_range) = (self.sim.sensor.clone(), self.sim.max_range_m);
            let pose = self.dome.viewpoints[j].clone();
            let depth = self.get(j)?;
            map.integrate_depth(depth, &pose, &sensor, max_range)
                .map_err(|e| SceneError::Invalid(e.to_string()))?;
        }
        Ok(map)
    }
}

pub fn record_id(scene: &str, viewpoint: usize, level: u32, combo: usize) -> String {
    format!("{scene}-v{viewpoint:03}-l{level:03}-c{combo:02}")
}

/// Generates records in viewpoint, level, combo order, handing each to
/// `sink`. Deterministic for a given scene, dome, settings and seed.
pub fn generate_dataset<F>(
    scene: &Scene,
    dome: &DomeGraph,
    sim: &SimConfig,
    config: &DatasetConfig,
    mut sink: F,
) -> Result<usize, DatasetError>
where
    F: FnMut(DatasetRecord) -> Result<(), DatasetError>,
{
    if let Some(&bad) = config.levels.iter().find(|&&l| l > 100) {
        return Err(DatasetError::BadLevel(bad));
    }
    let utility_intrinsics = sim.utility_intrinsics(dome);
    let mut frames = FrameCache::new(scene, dome, sim);
    let viewpoints: Vec<usize> = match &config.viewpoints {
        Some(v) => v.clone(),
        None => (0..dome.len()).collect(),
    };
    let scene_id = scene.id();
    let mut count = 0;
    for &v in &viewpoints {
        let neighbors = dome.candidate_set(v).map_err(PolicyError::from)?.to_vec();
        for &level in &config.levels {
            let k = subset_size(level, neighbors.len());
            if neighbors.is_empty() && level != 0 {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[v as u64, level as u64]));
            for (combo, picks) in draw_subsets(neighbors.len(), k, config.max_combos, &mut rng).into_iter().enumerate() {
                let subset: Vec<usize> = picks.iter().map(|&i| neighbors[i]).collect();
                let map = frames.reconstruct(&subset)?;
                let current = frames.get(v)?.clone();
                let ctx = ExplorationContext {
                    map: &map,
                    viewpoint: v,
                    current_depth: &current,
                    dome,
                    scene: Some(scene),
                    frames: None,
                    sim,
                    utility_intrinsics: &utility_intrinsics,
                    seed: config.seed,
                    step: 0,
                };
                let umap = ctx.trace_utility();
                let PolicyDecision::Direction(label) = oracle_decide(&ctx, 2)? else {
                    unreachable!("oracle decisions are directional")
                };
                sink(DatasetRecord {
                    id: record_id(&scene_id, v, level, combo),
                    scene: scene_id.clone(),
                    viewpoint: v,
                    level,
                    combo,
                    subset,
                    label,
                    depth: depth_channel(&current, sim.max_range_m),
                    utility: resize_nearest(&umap.bits, umap.width, umap.height, INPUT_SIZE, INPUT_SIZE),
                })?;
                count += 1;
            }
        }
    }
    Ok(count)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn depth_bytes(depth: &[f32]) -> Vec<u8> {
    depth.iter().flat_map(|x| x.to_le_bytes()).collect()
}

/// Writes a record's payloads into `dir` and returns its manifest line.
pub fn write_record(dir: &Path, record: &DatasetRecord) -> Result<ManifestEntry, DatasetError> {
    let depth_file = format!("{}.depth.f32", record.id);
    let utility_file = format!("{}.util.u8", record.id);
    let depth = depth_bytes(&record.depth);
    fs::write(dir.join(&depth_file), &depth)?;
    fs::write(dir.join(&utility_file), &record.utility)?;
    Ok(ManifestEntry {
        id: record.id.clone(),
        scene: record.scene.clone(),
        viewpoint: record.viewpoint,
        level: record.level,
        combo: record.combo,
        subset: record.subset.clone(),
        label: record.label,
        depth_file,
        utility_file,
        dims: [INPUT_SIZE, INPUT_SIZE],
        depth_sha256: sha256_hex(&depth),
        utility_sha256: sha256_hex(&record.utility),
    })
}

/// Loads and verifies the payloads of `entry`.
pub fn read_record(dir: &Path, entry: &ManifestEntry) -> Result<DatasetRecord, DatasetError> {
    let fail = |message: String| DatasetError::Record { id: entry.id.clone(), message };
    let n = entry.dims[0] * entry.dims[1];
    let depth = fs::read(dir.join(&entry.depth_file)).map_err(|e| fail(format!("{}: {e}", entry.depth_file)))?;
    if depth.len() != 4 * n {
        return Err(fail(format!("depth payload is {} bytes, expected {}", depth.len(), 4 * n)));
    }
    let utility = fs::read(dir.join(&entry.utility_file)).map_err(|e| fail(format!("{}: {e}", entry.utility_file)))?;
    if utility.len() != n {
        return Err(fail(format!("utility payload is {} bytes, expected {n}", utility.len())));
    }
    if sha256_hex(&depth) != entry.depth_sha256 {
        return Err(fail("depth checksum mismatch".into()));
    }
    if sha256_hex(&utility) != entry.utility_sha256 {
        return Err(fail("utility checksum mismatch".into()));
    }
    if let Some(b) = utility.iter().find(|&&b| b > 1) {
        return Err(fail(format!("utility byte {b} is not 0 or 1")));
    }
    Ok(DatasetRecord {
        id: entry.id.clone(),
        scene: entry.scene.clone(),
        viewpoint: entry.viewpoint,
        level: entry.level,
        combo: entry.combo,
        subset: entry.subset.clone(),
        label: entry.label,
        depth: depth.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect(),
        utility,
    })
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<(), DatasetError> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, DatasetError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut entries = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            entries.push(serde_json::from_str(&line)?);
        }
    }
    Ok(entries)
}

/// Generates a dataset into `dir` (created if missing), writing payloads,
/// `manifest.jsonl` and `dataset.json`.
pub fn write_dataset(
    dir: &Path,
    scene: &Scene,
    dome_config: &DomeConfig,
    sim: &SimConfig,
    config: &DatasetConfig,
) -> Result<Vec<ManifestEntry>, DatasetError> {
    fs::create_dir_all(dir)?;
    let info = DatasetInfo {
        version: 1,
        scene: scene.clone(),
        dome: dome_config.clone(),
        sim: sim.clone(),
        config: config.clone(),
    };
    fs::write(dir.join(INFO_FILE), serde_json::to_string_pretty(&info)?)?;
    let dome = dome_config.build();
    let mut entries = Vec::new();
    generate_dataset(scene, &dome, sim, config, |record| {
        entries.push(write_record(dir, &record)?);
        Ok(())
    })?;
    write_manifest(&dir.join(MANIFEST_FILE), &entries)?;
    Ok(entries)
}

pub fn read_info(dir: &Path) -> Result<DatasetInfo, DatasetError> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.join(INFO_FILE))?)?)
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Per-class downsampling to a common size `min(cap, smallest class)`,
/// seeded shuffling, then a stratified split by `ratios`.
///
/// Classes are interleaved round-robin before cutting, so every split holds
/// each class to within one sample.
pub fn balance_and_split_by<T: Clone>(
    items: &[T],
    label: impl Fn(&T) -> Direction,
    per_class_cap: usize,
    ratios: [f64; 3],
    seed: u64,
) -> Result<Splits<T>, DatasetError> {
    if ratios.iter().any(|&r| !(r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DatasetError::BadRatios(ratios));
    }
    let mut classes: BTreeMap<Direction, Vec<&T>> = Direction::ALL.iter().map(|&d| (d, Vec::new())).collect();
    for item in items {
        classes.get_mut(&label(item)).unwrap().push(item);
    }
    let empty: Vec<Direction> = classes.iter().filter(|(_, v)| v.is_empty()).map(|(&d, _)| d).collect();
    if !empty.is_empty() {
        return Err(DatasetError::EmptyClass(empty));
    }
    let per_class = classes.values().map(Vec::len).min().unwrap().min(per_class_cap);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for members in classes.values_mut() {
        members.shuffle(&mut rng);
        members.truncate(per_class);
    }
    let mut interleaved = Vec::with_capacity(4 * per_class);
    for i in 0..per_class {
        for members in classes.values() {
            interleaved.push(members[i].clone());
        }
    }
    let total = interleaved.len();
    let cut_train = (total as f64 * ratios[0]).round() as usize;
    let cut_val = ((total as f64 * (ratios[0] + ratios[1])).round() as usize).clamp(cut_train, total);
    let test = interleaved.split_off(cut_val);
    let val = interleaved.split_off(cut_train);
    Ok(Splits { train: interleaved, val, test })
}

pub fn balance_and_split(
    entries: &[ManifestEntry],
    per_class_cap: usize,
    ratios: [f64; 3],
    seed: u64,
) -> Result<Splits<ManifestEntry>, DatasetError> {
    balance_and_split_by(entries, |e| e.label, per_class_cap, ratios, seed)
}

pub const DEFAULT_CLASS_CAP: usize = 25_000;
pub const DEFAULT_RATIOS: [f64; 3] = [0.7, 0.15, 0.15];

/// Writes `train.jsonl`, `val.jsonl` and `test.jsonl` into `dir`.
pub fn write_splits(dir: &Path, splits: &Splits<ManifestEntry>) -> Result<[PathBuf; 3], DatasetError> {
    let paths = [dir.join("train.jsonl"), dir.join("val.jsonl"), dir.join("test.jsonl")];
    write_manifest(&paths[0], &splits.train)?;
    write_manifest(&paths[1], &splits.val)?;
    write_manifest(&paths[2], &splits.test)?;
    Ok(paths)
}
