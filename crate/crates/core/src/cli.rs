//! Command-line entry point.
//!
//! Settings resolve in three layers: built-in defaults, then a JSON
//! `--config` file, then individual flags. Every run that produces outputs
//! writes the resolved settings as `effective-config.json` beside them;
//! passing that file back through `--config` reproduces the run.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, DatasetConfig, DatasetError, DEFAULT_CLASS_CAP, DEFAULT_RATIOS};
use crate::geometry::DomeConfig;
use crate::harness::{self, EpisodeResult, ExplorationSetup, HarnessError};
use crate::nn::{self, NnError};
use crate::policies::{Policy, PolicyError, PolicySpec};
use crate::scene::{generate_room, RoomParams, Scene, SceneError};
use crate::sim::{max_step_angle_deg, SimConfig};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "DOMENBV_OUT_DIR";
pub const EFFECTIVE_CONFIG: &str = "effective-config.json";

/// A failure with a short machine-readable code, printed as
/// `error[code]: message`.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn exit_code(&self) -> u8 {
        match self.code {
            "usage" | "missing-scene" | "config" | "policy" => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.code, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        CliError::new("scene", e.to_string())
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        CliError::new("policy", e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Policy(p) => p.into(),
            other => CliError::new("harness", other.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::new("dataset", e.to_string())
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        CliError::new("nn", e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new("io", e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub per_class_cap: usize,
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { per_class_cap: DEFAULT_CLASS_CAP, ratios: DEFAULT_RATIOS, seed: 0 }
    }
}

/// Resolved settings of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Scene file; mutually exclusive with `scene_seeds`.
    pub scene: Option<PathBuf>,
    /// Procedural rooms generated from `room`.
    pub scene_seeds: Vec<u64>,
    pub room: RoomParams,
    pub dome: DomeConfig,
    pub sim: SimConfig,
    pub policies: Vec<String>,
    pub steps: usize,
    /// One episode per seed; each seed also picks the start viewpoint.
    pub seeds: Vec<u64>,
    /// Fixed start viewpoint for every episode, overriding the seeded one.
    pub start: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub dataset: DatasetConfig,
    pub split: Option<SplitConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: None,
            scene_seeds: Vec::new(),
            room: RoomParams::default(),
            dome: DomeConfig::default(),
            sim: SimConfig::default(),
            policies: Vec::new(),
            steps: 150,
            seeds: vec![0, 1, 2, 3, 4],
            start: None,
            out_dir: None,
            dataset: DatasetConfig::default(),
            split: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::new("config", format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::new("config", format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run configs always serialize")
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(default_out_dir)
    }

    pub fn policy_specs(&self) -> Result<Vec<PolicySpec>, CliError> {
        self.policies.iter().map(|p| p.parse().map_err(CliError::from)).collect()
    }

    /// Scenes named by the config, loaded or generated.
    pub fn scenes(&self) -> Result<Vec<Scene>, CliError> {
        match (&self.scene, self.scene_seeds.is_empty()) {
            (Some(_), false) => Err(CliError::new("config", "`scene` and `scene_seeds` are mutually exclusive")),
            (Some(path), true) => Ok(vec![Scene::load(path)?]),
            (None, false) => self.scene_seeds.iter().map(|&s| Ok(generate_room(s, &self.room)?)).collect(),
            (None, true) => Err(CliError::new(
                "missing-scene",
                "no scene given; pass --scene <path> or --scene-seed <n> (or set `scene` / `scene_seeds` in --config)",
            )),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.steps == 0 {
            return Err(CliError::new("config", "steps must be at least 1"));
        }
        self.sim.sensor.validate()?;
        self.room.validate()?;
        if !(self.sim.max_range_m > 0.0) {
            return Err(CliError::new("config", "sim.max_range_m must be positive"));
        }
        if !(self.sim.map.resolution_m > 0.0) {
            return Err(CliError::new("config", "sim.map.resolution_m must be positive"));
        }
        let n = crate::geometry::icosphere_vertex_count(self.dome.subdivisions);
        if let Some(start) = self.start {
            if start >= n {
                return Err(CliError::new("config", format!("start viewpoint {start} is outside the {n}-viewpoint dome")));
            }
        }
        self.policy_specs()?;
        Ok(())
    }

    fn write_effective(&self, dir: &Path) -> Result<PathBuf, CliError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(EFFECTIVE_CONFIG);
        fs::write(&path, self.to_json())?;
        Ok(path)
    }
}

fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"))
}

#[derive(Debug, Parser)]
#[command(name = "domenbv", version, about = "Depth-camera exploration on a viewpoint dome")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a procedural room and write it as JSON.
    GenScene(GenSceneArgs),
    /// Generate a labelled dataset for the direction classifier.
    GenDataset(GenDatasetArgs),
    /// Run one policy on one scene.
    Explore(ExploreArgs),
    /// Run several policies over scenes and seeds.
    Eval(EvalArgs),
    /// Verify a forward-pass fixture.
    NnCheck(NnCheckArgs),
    /// Print dome geometry diagnostics.
    DomeInfo(DomeInfoArgs),
}

/// Flags shared by every run that reads a `RunConfig`.
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// JSON run config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scene JSON file.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Procedural room seed(s), comma separated.
    #[arg(long = "scene-seed", value_delimiter = ',')]
    pub scene_seeds: Vec<u64>,
    /// Decisions per episode.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Episode seed(s), comma separated.
    #[arg(long = "seed", value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Fixed start viewpoint.
    #[arg(long)]
    pub start: Option<usize>,
    /// Output directory (default: $DOMENBV_OUT_DIR or ./out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "max-range")]
    pub max_range_m: Option<f64>,
    /// Voxel edge in meters.
    #[arg(long = "voxel")]
    pub voxel_m: Option<f64>,
}

impl RunArgs {
    /// Defaults, then the config file, then these flags.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(scene) = &self.scene {
            cfg.scene = Some(scene.clone());
            cfg.scene_seeds.clear();
        }
        if !self.scene_seeds.is_empty() {
            cfg.scene_seeds = self.scene_seeds.clone();
            cfg.scene = None;
        }
        if let Some(steps) = self.steps {
            cfg.steps = steps;
        }
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if self.start.is_some() {
            cfg.start = self.start;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = Some(out.clone());
        }
        if let Some(r) = self.max_range_m {
            cfg.sim.max_range_m = r;
        }
        if let Some(v) = self.voxel_m {
            cfg.sim.map.resolution_m = v;
        }
        if cfg.out_dir.is_none() {
            cfg.out_dir = Some(default_out_dir());
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct GenSceneArgs {
    #[arg(long)]
    pub seed: u64,
    /// Run config supplying room parameters.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenDatasetArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Reconstruction levels in percent, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub levels: Vec<u32>,
    #[arg(long = "max-combos")]
    pub max_combos: Option<usize>,
    #[arg(long = "dataset-seed")]
    pub dataset_seed: Option<u64>,
    /// Restrict to these viewpoints, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub viewpoints: Vec<usize>,
    /// Also write balanced train/val/test manifests.
    #[arg(long)]
    pub split: bool,
    #[arg(long = "class-cap")]
    pub class_cap: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExploreArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// random | basegain | basegain-rect | count | oracle1..3 | cnn:<weights>:<variant>
    #[arg(long)]
    pub policy: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Policy selectors, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub policies: Vec<String>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct NnCheckArgs {
    /// Fixture sidecar JSON.
    #[arg(long)]
    pub fixture: PathBuf,
    /// Weight file replacing the one named in the sidecar.
    #[arg(long)]
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DomeInfoArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub subdivisions: Option<u32>,
    #[arg(long = "radius")]
    pub radius_m: Option<f64>,
    #[arg(long = "neighbor-radius")]
    pub neighbor_radius_m: Option<f64>,
    /// Write the dome (poses and adjacency) as JSON here.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            return Err(CliError::new("usage", first));
        }
    };
    match cli.command {
        Command::GenScene(a) => gen_scene(&a),
        Command::GenDataset(a) => gen_dataset(&a),
        Command::Explore(a) => explore(&a),
        Command::Eval(a) => eval(&a),
        Command::NnCheck(a) => nn_check(&a),
        Command::DomeInfo(a) => dome_info(&a),
    }
}

fn gen_scene(args: &GenSceneArgs) -> Result<(), CliError> {
    let room = match &args.config {
        Some(p) => RunConfig::load(p)?.room,
        None => RoomParams::default(),
    };
    let scene = generate_room(args.seed, &room)?;
    match &args.out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, scene.to_json())?;
            println!("wrote {} ({} obstacles) to {}", scene.id(), scene.obstacles.len(), path.display());
        }
        None => println!("{}", scene.to_json()),
    }
    Ok(())
}

fn single_scene(cfg: &RunConfig, command: &str) -> Result<Scene, CliError> {
    let mut scenes = cfg.scenes()?;
    if scenes.len() != 1 {
        return Err(CliError::new("config", format!("{command} takes exactly one scene, got {}", scenes.len())));
    }
    Ok(scenes.remove(0))
}

fn gen_dataset(args: &GenDatasetArgs) -> Result<(), CliError> {
    let mut cfg = args.run.resolve()?;
    if !args.levels.is_empty() {
        cfg.dataset.levels = args.levels.clone();
    }
    if let Some(m) = args.max_combos {
        cfg.dataset.max_combos = m;
    }
    if let Some(s) = args.dataset_seed {
        cfg.dataset.seed = s;
    }
    if !args.viewpoints.is_empty() {
        cfg.dataset.viewpoints = Some(args.viewpoints.clone());
    }
    if args.split && cfg.split.is_none() {
        cfg.split = Some(SplitConfig::default());
    }
    if let (Some(cap), Some(split)) = (args.class_cap, cfg.split.as_mut()) {
        split.per_class_cap = cap;
    }
    cfg.validate()?;
    let scene = single_scene(&cfg, "gen-dataset")?;
    let n = crate::geometry::icosphere_vertex_count(cfg.dome.subdivisions);
    if let Some(v) = cfg.dataset.viewpoints.iter().flatten().find(|&&v| v >= n) {
        return Err(CliError::new("config", format!("viewpoint {v} is outside the {n}-viewpoint dome")));
    }
    let out = cfg.out_dir();
    cfg.write_effective(&out)?;
    let entries = dataset::write_dataset(&out, &scene, &cfg.dome, &cfg.sim, &cfg.dataset)?;
    let mut counts = [0usize; 4];
    for e in &entries {
        counts[e.label.index()] += 1;
    }
    println!("wrote {} records to {} (Up/Down/Left/Right: {:?})", entries.len(), out.display(), counts);
    if let Some(split) = &cfg.split {
        let splits = dataset::balance_and_split(&entries, split.per_class_cap, split.ratios, split.seed)?;
        dataset::write_splits(&out, &splits)?;
        println!("split train/val/test: {}/{}/{}", splits.train.len(), splits.val.len(), splits.test.len());
    }
    Ok(())
}

fn explore(args: &ExploreArgs) -> Result<(), CliError> {
    let mut cfg = args.run.resolve()?;
    if let Some(p) = &args.policy {
        cfg.policies = vec![p.clone()];
    }
    let scene = single_scene(&cfg, "explore")?;
    if cfg.policies.len() != 1 {
        return Err(CliError::new("config", "explore takes exactly one policy; pass --policy <spec>"));
    }
    cfg.validate()?;
    run_sweep(&cfg, vec![scene], 1)
}

fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let mut cfg = args.run.resolve()?;
    if !args.policies.is_empty() {
        cfg.policies = args.policies.clone();
    }
    let scenes = cfg.scenes()?;
    if cfg.policies.is_empty() {
        return Err(CliError::new("config", "no policies given; pass --policies a,b,..."));
    }
    cfg.validate()?;
    run_sweep(&cfg, scenes, args.jobs.max(1))
}

/// Every (scene, policy, seed) episode, in that order.
pub fn sweep_episodes(cfg: &RunConfig, scenes: Vec<Scene>, jobs: usize) -> Result<Vec<EpisodeResult>, CliError> {
    let policies: Vec<Policy> = cfg.policy_specs()?.iter().map(Policy::from_spec).collect::<Result<_, _>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::new("harness", e.to_string()))?;
    let mut results = Vec::new();
    for scene in scenes {
        let setup = ExplorationSetup::new(scene, &cfg.dome, cfg.sim.clone())?;
        let tasks: Vec<(&Policy, u64)> = policies.iter().flat_map(|p| cfg.seeds.iter().map(move |&s| (p, s))).collect();
        let batch: Vec<Result<EpisodeResult, HarnessError>> = pool.install(|| {
            tasks
                .par_iter()
                .map(|&(policy, seed)| {
                    let start = cfg.start.unwrap_or_else(|| harness::start_viewpoint(seed, setup.dome.len()));
                    harness::run_episode(&setup, policy, start, cfg.steps, seed)
                })
                .collect()
        });
        for r in batch {
            results.push(r?);
        }
    }
    Ok(results)
}

fn run_sweep(cfg: &RunConfig, scenes: Vec<Scene>, jobs: usize) -> Result<(), CliError> {
    let out = cfg.out_dir();
    cfg.write_effective(&out)?;
    let results = sweep_episodes(cfg, scenes, jobs)?;
    let summary = harness::aggregate(&results)?;
    harness::write_steps_csv(&out.join("steps.csv"), &results)?;
    harness::write_summary_csv(&out.join("summary.csv"), &summary)?;
    harness::write_coverage_svg(&out.join("coverage.svg"), &summary)?;

    let mut finals: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in &results {
        finals.entry(&r.policy).or_default().push(r.final_coverage());
    }
    let latency = harness::mean_decision_latency(&results);
    let mut table = String::from("policy,episodes,mean_final_coverage,mean_latency_s\n");
    for (policy, lat) in &latency {
        let f = &finals[policy.as_str()];
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        table.push_str(&format!("{policy},{},{mean:.6},{lat:.6}\n", f.len()));
    }
    fs::write(out.join("policies.csv"), &table)?;
    print!("{table}");
    println!("outputs in {}", out.display());
    Ok(())
}

fn nn_check(args: &NnCheckArgs) -> Result<(), CliError> {
    let report = nn::check_fixture(&args.fixture, args.weights.as_deref())?;
    println!("logits    {:?}", report.logits);
    println!("reference {:?}", report.reference);
    println!("max_abs_err {:.3e} (tolerance {:.1e})", report.max_abs_err, report.tolerance);
    if report.passed() {
        println!("PASS");
        Ok(())
    } else {
        Err(CliError::new(
            "fixture-mismatch",
            format!("max abs error {:.3e} exceeds tolerance {:.1e}", report.max_abs_err, report.tolerance),
        ))
    }
}

fn dome_info(args: &DomeInfoArgs) -> Result<(), CliError> {
    let cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut dc = cfg.dome.clone();
    if let Some(s) = args.subdivisions {
        dc.subdivisions = s;
    }
    if let Some(r) = args.radius_m {
        dc.radius_m = r;
    }
    if let Some(r) = args.neighbor_radius_m {
        dc.neighbor_radius_m = r;
    }
    if dc.subdivisions > 7 {
        return Err(CliError::new("config", "subdivisions above 7 are not supported"));
    }
    let dome = dc.build();
    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    for list in &dome.adjacency {
        *histogram.entry(list.len()).or_default() += 1;
    }
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (i, list) in dome.adjacency.iter().enumerate() {
        for &j in list {
            let d = (dome.viewpoints[i].position - dome.viewpoints[j].position).norm();
            lo = lo.min(d);
            hi = hi.max(d);
        }
    }
    let u = cfg.sim.utility_intrinsics(&dome);
    println!("viewpoints: {}", dome.len());
    println!("subdivisions: {}", dome.subdivisions);
    println!("dome radius m: {}", dome.dome_radius_m);
    println!("neighbor radius m: {}", dome.neighbor_radius_m);
    let hist: Vec<String> = histogram.iter().map(|(k, v)| format!("{k}:{v}")).collect();
    println!("candidate counts: {}", hist.join(" "));
    if hi > 0.0 {
        println!("neighbor distance m: {lo:.5} .. {hi:.5}");
    }
    println!("max step angle deg: {:.4}", max_step_angle_deg(&dome));
    println!("utility fov deg: {:.3} x {:.3}", u.hfov_deg, u.vfov_deg);
    if let Some(path) = &args.json {
        fs::write(path, dome.to_json())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
