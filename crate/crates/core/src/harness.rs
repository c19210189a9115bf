//! Exploration episodes, coverage curves and their aggregation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::geometry::{DomeConfig, DomeGraph};
use crate::occmap::OccupancyMap;
use crate::policies::{ExplorationContext, Policy, PolicyError};
use crate::scene::{render_all, CameraIntrinsics, DepthImage, Scene, SceneError};
use crate::sim::SimConfig;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("nothing to aggregate")]
    Empty,
    #[error("episodes of policy `{policy}` have different step counts ({a} and {b})")]
    MixedSteps { policy: String, a: usize, b: usize },
    #[error("start viewpoint {0} is not on the dome")]
    BadStart(usize),
    #[error("the full-coverage reference of scene `{0}` has no occupied voxels")]
    EmptyReference(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A scene with its dome and settings, plus the surface count reached by
/// integrating every dome viewpoint (the 100% coverage reference).
#[derive(Clone, Debug)]
pub struct ExplorationSetup {
    pub scene: Scene,
    pub dome: DomeGraph,
    pub sim: SimConfig,
    pub utility_intrinsics: CameraIntrinsics,
    pub reference_surface: usize,
    /// Ground-truth frame of every dome viewpoint.
    pub frames: Vec<DepthImage>,
}

impl ExplorationSetup {
    pub fn new(scene: Scene, dome: &DomeConfig, sim: SimConfig) -> Result<Self, HarnessError> {
        let dome = dome.build();
        let frames = render_all(&scene, &dome, &sim.sensor, sim.max_range_m)?;
        let mut map = scene.empty_map(&sim.map);
        for (pose, depth) in dome.viewpoints.iter().zip(&frames) {
            map.integrate_depth(depth, pose, &sim.sensor, sim.max_range_m)
                .map_err(|e| SceneError::Invalid(e.to_string()))?;
        }
        let reference_surface = map.count_surface();
        if reference_surface == 0 {
            return Err(HarnessError::EmptyReference(scene.id()));
        }
        let utility_intrinsics = sim.utility_intrinsics(&dome);
        Ok(Self { scene, dome, sim, utility_intrinsics, reference_surface, frames })
    }

    pub fn coverage(&self, surface: usize) -> f64 {
        surface as f64 / self.reference_surface as f64
    }

    fn frame(&self, viewpoint: usize) -> &DepthImage {
        &self.frames[viewpoint]
    }

    fn integrate(&self, map: &mut OccupancyMap, viewpoint: usize, depth: &DepthImage) -> Result<(), SceneError> {
        map.integrate_depth(depth, &self.dome.viewpoints[viewpoint], &self.sim.sensor, self.sim.max_range_m)
            .map_err(|e| SceneError::Invalid(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub viewpoint: usize,
    /// Time spent choosing this viewpoint; zero for the start frame.
    pub latency_s: f64,
    pub surface: usize,
    pub coverage: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub policy: String,
    pub scene: String,
    pub start: usize,
    pub seed: u64,
    /// Step 0 is the start frame; one further entry per decision.
    pub records: Vec<StepRecord>,
}

impl EpisodeResult {
    pub fn final_coverage(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.coverage)
    }

    pub fn viewpoints(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.viewpoint).collect()
    }

    /// The record list without timing, for replay comparisons.
    pub fn untimed(&self) -> Vec<(usize, usize, usize, u64)> {
        self.records.iter().map(|r| (r.step, r.viewpoint, r.surface, r.coverage.to_bits())).collect()
    }
}

/// Seeded start viewpoint of an episode.
pub fn start_viewpoint(seed: u64, dome_len: usize) -> usize {
    const START_STREAM: u64 = 0x5354_4152_54;
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[START_STREAM])).random_range(0..dome_len)
}

/// Runs `steps` decisions of `policy` from `start`.
pub fn run_episode(
    setup: &ExplorationSetup,
    policy: &Policy,
    start: usize,
    steps: usize,
    seed: u64,
) -> Result<EpisodeResult, HarnessError> {
    if start >= setup.dome.len() {
        return Err(HarnessError::BadStart(start));
    }
    let mut map = setup.scene.empty_map(&setup.sim.map);
    let mut viewpoint = start;
    let mut depth = setup.frame(viewpoint);
    setup.integrate(&mut map, viewpoint, depth)?;
    let mut records = Vec::with_capacity(steps + 1);
    let surface = map.count_surface();
    records.push(StepRecord { step: 0, viewpoint, latency_s: 0.0, surface, coverage: setup.coverage(surface) });

    for step in 1..=steps {
        let ctx = ExplorationContext {
            map: &map,
            viewpoint,
            current_depth: depth,
            dome: &setup.dome,
            scene: Some(&setup.scene),
            frames: Some(&setup.frames),
            sim: &setup.sim,
            utility_intrinsics: &setup.utility_intrinsics,
            seed,
            step: step - 1,
        };
        assert!(!ctx.candidates().is_empty(), "viewpoint {viewpoint} has no candidates");
        let started = Instant::now();
        let decision = policy.decide(&ctx)?;
        let next = ctx.resolve(decision)?;
        let latency_s = started.elapsed().as_secs_f64();

        viewpoint = next;
        depth = setup.frame(viewpoint);
        setup.integrate(&mut map, viewpoint, depth)?;
        let surface = map.count_surface();
        records.push(StepRecord { step, viewpoint, latency_s, surface, coverage: setup.coverage(surface) });
    }
    Ok(EpisodeResult { policy: policy.name(), scene: setup.scene.id(), start, seed, records })
}

/// Surface counts of a greedy walk that, at every step, integrates each
/// candidate into a map clone and keeps the one adding the most surface.
pub fn greedy_surface_curve(setup: &ExplorationSetup, start: usize, steps: usize) -> Result<Vec<usize>, HarnessError> {
    if start >= setup.dome.len() {
        return Err(HarnessError::BadStart(start));
    }
    let mut map = setup.scene.empty_map(&setup.sim.map);
    setup.integrate(&mut map, start, setup.frame(start))?;
    let mut curve = vec![map.count_surface()];
    let mut at = start;
    for _ in 0..steps {
        let mut best: Option<(usize, usize, OccupancyMap)> = None;
        for &j in &setup.dome.adjacency[at] {
            let mut trial = map.clone();
            setup.integrate(&mut trial, j, setup.frame(j))?;
            let s = trial.count_surface();
            if best.as_ref().is_none_or(|b| s > b.1) {
                best = Some((j, s, trial));
            }
        }
        let (j, s, trial) = best.expect("dome viewpoints always have candidates");
        at = j;
        map = trial;
        curve.push(s);
    }
    Ok(curve)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub policy: String,
    pub step: usize,
    pub mean_coverage: f64,
    pub std_coverage: f64,
    pub mean_latency_s: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Per-policy, per-step mean and sample standard deviation of coverage, and
/// mean latency. Policies keep their first-seen order.
pub fn aggregate(results: &[EpisodeResult]) -> Result<Vec<StepSummary>, HarnessError> {
    if results.is_empty() {
        return Err(HarnessError::Empty);
    }
    let mut order: Vec<&str> = Vec::new();
    for r in results {
        if !order.contains(&r.policy.as_str()) {
            order.push(&r.policy);
        }
    }
    let mut out = Vec::new();
    for policy in order {
        let group: Vec<&EpisodeResult> = results.iter().filter(|r| r.policy == policy).collect();
        let len = group[0].records.len();
        if let Some(bad) = group.iter().find(|r| r.records.len() != len) {
            return Err(HarnessError::MixedSteps { policy: policy.to_string(), a: len, b: bad.records.len() });
        }
        for step in 0..len {
            let cov: Vec<f64> = group.iter().map(|r| r.records[step].coverage).collect();
            let lat: Vec<f64> = group.iter().map(|r| r.records[step].latency_s).collect();
            out.push(StepSummary {
                policy: policy.to_string(),
                step,
                mean_coverage: mean(&cov),
                std_coverage: sample_std(&cov),
                mean_latency_s: mean(&lat),
            });
        }
    }
    Ok(out)
}

/// Mean decision latency per policy over every decision step.
pub fn mean_decision_latency(results: &[EpisodeResult]) -> Vec<(String, f64)> {
    let mut out: Vec<(String, Vec<f64>)> = Vec::new();
    for r in results {
        let lat = r.records.iter().skip(1).map(|s| s.latency_s);
        match out.iter_mut().find(|(p, _)| *p == r.policy) {
            Some((_, v)) => v.extend(lat),
            None => out.push((r.policy.clone(), lat.collect())),
        }
    }
    out.into_iter().map(|(p, v)| (p, if v.is_empty() { 0.0 } else { mean(&v) })).collect()
}

#[derive(Serialize)]
struct StepRow<'a> {
    policy: &'a str,
    scene: &'a str,
    seed: u64,
    step: usize,
    viewpoint: usize,
    latency_s: f64,
    surface: usize,
    coverage: f64,
}

pub fn write_steps_csv(path: &Path, results: &[EpisodeResult]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in results {
        for s in &r.records {
            w.serialize(StepRow {
                policy: &r.policy,
                scene: &r.scene,
                seed: r.seed,
                step: s.step,
                viewpoint: s.viewpoint,
                latency_s: s.latency_s,
                surface: s.surface,
                coverage: s.coverage,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv(path: &Path, summary: &[StepSummary]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for s in summary {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

/// Coverage-versus-step line plot with one line per policy.
pub fn write_coverage_svg(path: &Path, summary: &[StepSummary]) -> Result<(), HarnessError> {
    const COLORS: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];
    let (w, h, pad) = (640.0, 400.0, 40.0);
    let max_step = summary.iter().map(|s| s.step).max().unwrap_or(1).max(1) as f64;
    let x = |step: usize| pad + (w - 2.0 * pad) * step as f64 / max_step;
    let y = |c: f64| h - pad - (h - 2.0 * pad) * c.clamp(0.0, 1.0);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<polyline points="{pad},{pad} {pad},{b} {r},{b}" fill="none" stroke="black"/>"#,
        b = h - pad,
        r = w - pad
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">step</text>"#, w / 2.0, h - 8.0);
    let _ = writeln!(svg, r#"<text x="8" y="{pad}">coverage</text>"#);
    let mut policies: Vec<&str> = Vec::new();
    for s in summary {
        if !policies.contains(&s.policy.as_str()) {
            policies.push(&s.policy);
        }
    }
    for (i, p) in policies.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = summary
            .iter()
            .filter(|s| s.policy == *p)
            .map(|s| format!("{:.1},{:.1}", x(s.step), y(s.mean_coverage)))
            .collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, points.join(" "));
        let ly = pad + 16.0 * i as f64;
        let _ = writeln!(svg, r#"<text x="{}" y="{ly}" fill="{color}">{p}</text>"#, w - pad - 100.0);
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg)?;
    Ok(())
}
