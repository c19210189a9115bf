//! Next-best-view decision strategies behind one interface.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::derive_seed;
use crate::geometry::{select_nbv_pose, CameraPose, Direction, DomeGraph, GeometryError};
use crate::nn::{self, CnnWeights, InputVariant, NnError};
use crate::occmap::{partition_utility, OccupancyMap, PartitionScheme, UtilityMap};
use std::borrow::Cow;

use crate::scene::{render_depth, CameraIntrinsics, DepthImage, Scene};
use crate::sim::SimConfig;

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("unknown policy `{0}` (expected random | basegain | basegain-rect | count | oracle1 | oracle2 | oracle3 | cnn:<weights-path>:<variant>)")]
    UnknownPolicy(String),
    #[error("oracle policies need the ground-truth scene")]
    MissingScene,
    #[error("candidate set is empty")]
    NoCandidates,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("rendering: {0}")]
    Render(String),
}

/// Either a movement direction, resolved to the furthest candidate along
/// it, or a direct index into the candidate list.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyDecision {
    Direction(Direction),
    Candidate(usize),
}

/// Everything a policy may look at when choosing the next view.
pub struct ExplorationContext<'a> {
    pub map: &'a OccupancyMap,
    pub viewpoint: usize,
    pub current_depth: &'a DepthImage,
    pub dome: &'a DomeGraph,
    /// Ground truth, only read by oracle policies.
    pub scene: Option<&'a Scene>,
    /// Pre-rendered ground-truth frames indexed by viewpoint, if available.
    pub frames: Option<&'a [DepthImage]>,
    pub sim: &'a SimConfig,
    pub utility_intrinsics: &'a CameraIntrinsics,
    pub seed: u64,
    pub step: usize,
}

impl<'a> ExplorationContext<'a> {
    pub fn current_pose(&self) -> &CameraPose {
        &self.dome.viewpoints[self.viewpoint]
    }

    pub fn candidates(&self) -> &[usize] {
        &self.dome.adjacency[self.viewpoint]
    }

    pub fn candidate_poses(&self) -> Vec<CameraPose> {
        self.candidates().iter().map(|&j| self.dome.viewpoints[j].clone()).collect()
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[self.step as u64]))
    }

    pub fn trace_utility(&self) -> UtilityMap {
        self.map.trace_utility_map(
            self.current_pose(),
            self.utility_intrinsics,
            self.sim.utility.min_range_m,
            self.sim.max_range_m,
        )
    }

    /// Ground-truth frame at `viewpoint`, from the cache when present.
    pub fn ground_truth_frame(&self, viewpoint: usize) -> Result<Cow<'a, DepthImage>, PolicyError> {
        if let Some(frames) = self.frames {
            return Ok(Cow::Borrowed(&frames[viewpoint]));
        }
        let scene = self.scene.ok_or(PolicyError::MissingScene)?;
        render_depth(scene, &self.dome.viewpoints[viewpoint], &self.sim.sensor, self.sim.max_range_m)
            .map(Cow::Owned)
            .map_err(|e| PolicyError::Render(e.to_string()))
    }

    /// Dome viewpoint a decision leads to.
    pub fn resolve(&self, decision: PolicyDecision) -> Result<usize, PolicyError> {
        let candidates = self.candidates();
        match decision {
            PolicyDecision::Candidate(i) => candidates.get(i).copied().ok_or(PolicyError::NoCandidates),
            PolicyDecision::Direction(d) => {
                let pick = select_nbv_pose(self.current_pose(), d, &self.candidate_poses())
                    .map_err(|_| PolicyError::NoCandidates)?;
                Ok(candidates[pick])
            }
        }
    }
}

/// Uniformly random candidate.
pub fn random_decide(ctx: &ExplorationContext) -> Result<PolicyDecision, PolicyError> {
    let n = ctx.candidates().len();
    if n == 0 {
        return Err(PolicyError::NoCandidates);
    }
    Ok(PolicyDecision::Candidate(ctx.rng().random_range(0..n)))
}

pub fn basegain_sums(ctx: &ExplorationContext, scheme: PartitionScheme) -> [usize; 4] {
    partition_utility(&ctx.trace_utility(), scheme).sums
}

/// Direction whose utility partition holds the most unexplored rays.
pub fn basegain_decide(ctx: &ExplorationContext, scheme: PartitionScheme) -> PolicyDecision {
    PolicyDecision::Direction(Direction::argmax(&basegain_sums(ctx, scheme)))
}

/// Distinct Unknown voxels each candidate's sensor rays would traverse.
pub fn count_scores(ctx: &ExplorationContext) -> Vec<usize> {
    let rays = ctx.sim.sensor.unit_rays();
    let mut seen = vec![0u32; ctx.map.len()];
    ctx.candidates()
        .iter()
        .enumerate()
        .map(|(k, &j)| {
            let pose = &ctx.dome.viewpoints[j];
            let stamp = k as u32 + 1;
            rays.iter()
                .map(|r| ctx.map.mark_unknown_along(&pose.position, &pose.to_world(r), ctx.sim.max_range_m, &mut seen, stamp))
                .sum()
        })
        .collect()
}

pub fn count_decide(ctx: &ExplorationContext) -> Result<PolicyDecision, PolicyError> {
    let scores = count_scores(ctx);
    if scores.is_empty() {
        return Err(PolicyError::NoCandidates);
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(PolicyDecision::Candidate(best))
}

/// The straight-line path of `steps` moves along `direction`, stopping
/// early if a viewpoint has no candidates.
pub fn lookahead_path(dome: &DomeGraph, start: usize, direction: Direction, steps: usize) -> Result<Vec<usize>, PolicyError> {
    let mut path = Vec::with_capacity(steps);
    let mut at = start;
    for _ in 0..steps {
        match dome.step(at, direction)? {
            Some(next) => {
                path.push(next);
                at = next;
            }
            None => break,
        }
    }
    Ok(path)
}

/// Surface count after integrating ground-truth frames along each
/// direction's lookahead path into a copy of the map.
pub fn oracle_scores(ctx: &ExplorationContext, steps: usize) -> Result<[usize; 4], PolicyError> {
    if ctx.scene.is_none() && ctx.frames.is_none() {
        return Err(PolicyError::MissingScene);
    }
    let mut scores = [0usize; 4];
    for d in Direction::ALL {
        let mut map = ctx.map.clone();
        for j in lookahead_path(ctx.dome, ctx.viewpoint, d, steps)? {
            let pose = &ctx.dome.viewpoints[j];
            let depth = ctx.ground_truth_frame(j)?;
            map.integrate_depth(&depth, pose, &ctx.sim.sensor, ctx.sim.max_range_m)
                .map_err(|e| PolicyError::Render(e.to_string()))?;
        }
        scores[d.index()] = map.count_surface();
    }
    Ok(scores)
}

pub fn oracle_decide(ctx: &ExplorationContext, steps: usize) -> Result<PolicyDecision, PolicyError> {
    Ok(PolicyDecision::Direction(Direction::argmax(&oracle_scores(ctx, steps)?)))
}

pub fn cnn_logits(ctx: &ExplorationContext, weights: &CnnWeights, variant: InputVariant) -> Result<[f32; 4], PolicyError> {
    if weights.variant() != variant {
        return Err(NnError::VariantMismatch { weights: weights.variant(), requested: variant }.into());
    }
    let umap = ctx.trace_utility();
    let sensor = &ctx.sim.sensor;
    let x = nn::assemble_input(
        variant,
        ctx.current_depth,
        &umap,
        (sensor.hfov_deg, sensor.vfov_deg),
        (ctx.utility_intrinsics.hfov_deg, ctx.utility_intrinsics.vfov_deg),
        ctx.sim.max_range_m,
    )?;
    Ok(nn::forward(weights, &x)?)
}

pub fn cnn_decide(ctx: &ExplorationContext, weights: &CnnWeights, variant: InputVariant) -> Result<PolicyDecision, PolicyError> {
    Ok(PolicyDecision::Direction(Direction::argmax(&cnn_logits(ctx, weights, variant)?)))
}

/// Parsed policy selector string.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PolicySpec {
    Random,
    BaseGain,
    BaseGainRect,
    Count,
    Oracle(u8),
    Cnn { path: PathBuf, variant: InputVariant },
}

impl FromStr for PolicySpec {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || PolicyError::UnknownPolicy(s.to_string());
        Ok(match s {
            "random" => PolicySpec::Random,
            "basegain" => PolicySpec::BaseGain,
            "basegain-rect" => PolicySpec::BaseGainRect,
            "count" => PolicySpec::Count,
            "oracle1" => PolicySpec::Oracle(1),
            "oracle2" => PolicySpec::Oracle(2),
            "oracle3" => PolicySpec::Oracle(3),
            _ => {
                let rest = s.strip_prefix("cnn:").ok_or_else(unknown)?;
                let (path, variant) = rest.rsplit_once(':').ok_or_else(unknown)?;
                if path.is_empty() {
                    return Err(unknown());
                }
                PolicySpec::Cnn { path: PathBuf::from(path), variant: variant.parse()? }
            }
        })
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Random => f.write_str("random"),
            PolicySpec::BaseGain => f.write_str("basegain"),
            PolicySpec::BaseGainRect => f.write_str("basegain-rect"),
            PolicySpec::Count => f.write_str("count"),
            PolicySpec::Oracle(s) => write!(f, "oracle{s}"),
            PolicySpec::Cnn { path, variant } => write!(f, "cnn:{}:{}", path.display(), variant),
        }
    }
}

/// A ready-to-run policy.
#[derive(Clone, Debug)]
pub enum Policy {
    Random,
    BaseGain(PartitionScheme),
    Count,
    Oracle(usize),
    Cnn { weights: Arc<CnnWeights>, variant: InputVariant, label: String },
}

impl Policy {
    pub fn from_spec(spec: &PolicySpec) -> Result<Policy, PolicyError> {
        Ok(match spec {
            PolicySpec::Random => Policy::Random,
            PolicySpec::BaseGain => Policy::BaseGain(PartitionScheme::TriangularNonOverlap),
            PolicySpec::BaseGainRect => Policy::BaseGain(PartitionScheme::RectangularHalves),
            PolicySpec::Count => Policy::Count,
            PolicySpec::Oracle(s) => Policy::Oracle(*s as usize),
            PolicySpec::Cnn { path, variant } => {
                let weights = nn::load_weights(path)?;
                if weights.variant() != *variant {
                    return Err(NnError::VariantMismatch { weights: weights.variant(), requested: *variant }.into());
                }
                Policy::Cnn { weights: Arc::new(weights), variant: *variant, label: format!("cnn-{variant}") }
            }
        })
    }

    pub fn name(&self) -> String {
        match self {
            Policy::Random => "random".into(),
            Policy::BaseGain(PartitionScheme::TriangularNonOverlap) => "basegain".into(),
            Policy::BaseGain(PartitionScheme::RectangularHalves) => "basegain-rect".into(),
            Policy::Count => "count".into(),
            Policy::Oracle(s) => format!("oracle{s}"),
            Policy::Cnn { label, .. } => label.clone(),
        }
    }

    pub fn decide(&self, ctx: &ExplorationContext) -> Result<PolicyDecision, PolicyError> {
        if ctx.candidates().is_empty() {
            return Err(PolicyError::NoCandidates);
        }
        match self {
            Policy::Random => random_decide(ctx),
            Policy::BaseGain(scheme) => Ok(basegain_decide(ctx, *scheme)),
            Policy::Count => count_decide(ctx),
            Policy::Oracle(steps) => oracle_decide(ctx, *steps),
            Policy::Cnn { weights, variant, .. } => cnn_decide(ctx, weights, *variant),
        }
    }
}
