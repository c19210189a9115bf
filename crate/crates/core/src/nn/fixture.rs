//! Forward-pass fixtures: a JSON sidecar naming a weight file, a raw f32
//! input tensor and raw f32 reference logits (all little-endian).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{forward, load_weights, save_weights, CnnWeights, InputVariant, NnError, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureSidecar {
    pub version: u32,
    pub variant: InputVariant,
    pub weights: String,
    pub input: String,
    pub logits: String,
    pub input_shape: [usize; 3],
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    1e-4
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixtureReport {
    pub logits: [f32; 4],
    pub reference: [f32; 4],
    pub max_abs_err: f64,
    pub tolerance: f64,
}

impl FixtureReport {
    pub fn passed(&self) -> bool {
        self.max_abs_err <= self.tolerance
    }
}

fn read_f32s(path: &Path) -> Result<Vec<f32>, NnError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(NnError::SizeMismatch { expected: bytes.len() / 4 * 4 + 4, found: bytes.len() });
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
}

fn write_f32s(path: &Path, data: &[f32]) -> Result<(), NnError> {
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(path, bytes)?;
    Ok(())
}

fn resolve(base: &Path, name: &str) -> PathBuf {
    let p = Path::new(name);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Runs the fixture's input through its weights; `weights_override`
/// replaces the weight file named in the sidecar.
pub fn check_fixture(sidecar: &Path, weights_override: Option<&Path>) -> Result<FixtureReport, NnError> {
    let meta: FixtureSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar)?)?;
    let base = sidecar.parent().unwrap_or(Path::new("."));
    let weights_path = weights_override.map(Path::to_path_buf).unwrap_or_else(|| resolve(base, &meta.weights));
    let weights = load_weights(&weights_path)?;
    if weights.variant() != meta.variant {
        return Err(NnError::VariantMismatch { weights: weights.variant(), requested: meta.variant });
    }
    let [c, h, w] = meta.input_shape;
    let data = read_f32s(&resolve(base, &meta.input))?;
    if data.len() != c * h * w {
        return Err(NnError::SizeMismatch { expected: c * h * w * 4, found: data.len() * 4 });
    }
    let reference: [f32; 4] = read_f32s(&resolve(base, &meta.logits))?
        .try_into()
        .map_err(|v: Vec<f32>| NnError::SizeMismatch { expected: 16, found: v.len() * 4 })?;
    let logits = forward(&weights, &Tensor { channels: c, height: h, width: w, data })?;
    let max_abs_err = logits
        .iter()
        .zip(&reference)
        .map(|(a, b)| (*a as f64 - *b as f64).abs())
        .fold(0.0, f64::max);
    Ok(FixtureReport { logits, reference, max_abs_err, tolerance: meta.tolerance })
}

/// Writes `weights.exhw`, `input.f32`, `logits.f32` and `fixture.json` into
/// `dir`, returning the sidecar path.
pub fn write_fixture(dir: &Path, weights: &CnnWeights, input: &Tensor, logits: &[f32; 4]) -> Result<PathBuf, NnError> {
    std::fs::create_dir_all(dir)?;
    save_weights(weights, &dir.join("weights.exhw"))?;
    write_f32s(&dir.join("input.f32"), &input.data)?;
    write_f32s(&dir.join("logits.f32"), logits)?;
    let meta = FixtureSidecar {
        version: 1,
        variant: weights.variant(),
        weights: "weights.exhw".into(),
        input: "input.f32".into(),
        logits: "logits.f32".into(),
        input_shape: input.shape(),
        tolerance: default_tolerance(),
    };
    let path = dir.join("fixture.json");
    std::fs::write(&path, serde_json::to_string_pretty(&meta)?)?;
    Ok(path)
}
