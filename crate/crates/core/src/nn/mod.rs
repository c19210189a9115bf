//! Network input assembly, the `EXHW` weight format and a CPU forward pass.

mod fixture;
mod forward;
mod input;
mod weights;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use fixture::{check_fixture, write_fixture, FixtureReport, FixtureSidecar};
pub use forward::{forward, run_layers};
pub use input::{assemble_input, depth_channel, normalized_depth, resize_nearest, scaled_depth_side, INPUT_SIZE};
pub use weights::{load_weights, save_weights, CnnWeights, Layer, LayerSpec, WeightHeader};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("not an EXHW weight file (bad magic)")]
    BadMagic,
    #[error("unsupported weight file version {0}")]
    Version(u32),
    #[error("weight file size mismatch: expected {expected} bytes of parameters, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("invalid network: {0}")]
    Validation(String),
    #[error("unknown input variant `{0}`")]
    UnknownVariant(String),
    #[error("weights expect variant {weights} but {requested} was requested")]
    VariantMismatch { weights: InputVariant, requested: InputVariant },
    #[error("input: {0}")]
    Input(String),
    #[error("tensor shape {got:?} does not match layer input {expected:?}")]
    Shape { got: [usize; 3], expected: [usize; 3] },
    #[error("header: {0}")]
    Header(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Network input layouts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InputVariant {
    Depth,
    Utility,
    #[serde(rename = "2D")]
    TwoD,
    #[serde(rename = "2DScaled")]
    TwoDScaled,
    #[serde(rename = "4D")]
    FourD,
    #[serde(rename = "5D")]
    FiveD,
}

impl InputVariant {
    pub const ALL: [InputVariant; 6] = [
        InputVariant::Depth,
        InputVariant::Utility,
        InputVariant::TwoD,
        InputVariant::TwoDScaled,
        InputVariant::FourD,
        InputVariant::FiveD,
    ];

    pub fn channels(self) -> usize {
        match self {
            InputVariant::Depth | InputVariant::Utility => 1,
            InputVariant::TwoD | InputVariant::TwoDScaled => 2,
            InputVariant::FourD => 4,
            InputVariant::FiveD => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InputVariant::Depth => "Depth",
            InputVariant::Utility => "Utility",
            InputVariant::TwoD => "2D",
            InputVariant::TwoDScaled => "2DScaled",
            InputVariant::FourD => "4D",
            InputVariant::FiveD => "5D",
        }
    }
}

impl fmt::Display for InputVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InputVariant {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        InputVariant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| NnError::UnknownVariant(s.to_string()))
    }
}

/// Dense `channels x height x width` tensor, row-major per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }
}
