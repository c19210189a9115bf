//! `EXHW` weight files.
//!
//! Layout: magic `EXHW`, u32 version, u32 header length, JSON header, then
//! little-endian f32 parameters. Each parameterized layer stores its kernel
//! (`out, in, kh, kw` for convolutions, `out, in` for dense layers) followed
//! by its bias.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{InputVariant, NnError};

const MAGIC: &[u8; 4] = b"EXHW";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        #[serde(default = "three")]
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default = "one")]
        padding: usize,
    },
    #[serde(rename = "maxpool2")]
    MaxPool2,
    Flatten,
    Dense {
        in_features: usize,
        out_features: usize,
    },
}

fn three() -> usize {
    3
}

fn one() -> usize {
    1
}

impl LayerSpec {
    pub fn conv(in_channels: usize, out_channels: usize) -> Self {
        LayerSpec::Conv2d { in_channels, out_channels, kernel: 3, stride: 1, padding: 1 }
    }

    pub fn dense(in_features: usize, out_features: usize) -> Self {
        LayerSpec::Dense { in_features, out_features }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                out_channels * in_channels * kernel * kernel + out_channels
            }
            LayerSpec::Dense { in_features, out_features } => out_features * in_features + out_features,
            LayerSpec::MaxPool2 | LayerSpec::Flatten => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightHeader {
    pub variant: InputVariant,
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub layers: Vec<LayerSpec>,
}

impl WeightHeader {
    /// The default network for `variant`: three conv/pool stages
    /// (16, 32, 64 channels) and two dense layers (256, 4).
    pub fn reference(variant: InputVariant) -> Self {
        let c = variant.channels();
        Self {
            variant,
            input_channels: c,
            input_height: 64,
            input_width: 64,
            layers: vec![
                LayerSpec::conv(c, 16),
                LayerSpec::MaxPool2,
                LayerSpec::conv(16, 32),
                LayerSpec::MaxPool2,
                LayerSpec::conv(32, 64),
                LayerSpec::MaxPool2,
                LayerSpec::Flatten,
                LayerSpec::dense(64 * 8 * 8, 256),
                LayerSpec::dense(256, 4),
            ],
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// Checks that layer shapes chain from the input to four logits.
    pub fn validate(&self) -> Result<(), NnError> {
        let fail = |m: String| Err(NnError::Validation(m));
        if self.input_channels != self.variant.channels() {
            return fail(format!(
                "header declares {} input channels but variant {} has {}",
                self.input_channels,
                self.variant,
                self.variant.channels()
            ));
        }
        // (channels, height, width) before flatten, (features, 1, 1) after.
        let mut shape = [self.input_channels, self.input_height, self.input_width];
        let mut flat = false;
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, padding } => {
                    if (kernel, stride, padding) != (3, 1, 1) {
                        return fail(format!("layer {i}: only 3x3 stride-1 pad-1 convolutions are supported"));
                    }
                    if flat || in_channels != shape[0] {
                        return fail(format!("layer {i}: conv expects {in_channels} channels, input has {}", shape[0]));
                    }
                    shape[0] = out_channels;
                }
                LayerSpec::MaxPool2 => {
                    if flat || shape[1] % 2 != 0 || shape[2] % 2 != 0 {
                        return fail(format!("layer {i}: max-pool needs even spatial dims, got {shape:?}"));
                    }
                    shape = [shape[0], shape[1] / 2, shape[2] / 2];
                }
                LayerSpec::Flatten => {
                    shape = [shape[0] * shape[1] * shape[2], 1, 1];
                    flat = true;
                }
                LayerSpec::Dense { in_features, out_features } => {
                    if !flat || in_features != shape[0] {
                        return fail(format!("layer {i}: dense expects {in_features} features, input has {shape:?}"));
                    }
                    shape[0] = out_features;
                }
            }
        }
        if !(flat && shape[0] == 4) {
            return fail(format!("network must end in 4 logits, ends in {shape:?}"));
        }
        Ok(())
    }
}

/// A parameterized layer ready for inference.
#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv2d { in_channels: usize, out_channels: usize, weight: Vec<f32>, bias: Vec<f32>, relu: bool },
    MaxPool2,
    Flatten,
    Dense { in_features: usize, out_features: usize, weight: Vec<f32>, bias: Vec<f32>, relu: bool },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CnnWeights {
    pub header: WeightHeader,
    pub layers: Vec<Layer>,
}

impl CnnWeights {
    /// Splits a flat parameter vector into layers according to `header`.
    pub fn from_params(header: WeightHeader, params: &[f32]) -> Result<Self, NnError> {
        header.validate()?;
        let expected = header.param_count();
        if params.len() != expected {
            return Err(NnError::SizeMismatch { expected: expected * 4, found: params.len() * 4 });
        }
        let last_dense = header.layers.iter().rposition(|l| matches!(l, LayerSpec::Dense { .. }));
        let mut offset = 0;
        let mut take = |n: usize| {
            let s = params[offset..offset + n].to_vec();
            offset += n;
            s
        };
        let layers = header
            .layers
            .iter()
            .enumerate()
            .map(|(i, spec)| match *spec {
                LayerSpec::Conv2d { in_channels, out_channels, .. } => Layer::Conv2d {
                    in_channels,
                    out_channels,
                    weight: take(out_channels * in_channels * 9),
                    bias: take(out_channels),
                    relu: true,
                },
                LayerSpec::MaxPool2 => Layer::MaxPool2,
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Dense { in_features, out_features } => Layer::Dense {
                    in_features,
                    out_features,
                    weight: take(out_features * in_features),
                    bias: take(out_features),
                    relu: Some(i) != last_dense,
                },
            })
            .collect();
        Ok(Self { header, layers })
    }

    pub fn zeros(header: WeightHeader) -> Result<Self, NnError> {
        let n = header.param_count();
        Self::from_params(header, &vec![0.0; n])
    }

    pub fn variant(&self) -> InputVariant {
        self.header.variant
    }

    pub fn params(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.header.param_count());
        for layer in &self.layers {
            if let Layer::Conv2d { weight, bias, .. } | Layer::Dense { weight, bias, .. } = layer {
                out.extend_from_slice(weight);
                out.extend_from_slice(bias);
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let params = self.params();
        let mut buf = Vec::with_capacity(12 + header.len() + 4 * params.len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
        buf.extend_from_slice(&header);
        for p in params {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(NnError::BadMagic);
        }
        if bytes.len() < 12 {
            return Err(NnError::SizeMismatch { expected: 12, found: bytes.len() });
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != WEIGHTS_VERSION {
            return Err(NnError::Version(version));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if bytes.len() < 12 + header_len {
            return Err(NnError::SizeMismatch { expected: 12 + header_len, found: bytes.len() });
        }
        let header: WeightHeader = serde_json::from_slice(&bytes[12..12 + header_len])?;
        header.validate()?;
        let payload = &bytes[12 + header_len..];
        let expected = header.param_count() * 4;
        if payload.len() != expected {
            return Err(NnError::SizeMismatch { expected, found: payload.len() });
        }
        let params: Vec<f32> = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Self::from_params(header, &params)
    }
}

pub fn load_weights(path: &Path) -> Result<CnnWeights, NnError> {
    CnnWeights::from_bytes(&std::fs::read(path)?)
}

pub fn save_weights(weights: &CnnWeights, path: &Path) -> Result<(), NnError> {
    std::fs::write(path, weights.to_bytes())?;
    Ok(())
}
