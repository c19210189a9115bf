use super::{CnnWeights, Layer, NnError, Tensor};

fn conv3x3(x: &Tensor, in_channels: usize, out_channels: usize, weight: &[f32], bias: &[f32], relu: bool) -> Result<Tensor, NnError> {
    if x.channels != in_channels {
        return Err(NnError::Shape { got: x.shape(), expected: [in_channels, x.height, x.width] });
    }
    let (h, w) = (x.height, x.width);
    let mut out = Tensor::zeros(out_channels, h, w);
    for o in 0..out_channels {
        let dst = out.channel_mut(o);
        dst.fill(bias[o]);
        for i in 0..in_channels {
            let src = x.channel(i);
            for ky in 0..3 {
                for kx in 0..3 {
                    let k = weight[((o * in_channels + i) * 3 + ky) * 3 + kx];
                    if k == 0.0 {
                        continue;
                    }
                    // Output rows/cols whose tap lands inside the input.
                    let y0 = if ky == 0 { 1 } else { 0 };
                    let y1 = if ky == 2 { h - 1 } else { h };
                    let x0 = if kx == 0 { 1 } else { 0 };
                    let x1 = if kx == 2 { w - 1 } else { w };
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let drow = &mut dst[y * w + x0..y * w + x1];
                        let srow = &src[sy * w + x0 + kx - 1..sy * w + x1 + kx - 1];
                        for (d, s) in drow.iter_mut().zip(srow) {
                            *d += k * s;
                        }
                    }
                }
            }
        }
        if relu {
            dst.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
    Ok(out)
}

fn maxpool2(x: &Tensor) -> Tensor {
    let (h, w) = (x.height / 2, x.width / 2);
    let mut out = Tensor::zeros(x.channels, h, w);
    for c in 0..x.channels {
        for y in 0..h {
            for xx in 0..w {
                let m = x
                    .at(c, 2 * y, 2 * xx)
                    .max(x.at(c, 2 * y, 2 * xx + 1))
                    .max(x.at(c, 2 * y + 1, 2 * xx))
                    .max(x.at(c, 2 * y + 1, 2 * xx + 1));
                out.data[(c * h + y) * w + xx] = m;
            }
        }
    }
    out
}

fn dense(x: &Tensor, in_features: usize, out_features: usize, weight: &[f32], bias: &[f32], relu: bool) -> Result<Tensor, NnError> {
    if x.data.len() != in_features || x.height != 1 || x.width != 1 {
        return Err(NnError::Shape { got: x.shape(), expected: [in_features, 1, 1] });
    }
    let mut out = Tensor::zeros(out_features, 1, 1);
    for o in 0..out_features {
        let row = &weight[o * in_features..(o + 1) * in_features];
        let acc: f64 = row.iter().zip(&x.data).map(|(&a, &b)| a as f64 * b as f64).sum();
        let v = (acc + bias[o] as f64) as f32;
        out.data[o] = if relu { v.max(0.0) } else { v };
    }
    Ok(out)
}

/// Runs `layers` in order on `x`.
pub fn run_layers(layers: &[Layer], x: &Tensor) -> Result<Tensor, NnError> {
    let mut t = x.clone();
    for layer in layers {
        t = match layer {
            Layer::Conv2d { in_channels, out_channels, weight, bias, relu } => {
                conv3x3(&t, *in_channels, *out_channels, weight, bias, *relu)?
            }
            Layer::MaxPool2 => {
                if t.height % 2 != 0 || t.width % 2 != 0 {
                    return Err(NnError::Shape { got: t.shape(), expected: [t.channels, t.height & !1, t.width & !1] });
                }
                maxpool2(&t)
            }
            Layer::Flatten => Tensor { channels: t.data.len(), height: 1, width: 1, data: t.data },
            Layer::Dense { in_features, out_features, weight, bias, relu } => {
                dense(&t, *in_features, *out_features, weight, bias, *relu)?
            }
        };
    }
    Ok(t)
}

/// Four direction logits, ordered Up, Down, Left, Right.
pub fn forward(weights: &CnnWeights, x: &Tensor) -> Result<[f32; 4], NnError> {
    let h = &weights.header;
    let expected = [h.input_channels, h.input_height, h.input_width];
    if x.shape() != expected {
        return Err(NnError::Shape { got: x.shape(), expected });
    }
    let out = run_layers(&weights.layers, x)?;
    out.data
        .as_slice()
        .try_into()
        .map_err(|_| NnError::Shape { got: out.shape(), expected: [4, 1, 1] })
}
