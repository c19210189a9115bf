use super::{InputVariant, NnError, Tensor};
use crate::occmap::{partition_utility, PartitionScheme, UtilityMap};
use crate::scene::DepthImage;

/// Side length of every network input channel.
pub const INPUT_SIZE: usize = 64;

/// Nearest-neighbor resampling: destination pixel `x` reads source pixel
/// `floor((2x + 1) * src / (2 * dst))`.
pub fn resize_nearest<T: Copy>(src: &[T], src_w: usize, src_h: usize, dst_w: usize, dst_h: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(dst_w * dst_h);
    for y in 0..dst_h {
        let sy = ((2 * y + 1) * src_h) / (2 * dst_h);
        for x in 0..dst_w {
            let sx = ((2 * x + 1) * src_w) / (2 * dst_w);
            out.push(src[sy * src_w + sx]);
        }
    }
    out
}

/// Side of the shrunken depth patch along one axis:
/// `round(64 * tan(sensor/2) / tan(utility/2))`.
pub fn scaled_depth_side(sensor_fov_deg: f64, utility_fov_deg: f64) -> usize {
    let r = (sensor_fov_deg.to_radians() / 2.0).tan() / (utility_fov_deg.to_radians() / 2.0).tan();
    (INPUT_SIZE as f64 * r).round() as usize
}

/// Depth scaled by `max_range_m` into [0, 1]; the no-return sentinel stays 0.
pub fn normalized_depth(depth: &DepthImage, max_range_m: f64) -> Vec<f32> {
    depth
        .values
        .iter()
        .map(|&z| if z > 0.0 { (z / max_range_m).min(1.0) as f32 } else { 0.0 })
        .collect()
}

/// Depth as a normalized `64 x 64` channel.
pub fn depth_channel(depth: &DepthImage, max_range_m: f64) -> Vec<f32> {
    resize_nearest(&normalized_depth(depth, max_range_m), depth.width, depth.height, INPUT_SIZE, INPUT_SIZE)
}

fn utility_channel(umap: &UtilityMap) -> Vec<f32> {
    let bits: Vec<f32> = umap.bits.iter().map(|&b| b as f32).collect();
    resize_nearest(&bits, umap.width, umap.height, INPUT_SIZE, INPUT_SIZE)
}

/// Builds the `C x 64 x 64` input tensor for `variant`.
pub fn assemble_input(
    variant: InputVariant,
    depth: &DepthImage,
    umap: &UtilityMap,
    sensor_fov_deg: (f64, f64),
    utility_fov_deg: (f64, f64),
    max_range_m: f64,
) -> Result<Tensor, NnError> {
    if depth.values.len() != depth.width * depth.height || depth.values.is_empty() {
        return Err(NnError::Input("depth image is empty or inconsistent".into()));
    }
    if umap.bits.len() != umap.width * umap.height || umap.bits.is_empty() {
        return Err(NnError::Input("utility map is empty or inconsistent".into()));
    }
    let n = INPUT_SIZE;
    let d = || resize_nearest(&normalized_depth(depth, max_range_m), depth.width, depth.height, n, n);
    let partitions = || {
        let p = partition_utility(umap, PartitionScheme::TriangularNonOverlap);
        p.maps.map(|m| utility_channel(&m))
    };

    let channels: Vec<Vec<f32>> = match variant {
        InputVariant::Depth => vec![d()],
        InputVariant::Utility => vec![utility_channel(umap)],
        InputVariant::TwoD => vec![d(), utility_channel(umap)],
        InputVariant::TwoDScaled => {
            if utility_fov_deg.0 < sensor_fov_deg.0 || utility_fov_deg.1 < sensor_fov_deg.1 {
                return Err(NnError::Input("utility field of view is narrower than the sensor's".into()));
            }
            let sw = scaled_depth_side(sensor_fov_deg.0, utility_fov_deg.0).clamp(1, n);
            let sh = scaled_depth_side(sensor_fov_deg.1, utility_fov_deg.1).clamp(1, n);
            let patch = resize_nearest(&normalized_depth(depth, max_range_m), depth.width, depth.height, sw, sh);
            let mut canvas = vec![0.0f32; n * n];
            let (ox, oy) = ((n - sw) / 2, (n - sh) / 2);
            for y in 0..sh {
                canvas[(oy + y) * n + ox..(oy + y) * n + ox + sw].copy_from_slice(&patch[y * sw..(y + 1) * sw]);
            }
            vec![canvas, utility_channel(umap)]
        }
        InputVariant::FourD => partitions().into_iter().collect(),
        InputVariant::FiveD => std::iter::once(d()).chain(partitions()).collect(),
    };

    let mut t = Tensor::zeros(channels.len(), n, n);
    for (c, data) in channels.iter().enumerate() {
        t.channel_mut(c).copy_from_slice(data);
    }
    Ok(t)
}
