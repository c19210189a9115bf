use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::Direction;

/// Binary image of ray-traced exploration status; 1 marks a ray that met
/// only Unknown voxels.
#[derive(Clone, Debug, PartialEq)]
pub struct UtilityMap {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<u8>,
    pub fov_deg: (f64, f64),
}

impl UtilityMap {
    pub fn new(width: usize, height: usize, bits: Vec<u8>, fov_deg: (f64, f64)) -> Self {
        assert_eq!(bits.len(), width * height);
        Self { width, height, bits, fov_deg }
    }

    pub fn at(&self, u: usize, v: usize) -> u8 {
        self.bits[v * self.width + u]
    }

    pub fn sum(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn unexplored_fraction(&self) -> f64 {
        self.sum() as f64 / self.bits.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PartitionScheme {
    /// Four disjoint triangles cut by the image diagonals.
    TriangularNonOverlap,
    /// Top, bottom, left and right image halves (overlapping).
    RectangularHalves,
}

impl FromStr for PartitionScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "triangular" | "TriangularNonOverlap" => Ok(PartitionScheme::TriangularNonOverlap),
            "rectangular" | "RectangularHalves" => Ok(PartitionScheme::RectangularHalves),
            other => Err(format!("unknown partition scheme `{other}`")),
        }
    }
}

/// The triangular region a pixel belongs to. Pixels on a diagonal go to Up
/// or Down.
pub fn triangle_of(u: usize, v: usize, width: usize, height: usize) -> Direction {
    // Pixel center relative to the image center, scaled so both diagonals
    // become |a| = |b|.
    let a = (2 * u as i64 + 1 - width as i64) * height as i64;
    let b = (2 * v as i64 + 1 - height as i64) * width as i64;
    if b.abs() >= a.abs() {
        if b <= 0 {
            Direction::Up
        } else {
            Direction::Down
        }
    } else if a < 0 {
        Direction::Left
    } else {
        Direction::Right
    }
}

fn in_half(direction: Direction, u: usize, v: usize, width: usize, height: usize) -> bool {
    match direction {
        Direction::Up => 2 * v < height,
        Direction::Down => 2 * v + 1 >= height + (height % 2 == 0) as usize,
        Direction::Left => 2 * u < width,
        Direction::Right => 2 * u + 1 >= width + (width % 2 == 0) as usize,
    }
}

/// Direction-specific masked copies of a utility map and their sums,
/// indexed by [`Direction::index`].
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub maps: [UtilityMap; 4],
    pub sums: [usize; 4],
}

impl Partition {
    pub fn sum(&self, d: Direction) -> usize {
        self.sums[d.index()]
    }

    pub fn map(&self, d: Direction) -> &UtilityMap {
        &self.maps[d.index()]
    }
}

/// Splits `umap` into four channels, zeroing pixels outside each region.
pub fn partition_utility(umap: &UtilityMap, scheme: PartitionScheme) -> Partition {
    let (w, h) = (umap.width, umap.height);
    let mut masks: [Vec<u8>; 4] = std::array::from_fn(|_| vec![0u8; w * h]);
    let mut sums = [0usize; 4];
    for v in 0..h {
        for u in 0..w {
            let bit = umap.at(u, v);
            let i = v * w + u;
            match scheme {
                PartitionScheme::TriangularNonOverlap => {
                    let d = triangle_of(u, v, w, h).index();
                    masks[d][i] = bit;
                    sums[d] += bit as usize;
                }
                PartitionScheme::RectangularHalves => {
                    for d in Direction::ALL {
                        if in_half(d, u, v, w, h) {
                            masks[d.index()][i] = bit;
                            sums[d.index()] += bit as usize;
                        }
                    }
                }
            }
        }
    }
    let maps = masks.map(|bits| UtilityMap { width: w, height: h, bits, fov_deg: umap.fov_deg });
    Partition { maps, sums }
}
