//! Depth-camera exploration on a viewpoint dome: procedural box rooms,
//! log-odds occupancy mapping, utility-map partitioning and a family of
//! next-best-view policies, including a small CNN inference path.

pub mod cli;
pub mod dataset;
pub mod geometry;
pub mod harness;
pub mod nn;
pub mod occmap;
pub mod policies;
pub mod scene;
pub mod sim;

/// Deterministic sub-seed derived from a base seed and a path of indices.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(splitmix(base), |h, &p| splitmix(h ^ splitmix(p)))
}

/// Book chapters, compiled so their listings run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/dome.md")]
    mod dome {}
    #[doc = include_str!("../../../book/src/scenes.md")]
    mod scenes {}
    #[doc = include_str!("../../../book/src/occupancy.md")]
    mod occupancy {}
    #[doc = include_str!("../../../book/src/utility.md")]
    mod utility {}
    #[doc = include_str!("../../../book/src/policies.md")]
    mod policies {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/dataset.md")]
    mod dataset {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
}
