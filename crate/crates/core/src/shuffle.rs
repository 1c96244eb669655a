//! Grid partitioning and patch permutation.

use image::{GenericImageView, RgbImage};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A bijection over the `g * g` patches of a grid, in row-major order.
///
/// `mapping[i]` is the destination of the patch that starts at position `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridPermutation {
    granularity: u32,
    mapping: Vec<usize>,
}

impl GridPermutation {
    pub fn new(granularity: u32, mapping: Vec<usize>) -> Result<Self> {
        if granularity == 0 {
            return Err(Error::domain("granularity must be >= 1"));
        }
        let n = (granularity * granularity) as usize;
        if mapping.len() != n {
            return Err(Error::domain(format!(
                "granularity {granularity} needs {n} entries, got {}",
                mapping.len()
            )));
        }
        check_bijection(&mapping)?;
        Ok(Self {
            granularity,
            mapping,
        })
    }

    pub fn identity(granularity: u32) -> Result<Self> {
        let n = (granularity * granularity) as usize;
        Self::new(granularity, (0..n).collect())
    }

    pub fn granularity(&self) -> u32 {
        self.granularity
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    pub fn patch_count(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_identity(&self) -> bool {
        self.mapping.iter().enumerate().all(|(i, &m)| i == m)
    }
}

pub(crate) fn check_bijection(mapping: &[usize]) -> Result<()> {
    let mut seen = vec![false; mapping.len()];
    for &m in mapping {
        if m >= mapping.len() || std::mem::replace(&mut seen[m], true) {
            return Err(Error::domain(format!("{mapping:?} is not a permutation")));
        }
    }
    Ok(())
}

fn patch_size(image: &RgbImage, g: u32) -> Result<(u32, u32)> {
    let (w, h) = image.dimensions();
    if g == 0 || h % g != 0 || w % g != 0 {
        return Err(Error::domain(format!(
            "{h}x{w} image is not divisible into a {g}x{g} grid"
        )));
    }
    Ok((h / g, w / g))
}

/// Split an image into `g * g` equal tiles, row-major.
pub fn partition(image: &RgbImage, g: u32) -> Result<Vec<RgbImage>> {
    let (ph, pw) = patch_size(image, g)?;
    let mut patches = Vec::with_capacity((g * g) as usize);
    for r in 0..g {
        for c in 0..g {
            patches.push(image.view(c * pw, r * ph, pw, ph).to_image());
        }
    }
    Ok(patches)
}

/// Move the patch at source position `i` to position `mapping[i]`.
pub fn apply_permutation(image: &RgbImage, perm: &GridPermutation) -> Result<RgbImage> {
    let g = perm.granularity;
    let (ph, pw) = patch_size(image, g)?;
    let (w, h) = image.dimensions();
    let mut out = RgbImage::new(w, h);
    let row_bytes = w as usize * 3;
    let patch_bytes = pw as usize * 3;
    let src: &[u8] = image;
    let dst: &mut [u8] = &mut out;
    for (from, &to) in perm.mapping.iter().enumerate() {
        let (fr, fc) = (from as u32 / g, from as u32 % g);
        let (tr, tc) = (to as u32 / g, to as u32 % g);
        for y in 0..ph as usize {
            let s = (fr as usize * ph as usize + y) * row_bytes + fc as usize * patch_bytes;
            let d = (tr as usize * ph as usize + y) * row_bytes + tc as usize * patch_bytes;
            dst[d..d + patch_bytes].copy_from_slice(&src[s..s + patch_bytes]);
        }
    }
    Ok(out)
}

pub fn invert(perm: &GridPermutation) -> GridPermutation {
    let mut inverse = vec![0; perm.mapping.len()];
    for (i, &m) in perm.mapping.iter().enumerate() {
        inverse[m] = i;
    }
    GridPermutation {
        granularity: perm.granularity,
        mapping: inverse,
    }
}

/// Uniformly random permutation of `g * g` patches (Fisher-Yates).
pub fn random_permutation<R: Rng + ?Sized>(rng: &mut R, g: u32) -> Result<GridPermutation> {
    let mut perm = GridPermutation::identity(g)?;
    perm.mapping.shuffle(rng);
    Ok(perm)
}

/// Draw a granularity uniformly from `granularities`, then a uniform
/// permutation at that granularity, and apply it.
pub fn random_shuffle<R: Rng + ?Sized>(
    rng: &mut R,
    image: &RgbImage,
    granularities: &[u32],
) -> Result<(RgbImage, GridPermutation)> {
    if granularities.is_empty() {
        return Err(Error::domain("no granularities to draw from"));
    }
    for &g in granularities {
        patch_size(image, g)?;
    }
    let g = granularities[rng.random_range(0..granularities.len())];
    let perm = random_permutation(rng, g)?;
    let out = apply_permutation(image, &perm)?;
    Ok((out, perm))
}
