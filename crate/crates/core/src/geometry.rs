//! Polar angle fields around a face center and the sector masks derived from them.
//!
//! Angles are measured counter-clockwise from the positive column axis, in
//! degrees, with rows growing downward. A sector mask for sweep `rho` selects
//! every pixel whose rebased angle is `<= rho`.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pixel dimensions of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ImageGrid {
    pub height: u32,
    pub width: u32,
}

impl ImageGrid {
    pub fn new(height: u32, width: u32) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::domain(format!(
                "grid must be at least 1x1, got {height}x{width}"
            )));
        }
        Ok(Self { height, width })
    }

    pub fn pixel_count(&self) -> usize {
        self.height as usize * self.width as usize
    }

    /// The default face center: `(width / 2, height / 2)`.
    pub fn center(&self) -> FaceCenter {
        FaceCenter {
            x: self.width / 2,
            y: self.height / 2,
        }
    }

    pub fn contains(&self, center: FaceCenter) -> bool {
        center.x < self.width && center.y < self.height
    }
}

/// Face center in pixel coordinates: `x` is the column, `y` the row.
///
/// Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct FaceCenter {
    pub x: u32,
    pub y: u32,
}

impl FaceCenter {
    pub fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

impl From<[u32; 2]> for FaceCenter {
    fn from([x, y]: [u32; 2]) -> Self {
        Self { x, y }
    }
}

impl From<FaceCenter> for [u32; 2] {
    fn from(c: FaceCenter) -> Self {
        [c.x, c.y]
    }
}

/// Reduce an angle in degrees into `[0, 360)`.
///
/// A value that rounds up to exactly 360 is folded to 0.
pub fn wrap_degrees(angle: f64) -> f64 {
    let r = angle.rem_euclid(360.0);
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

// Fast path of `wrap_degrees(angle - shift)` for operands already in [0, 360).
// Produces bit-identical results since the difference is exact in that range.
#[inline(always)]
fn shift_in_range(angle: f64, shift: f64) -> f64 {
    let d = angle - shift;
    let r = if d < 0.0 { d + 360.0 } else { d };
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Row-major `H x W` field of angles in degrees, every entry in `[0, 360)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleMatrix {
    grid: ImageGrid,
    values: Vec<f64>,
}

impl AngleMatrix {
    pub fn from_values(grid: ImageGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.pixel_count() {
            return Err(Error::domain(format!(
                "angle matrix needs {} values, got {}",
                grid.pixel_count(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(0.0..360.0).contains(*v)) {
            return Err(Error::domain(format!("angle {bad} outside [0, 360)")));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> ImageGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Angle at row `i`, column `j`.
    pub fn get(&self, i: u32, j: u32) -> f64 {
        self.values[i as usize * self.grid.width as usize + j as usize]
    }
}

/// Angle of every pixel around `center`, in degrees within `[0, 360)`.
///
/// Entry `(i, j)` is `atan2(cy - i, j - cx)` converted to degrees and wrapped.
/// The center pixel itself gets 0.
pub fn compute_angle_matrix(grid: ImageGrid, center: FaceCenter) -> Result<AngleMatrix> {
    if !grid.contains(center) {
        return Err(Error::domain(format!(
            "center ({}, {}) outside {}x{} grid",
            center.x, center.y, grid.height, grid.width
        )));
    }
    let cx = center.x as f64;
    let cy = center.y as f64;
    let mut values = Vec::with_capacity(grid.pixel_count());
    for i in 0..grid.height {
        let dy = cy - i as f64;
        for j in 0..grid.width {
            let dx = j as f64 - cx;
            // atan2(0, 0) is 0 in IEEE arithmetic, which is the center convention.
            values.push(wrap_degrees(dy.atan2(dx).to_degrees()));
        }
    }
    Ok(AngleMatrix { grid, values })
}

const CACHE_LIMIT: usize = 64;

type CacheMap = HashMap<(ImageGrid, FaceCenter), Arc<AngleMatrix>>;

fn cache() -> &'static RwLock<CacheMap> {
    static CACHE: OnceLock<RwLock<CacheMap>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Same as [`compute_angle_matrix`], memoized per `(grid, center)`.
pub fn cached_angle_matrix(grid: ImageGrid, center: FaceCenter) -> Result<Arc<AngleMatrix>> {
    if let Some(m) = cache()
        .read()
        .unwrap_or_else(|e| e.into_inner())
        .get(&(grid, center))
    {
        return Ok(Arc::clone(m));
    }
    let m = Arc::new(compute_angle_matrix(grid, center)?);
    let mut guard = cache().write().unwrap_or_else(|e| e.into_inner());
    if guard.len() >= CACHE_LIMIT {
        guard.clear();
    }
    guard.insert((grid, center), Arc::clone(&m));
    Ok(m)
}

fn check_base(rho_base: f64) -> Result<()> {
    if !(0.0..360.0).contains(&rho_base) {
        return Err(Error::domain(format!(
            "rho_base {rho_base} outside [0, 360)"
        )));
    }
    Ok(())
}

fn check_sweep(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho < 360.0) {
        return Err(Error::domain(format!("sweep angle {rho} outside (0, 360)")));
    }
    Ok(())
}

/// Rotate the angle field so that `rho_base` becomes the zero direction.
pub fn rebase_angles(m: &AngleMatrix, rho_base: f64) -> Result<AngleMatrix> {
    check_base(rho_base)?;
    let values = m
        .values
        .iter()
        .map(|&v| shift_in_range(v, rho_base))
        .collect();
    Ok(AngleMatrix {
        grid: m.grid,
        values,
    })
}

/// Pixels swept by a clock hand rotating `rho` degrees from the base ray.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorMask {
    grid: ImageGrid,
    rho: f64,
    bits: Vec<bool>,
}

impl SectorMask {
    pub fn grid(&self) -> ImageGrid {
        self.grid
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, i: u32, j: u32) -> bool {
        self.bits[i as usize * self.grid.width as usize + j as usize]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.grid.pixel_count() as f64
    }

    /// Bits of the unselected region (`M_base > rho`).
    pub fn complement(&self) -> Vec<bool> {
        self.bits.iter().map(|b| !b).collect()
    }
}

/// Select pixels with rebased angle `<= rho`.
pub fn sector_mask(m_base: &AngleMatrix, rho: f64) -> Result<SectorMask> {
    check_sweep(rho)?;
    Ok(SectorMask {
        grid: m_base.grid,
        rho,
        bits: m_base.values.iter().map(|&v| v <= rho).collect(),
    })
}

/// Fused rebase + threshold over a raw angle field.
///
/// Returns `true` for each pixel whose angle, rebased by `rho_base`, is `<= rho`.
/// Used on the hot path to avoid materializing the rebased matrix.
pub(crate) fn for_each_selected(
    m: &AngleMatrix,
    rho_base: f64,
    rho: f64,
    mut f: impl FnMut(usize, bool),
) {
    for (idx, &v) in m.values.iter().enumerate() {
        f(idx, shift_in_range(v, rho_base) <= rho);
    }
}

pub(crate) fn validate_base(rho_base: f64) -> Result<()> {
    check_base(rho_base)
}

pub(crate) fn validate_sweep(rho: f64) -> Result<()> {
    check_sweep(rho)
}
