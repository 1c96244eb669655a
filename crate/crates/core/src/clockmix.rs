//! Sector-based mosaicing of face-aligned images.
//!
//! A pairwise mix keeps `a` outside the swept sector and copies `b` inside it.
//! An n-way mix folds pairwise mixes left to right with strictly shrinking
//! sweeps, so each later source lands in a thinner slice and every earlier
//! source keeps an arc of its own.

use image::RgbImage;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{AugConfig, BaseMode, LabelMode};
use crate::error::{Error, Result};
use crate::geometry::{self, FaceCenter, ImageGrid};

/// Authenticity label: 0 for real, 1 for fake.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    pub fn as_f64(self) -> f64 {
        match self {
            Label::Real => 0.0,
            Label::Fake => 1.0,
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::Real),
            1 => Ok(Label::Fake),
            other => Err(Error::data(format!("label must be 0 or 1, got {other}"))),
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        match l {
            Label::Real => 0,
            Label::Fake => 1,
        }
    }
}

/// An RGB image together with its training target.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub pixels: RgbImage,
    pub label: Label,
    /// Interpolated target in `[0, 1]`; only produced by soft-label mixing.
    pub soft_label: Option<f64>,
}

impl LabeledImage {
    pub fn new(pixels: RgbImage, label: Label) -> Self {
        Self {
            pixels,
            label,
            soft_label: None,
        }
    }

    /// The regression target: the soft label when present, else 0/1.
    pub fn target(&self) -> f64 {
        self.soft_label.unwrap_or(self.label.as_f64())
    }

    pub fn grid(&self) -> ImageGrid {
        ImageGrid {
            height: self.pixels.height(),
            width: self.pixels.width(),
        }
    }
}

/// A reproducible n-way mix: which sources, the sweep of each fold step and
/// the base ray they are measured from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixRecipe {
    #[serde(rename = "sources")]
    pub source_ids: Vec<String>,
    /// Strictly decreasing, one per fold step (`sources.len() - 1` entries).
    #[serde(rename = "angles")]
    pub sweep_angles: Vec<f64>,
    #[serde(rename = "base")]
    pub rho_base: f64,
    /// Per-step base rays, present only when bases are re-drawn each step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_bases: Option<Vec<f64>>,
    pub center: FaceCenter,
}

impl MixRecipe {
    pub fn len(&self) -> usize {
        self.source_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_ids.is_empty()
    }

    fn base_for_step(&self, step: usize) -> f64 {
        match &self.step_bases {
            Some(bases) => bases[step],
            None => self.rho_base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.source_ids.len();
        if !(1..=4).contains(&n) {
            return Err(Error::domain(format!(
                "recipe needs 1 to 4 sources, got {n}"
            )));
        }
        if self.sweep_angles.len() != n - 1 {
            return Err(Error::domain(format!(
                "recipe with {n} sources needs {} angles, got {}",
                n - 1,
                self.sweep_angles.len()
            )));
        }
        for &rho in &self.sweep_angles {
            geometry::validate_sweep(rho)?;
        }
        if self.sweep_angles.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::domain(format!(
                "sweep angles {:?} must be strictly decreasing",
                self.sweep_angles
            )));
        }
        geometry::validate_base(self.rho_base)?;
        if let Some(bases) = &self.step_bases {
            if bases.len() != n - 1 {
                return Err(Error::domain(format!(
                    "{} step bases for {} fold steps",
                    bases.len(),
                    n - 1
                )));
            }
            for &b in bases {
                geometry::validate_base(b)?;
            }
        }
        Ok(())
    }
}

fn check_same_dims(a: &RgbImage, b: &RgbImage) -> Result<()> {
    if a.dimensions() != b.dimensions() {
        return Err(Error::domain(format!(
            "image dimensions differ: {:?} vs {:?}",
            a.dimensions(),
            b.dimensions()
        )));
    }
    Ok(())
}

/// Hard-select pixels: `b` where the rebased angle is `<= rho`, else `a`.
/// Returns the mixed buffer and the number of pixels taken from `b`.
pub fn mix_pixels(
    a: &RgbImage,
    b: &RgbImage,
    rho: f64,
    rho_base: f64,
    center: FaceCenter,
) -> Result<(RgbImage, usize)> {
    check_same_dims(a, b)?;
    geometry::validate_sweep(rho)?;
    geometry::validate_base(rho_base)?;
    let grid = ImageGrid::new(a.height(), a.width())?;
    let angles = geometry::cached_angle_matrix(grid, center)?;

    let mut out = a.clone();
    let dst: &mut [u8] = &mut out;
    let src: &[u8] = b;
    let mut taken = 0usize;
    geometry::for_each_selected(&angles, rho_base, rho, |idx, selected| {
        if selected {
            let k = idx * 3;
            dst[k..k + 3].copy_from_slice(&src[k..k + 3]);
            taken += 1;
        }
    });
    Ok((out, taken))
}

/// Mix two images: `b` fills the sector swept by `rho` from the base ray.
/// The label is fake if either input is fake.
pub fn clockmix_pair(
    a: &LabeledImage,
    b: &LabeledImage,
    rho: f64,
    rho_base: f64,
    center: FaceCenter,
) -> Result<LabeledImage> {
    let (pixels, _) = mix_pixels(&a.pixels, &b.pixels, rho, rho_base, center)?;
    Ok(LabeledImage::new(
        pixels,
        mix_label_hard(&[a.label, b.label])?,
    ))
}

/// n-way mix with hard labels.
pub fn clockmix_n(images: &[LabeledImage], recipe: &MixRecipe) -> Result<LabeledImage> {
    clockmix_n_with_mode(images, recipe, LabelMode::Hard)
}

/// n-way mix. In soft mode each fold step interpolates the running target
/// by the fraction of pixels that survived that step.
pub fn clockmix_n_with_mode(
    images: &[LabeledImage],
    recipe: &MixRecipe,
    mode: LabelMode,
) -> Result<LabeledImage> {
    recipe.validate()?;
    if images.len() != recipe.len() {
        return Err(Error::domain(format!(
            "recipe lists {} sources but {} images were given",
            recipe.len(),
            images.len()
        )));
    }
    let first = &images[0];
    for img in &images[1..] {
        check_same_dims(&first.pixels, &img.pixels)?;
    }

    let total = first.grid().pixel_count() as f64;
    let mut pixels = first.pixels.clone();
    let mut target = first.target();
    for (step, (img, &rho)) in images[1..].iter().zip(&recipe.sweep_angles).enumerate() {
        let (next, taken) = mix_pixels(
            &pixels,
            &img.pixels,
            rho,
            recipe.base_for_step(step),
            recipe.center,
        )?;
        pixels = next;
        if mode == LabelMode::Soft {
            let kept = 1.0 - taken as f64 / total;
            target = mix_label_soft(target, img.target(), kept)?;
        }
    }

    let labels: Vec<Label> = images.iter().map(|i| i.label).collect();
    Ok(LabeledImage {
        pixels,
        label: mix_label_hard(&labels)?,
        soft_label: (mode == LabelMode::Soft).then_some(target),
    })
}

/// `1 - prod(1 - y_k)`: fake as soon as any source is fake.
pub fn mix_label_hard(labels: &[Label]) -> Result<Label> {
    if labels.is_empty() {
        return Err(Error::domain("cannot mix an empty label list"));
    }
    let real_product: u8 = labels.iter().map(|&l| 1 - u8::from(l)).product();
    Label::try_from(1 - real_product)
}

/// Linear interpolation `lambda * y_a + (1 - lambda) * y_b`.
pub fn mix_label_soft(y_a: f64, y_b: f64, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::domain(format!("lambda {lambda} outside [0, 1]")));
    }
    for y in [y_a, y_b] {
        if !(0.0..=1.0).contains(&y) {
            return Err(Error::domain(format!("target {y} outside [0, 1]")));
        }
    }
    Ok(lambda * y_a + (1.0 - lambda) * y_b)
}

/// Draw a recipe for mixing `sources` (in fold order) around `center`.
///
/// Sweeps are drawn uniformly in the configured range, sorted descending, and
/// redrawn until consecutive gaps reach `min_sector`. After `retry_limit`
/// failures the sweeps fall back to even spacing across the range.
pub fn sample_recipe<R: Rng + ?Sized>(
    rng: &mut R,
    sources: Vec<String>,
    center: FaceCenter,
    config: &AugConfig,
) -> Result<MixRecipe> {
    let n = sources.len();
    if !(1..=4).contains(&n) {
        return Err(Error::domain(format!("cannot mix {n} sources")));
    }
    let steps = n - 1;
    let (lo, hi) = (config.angle_min, config.angle_max);

    let mut angles = Vec::with_capacity(steps);
    let mut accepted = steps == 0;
    for _ in 0..config.retry_limit {
        if accepted {
            break;
        }
        angles.clear();
        angles.extend((0..steps).map(|_| rng.random_range(lo..=hi)));
        angles.sort_by(|x, y| y.total_cmp(x));
        accepted = angles
            .windows(2)
            .all(|w| w[0] - w[1] >= config.min_sector && w[0] > w[1]);
    }
    if !accepted {
        log::debug!("sweep rejection budget exhausted, using even spacing");
        angles = evenly_spaced(steps, lo, hi);
    }

    let rho_base = rng.random_range(0.0..360.0);
    let step_bases = match config.base_mode {
        BaseMode::Shared => None,
        BaseMode::PerStep if steps > 0 => Some(
            std::iter::once(rho_base)
                .chain((1..steps).map(|_| rng.random_range(0.0..360.0)))
                .collect(),
        ),
        BaseMode::PerStep => None,
    };

    let recipe = MixRecipe {
        source_ids: sources,
        sweep_angles: angles,
        rho_base,
        step_bases,
        center,
    };
    recipe.validate()?;
    Ok(recipe)
}

fn evenly_spaced(steps: usize, lo: f64, hi: f64) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![(lo + hi) / 2.0],
        _ => {
            let gap = (hi - lo) / (steps - 1) as f64;
            (0..steps).map(|k| hi - k as f64 * gap).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn constant(h: u32, w: u32, v: u8, label: Label) -> LabeledImage {
        LabeledImage::new(RgbImage::from_pixel(w, h, Rgb([v, v, v])), label)
    }

    fn recipe(n: usize, angles: Vec<f64>, base: f64, center: FaceCenter) -> MixRecipe {
        MixRecipe {
            source_ids: (0..n).map(|k| format!("s{k}")).collect(),
            sweep_angles: angles,
            rho_base: base,
            step_bases: None,
            center,
        }
    }

    // Brute-force provenance: fraction of output pixels equal to each source's constant.
    fn provenance(out: &RgbImage, values: &[u8]) -> Vec<f64> {
        let total = (out.width() * out.height()) as f64;
        values
            .iter()
            .map(|&v| out.pixels().filter(|p| p.0 == [v, v, v]).count() as f64 / total)
            .collect()
    }

    #[test]
    fn label_values() {
        use Label::*;
        assert_eq!(mix_label_hard(&[Real, Real]).unwrap(), Real);
        assert_eq!(mix_label_hard(&[Real, Fake]).unwrap(), Fake);
        assert_eq!(mix_label_hard(&[Fake, Fake]).unwrap(), Fake);
        assert_eq!(mix_label_hard(&[Real, Fake, Real]).unwrap(), Fake);
        assert!(mix_label_hard(&[]).is_err());
        assert!(Label::try_from(2).is_err());
    }

    #[test]
    fn soft_label_values() {
        assert!((mix_label_soft(1.0, 0.0, 0.7).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(mix_label_soft(1.0, 0.0, 1.0).unwrap(), 1.0);
        assert_eq!(mix_label_soft(1.0, 1.0, 0.3).unwrap(), 1.0);
        assert!(mix_label_soft(1.0, 0.0, 1.1).is_err());
        assert!(mix_label_soft(1.0, 0.0, -0.1).is_err());
    }

    #[test]
    fn pair_mean_matches_area() {
        let a = constant(101, 101, 10, Label::Real);
        let b = constant(101, 101, 20, Label::Fake);
        let out = clockmix_pair(&a, &b, 90.0, 0.0, FaceCenter::new(50, 50)).unwrap();
        let mean: f64 = out.pixels.as_raw().iter().map(|&v| v as f64).sum::<f64>()
            / out.pixels.as_raw().len() as f64;
        assert!((12.3..=12.7).contains(&mean), "{mean}");
        assert_eq!(out.label, Label::Fake);
    }

    #[test]
    fn pair_of_identical_images_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut img = RgbImage::new(33, 17);
        for p in img.pixels_mut() {
            *p = Rgb([rng.random(), rng.random(), rng.random()]);
        }
        let a = LabeledImage::new(img, Label::Real);
        let out = clockmix_pair(&a, &a, 200.0, 13.0, FaceCenter::new(5, 9)).unwrap();
        assert_eq!(out.pixels, a.pixels);
    }

    #[test]
    fn pair_rejects_mismatched_dims() {
        let a = constant(10, 10, 1, Label::Real);
        let b = constant(10, 11, 2, Label::Real);
        let err = clockmix_pair(&a, &b, 90.0, 0.0, FaceCenter::new(5, 5)).unwrap_err();
        assert_eq!(err.category(), "domain");
    }

    #[test]
    fn three_way_thirds() {
        let vals = [10u8, 20, 30];
        let imgs: Vec<_> = vals
            .iter()
            .map(|&v| constant(256, 256, v, Label::Real))
            .collect();
        let r = recipe(3, vec![240.0, 120.0], 77.0, FaceCenter::new(128, 128));
        let out = clockmix_n(&imgs, &r).unwrap();
        let fr = provenance(&out.pixels, &vals);
        for f in &fr {
            assert!((f - 1.0 / 3.0).abs() <= 0.02, "{fr:?}");
        }
        assert!((fr.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn four_way_quarters() {
        let vals = [10u8, 20, 30, 40];
        let imgs: Vec<_> = vals
            .iter()
            .map(|&v| constant(256, 256, v, Label::Real))
            .collect();
        let r = recipe(4, vec![270.0, 180.0, 90.0], 0.0, FaceCenter::new(128, 128));
        let out = clockmix_n(&imgs, &r).unwrap();
        for f in provenance(&out.pixels, &vals) {
            assert!((f - 0.25).abs() <= 0.02, "{f}");
        }
    }

    #[test]
    fn single_source_is_unchanged() {
        let img = constant(8, 8, 5, Label::Fake);
        let r = recipe(1, vec![], 10.0, FaceCenter::new(4, 4));
        assert_eq!(clockmix_n(std::slice::from_ref(&img), &r).unwrap(), img);
    }

    #[test]
    fn recipe_validation() {
        let imgs: Vec<_> = (0..3).map(|v| constant(8, 8, v, Label::Real)).collect();
        let c = FaceCenter::new(4, 4);
        assert!(clockmix_n(&imgs, &recipe(3, vec![100.0, 120.0], 0.0, c)).is_err());
        assert!(clockmix_n(&imgs, &recipe(3, vec![100.0], 0.0, c)).is_err());
        assert!(clockmix_n(&imgs[..2], &recipe(3, vec![200.0, 100.0], 0.0, c)).is_err());
        assert!(clockmix_n(&imgs, &recipe(3, vec![200.0, 100.0], 360.0, c)).is_err());
        assert!(clockmix_n(&imgs, &recipe(3, vec![200.0, 100.0], 0.0, c)).is_ok());
    }

    #[test]
    fn soft_mode_interpolates_by_area() {
        let a = constant(101, 101, 0, Label::Fake);
        let b = constant(101, 101, 1, Label::Real);
        let r = recipe(2, vec![90.0], 0.0, FaceCenter::new(50, 50));
        let out = clockmix_n_with_mode(&[a, b], &r, LabelMode::Soft).unwrap();
        let kept = out.pixels.pixels().filter(|p| p.0[0] == 0).count() as f64 / (101.0 * 101.0);
        assert!((out.soft_label.unwrap() - kept).abs() < 1e-12);
        assert_eq!(out.label, Label::Fake);
    }

    #[test]
    fn per_step_bases_are_used() {
        let vals = [10u8, 20, 30];
        let imgs: Vec<_> = vals
            .iter()
            .map(|&v| constant(64, 64, v, Label::Real))
            .collect();
        let mut r = recipe(3, vec![200.0, 100.0], 0.0, FaceCenter::new(32, 32));
        let shared = clockmix_n(&imgs, &r).unwrap();
        r.step_bases = Some(vec![0.0, 180.0]);
        let split = clockmix_n(&imgs, &r).unwrap();
        assert_ne!(shared.pixels, split.pixels);
        r.step_bases = Some(vec![0.0, 0.0]);
        assert_eq!(clockmix_n(&imgs, &r).unwrap().pixels, shared.pixels);
    }

    #[test]
    fn sample_recipe_properties() {
        let cfg = AugConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c = FaceCenter::new(128, 128);
        for k in 0..10_000 {
            let n = 1 + k % 4;
            let ids = (0..n).map(|i| i.to_string()).collect();
            let r = sample_recipe(&mut rng, ids, c, &cfg).unwrap();
            assert_eq!(r.sweep_angles.len(), n - 1);
            assert!(r.sweep_angles.iter().all(|a| (45.0..=315.0).contains(a)));
            assert!(r.sweep_angles.windows(2).all(|w| w[0] - w[1] >= 30.0));
            assert!((0.0..360.0).contains(&r.rho_base));
        }
    }

    #[test]
    fn sample_recipe_is_deterministic() {
        let cfg = AugConfig::default();
        let ids = || vec!["a".to_string(), "b".into(), "c".into()];
        let c = FaceCenter::new(1, 1);
        let r1 = sample_recipe(&mut ChaCha8Rng::seed_from_u64(5), ids(), c, &cfg).unwrap();
        let r2 = sample_recipe(&mut ChaCha8Rng::seed_from_u64(5), ids(), c, &cfg).unwrap();
        assert_eq!(r1, r2);
        let r0 =
            sample_recipe(&mut ChaCha8Rng::seed_from_u64(5), vec!["a".into()], c, &cfg).unwrap();
        assert!(r0.sweep_angles.is_empty());
    }

    #[test]
    fn sample_recipe_falls_back_to_even_spacing() {
        let cfg = AugConfig {
            angle_min: 100.0,
            angle_max: 160.0,
            retry_limit: 1,
            ..Default::default()
        };
        let ids: Vec<String> = (0..4).map(|i| i.to_string()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut saw_fallback = false;
        for _ in 0..200 {
            let r = sample_recipe(&mut rng, ids.clone(), FaceCenter::new(0, 0), &cfg).unwrap();
            assert!(r.sweep_angles.windows(2).all(|w| w[0] - w[1] >= 30.0));
            saw_fallback |= r.sweep_angles == vec![160.0, 130.0, 100.0];
        }
        assert!(saw_fallback);
    }

    #[test]
    fn recipe_json_field_names() {
        let r = recipe(2, vec![100.0], 12.5, FaceCenter::new(3, 4));
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["angles"], serde_json::json!([100.0]));
        assert_eq!(v["base"], serde_json::json!(12.5));
        assert_eq!(v["sources"], serde_json::json!(["s0", "s1"]));
        assert_eq!(v["center"], serde_json::json!([3, 4]));
        let back: MixRecipe = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }
}
