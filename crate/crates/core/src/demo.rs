//! Toy end-to-end run of the adversarial consistency loop.
//!
//! A frozen [`ReferenceExtractor`] and a trainable [`ReferenceScorer`] play
//! against each other on a small synthetic batch. A round is one mini-batch of
//! `batch_size` samples followed by one scorer update. Every sample also
//! measures the distance a uniformly random permutation of the same granularity
//! would have produced, so the adversary can be compared against chance.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::advscm::{
    advscm_round, feature_distance, AdvTrainer, FeatureExtractor, ReferenceExtractor,
    ReferenceScorer, Selection,
};
use crate::error::{Error, Result};
use crate::shuffle;

#[derive(Debug, Clone, PartialEq)]
pub struct DemoConfig {
    pub seed: u64,
    pub seeds: usize,
    pub rounds: usize,
    pub granularities: Vec<u32>,
    pub epsilon: f64,
    pub batch_size: usize,
    pub image_size: u32,
    pub batch_images: usize,
    pub init_scale: f64,
    /// Assignment rule while training; evaluation always takes the argmax.
    pub selection: Selection,
    pub baseline: bool,
    pub eval_rounds: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            seeds: 1,
            rounds: 200,
            granularities: vec![2],
            epsilon: 1.0,
            batch_size: 32,
            image_size: 32,
            batch_images: 1,
            init_scale: 0.0,
            selection: Selection::Argmax,
            baseline: true,
            eval_rounds: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Eval => "eval",
        }
    }
}

/// One CSV row of the demo: means over the round's samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoRow {
    pub phase: Phase,
    pub seed: u64,
    pub round: usize,
    pub d_adv: f64,
    pub d_random: f64,
    pub p: f64,
    pub log_p: f64,
    pub grad_norm: f64,
}

impl DemoRow {
    pub const HEADER: &'static str = "phase,seed,round,d_adv,d_random,p,log_p,grad_norm";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{:.9},{:.9},{:.9},{:.9},{:.9}",
            self.phase.as_str(),
            self.seed,
            self.round,
            self.d_adv,
            self.d_random,
            self.p,
            self.log_p,
            self.grad_norm
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedSummary {
    pub seed: u64,
    pub adv_mean: f64,
    pub random_mean: f64,
}

impl SeedSummary {
    pub fn adversary_wins(&self) -> bool {
        self.adv_mean > self.random_mean
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoSummary {
    pub seeds: Vec<SeedSummary>,
}

impl DemoSummary {
    pub fn wins(&self) -> usize {
        self.seeds.iter().filter(|s| s.adversary_wins()).count()
    }

    fn mean(&self, f: impl Fn(&SeedSummary) -> f64) -> f64 {
        if self.seeds.is_empty() {
            return 0.0;
        }
        self.seeds.iter().map(f).sum::<f64>() / self.seeds.len() as f64
    }

    pub fn adv_mean(&self) -> f64 {
        self.mean(|s| s.adv_mean)
    }

    pub fn random_mean(&self) -> f64 {
        self.mean(|s| s.random_mean)
    }

    pub fn report_line(&self) -> String {
        format!(
            "# adversarial_mean_d={:.6} random_mean_d={:.6} adversary_wins={}/{}",
            self.adv_mean(),
            self.random_mean(),
            self.wins(),
            self.seeds.len()
        )
    }
}

/// Synthetic face-like crops: a tinted background with a few soft blobs.
pub fn toy_images(size: u32, count: usize, seed: u64) -> Vec<RgbImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let bg: [f64; 3] = [rng.random(), rng.random(), rng.random()];
            let blobs: Vec<(f64, f64, f64, [f64; 3])> = (0..3)
                .map(|_| {
                    (
                        rng.random_range(0.0..size as f64),
                        rng.random_range(0.0..size as f64),
                        rng.random_range(0.1..0.4) * size as f64,
                        [rng.random(), rng.random(), rng.random()],
                    )
                })
                .collect();
            RgbImage::from_fn(size, size, |x, y| {
                let mut c = bg;
                for &(bx, by, r, color) in &blobs {
                    let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                    let w = (-d2 / (2.0 * r * r)).exp();
                    for k in 0..3 {
                        c[k] = c[k] * (1.0 - w) + color[k] * w;
                    }
                }
                Rgb(c.map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8))
            })
        })
        .collect()
}

fn validate(cfg: &DemoConfig) -> Result<()> {
    if cfg.granularities.is_empty()
        || cfg
            .granularities
            .iter()
            .any(|g| *g == 0 || !cfg.image_size.is_multiple_of(*g))
    {
        return Err(Error::config(format!(
            "granularities {:?} must divide image size {}",
            cfg.granularities, cfg.image_size
        )));
    }
    if cfg.image_size < 8 {
        return Err(Error::config("demo image size must be at least 8"));
    }
    if cfg.batch_images == 0 || cfg.batch_size == 0 {
        return Err(Error::config("batch sizes must be >= 1"));
    }
    if !(cfg.epsilon > 0.0) {
        return Err(Error::config("epsilon must be positive"));
    }
    Ok(())
}

/// Train for `cfg.rounds` rounds, then score the frozen adversary over
/// `cfg.eval_rounds` rounds against paired random permutations.
///
/// Uses `images` when given, otherwise a toy batch derived from `seed`.
pub fn run_seed(
    cfg: &DemoConfig,
    seed: u64,
    images: Option<&[RgbImage]>,
) -> Result<(SeedSummary, Vec<DemoRow>)> {
    validate(cfg)?;
    let toy;
    let images = match images {
        Some(imgs) if !imgs.is_empty() => imgs,
        Some(_) => return Err(Error::data("no images for the demo")),
        None => {
            toy = toy_images(cfg.image_size, cfg.batch_images, seed);
            &toy[..]
        }
    };
    let (w, h) = images[0].dimensions();
    let extractor = ReferenceExtractor::new(w, h, seed ^ 0x5eed_e47a)?;
    let mut scorer = ReferenceScorer::new(&cfg.granularities, seed ^ 0x5c0_4e5, cfg.init_scale)?;
    let mut trainer = AdvTrainer::new(cfg.epsilon, cfg.batch_size, cfg.granularities.clone())?
        .with_selection(cfg.selection)
        .with_baseline(cfg.baseline);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(cfg.rounds + cfg.eval_rounds);

    let random_distance =
        |rng: &mut ChaCha8Rng, image: &RgbImage, view: &RgbImage, g: u32| -> Result<f64> {
            let baseline = shuffle::random_permutation(rng, g)?;
            let baseline_view = shuffle::apply_permutation(image, &baseline)?;
            feature_distance(
                &extractor.extract(view)?,
                &extractor.extract(&baseline_view)?,
            )
        };
    let k = cfg.batch_size;
    let mean = |v: f64| v / k as f64;

    for round in 0..cfg.rounds {
        let (mut d_adv, mut d_random, mut p, mut log_p, mut grad_norm) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for s in 0..k {
            let image = &images[(round * k + s) % images.len()];
            let (out, report) = trainer.step(&extractor, &mut scorer, image, &mut rng)?;
            d_random += random_distance(&mut rng, image, &out.random_view, out.granularity)?;
            d_adv += report.distance;
            p += report.p;
            log_p += report.log_p;
            grad_norm = report.grad_norm;
        }
        rows.push(DemoRow {
            phase: Phase::Train,
            seed,
            round,
            d_adv: mean(d_adv),
            d_random: mean(d_random),
            p: mean(p),
            log_p: mean(log_p),
            grad_norm,
        });
    }

    let (mut adv_sum, mut rand_sum) = (0.0, 0.0);
    for round in 0..cfg.eval_rounds {
        let (mut d_adv, mut d_random, mut p, mut log_p) = (0.0, 0.0, 0.0, 0.0);
        for s in 0..k {
            let image = &images[(round * k + s) % images.len()];
            let out = advscm_round(
                &extractor,
                &scorer,
                image,
                &mut rng,
                &cfg.granularities,
                Selection::Argmax,
            )?;
            d_random += random_distance(&mut rng, image, &out.random_view, out.granularity)?;
            d_adv += out.distance;
            p += out.p;
            log_p += out.log_p;
        }
        adv_sum += d_adv;
        rand_sum += d_random;
        rows.push(DemoRow {
            phase: Phase::Eval,
            seed,
            round,
            d_adv: mean(d_adv),
            d_random: mean(d_random),
            p: mean(p),
            log_p: mean(log_p),
            grad_norm: 0.0,
        });
    }
    let n = (cfg.eval_rounds * k).max(1) as f64;
    let summary = SeedSummary {
        seed,
        adv_mean: adv_sum / n,
        random_mean: rand_sum / n,
    };
    Ok((summary, rows))
}

/// Run `cfg.seeds` independent seeds `cfg.seed, cfg.seed + 1, ...` in parallel.
/// Rows come back grouped by seed, in seed order.
pub fn run(cfg: &DemoConfig, images: Option<&[RgbImage]>) -> Result<(DemoSummary, Vec<DemoRow>)> {
    let per_seed = (0..cfg.seeds as u64)
        .into_par_iter()
        .map(|k| run_seed(cfg, cfg.seed.wrapping_add(k), images))
        .collect::<Result<Vec<_>>>()?;
    let mut seeds = Vec::with_capacity(per_seed.len());
    let mut rows = Vec::new();
    for (s, r) in per_seed {
        seeds.push(s);
        rows.extend(r);
    }
    Ok((DemoSummary { seeds }, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_seed_is_reproducible() {
        let cfg = DemoConfig {
            rounds: 12,
            eval_rounds: 4,
            seeds: 2,
            batch_size: 4,
            image_size: 16,
            ..Default::default()
        };
        let (a, rows_a) = run(&cfg, None).unwrap();
        let (b, rows_b) = run(&cfg, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(rows_a, rows_b);
        assert_eq!(rows_a.len(), 2 * 16);
        assert!(rows_a
            .iter()
            .filter(|r| r.phase == Phase::Train)
            .all(|r| r.grad_norm > 0.0));
        assert!(rows_a
            .iter()
            .filter(|r| r.phase == Phase::Eval)
            .all(|r| r.grad_norm == 0.0));
        assert!(a
            .report_line()
            .ends_with(&format!("adversary_wins={}/2", a.wins())));
    }

    #[test]
    fn rejects_bad_settings() {
        let cfg = DemoConfig {
            granularities: vec![3],
            ..Default::default()
        };
        assert_eq!(run(&cfg, None).unwrap_err().category(), "config");
    }
}
