//! Manifest ingestion, per-sample random streams, batch augmentation and
//! dataset emission.
//!
//! Every sample draws from its own stream keyed by `(seed, id)`, so outputs do
//! not depend on batch scheduling or thread count.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::advscm::{self, ReferenceScorer, ShuffleViews};
use crate::clockmix::{self, Label, LabeledImage, MixRecipe};
use crate::config::{AugConfig, LabelMode};
use crate::error::{Error, Result};
use crate::geometry::FaceCenter;
use crate::shuffle::{self, GridPermutation};

/// Name of the JSONL manifest written next to the emitted images.
pub const MANIFEST_NAME: &str = "manifest.jsonl";
pub const IMAGE_DIR: &str = "images";

/// One line of an input manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub path: PathBuf,
    pub label: Label,
    /// Face center in source-image pixels; the image center when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<FaceCenter>,
}

/// Read a JSONL manifest. Blank lines are ignored; relative paths are resolved
/// against the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut seen = HashMap::new();
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: ManifestRecord = serde_json::from_str(line)
            .map_err(|e| Error::data(format!("{}:{lineno}: {e}", path.display())))?;
        if rec.id.is_empty() {
            return Err(Error::data(format!(
                "{}:{lineno}: empty id",
                path.display()
            )));
        }
        if let Some(first) = seen.insert(rec.id.clone(), lineno) {
            return Err(Error::data(format!(
                "{}:{lineno}: duplicate id `{}` (first on line {first})",
                path.display(),
                rec.id
            )));
        }
        if rec.path.is_relative() {
            rec.path = base.join(&rec.path);
        }
        records.push(rec);
    }
    Ok(records)
}

/// Stable 64-bit key of `(seed, sample_id)`: the first 8 bytes of
/// SHA-256 over the little-endian seed followed by the id bytes.
pub fn stream_key(seed: u64, sample_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(sample_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn derive_stream(seed: u64, sample_id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_key(seed, sample_id))
}

/// A manifest entry after decoding and resizing.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceImage {
    pub id: String,
    pub image: LabeledImage,
    /// Face center in resized pixels.
    pub center: FaceCenter,
}

/// Decode `record` and resize it (bilinear) to `size x size`.
pub fn load_source(record: &ManifestRecord, size: u32) -> Result<SourceImage> {
    let decoded = image::open(&record.path).map_err(|source| Error::Image {
        path: record.path.clone(),
        source,
    })?;
    let rgb = decoded.to_rgb8();
    let (w, h) = rgb.dimensions();
    let center = match record.center {
        None => FaceCenter::new(size / 2, size / 2),
        Some(c) => {
            if c.x >= w || c.y >= h {
                return Err(Error::data(format!(
                    "{}: center ({}, {}) outside {w}x{h} image",
                    record.id, c.x, c.y
                )));
            }
            let scale = |v: u32, extent: u32| ((v as u64 * size as u64) / extent as u64) as u32;
            FaceCenter::new(scale(c.x, w).min(size - 1), scale(c.y, h).min(size - 1))
        }
    };
    let pixels = if (w, h) == (size, size) {
        rgb
    } else {
        image::imageops::resize(&rgb, size, size, FilterType::Triangle)
    };
    Ok(SourceImage {
        id: record.id.clone(),
        image: LabeledImage::new(pixels, record.label),
        center,
    })
}

/// Source ids and labels a sample was built from, anchor first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub sources: Vec<String>,
    pub labels: Vec<Label>,
}

#[derive(Debug, Clone)]
pub struct AugmentedSample {
    pub id: String,
    pub image: LabeledImage,
    pub center: FaceCenter,
    pub provenance: Provenance,
    /// `None` for pass-through samples.
    pub recipe: Option<MixRecipe>,
    pub views: Option<ShuffleViews>,
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub samples: Vec<AugmentedSample>,
    /// Ids of records that could not be loaded.
    pub skipped: Vec<String>,
}

/// Batch augmenter bound to one validated config.
#[derive(Debug, Clone)]
pub struct Augmenter {
    config: AugConfig,
    scorer: Option<ReferenceScorer>,
}

impl Augmenter {
    /// Initial scale of the scorer that picks the adversarial shuffle view.
    pub const VIEW_SCORER_SCALE: f64 = 0.05;

    pub fn new(config: AugConfig) -> Result<Self> {
        config.validate()?;
        let scorer = if config.shuffle_views {
            Some(ReferenceScorer::new(
                &config.granularities,
                config.seed,
                Self::VIEW_SCORER_SCALE,
            )?)
        } else {
            None
        };
        Ok(Self { config, scorer })
    }

    pub fn config(&self) -> &AugConfig {
        &self.config
    }

    /// Load the batch (in parallel), skipping unreadable records, then augment.
    pub fn augment_batch(&self, records: &[ManifestRecord]) -> Result<BatchOutput> {
        if records.is_empty() {
            return Ok(BatchOutput {
                samples: Vec::new(),
                skipped: Vec::new(),
            });
        }
        let loaded: Vec<Result<SourceImage>> = records
            .par_iter()
            .map(|r| load_source(r, self.config.image_size))
            .collect();
        let mut sources = Vec::with_capacity(records.len());
        let mut skipped = Vec::new();
        for (record, res) in records.iter().zip(loaded) {
            match res {
                Ok(s) => sources.push(s),
                Err(e) => {
                    log::warn!("skipping `{}`: {e}", record.id);
                    skipped.push(record.id.clone());
                }
            }
        }
        if sources.is_empty() {
            return Err(Error::data(format!(
                "none of the {} images in the batch could be loaded",
                records.len()
            )));
        }
        Ok(BatchOutput {
            samples: self.augment_sources(&sources)?,
            skipped,
        })
    }

    /// One output per input slot, in input order.
    pub fn augment_sources(&self, batch: &[SourceImage]) -> Result<Vec<AugmentedSample>> {
        (0..batch.len())
            .into_par_iter()
            .map(|i| self.augment_slot(batch, i))
            .collect()
    }

    fn augment_slot(&self, batch: &[SourceImage], i: usize) -> Result<AugmentedSample> {
        let cfg = &self.config;
        let anchor = &batch[i];
        let mut rng = derive_stream(cfg.seed, &anchor.id);

        let n = if rng.random_bool(cfg.p_mix) {
            let n = cfg.mix_counts[rng.random_range(0..cfg.mix_counts.len())];
            n.min(batch.len())
        } else {
            1
        };

        let (image, recipe, members) = if n > 1 {
            let partners = rand::seq::index::sample(&mut rng, batch.len() - 1, n - 1);
            let members: Vec<&SourceImage> = std::iter::once(anchor)
                .chain(
                    partners
                        .into_iter()
                        .map(|k| &batch[if k >= i { k + 1 } else { k }]),
                )
                .collect();
            let ids = members.iter().map(|m| m.id.clone()).collect();
            let recipe = clockmix::sample_recipe(&mut rng, ids, anchor.center, cfg)?;
            let images: Vec<LabeledImage> = members.iter().map(|m| m.image.clone()).collect();
            let mixed = clockmix::clockmix_n_with_mode(&images, &recipe, cfg.label_mode)?;
            (mixed, Some(recipe), members)
        } else {
            let mut image = anchor.image.clone();
            if cfg.label_mode == LabelMode::Soft {
                image.soft_label = Some(image.target());
            }
            (image, None, vec![anchor])
        };

        let views = match &self.scorer {
            Some(scorer) => Some(advscm::shuffle_views(
                scorer,
                &image.pixels,
                &mut rng,
                &cfg.granularities,
                advscm::Selection::Argmax,
            )?),
            None => None,
        };

        Ok(AugmentedSample {
            id: anchor.id.clone(),
            center: anchor.center,
            provenance: Provenance {
                sources: members.iter().map(|m| m.id.clone()).collect(),
                labels: members.iter().map(|m| m.image.label).collect(),
            },
            image,
            recipe,
            views,
        })
    }
}

pub fn augment_batch(records: &[ManifestRecord], config: &AugConfig) -> Result<BatchOutput> {
    Augmenter::new(config.clone())?.augment_batch(records)
}

/// Where the two shuffled views of a sample were written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuffleRecord {
    pub granularity: u32,
    pub random_perm: Vec<usize>,
    pub adversarial_perm: Vec<usize>,
    pub random_view: String,
    pub adversarial_view: String,
}

/// One line of an emitted manifest. Loadable again as a [`ManifestRecord`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub id: String,
    /// Relative to the output directory.
    pub path: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soft_label: Option<f64>,
    pub center: FaceCenter,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<MixRecipe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shuffle: Option<ShuffleRecord>,
}

/// Keep ids readable in file names without letting them escape the directory.
pub fn sanitize_id(id: &str) -> String {
    let s: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .take(64)
        .collect();
    if s.is_empty() {
        "_".into()
    } else {
        s
    }
}

fn save_png(image: &RgbImage, path: &Path) -> Result<()> {
    image
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// Writes images and manifest lines for successive batches.
#[derive(Debug)]
pub struct Emitter {
    out_dir: PathBuf,
    manifest_path: PathBuf,
    manifest: BufWriter<File>,
    next_index: usize,
}

impl Emitter {
    pub fn create(out_dir: &Path) -> Result<Self> {
        let images = out_dir.join(IMAGE_DIR);
        std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
        let manifest_path = out_dir.join(MANIFEST_NAME);
        let file = File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        Ok(Self {
            out_dir: out_dir.to_path_buf(),
            manifest_path,
            manifest: BufWriter::new(file),
            next_index: 0,
        })
    }

    pub fn write(&mut self, samples: &[AugmentedSample]) -> Result<Vec<OutputRecord>> {
        let start = self.next_index;
        let records: Vec<OutputRecord> = samples
            .par_iter()
            .enumerate()
            .map(|(k, s)| self.write_images(start + k, s))
            .collect::<Result<_>>()?;
        for r in &records {
            let line = serde_json::to_string(r).map_err(|e| Error::data(e.to_string()))?;
            writeln!(self.manifest, "{line}").map_err(|e| Error::io(&self.manifest_path, e))?;
        }
        self.next_index += samples.len();
        Ok(records)
    }

    fn write_images(&self, index: usize, s: &AugmentedSample) -> Result<OutputRecord> {
        let stem = format!("{index:06}_{}", sanitize_id(&s.id));
        let rel = format!("{IMAGE_DIR}/{stem}.png");
        save_png(&s.image.pixels, &self.out_dir.join(&rel))?;
        let shuffle = match &s.views {
            Some(v) => {
                let random_view = format!("{IMAGE_DIR}/{stem}_s1.png");
                let adversarial_view = format!("{IMAGE_DIR}/{stem}_s2.png");
                save_png(&v.random_view, &self.out_dir.join(&random_view))?;
                save_png(&v.adversarial_view, &self.out_dir.join(&adversarial_view))?;
                Some(ShuffleRecord {
                    granularity: v.granularity,
                    random_perm: v.random_perm.mapping().to_vec(),
                    adversarial_perm: v.adversarial_perm.mapping().to_vec(),
                    random_view,
                    adversarial_view,
                })
            }
            None => None,
        };
        Ok(OutputRecord {
            id: s.id.clone(),
            path: rel,
            label: s.image.label,
            soft_label: s.image.soft_label,
            center: s.center,
            provenance: s.provenance.clone(),
            recipe: s.recipe.clone(),
            shuffle,
        })
    }

    /// Flush the manifest and return its path.
    pub fn finish(mut self) -> Result<PathBuf> {
        self.manifest
            .flush()
            .map_err(|e| Error::io(&self.manifest_path, e))?;
        Ok(self.manifest_path)
    }
}

/// Write `samples` under `config.output_dir`; returns the manifest path.
pub fn emit_outputs(samples: &[AugmentedSample], config: &AugConfig) -> Result<PathBuf> {
    let out = config
        .output_dir
        .as_deref()
        .ok_or_else(|| Error::config("no output directory configured"))?;
    let mut emitter = Emitter::create(out)?;
    emitter.write(samples)?;
    emitter.finish()
}

pub fn load_output_manifest(path: &Path) -> Result<Vec<OutputRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Rebuild an emitted sample from its sources and recorded recipe.
pub fn replay(
    record: &OutputRecord,
    sources: &HashMap<String, SourceImage>,
    mode: LabelMode,
) -> Result<LabeledImage> {
    let get = |id: &str| {
        sources
            .get(id)
            .ok_or_else(|| Error::data(format!("replay: unknown source `{id}`")))
    };
    match &record.recipe {
        None => {
            let mut image = get(&record.id)?.image.clone();
            if mode == LabelMode::Soft {
                image.soft_label = Some(image.target());
            }
            Ok(image)
        }
        Some(recipe) => {
            let images = recipe
                .source_ids
                .iter()
                .map(|id| get(id).map(|s| s.image.clone()))
                .collect::<Result<Vec<_>>>()?;
            clockmix::clockmix_n_with_mode(&images, recipe, mode)
        }
    }
}

/// Counts reported after a full augmentation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentSummary {
    pub written: usize,
    pub skipped: usize,
    pub real: usize,
    pub fake: usize,
    pub mixed: usize,
    pub manifest: PathBuf,
}

/// Augment a whole manifest in `batch_size` chunks and emit the result into `out_dir`.
pub fn run_augment(
    records: &[ManifestRecord],
    config: &AugConfig,
    out_dir: &Path,
) -> Result<AugmentSummary> {
    let augmenter = Augmenter::new(config.clone())?;
    let mut emitter = Emitter::create(out_dir)?;
    let (mut written, mut skipped, mut fake, mut mixed) = (0, 0, 0, 0);
    let mut failures = 0usize;
    for chunk in records.chunks(config.batch_size) {
        let batch = match augmenter.augment_batch(chunk) {
            Ok(b) => b,
            Err(e @ Error::Data(_)) if records.len() > chunk.len() => {
                log::warn!("{e}");
                failures += 1;
                skipped += chunk.len();
                continue;
            }
            Err(e) => return Err(e),
        };
        emitter.write(&batch.samples)?;
        written += batch.samples.len();
        skipped += batch.skipped.len();
        fake += batch
            .samples
            .iter()
            .filter(|s| s.image.label == Label::Fake)
            .count();
        mixed += batch.samples.iter().filter(|s| s.recipe.is_some()).count();
    }
    if written == 0 && !records.is_empty() {
        return Err(Error::data(format!(
            "no images could be loaded ({failures} batches failed)"
        )));
    }
    Ok(AugmentSummary {
        written,
        skipped,
        real: written - fake,
        fake,
        mixed,
        manifest: emitter.finish()?,
    })
}

/// One line of the manifest written by [`run_shuffle`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShuffledRecord {
    pub id: String,
    pub path: String,
    pub label: Label,
    pub permutation: GridPermutation,
}

/// Shuffle every record once at a granularity drawn from `config.granularities`.
pub fn run_shuffle(
    records: &[ManifestRecord],
    config: &AugConfig,
    out_dir: &Path,
) -> Result<PathBuf> {
    config.validate()?;
    let images = out_dir.join(IMAGE_DIR);
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let results: Vec<Option<ShuffledRecord>> = records
        .par_iter()
        .enumerate()
        .map(|(index, r)| {
            let src = match load_source(r, config.image_size) {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("skipping `{}`: {e}", r.id);
                    return Ok(None);
                }
            };
            let mut rng = derive_stream(config.seed, &r.id);
            let (view, permutation) =
                shuffle::random_shuffle(&mut rng, &src.image.pixels, &config.granularities)?;
            let rel = format!("{IMAGE_DIR}/{index:06}_{}.png", sanitize_id(&r.id));
            save_png(&view, &out_dir.join(&rel))?;
            Ok(Some(ShuffledRecord {
                id: r.id.clone(),
                path: rel,
                label: r.label,
                permutation,
            }))
        })
        .collect::<Result<_>>()?;
    let written: Vec<ShuffledRecord> = results.into_iter().flatten().collect();
    if written.is_empty() && !records.is_empty() {
        return Err(Error::data("none of the images could be loaded"));
    }
    let path = out_dir.join(MANIFEST_NAME);
    let mut text = String::new();
    for r in &written {
        text.push_str(&serde_json::to_string(r).map_err(|e| Error::data(e.to_string()))?);
        text.push('\n');
    }
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use std::collections::HashSet;

    fn write_manifest(dir: &Path, lines: &[&str]) -> PathBuf {
        let p = dir.join("m.jsonl");
        std::fs::write(&p, lines.join("\n")).unwrap();
        p
    }

    fn solid(size: u32, v: u8) -> RgbImage {
        RgbImage::from_pixel(size, size, Rgb([v, v / 2, 255 - v]))
    }

    fn sources(labels: &[Label], size: u32) -> Vec<SourceImage> {
        labels
            .iter()
            .enumerate()
            .map(|(k, &l)| SourceImage {
                id: format!("s{k}"),
                image: LabeledImage::new(solid(size, (k * 37 % 256) as u8), l),
                center: FaceCenter::new(size / 2, size / 2),
            })
            .collect()
    }

    #[test]
    fn manifest_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_manifest(
            dir.path(),
            &[
                r#"{"id": "a", "path": "a.png", "label": 0}"#,
                "",
                r#"{"id": "b", "path": "/x/b.png", "label": 1, "center": [3, 4]}"#,
            ],
        );
        let recs = load_manifest(&p).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].path, dir.path().join("a.png"));
        assert_eq!(recs[1].center, Some(FaceCenter::new(3, 4)));

        let p = write_manifest(
            dir.path(),
            &[
                r#"{"id": "a", "path": "a.png", "label": 0}"#,
                r#"{"id": "b", "path": "b.png", "label": 2}"#,
            ],
        );
        let err = load_manifest(&p).unwrap_err();
        assert_eq!(err.category(), "data");
        assert!(err.to_string().contains(":2:"), "{err}");

        let p = write_manifest(
            dir.path(),
            &[
                r#"{"id": "a", "path": "a.png", "label": 0}"#,
                r#"{"id": "a", "path": "b.png", "label": 1}"#,
            ],
        );
        assert!(load_manifest(&p)
            .unwrap_err()
            .to_string()
            .contains("duplicate"));

        let p = write_manifest(dir.path(), &[]);
        assert!(load_manifest(&p).unwrap().is_empty());

        let err = load_manifest(&dir.path().join("missing.jsonl")).unwrap_err();
        assert_eq!(err.category(), "io");
    }

    #[test]
    fn streams() {
        let a: Vec<u64> = (0..100)
            .map({
                let mut r = derive_stream(7, "x");
                move |_| r.random()
            })
            .collect();
        let b: Vec<u64> = (0..100)
            .map({
                let mut r = derive_stream(7, "x");
                move |_| r.random()
            })
            .collect();
        assert_eq!(a, b);
        assert_ne!(stream_key(7, "x"), stream_key(8, "x"));
        assert_ne!(stream_key(7, "x"), stream_key(7, "y"));
    }

    #[test]
    fn stream_keys_do_not_collide() {
        let keys: HashSet<u64> = (0..10_000)
            .map(|k| stream_key(1, &format!("img{k}")))
            .collect();
        assert_eq!(keys.len(), 10_000);
    }

    #[test]
    fn pass_through_and_all_real() {
        let cfg = AugConfig {
            p_mix: 0.0,
            image_size: 16,
            ..Default::default()
        };
        let batch = sources(&[Label::Real, Label::Fake, Label::Real], 16);
        let out = Augmenter::new(cfg.clone())
            .unwrap()
            .augment_sources(&batch)
            .unwrap();
        for (o, s) in out.iter().zip(&batch) {
            assert_eq!(o.image, s.image);
            assert!(o.recipe.is_none());
        }

        let cfg = AugConfig { p_mix: 1.0, ..cfg };
        let batch = sources(&[Label::Real; 6], 16);
        let out = Augmenter::new(cfg)
            .unwrap()
            .augment_sources(&batch)
            .unwrap();
        assert!(out.iter().all(|o| o.image.label == Label::Real));
    }

    #[test]
    fn hard_labels_follow_provenance() {
        let cfg = AugConfig {
            p_mix: 1.0,
            image_size: 16,
            seed: 3,
            ..Default::default()
        };
        let labels: Vec<Label> = (0..32)
            .map(|k| if k % 2 == 0 { Label::Fake } else { Label::Real })
            .collect();
        let batch = sources(&labels, 16);
        let out = Augmenter::new(cfg)
            .unwrap()
            .augment_sources(&batch)
            .unwrap();
        let mut fakes = 0;
        for o in &out {
            assert_eq!(
                o.image.label,
                clockmix::mix_label_hard(&o.provenance.labels).unwrap()
            );
            assert_eq!(o.provenance.sources[0], o.id);
            let unique: HashSet<_> = o.provenance.sources.iter().collect();
            assert_eq!(unique.len(), o.provenance.sources.len());
            fakes += (o.image.label == Label::Fake) as usize;
        }
        assert!(fakes >= 16);
    }

    #[test]
    fn unreadable_images_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        solid(20, 9).save(dir.path().join("ok.png")).unwrap();
        let recs = vec![
            ManifestRecord {
                id: "ok".into(),
                path: dir.path().join("ok.png"),
                label: Label::Real,
                center: None,
            },
            ManifestRecord {
                id: "gone".into(),
                path: dir.path().join("gone.png"),
                label: Label::Fake,
                center: None,
            },
        ];
        let cfg = AugConfig {
            image_size: 16,
            ..Default::default()
        };
        let out = augment_batch(&recs, &cfg).unwrap();
        assert_eq!(out.samples.len(), 1);
        assert_eq!(out.skipped, vec!["gone".to_string()]);
        assert_eq!(out.samples[0].image.pixels.dimensions(), (16, 16));
        assert_eq!(
            augment_batch(&recs[1..], &cfg).unwrap_err().category(),
            "data"
        );
    }

    #[test]
    fn centers_scale_with_resize() {
        let dir = tempfile::tempdir().unwrap();
        RgbImage::new(40, 20)
            .save(dir.path().join("r.png"))
            .unwrap();
        let mut rec = ManifestRecord {
            id: "r".into(),
            path: dir.path().join("r.png"),
            label: Label::Real,
            center: Some(FaceCenter::new(30, 5)),
        };
        assert_eq!(
            load_source(&rec, 16).unwrap().center,
            FaceCenter::new(12, 4)
        );
        rec.center = Some(FaceCenter::new(40, 0));
        assert_eq!(load_source(&rec, 16).unwrap_err().category(), "data");
    }

    #[test]
    fn sanitized_names() {
        assert_eq!(sanitize_id("a/b\\..c d"), "a_b___c_d");
        assert_eq!(sanitize_id(""), "_");
    }
}
