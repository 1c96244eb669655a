use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How training targets are assigned to mixed images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Fake if any source is fake.
    #[default]
    Hard,
    /// Area-weighted interpolation of the source targets.
    Soft,
}

impl std::str::FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(LabelMode::Hard),
            "soft" => Ok(LabelMode::Soft),
            other => Err(Error::config(format!(
                "label mode must be `hard` or `soft`, got `{other}`"
            ))),
        }
    }
}

/// Whether every fold step of an n-way mix reuses one base ray.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BaseMode {
    #[default]
    Shared,
    PerStep,
}

/// Augmentation settings. Loaded from TOML; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugConfig {
    pub seed: u64,
    /// Allowed numbers of images per mix, subset of `{1, 2, 3, 4}`.
    pub mix_counts: Vec<usize>,
    pub angle_min: f64,
    pub angle_max: f64,
    /// Minimum gap in degrees between consecutive sweep angles.
    pub min_sector: f64,
    /// Probability that a batch slot is mixed at all.
    pub p_mix: f64,
    pub label_mode: LabelMode,
    pub base_mode: BaseMode,
    /// Patch grid sizes used for shuffling.
    pub granularities: Vec<u32>,
    /// Generator learning rate.
    pub epsilon: f64,
    pub batch_size: usize,
    pub output_dir: Option<PathBuf>,
    /// Side length images are resized to before mixing.
    pub image_size: u32,
    /// Rejection-sampling budget for sweep angles before falling back to even spacing.
    pub retry_limit: usize,
    /// Attach random and adversarial shuffle views to each emitted sample.
    pub shuffle_views: bool,
}

impl Default for AugConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            mix_counts: vec![1, 2, 3, 4],
            angle_min: 45.0,
            angle_max: 315.0,
            min_sector: 30.0,
            p_mix: 0.5,
            label_mode: LabelMode::Hard,
            base_mode: BaseMode::Shared,
            granularities: vec![2, 4, 8],
            epsilon: 0.0002,
            batch_size: 32,
            output_dir: None,
            image_size: 256,
            retry_limit: 1000,
            shuffle_views: false,
        }
    }
}

impl AugConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: AugConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("bad config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn max_mix_count(&self) -> usize {
        self.mix_counts.iter().copied().max().unwrap_or(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config(msg));
        if !(self.angle_min > 0.0 && self.angle_max < 360.0 && self.angle_min <= self.angle_max) {
            return bad(format!(
                "angle range [{}, {}] must lie within (0, 360) with min <= max",
                self.angle_min, self.angle_max
            ));
        }
        if !(self.min_sector >= 0.0) {
            return bad(format!("min_sector {} must be >= 0", self.min_sector));
        }
        if self.mix_counts.is_empty() || self.mix_counts.iter().any(|n| !(1..=4).contains(n)) {
            return bad(format!(
                "mix_counts {:?} must be a nonempty subset of {{1,2,3,4}}",
                self.mix_counts
            ));
        }
        // Even spacing is the fallback, so it has to satisfy the gap constraint.
        let n = self.max_mix_count();
        if n >= 3 {
            let spacing = (self.angle_max - self.angle_min) / (n - 2) as f64;
            if spacing < self.min_sector || spacing <= 0.0 {
                return bad(format!(
                    "{} sweep angles with gap >= {} do not fit in [{}, {}]",
                    n - 1,
                    self.min_sector,
                    self.angle_min,
                    self.angle_max
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.p_mix) {
            return bad(format!("p_mix {} outside [0, 1]", self.p_mix));
        }
        if self.granularities.is_empty() || self.granularities.contains(&0) {
            return bad(format!(
                "granularities {:?} must be nonempty and positive",
                self.granularities
            ));
        }
        if self.image_size == 0 {
            return bad("image_size must be positive".into());
        }
        if let Some(g) = self
            .granularities
            .iter()
            .find(|g| !self.image_size.is_multiple_of(**g))
        {
            return bad(format!(
                "granularity {g} does not divide image_size {}",
                self.image_size
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon {} must be positive", self.epsilon));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.retry_limit == 0 {
            return bad("retry_limit must be >= 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = AugConfig::default();
        c.validate().unwrap();
        assert_eq!(c.batch_size, 32);
        assert_eq!(c.epsilon, 0.0002);
        assert_eq!((c.angle_min, c.angle_max), (45.0, 315.0));
    }

    #[test]
    fn toml_overrides_and_rejects_unknown_keys() {
        let c = AugConfig::from_toml_str("seed = 9\np_mix = 1.0\nlabel_mode = \"soft\"\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.p_mix, 1.0);
        assert_eq!(c.label_mode, LabelMode::Soft);
        assert_eq!(c.image_size, 256);

        let err = AugConfig::from_toml_str("sed = 1").unwrap_err();
        assert_eq!(err.category(), "config");
    }

    #[test]
    fn validation_failures() {
        let mut c = AugConfig {
            granularities: vec![3],
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.granularities = vec![2];
        c.mix_counts = vec![5];
        assert!(c.validate().is_err());
        c.mix_counts = vec![4];
        c.angle_min = 100.0;
        c.angle_max = 140.0;
        assert!(c.validate().is_err());
        c.angle_max = 160.0;
        c.validate().unwrap();
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }
}
