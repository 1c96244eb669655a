//! Adversarial spatial consistency.
//!
//! Each round shuffles an image twice: once with a uniformly random patch
//! permutation and once with the permutation a learnable scorer prefers. The
//! feature distance between the two views is the extractor's loss and the
//! scorer's reward. The scorer is trained by REINFORCE over the selection
//! probability of the permutation the Hungarian step picked; no gradient flows
//! through the solver itself.

use image::RgbImage;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assignment::{self, AssignmentMatrix, ScoreMatrix};
use crate::error::{Error, Result};
use crate::shuffle::{self, GridPermutation};

/// Maps an image to a fixed-length feature vector.
///
/// Implementations must be deterministic and keep `dim()` constant.
pub trait FeatureExtractor: Sync {
    fn dim(&self) -> usize;
    fn extract(&self, image: &RgbImage) -> Result<Vec<f64>>;
}

/// Learnable generator of patch-placement scores.
pub trait ScorerModel: Sync {
    fn params(&self) -> &[f64];

    fn set_params(&mut self, params: Vec<f64>) -> Result<()>;

    /// `N x N` scores for placing each patch of `shuffled` at each position,
    /// where `N = granularity^2`.
    fn score(&self, image: &RgbImage, shuffled: &RgbImage, granularity: u32)
        -> Result<ScoreMatrix>;

    /// Gradient of `ln selection_probability(score(..), m_hat)` with respect to
    /// [`ScorerModel::params`], holding `m_hat` fixed.
    fn grad_log_p(
        &self,
        image: &RgbImage,
        shuffled: &RgbImage,
        m_hat: &AssignmentMatrix,
    ) -> Result<Vec<f64>>;
}

/// Mean absolute difference between two feature vectors.
pub fn feature_distance(f1: &[f64], f2: &[f64]) -> Result<f64> {
    if f1.len() != f2.len() || f1.is_empty() {
        return Err(Error::domain(format!(
            "feature dimensions differ or are empty: {} vs {}",
            f1.len(),
            f2.len()
        )));
    }
    Ok(f1.iter().zip(f2).map(|(a, b)| (a - b).abs()).sum::<f64>() / f1.len() as f64)
}

/// `p = (1/N) sum_ij m_ij * m_hat_ij`: the average score of the chosen placements.
pub fn selection_probability(m: &ScoreMatrix, m_hat: &AssignmentMatrix) -> Result<f64> {
    if m.n() != m_hat.n() {
        return Err(Error::domain(format!(
            "score matrix is {}x{}, assignment is {}x{}",
            m.n(),
            m.n(),
            m_hat.n(),
            m_hat.n()
        )));
    }
    let n = m.n();
    Ok(m_hat
        .mapping()
        .iter()
        .enumerate()
        .map(|(i, &j)| m.get(i, j))
        .sum::<f64>()
        / n as f64)
}

/// One REINFORCE step: `theta + (epsilon / K) * sum_k D_k * g_k`.
pub fn reinforce_update(
    theta: &[f64],
    samples: &[(f64, Vec<f64>)],
    epsilon: f64,
) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::domain("REINFORCE update needs at least one sample"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::domain(format!(
            "learning rate {epsilon} must be positive"
        )));
    }
    let scale = epsilon / samples.len() as f64;
    let mut out = theta.to_vec();
    for (k, (reward, grad)) in samples.iter().enumerate() {
        if grad.len() != theta.len() {
            return Err(Error::domain(format!(
                "sample {k}: gradient has {} entries, parameters have {}",
                grad.len(),
                theta.len()
            )));
        }
        for (o, g) in out.iter_mut().zip(grad) {
            *o += scale * reward * g;
        }
    }
    Ok(out)
}

fn granularity_of(m_hat: &AssignmentMatrix) -> Result<u32> {
    Ok(assignment::grid_permutation_from_matrix(m_hat)?.granularity())
}

/// Side length of the pooled grayscale summary fed to [`ReferenceScorer`].
pub const SUMMARY_SIDE: u32 = 8;
/// Length of the concatenated summary of both images.
pub const SUMMARY_LEN: usize = 2 * (SUMMARY_SIDE * SUMMARY_SIDE) as usize;

/// Mean-pooled luma of `image` on an 8x8 grid, scaled to [0, 1].
pub fn pooled_luma(image: &RgbImage) -> Result<Vec<f64>> {
    let (w, h) = image.dimensions();
    if w < SUMMARY_SIDE || h < SUMMARY_SIDE {
        return Err(Error::domain(format!(
            "image {h}x{w} is smaller than the {SUMMARY_SIDE}x{SUMMARY_SIDE} summary grid"
        )));
    }
    let s = SUMMARY_SIDE as usize;
    let mut sums = vec![0.0f64; s * s];
    let mut counts = vec![0usize; s * s];
    for (x, y, px) in image.enumerate_pixels() {
        let cell = (y as usize * s / h as usize) * s + x as usize * s / w as usize;
        let [r, g, b] = px.0;
        sums[cell] += (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0;
        counts[cell] += 1;
    }
    Ok(sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s / c as f64)
        .collect())
}

/// Small linear stand-in for a convolutional generator.
///
/// For each supported granularity it keeps an `N^2 x 128` weight block mapping the
/// pooled summaries of `(image, shuffled)` to logits; a softmax over each run of
/// `N` logits gives one row of the score matrix.
#[derive(Debug, Clone)]
pub struct ReferenceScorer {
    granularities: Vec<u32>,
    offsets: Vec<usize>,
    params: Vec<f64>,
}

impl ReferenceScorer {
    /// Weights drawn uniformly from `[-init_scale, init_scale]`.
    pub fn new(granularities: &[u32], seed: u64, init_scale: f64) -> Result<Self> {
        if granularities.is_empty() || granularities.contains(&0) {
            return Err(Error::domain("scorer needs positive granularities"));
        }
        let mut offsets = Vec::with_capacity(granularities.len());
        let mut total = 0usize;
        for &g in granularities {
            offsets.push(total);
            let n = (g * g) as usize;
            total += n * n * SUMMARY_LEN;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..total)
            .map(|_| {
                if init_scale > 0.0 {
                    rng.random_range(-init_scale..=init_scale)
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self {
            granularities: granularities.to_vec(),
            offsets,
            params,
        })
    }

    pub fn granularities(&self) -> &[u32] {
        &self.granularities
    }

    /// Index range of the weights used at `granularity`.
    pub fn block_range(&self, granularity: u32) -> Result<std::ops::Range<usize>> {
        let (offset, n) = self.block(granularity)?;
        Ok(offset..offset + n * n * SUMMARY_LEN)
    }

    fn block(&self, granularity: u32) -> Result<(usize, usize)> {
        let idx = self
            .granularities
            .iter()
            .position(|&g| g == granularity)
            .ok_or_else(|| {
                Error::domain(format!(
                    "scorer has no weights for granularity {granularity}"
                ))
            })?;
        let n = (granularity * granularity) as usize;
        Ok((self.offsets[idx], n))
    }

    fn summary(image: &RgbImage, shuffled: &RgbImage) -> Result<Vec<f64>> {
        let mut x = pooled_luma(image)?;
        x.extend(pooled_luma(shuffled)?);
        Ok(x)
    }

    // Row-wise softmax of the logits, before the score-matrix floor is applied.
    fn softmax_rows(&self, offset: usize, n: usize, x: &[f64]) -> Vec<f64> {
        let weights = &self.params[offset..offset + n * n * SUMMARY_LEN];
        let mut probs: Vec<f64> = weights
            .chunks_exact(SUMMARY_LEN)
            .map(|w| w.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect();
        for row in probs.chunks_exact_mut(n) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for z in row.iter_mut() {
                *z = (*z - max).exp();
                sum += *z;
            }
            for z in row.iter_mut() {
                *z /= sum;
            }
        }
        probs
    }
}

impl ScorerModel for ReferenceScorer {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::domain(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("scorer parameters must be finite"));
        }
        self.params = params;
        Ok(())
    }

    fn score(
        &self,
        image: &RgbImage,
        shuffled: &RgbImage,
        granularity: u32,
    ) -> Result<ScoreMatrix> {
        let (offset, n) = self.block(granularity)?;
        let x = Self::summary(image, shuffled)?;
        ScoreMatrix::new(n, self.softmax_rows(offset, n, &x))
    }

    fn grad_log_p(
        &self,
        image: &RgbImage,
        shuffled: &RgbImage,
        m_hat: &AssignmentMatrix,
    ) -> Result<Vec<f64>> {
        let g = granularity_of(m_hat)?;
        let (offset, n) = self.block(g)?;
        let x = Self::summary(image, shuffled)?;
        let probs = self.softmax_rows(offset, n, &x);
        let p: f64 = m_hat
            .mapping()
            .iter()
            .enumerate()
            .map(|(i, &j)| probs[i * n + j])
            .sum::<f64>()
            / n as f64;

        // d ln p / d z_ik = m_i,s(i) * (delta_k,s(i) - m_ik) / (N p)
        let mut grad = vec![0.0; self.params.len()];
        let block = &mut grad[offset..offset + n * n * SUMMARY_LEN];
        for (i, &chosen) in m_hat.mapping().iter().enumerate() {
            let row = &probs[i * n..(i + 1) * n];
            let picked = row[chosen];
            for (k, &m_ik) in row.iter().enumerate() {
                let indicator = if k == chosen { 1.0 } else { 0.0 };
                let dz = picked * (indicator - m_ik) / (n as f64 * p);
                let w = &mut block[(i * n + k) * SUMMARY_LEN..(i * n + k + 1) * SUMMARY_LEN];
                for (wl, xl) in w.iter_mut().zip(&x) {
                    *wl = dz * xl;
                }
            }
        }
        Ok(grad)
    }
}

/// Fixed random linear projection of the whole image followed by `tanh`.
#[derive(Debug, Clone)]
pub struct ReferenceExtractor {
    width: u32,
    height: u32,
    dim: usize,
    weights: Vec<f64>,
}

impl ReferenceExtractor {
    pub const DIM: usize = 32;

    pub fn new(width: u32, height: u32, seed: u64) -> Result<Self> {
        Self::with_dim(width, height, Self::DIM, seed)
    }

    pub fn with_dim(width: u32, height: u32, dim: usize, seed: u64) -> Result<Self> {
        if width == 0 || height == 0 || dim == 0 {
            return Err(Error::domain(
                "extractor needs nonzero input size and dimension",
            ));
        }
        let len = (width * height * 3) as usize;
        // Unit-variance pre-activations for inputs uniform on [-0.5, 0.5].
        let bound = (36.0 / len as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..dim * len)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Ok(Self {
            width,
            height,
            dim,
            weights,
        })
    }
}

impl FeatureExtractor for ReferenceExtractor {
    fn dim(&self) -> usize {
        self.dim
    }

    fn extract(&self, image: &RgbImage) -> Result<Vec<f64>> {
        if image.dimensions() != (self.width, self.height) {
            return Err(Error::domain(format!(
                "extractor expects {}x{} images, got {:?}",
                self.width,
                self.height,
                image.dimensions()
            )));
        }
        let input: Vec<f64> = image
            .as_raw()
            .iter()
            .map(|&v| v as f64 / 255.0 - 0.5)
            .collect();
        Ok(self
            .weights
            .chunks_exact(input.len())
            .map(|w| w.iter().zip(&input).map(|(a, b)| a * b).sum::<f64>().tanh())
            .collect())
    }
}

/// Everything produced by one consistency round for a single image.
#[derive(Debug, Clone)]
pub struct RoundOutput {
    pub granularity: u32,
    /// `I_s1` and its permutation.
    pub random_view: RgbImage,
    pub random_perm: GridPermutation,
    /// `I_s2` and the permutation chosen by the scorer.
    pub adversarial_view: RgbImage,
    pub adversarial_perm: GridPermutation,
    pub scores: ScoreMatrix,
    pub m_hat: AssignmentMatrix,
    /// Consistency distance between the two views' features.
    pub distance: f64,
    pub p: f64,
    pub log_p: f64,
    pub grad_log_p: Vec<f64>,
}

/// Random and scorer-selected shuffles of one image.
#[derive(Debug, Clone)]
pub struct ShuffleViews {
    pub granularity: u32,
    pub random_view: RgbImage,
    pub random_perm: GridPermutation,
    pub adversarial_view: RgbImage,
    pub adversarial_perm: GridPermutation,
    pub scores: ScoreMatrix,
    pub m_hat: AssignmentMatrix,
}

/// How the adversarial assignment is taken from the score matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Selection {
    /// The maximum-score assignment.
    #[default]
    Argmax,
    /// Draw `m_hat` with probability `p(m_hat) / (N-1)!`.
    ///
    /// `p` summed over all `N!` assignments is `(N-1)!`, so this is a proper
    /// distribution and `grad_log_p` is exactly its score function.
    Sample,
}

impl std::str::FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "argmax" => Ok(Selection::Argmax),
            "sample" => Ok(Selection::Sample),
            other => Err(Error::config(format!(
                "unknown selection {other:?} (expected argmax or sample)"
            ))),
        }
    }
}

/// Draw an assignment with probability proportional to its selection probability.
///
/// Picks a row uniformly, its column from that row of `scores`, and places the
/// remaining rows uniformly at random.
pub fn sample_assignment<R: Rng + ?Sized>(
    scores: &ScoreMatrix,
    rng: &mut R,
) -> Result<AssignmentMatrix> {
    let n = scores.n();
    let row = rng.random_range(0..n);
    let weights = &scores.entries()[row * n..(row + 1) * n];
    let col = WeightedIndex::new(weights)
        .map_err(|e| Error::domain(format!("score row {row} is not a distribution: {e}")))?
        .sample(rng);
    let mut rest: Vec<usize> = (0..n).filter(|&c| c != col).collect();
    rest.shuffle(rng);
    let mut rest = rest.into_iter();
    let mapping = (0..n)
        .map(|i| {
            if i == row {
                col
            } else {
                rest.next().unwrap_or(col)
            }
        })
        .collect();
    AssignmentMatrix::from_mapping(mapping)
}

pub fn select_assignment<R: Rng + ?Sized>(
    scores: &ScoreMatrix,
    rng: &mut R,
    selection: Selection,
) -> Result<AssignmentMatrix> {
    match selection {
        Selection::Argmax => Ok(assignment::hungarian_assign(scores)),
        Selection::Sample => sample_assignment(scores, rng),
    }
}

/// Build both shuffled views: random shuffle, score, assign, re-shuffle.
pub fn shuffle_views<S, R>(
    scorer: &S,
    image: &RgbImage,
    rng: &mut R,
    granularities: &[u32],
    selection: Selection,
) -> Result<ShuffleViews>
where
    S: ScorerModel + ?Sized,
    R: Rng + ?Sized,
{
    let (random_view, random_perm) = shuffle::random_shuffle(rng, image, granularities)?;
    let g = random_perm.granularity();
    let scores = scorer.score(image, &random_view, g)?;
    let m_hat = select_assignment(&scores, rng, selection)?;
    let adversarial_perm = assignment::grid_permutation_from_matrix(&m_hat)?;
    let adversarial_view = shuffle::apply_permutation(image, &adversarial_perm)?;
    Ok(ShuffleViews {
        granularity: g,
        random_view,
        random_perm,
        adversarial_view,
        adversarial_perm,
        scores,
        m_hat,
    })
}

/// Run one round without touching any parameters.
///
/// The returned gradient is what the scorer update accumulates; the returned
/// distance is the term the extractor's trainer minimizes.
pub fn advscm_round<E, S, R>(
    extractor: &E,
    scorer: &S,
    image: &RgbImage,
    rng: &mut R,
    granularities: &[u32],
    selection: Selection,
) -> Result<RoundOutput>
where
    E: FeatureExtractor + ?Sized,
    S: ScorerModel + ?Sized,
    R: Rng + ?Sized,
{
    let views = shuffle_views(scorer, image, rng, granularities, selection)?;
    let f1 = extractor.extract(&views.random_view)?;
    let f2 = extractor.extract(&views.adversarial_view)?;
    let distance = feature_distance(&f1, &f2)?;
    let p = selection_probability(&views.scores, &views.m_hat)?;
    let grad_log_p = scorer.grad_log_p(image, &views.random_view, &views.m_hat)?;
    if grad_log_p.iter().any(|g| !g.is_finite()) {
        return Err(Error::domain("scorer produced a non-finite gradient"));
    }
    Ok(RoundOutput {
        granularity: views.granularity,
        random_view: views.random_view,
        random_perm: views.random_perm,
        adversarial_view: views.adversarial_view,
        adversarial_perm: views.adversarial_perm,
        scores: views.scores,
        m_hat: views.m_hat,
        distance,
        p,
        log_p: p.ln(),
        grad_log_p,
    })
}

/// Per-round summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvStepReport {
    pub distance: f64,
    pub p: f64,
    pub log_p: f64,
    /// Norm of the parameter change applied after this round; 0 between batch boundaries.
    pub grad_norm: f64,
    pub updated: bool,
}

/// Accumulates `(D, grad ln p)` pairs and updates the scorer every `batch_size` rounds.
///
/// With a baseline, each reward is taken relative to the mean `D` of the other
/// samples in its batch before the update. Under [`Selection::Sample`] that
/// leaves the expected step unchanged and only cuts its variance.
#[derive(Debug, Clone)]
pub struct AdvTrainer {
    epsilon: f64,
    batch_size: usize,
    granularities: Vec<u32>,
    selection: Selection,
    baseline: bool,
    pending: Vec<(f64, Vec<f64>)>,
}

impl AdvTrainer {
    pub fn new(epsilon: f64, batch_size: usize, granularities: Vec<u32>) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::domain(format!(
                "learning rate {epsilon} must be positive"
            )));
        }
        if batch_size == 0 {
            return Err(Error::domain("batch size must be >= 1"));
        }
        if granularities.is_empty() {
            return Err(Error::domain("no granularities"));
        }
        Ok(Self {
            epsilon,
            batch_size,
            granularities,
            selection: Selection::Argmax,
            baseline: false,
            pending: Vec::new(),
        })
    }

    pub fn with_selection(mut self, selection: Selection) -> Self {
        self.selection = selection;
        self
    }

    pub fn with_baseline(mut self, baseline: bool) -> Self {
        self.baseline = baseline;
        self
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// Run a round and, at a batch boundary, apply the accumulated update to `scorer`.
    pub fn step<E, S, R>(
        &mut self,
        extractor: &E,
        scorer: &mut S,
        image: &RgbImage,
        rng: &mut R,
    ) -> Result<(RoundOutput, AdvStepReport)>
    where
        E: FeatureExtractor + ?Sized,
        S: ScorerModel + ?Sized,
        R: Rng + ?Sized,
    {
        let round = advscm_round(
            extractor,
            &*scorer,
            image,
            rng,
            &self.granularities,
            self.selection,
        )?;
        self.pending
            .push((round.distance, round.grad_log_p.clone()));
        let boundary = self.pending.len() >= self.batch_size;
        let grad_norm = if boundary { self.flush(scorer)? } else { 0.0 };
        let report = AdvStepReport {
            distance: round.distance,
            p: round.p,
            log_p: round.log_p,
            grad_norm,
            updated: boundary,
        };
        Ok((round, report))
    }

    /// Apply whatever is pending now; returns the norm of the parameter change.
    pub fn flush<S: ScorerModel + ?Sized>(&mut self, scorer: &mut S) -> Result<f64> {
        if self.pending.is_empty() {
            return Ok(0.0);
        }
        let before = scorer.params().to_vec();
        let k = self.pending.len();
        if self.baseline && k > 1 {
            let total: f64 = self.pending.iter().map(|(d, _)| d).sum();
            for (d, _) in &mut self.pending {
                *d -= (total - *d) / (k - 1) as f64;
            }
        }
        let after = reinforce_update(&before, &self.pending, self.epsilon)?;
        let norm = before
            .iter()
            .zip(&after)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        scorer.set_params(after)?;
        self.pending.clear();
        Ok(norm)
    }
}
