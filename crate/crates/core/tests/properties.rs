mod common;

use image::{Rgb, RgbImage};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ed4::advscm::{self, ReferenceScorer, ScorerModel};
use ed4::assignment::{self, ScoreMatrix};
use ed4::clockmix::{self, Label, LabeledImage, MixRecipe};
use ed4::config::{AugConfig, BaseMode, LabelMode};
use ed4::geometry::FaceCenter;
use ed4::shuffle;

use common::{in_arc, noise, pixel_angle};

const PALETTE: [[u8; 3]; 4] = [[250, 0, 0], [0, 250, 0], [0, 0, 250], [90, 90, 90]];

fn constant_sources(n: usize, w: u32, h: u32, labels: &[Label]) -> Vec<LabeledImage> {
    (0..n)
        .map(|k| LabeledImage::new(RgbImage::from_pixel(w, h, Rgb(PALETTE[k])), labels[k]))
        .collect()
}

fn label(b: bool) -> Label {
    if b {
        Label::Fake
    } else {
        Label::Real
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn per_step_bases_keep_provenance(seed in any::<u64>(), n in 2usize..=4, w in 8u32..48, h in 8u32..48) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = AugConfig { base_mode: BaseMode::PerStep, ..Default::default() };
        let c = FaceCenter::new(rng.random_range(0..w), rng.random_range(0..h));
        let ids = (0..n).map(|k| k.to_string()).collect();
        let recipe = clockmix::sample_recipe(&mut rng, ids, c, &cfg).unwrap();
        let bases = recipe.step_bases.clone().unwrap();
        let out = clockmix::clockmix_n(&constant_sources(n, w, h, &[Label::Real; 4]), &recipe).unwrap();
        for i in 0..h {
            for j in 0..w {
                let a = pixel_angle(i, j, c.x, c.y);
                let owner = (1..n).rev().find(|&k| in_arc(a, bases[k - 1], recipe.sweep_angles[k - 1])).unwrap_or(0);
                prop_assert_eq!(out.pixels.get_pixel(j, i).0, PALETTE[owner]);
            }
        }
    }

    #[test]
    fn mixed_label_is_or_of_sources(bits in prop::collection::vec(any::<bool>(), 2..=4), seed in any::<u64>()) {
        let n = bits.len();
        let labels: Vec<Label> = bits.iter().map(|b| label(*b)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids = (0..n).map(|k| k.to_string()).collect();
        let recipe = clockmix::sample_recipe(&mut rng, ids, FaceCenter::new(8, 8), &AugConfig::default()).unwrap();
        let out = clockmix::clockmix_n(&constant_sources(n, 16, 16, &labels), &recipe).unwrap();
        prop_assert_eq!(out.label == Label::Fake, bits.iter().any(|b| *b));
    }

    #[test]
    fn hard_label_ignores_order(bits in prop::collection::vec(any::<bool>(), 1..=4), rot in 0usize..4) {
        let labels: Vec<Label> = bits.iter().map(|b| label(*b)).collect();
        let mut rotated = labels.clone();
        rotated.rotate_left(rot % labels.len());
        prop_assert_eq!(clockmix::mix_label_hard(&labels).unwrap(), clockmix::mix_label_hard(&rotated).unwrap());
    }

    #[test]
    fn soft_label_swap_symmetry(ya in 0.0f64..=1.0, yb in 0.0f64..=1.0, lambda in 0.0f64..=1.0) {
        let a = clockmix::mix_label_soft(ya, yb, lambda).unwrap();
        let b = clockmix::mix_label_soft(yb, ya, 1.0 - lambda).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert!(a >= ya.min(yb) - 1e-15 && a <= ya.max(yb) + 1e-15);
    }

    #[test]
    fn soft_target_between_hard_bounds(seed in any::<u64>(), n in 2usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<Label> = (0..n).map(|_| label(rng.random())).collect();
        let ids = (0..n).map(|k| k.to_string()).collect();
        let recipe = clockmix::sample_recipe(&mut rng, ids, FaceCenter::new(10, 6), &AugConfig::default()).unwrap();
        let out = clockmix::clockmix_n_with_mode(&constant_sources(n, 20, 12, &labels), &recipe, LabelMode::Soft).unwrap();
        let soft = out.soft_label.unwrap();
        // Each fold step is a convex combination, so the target is one too;
        // the fake share of pixels is an upper bound only for sources that survive.
        prop_assert!((0.0..=1.0).contains(&soft));
        if out.label == Label::Real {
            prop_assert_eq!(soft, 0.0);
        }
    }

    #[test]
    fn hungarian_beats_random_assignments(seed in any::<u64>(), n in 2usize..=9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = ScoreMatrix::new(n, (0..n * n).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        let best = assignment::assignment_score(m.entries(), assignment::hungarian_assign(&m).mapping());
        for _ in 0..20 {
            let mut perm: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(&mut perm[..], &mut rng);
            prop_assert!(assignment::assignment_score(m.entries(), &perm) <= best + 1e-12);
        }
    }

    #[test]
    fn reinforce_update_is_linear(seed in any::<u64>(), eps in 1e-4f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let samples: Vec<(f64, Vec<f64>)> = (0..4)
            .map(|_| (rng.random_range(0.0..2.0), (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        let out = advscm::reinforce_update(&theta, &samples, eps).unwrap();
        for k in 0..6 {
            let want = theta[k] + eps / 4.0 * samples.iter().map(|(d, g)| d * g[k]).sum::<f64>();
            prop_assert!((out[k] - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn shuffled_views_are_permutations_of_the_image(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = noise(32, 32, &mut rng);
        let scorer = ReferenceScorer::new(&[2, 4, 8], seed, 0.1).unwrap();
        let v = advscm::shuffle_views(&scorer, &img, &mut rng, &[2, 4, 8], advscm::Selection::Argmax).unwrap();
        prop_assert_eq!(shuffle::apply_permutation(&img, &v.random_perm).unwrap(), v.random_view);
        prop_assert_eq!(shuffle::apply_permutation(&img, &v.adversarial_perm).unwrap(), v.adversarial_view);
        prop_assert_eq!(v.adversarial_perm.mapping(), v.m_hat.mapping());
        let best = assignment::assignment_score(v.scores.entries(), v.m_hat.mapping());
        let brute = assignment::brute_force_assign(&v.scores);
        if let Ok(b) = brute {
            prop_assert!((assignment::assignment_score(v.scores.entries(), b.mapping()) - best).abs() <= 1e-9);
        }
    }
}

#[test]
fn recipes_serialize_with_documented_keys() {
    let r = MixRecipe {
        source_ids: vec!["a".into(), "b".into()],
        sweep_angles: vec![120.0],
        rho_base: 33.5,
        step_bases: None,
        center: FaceCenter::new(4, 5),
    };
    let v: serde_json::Value = serde_json::to_value(&r).unwrap();
    assert_eq!(v["sources"], serde_json::json!(["a", "b"]));
    assert_eq!(v["angles"], serde_json::json!([120.0]));
    assert_eq!(v["base"], 33.5);
    assert_eq!(v["center"], serde_json::json!([4, 5]));
}

#[test]
fn scorer_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let img = noise(16, 16, &mut rng);
    let mut scorer = ReferenceScorer::new(&[2], 5, 0.4).unwrap();
    let (s1, _) = shuffle::random_shuffle(&mut rng, &img, &[2]).unwrap();
    let m_hat = assignment::hungarian_assign(&scorer.score(&img, &s1, 2).unwrap());
    let grad = scorer.grad_log_p(&img, &s1, &m_hat).unwrap();
    let theta = scorer.params().to_vec();
    let h = 1e-6;
    for k in (0..theta.len()).step_by(37) {
        let mut f = |delta: f64| {
            let mut t = theta.clone();
            t[k] += delta;
            scorer.set_params(t).unwrap();
            advscm::selection_probability(&scorer.score(&img, &s1, 2).unwrap(), &m_hat)
                .unwrap()
                .ln()
        };
        let numeric = (f(h) - f(-h)) / (2.0 * h);
        assert!(
            (numeric - grad[k]).abs() <= 1e-6 * grad[k].abs().max(1.0),
            "{k}: {numeric} vs {}",
            grad[k]
        );
    }
}
