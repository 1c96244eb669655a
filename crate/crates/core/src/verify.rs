//! Self-checks run by `ed4 verify`.
//!
//! Each check exercises an invariant of one math module on seeded random
//! inputs and compares against a direct recomputation.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::advscm::{self, ReferenceScorer, ScorerModel};
use crate::assignment::{self, ScoreMatrix};
use crate::clockmix::{self, Label, LabeledImage};
use crate::config::AugConfig;
use crate::error::{Error, Result};
use crate::geometry::{self, FaceCenter, ImageGrid};
use crate::objectives::{bce_loss, Prediction};
use crate::shuffle;

type Outcome = std::result::Result<(), String>;

/// Names of the suites, in run order.
pub const SUITES: [&str; 6] = [
    "geometry",
    "clockmix",
    "shuffle",
    "assignment",
    "advscm",
    "objectives",
];

pub struct Check {
    pub suite: &'static str,
    pub name: &'static str,
    run: fn() -> Outcome,
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub suite: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

pub fn checks() -> Vec<Check> {
    macro_rules! c {
        ($suite:literal, $name:ident) => {
            Check {
                suite: $suite,
                name: stringify!($name),
                run: $name,
            }
        };
    }
    vec![
        c!("geometry", mask_partition),
        c!("geometry", sector_fraction),
        c!("geometry", mask_monotone),
        c!("clockmix", constant_source_provenance),
        c!("clockmix", hard_label_is_or),
        c!("clockmix", soft_label_grid),
        c!("clockmix", recipe_constraints),
        c!("shuffle", invert_round_trip),
        c!("shuffle", unit_granularity),
        c!("assignment", matches_brute_force),
        c!("assignment", greedy_trap),
        c!("advscm", gradient_finite_difference),
        c!("advscm", single_step_ascent),
        c!("advscm", uniform_scores_give_identity),
        c!("objectives", bce_anchors),
        c!("objectives", bce_symmetry_and_order),
    ]
}

/// Run every check whose suite equals `filter`, or whose `suite::name`
/// contains it. No filter runs everything.
pub fn run(filter: Option<&str>) -> Result<Vec<CheckResult>> {
    let selected: Vec<Check> = checks()
        .into_iter()
        .filter(|c| match filter {
            None => true,
            Some(f) => c.suite == f || format!("{}::{}", c.suite, c.name).contains(f),
        })
        .collect();
    if selected.is_empty() {
        return Err(Error::config(format!(
            "filter `{}` matches no check; suites are {}",
            filter.unwrap_or_default(),
            SUITES.join(", ")
        )));
    }
    Ok(selected
        .into_iter()
        .map(|c| {
            let t = Instant::now();
            let outcome =
                std::panic::catch_unwind(c.run).unwrap_or_else(|_| Err("panicked".into()));
            CheckResult {
                suite: c.suite,
                name: c.name,
                passed: outcome.is_ok(),
                detail: outcome.err().unwrap_or_default(),
                elapsed: t.elapsed(),
            }
        })
        .collect())
}

pub fn render_table(results: &[CheckResult]) -> String {
    let mut out = format!(
        "{:<12} {:<30} {:<6} {:>9}\n",
        "suite", "check", "result", "ms"
    );
    for r in results {
        out.push_str(&format!(
            "{:<12} {:<30} {:<6} {:>9.1}",
            r.suite,
            r.name,
            if r.passed { "pass" } else { "FAIL" },
            r.elapsed.as_secs_f64() * 1e3
        ));
        if !r.passed {
            out.push_str("  ");
            out.push_str(&r.detail);
        }
        out.push('\n');
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    out.push_str(&format!("{} checks, {} failed\n", results.len(), failed));
    out
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Outcome {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: Error) -> String {
    e.to_string()
}

fn rng(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0xed4 ^ tag)
}

fn noise(w: u32, h: u32, r: &mut ChaCha8Rng) -> RgbImage {
    let mut img = RgbImage::new(w, h);
    for p in img.pixels_mut() {
        *p = Rgb([r.random(), r.random(), r.random()]);
    }
    img
}

// Direct per-pixel evaluation of the rebased angle.
fn rebased_angle(i: u32, j: u32, c: FaceCenter, base: f64) -> f64 {
    let a = (c.y as f64 - i as f64)
        .atan2(j as f64 - c.x as f64)
        .to_degrees();
    let a = if a < 0.0 { a + 360.0 } else { a };
    let d = a - base;
    let d = if d < 0.0 { d + 360.0 } else { d };
    if d >= 360.0 {
        0.0
    } else {
        d
    }
}

fn mask_partition() -> Outcome {
    let mut r = rng(1);
    for _ in 0..200 {
        let (h, w) = (r.random_range(1..=65), r.random_range(1..=65));
        let grid = ImageGrid::new(h, w).map_err(err)?;
        let c = FaceCenter::new(r.random_range(0..w), r.random_range(0..h));
        let base = r.random_range(0.0..360.0);
        let rho = r.random_range(1.0..359.0);
        let m = geometry::compute_angle_matrix(grid, c).map_err(err)?;
        let mask = geometry::sector_mask(&geometry::rebase_angles(&m, base).map_err(err)?, rho)
            .map_err(err)?;
        let comp = mask.complement();
        ensure(
            mask.count() + comp.iter().filter(|b| **b).count() == grid.pixel_count(),
            || "mask and complement do not cover the grid".into(),
        )?;
        for i in 0..h {
            for j in 0..w {
                let want = rebased_angle(i, j, c, base) <= rho;
                ensure(mask.get(i, j) == want, || {
                    format!("pixel ({i},{j}) of {h}x{w}, center {c:?}")
                })?;
            }
        }
    }
    Ok(())
}

// Measured over the inscribed disc: on the full frame the corners bias the
// count by up to ~0.023 depending on where the sector points.
fn sector_fraction() -> Outcome {
    let mut r = rng(2);
    let grid = ImageGrid::new(101, 101).map_err(err)?;
    let c = grid.center();
    let m = geometry::compute_angle_matrix(grid, c).map_err(err)?;
    let radius2 = 50.0f64 * 50.0;
    let in_disc: Vec<bool> = (0..101u32)
        .flat_map(|i| (0..101u32).map(move |j| (i, j)))
        .map(|(i, j)| (i as f64 - c.y as f64).powi(2) + (j as f64 - c.x as f64).powi(2) <= radius2)
        .collect();
    let disc = in_disc.iter().filter(|b| **b).count() as f64;
    for _ in 0..50 {
        let rho = r.random_range(1.0..359.0);
        let base = r.random_range(0.0..360.0);
        let mask = geometry::sector_mask(&geometry::rebase_angles(&m, base).map_err(err)?, rho)
            .map_err(err)?;
        let hits = mask
            .bits()
            .iter()
            .zip(&in_disc)
            .filter(|(b, d)| **b && **d)
            .count() as f64;
        let f = hits / disc;
        ensure((f - rho / 360.0).abs() <= 0.01, || {
            format!("rho {rho}, base {base}: fraction {f}")
        })?;
    }
    Ok(())
}

fn mask_monotone() -> Outcome {
    let mut r = rng(3);
    let grid = ImageGrid::new(48, 64).map_err(err)?;
    for _ in 0..50 {
        let c = FaceCenter::new(r.random_range(0..64), r.random_range(0..48));
        let base = r.random_range(0.0..360.0);
        let m =
            geometry::rebase_angles(&geometry::compute_angle_matrix(grid, c).map_err(err)?, base)
                .map_err(err)?;
        let (a, b) = (r.random_range(1.0..359.0), r.random_range(1.0..359.0));
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let small = geometry::sector_mask(&m, lo).map_err(err)?;
        let big = geometry::sector_mask(&m, hi).map_err(err)?;
        ensure(
            small.bits().iter().zip(big.bits()).all(|(s, b)| !s || *b),
            || format!("mask at {lo} not inside mask at {hi}"),
        )?;
    }
    Ok(())
}

fn constant_source_provenance() -> Outcome {
    let mut r = rng(4);
    let cfg = AugConfig::default();
    let palette = [[200u8, 10, 10], [10, 200, 10], [10, 10, 200], [120, 120, 0]];
    for _ in 0..100 {
        let n = r.random_range(2..=4);
        let size = r.random_range(16..=64);
        let images: Vec<LabeledImage> = (0..n)
            .map(|k| {
                LabeledImage::new(
                    RgbImage::from_pixel(size, size, Rgb(palette[k])),
                    Label::Real,
                )
            })
            .collect();
        let c = FaceCenter::new(r.random_range(0..size), r.random_range(0..size));
        let ids = (0..n).map(|k| k.to_string()).collect();
        let recipe = clockmix::sample_recipe(&mut r, ids, c, &cfg).map_err(err)?;
        let out = clockmix::clockmix_n(&images, &recipe).map_err(err)?;
        ensure(
            out.pixels.pixels().all(|p| palette[..n].contains(&p.0)),
            || format!("blended pixel for recipe {recipe:?}"),
        )?;
    }
    Ok(())
}

fn hard_label_is_or() -> Outcome {
    for n in 1..=4usize {
        for bits in 0..(1u32 << n) {
            let labels: Vec<Label> = (0..n)
                .map(|k| {
                    if bits >> k & 1 == 1 {
                        Label::Fake
                    } else {
                        Label::Real
                    }
                })
                .collect();
            let got = clockmix::mix_label_hard(&labels).map_err(err)?;
            ensure((got == Label::Fake) == (bits != 0), || {
                format!("{labels:?} -> {got:?}")
            })?;
        }
    }
    Ok(())
}

fn soft_label_grid() -> Outcome {
    for (ya, yb) in [(0.0, 1.0), (1.0, 0.0), (0.25, 0.75), (1.0, 1.0)] {
        for k in 0..=100 {
            let lambda = k as f64 / 100.0;
            let got = clockmix::mix_label_soft(ya, yb, lambda).map_err(err)?;
            let want = lambda * ya + (1.0 - lambda) * yb;
            ensure((got - want).abs() <= 1e-12, || {
                format!("lambda {lambda}: {got} vs {want}")
            })?;
        }
    }
    Ok(())
}

fn recipe_constraints() -> Outcome {
    let mut r = rng(5);
    let cfg = AugConfig::default();
    for _ in 0..2000 {
        let n = r.random_range(1..=4);
        let ids = (0..n).map(|k| k.to_string()).collect();
        let recipe =
            clockmix::sample_recipe(&mut r, ids, FaceCenter::new(0, 0), &cfg).map_err(err)?;
        let a = &recipe.sweep_angles;
        ensure(a.len() == n - 1, || "wrong angle count".into())?;
        ensure(
            a.iter()
                .all(|x| (cfg.angle_min..=cfg.angle_max).contains(x)),
            || format!("{a:?} out of range"),
        )?;
        ensure(a.windows(2).all(|w| w[0] - w[1] >= cfg.min_sector), || {
            format!("{a:?} gaps too small")
        })?;
        ensure((0.0..360.0).contains(&recipe.rho_base), || {
            "base out of range".into()
        })?;
    }
    Ok(())
}

fn histogram(img: &RgbImage) -> HashMap<[u8; 3], usize> {
    let mut h = HashMap::new();
    for p in img.pixels() {
        *h.entry(p.0).or_default() += 1;
    }
    h
}

fn invert_round_trip() -> Outcome {
    let mut r = rng(6);
    for k in 0..150 {
        let g = [2, 4, 8][k % 3];
        let img = noise(32, 32, &mut r);
        let p = shuffle::random_permutation(&mut r, g).map_err(err)?;
        let s = shuffle::apply_permutation(&img, &p).map_err(err)?;
        ensure(
            shuffle::apply_permutation(&s, &shuffle::invert(&p)).map_err(err)? == img,
            || format!("round trip failed for {:?}", p.mapping()),
        )?;
        ensure(histogram(&s) == histogram(&img), || {
            "histogram changed".into()
        })?;
    }
    Ok(())
}

fn unit_granularity() -> Outcome {
    let mut r = rng(7);
    let img = noise(20, 12, &mut r);
    let (out, p) = shuffle::random_shuffle(&mut r, &img, &[1]).map_err(err)?;
    ensure(out == img && p.is_identity(), || {
        "g = 1 changed the image".into()
    })
}

fn matches_brute_force() -> Outcome {
    let mut r = rng(8);
    for n in 2..=7usize {
        for _ in 0..30 {
            let raw: Vec<f64> = (0..n * n).map(|_| r.random_range(0.0..1.0)).collect();
            let m = ScoreMatrix::new(n, raw).map_err(err)?;
            let fast = assignment::hungarian_assign(&m);
            let slow = assignment::brute_force_assign(&m).map_err(err)?;
            let (a, b) = (
                assignment::assignment_score(m.entries(), fast.mapping()),
                assignment::assignment_score(m.entries(), slow.mapping()),
            );
            ensure((a - b).abs() <= 1e-9, || format!("N={n}: {a} vs {b}"))?;
        }
    }
    Ok(())
}

fn greedy_trap() -> Outcome {
    let raw = vec![0.9, 0.8, 0.1, 0.85, 0.1, 0.2, 0.1, 0.7, 0.3];
    let a = assignment::max_weight_assignment(3, &raw).map_err(err)?;
    let score = assignment::assignment_score(&raw, a.mapping());
    ensure(
        a.mapping() == [1, 0, 2] && (score - 1.95).abs() < 1e-12,
        || format!("got {:?} with score {score}", a.mapping()),
    )
}

fn log_p(
    scorer: &ReferenceScorer,
    img: &RgbImage,
    s1: &RgbImage,
    g: u32,
    m_hat: &assignment::AssignmentMatrix,
) -> Result<f64> {
    Ok(advscm::selection_probability(&scorer.score(img, s1, g)?, m_hat)?.ln())
}

fn gradient_finite_difference() -> Outcome {
    let mut r = rng(9);
    let h = 1e-5;
    for trial in 0..6 {
        let g = if trial % 2 == 0 { 2 } else { 4 };
        let mut scorer = ReferenceScorer::new(&[g], r.random(), 0.3).map_err(err)?;
        let img = noise(16, 16, &mut r);
        let (s1, _) = shuffle::random_shuffle(&mut r, &img, &[g]).map_err(err)?;
        let n = (g * g) as usize;
        let m_hat = assignment::AssignmentMatrix::from_mapping(
            shuffle::random_permutation(&mut r, g)
                .map_err(err)?
                .mapping()
                .to_vec(),
        )
        .map_err(err)?;
        let grad = scorer.grad_log_p(&img, &s1, &m_hat).map_err(err)?;
        let range = scorer.block_range(g).map_err(err)?;
        let theta = scorer.params().to_vec();
        for _ in 0..24 {
            let k = r.random_range(range.clone());
            let mut t = theta.clone();
            t[k] += h;
            scorer.set_params(t.clone()).map_err(err)?;
            let up = log_p(&scorer, &img, &s1, g, &m_hat).map_err(err)?;
            t[k] -= 2.0 * h;
            scorer.set_params(t).map_err(err)?;
            let down = log_p(&scorer, &img, &s1, g, &m_hat).map_err(err)?;
            scorer.set_params(theta.clone()).map_err(err)?;
            let numeric = (up - down) / (2.0 * h);
            let rel = (grad[k] - numeric).abs() / grad[k].abs().max(numeric.abs()).max(1e-6);
            ensure(rel < 1e-4, || {
                format!("N={n} param {k}: analytic {} numeric {numeric}", grad[k])
            })?;
        }
    }
    Ok(())
}

fn single_step_ascent() -> Outcome {
    let mut r = rng(10);
    for _ in 0..20 {
        let g = 2;
        let mut scorer = ReferenceScorer::new(&[g], r.random(), 0.3).map_err(err)?;
        let img = noise(16, 16, &mut r);
        let (s1, _) = shuffle::random_shuffle(&mut r, &img, &[g]).map_err(err)?;
        let m_hat = assignment::hungarian_assign(&scorer.score(&img, &s1, g).map_err(err)?);
        let before = log_p(&scorer, &img, &s1, g, &m_hat).map_err(err)?;
        let grad = scorer.grad_log_p(&img, &s1, &m_hat).map_err(err)?;
        let d = r.random_range(0.01..1.0);
        let theta = advscm::reinforce_update(scorer.params(), &[(d, grad)], 1e-3).map_err(err)?;
        scorer.set_params(theta).map_err(err)?;
        let after = log_p(&scorer, &img, &s1, g, &m_hat).map_err(err)?;
        ensure(after > before, || format!("log p {before} -> {after}"))?;
    }
    Ok(())
}

fn uniform_scores_give_identity() -> Outcome {
    let mut r = rng(11);
    let scorer = ReferenceScorer::new(&[2, 4], 0, 0.0).map_err(err)?;
    let img = noise(16, 16, &mut r);
    for g in [2, 4] {
        let (s1, _) = shuffle::random_shuffle(&mut r, &img, &[g]).map_err(err)?;
        let m = scorer.score(&img, &s1, g).map_err(err)?;
        let m_hat = assignment::hungarian_assign(&m);
        let p = advscm::selection_probability(&m, &m_hat).map_err(err)?;
        let n = (g * g) as f64;
        ensure(
            m_hat.mapping().iter().enumerate().all(|(i, &j)| i == j),
            || "not identity".into(),
        )?;
        ensure((p - 1.0 / n).abs() < 1e-12, || format!("p = {p}"))?;
    }
    Ok(())
}

fn bce(y_prime: f64, y: f64) -> std::result::Result<f64, String> {
    Ok(bce_loss(Prediction::new(y_prime, y).map_err(err)?))
}

#[allow(clippy::approx_constant)]
fn bce_anchors() -> Outcome {
    let half = bce(0.5, 1.0)?;
    ensure((half - 0.693147).abs() <= 1e-6, || {
        format!("bce(0.5, 1) = {half}")
    })?;
    let sure = bce(1.0 - 1e-9, 1.0)?;
    ensure(sure <= 1e-6, || format!("bce(1, 1) = {sure}"))
}

fn bce_symmetry_and_order() -> Outcome {
    let mut r = rng(12);
    for _ in 0..1000 {
        let (p, y) = (r.random_range(0.001..0.999), r.random_range(0.0..=1.0));
        let (a, b) = (bce(p, y)?, bce(1.0 - p, 1.0 - y)?);
        ensure((a - b).abs() <= 1e-9, || {
            format!("flip symmetry at ({p}, {y})")
        })?;
        let q = r.random_range(0.001..0.999);
        if (p - q).abs() > 1e-9 {
            let (lo, hi) = if p < q { (p, q) } else { (q, p) };
            ensure(bce(lo, 1.0)? > bce(hi, 1.0)?, || {
                format!("not decreasing at {lo}, {hi}")
            })?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        let results = run(None).unwrap();
        let failed: Vec<_> = results.iter().filter(|r| !r.passed).collect();
        assert!(failed.is_empty(), "{}", render_table(&results));
        for s in SUITES {
            assert!(results.iter().any(|r| r.suite == s), "suite {s} missing");
        }
    }

    #[test]
    fn filter_selects_one_suite() {
        let results = run(Some("assignment")).unwrap();
        assert!(!results.is_empty());
        assert!(results.iter().all(|r| r.suite == "assignment"));
        assert_eq!(run(Some("nope")).unwrap_err().category(), "config");
    }
}
