//! Loss values for the detection head.

use crate::error::{Error, Result};

/// Predictions are clamped to `[PREDICTION_CLAMP, 1 - PREDICTION_CLAMP]`.
pub const PREDICTION_CLAMP: f64 = 1e-7;

/// A detector output `y_prime` paired with its target `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    y_prime: f64,
    y: f64,
}

impl Prediction {
    pub fn new(y_prime: f64, y: f64) -> Result<Self> {
        if y_prime.is_nan() || y.is_nan() {
            return Err(Error::domain("prediction or target is NaN"));
        }
        if !(0.0..=1.0).contains(&y) {
            return Err(Error::domain(format!("target {y} outside [0, 1]")));
        }
        Ok(Self {
            y_prime: y_prime.clamp(PREDICTION_CLAMP, 1.0 - PREDICTION_CLAMP),
            y,
        })
    }

    pub fn y_prime(&self) -> f64 {
        self.y_prime
    }

    pub fn target(&self) -> f64 {
        self.y
    }
}

/// Binary cross-entropy `-(y ln y' + (1 - y) ln(1 - y'))`.
pub fn bce_loss(pred: Prediction) -> f64 {
    let Prediction { y_prime, y } = pred;
    -(y * y_prime.ln() + (1.0 - y) * (1.0 - y_prime).ln())
}

pub fn batch_mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::domain("mean of an empty batch"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bce(y_prime: f64, y: f64) -> f64 {
        bce_loss(Prediction::new(y_prime, y).unwrap())
    }

    #[test]
    fn anchor_values() {
        assert!(bce(1.0, 1.0) <= 1e-6);
        assert!((bce(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-12);
        // Binary entropy of 0.7 in nats.
        let h = -(0.7f64 * 0.7f64.ln() + 0.3 * 0.3f64.ln());
        assert!((bce(0.7, 0.7) - h).abs() < 1e-12);
        assert!((h - 0.610864).abs() < 1e-6);
    }

    #[test]
    fn saturated_predictions_are_finite() {
        assert!(bce(0.0, 1.0).is_finite());
        assert!(bce(1.0, 0.0).is_finite());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Prediction::new(f64::NAN, 1.0).is_err());
        assert!(Prediction::new(0.5, f64::NAN).is_err());
        assert!(Prediction::new(0.5, 1.5).is_err());
    }

    #[test]
    fn mean_values() {
        assert_eq!(batch_mean(&[1.0]).unwrap(), 1.0);
        assert_eq!(batch_mean(&[0.0, 2.0]).unwrap(), 1.0);
        assert!(batch_mean(&[]).is_err());
    }

    #[test]
    fn soft_target_minimum_at_target() {
        for &y in &[0.1, 0.3, 0.5, 0.7, 0.9] {
            let grid: Vec<f64> = (1..1000).map(|k| k as f64 / 1000.0).collect();
            let best = grid
                .iter()
                .copied()
                .min_by(|a, b| bce(*a, y).total_cmp(&bce(*b, y)))
                .unwrap();
            assert!((best - y).abs() < 1e-9, "y = {y}, argmin = {best}");
        }
    }

    proptest! {
        #[test]
        fn monotone_in_prediction(a in 0.001f64..0.999, b in 0.001f64..0.999) {
            prop_assume!((a - b).abs() > 1e-9);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(bce(lo, 1.0) > bce(hi, 1.0));
            prop_assert!(bce(lo, 0.0) < bce(hi, 0.0));
        }

        #[test]
        fn label_flip_symmetry(p in 0.0f64..=1.0, y in 0.0f64..=1.0) {
            let a = bce(p, y);
            let b = bce(1.0 - p, 1.0 - y);
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }

        #[test]
        fn mean_is_order_invariant(mut v in prop::collection::vec(-1e3f64..1e3, 1..50)) {
            let m1 = batch_mean(&v).unwrap();
            v.reverse();
            let half = v.len() / 2;
            v.rotate_left(half);
            let m2 = batch_mean(&v).unwrap();
            prop_assert!((m1 - m2).abs() <= 1e-9);
        }
    }
}
