//! Scalar and vector primitives: activations, dropout masks, loss.

use rand::Rng;

use crate::error::{Error, Result};

/// Clamp applied to probabilities before taking logarithms in the loss.
pub const BCE_EPSILON: f64 = 1e-12;

/// Logistic function, evaluated without overflow for any finite `z` and kept
/// strictly inside `(0, 1)`.
pub fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Max-shifted softmax.
pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(Error::Shape("softmax of an empty vector".into()));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Inverted-dropout mask: each entry is 0 with probability `q`, else `1/(1-q)`.
pub fn dropout_mask<R: Rng + ?Sized>(n: usize, q: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&q) {
        return Err(Error::Domain(format!("dropout rate {q} outside [0, 1)")));
    }
    if q == 0.0 {
        return Ok(vec![1.0; n]);
    }
    let keep = 1.0 / (1.0 - q);
    Ok((0..n)
        .map(|_| if rng.random::<f64>() < q { 0.0 } else { keep })
        .collect())
}

/// Binary cross-entropy of probability `p` against label `y`.
pub fn bce_loss(p: f64, y: u8) -> f64 {
    if (y == 1 && p == 1.0) || (y == 0 && p == 0.0) {
        return 0.0;
    }
    let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_abs_diff_eq!(sigmoid(2.0), 0.880797, epsilon = 1e-6);
        assert_abs_diff_eq!(sigmoid(3.7) + sigmoid(-3.7), 1.0, epsilon = 1e-15);
        for z in [-1e4, -800.0, -501.0, 501.0, 800.0, 1e4] {
            let p = sigmoid(z);
            assert!(p > 0.0 && p < 1.0, "sigmoid({z}) = {p}");
        }
    }

    #[test]
    fn softmax_values() {
        let p = softmax(&[0.7, 0.7, 0.7]).unwrap();
        for v in p {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert_eq!(softmax(&[-4.2]).unwrap(), vec![1.0]);
        let p = softmax(&[1f64.ln(), 2f64.ln(), 3f64.ln()]).unwrap();
        for (v, want) in p.iter().zip([1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]) {
            assert_abs_diff_eq!(*v, want, epsilon = 1e-15);
        }
        assert!(matches!(softmax(&[]), Err(Error::Shape(_))));
    }

    #[test]
    fn dropout_mask_cases() {
        let mut rng = stream(11, Domain::Train, 0);
        assert_eq!(dropout_mask(5, 0.0, &mut rng).unwrap(), vec![1.0; 5]);
        assert!(matches!(
            dropout_mask(5, 1.0, &mut rng),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            dropout_mask(5, -0.5, &mut rng),
            Err(Error::Domain(_))
        ));
        // mean of 1e5 entries: sigma = sqrt(q/(1-q)/n) ~ 0.0032, so 4 sigma ~ 0.013
        let m = dropout_mask(100_000, 0.5, &mut rng).unwrap();
        let mean = m.iter().sum::<f64>() / m.len() as f64;
        assert!((0.99..=1.01).contains(&mean), "mean {mean}");
        assert!(m.iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn bce_values() {
        assert_eq!(bce_loss(1.0, 1), 0.0);
        assert_eq!(bce_loss(0.0, 0), 0.0);
        assert_abs_diff_eq!(bce_loss(0.5, 0), std::f64::consts::LN_2, epsilon = 1e-12);
        assert_abs_diff_eq!(bce_loss(0.9, 0), 2.302585, epsilon = 1e-6);
        assert!(bce_loss(0.0, 1).is_finite());
    }

    proptest! {
        #[test]
        fn softmax_shift_invariance(z in proptest::collection::vec(-20.0f64..20.0, 1..8), c in -10.0f64..10.0) {
            let a = softmax(&z).unwrap();
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let b = softmax(&shifted).unwrap();
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12);
                prop_assert!(*x > 0.0);
            }
        }

        #[test]
        fn sigmoid_monotone(a in -600.0f64..600.0, b in -600.0f64..600.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(sigmoid(lo) <= sigmoid(hi));
        }

        #[test]
        fn bce_nonnegative(p in 0.0f64..=1.0, y in 0u8..=1) {
            prop_assert!(bce_loss(p, y) >= 0.0);
        }
    }
}
