use rand::Rng;

use super::tape::softmax_slice;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Fills `out` with draws from `U[-a, a]`, `a = sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_fill<R: Rng>(out: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut R) {
    let a = xavier_bound(fan_in, fan_out);
    for x in out {
        *x = rng.gen_range(-a..=a);
    }
}

/// A `fan_out × fan_in` matrix with Xavier-uniform entries.
pub fn xavier_uniform<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let mut t = Tensor::zeros(vec![fan_out, fan_in]);
    xavier_fill(&mut t.data, fan_in, fan_out, rng);
    t
}

pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::Dimension("softmax of an empty vector".into()));
    }
    Ok(softmax_slice(v))
}

/// Inverted dropout: in training, zero each entry with probability `p` and
/// scale survivors by `1/(1-p)`; otherwise the identity.
pub fn dropout<R: Rng>(v: &[f64], p: f64, rng: &mut R, training: bool) -> Vec<f64> {
    if !training || p == 0.0 {
        return v.to_vec();
    }
    let keep = 1.0 / (1.0 - p);
    v.iter()
        .map(|x| if rng.gen::<f64>() < p { 0.0 } else { x * keep })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn xavier_bound_and_range() {
        assert_eq!(xavier_bound(3, 3), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = xavier_uniform(3, 3, &mut rng);
        assert_eq!(t.shape(), &[3, 3]);
        assert!(t.data.iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn xavier_mean_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut v = vec![0.0; 100_000];
        xavier_fill(&mut v, 3, 3, &mut rng);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        // U[-1,1] has variance 1/3.
        let sigma = (1.0 / 3.0 / v.len() as f64).sqrt();
        assert!(mean.abs() < 3.0 * sigma, "{mean}");
    }

    #[test]
    fn xavier_is_seeded() {
        let a = xavier_uniform(4, 2, &mut ChaCha8Rng::seed_from_u64(9));
        let b = xavier_uniform(4, 2, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        let s = softmax(&[2f64.ln(), 0.0]).unwrap();
        assert!((s[0] - 2.0 / 3.0).abs() < 1e-15 && (s[1] - 1.0 / 3.0).abs() < 1e-15);
        let s = softmax(&[1000.0, 0.0]).unwrap();
        assert!(s.iter().all(|x| x.is_finite()));
        assert!((s[0] - 1.0).abs() < 1e-15 && s[1] < 1e-300);
        assert!(softmax(&[]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn softmax_is_a_shift_invariant_distribution(
            v in proptest::collection::vec(-50.0f64..50.0, 1..10),
            shift in -100.0f64..100.0,
        ) {
            let s = softmax(&v).unwrap();
            proptest::prop_assert!(s.iter().all(|x| *x >= 0.0));
            proptest::prop_assert!((s.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
            let t = softmax(&shifted).unwrap();
            for (a, b) in s.iter().zip(&t) {
                proptest::prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = [1.0, -2.0, 3.0];
        assert_eq!(dropout(&v, 0.0, &mut rng, true), v.to_vec());
        assert_eq!(dropout(&v, 0.5, &mut rng, false), v.to_vec());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = [1.0, -2.0, 0.5];
        let n = 100_000;
        let mut sums = [0.0; 3];
        for _ in 0..n {
            for (s, x) in sums.iter_mut().zip(dropout(&v, 0.5, &mut rng, true)) {
                *s += x;
            }
        }
        for (s, x) in sums.iter().zip(v) {
            // Each draw is 0 or 2x: standard deviation |x|.
            let sigma = x.abs() / (n as f64).sqrt();
            assert!((s / n as f64 - x).abs() < 3.0 * sigma);
        }
    }
}
