use ndarray::{ArrayD, IxDyn};
use rand::Rng;

/// I.i.d. uniform on `[-L, L]` with `L = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(fan_in: usize, fan_out: usize, shape: &[usize], rng: &mut impl Rng) -> ArrayD<f64> {
    let limit = glorot_limit(fan_in, fan_out);
    ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.random_range(-limit..=limit))
}

pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn limits() {
        assert!((glorot_limit(100, 8) - 0.235_702_260_395_515_8).abs() < 1e-12);
        assert_eq!(glorot_limit(3, 3), 1.0);
    }

    #[test]
    fn samples_within_bounds_and_centred() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = glorot_uniform(100, 8, &[100_000], &mut rng);
        let l = glorot_limit(100, 8);
        assert!(w.iter().all(|x| x.abs() <= l));
        let mean = w.mean().unwrap();
        assert!(mean.abs() < 0.01 * l, "mean {mean}");
    }
}
