//! Inverted dropout. Masks are sampled explicitly by the caller so a
//! training step can recreate the exact same stochastic forward pass
//! (finite-difference checks rely on this).

use ndarray::{Array, Dimension};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// Samples a 0 / (1/(1-p)) mask in row-major order.
pub fn sample_dropout_mask<D: Dimension>(shape: D, p: f64, rng: &mut ChaCha12Rng) -> Array<f64, D> {
    assert!((0.0..1.0).contains(&p), "dropout prob must be in [0,1)");
    let keep = 1.0 / (1.0 - p);
    let mut mask = Array::<f64, D>::zeros(shape);
    for v in mask.as_slice_mut().expect("contiguous").iter_mut() {
        *v = if rng.random::<f64>() < p { 0.0 } else { keep };
    }
    mask
}

pub fn dropout_forward<D: Dimension>(x: &Array<f64, D>, mask: &Array<f64, D>) -> Array<f64, D> {
    x * mask
}

pub fn dropout_backward<D: Dimension>(grad_out: &Array<f64, D>, mask: &Array<f64, D>) -> Array<f64, D> {
    grad_out * mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use ndarray::Array2;

    #[test]
    fn mask_is_reproducible_and_scaled() {
        let mut a = seed::rng(9, 0xfb, 0);
        let mut b = seed::rng(9, 0xfb, 0);
        let m1 = sample_dropout_mask(ndarray::Dim((8, 8)), 0.5, &mut a);
        let m2 = sample_dropout_mask(ndarray::Dim((8, 8)), 0.5, &mut b);
        assert_eq!(m1, m2);
        assert!(m1.iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn forward_backward_use_same_mask() {
        let mut rng = seed::rng(10, 0xfb, 1);
        let mask = sample_dropout_mask(ndarray::Dim((4, 4)), 0.25, &mut rng);
        let x = Array2::from_elem((4, 4), 3.0);
        let y = dropout_forward(&x, &mask);
        let g = dropout_backward(&Array2::ones((4, 4)), &mask);
        for ((yv, gv), mv) in y.iter().zip(g.iter()).zip(mask.iter()) {
            assert_eq!(*yv, 3.0 * mv);
            assert_eq!(*gv, *mv);
        }
    }
}
