//! Seeded uniform fan-in initialization.

use ndarray::{Array, Dimension, ShapeBuilder};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// U(-limit, limit) filled in row-major order so initialization is a
/// pure function of the RNG state.
pub fn uniform_init<Sh, D>(shape: Sh, limit: f64, rng: &mut ChaCha12Rng) -> Array<f64, D>
where
    D: Dimension,
    Sh: ShapeBuilder<Dim = D>,
{
    let mut arr = Array::<f64, D>::zeros(shape);
    for v in arr.as_slice_mut().expect("contiguous").iter_mut() {
        *v = rng.random_range(-limit..limit);
    }
    arr
}
