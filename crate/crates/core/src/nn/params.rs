//! Named parameter views for checkpointing, optimization and checksums.

use ndarray::{ArrayViewD, ArrayViewMutD};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Updated by the optimizer.
    Trainable,
    /// Carried state (batch-norm running statistics); saved but never
    /// touched by gradients.
    Buffer,
}

pub type NamedParam<'a> = (String, ParamKind, ArrayViewD<'a, f64>);
pub type NamedParamMut<'a> = (String, ParamKind, ArrayViewMutD<'a, f64>);

/// FNV-1a over the bit patterns of every parameter and buffer, in
/// declaration order. Bit-exact: any single-bit change flips the sum.
pub fn checksum(params: &[NamedParam<'_>]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for (_, _, view) in params {
        for v in view.iter() {
            for byte in v.to_bits().to_le_bytes() {
                hash ^= byte as u64;
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
    hash
}
