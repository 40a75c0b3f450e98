//! Hand-rolled layers with explicit forward/backward passes.
//!
//! Everything is f64 and batched as `(N, C, H, W)` tensors; convolutions
//! use 1 x k kernels that slide along the time axis (W) and leave the
//! signal axis (H) untouched. Backward passes return input gradients and
//! accumulate parameter gradients into per-layer grad structs, which is
//! what lets the second training stage push gradients through a frozen
//! network into the module before it.

mod batchnorm;
mod conv;
mod dense;
mod dropout;
mod init;
mod lstm;
mod params;
mod pool;

pub use batchnorm::{BatchNorm1d, BatchNorm2d, Bn1dCache, Bn2dCache, BnGrads};
pub use conv::{Padding, RowConv, RowConvGrads};
pub use dense::{Dense, DenseGrads};
pub use dropout::{dropout_backward, dropout_forward, sample_dropout_mask};
pub use init::uniform_init;
pub use lstm::{BiLstm, BiLstmCache, BiLstmGrads, Lstm, LstmCache, LstmGrads};
pub use params::{checksum, NamedParam, NamedParamMut, ParamKind};
pub use pool::{maxpool1x2_backward, maxpool1x2_forward};

/// Whether stochastic layers (dropout) and batch statistics are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// ReLU applied in place; backward masks on the (cached) output.
pub fn relu_inplace<D: ndarray::Dimension>(x: &mut ndarray::Array<f64, D>) {
    x.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
}

/// Masks `grad` by the positivity of the cached post-ReLU output.
pub fn relu_backward_inplace<D: ndarray::Dimension>(
    grad: &mut ndarray::Array<f64, D>,
    output: &ndarray::Array<f64, D>,
) {
    grad.zip_mut_with(output, |g, &y| {
        if y <= 0.0 {
            *g = 0.0;
        }
    });
}
