//! 1 x 2 max pooling along the W axis, stride 2. An odd trailing column
//! is dropped. Ties pick the left element so backward routing is
//! deterministic.

use ndarray::Array4;

/// Returns the pooled tensor and the chosen offsets (0 = left, 1 = right)
/// for backward routing.
pub fn maxpool1x2_forward(x: &Array4<f64>) -> (Array4<f64>, Vec<u8>) {
    let (n, c, h, w) = x.dim();
    let w_out = w / 2;
    let mut y = Array4::<f64>::zeros((n, c, h, w_out));
    let mut arg = vec![0u8; n * c * h * w_out];
    let xs = x.as_slice().expect("contiguous");
    let ys = y.as_slice_mut().expect("contiguous");
    for row in 0..n * c * h {
        let src = row * w;
        let dst = row * w_out;
        for wo in 0..w_out {
            let a = xs[src + 2 * wo];
            let b = xs[src + 2 * wo + 1];
            if a >= b {
                ys[dst + wo] = a;
            } else {
                ys[dst + wo] = b;
                arg[dst + wo] = 1;
            }
        }
    }
    (y, arg)
}

pub fn maxpool1x2_backward(arg: &[u8], grad_out: &Array4<f64>, in_width: usize) -> Array4<f64> {
    let (n, c, h, w_out) = grad_out.dim();
    let mut dx = Array4::<f64>::zeros((n, c, h, in_width));
    let gs = grad_out.as_slice().expect("contiguous");
    let ds = dx.as_slice_mut().expect("contiguous");
    for row in 0..n * c * h {
        let src = row * w_out;
        let dst = row * in_width;
        for wo in 0..w_out {
            ds[dst + 2 * wo + arg[src + wo] as usize] += gs[src + wo];
        }
    }
    dx
}
