//! 2-D convolution with 1 x k kernels, im2col + matrix multiply.

use super::init::uniform_init;
use ndarray::{Array1, Array2, Array3, Array4};
use rand_chacha::ChaCha12Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    Valid,
    /// Zero padding that preserves the input width (odd kernels only).
    Same,
}

/// Convolution over the W axis only: each of the H signal rows is
/// filtered independently with the same kernels.
#[derive(Clone, Debug)]
pub struct RowConv {
    /// (out_channels, in_channels, kernel_w)
    pub weight: Array3<f64>,
    pub bias: Array1<f64>,
    pub padding: Padding,
}

#[derive(Clone, Debug)]
pub struct RowConvGrads {
    pub weight: Array3<f64>,
    pub bias: Array1<f64>,
}

impl RowConvGrads {
    pub fn zeros_like(layer: &RowConv) -> Self {
        RowConvGrads {
            weight: Array3::zeros(layer.weight.raw_dim()),
            bias: Array1::zeros(layer.bias.raw_dim()),
        }
    }
}

impl RowConv {
    pub fn new(in_channels: usize, out_channels: usize, kernel_w: usize, padding: Padding, rng: &mut ChaCha12Rng) -> Self {
        assert!(kernel_w >= 1);
        if padding == Padding::Same {
            assert!(!kernel_w.is_multiple_of(2), "same padding requires an odd kernel");
        }
        let limit = 1.0 / ((in_channels * kernel_w) as f64).sqrt();
        RowConv {
            weight: uniform_init((out_channels, in_channels, kernel_w), limit, rng),
            bias: Array1::zeros(out_channels),
            padding,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.dim().1
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dim().0
    }

    pub fn kernel_w(&self) -> usize {
        self.weight.dim().2
    }

    pub fn out_width(&self, in_width: usize) -> usize {
        match self.padding {
            Padding::Valid => in_width + 1 - self.kernel_w(),
            Padding::Same => in_width,
        }
    }

    fn pad_left(&self) -> usize {
        match self.padding {
            Padding::Valid => 0,
            Padding::Same => (self.kernel_w() - 1) / 2,
        }
    }

    /// (N, C, H, W) -> (N, F, H, out_width)
    pub fn forward(&self, x: &Array4<f64>) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.in_channels(), "input channel mismatch");
        let w_out = self.out_width(w);
        let f = self.out_channels();
        let cols = self.im2col(x, w_out);
        let ck = c * self.kernel_w();
        let w_mat = self
            .weight
            .view()
            .into_shape_with_order((f, ck))
            .expect("contiguous weight");
        let y_mat = w_mat.dot(&cols); // (f, n*h*w_out)

        let mut y = Array4::<f64>::zeros((n, f, h, w_out));
        let ym = y_mat.as_slice().expect("contiguous");
        let ys = y.as_slice_mut().expect("contiguous");
        let cols_len = n * h * w_out;
        for ni in 0..n {
            for fi in 0..f {
                let b = self.bias[fi];
                for hi in 0..h {
                    let dst = (((ni * f) + fi) * h + hi) * w_out;
                    let src = fi * cols_len + (ni * h + hi) * w_out;
                    for i in 0..w_out {
                        ys[dst + i] = ym[src + i] + b;
                    }
                }
            }
        }
        y
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&self, x: &Array4<f64>, grad_out: &Array4<f64>, grads: &mut RowConvGrads) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        let w_out = self.out_width(w);
        let f = self.out_channels();
        let k = self.kernel_w();
        let ck = c * k;
        let cols_len = n * h * w_out;
        assert_eq!(grad_out.dim(), (n, f, h, w_out), "grad_out shape mismatch");

        // (n, f, h, w_out) -> (f, n*h*w_out)
        let mut g_mat = Array2::<f64>::zeros((f, cols_len));
        {
            let gs = grad_out.as_slice().expect("contiguous");
            let gm = g_mat.as_slice_mut().expect("contiguous");
            for ni in 0..n {
                for fi in 0..f {
                    for hi in 0..h {
                        let src = (((ni * f) + fi) * h + hi) * w_out;
                        let dst = fi * cols_len + (ni * h + hi) * w_out;
                        gm[dst..dst + w_out].copy_from_slice(&gs[src..src + w_out]);
                    }
                }
            }
        }

        let cols = self.im2col(x, w_out);
        let dw = g_mat.dot(&cols.t()); // (f, ck)
        {
            let dwv = dw.into_shape_with_order((f, c, k)).expect("contiguous");
            grads.weight += &dwv;
        }
        for fi in 0..f {
            grads.bias[fi] += g_mat.row(fi).sum();
        }

        let w_mat = self
            .weight
            .view()
            .into_shape_with_order((f, ck))
            .expect("contiguous weight");
        let dcols = w_mat.t().dot(&g_mat); // (ck, cols_len)
        self.col2im(&dcols, n, c, h, w, w_out)
    }

    fn im2col(&self, x: &Array4<f64>, w_out: usize) -> Array2<f64> {
        let (n, c, h, w) = x.dim();
        let k = self.kernel_w();
        let pad_l = self.pad_left() as isize;
        let cols_len = n * h * w_out;
        let mut cols = Array2::<f64>::zeros((c * k, cols_len));
        let xs = x.as_slice().expect("contiguous");
        let cs = cols.as_slice_mut().expect("contiguous");
        for ci in 0..c {
            for dk in 0..k {
                let row_off = (ci * k + dk) * cols_len;
                let shift = dk as isize - pad_l;
                let wo_start = (-shift).max(0) as usize;
                let wo_end = ((w as isize - shift).min(w_out as isize)).max(0) as usize;
                if wo_end <= wo_start {
                    continue;
                }
                let span = wo_end - wo_start;
                let src_start = (wo_start as isize + shift) as usize;
                for ni in 0..n {
                    for hi in 0..h {
                        let dst = row_off + (ni * h + hi) * w_out + wo_start;
                        let src = ((ni * c + ci) * h + hi) * w + src_start;
                        cs[dst..dst + span].copy_from_slice(&xs[src..src + span]);
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: &Array2<f64>, n: usize, c: usize, h: usize, w: usize, w_out: usize) -> Array4<f64> {
        let k = self.kernel_w();
        let pad_l = self.pad_left() as isize;
        let cols_len = n * h * w_out;
        let mut dx = Array4::<f64>::zeros((n, c, h, w));
        let ds = dcols.as_slice().expect("contiguous");
        let xs = dx.as_slice_mut().expect("contiguous");
        for ci in 0..c {
            for dk in 0..k {
                let row_off = (ci * k + dk) * cols_len;
                let shift = dk as isize - pad_l;
                let wo_start = (-shift).max(0) as usize;
                let wo_end = ((w as isize - shift).min(w_out as isize)).max(0) as usize;
                if wo_end <= wo_start {
                    continue;
                }
                let span = wo_end - wo_start;
                let src_start = (wo_start as isize + shift) as usize;
                for ni in 0..n {
                    for hi in 0..h {
                        let col = row_off + (ni * h + hi) * w_out + wo_start;
                        let dst = ((ni * c + ci) * h + hi) * w + src_start;
                        for i in 0..span {
                            xs[dst + i] += ds[col + i];
                        }
                    }
                }
            }
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use ndarray::Array4;
    use rand::Rng;

    fn reference_forward(conv: &RowConv, x: &Array4<f64>) -> Array4<f64> {
        let (n, c, h, w) = x.dim();
        let k = conv.kernel_w();
        let f = conv.out_channels();
        let w_out = conv.out_width(w);
        let pad_l = match conv.padding {
            Padding::Valid => 0isize,
            Padding::Same => ((k - 1) / 2) as isize,
        };
        let mut y = Array4::<f64>::zeros((n, f, h, w_out));
        for ni in 0..n {
            for fi in 0..f {
                for hi in 0..h {
                    for wo in 0..w_out {
                        let mut acc = conv.bias[fi];
                        for ci in 0..c {
                            for dk in 0..k {
                                let wi = wo as isize + dk as isize - pad_l;
                                if wi >= 0 && (wi as usize) < w {
                                    acc += conv.weight[[fi, ci, dk]] * x[[ni, ci, hi, wi as usize]];
                                }
                            }
                        }
                        y[[ni, fi, hi, wo]] = acc;
                    }
                }
            }
        }
        y
    }

    fn random_input(n: usize, c: usize, h: usize, w: usize, seed_val: u64) -> Array4<f64> {
        let mut rng = seed::rng(seed_val, 0xff, 0);
        let v: Vec<f64> = (0..n * c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        Array4::from_shape_vec((n, c, h, w), v).unwrap()
    }

    #[test]
    fn forward_matches_direct_convolution() {
        for padding in [Padding::Valid, Padding::Same] {
            let mut rng = seed::rng(1, 0xfe, 0);
            let conv = RowConv::new(3, 5, 3, padding, &mut rng);
            let x = random_input(2, 3, 4, 11, 9);
            let fast = conv.forward(&x);
            let slow = reference_forward(&conv, &x);
            assert_eq!(fast.dim(), slow.dim());
            for (a, b) in fast.iter().zip(slow.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn valid_padding_shrinks_width() {
        let mut rng = seed::rng(2, 0xfe, 0);
        let conv = RowConv::new(1, 4, 3, Padding::Valid, &mut rng);
        assert_eq!(conv.out_width(100), 98);
        let same = RowConv::new(1, 4, 3, Padding::Same, &mut rng);
        assert_eq!(same.out_width(100), 100);
    }

    #[test]
    fn backward_matches_finite_differences() {
        for padding in [Padding::Valid, Padding::Same] {
            let mut rng = seed::rng(3, 0xfe, 1);
            let conv = RowConv::new(2, 3, 3, padding, &mut rng);
            let x = random_input(2, 2, 3, 7, 17);
            let w_out = conv.out_width(7);

            // loss = sum(forward(x) * t) for a fixed random t
            let t = random_input(2, 3, 3, w_out, 23);
            let loss = |conv: &RowConv, x: &Array4<f64>| (conv.forward(x) * &t).sum();

            let mut grads = RowConvGrads::zeros_like(&conv);
            let dx = conv.backward(&x, &t, &mut grads);

            let eps = 1e-6;
            let mut x_pert = x.clone();
            for idx in [[0, 0, 0, 0], [1, 1, 2, 6], [0, 1, 1, 3]] {
                let orig = x_pert[idx];
                x_pert[idx] = orig + eps;
                let up = loss(&conv, &x_pert);
                x_pert[idx] = orig - eps;
                let down = loss(&conv, &x_pert);
                x_pert[idx] = orig;
                let fd = (up - down) / (2.0 * eps);
                assert!((dx[idx] - fd).abs() < 1e-6, "dx mismatch at {idx:?}: {} vs {fd}", dx[idx]);
            }

            let mut conv_pert = conv.clone();
            for idx in [[0, 0, 0], [2, 1, 2], [1, 0, 1]] {
                let orig = conv_pert.weight[idx];
                conv_pert.weight[idx] = orig + eps;
                let up = loss(&conv_pert, &x);
                conv_pert.weight[idx] = orig - eps;
                let down = loss(&conv_pert, &x);
                conv_pert.weight[idx] = orig;
                let fd = (up - down) / (2.0 * eps);
                assert!((grads.weight[idx] - fd).abs() < 1e-6);
            }
        }
    }
}
