//! LSTM with forget gate (no peepholes) and a bi-directional wrapper.
//!
//! Only the final hidden state is consumed downstream, so backward takes
//! a gradient for that state alone and runs truncated-free BPTT over the
//! whole sequence. Gate blocks are ordered [input, forget, cell, output]
//! along the 4u axis.

use super::init::uniform_init;
use super::sigmoid;
use ndarray::{s, Array1, Array2, Array3, Axis};
use rand_chacha::ChaCha12Rng;

#[derive(Clone, Debug)]
pub struct Lstm {
    /// (4u, in)
    pub w_ih: Array2<f64>,
    /// (4u, u)
    pub w_hh: Array2<f64>,
    /// (4u)
    pub bias: Array1<f64>,
}

#[derive(Clone, Debug)]
pub struct LstmGrads {
    pub w_ih: Array2<f64>,
    pub w_hh: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LstmGrads {
    pub fn zeros_like(layer: &Lstm) -> Self {
        LstmGrads {
            w_ih: Array2::zeros(layer.w_ih.raw_dim()),
            w_hh: Array2::zeros(layer.w_hh.raw_dim()),
            bias: Array1::zeros(layer.bias.raw_dim()),
        }
    }
}

/// Per-step activations in processing order.
#[derive(Clone, Debug)]
pub struct LstmCache {
    gates: Vec<Array2<f64>>,
    cells: Vec<Array2<f64>>,
    tanh_c: Vec<Array2<f64>>,
    hidden: Vec<Array2<f64>>,
    reverse: bool,
}

impl Lstm {
    pub fn new(input_size: usize, units: usize, rng: &mut ChaCha12Rng) -> Self {
        let ih_limit = 1.0 / (input_size as f64).sqrt();
        let hh_limit = 1.0 / (units as f64).sqrt();
        Lstm {
            w_ih: uniform_init((4 * units, input_size), ih_limit, rng),
            w_hh: uniform_init((4 * units, units), hh_limit, rng),
            bias: Array1::zeros(4 * units),
        }
    }

    pub fn units(&self) -> usize {
        self.w_hh.dim().1
    }

    pub fn input_size(&self) -> usize {
        self.w_ih.dim().1
    }

    /// x: (N, T, in); returns the final hidden state (N, u).
    pub fn forward(&self, x: &Array3<f64>, reverse: bool) -> (Array2<f64>, LstmCache) {
        let (n, t_len, d) = x.dim();
        assert!(t_len > 0, "empty sequence");
        assert_eq!(d, self.input_size());
        let u = self.units();

        // One gemm for every step's input projection.
        let x_flat = x
            .view()
            .into_shape_with_order((n * t_len, d))
            .expect("contiguous sequence");
        let x_proj = x_flat.dot(&self.w_ih.t()); // (N*T, 4u)

        let mut cache = LstmCache {
            gates: Vec::with_capacity(t_len),
            cells: Vec::with_capacity(t_len),
            tanh_c: Vec::with_capacity(t_len),
            hidden: Vec::with_capacity(t_len),
            reverse,
        };
        let mut h = Array2::<f64>::zeros((n, u));
        let mut c = Array2::<f64>::zeros((n, u));

        for step in 0..t_len {
            let t = if reverse { t_len - 1 - step } else { step };
            let mut z = h.dot(&self.w_hh.t()); // (N, 4u)
            for ni in 0..n {
                let mut row = z.row_mut(ni);
                row += &x_proj.row(ni * t_len + t);
                row += &self.bias;
            }
            // activate gates in place: [i, f, g, o]
            for ni in 0..n {
                for j in 0..u {
                    z[[ni, j]] = sigmoid(z[[ni, j]]);
                    z[[ni, u + j]] = sigmoid(z[[ni, u + j]]);
                    z[[ni, 2 * u + j]] = z[[ni, 2 * u + j]].tanh();
                    z[[ni, 3 * u + j]] = sigmoid(z[[ni, 3 * u + j]]);
                }
            }
            let mut tanh_c = Array2::<f64>::zeros((n, u));
            for ni in 0..n {
                for j in 0..u {
                    let i_g = z[[ni, j]];
                    let f_g = z[[ni, u + j]];
                    let g_g = z[[ni, 2 * u + j]];
                    let o_g = z[[ni, 3 * u + j]];
                    let c_new = f_g * c[[ni, j]] + i_g * g_g;
                    c[[ni, j]] = c_new;
                    let tc = c_new.tanh();
                    tanh_c[[ni, j]] = tc;
                    h[[ni, j]] = o_g * tc;
                }
            }
            cache.gates.push(z);
            cache.cells.push(c.clone());
            cache.tanh_c.push(tanh_c);
            cache.hidden.push(h.clone());
        }
        (h, cache)
    }

    /// BPTT from a gradient on the final hidden state. Returns dx.
    pub fn backward(
        &self,
        x: &Array3<f64>,
        cache: &LstmCache,
        d_final: &Array2<f64>,
        grads: &mut LstmGrads,
    ) -> Array3<f64> {
        let (n, t_len, d) = x.dim();
        let u = self.units();
        let mut dh = d_final.clone();
        let mut dc = Array2::<f64>::zeros((n, u));
        let mut dz_all = Array2::<f64>::zeros((n * t_len, 4 * u));

        for step in (0..t_len).rev() {
            let t = if cache.reverse { t_len - 1 - step } else { step };
            let gates = &cache.gates[step];
            let tanh_c = &cache.tanh_c[step];
            let mut dz = Array2::<f64>::zeros((n, 4 * u));
            for ni in 0..n {
                for j in 0..u {
                    let i_g = gates[[ni, j]];
                    let f_g = gates[[ni, u + j]];
                    let g_g = gates[[ni, 2 * u + j]];
                    let o_g = gates[[ni, 3 * u + j]];
                    let tc = tanh_c[[ni, j]];
                    let c_prev = if step == 0 { 0.0 } else { cache.cells[step - 1][[ni, j]] };

                    let dh_v = dh[[ni, j]];
                    let do_v = dh_v * tc;
                    let dc_v = dc[[ni, j]] + dh_v * o_g * (1.0 - tc * tc);
                    let di_v = dc_v * g_g;
                    let dg_v = dc_v * i_g;
                    let df_v = dc_v * c_prev;

                    dz[[ni, j]] = di_v * i_g * (1.0 - i_g);
                    dz[[ni, u + j]] = df_v * f_g * (1.0 - f_g);
                    dz[[ni, 2 * u + j]] = dg_v * (1.0 - g_g * g_g);
                    dz[[ni, 3 * u + j]] = do_v * o_g * (1.0 - o_g);

                    dc[[ni, j]] = dc_v * f_g;
                }
            }
            // dW_hh via h_{t-1}; dh for the previous step via W_hh.
            if step == 0 {
                // h_prev is zeros: contributes nothing to dW_hh.
                dh = Array2::zeros((n, u));
            } else {
                let h_prev = &cache.hidden[step - 1];
                grads.w_hh += &dz.t().dot(h_prev);
                dh = dz.dot(&self.w_hh);
            }
            grads.bias += &dz.sum_axis(Axis(0));
            for ni in 0..n {
                dz_all.row_mut(ni * t_len + t).assign(&dz.row(ni));
            }
        }

        let x_flat = x
            .view()
            .into_shape_with_order((n * t_len, d))
            .expect("contiguous sequence");
        grads.w_ih += &dz_all.t().dot(&x_flat);
        let dx_flat = dz_all.dot(&self.w_ih);
        dx_flat
            .into_shape_with_order((n, t_len, d))
            .expect("contiguous")
    }
}

/// Two LSTMs over opposite directions; output is the concatenation of
/// both final hidden states: (N, 2u).
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

#[derive(Clone, Debug)]
pub struct BiLstmCache {
    pub fwd: LstmCache,
    pub bwd: LstmCache,
}

#[derive(Clone, Debug)]
pub struct BiLstmGrads {
    pub fwd: LstmGrads,
    pub bwd: LstmGrads,
}

impl BiLstmGrads {
    pub fn zeros_like(layer: &BiLstm) -> Self {
        BiLstmGrads {
            fwd: LstmGrads::zeros_like(&layer.fwd),
            bwd: LstmGrads::zeros_like(&layer.bwd),
        }
    }
}

impl BiLstm {
    pub fn new(input_size: usize, units: usize, rng: &mut ChaCha12Rng) -> Self {
        BiLstm {
            fwd: Lstm::new(input_size, units, rng),
            bwd: Lstm::new(input_size, units, rng),
        }
    }

    pub fn units(&self) -> usize {
        self.fwd.units()
    }

    pub fn output_size(&self) -> usize {
        2 * self.units()
    }

    pub fn forward(&self, x: &Array3<f64>) -> (Array2<f64>, BiLstmCache) {
        let (hf, cf) = self.fwd.forward(x, false);
        let (hb, cb) = self.bwd.forward(x, true);
        let n = x.dim().0;
        let u = self.units();
        let mut out = Array2::<f64>::zeros((n, 2 * u));
        out.slice_mut(s![.., ..u]).assign(&hf);
        out.slice_mut(s![.., u..]).assign(&hb);
        (out, BiLstmCache { fwd: cf, bwd: cb })
    }

    pub fn backward(
        &self,
        x: &Array3<f64>,
        cache: &BiLstmCache,
        d_out: &Array2<f64>,
        grads: &mut BiLstmGrads,
    ) -> Array3<f64> {
        let u = self.units();
        let d_fwd = d_out.slice(s![.., ..u]).to_owned();
        let d_bwd = d_out.slice(s![.., u..]).to_owned();
        let dx_f = self.fwd.backward(x, &cache.fwd, &d_fwd, &mut grads.fwd);
        let dx_b = self.bwd.backward(x, &cache.bwd, &d_bwd, &mut grads.bwd);
        dx_f + dx_b
    }
}
