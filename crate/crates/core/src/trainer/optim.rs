//! Adam and plain SGD over flat lists of parameter views.

use ndarray::{ArrayD, ArrayViewD, ArrayViewMutD};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    /// Adaptive moment estimation (beta1 0.9, beta2 0.999, eps 1e-8).
    Adam,
    /// Plain gradient descent.
    Sgd,
}

pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    t: u64,
    m: Vec<ArrayD<f64>>,
    v: Vec<ArrayD<f64>>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer { kind, lr, t: 0, m: Vec::new(), v: Vec::new() }
    }

    /// Applies one update. `params` and `grads` must be aligned; moment
    /// state is lazily initialized from the first call.
    pub fn step(&mut self, mut params: Vec<ArrayViewMutD<'_, f64>>, grads: &[ArrayViewD<'_, f64>]) {
        assert_eq!(params.len(), grads.len(), "param/grad list mismatch");
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    p.zip_mut_with(g, |pv, &gv| *pv -= self.lr * gv);
                }
            }
            OptimizerKind::Adam => {
                if self.m.is_empty() {
                    self.m = grads.iter().map(|g| ArrayD::zeros(g.raw_dim())).collect();
                    self.v = grads.iter().map(|g| ArrayD::zeros(g.raw_dim())).collect();
                }
                self.t += 1;
                let c1 = 1.0 - BETA1.powi(self.t as i32);
                let c2 = 1.0 - BETA2.powi(self.t as i32);
                for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(&mut self.v)) {
                    let ps = p.as_slice_mut().expect("contiguous param");
                    let gs = g.as_slice().expect("contiguous grad");
                    let ms = m.as_slice_mut().expect("contiguous");
                    let vs = v.as_slice_mut().expect("contiguous");
                    for i in 0..ps.len() {
                        ms[i] = BETA1 * ms[i] + (1.0 - BETA1) * gs[i];
                        vs[i] = BETA2 * vs[i] + (1.0 - BETA2) * gs[i] * gs[i];
                        let m_hat = ms[i] / c1;
                        let v_hat = vs[i] / c2;
                        ps[i] -= self.lr * m_hat / (v_hat.sqrt() + EPS);
                    }
                }
            }
        }
    }
}
