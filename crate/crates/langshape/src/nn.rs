//! Minimal dense neural-network plumbing shared by the classifier and the
//! policy networks: linear layers, ReLU, a numerically stable softmax
//! cross-entropy head, and an Adam optimizer over flattened parameters.
//!
//! All math is f64. Backward passes are hand-derived and are checked against
//! central finite differences in the test suites.

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub type Mat = Array2<f64>;
pub type Vector = Array1<f64>;

/// Visitor over a model's named parameter tensors, in a fixed order.
///
/// The order defines the flattened layout used by [`Adam`], checkpoints and
/// gradient checks, so implementations must visit fields deterministically.
pub trait TensorVisit {
    fn visit(&self, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>));

    fn n_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.len());
        n
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        self.visit(&mut |_, t| out.extend(t.iter().copied()));
        out
    }

    fn load_flat(&mut self, data: &[f64]) {
        let mut pos = 0;
        self.visit_mut(&mut |_, mut t| {
            for x in t.iter_mut() {
                *x = data[pos];
                pos += 1;
            }
        });
        assert_eq!(pos, data.len(), "flat parameter length mismatch");
    }

    /// Named shapes, used by checkpoints to validate on load.
    fn tensor_specs(&self) -> Vec<(String, Vec<usize>)> {
        let mut specs = Vec::new();
        self.visit(&mut |name, t| specs.push((name.to_string(), t.shape().to_vec())));
        specs
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, t| ok &= t.iter().all(|x| x.is_finite()));
        ok
    }
}

/// Fully-connected layer `y = x·W + b` with `W: (in, out)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Linear {
    pub w: Mat,
    pub b: Vector,
}

impl Linear {
    /// Kaiming-style uniform init: `U(±sqrt(6/fan_in))`, zero bias.
    pub fn init(d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / d_in as f64).sqrt();
        let w = Mat::from_shape_fn((d_in, d_out), |_| rng.gen_range(-limit..limit));
        Linear {
            w,
            b: Vector::zeros(d_out),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Linear {
            w: Mat::zeros(self.w.raw_dim()),
            b: Vector::zeros(self.b.raw_dim()),
        }
    }

    pub fn forward(&self, x: &Mat) -> Mat {
        let mut y = x.dot(&self.w);
        y += &self.b;
        y
    }

    /// Backprop through the layer. `x` is the forward input, `dy` the
    /// gradient w.r.t. the output; gradients are accumulated into `grad`.
    /// Returns the gradient w.r.t. `x`.
    pub fn backward(&self, x: &Mat, dy: &Mat, grad: &mut Linear) -> Mat {
        grad.w += &x.t().dot(dy);
        grad.b += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.t())
    }

    fn visit_with(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        f(&format!("{prefix}.w"), self.w.view().into_dyn());
        f(&format!("{prefix}.b"), self.b.view().into_dyn());
    }

    fn visit_mut_with(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        f(&format!("{prefix}.w"), self.w.view_mut().into_dyn());
        f(&format!("{prefix}.b"), self.b.view_mut().into_dyn());
    }
}

/// Helper so composite models can forward nested layers to the visitor.
pub fn visit_linear(prefix: &str, l: &Linear, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
    l.visit_with(prefix, f);
}

pub fn visit_linear_mut(
    prefix: &str,
    l: &mut Linear,
    f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>),
) {
    l.visit_mut_with(prefix, f);
}

pub fn relu(x: &Mat) -> Mat {
    x.mapv(|v| v.max(0.0))
}

/// Backward of ReLU given the forward *output* `y`.
pub fn relu_backward(y: &Mat, dy: &Mat) -> Mat {
    let mut dx = dy.clone();
    dx.zip_mut_with(y, |d, &v| {
        if v <= 0.0 {
            *d = 0.0;
        }
    });
    dx
}

/// Row-wise softmax with the max-subtraction trick; safe for logits up to
/// around ±700 and exact for the ±500 range required of the head.
pub fn softmax(logits: &Mat) -> Mat {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    p
}

/// Mean cross-entropy of `logits` against integer `labels`.
/// Returns `(loss, probs)`; the log is taken via log-sum-exp, not `p.ln()`.
pub fn softmax_cross_entropy(logits: &Mat, labels: &[usize]) -> (f64, Mat) {
    assert_eq!(logits.nrows(), labels.len());
    let probs = softmax(logits);
    let mut loss = 0.0;
    for (i, row) in logits.rows().into_iter().enumerate() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[labels[i]];
    }
    (loss / labels.len() as f64, probs)
}

/// Gradient of the mean cross-entropy w.r.t. the logits: `(p - onehot)/B`.
pub fn softmax_cross_entropy_backward(probs: &Mat, labels: &[usize]) -> Mat {
    let b = labels.len() as f64;
    let mut d = probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        d[(i, y)] -= 1.0;
    }
    d.mapv_inplace(|v| v / b);
    d
}

/// Adam configuration; defaults follow the classifier training setup.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam over a flattened parameter vector with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, n_params: usize) -> Self {
        Adam {
            cfg,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= c.lr * mhat / (vhat.sqrt() + c.eps);
        }
    }
}
