//! Minimal fully connected network: dense layers, leaky-rectifier hidden
//! activations, manual backpropagation and Adam.
//!
//! Batches are row-major `batch x width` buffers. The output layer is linear;
//! callers attach their own head (logistic for the regressor, softmax for the
//! toy classifier) and hand back the gradient of the loss w.r.t. the logits.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub const LEAKY_SLOPE: f64 = 0.01;
/// Initial bias; keeps pre-activations of an all-zero input off the kink.
pub const INITIAL_BIAS: f64 = 0.01;

/// `c = alpha * a(m x k) * b(k x n) + beta * c`, all row-major unless the
/// `*_t` flag asks for the stored matrix to be read transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slice lengths are checked above and the strides describe
    // exactly those buffers; `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn leaky_relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

fn leaky_relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `inputs x outputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// He-normal weights, [`INITIAL_BIAS`] biases.
    pub fn random<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let std = (2.0 / inputs.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        Dense {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| normal.sample(rng)).collect(),
            bias: vec![INITIAL_BIAS; outputs],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn forward(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let mut z = Vec::with_capacity(batch * self.outputs);
        for _ in 0..batch {
            z.extend_from_slice(&self.bias);
        }
        gemm(
            batch,
            self.inputs,
            self.outputs,
            1.0,
            x,
            false,
            &self.weights,
            false,
            1.0,
            &mut z,
        );
        z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations kept from a forward pass for backpropagation.
pub struct Trace {
    batch: usize,
    /// Input to each layer (`inputs[0]` is the network input).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn random<R: Rng>(dims: &[usize], rng: &mut R) -> Self {
        Mlp {
            layers: dims.windows(2).map(|w| Dense::random(w[0], w[1], rng)).collect(),
        }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Mlp {
            layers: dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers.first().map_or(0, |l| l.inputs)];
        dims.extend(self.layers.iter().map(|l| l.outputs));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Logits for a batch, without keeping intermediate activations.
    pub fn forward(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let mut h = self.layers[0].forward(x, batch);
        for layer in &self.layers[1..] {
            h.iter_mut().for_each(|v| *v = leaky_relu(*v));
            h = layer.forward(&h, batch);
        }
        h
    }

    /// Output of hidden layer `index` after its activation.
    pub fn hidden(&self, x: &[f64], batch: usize, index: usize) -> Vec<f64> {
        let mut h = x.to_vec();
        for layer in &self.layers[..=index] {
            h = layer.forward(&h, batch);
            h.iter_mut().for_each(|v| *v = leaky_relu(*v));
        }
        h
    }

    pub fn forward_trace(&self, x: &[f64], batch: usize) -> Trace {
        let mut inputs = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let last = self.layers.len() - 1;
        let mut logits = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(inputs.last().unwrap(), batch);
            if i == last {
                logits = z;
            } else {
                inputs.push(z.iter().map(|&v| leaky_relu(v)).collect());
                pre.push(z);
            }
        }
        Trace {
            batch,
            inputs,
            pre,
            logits,
        }
    }

    /// Parameter gradients given `d loss / d logits` for the traced batch.
    pub fn backward(&self, trace: &Trace, grad_logits: Vec<f64>) -> Gradients {
        let mut out = Gradients::zeros_like(self);
        self.backward_into(trace, grad_logits, &mut out);
        out
    }

    /// [`Mlp::backward`] writing into buffers shaped like this network.
    pub fn backward_into(&self, trace: &Trace, grad_logits: Vec<f64>, out: &mut Gradients) {
        let mut delta = grad_logits;
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &trace.inputs[i];
            gemm(
                layer.inputs,
                trace.batch,
                layer.outputs,
                1.0,
                input,
                true,
                &delta,
                false,
                0.0,
                &mut out.weights[i],
            );
            let b = &mut out.bias[i];
            b.iter_mut().for_each(|v| *v = 0.0);
            for row in delta.chunks_exact(layer.outputs) {
                for (acc, &d) in b.iter_mut().zip(row) {
                    *acc += d;
                }
            }
            if i > 0 {
                let mut prev = vec![0.0; trace.batch * layer.inputs];
                gemm(
                    trace.batch,
                    layer.outputs,
                    layer.inputs,
                    1.0,
                    &delta,
                    false,
                    &layer.weights,
                    true,
                    0.0,
                    &mut prev,
                );
                for (g, &z) in prev.iter_mut().zip(&trace.pre[i - 1]) {
                    *g *= leaky_relu_grad(z);
                }
                delta = prev;
            }
        }
    }

    /// Mutable view of every parameter, in a fixed order
    /// (layer by layer, weights before bias).
    pub fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for layer in &mut self.layers {
            if index < layer.weights.len() {
                return &mut layer.weights[index];
            }
            index -= layer.weights.len();
            if index < layer.bias.len() {
                return &mut layer.bias[index];
            }
            index -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn get(&self, mut index: usize) -> f64 {
        for (w, b) in self.weights.iter().zip(&self.bias) {
            if index < w.len() {
                return w[index];
            }
            index -= w.len();
            if index < b.len() {
                return b[index];
            }
            index -= b.len();
        }
        panic!("parameter index out of range");
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

pub struct Adam {
    cfg: AdamConfig,
    step: i32,
    m: Vec<(Vec<f64>, Vec<f64>)>,
    v: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(net: &Mlp, cfg: AdamConfig) -> Self {
        let zeros = || {
            net.layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                .collect::<Vec<_>>()
        };
        Adam {
            cfg,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    fn begin_step(&mut self) -> Moments {
        self.step += 1;
        let c = self.cfg;
        Moments {
            cfg: c,
            bc1: 1.0 - c.beta1.powi(self.step),
            bc2: 1.0 - c.beta2.powi(self.step),
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        let mo = self.begin_step();
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let (mw, mb) = &mut self.m[i];
            let (vw, vb) = &mut self.v[i];
            mo.update(&mut layer.weights, &grads.weights[i], mw, vw);
            mo.update(&mut layer.bias, &grads.bias[i], mb, vb);
        }
    }

    /// [`Mlp::backward_into`] followed by [`Adam::step`], with identical
    /// results. Weight gradients are produced [`FUSED_ROWS`] input rows at a
    /// time and applied while still in cache, so the full gradient of a wide
    /// first layer never travels through main memory.
    pub fn backward_step(&mut self, net: &mut Mlp, trace: &Trace, grad_logits: Vec<f64>, scratch: &mut Vec<f64>) {
        let mo = self.begin_step();
        let mut delta = grad_logits;
        for i in (0..net.layers.len()).rev() {
            let layer = &mut net.layers[i];
            let input = &trace.inputs[i];
            // the next delta needs this layer's weights before the update
            let next = (i > 0).then(|| {
                let mut prev = vec![0.0; trace.batch * layer.inputs];
                gemm(
                    trace.batch,
                    layer.outputs,
                    layer.inputs,
                    1.0,
                    &delta,
                    false,
                    &layer.weights,
                    true,
                    0.0,
                    &mut prev,
                );
                for (g, &z) in prev.iter_mut().zip(&trace.pre[i - 1]) {
                    *g *= leaky_relu_grad(z);
                }
                prev
            });

            let mut bias_grad = vec![0.0; layer.outputs];
            for row in delta.chunks_exact(layer.outputs) {
                for (acc, &d) in bias_grad.iter_mut().zip(row) {
                    *acc += d;
                }
            }
            let (mw, mb) = &mut self.m[i];
            let (vw, vb) = &mut self.v[i];
            mo.update(&mut layer.bias, &bias_grad, mb, vb);

            let out = layer.outputs;
            for r0 in (0..layer.inputs).step_by(FUSED_ROWS) {
                let rows = FUSED_ROWS.min(layer.inputs - r0);
                scratch.resize(rows * out, 0.0);
                weight_grad_rows(input, layer.inputs, trace.batch, r0, rows, &delta, out, scratch);
                let span = r0 * out..(r0 + rows) * out;
                mo.update(
                    &mut layer.weights[span.clone()],
                    scratch,
                    &mut mw[span.clone()],
                    &mut vw[span],
                );
            }
            if let Some(prev) = next {
                delta = prev;
            }
        }
    }
}

/// Input rows per weight-gradient block in [`Adam::backward_step`].
pub const FUSED_ROWS: usize = 64;

#[derive(Clone, Copy)]
struct Moments {
    cfg: AdamConfig,
    bc1: f64,
    bc2: f64,
}

impl Moments {
    fn update(&self, p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]) {
        // Wider vectors only change speed: every operation here is exactly
        // rounded and never fused, so all paths give identical bits.
        #[cfg(target_arch = "x86_64")]
        {
            if std::arch::is_x86_feature_detected!("avx512f") {
                // SAFETY: the feature was detected at runtime.
                return unsafe { self.update_avx512(p, g, m, v) };
            }
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: as above.
                return unsafe { self.update_avx2(p, g, m, v) };
            }
        }
        self.update_scalar(p, g, m, v)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx512f")]
    unsafe fn update_avx512(&self, p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]) {
        self.update_scalar(p, g, m, v)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn update_avx2(&self, p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]) {
        self.update_scalar(p, g, m, v)
    }

    #[inline(always)]
    fn update_scalar(&self, p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]) {
        let c = self.cfg;
        let (b1, b2) = (c.beta1, c.beta2);
        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= c.learning_rate * (*m / self.bc1) / ((*v / self.bc2).sqrt() + c.epsilon);
        }
    }
}

/// Rows `r0..r0 + rows` of `input^T * delta`, where `input` is
/// `batch x inputs` and `delta` is `batch x outputs`, row-major.
#[allow(clippy::too_many_arguments)]
fn weight_grad_rows(
    input: &[f64],
    inputs: usize,
    batch: usize,
    r0: usize,
    rows: usize,
    delta: &[f64],
    outputs: usize,
    out: &mut [f64],
) {
    assert!(r0 + rows <= inputs && input.len() == batch * inputs);
    assert!(delta.len() == batch * outputs && out.len() == rows * outputs);
    // SAFETY: element (r, b) of the transposed block sits at
    // input[b * inputs + r0 + r], inside `input` by the checks above.
    unsafe {
        matrixmultiply::dgemm(
            rows,
            batch,
            outputs,
            1.0,
            input.as_ptr().add(r0),
            1,
            inputs as isize,
            delta.as_ptr(),
            outputs as isize,
            1,
            0.0,
            out.as_mut_ptr(),
            outputs as isize,
            1,
        );
    }
}
