//! Dense feedforward networks with exact reverse-mode gradients.
//!
//! Parameters of all layers live in one flat buffer (per layer: row-major
//! weight matrix `out × in`, then bias), so gradients and optimizer state are
//! plain slices of the same layout.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng as _;

use crate::error::{invalid, Error, Result};
use crate::rng::stream_rng;

pub const LEAKY_SLOPE: f64 = 0.2;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// Slope [`LEAKY_SLOPE`] on the negative side.
    LeakyRelu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative at pre-activation `z` (one-sided at the kink).
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "leaky_relu" => Ok(Activation::LeakyRelu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(invalid(format!("unknown activation '{other}'"))),
        }
    }

    fn is_piecewise_linear(self) -> bool {
        matches!(self, Activation::Relu | Activation::LeakyRelu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    n_in: usize,
    n_out: usize,
    act: Activation,
    offset: usize,
}

impl Layer {
    fn n_params(&self) -> usize {
        self.n_out * (self.n_in + 1)
    }

    fn bias_offset(&self) -> usize {
        self.offset + self.n_out * self.n_in
    }
}

/// Dense feedforward network.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
    params: Vec<f64>,
    id: u64,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.params == other.params
    }
}

/// Activations recorded by [`Network::forward`].
#[derive(Debug, Clone)]
pub struct Tape {
    net_id: u64,
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
}

impl Tape {
    pub fn preactivations(&self) -> &[Vec<f64>] {
        &self.pre
    }
}

impl Network {
    /// Random network: `dims = [in, h1, ..., out]`, one activation per layer.
    /// Weights and biases are uniform in `±1/sqrt(fan_in)`.
    pub fn new(dims: &[usize], acts: &[Activation], seed: u64) -> Result<Self> {
        let layers = Self::layout(dims, acts)?;
        let n: usize = layers.iter().map(Layer::n_params).sum();
        let mut rng = stream_rng(seed, 0x6e6e);
        let mut params = Vec::with_capacity(n);
        for l in &layers {
            let bound = 1.0 / (l.n_in as f64).sqrt();
            for _ in 0..l.n_params() {
                params.push(rng.random_range(-bound..bound));
            }
        }
        Ok(Self { layers, params, id: fresh_id() })
    }

    pub fn from_params(dims: &[usize], acts: &[Activation], params: Vec<f64>) -> Result<Self> {
        let layers = Self::layout(dims, acts)?;
        let n: usize = layers.iter().map(Layer::n_params).sum();
        if params.len() != n {
            return Err(invalid(format!("expected {n} parameters, got {}", params.len())));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(invalid("parameters must be finite"));
        }
        Ok(Self { layers, params, id: fresh_id() })
    }

    fn layout(dims: &[usize], acts: &[Activation]) -> Result<Vec<Layer>> {
        if dims.len() < 2 {
            return Err(invalid("network needs at least an input and an output dimension"));
        }
        if acts.len() != dims.len() - 1 {
            return Err(invalid(format!("{} layers need {} activations, got {}", dims.len() - 1, dims.len() - 1, acts.len())));
        }
        if dims.contains(&0) {
            return Err(invalid("layer widths must be positive"));
        }
        let mut offset = 0;
        Ok(dims
            .windows(2)
            .zip(acts)
            .map(|(w, &act)| {
                let l = Layer { n_in: w[0], n_out: w[1], act, offset };
                offset += l.n_params();
                l
            })
            .collect())
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].n_in).chain(self.layers.iter().map(|l| l.n_out)).collect()
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.act).collect()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutates parameters in place; invalidates outstanding tapes.
    pub fn update_params<F: FnOnce(&mut [f64])>(&mut self, f: F) {
        f(&mut self.params);
        self.id = fresh_id();
    }

    /// `(weights, bias)` of layer `i`, weights row-major `out × in`.
    pub fn layer(&self, i: usize) -> (&[f64], &[f64]) {
        let l = &self.layers[i];
        (&self.params[l.offset..l.bias_offset()], &self.params[l.bias_offset()..l.offset + l.n_params()])
    }

    /// First `n_layers` layers with the last activation replaced by identity,
    /// i.e. the pre-activation output of layer `n_layers - 1`.
    pub fn truncated(&self, n_layers: usize) -> Result<Network> {
        if n_layers == 0 || n_layers > self.layers.len() {
            return Err(invalid(format!("cannot keep {n_layers} of {} layers", self.layers.len())));
        }
        let mut layers = self.layers[..n_layers].to_vec();
        layers[n_layers - 1].act = Activation::Identity;
        let end = layers[n_layers - 1].offset + layers[n_layers - 1].n_params();
        Ok(Network { layers, params: self.params[..end].to_vec(), id: fresh_id() })
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(invalid(format!("input has dimension {}, network expects {}", x.len(), self.input_dim())));
        }
        Ok(())
    }

    fn affine(&self, l: &Layer, x: &[f64], z: &mut Vec<f64>) {
        z.clear();
        let w = &self.params[l.offset..l.bias_offset()];
        let b = &self.params[l.bias_offset()..l.offset + l.n_params()];
        for (row, &bias) in w.chunks_exact(l.n_in).zip(b) {
            z.push(row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias);
        }
    }

    /// Output without recording a tape.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut z = Vec::new();
        for l in &self.layers {
            self.affine(l, &cur, &mut z);
            cur.clear();
            cur.extend(z.iter().map(|&v| l.act.apply(v)));
        }
        Ok(cur)
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Tape)> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for l in &self.layers {
            let mut z = Vec::with_capacity(l.n_out);
            self.affine(l, &cur, &mut z);
            let a: Vec<f64> = z.iter().map(|&v| l.act.apply(v)).collect();
            inputs.push(std::mem::replace(&mut cur, a));
            pre.push(z);
        }
        Ok((cur, Tape { net_id: self.id, inputs, pre }))
    }

    /// Parameter gradient (flat layout) and input gradient for `out_grad = dL/d(output)`.
    pub fn backward(&self, tape: &Tape, out_grad: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut grads = vec![0.0; self.params.len()];
        let input_grad = self.backward_accumulate(tape, out_grad, &mut grads)?;
        Ok((grads, input_grad))
    }

    /// Like [`backward`](Self::backward) but adds the parameter gradient into `grads`.
    pub fn backward_accumulate(&self, tape: &Tape, out_grad: &[f64], grads: &mut [f64]) -> Result<Vec<f64>> {
        self.check_tape(tape, out_grad)?;
        if grads.len() != self.params.len() {
            return Err(invalid("gradient buffer does not match parameter count"));
        }
        self.backprop(tape, out_grad, Some(grads))
    }

    /// Input gradient only.
    pub fn input_gradient(&self, tape: &Tape, out_grad: &[f64]) -> Result<Vec<f64>> {
        self.check_tape(tape, out_grad)?;
        self.backprop(tape, out_grad, None)
    }

    fn check_tape(&self, tape: &Tape, out_grad: &[f64]) -> Result<()> {
        if tape.net_id != self.id {
            return Err(invalid("stale tape: network changed since the forward pass"));
        }
        if out_grad.len() != self.output_dim() {
            return Err(invalid(format!("output gradient has dimension {}, expected {}", out_grad.len(), self.output_dim())));
        }
        Ok(())
    }

    fn backprop(&self, tape: &Tape, out_grad: &[f64], mut grads: Option<&mut [f64]>) -> Result<Vec<f64>> {
        let mut delta = out_grad.to_vec();
        for (i, l) in self.layers.iter().enumerate().rev() {
            for (d, &z) in delta.iter_mut().zip(&tape.pre[i]) {
                *d *= l.act.derivative(z);
            }
            let x = &tape.inputs[i];
            if let Some(g) = grads.as_deref_mut() {
                let (gw, gb) = g[l.offset..l.offset + l.n_params()].split_at_mut(l.n_out * l.n_in);
                for ((row, gbias), &d) in gw.chunks_exact_mut(l.n_in).zip(gb.iter_mut()).zip(&delta) {
                    for (gr, &xv) in row.iter_mut().zip(x) {
                        *gr += d * xv;
                    }
                    *gbias += d;
                }
            }
            let w = &self.params[l.offset..l.bias_offset()];
            let mut prev = vec![0.0; l.n_in];
            for (row, &d) in w.chunks_exact(l.n_in).zip(&delta) {
                for (p, &wv) in prev.iter_mut().zip(row) {
                    *p += wv * d;
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// True if any piecewise-linear unit sits exactly on its kink.
    pub fn on_kink(&self, tape: &Tape) -> bool {
        self.layers
            .iter()
            .zip(&tape.pre)
            .any(|(l, z)| l.act.is_piecewise_linear() && z.contains(&0.0))
    }

    /// Sign pattern of piecewise-linear units (for finite-difference validity checks).
    pub fn activation_pattern(&self, tape: &Tape) -> Vec<bool> {
        self.layers
            .iter()
            .zip(&tape.pre)
            .filter(|(l, _)| l.act.is_piecewise_linear())
            .flat_map(|(_, z)| z.iter().map(|&v| v > 0.0))
            .collect()
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self::with_betas(n_params, lr, 0.9, 0.999)
    }

    pub fn with_betas(n_params: usize, lr: f64, beta1: f64, beta2: f64) -> Self {
        Self { lr, beta1, beta2, eps: 1e-8, m: vec![0.0; n_params], v: vec![0.0; n_params], step: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update of `params` against `grads`. Non-finite gradients leave
    /// both parameters and state untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(invalid(format!(
                "optimizer holds {} moments, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NumericalError {
                step: self.step as usize + 1,
                what: format!("non-finite gradient {} at parameter {i}", grads[i]),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let mhat = *m / c1;
            let vhat = *v / c2;
            *p -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }

    pub fn step_network(&mut self, net: &mut Network, grads: &[f64]) -> Result<()> {
        let mut out = Ok(());
        net.update_params(|p| out = self.step(p, grads));
        out
    }
}
