//! Finite-difference gradient checks shared by the integration targets.

#![allow(dead_code)]

use rand::Rng as _;
use reglab::energy::{energy_data_mse, energy_gradient, FeatureExtractor};
use reglab::nn::{Activation, Network};
use reglab::rng::{normal_vec, stream_rng, Rng};

pub const FD_STEP: f64 = 1e-6;
/// Gradients smaller than this are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Default, Clone, Copy)]
pub struct GradReport {
    pub checked: usize,
    pub skipped: usize,
    pub failures: usize,
    pub max_rel: f64,
}

impl GradReport {
    fn record(&mut self, analytic: f64, fd: f64, tol: f64) {
        let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(REL_FLOOR);
        self.checked += 1;
        self.max_rel = self.max_rel.max(rel);
        if rel > tol {
            self.failures += 1;
        }
    }

    pub fn merge(&mut self, o: GradReport) {
        self.checked += o.checked;
        self.skipped += o.skipped;
        self.failures += o.failures;
        self.max_rel = self.max_rel.max(o.max_rel);
    }
}

const ACTS: [Activation; 4] = [Activation::Relu, Activation::LeakyRelu, Activation::Tanh, Activation::Identity];

/// Random dense net with 1–3 layers and at most 32 units per layer.
pub fn random_net(rng: &mut Rng, seed: u64) -> Network {
    let layers = rng.random_range(1..=3);
    let mut dims = vec![rng.random_range(1..=32)];
    let mut acts = Vec::new();
    for _ in 0..layers {
        dims.push(rng.random_range(1..=32));
        acts.push(ACTS[rng.random_range(0..ACTS.len())]);
    }
    Network::new(&dims, &acts, seed).unwrap()
}

fn scalar_loss(net: &Network, x: &[f64], w: &[f64]) -> (f64, Vec<bool>) {
    let (y, tape) = net.forward(x).unwrap();
    (y.iter().zip(w).map(|(a, b)| a * b).sum(), net.activation_pattern(&tape))
}

/// Checks every parameter and input gradient of `L = w·net(x)` for one random net.
pub fn check_network(seed: u64, tol: f64) -> GradReport {
    let mut rng = stream_rng(seed, 0x6772);
    let net = random_net(&mut rng, seed);
    let x = normal_vec(&mut rng, net.input_dim());
    let w = normal_vec(&mut rng, net.output_dim());
    let (_, tape) = net.forward(&x).unwrap();
    let (pg, ig) = net.backward(&tape, &w).unwrap();
    let base_pattern = net.activation_pattern(&tape);
    let mut report = GradReport::default();

    for i in 0..net.num_params() {
        let shifted = |delta: f64| {
            let mut p = net.params().to_vec();
            p[i] += delta;
            let n = Network::from_params(&net.dims(), &net.activations(), p).unwrap();
            scalar_loss(&n, &x, &w)
        };
        let (lp, pp) = shifted(FD_STEP);
        let (lm, pm) = shifted(-FD_STEP);
        if pp != base_pattern || pm != base_pattern {
            report.skipped += 1;
            continue;
        }
        report.record(pg[i], (lp - lm) / (2.0 * FD_STEP), tol);
    }
    for i in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += FD_STEP;
        xm[i] -= FD_STEP;
        let (lp, pp) = scalar_loss(&net, &xp, &w);
        let (lm, pm) = scalar_loss(&net, &xm, &w);
        if pp != base_pattern || pm != base_pattern {
            report.skipped += 1;
            continue;
        }
        report.record(ig[i], (lp - lm) / (2.0 * FD_STEP), tol);
    }
    report
}

/// Mean data-MSE energy of a generator batch, plus the activation patterns
/// of generator and extractor (for kink detection).
fn batch_energy(g: &Network, zs: &[Vec<f64>], refs: &[Vec<f64>], f: &FeatureExtractor) -> (f64, Vec<bool>) {
    let mut total = 0.0;
    let mut pattern = Vec::new();
    for z in zs {
        let (x, gt) = g.forward(z).unwrap();
        pattern.extend(g.activation_pattern(&gt));
        let (_, ft) = f.network().forward(&normalize(f, &x)).unwrap();
        pattern.extend(f.network().activation_pattern(&ft));
        total += energy_data_mse(&x, refs, f).unwrap();
    }
    (total / zs.len() as f64, pattern)
}

fn normalize(f: &FeatureExtractor, x: &[f64]) -> Vec<f64> {
    let n = f.normalization();
    x.iter().zip(&n.mean).zip(&n.std).map(|((v, m), s)| (v - m) / s).collect()
}

/// Checks the generator-parameter gradient of `(1/B) Σ E_f(G(z_i))`,
/// with the energy gradient chained through a frozen extractor.
pub fn check_energy_through_generator(seed: u64, tol: f64) -> GradReport {
    let mut rng = stream_rng(seed, 0x6567);
    let latent = rng.random_range(1..=4);
    let hidden = rng.random_range(2..=16);
    let g = Network::new(&[latent, hidden, 2], &[Activation::LeakyRelu, Activation::Identity], seed).unwrap();
    let fh = rng.random_range(2..=16);
    let f_act = [Activation::Tanh, Activation::LeakyRelu][rng.random_range(0..2)];
    let f = FeatureExtractor::random(&[2, fh, rng.random_range(1..=8)], f_act, seed ^ 0xf).unwrap();
    let refs: Vec<Vec<f64>> = (0..rng.random_range(1..=6)).map(|_| normal_vec(&mut rng, 2)).collect();
    let zs: Vec<Vec<f64>> = (0..rng.random_range(2..=5)).map(|_| normal_vec(&mut rng, latent)).collect();

    let b = zs.len() as f64;
    let mut grads = vec![0.0; g.num_params()];
    for z in &zs {
        let (x, tape) = g.forward(z).unwrap();
        let ge: Vec<f64> = energy_gradient(&x, &refs, &f).unwrap().iter().map(|v| v / b).collect();
        g.backward_accumulate(&tape, &ge, &mut grads).unwrap();
    }
    let (_, base_pattern) = batch_energy(&g, &zs, &refs, &f);
    let mut report = GradReport::default();
    for i in 0..g.num_params() {
        let shifted = |delta: f64| {
            let mut p = g.params().to_vec();
            p[i] += delta;
            let n = Network::from_params(&g.dims(), &g.activations(), p).unwrap();
            batch_energy(&n, &zs, &refs, &f)
        };
        let (lp, pp) = shifted(FD_STEP);
        let (lm, pm) = shifted(-FD_STEP);
        if pp != base_pattern || pm != base_pattern {
            report.skipped += 1;
            continue;
        }
        report.record(grads[i], (lp - lm) / (2.0 * FD_STEP), tol);
    }
    report
}
