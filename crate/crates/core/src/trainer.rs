//! Energy-regularized GAN training on 2-D toy data, plus a gradient-descent
//! check of the regularized Gaussian fit.
//!
//! Discriminator: binary cross-entropy on logits. Generator: non-saturating
//! loss `softplus(-D(G(z)))` plus `λ·mean_i E(G(z_i))`, with the energy
//! gradient flowing through the frozen extractor into the generator only.
//!
//! Random streams of one run (all derived from `cfg.seed`):
//! * main stream: real minibatch indices and latent draws,
//! * energy stream: reference draws of the single-sample energy estimate,
//! * evaluation stream: the fixed latent batch used for metrics.
//!
//! With `λ = 0` the energy stream is never touched and no energy is
//! evaluated, so the run is bit-identical to [`train_baseline`].

use crate::energy::{
    entropy_gradient, feature_matching_gradients, normalization_from_points, EnergyConfig, EnergyKind,
    FeatureExtractor, ReferenceFeatures,
};
use crate::error::{invalid, Error, Result};
use crate::gaussian::GaussianSpec;
use crate::metrics::{frechet_gaussian, median_bandwidth, mmd2};
use crate::nn::{Activation, Adam, Network, Tape};
use crate::par::{map_indexed, Exec};
use crate::rng::{derive_seed, normal_vec, stream_rng, Rng};
use crate::toy::{auxiliary_sample, Perturbation, ToyDataset, ToyFamily};

use rand::Rng as _;

const MAIN_STREAM: u64 = 1;
const ENERGY_STREAM: u64 = 2;
const EVAL_STREAM: u64 = 3;
const GEN_SEED_SALT: u64 = 0x67656e;
const DISC_SEED_SALT: u64 = 0x646973;

/// Default λ grid for sweeps.
pub const DEFAULT_LAMBDA_GRID: [f64; 6] = [0.0, 1e-3, 1e-2, 1e-1, 1.0, 10.0];

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub g_hidden: Vec<usize>,
    pub d_hidden: Vec<usize>,
    pub g_lr: f64,
    pub d_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub lambda: f64,
    pub steps: usize,
    pub energy: EnergyConfig,
    pub seed: u64,
    pub eval_every: usize,
    /// Generated points used for each evaluation row.
    pub n_eval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            latent_dim: 2,
            g_hidden: vec![32, 32],
            d_hidden: vec![32, 32],
            g_lr: 1e-3,
            d_lr: 1e-3,
            beta1: 0.5,
            beta2: 0.999,
            batch_size: 64,
            lambda: 0.0,
            steps: 2000,
            energy: EnergyConfig::default(),
            seed: 0,
            eval_every: 500,
            n_eval: 500,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid(format!("lambda must be finite and nonnegative, got {}", self.lambda)));
        }
        if self.batch_size < 2 {
            return Err(invalid("batch_size must be at least 2"));
        }
        if self.latent_dim == 0 || self.steps == 0 || self.eval_every == 0 {
            return Err(invalid("latent_dim, steps and eval_every must be positive"));
        }
        if self.n_eval < 3 {
            return Err(invalid("n_eval must be at least 3"));
        }
        if !(self.g_lr > 0.0 && self.d_lr > 0.0) {
            return Err(invalid("learning rates must be positive"));
        }
        self.energy.validate()
    }

    fn generator_dims(&self) -> (Vec<usize>, Vec<Activation>) {
        let mut dims = vec![self.latent_dim];
        dims.extend(&self.g_hidden);
        dims.push(2);
        let mut acts = vec![Activation::LeakyRelu; self.g_hidden.len()];
        acts.push(Activation::Identity);
        (dims, acts)
    }

    fn discriminator_dims(&self) -> (Vec<usize>, Vec<Activation>) {
        let mut dims = vec![2];
        dims.extend(&self.d_hidden);
        dims.push(1);
        let mut acts = vec![Activation::LeakyRelu; self.d_hidden.len()];
        acts.push(Activation::Identity);
        (dims, acts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    /// Mean energy of the step's generated batch (0 when the energy term is off).
    pub energy_mean: f64,
    pub mmd2: f64,
    pub frechet: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
    pub generator: Network,
    pub discriminator: Network,
}

impl TrainTrace {
    pub fn final_row(&self) -> &TraceRow {
        self.rows.last().expect("a trace has at least one row")
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `n` generator samples from latent stream `seed`.
pub fn sample_generator(generator: &Network, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = stream_rng(seed, EVAL_STREAM);
    (0..n).map(|_| generator.predict(&normal_vec(&mut rng, generator.input_dim()))).collect()
}

/// Unregularized GAN: the same loop with the energy term removed.
pub fn train_baseline(data: &ToyDataset, cfg: &TrainConfig) -> Result<TrainTrace> {
    run(data, cfg, None)
}

/// Regularized GAN. `extractor` is required when `cfg.lambda > 0`; its
/// normalization is replaced by the training subset's mean and std.
pub fn train_gan(data: &ToyDataset, cfg: &TrainConfig, extractor: Option<&FeatureExtractor>) -> Result<TrainTrace> {
    cfg.validate()?;
    if cfg.lambda == 0.0 {
        return run(data, cfg, None);
    }
    let f = extractor.ok_or_else(|| invalid("lambda > 0 requires a feature extractor"))?;
    if f.dim_in() != 2 {
        return Err(invalid(format!("extractor takes dimension {}, toy data is 2-D", f.dim_in())));
    }
    let f = f.with_normalization(normalization_from_points(data.limited())?)?;
    let refs = ReferenceFeatures::new(&f, data.limited())?;
    run(data, cfg, Some(Regularizer { f, refs }))
}

struct Regularizer {
    f: FeatureExtractor,
    refs: ReferenceFeatures,
}

fn run(data: &ToyDataset, cfg: &TrainConfig, reg: Option<Regularizer>) -> Result<TrainTrace> {
    cfg.validate()?;
    let (gd, ga) = cfg.generator_dims();
    let (dd, da) = cfg.discriminator_dims();
    let mut gen = Network::new(&gd, &ga, derive_seed(cfg.seed, GEN_SEED_SALT))?;
    let mut disc = Network::new(&dd, &da, derive_seed(cfg.seed, DISC_SEED_SALT))?;
    let mut g_opt = Adam::with_betas(gen.num_params(), cfg.g_lr, cfg.beta1, cfg.beta2);
    let mut d_opt = Adam::with_betas(disc.num_params(), cfg.d_lr, cfg.beta1, cfg.beta2);
    let mut rng = stream_rng(cfg.seed, MAIN_STREAM);
    let mut energy_rng = stream_rng(cfg.seed, ENERGY_STREAM);
    let limited = data.limited();
    let bandwidth = median_bandwidth(data.full(), &[]);
    let b = cfg.batch_size as f64;
    let mut rows = Vec::new();

    for step in 1..=cfg.steps {
        let numerr = |what: &str| Error::NumericalError { step, what: what.to_string() };

        // Discriminator update.
        let real: Vec<&Vec<f64>> = (0..cfg.batch_size).map(|_| &limited[rng.random_range(0..limited.len())]).collect();
        let mut d_grads = vec![0.0; disc.num_params()];
        let mut d_loss = 0.0;
        for x in &real {
            let (l, tape) = disc.forward(x)?;
            d_loss += softplus(-l[0]) / b;
            disc.backward_accumulate(&tape, &[(sigmoid(l[0]) - 1.0) / b], &mut d_grads)?;
        }
        for _ in 0..cfg.batch_size {
            let x = gen.predict(&normal_vec(&mut rng, cfg.latent_dim))?;
            let (l, tape) = disc.forward(&x)?;
            d_loss += softplus(l[0]) / b;
            disc.backward_accumulate(&tape, &[sigmoid(l[0]) / b], &mut d_grads)?;
        }
        if !d_loss.is_finite() {
            return Err(numerr("non-finite discriminator loss"));
        }
        d_opt.step_network(&mut disc, &d_grads).map_err(|e| at_step(e, step))?;

        // Generator update.
        let mut fakes = Vec::with_capacity(cfg.batch_size);
        let mut g_tapes: Vec<Tape> = Vec::with_capacity(cfg.batch_size);
        let mut out_grads: Vec<Vec<f64>> = Vec::with_capacity(cfg.batch_size);
        let mut adv = 0.0;
        for _ in 0..cfg.batch_size {
            let (x, gt) = gen.forward(&normal_vec(&mut rng, cfg.latent_dim))?;
            let (l, dt) = disc.forward(&x)?;
            adv += softplus(-l[0]) / b;
            out_grads.push(disc.input_gradient(&dt, &[(sigmoid(l[0]) - 1.0) / b])?);
            fakes.push(x);
            g_tapes.push(gt);
        }
        let mut energy_mean = 0.0;
        if let Some(reg) = &reg {
            let lam = cfg.lambda;
            match cfg.energy.kind {
                EnergyKind::DataMse => {
                    for (x, g) in fakes.iter().zip(&mut out_grads) {
                        let (e, ge) = reg.refs.sampled_energy(&reg.f, x, cfg.energy.n_mc, &mut energy_rng)?;
                        energy_mean += e / b;
                        g.iter_mut().zip(&ge).for_each(|(a, c)| *a += lam * c / b);
                    }
                }
                EnergyKind::EntropyMin => {
                    for (x, g) in fakes.iter().zip(&mut out_grads) {
                        let (e, ge) = entropy_gradient(x, &reg.f, cfg.energy.entropy_sign)?;
                        energy_mean += e / b;
                        g.iter_mut().zip(&ge).for_each(|(a, c)| *a += lam * c / b);
                    }
                }
                EnergyKind::FeatureMatching => {
                    let real_now: Vec<Vec<f64>> = real.iter().map(|x| x.to_vec()).collect();
                    let (loss, grads) = feature_matching_gradients(&real_now, &fakes, &reg.f)?;
                    energy_mean = loss;
                    for (g, ge) in out_grads.iter_mut().zip(&grads) {
                        g.iter_mut().zip(ge).for_each(|(a, c)| *a += lam * c);
                    }
                }
            }
        }
        let g_loss = adv + cfg.lambda * energy_mean;
        if !g_loss.is_finite() {
            return Err(numerr("non-finite generator loss"));
        }
        let mut g_grads = vec![0.0; gen.num_params()];
        for (tape, g) in g_tapes.iter().zip(&out_grads) {
            gen.backward_accumulate(tape, g, &mut g_grads)?;
        }
        g_opt.step_network(&mut gen, &g_grads).map_err(|e| at_step(e, step))?;

        if step % cfg.eval_every == 0 || step == cfg.steps {
            let samples = sample_generator(&gen, cfg.n_eval, cfg.seed)?;
            let mmd = mmd2(data.full(), &samples, Some(bandwidth))?.unbiased;
            let frechet = frechet_gaussian(data.full(), &samples)?;
            if !(mmd.is_finite() && frechet.is_finite()) {
                return Err(numerr("non-finite evaluation metric"));
            }
            rows.push(TraceRow { step, d_loss, g_loss, energy_mean, mmd2: mmd, frechet });
        }
    }
    Ok(TrainTrace { rows, generator: gen, discriminator: disc })
}

fn at_step(e: Error, step: usize) -> Error {
    match e {
        Error::NumericalError { what, .. } => Error::NumericalError { step, what },
        other => other,
    }
}

/// One run of a (λ, seed) sweep.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub lambda: f64,
    pub seed: u64,
    pub trace: Result<TrainTrace>,
}

/// Trains every `(λ, seed)` pair; runs are independent and may execute in parallel.
pub fn train_sweep(
    data: &ToyDataset,
    cfg: &TrainConfig,
    lambdas: &[f64],
    seeds: &[u64],
    extractor: Option<&FeatureExtractor>,
    exec: Exec,
) -> Vec<SweepRun> {
    let jobs: Vec<(f64, u64)> = lambdas.iter().flat_map(|&l| seeds.iter().map(move |&s| (l, s))).collect();
    map_indexed(exec, jobs.len(), |i| {
        let (lambda, seed) = jobs[i];
        let run_cfg = TrainConfig { lambda, seed, ..cfg.clone() };
        SweepRun { lambda, seed, trace: train_gan(data, &run_cfg, extractor) }
    })
}

/// Settings for the auxiliary classifier used as a frozen extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub hidden: Vec<usize>,
    pub aux_size: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub perturbation: Perturbation,
    /// 1-based layer whose pre-activation is the feature. `None` selects the
    /// last hidden layer (the usual penultimate-feature choice); the output
    /// layer gives the class logits.
    pub feature_layer: Option<usize>,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            aux_size: 4000,
            steps: 1500,
            batch_size: 128,
            lr: 5e-3,
            perturbation: Perturbation { rotation: 0.1, scale: 1.05, noise_scale: 2.0 },
            feature_layer: None,
        }
    }
}

/// Classifier trained on a perturbed version of `family` (softmax
/// cross-entropy over mixture components), frozen as a feature extractor.
pub fn pretrain_extractor(family: ToyFamily, cfg: &PretrainConfig, seed: u64) -> Result<FeatureExtractor> {
    let k = family.num_classes();
    let (xs, ys) = auxiliary_sample(family, cfg.perturbation, cfg.aux_size, seed);
    let norm = normalization_from_points(&xs)?;
    let xs: Vec<Vec<f64>> = xs
        .iter()
        .map(|p| p.iter().zip(&norm.mean).zip(&norm.std).map(|((v, m), s)| (v - m) / s).collect())
        .collect();
    let mut dims = vec![2];
    dims.extend(&cfg.hidden);
    dims.push(k);
    let mut acts = vec![Activation::LeakyRelu; cfg.hidden.len()];
    acts.push(Activation::Identity);
    let mut net = Network::new(&dims, &acts, derive_seed(seed, 0x636c66))?;
    let mut opt = Adam::new(net.num_params(), cfg.lr);
    let mut rng: Rng = stream_rng(seed, MAIN_STREAM);
    let bsz = cfg.batch_size as f64;
    for step in 1..=cfg.steps {
        let mut grads = vec![0.0; net.num_params()];
        for _ in 0..cfg.batch_size {
            let i = rng.random_range(0..xs.len());
            let (z, tape) = net.forward(&xs[i])?;
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
            let s: f64 = e.iter().sum();
            let g: Vec<f64> = e.iter().enumerate().map(|(j, v)| (v / s - if j == ys[i] { 1.0 } else { 0.0 }) / bsz).collect();
            net.backward_accumulate(&tape, &g, &mut grads)?;
        }
        opt.step_network(&mut net, &grads).map_err(|e| at_step(e, step))?;
    }
    let layer = cfg.feature_layer.unwrap_or(net.num_layers().saturating_sub(1).max(1));
    FeatureExtractor::from_classifier(&net, layer, norm)
}

/// Classification accuracy of an extractor whose features are class logits.
pub fn extractor_accuracy(f: &FeatureExtractor, xs: &[Vec<f64>], ys: &[usize]) -> Result<f64> {
    let mut hits = 0usize;
    for (x, &y) in xs.iter().zip(ys) {
        let z = f.features(x)?;
        let arg = z.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
        hits += usize::from(arg == y);
    }
    Ok(hits as f64 / xs.len().max(1) as f64)
}

/// Gradient descent from `μ = 0` on
/// `(1/m)Σ(μ - x_i)²/(2σ²) + λ(μ - μ_pre)²/(2σ²)`.
///
/// The objective is a quadratic with curvature `(1 + λ)/σ²`, so `lr` must be
/// below `2σ²/(1 + λ)`.
pub fn fit_gaussian_gd(spec: &GaussianSpec, sample: &[f64], lambda: f64, lr: f64, steps: usize) -> Result<f64> {
    spec.validate()?;
    if sample.is_empty() {
        return Err(invalid("sample is empty"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    let bound = 2.0 * spec.sigma2 / (1.0 + lambda);
    if !(lr > 0.0 && lr < bound) {
        return Err(invalid(format!("learning rate {lr} outside the stable range (0, {bound})")));
    }
    let m = sample.len() as f64;
    let mut mu = 0.0f64;
    for step in 1..=steps {
        let data_term = crate::numeric::compensated_sum(sample.iter().map(|x| mu - x)) / m;
        let grad = (data_term + lambda * (mu - spec.mu_pre)) / spec.sigma2;
        mu -= lr * grad;
        if !mu.is_finite() {
            return Err(Error::NumericalError { step, what: "iterate diverged".into() });
        }
    }
    Ok(mu)
}
