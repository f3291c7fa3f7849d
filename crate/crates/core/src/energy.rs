//! Energies built on a frozen feature extractor.
//!
//! The default energy is the mean squared feature distance to the training
//! data, `E(x) = E_{x'}[‖f(x) - f(x')‖² / d]`, estimated with `n_mc`
//! uniformly drawn training points per evaluation. Feature matching and
//! prediction entropy are the two alternatives; feature matching is a
//! batch-level penalty and is not an expectation of a per-sample energy.

use std::path::Path;

use rand::Rng as _;

use crate::error::{invalid, Result};
use crate::nn::{Activation, Network, Tape};
use crate::rng::Rng;
use crate::weights::{self, Normalization};

/// Floor applied to probabilities inside entropy logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Frozen map `x ↦ net((x - mean) / std)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor {
    net: Network,
    norm: Normalization,
}

pub struct FeatureTape(Tape);

impl FeatureExtractor {
    pub fn new(net: Network, norm: Normalization) -> Result<Self> {
        let d = net.input_dim();
        if norm.mean.len() != d || norm.std.len() != d {
            return Err(invalid(format!("normalization must have dimension {d}")));
        }
        if norm.std.iter().any(|s| !(*s > 0.0 && s.is_finite())) || norm.mean.iter().any(|m| !m.is_finite()) {
            return Err(invalid("normalization std must be positive and all entries finite"));
        }
        Ok(Self { net, norm })
    }

    pub fn identity(dim: usize) -> Self {
        let mut p = vec![0.0; dim * dim + dim];
        for i in 0..dim {
            p[i * dim + i] = 1.0;
        }
        let net = Network::from_params(&[dim, dim], &[Activation::Identity], p).expect("identity layout is valid");
        Self { net, norm: Normalization { mean: vec![0.0; dim], std: vec![1.0; dim] } }
    }

    /// Fixed-seed random network; the output layer is linear.
    pub fn random(dims: &[usize], hidden: Activation, seed: u64) -> Result<Self> {
        let mut acts = vec![hidden; dims.len().saturating_sub(2)];
        acts.push(Activation::Identity);
        let net = Network::new(dims, &acts, seed)?;
        let d = net.input_dim();
        Self::new(net, Normalization { mean: vec![0.0; d], std: vec![1.0; d] })
    }

    /// Features are the pre-activations of layer `feature_layer` (1-based) of `classifier`.
    pub fn from_classifier(classifier: &Network, feature_layer: usize, norm: Normalization) -> Result<Self> {
        Self::new(classifier.truncated(feature_layer)?, norm)
    }

    /// Same map with a different input normalization.
    pub fn with_normalization(&self, norm: Normalization) -> Result<Self> {
        Self::new(self.net.clone(), norm)
    }

    pub fn dim_in(&self) -> usize {
        self.net.input_dim()
    }

    pub fn dim_out(&self) -> usize {
        self.net.output_dim()
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    fn normalize(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim_in() {
            return Err(invalid(format!("point has dimension {}, extractor expects {}", x.len(), self.dim_in())));
        }
        Ok(x.iter().zip(&self.norm.mean).zip(&self.norm.std).map(|((v, m), s)| (v - m) / s).collect())
    }

    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.net.predict(&self.normalize(x)?)
    }

    pub fn features_with_tape(&self, x: &[f64]) -> Result<(Vec<f64>, FeatureTape)> {
        let (y, tape) = self.net.forward(&self.normalize(x)?)?;
        Ok((y, FeatureTape(tape)))
    }

    /// `Jᵀ·out_grad` with respect to the raw (unnormalized) input.
    pub fn input_gradient(&self, tape: &FeatureTape, out_grad: &[f64]) -> Result<Vec<f64>> {
        let g = self.net.input_gradient(&tape.0, out_grad)?;
        Ok(g.iter().zip(&self.norm.std).map(|(g, s)| g / s).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        weights::save(path, &self.net, Some(&self.norm))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = weights::load(path)?;
        let d = file.network.input_dim();
        let norm = file.normalization.unwrap_or(Normalization { mean: vec![0.0; d], std: vec![1.0; d] });
        Self::new(file.network, norm)
    }
}

/// Per-coordinate mean and standard deviation of `points` (std floored at 1e-12).
pub fn normalization_from_points(points: &[Vec<f64>]) -> Result<Normalization> {
    let first = points.first().ok_or_else(|| invalid("cannot normalize an empty point set"))?;
    let d = first.len();
    let n = points.len() as f64;
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; d];
    for p in points {
        for ((s, v), m) in var.iter_mut().zip(p).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    Ok(Normalization { mean, std: var.iter().map(|v| v.sqrt().max(1e-12)).collect() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyKind {
    DataMse,
    FeatureMatching,
    EntropyMin,
}

impl EnergyKind {
    pub fn name(self) -> &'static str {
        match self {
            EnergyKind::DataMse => "data_mse",
            EnergyKind::FeatureMatching => "feature_matching",
            EnergyKind::EntropyMin => "entropy_min",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "data_mse" => Ok(EnergyKind::DataMse),
            "feature_matching" => Ok(EnergyKind::FeatureMatching),
            "entropy_min" => Ok(EnergyKind::EntropyMin),
            other => Err(invalid(format!("unknown energy kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyConfig {
    pub kind: EnergyKind,
    /// Training points drawn per data-MSE evaluation.
    pub n_mc: usize,
    /// `+1` penalizes prediction entropy (minimization), `-1` rewards it.
    pub entropy_sign: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self { kind: EnergyKind::DataMse, n_mc: 1, entropy_sign: 1.0 }
    }
}

impl EnergyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_mc == 0 {
            return Err(invalid("n_mc must be at least 1"));
        }
        if self.entropy_sign != 1.0 && self.entropy_sign != -1.0 {
            return Err(invalid("entropy_sign must be +1 or -1"));
        }
        Ok(())
    }
}

fn check_ref(training_ref: &[Vec<f64>]) -> Result<()> {
    if training_ref.is_empty() {
        return Err(invalid("reference set is empty"));
    }
    Ok(())
}

/// `mean_{x'} ‖f(x) - f(x')‖² / d` over `training_ref`.
pub fn energy_data_mse(x: &[f64], training_ref: &[Vec<f64>], f: &FeatureExtractor) -> Result<f64> {
    check_ref(training_ref)?;
    let fx = f.features(x)?;
    let refs = training_ref.iter().map(|r| f.features(r)).collect::<Result<Vec<_>>>()?;
    let d = f.dim_out() as f64;
    let total: f64 = refs.iter().map(|fr| crate::numeric::sq_dist(&fx, fr) / d).sum();
    Ok(total / refs.len() as f64)
}

/// Exact gradient of [`energy_data_mse`] with respect to `x`.
pub fn energy_gradient(x: &[f64], training_ref: &[Vec<f64>], f: &FeatureExtractor) -> Result<Vec<f64>> {
    check_ref(training_ref)?;
    let refs = training_ref.iter().map(|r| f.features(r)).collect::<Result<Vec<_>>>()?;
    let cache = ReferenceFeatures { features: refs };
    let all: Vec<usize> = (0..cache.len()).collect();
    Ok(cache.energy_and_gradient(f, x, &all)?.1)
}

/// Precomputed features of the training set for repeated energy evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceFeatures {
    features: Vec<Vec<f64>>,
}

impl ReferenceFeatures {
    pub fn new(f: &FeatureExtractor, points: &[Vec<f64>]) -> Result<Self> {
        check_ref(points)?;
        Ok(Self { features: points.iter().map(|p| f.features(p)).collect::<Result<_>>()? })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    /// Energy against the referenced subset `indices` and its input gradient.
    pub fn energy_and_gradient(&self, f: &FeatureExtractor, x: &[f64], indices: &[usize]) -> Result<(f64, Vec<f64>)> {
        if indices.is_empty() {
            return Err(invalid("energy needs at least one reference index"));
        }
        let (fx, tape) = f.features_with_tape(x)?;
        let d = fx.len() as f64;
        let k = indices.len() as f64;
        let mut value = 0.0;
        let mut mean_diff = vec![0.0; fx.len()];
        for &i in indices {
            let fr = self.features.get(i).ok_or_else(|| invalid(format!("reference index {i} out of range")))?;
            for ((m, a), b) in mean_diff.iter_mut().zip(&fx).zip(fr) {
                *m += (a - b) / k;
            }
            value += crate::numeric::sq_dist(&fx, fr) / d;
        }
        let out_grad: Vec<f64> = mean_diff.iter().map(|m| 2.0 * m / d).collect();
        Ok((value / k, f.input_gradient(&tape, &out_grad)?))
    }

    /// Energy against the whole reference set.
    pub fn full_energy(&self, f: &FeatureExtractor, x: &[f64]) -> Result<f64> {
        let fx = f.features(x)?;
        let d = fx.len() as f64;
        let total: f64 = self.features.iter().map(|fr| crate::numeric::sq_dist(&fx, fr) / d).sum();
        Ok(total / self.features.len() as f64)
    }

    /// `n_mc` uniform draws (with replacement) of reference indices.
    pub fn draw(&self, n_mc: usize, rng: &mut Rng) -> Vec<usize> {
        (0..n_mc).map(|_| rng.random_range(0..self.features.len())).collect()
    }

    /// Monte-Carlo energy estimate from `n_mc` drawn references, with gradient.
    pub fn sampled_energy(&self, f: &FeatureExtractor, x: &[f64], n_mc: usize, rng: &mut Rng) -> Result<(f64, Vec<f64>)> {
        let idx = self.draw(n_mc, rng);
        self.energy_and_gradient(f, x, &idx)
    }
}

fn batch_mean_features(batch: &[Vec<f64>], f: &FeatureExtractor) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(invalid("batch is empty"));
    }
    let mut mean = vec![0.0; f.dim_out()];
    let n = batch.len() as f64;
    for x in batch {
        for (m, v) in mean.iter_mut().zip(f.features(x)?) {
            *m += v / n;
        }
    }
    Ok(mean)
}

/// `‖mean f(real) - mean f(fake)‖²`.
pub fn feature_matching_loss(real_batch: &[Vec<f64>], fake_batch: &[Vec<f64>], f: &FeatureExtractor) -> Result<f64> {
    let r = batch_mean_features(real_batch, f)?;
    let g = batch_mean_features(fake_batch, f)?;
    Ok(crate::numeric::sq_dist(&r, &g))
}

/// Feature-matching loss and its gradient with respect to each fake point.
pub fn feature_matching_gradients(
    real_batch: &[Vec<f64>],
    fake_batch: &[Vec<f64>],
    f: &FeatureExtractor,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let r = batch_mean_features(real_batch, f)?;
    if fake_batch.is_empty() {
        return Err(invalid("batch is empty"));
    }
    let n = fake_batch.len() as f64;
    let mut mean = vec![0.0; f.dim_out()];
    let mut tapes = Vec::with_capacity(fake_batch.len());
    for x in fake_batch {
        let (fx, tape) = f.features_with_tape(x)?;
        for (m, v) in mean.iter_mut().zip(&fx) {
            *m += v / n;
        }
        tapes.push(tape);
    }
    let loss = crate::numeric::sq_dist(&r, &mean);
    let out_grad: Vec<f64> = mean.iter().zip(&r).map(|(g, r)| 2.0 * (g - r) / n).collect();
    let grads = tapes.iter().map(|t| f.input_gradient(t, &out_grad)).collect::<Result<Vec<_>>>()?;
    Ok((loss, grads))
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn entropy(p: &[f64]) -> f64 {
    let h = -p.iter().map(|&q| q * q.max(PROB_FLOOR).ln()).sum::<f64>();
    h.max(0.0)
}

/// `sign · H(softmax(f(x)))` in nats.
pub fn energy_entropy(x: &[f64], f: &FeatureExtractor, sign: f64) -> Result<f64> {
    if f.dim_out() < 2 {
        return Err(invalid("entropy energy needs at least two logits"));
    }
    Ok(sign * entropy(&softmax(&f.features(x)?)))
}

/// [`energy_entropy`] and its input gradient.
pub fn entropy_gradient(x: &[f64], f: &FeatureExtractor, sign: f64) -> Result<(f64, Vec<f64>)> {
    if f.dim_out() < 2 {
        return Err(invalid("entropy energy needs at least two logits"));
    }
    let (z, tape) = f.features_with_tape(x)?;
    let p = softmax(&z);
    let h = entropy(&p);
    // dH/dz_j = -p_j (ln p_j + H)
    let out_grad: Vec<f64> = p.iter().map(|&q| -sign * q * (q.max(PROB_FLOOR).ln() + h)).collect();
    Ok((sign * h, f.input_gradient(&tape, &out_grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn pts(v: &[&[f64]]) -> Vec<Vec<f64>> {
        v.iter().map(|p| p.to_vec()).collect()
    }

    #[test]
    fn data_mse_examples() {
        let id = FeatureExtractor::identity(1);
        assert_eq!(energy_data_mse(&[1.0], &pts(&[&[0.0], &[2.0]]), &id).unwrap(), 1.0);
        assert_eq!(energy_data_mse(&[0.0], &pts(&[&[1.0], &[3.0]]), &id).unwrap(), 5.0);
        let f = FeatureExtractor::random(&[2, 8, 3], Activation::Tanh, 4).unwrap();
        assert_eq!(energy_data_mse(&[0.3, 0.2], &pts(&[&[0.3, 0.2]]), &f).unwrap(), 0.0);
        assert!(energy_data_mse(&[0.3, 0.2], &[], &f).is_err());
    }

    #[test]
    fn gradient_examples() {
        let id = FeatureExtractor::identity(1);
        assert_eq!(energy_gradient(&[1.0], &pts(&[&[0.0]]), &id).unwrap(), vec![2.0]);
        let id2 = FeatureExtractor::identity(2);
        assert_eq!(energy_gradient(&[1.0, 1.0], &pts(&[&[0.0, 0.0]]), &id2).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn gradient_matches_finite_differences_through_normalized_net() {
        let f = FeatureExtractor::random(&[2, 16, 16, 4], Activation::Tanh, 21).unwrap();
        let f = f.with_normalization(Normalization { mean: vec![0.2, -0.4], std: vec![1.7, 0.6] }).unwrap();
        let refs = pts(&[&[0.1, 0.9], &[-1.2, 0.3], &[0.5, -0.5]]);
        let x = [0.35, -0.15];
        let g = energy_gradient(&x, &refs, &f).unwrap();
        let h = 1e-5;
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (energy_data_mse(&xp, &refs, &f).unwrap() - energy_data_mse(&xm, &refs, &f).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-5 * fd.abs().max(g[i].abs()), "{fd} vs {}", g[i]);
        }
    }

    #[test]
    fn feature_matching_examples() {
        let id = FeatureExtractor::identity(1);
        let a = pts(&[&[0.0], &[2.0]]);
        assert_eq!(feature_matching_loss(&a, &a, &id).unwrap(), 0.0);
        assert_eq!(feature_matching_loss(&a, &pts(&[&[2.0], &[4.0]]), &id).unwrap(), 4.0);
        let id2 = FeatureExtractor::identity(2);
        let real = pts(&[&[1.0, -1.0], &[-1.0, 1.0]]);
        let fake = pts(&[&[1.0, 1.0]]);
        assert_eq!(feature_matching_loss(&real, &fake, &id2).unwrap(), 2.0);
        assert!(feature_matching_loss(&[], &fake, &id2).is_err());
    }

    #[test]
    fn feature_matching_gradient_matches_finite_differences() {
        let f = FeatureExtractor::random(&[2, 8, 3], Activation::Tanh, 5).unwrap();
        let real = pts(&[&[0.1, 0.9], &[-1.2, 0.3]]);
        let fake = pts(&[&[0.4, -0.2], &[1.0, 0.5], &[0.0, 0.0]]);
        let (_, grads) = feature_matching_gradients(&real, &fake, &f).unwrap();
        let h = 1e-5;
        for j in 0..fake.len() {
            for i in 0..2 {
                let mut p = fake.clone();
                let mut m = fake.clone();
                p[j][i] += h;
                m[j][i] -= h;
                let fd = (feature_matching_loss(&real, &p, &f).unwrap() - feature_matching_loss(&real, &m, &f).unwrap()) / (2.0 * h);
                assert!((fd - grads[j][i]).abs() <= 1e-6 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn entropy_examples() {
        let id2 = FeatureExtractor::identity(2);
        assert!((energy_entropy(&[0.0, 0.0], &id2, 1.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(energy_entropy(&[1000.0, 0.0], &id2, 1.0).unwrap().abs() < 1e-9);
        let id4 = FeatureExtractor::identity(4);
        assert!((energy_entropy(&[1.0; 4], &id4, 1.0).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!((energy_entropy(&[1.0; 4], &id4, -1.0).unwrap() + 4f64.ln()).abs() < 1e-15);
        assert!(energy_entropy(&[1.0], &FeatureExtractor::identity(1), 1.0).is_err());
    }

    #[test]
    fn entropy_gradient_matches_finite_differences() {
        let f = FeatureExtractor::random(&[2, 8, 5], Activation::Tanh, 8).unwrap();
        let x = [0.7, -0.3];
        for sign in [1.0, -1.0] {
            let (_, g) = entropy_gradient(&x, &f, sign).unwrap();
            let h = 1e-5;
            for i in 0..2 {
                let mut p = x;
                let mut m = x;
                p[i] += h;
                m[i] -= h;
                let fd = (energy_entropy(&p, &f, sign).unwrap() - energy_entropy(&m, &f, sign).unwrap()) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-5 * fd.abs().max(g[i].abs()).max(1e-3));
            }
        }
    }

    #[test]
    fn reference_cache_matches_direct_energy() {
        let f = FeatureExtractor::random(&[2, 8, 3], Activation::LeakyRelu, 2).unwrap();
        let refs = pts(&[&[0.1, 0.9], &[-1.2, 0.3], &[0.5, -0.5]]);
        let cache = ReferenceFeatures::new(&f, &refs).unwrap();
        let x = [0.2, 0.2];
        let direct = energy_data_mse(&x, &refs, &f).unwrap();
        assert!((cache.full_energy(&f, &x).unwrap() - direct).abs() < 1e-14);
        let (v, _) = cache.energy_and_gradient(&f, &x, &[0, 1, 2]).unwrap();
        assert!((v - direct).abs() < 1e-14);
        let mut rng = stream_rng(1, 1);
        let idx = cache.draw(50, &mut rng);
        assert!(idx.iter().all(|&i| i < 3));
        assert!(cache.energy_and_gradient(&f, &x, &[]).is_err());
        assert!(cache.energy_and_gradient(&f, &x, &[3]).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let f = FeatureExtractor::random(&[2, 4, 3], Activation::Relu, 3).unwrap();
        let f = f.with_normalization(Normalization { mean: vec![1.0, 2.0], std: vec![0.5, 3.0] }).unwrap();
        let dir = std::env::temp_dir().join(format!("reglab-energy-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("f.weights");
        f.save(&path).unwrap();
        assert_eq!(FeatureExtractor::load(&path).unwrap(), f);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn normalization_validation() {
        let net = Network::new(&[2, 2], &[Activation::Identity], 0).unwrap();
        assert!(FeatureExtractor::new(net.clone(), Normalization { mean: vec![0.0; 2], std: vec![0.0, 1.0] }).is_err());
        assert!(FeatureExtractor::new(net, Normalization { mean: vec![0.0; 3], std: vec![1.0; 3] }).is_err());
        let n = normalization_from_points(&pts(&[&[0.0, 1.0], &[2.0, 1.0]])).unwrap();
        assert_eq!(n.mean, vec![1.0, 1.0]);
        assert_eq!(n.std, vec![1.0, 1e-12]);
    }
}
