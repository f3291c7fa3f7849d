//! 2-D toy datasets with a fixed, seed-determined limited training subset.

use std::f64::consts::PI;

use rand::Rng as _;

use crate::error::{invalid, Result};
use crate::rng::{normal, stream_rng, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyFamily {
    /// Eight Gaussians on a circle of radius 2.
    Ring8,
    TwoMoons,
    /// 5×5 grid of Gaussians at spacing 2.
    GaussianGrid,
}

impl ToyFamily {
    pub fn name(self) -> &'static str {
        match self {
            ToyFamily::Ring8 => "ring8",
            ToyFamily::TwoMoons => "two_moons",
            ToyFamily::GaussianGrid => "gaussian_grid",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ring8" => Ok(ToyFamily::Ring8),
            "two_moons" => Ok(ToyFamily::TwoMoons),
            "gaussian_grid" => Ok(ToyFamily::GaussianGrid),
            other => Err(invalid(format!("unknown toy family '{other}'"))),
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            ToyFamily::Ring8 => 8,
            ToyFamily::TwoMoons => 2,
            ToyFamily::GaussianGrid => 25,
        }
    }
}

/// Distortion applied when drawing a related (auxiliary) dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    pub rotation: f64,
    pub scale: f64,
    pub noise_scale: f64,
}

impl Perturbation {
    pub const NONE: Perturbation = Perturbation { rotation: 0.0, scale: 1.0, noise_scale: 1.0 };
}

/// Draws one labelled point.
pub fn draw_point(family: ToyFamily, pert: Perturbation, rng: &mut Rng) -> (Vec<f64>, usize) {
    let (x, y, label) = match family {
        ToyFamily::Ring8 => {
            let k = rng.random_range(0..8);
            let t = 2.0 * PI * k as f64 / 8.0;
            let sd = 0.05 * pert.noise_scale;
            (2.0 * t.cos() + sd * normal(rng), 2.0 * t.sin() + sd * normal(rng), k)
        }
        ToyFamily::TwoMoons => {
            let k = rng.random_range(0..2);
            let t = PI * rng.random::<f64>();
            let sd = 0.05 * pert.noise_scale;
            let (cx, cy) = if k == 0 { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
            (cx - 0.5 + sd * normal(rng), cy - 0.25 + sd * normal(rng), k)
        }
        ToyFamily::GaussianGrid => {
            let k = rng.random_range(0..25);
            let sd = 0.05 * pert.noise_scale;
            (2.0 * (k % 5) as f64 - 4.0 + sd * normal(rng), 2.0 * (k / 5) as f64 - 4.0 + sd * normal(rng), k)
        }
    };
    let (s, c) = pert.rotation.sin_cos();
    (vec![pert.scale * (c * x - s * y), pert.scale * (s * x + c * y)], label)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    pub family: ToyFamily,
    pub seed: u64,
    full: Vec<Vec<f64>>,
    limited_m: usize,
}

impl ToyDataset {
    /// `full_size` points from stream 0 of `seed`; the first `limited_m` form the training subset.
    pub fn new(family: ToyFamily, full_size: usize, limited_m: usize, seed: u64) -> Result<Self> {
        if limited_m == 0 || limited_m > full_size {
            return Err(invalid(format!("limited_m must be in 1..={full_size}, got {limited_m}")));
        }
        let mut rng = stream_rng(seed, 0);
        let full = (0..full_size).map(|_| draw_point(family, Perturbation::NONE, &mut rng).0).collect();
        Ok(Self { family, seed, full, limited_m })
    }

    pub fn full(&self) -> &[Vec<f64>] {
        &self.full
    }

    pub fn limited(&self) -> &[Vec<f64>] {
        &self.full[..self.limited_m]
    }

    pub fn full_size(&self) -> usize {
        self.full.len()
    }

    pub fn limited_m(&self) -> usize {
        self.limited_m
    }
}

/// Labelled sample from a perturbed version of `family`.
pub fn auxiliary_sample(family: ToyFamily, pert: Perturbation, n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = stream_rng(seed, 0x617578);
    (0..n).map(|_| draw_point(family, pert, &mut rng)).unzip()
}
