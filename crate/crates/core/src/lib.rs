//! Numerical laboratory for regularized deep generative modeling.
//!
//! * [`gaussian`]: bias-variance analysis of regularized Gaussian mean fitting.
//! * [`nonparam`]: global minima of KL/JS objectives regularized by an energy.
//! * [`nn`]: dense networks with exact backpropagation and Adam.
//! * [`energy`]: feature-extractor energies (data MSE, feature matching, entropy).
//! * [`metrics`]: MMD² and Gaussian Fréchet distance for 2-D samples.
//! * [`trainer`]: energy-regularized GAN on 2-D toy data and a GD check of the Gaussian fit.
//!
//! Data-parallel loops go through [`par`]; disable the default `parallel`
//! feature for a purely sequential build.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod gaussian;
pub mod metrics;
pub mod nn;
pub mod nonparam;
pub mod numeric;
pub mod par;
pub mod quadrature;
pub mod rng;
pub mod toy;
pub mod trainer;
pub mod weights;

pub use error::{Error, Result};
pub use par::Exec;
