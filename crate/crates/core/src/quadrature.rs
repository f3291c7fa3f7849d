//! Composite Gauss–Legendre quadrature on a closed interval.

use std::f64::consts::PI;

use crate::error::{invalid, Result};

/// Points per Gauss–Legendre panel in the composite rule.
pub const PANEL_ORDER: usize = 8;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`,
/// ordered by increasing node.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        // Tricomi initial guess, refined by Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    (p1, n * (x * p1 - p0) / (x * x - 1.0))
}

/// Fixed composite rule: Gauss–Legendre panels between consecutive breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeRule {
    pub a: f64,
    pub b: f64,
    breaks: Vec<f64>,
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl CompositeRule {
    /// Equal panels with roughly `n_nodes` nodes in total (rounded up to whole
    /// [`PANEL_ORDER`]-point panels; fewer nodes give a single panel).
    pub fn new(a: f64, b: f64, n_nodes: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(invalid(format!("quadrature interval [{a}, {b}] must be finite with a < b")));
        }
        if n_nodes == 0 {
            return Err(invalid("quadrature needs at least one node"));
        }
        let order = n_nodes.min(PANEL_ORDER);
        let panels = n_nodes.div_ceil(order);
        let h = (b - a) / panels as f64;
        let mut breaks: Vec<f64> = (0..panels).map(|p| a + h * p as f64).collect();
        breaks.push(b);
        Ok(Self::build(breaks, order))
    }

    /// Rule with the given panel breakpoints (strictly increasing, at least two).
    pub fn from_breaks(breaks: &[f64]) -> Result<Self> {
        if breaks.len() < 2 || breaks.iter().any(|x| !x.is_finite()) || breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("panel breakpoints must be finite and strictly increasing"));
        }
        Ok(Self::build(breaks.to_vec(), PANEL_ORDER))
    }

    fn build(breaks: Vec<f64>, order: usize) -> Self {
        let (ref_x, ref_w) = gauss_legendre(order);
        let mut nodes = Vec::with_capacity((breaks.len() - 1) * order);
        let mut weights = Vec::with_capacity(nodes.capacity());
        for w in breaks.windows(2) {
            let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
            for (x, wt) in ref_x.iter().zip(&ref_w) {
                nodes.push(mid + half * x);
                weights.push(half * wt);
            }
        }
        Self { a: breaks[0], b: breaks[breaks.len() - 1], breaks, order, nodes, weights }
    }

    /// Bisects panels of `self` whose estimate of `∫f` changes by more than
    /// `abs_tol` when split, until none does or `max_panels` is reached.
    /// The returned rule is fixed; only its breakpoints depend on `f`.
    pub fn adapted_to<F: Fn(f64) -> f64>(&self, f: F, abs_tol: f64, max_panels: usize) -> Self {
        let (ref_x, ref_w) = gauss_legendre(PANEL_ORDER);
        let panel = |lo: f64, hi: f64| {
            let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            ref_x.iter().zip(&ref_w).map(|(x, w)| half * w * f(mid + half * x)).sum::<f64>()
        };
        let mut stack: Vec<(f64, f64, f64)> =
            self.breaks.windows(2).rev().map(|w| (w[0], w[1], panel(w[0], w[1]))).collect();
        let mut count = stack.len();
        let mut breaks = vec![self.a];
        while let Some((lo, hi, whole)) = stack.pop() {
            let mid = 0.5 * (lo + hi);
            let (left, right) = (panel(lo, mid), panel(mid, hi));
            let err = (whole - left - right).abs();
            if !(err <= abs_tol) && count < max_panels && mid > lo && mid < hi {
                count += 1;
                stack.push((mid, hi, right));
                stack.push((lo, mid, left));
            } else {
                breaks.push(hi);
            }
        }
        Self::build(breaks, PANEL_ORDER)
    }

    /// Splits every panel in two, doubling the node count.
    pub fn refined(&self) -> Self {
        let mut breaks = Vec::with_capacity(2 * self.breaks.len());
        for w in self.breaks.windows(2) {
            breaks.push(w[0]);
            breaks.push(0.5 * (w[0] + w[1]));
        }
        breaks.push(self.b);
        Self::build(breaks, self.order)
    }

    pub fn panels(&self) -> usize {
        self.breaks.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        crate::numeric::compensated_sum(self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)))
    }
}
