//! Global minimum of the regularized divergence objective over all densities.
//!
//! For a data density `p_d` on a compact interval and a bounded energy `E`,
//! the minimizer of `D(p_d, p_g) + λ·E_{p_g}[E]` is a reweighting of the
//! data density, `p_g*(x) = p_d(x)·w(α* + λE(x))`, with
//!
//! * KL: `w(u) = 1 / u`
//! * JS: `w(u) = 1 / (e^u - 1)`
//!
//! and a scalar multiplier `α*` fixed by `∫ p_g* = 1`. The normalization
//! residual is strictly decreasing in `α` on the feasible ray
//! `α > -λ·min E`, so `α*` is found by bracketing and bisection.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::par::{map_indexed, Exec};
use crate::quadrature::CompositeRule;

pub const DEFAULT_QUAD_NODES: usize = 1024;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_GRID_POINTS: usize = 201;

const NORMALIZATION_TOL: f64 = 1e-8;
const SOLVED_NORMALIZATION_TOL: f64 = 1e-6;
const ENERGY_CHECK_POINTS: usize = 1001;
const MAX_PANELS: usize = 1 << 16;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Divergence {
    Kl,
    Js,
}

impl Divergence {
    pub fn name(self) -> &'static str {
        match self {
            Divergence::Kl => "kl",
            Divergence::Js => "js",
        }
    }
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Divergence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kl" => Ok(Divergence::Kl),
            "js" => Ok(Divergence::Js),
            other => Err(invalid(format!("unknown divergence '{other}' (expected kl or js)"))),
        }
    }
}

/// Data density on `[a, b]`, normalized under its quadrature rule.
#[derive(Clone)]
pub struct DensitySpec {
    pdf: ScalarFn,
    rule: CompositeRule,
    pdf_at_nodes: Vec<f64>,
}

impl fmt::Debug for DensitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensitySpec")
            .field("support", &self.support())
            .field("quad_nodes", &self.quad_nodes())
            .finish()
    }
}

impl DensitySpec {
    pub fn new(a: f64, b: f64, pdf: ScalarFn, quad_nodes: usize) -> Result<Self> {
        let rule = CompositeRule::new(a, b, quad_nodes)?;
        let pdf_at_nodes: Vec<f64> = rule.nodes().iter().map(|&x| pdf(x)).collect();
        if let Some(x) = rule.nodes().iter().zip(&pdf_at_nodes).find(|(_, p)| !(**p >= 0.0 && p.is_finite())) {
            return Err(invalid(format!("pdf must be finite and nonnegative, got {} at x = {}", x.1, x.0)));
        }
        let mass = crate::numeric::compensated_sum(pdf_at_nodes.iter().zip(rule.weights()).map(|(p, w)| p * w));
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(invalid(format!("pdf integrates to {mass}, not 1")));
        }
        Ok(Self { pdf, rule, pdf_at_nodes })
    }

    pub fn uniform(a: f64, b: f64, quad_nodes: usize) -> Result<Self> {
        if !(a < b) {
            return Err(invalid(format!("uniform support [{a}, {b}] needs a < b")));
        }
        let h = 1.0 / (b - a);
        Self::new(a, b, Arc::new(move |_| h), quad_nodes)
    }

    /// Same density with a different number of quadrature nodes.
    pub fn with_quad_nodes(&self, quad_nodes: usize) -> Result<Self> {
        Self::new(self.rule.a, self.rule.b, self.pdf.clone(), quad_nodes)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.rule.a, self.rule.b)
    }

    pub fn quad_nodes(&self) -> usize {
        self.rule.len()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        (self.pdf)(x)
    }
}

/// Bounded energy on the support of a density.
#[derive(Clone)]
pub struct EnergySpec1D {
    eval: ScalarFn,
    pub min_bound: f64,
    pub max_bound: f64,
}

impl fmt::Debug for EnergySpec1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnergySpec1D")
            .field("min_bound", &self.min_bound)
            .field("max_bound", &self.max_bound)
            .finish()
    }
}

impl EnergySpec1D {
    /// Checks `min_bound <= eval(x) <= max_bound` on a uniform grid over `[a, b]`.
    pub fn new(eval: ScalarFn, min_bound: f64, max_bound: f64, a: f64, b: f64) -> Result<Self> {
        if !(min_bound.is_finite() && max_bound.is_finite() && min_bound <= max_bound) {
            return Err(invalid(format!("energy bounds [{min_bound}, {max_bound}] are not a finite interval")));
        }
        for i in 0..ENERGY_CHECK_POINTS {
            let x = a + (b - a) * i as f64 / (ENERGY_CHECK_POINTS - 1) as f64;
            let e = eval(x);
            if !(e >= min_bound && e <= max_bound) {
                return Err(invalid(format!("energy {e} at x = {x} violates bounds [{min_bound}, {max_bound}]")));
            }
        }
        Ok(Self { eval, min_bound, max_bound })
    }

    /// `E(x) = slope·x + intercept` on `[a, b]`.
    pub fn linear(slope: f64, intercept: f64, a: f64, b: f64) -> Result<Self> {
        let (ea, eb) = (slope * a + intercept, slope * b + intercept);
        Self::new(Arc::new(move |x| slope * x + intercept), ea.min(eb), ea.max(eb), a, b)
    }

    /// Piecewise-linear interpolation through `(xs[i], ys[i])`, constant beyond the ends.
    pub fn tabulated(xs: Vec<f64>, ys: Vec<f64>, a: f64, b: f64) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(invalid("tabulated energy needs at least two (x, y) pairs of equal length"));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("tabulated energy x values must be strictly increasing"));
        }
        let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let eval = move |x: f64| {
            if x <= xs[0] {
                return ys[0];
            }
            let last = xs.len() - 1;
            if x >= xs[last] {
                return ys[last];
            }
            let i = xs.partition_point(|&t| t <= x) - 1;
            let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
            ys[i] + t * (ys[i + 1] - ys[i])
        };
        Self::new(Arc::new(eval), lo, hi, a, b)
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }
}

/// Uniform data on `[0, 1]` with energy `0.7x + 0.9`.
pub fn toy_problem(quad_nodes: usize) -> Result<(DensitySpec, EnergySpec1D)> {
    Ok((DensitySpec::uniform(0.0, 1.0, quad_nodes)?, EnergySpec1D::linear(0.7, 0.9, 0.0, 1.0)?))
}

/// Reweighting coefficient at one point.
pub fn weight(divergence: Divergence, alpha: f64, lambda: f64, energy_value: f64) -> Result<f64> {
    let u = alpha + lambda * energy_value;
    if !(u > 0.0) {
        return Err(Error::InfeasibleAlpha { alpha, denominator: u });
    }
    let w = match divergence {
        Divergence::Kl => 1.0 / u,
        Divergence::Js => 1.0 / u.exp_m1(),
    };
    Ok(w)
}

fn check_alpha(energy: &EnergySpec1D, alpha: f64, lambda: f64) -> Result<()> {
    let u = alpha + lambda * energy.min_bound;
    if u > 0.0 {
        Ok(())
    } else {
        Err(Error::InfeasibleAlpha { alpha, denominator: u })
    }
}

/// `∫ weight(x)·p_d(x) dx - 1` on the density's quadrature nodes.
pub fn normalization_residual(
    spec: &DensitySpec,
    energy: &EnergySpec1D,
    divergence: Divergence,
    alpha: f64,
    lambda: f64,
) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(invalid(format!("lambda must be nonnegative, got {lambda}")));
    }
    Discretized::with_pdf_values(&spec.rule, spec.pdf_at_nodes.clone(), energy).residual(energy, divergence, alpha, lambda)
}

/// Energy and `p_d·quadrature weight` tabulated on a fixed rule.
struct Discretized {
    energy: Vec<f64>,
    mass: Vec<f64>,
}

impl Discretized {
    fn new(rule: &CompositeRule, spec: &DensitySpec, energy: &EnergySpec1D) -> Self {
        let pdf = rule.nodes().iter().map(|&x| spec.pdf(x)).collect();
        Self::with_pdf_values(rule, pdf, energy)
    }

    fn with_pdf_values(rule: &CompositeRule, pdf: Vec<f64>, energy: &EnergySpec1D) -> Self {
        Self {
            energy: rule.nodes().iter().map(|&x| energy.eval(x)).collect(),
            mass: pdf.iter().zip(rule.weights()).map(|(p, w)| p * w).collect(),
        }
    }

    fn residual(&self, energy: &EnergySpec1D, divergence: Divergence, alpha: f64, lambda: f64) -> Result<f64> {
        check_alpha(energy, alpha, lambda)?;
        let mut acc = crate::numeric::CompensatedSum::new();
        for (&m, &e) in self.mass.iter().zip(&self.energy) {
            acc.add(m * weight(divergence, alpha, lambda, e)?);
        }
        Ok(acc.value() - 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub x: f64,
    pub p_d: f64,
    pub energy: f64,
    pub weight: f64,
    pub p_g_star: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub divergence: Divergence,
    pub lambda: f64,
    pub alpha_star: f64,
    pub residual: f64,
    pub grid: Vec<GridPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Bisection stops once the bracket is narrower than `tol`.
    pub tol: f64,
    /// Points (endpoints included) of the reported density grid.
    pub grid_points: usize,
    /// Re-solve with doubled quadrature nodes and fail if the root moves by more than `10·tol`.
    pub check_refinement: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, grid_points: DEFAULT_GRID_POINTS, check_refinement: true }
    }
}

pub fn solve_alpha(
    spec: &DensitySpec,
    energy: &EnergySpec1D,
    divergence: Divergence,
    lambda: f64,
    tol: f64,
) -> Result<SolveResult> {
    solve_alpha_with(spec, energy, divergence, lambda, &SolveOptions { tol, ..SolveOptions::default() })
}

pub fn solve_alpha_with(
    spec: &DensitySpec,
    energy: &EnergySpec1D,
    divergence: Divergence,
    lambda: f64,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("lambda must be positive and finite, got {lambda}")));
    }
    if !(opts.tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    if opts.grid_points < 2 {
        return Err(invalid("density grid needs at least two points"));
    }
    // The integrand peaks sharply near points of minimal energy when α* nears
    // the feasibility edge, so panels are graded twice: first towards the
    // edge singularity (so the edge residual is resolved), then towards the
    // integrand at the resulting first-pass root.
    let abs_tol = (0.01 * opts.tol).max(1e-15);
    let integrand_at = |alpha: f64| {
        move |x: f64| spec.pdf(x) * weight(divergence, alpha, lambda, energy.eval(x)).unwrap_or(0.0)
    };
    let edge_rule = spec.rule.adapted_to(integrand_at(feasibility_edge(energy, lambda)), abs_tol, MAX_PANELS);
    let alpha0 = bisect_root(&Discretized::new(&edge_rule, spec, energy), energy, divergence, lambda, opts.tol)?;
    let rule = spec.rule.adapted_to(integrand_at(alpha0), abs_tol, MAX_PANELS);
    let disc = Discretized::new(&rule, spec, energy);
    let alpha_star = bisect_root(&disc, energy, divergence, lambda, opts.tol)?;
    if opts.check_refinement {
        let fine = Discretized::new(&rule.refined(), spec, energy);
        let alpha_fine = bisect_root(&fine, energy, divergence, lambda, opts.tol)?;
        if (alpha_fine - alpha_star).abs() > 10.0 * opts.tol {
            return Err(Error::QuadratureUnstable { coarse: alpha_star, fine: alpha_fine });
        }
    }
    let residual = disc.residual(energy, divergence, alpha_star, lambda)?;
    if residual.abs() > SOLVED_NORMALIZATION_TOL {
        return Err(Error::NumericalError {
            step: 0,
            what: format!("solved density integrates to 1 + {residual:e}"),
        });
    }
    let (a, b) = spec.support();
    let n = opts.grid_points;
    let grid = (0..n)
        .map(|i| {
            let x = if i == n - 1 { b } else { a + (b - a) * i as f64 / (n - 1) as f64 };
            let p_d = spec.pdf(x);
            let e = energy.eval(x);
            let w = weight(divergence, alpha_star, lambda, e)?;
            Ok(GridPoint { x, p_d, energy: e, weight: w, p_g_star: p_d * w })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SolveResult { divergence, lambda, alpha_star, residual, grid })
}

/// Smallest multiplier tried: `-λ·min E` nudged into the feasible region.
fn feasibility_edge(energy: &EnergySpec1D, lambda: f64) -> f64 {
    let edge = -lambda * energy.min_bound;
    edge + 1e-12 * (1.0 + edge.abs())
}

fn bisect_root(disc: &Discretized, energy: &EnergySpec1D, divergence: Divergence, lambda: f64, tol: f64) -> Result<f64> {
    let mut lo = feasibility_edge(energy, lambda);
    let phi = |alpha: f64| disc.residual(energy, divergence, alpha, lambda);
    let r_lo = phi(lo)?;
    if !(r_lo > 0.0) {
        return Err(Error::NoFeasibleRoot(format!(
            "residual {r_lo} at the feasibility edge alpha = {lo} is not positive"
        )));
    }
    let mut step = 1.0f64.max(lo.abs());
    let mut hi = lo + step;
    let mut doublings = 0;
    while phi(hi)? >= 0.0 {
        lo = hi;
        step *= 2.0;
        hi += step;
        doublings += 1;
        if doublings > 200 || !hi.is_finite() {
            return Err(Error::NoFeasibleRoot("residual never becomes negative on the feasible ray".into()));
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if phi(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `(min weight, max weight, max / min)` over the reported grid.
pub fn weight_range(result: &SolveResult) -> (f64, f64, f64) {
    let lo = result.grid.iter().map(|g| g.weight).fold(f64::INFINITY, f64::min);
    let hi = result.grid.iter().map(|g| g.weight).fold(f64::NEG_INFINITY, f64::max);
    (lo, hi, hi / lo)
}

/// `sup_x |p_g*(x) - p_d(x)|` over the reported grid.
pub fn sup_deviation(result: &SolveResult) -> f64 {
    result.grid.iter().map(|g| (g.p_g_star - g.p_d).abs()).fold(0.0, f64::max)
}

/// Independent solves for every `(divergence, λ)` pair, in input order.
pub fn solve_batch(
    spec: &DensitySpec,
    energy: &EnergySpec1D,
    jobs: &[(Divergence, f64)],
    opts: &SolveOptions,
    exec: Exec,
) -> Vec<Result<SolveResult>> {
    map_indexed(exec, jobs.len(), |i| {
        let (div, lambda) = jobs[i];
        solve_alpha_with(spec, energy, div, lambda, opts)
    })
}
