//! Two-sample metrics for low-dimensional point clouds: RBF-kernel MMD² and
//! the Fréchet distance between Gaussian moment fits.

use crate::error::{invalid, Result};
use crate::numeric::{compensated_sum, sq_dist};
use crate::par::{map_indexed, Exec};

/// Eigenvalue floor for near-singular 2×2 covariances.
pub const COV_EIGEN_FLOOR: f64 = 1e-12;

/// Points used by the median heuristic (evenly strided subsample beyond this).
const MEDIAN_MAX_POINTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mmd2 {
    pub unbiased: f64,
    pub biased: f64,
    pub bandwidth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub mmd2_unbiased: f64,
    pub mmd2_biased: f64,
    pub frechet: f64,
    pub bandwidth: f64,
    pub n_real: usize,
    pub n_fake: usize,
}

fn check_points(x: &[Vec<f64>], min: usize, what: &str) -> Result<usize> {
    if x.len() < min {
        return Err(invalid(format!("{what} needs at least {min} points, got {}", x.len())));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|p| p.len() != d) {
        return Err(invalid(format!("{what} points must share a positive dimension")));
    }
    Ok(d)
}

/// Median pairwise Euclidean distance over `x ∪ y` (1.0 if it is zero).
pub fn median_bandwidth(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let all: Vec<&Vec<f64>> = x.iter().chain(y).collect();
    let stride = all.len().div_ceil(MEDIAN_MAX_POINTS).max(1);
    let pts: Vec<&Vec<f64>> = all.into_iter().step_by(stride).collect();
    let mut d: Vec<f64> = Vec::with_capacity(pts.len() * pts.len().saturating_sub(1) / 2);
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            d.push(sq_dist(pts[i], pts[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    if *m > 0.0 {
        *m
    } else {
        1.0
    }
}

fn kernel(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    (-gamma * sq_dist(a, b)).exp()
}

/// Row sums `Σ_j k(a_i, b_j)` (excluding `j = i` when `skip_diag`), in row order.
fn row_sums(a: &[Vec<f64>], b: &[Vec<f64>], gamma: f64, skip_diag: bool, exec: Exec) -> Vec<f64> {
    map_indexed(exec, a.len(), |i| {
        compensated_sum(b.iter().enumerate().filter(|(j, _)| !(skip_diag && *j == i)).map(|(_, q)| kernel(&a[i], q, gamma)))
    })
}

/// RBF-kernel MMD², `k(x, y) = exp(-‖x - y‖² / (2h²))`, with the median
/// heuristic for `h` when `bandwidth` is `None`.
pub fn mmd2(x: &[Vec<f64>], y: &[Vec<f64>], bandwidth: Option<f64>) -> Result<Mmd2> {
    mmd2_with(x, y, bandwidth, Exec::default())
}

pub fn mmd2_with(x: &[Vec<f64>], y: &[Vec<f64>], bandwidth: Option<f64>, exec: Exec) -> Result<Mmd2> {
    let dx = check_points(x, 2, "X")?;
    let dy = check_points(y, 2, "Y")?;
    if dx != dy {
        return Err(invalid(format!("X has dimension {dx}, Y has {dy}")));
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(invalid(format!("bandwidth must be positive, got {h}"))),
        None => median_bandwidth(x, y),
    };
    let gamma = 1.0 / (2.0 * h * h);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let kxx = compensated_sum(row_sums(x, x, gamma, true, exec));
    let kyy = compensated_sum(row_sums(y, y, gamma, true, exec));
    let kxy = compensated_sum(row_sums(x, y, gamma, false, exec));
    let unbiased = kxx / (n * (n - 1.0)) + kyy / (m * (m - 1.0)) - 2.0 * kxy / (n * m);
    // k(x, x) = 1 on the diagonal.
    let biased = (kxx + n) / (n * n) + (kyy + m) / (m * m) - 2.0 * kxy / (n * m);
    Ok(Mmd2 { unbiased, biased: biased.max(0.0), bandwidth: h })
}

/// Sample mean and (n - 1)-normalized covariance `[a, b; b, c]` of 2-D points.
pub fn moments_2d(x: &[Vec<f64>]) -> Result<([f64; 2], [f64; 3])> {
    let d = check_points(x, 2, "sample")?;
    if d != 2 {
        return Err(invalid(format!("moments need 2-D points, got dimension {d}")));
    }
    let n = x.len() as f64;
    let mx = compensated_sum(x.iter().map(|p| p[0])) / n;
    let my = compensated_sum(x.iter().map(|p| p[1])) / n;
    let a = compensated_sum(x.iter().map(|p| (p[0] - mx) * (p[0] - mx))) / (n - 1.0);
    let b = compensated_sum(x.iter().map(|p| (p[0] - mx) * (p[1] - my))) / (n - 1.0);
    let c = compensated_sum(x.iter().map(|p| (p[1] - my) * (p[1] - my))) / (n - 1.0);
    Ok(([mx, my], [a, b, c]))
}

/// Raises the smaller eigenvalue of a symmetric 2×2 matrix to [`COV_EIGEN_FLOOR`].
fn floor_eigen([a, b, c]: [f64; 3]) -> [f64; 3] {
    let mean = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let lo = mean - rad;
    if lo >= COV_EIGEN_FLOOR {
        return [a, b, c];
    }
    // Unit eigenvector of the smaller eigenvalue.
    let (vx, vy) = if b != 0.0 {
        (lo - c, b)
    } else if a <= c {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let norm = (vx * vx + vy * vy).sqrt();
    let (vx, vy) = (vx / norm, vy / norm);
    let delta = COV_EIGEN_FLOOR - lo;
    [a + delta * vx * vx, b + delta * vx * vy, c + delta * vy * vy]
}

/// `‖μ₁ - μ₂‖² + Tr(Σ₁ + Σ₂ - 2(Σ₁Σ₂)^{1/2})` for 2-D Gaussians.
///
/// `Σ₁Σ₂` has nonnegative eigenvalues, so `Tr (Σ₁Σ₂)^{1/2} = sqrt(Tr M + 2·sqrt(det M))`.
pub fn frechet_from_moments(mu1: [f64; 2], cov1: [f64; 3], mu2: [f64; 2], cov2: [f64; 3]) -> f64 {
    let [a1, b1, c1] = floor_eigen(cov1);
    let [a2, b2, c2] = floor_eigen(cov2);
    let tr_m = a1 * a2 + 2.0 * b1 * b2 + c1 * c2;
    let det_m = (a1 * c1 - b1 * b1) * (a2 * c2 - b2 * b2);
    let tr_sqrt = (tr_m + 2.0 * det_m.max(0.0).sqrt()).max(0.0).sqrt();
    let dm = (mu1[0] - mu2[0]).powi(2) + (mu1[1] - mu2[1]).powi(2);
    (dm + a1 + c1 + a2 + c2 - 2.0 * tr_sqrt).max(0.0)
}

pub fn frechet_gaussian(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<f64> {
    check_points(x, 3, "X")?;
    check_points(y, 3, "Y")?;
    let (m1, c1) = moments_2d(x)?;
    let (m2, c2) = moments_2d(y)?;
    Ok(frechet_from_moments(m1, c1, m2, c2))
}

pub fn metric_report(real: &[Vec<f64>], fake: &[Vec<f64>], bandwidth: Option<f64>) -> Result<MetricReport> {
    let mmd = mmd2(real, fake, bandwidth)?;
    Ok(MetricReport {
        mmd2_unbiased: mmd.unbiased,
        mmd2_biased: mmd.biased,
        frechet: frechet_gaussian(real, fake)?,
        bandwidth: mmd.bandwidth,
        n_real: real.len(),
        n_fake: fake.len(),
    })
}
