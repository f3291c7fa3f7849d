//! Small numeric helpers shared by the estimators.

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Sample mean and plug-in standard error `sqrt(s² / n)` with `s²` the
/// unbiased sample variance.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = compensated_sum(xs.iter().copied()) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
