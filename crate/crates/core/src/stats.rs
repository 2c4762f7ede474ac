//! Small numeric helpers: compensated summation and nearest-rank quantiles.

/// Kahan–Babuška compensated accumulator. Integer-valued decision counts are
/// summed exactly in integers elsewhere; this is for the floating-point sums
/// (correlation numerators, per-group variance terms) that must survive the
/// crate's 1e-12 identity checks at millions of decisions.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Nearest-rank quantile: the order statistic at 1-based index `ceil(q * n)`.
///
/// Integer-indexed, so identical across platforms; no interpolation.
/// `q` must lie in (0, 1]; `values` must be non-empty.
pub fn quantile_nearest_rank(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty sample");
    assert!(q > 0.0 && q <= 1.0, "quantile level {q} outside (0, 1]");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Ordinary least squares slope of `y` against index 0..n, with its
/// standard error. Used by drift checks on stored replicate sequences.
pub fn ols_slope_and_se(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    assert!(y.len() >= 3, "need at least 3 points for a slope SE");
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let dx = i as f64 - x_mean;
        sxx += dx * dx;
        sxy += dx * (yi - y_mean);
    }
    let slope = sxy / sxx;
    let mut sse = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let fitted = y_mean + slope * (i as f64 - x_mean);
        sse += (yi - fitted) * (yi - fitted);
    }
    let se = (sse / (n - 2.0) / sxx).sqrt();
    (slope, se)
}
