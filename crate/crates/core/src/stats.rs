//! Small descriptive-statistics helpers shared across modules.

/// Percentile of `values` with linear interpolation between closest ranks
/// (the numpy default). `q` is in `[0, 100]`. Returns `NaN` on empty input.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, q)
}

pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let q = q.clamp(0.0, 100.0);
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    percentile(values, 50.0)
}

/// Population central moments (m2, m3, m4) about the mean.
fn central_moments(values: &[f64]) -> (f64, f64, f64) {
    let mu = mean(values);
    let n = values.len() as f64;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - mu;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (m2 / n, m3 / n, m4 / n)
}

/// Population standard deviation; exactly 0 for constant input.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m2 = central_moments(values).0;
    if m2 <= DEGENERATE * (1.0 + mean(values).powi(2)) {
        return 0.0;
    }
    m2.sqrt()
}

/// Relative tolerance under which a column is treated as constant.
const DEGENERATE: f64 = 1e-24;

/// Population skewness; 0 for constant input.
pub fn skewness(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let (m2, m3, _) = central_moments(values);
    if m2 <= DEGENERATE * (1.0 + mean(values).powi(2)) {
        return 0.0;
    }
    m3 / m2.powf(1.5)
}

/// Excess (Fisher) kurtosis; 0 for constant input.
pub fn kurtosis(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let (m2, _, m4) = central_moments(values);
    if m2 <= DEGENERATE * (1.0 + mean(values).powi(2)) {
        return 0.0;
    }
    m4 / (m2 * m2) - 3.0
}
