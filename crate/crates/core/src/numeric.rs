//! Small numerical helpers shared by the densities and oracles.

use statrs::function::erf::erfc;

/// `ln(2π)`.
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Stable `ln Σ exp(v_i)`. Returns `-inf` for an empty slice or when every entry is `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Replace log-weights by their normalized exponentials in one pass.
/// Leaves NaN everywhere when no entry is finite.
pub fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        values.iter_mut().for_each(|v| *v = f64::NAN);
        return;
    }
    let mut sum = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = 1.0 / sum;
    values.iter_mut().for_each(|v| *v *= inv);
}

/// `ln(e^a + e^b)`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Log-density of a univariate normal.
#[inline]
pub fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// `ln Φ(t)` for the standard normal CDF, accurate far into the lower tail.
pub fn log_ndtr(t: f64) -> f64 {
    if t > 6.0 {
        // Φ(t) = 1 - Q(t) with Q tiny.
        (-0.5 * erfc(t / std::f64::consts::SQRT_2)).ln_1p()
    } else if t > -30.0 {
        (0.5 * erfc(-t / std::f64::consts::SQRT_2)).ln()
    } else {
        // Asymptotic expansion of the Mills ratio.
        let t2 = t * t;
        let inv = 1.0 / t2;
        let series = 1.0 - inv * (1.0 - 3.0 * inv * (1.0 - 5.0 * inv * (1.0 - 7.0 * inv)));
        -0.5 * t2 - (-t).ln() - 0.5 * LN_2PI + series.ln()
    }
}

/// `ln Q(a) = ln P(X > a)` for a standard normal `X`.
#[inline]
pub fn log_upper_tail(a: f64) -> f64 {
    log_ndtr(-a)
}

/// Normalize log-weights in place so that their log-sum-exp is zero.
/// Returns the log normalizer, or `None` if every weight is `-inf` or any is NaN.
pub fn normalize_log_weights(log_w: &mut [f64]) -> Option<f64> {
    let lse = log_sum_exp(log_w);
    if !lse.is_finite() || log_w.iter().any(|v| v.is_nan()) {
        return None;
    }
    for v in log_w.iter_mut() {
        *v -= lse;
    }
    Some(lse)
}

/// Linear weights from log-weights, rescaled to sum to one.
pub fn weights_from_log(log_w: &[f64]) -> Vec<f64> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = log_w.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= s;
    }
    w
}

/// Draw an index with probability proportional to `weights` (linear scan).
pub fn categorical<R: rand::Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    if weights.len() == 1 {
        return 0;
    }
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    // Rounding left a sliver past the end; take the last index with mass.
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
