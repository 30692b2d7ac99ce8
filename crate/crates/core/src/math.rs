//! Small numeric helpers shared by the energy and residual code.

use alloc::vec::Vec;

/// Largest exponent argument accepted before a power is reported as overflow.
pub const LOG_POWER_CAP: f64 = 700.0;

/// Pairwise (tree) summation with a fixed topology.
///
/// The split point depends only on the slice length, so the same input
/// always reduces in the same order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Sum of `f(i)` for `i in 0..n`, reduced pairwise.
pub fn pairwise_sum_by(n: usize, f: impl FnMut(usize) -> f64) -> f64 {
    let terms: Vec<f64> = (0..n).map(f).collect();
    pairwise_sum(&terms)
}

/// `|t|^p` computed as `exp(p ln|t|)`, with `|t| = 0` giving 0.
///
/// Returns `None` when `p ln|t|` exceeds [`LOG_POWER_CAP`].
pub fn abs_pow(t: f64, p: f64) -> Option<f64> {
    let a = libm::fabs(t);
    if a == 0.0 {
        return Some(0.0);
    }
    let arg = p * libm::log(a);
    if arg > LOG_POWER_CAP {
        None
    } else {
        Some(libm::exp(arg))
    }
}

/// `(s)^(p/2)` for a squared magnitude `s >= 0`, i.e. `|x|^p` from `|x|^2`.
pub fn sq_pow(s: f64, p: f64) -> Option<f64> {
    if s <= 0.0 {
        return Some(0.0);
    }
    let arg = 0.5 * p * libm::log(s);
    if arg > LOG_POWER_CAP {
        None
    } else {
        Some(libm::exp(arg))
    }
}

pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

pub fn hypot(x: f64, y: f64) -> f64 {
    libm::hypot(x, y)
}

pub fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |m, v| m.max(libm::fabs(*v)))
}

/// `max - min` of a slice, 0 for an empty slice.
pub fn spread(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    hi - lo
}

/// Linear least-squares slope of `log2(values)` against `-log2(h)`.
///
/// This is the observed convergence order of a sequence of errors measured
/// at spacings `hs`. Non-positive values make the fit meaningless and yield
/// `None`.
pub fn observed_order(hs: &[f64], values: &[f64]) -> Option<f64> {
    if hs.len() != values.len() || hs.len() < 2 {
        return None;
    }
    if values.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let n = hs.len() as f64;
    let xs: Vec<f64> = hs.iter().map(|h| -libm::log2(*h)).collect();
    let ys: Vec<f64> = values.iter().map(|v| libm::log2(*v)).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        return None;
    }
    Some(-sxy / sxx)
}

/// Empirical quantile by nearest rank on a copy of the data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let rank = libm::ceil(q * sorted.len() as f64) as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}
