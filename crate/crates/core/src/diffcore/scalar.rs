//! Numerically stable scalar kernels shared by the tape and the pure helpers.

use std::f64::consts::LN_2;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log σ(x) = −softplus(−x)`, finite for every finite `x`.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// `log(1 − eˣ)` for `x ≤ 0`.
///
/// Inputs are clamped to `−f64::MIN_POSITIVE` so a saturated log-probability
/// of exactly zero still yields a finite value.
pub fn log1mexp(x: f64) -> f64 {
    let x = x.min(-f64::MIN_POSITIVE);
    if x > -LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

pub fn log1mexp_derivative(x: f64) -> f64 {
    if x >= -f64::MIN_POSITIVE {
        return 0.0;
    }
    // −eˣ / (1 − eˣ) = −1 / (e^{−x} − 1)
    -1.0 / (-x).exp_m1()
}

/// Max-shifted log-softmax of one score row.
pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    row.iter().map(|x| x - lse).collect()
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    log_softmax(row).into_iter().map(f64::exp).collect()
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
