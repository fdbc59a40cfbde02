//! Scalar helpers shared by the likelihood and sampling code.

/// `g(z) = 1 / (1 + e^z)`.
#[inline]
pub fn g(z: f64) -> f64 {
    1.0 / (1.0 + z.exp())
}

/// `h(z) = e^z / (1 + e^z)`, the logistic function.
#[inline]
pub fn h(z: f64) -> f64 {
    // h(z) = g(-z); this form avoids overflow for large positive z.
    1.0 / (1.0 + (-z).exp())
}

/// `log g(z) = -log(1 + e^z)`, computed without overflow.
#[inline]
pub fn log_g(z: f64) -> f64 {
    -softplus(z)
}

/// `softplus(z) = log(1 + e^z)`.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Second derivative of `z -> x z + log g(z)`: `-e^z / (1 + e^z)^2 = -h(z) g(z)`.
#[inline]
pub fn phi_second(z: f64) -> f64 {
    let hz = h(z);
    -hz * (1.0 - hz)
}

/// `log(sum(exp(v)))` with max shift.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = values.iter().map(|v| (v - m).exp()).sum();
    m + s.ln()
}

/// Formats a float with 17 significant digits so that reading it back
/// reproduces the exact bit pattern.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
