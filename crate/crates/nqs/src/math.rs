//! Stable evaluation of the complex functions appearing in RBM amplitudes.

use num_complex::Complex64;

/// ln(1 + e^z) with the principal branch, usable for Re(z) of either sign
/// up to ±700 and beyond without overflow.
///
/// The returned imaginary part is only defined modulo 2π; it cancels when the
/// result is re-exponentiated, which is the only way amplitudes are consumed.
pub fn ln_one_plus_exp(z: Complex64) -> Complex64 {
    if z.re > 0.0 {
        z + (Complex64::new(1.0, 0.0) + (-z).exp()).ln()
    } else {
        (Complex64::new(1.0, 0.0) + z.exp()).ln()
    }
}

/// Logistic function 1 / (1 + e^{-z}), the derivative of [`ln_one_plus_exp`].
pub fn sigmoid(z: Complex64) -> Complex64 {
    if z.re > 0.0 {
        (Complex64::new(1.0, 0.0) + (-z).exp()).inv()
    } else {
        let e = z.exp();
        e / (Complex64::new(1.0, 0.0) + e)
    }
}

/// ln(e^a + s·e^b) for s = ±1, factoring out the larger magnitude first.
///
/// Either input may carry `re = -inf` (a log-encoded zero). An exact
/// cancellation yields `re = -inf` as well; it encodes amplitude zero and is
/// not an error.
pub fn ln_sum_signed(a: Complex64, b: Complex64, sign: f64) -> Complex64 {
    if a.re == f64::NEG_INFINITY && b.re == f64::NEG_INFINITY {
        return Complex64::new(f64::NEG_INFINITY, 0.0);
    }
    let (hi, rest) = if a.re >= b.re {
        // e^a + s e^b = e^a (1 + s e^{b-a})
        (a, Complex64::new(1.0, 0.0) + (b - a).exp() * sign)
    } else {
        // e^a + s e^b = e^b (e^{a-b} + s)
        (b, (a - b).exp() + Complex64::new(sign, 0.0))
    };
    if rest.norm_sqr() == 0.0 {
        return Complex64::new(f64::NEG_INFINITY, 0.0);
    }
    hi + rest.ln()
}

/// exp of a log-encoded amplitude; `re = -inf` maps to exactly zero.
pub fn exp_log_amp(log_amp: Complex64) -> Complex64 {
    if log_amp.re == f64::NEG_INFINITY {
        Complex64::new(0.0, 0.0)
    } else {
        log_amp.exp()
    }
}
