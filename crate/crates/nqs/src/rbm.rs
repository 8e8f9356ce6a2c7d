//! Complex RBM wave function over computational-basis bitstrings.
//!
//! A state on N qubits with M hidden units assigns each bitstring B the
//! unnormalized amplitude
//!
//! ```text
//! Psi(B) = exp(sum_j a_j B_j) * prod_k (1 + exp(theta_k)),
//! theta_k = b_k + sum_j W_jk B_j,
//! ```
//!
//! with complex visible biases a, hidden biases b and weights W. Evaluation
//! happens in log space so amplitudes spanning hundreds of orders of
//! magnitude stay representable. Bits follow the {0,1} convention with
//! Z|B> = (-1)^B |B>, not the ±1 spin convention.

use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{NqsError, Result};
use crate::math::{ln_one_plus_exp, sigmoid};

/// Computational-basis label: one bit per qubit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitString {
    bits: Vec<bool>,
}

impl BitString {
    pub fn zeros(n: usize) -> Self {
        BitString {
            bits: vec![false; n],
        }
    }

    pub fn from_bools(bits: Vec<bool>) -> Self {
        BitString { bits }
    }

    /// Decode a basis-state index; bit j is the j-th binary digit, so qubit 0
    /// is the least significant bit. The statevector backend indexes the same
    /// way.
    pub fn from_index(index: usize, n: usize) -> Self {
        let bits = (0..n).map(|j| (index >> j) & 1 == 1).collect();
        BitString { bits }
    }

    /// Inverse of [`BitString::from_index`]. Only meaningful at oracle scale
    /// (fits in a usize).
    pub fn to_index(&self) -> usize {
        assert!(self.bits.len() <= usize::BITS as usize);
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .fold(0, |acc, (j, _)| acc | (1 << j))
    }

    pub fn random(n: usize, rng: &mut impl Rng) -> Self {
        let bits = (0..n).map(|_| rng.gen::<bool>()).collect();
        BitString { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn bit(&self, j: usize) -> bool {
        self.bits[j]
    }

    /// The bit as 0.0 or 1.0, for use in amplitude formulas.
    #[inline]
    pub fn value(&self, j: usize) -> f64 {
        f64::from(u8::from(self.bits[j]))
    }

    #[inline]
    pub fn flip(&mut self, j: usize) {
        self.bits[j] = !self.bits[j];
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().copied()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn hamming_distance(&self, other: &BitString) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count()
    }
}

impl fmt::Display for BitString {
    /// Digits in qubit order: leftmost character is bit 0.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            write!(f, "{}", u8::from(b))?;
        }
        Ok(())
    }
}

/// A hidden unit to append to a state: its bias and one coupling per qubit.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenUnit {
    pub bias: Complex64,
    pub weights: Vec<Complex64>,
}

impl HiddenUnit {
    /// Unit coupled to nothing; multiplies every amplitude by 2.
    pub fn decoupled(n_visible: usize) -> Self {
        HiddenUnit {
            bias: Complex64::new(0.0, 0.0),
            weights: vec![Complex64::new(0.0, 0.0); n_visible],
        }
    }
}

/// The variational wave function: complex RBM parameters for N qubits and
/// M hidden units. Amplitudes are unnormalized throughout; every consumer
/// works with ratios or log differences.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmState {
    n_visible: usize,
    n_hidden: usize,
    visible_bias: Vec<Complex64>,
    hidden_bias: Vec<Complex64>,
    /// Row-major: W_jk lives at j * n_hidden + k.
    weights: Vec<Complex64>,
}

impl RbmState {
    pub fn zeros(n_visible: usize, n_hidden: usize) -> Result<Self> {
        if n_visible == 0 {
            return Err(NqsError::InvalidConfig(
                "state needs at least one qubit".into(),
            ));
        }
        Ok(RbmState {
            n_visible,
            n_hidden,
            visible_bias: vec![Complex64::new(0.0, 0.0); n_visible],
            hidden_bias: vec![Complex64::new(0.0, 0.0); n_hidden],
            weights: vec![Complex64::new(0.0, 0.0); n_visible * n_hidden],
        })
    }

    /// Build from explicit parameter vectors; `weights` is row-major with
    /// visible index j as the row.
    pub fn from_parts(
        visible_bias: Vec<Complex64>,
        hidden_bias: Vec<Complex64>,
        weights: Vec<Complex64>,
    ) -> Result<Self> {
        let n = visible_bias.len();
        let m = hidden_bias.len();
        if n == 0 {
            return Err(NqsError::InvalidConfig(
                "state needs at least one qubit".into(),
            ));
        }
        if weights.len() != n * m {
            return Err(NqsError::DimensionMismatch {
                what: "weight matrix",
                expected: n * m,
                got: weights.len(),
            });
        }
        let state = RbmState {
            n_visible: n,
            n_hidden: m,
            visible_bias,
            hidden_bias,
            weights,
        };
        state.validate()?;
        Ok(state)
    }

    /// All parameters drawn i.i.d. Gaussian with standard deviation `sigma`
    /// in both real and imaginary parts.
    pub fn random(
        n_visible: usize,
        n_hidden: usize,
        sigma: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(NqsError::InvalidConfig(format!(
                "init noise scale must be finite and non-negative, got {sigma}"
            )));
        }
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| NqsError::InvalidConfig(format!("bad noise scale: {e}")))?;
        let mut state = RbmState::zeros(n_visible, n_hidden)?;
        for z in state
            .visible_bias
            .iter_mut()
            .chain(state.hidden_bias.iter_mut())
            .chain(state.weights.iter_mut())
        {
            *z = Complex64::new(normal.sample(rng), normal.sample(rng));
        }
        Ok(state)
    }

    /// Product state concentrated on `target`: no hidden units, and each
    /// visible bias pushes its qubit toward the target bit. A wrong bit costs
    /// a factor exp(-strength) in amplitude, so this is |target> only up to
    /// that suppression.
    pub fn pinned(target: &BitString, strength: f64) -> Result<Self> {
        if !(strength.is_finite() && strength > 0.0) {
            return Err(NqsError::InvalidConfig(format!(
                "pin strength must be finite and positive, got {strength}"
            )));
        }
        let visible_bias = target
            .iter()
            .map(|b| Complex64::new(if b { strength } else { -strength }, 0.0))
            .collect();
        RbmState::from_parts(visible_bias, Vec::new(), Vec::new())
    }

    pub fn n_visible(&self) -> usize {
        self.n_visible
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    /// Hidden-unit density M/N.
    pub fn alpha(&self) -> f64 {
        self.n_hidden as f64 / self.n_visible as f64
    }

    pub fn visible_bias(&self) -> &[Complex64] {
        &self.visible_bias
    }

    pub fn hidden_bias(&self) -> &[Complex64] {
        &self.hidden_bias
    }

    /// Row-major weight storage; W_jk at j * n_hidden + k.
    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    #[inline]
    pub fn weight(&self, j: usize, k: usize) -> Complex64 {
        self.weights[j * self.n_hidden + k]
    }

    #[inline]
    pub(crate) fn weight_row(&self, j: usize) -> &[Complex64] {
        &self.weights[j * self.n_hidden..(j + 1) * self.n_hidden]
    }

    pub(crate) fn visible_bias_mut(&mut self) -> &mut [Complex64] {
        &mut self.visible_bias
    }

    pub(crate) fn hidden_bias_mut(&mut self) -> &mut [Complex64] {
        &mut self.hidden_bias
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [Complex64] {
        &mut self.weights
    }

    /// Check all parameters are finite.
    pub fn validate(&self) -> Result<()> {
        let parts: [(&str, &[Complex64]); 3] = [
            ("visible bias", &self.visible_bias),
            ("hidden bias", &self.hidden_bias),
            ("weights", &self.weights),
        ];
        for (what, values) in parts {
            if !values.iter().all(|z| z.is_finite()) {
                return Err(NqsError::NonFinite { what });
            }
        }
        Ok(())
    }

    fn check_bits(&self, b: &BitString) -> Result<()> {
        if b.len() != self.n_visible {
            return Err(NqsError::DimensionMismatch {
                what: "bitstring",
                expected: self.n_visible,
                got: b.len(),
            });
        }
        Ok(())
    }

    /// log Psi(B), evaluated stably in log space. Errors if any hidden-unit
    /// factor produces a non-finite log, which includes the measure-zero case
    /// of an exactly vanishing factor.
    pub fn log_amplitude(&self, b: &BitString) -> Result<Complex64> {
        self.check_bits(b)?;
        let mut acc = Complex64::new(0.0, 0.0);
        let mut theta: Vec<Complex64> = self.hidden_bias.clone();
        for j in 0..self.n_visible {
            if b.bit(j) {
                acc += self.visible_bias[j];
                for (t, w) in theta.iter_mut().zip(self.weight_row(j)) {
                    *t += w;
                }
            }
        }
        for (k, th) in theta.iter().enumerate() {
            let term = ln_one_plus_exp(*th);
            if !(term.re.is_finite() && term.im.is_finite()) {
                return Err(NqsError::NonFiniteUnit {
                    what: "log amplitude",
                    unit: k,
                });
            }
            acc += term;
        }
        Ok(acc)
    }

    /// Variational derivatives O_p(B) = d log Psi / d p at the table's
    /// bitstring, in the canonical parameter order: all visible biases, then
    /// all hidden biases, then weights row-major in (j, k). Components are
    /// B_j, sigma(theta_k) and B_j sigma(theta_k) respectively.
    pub fn variational_derivatives(&self, table: &ThetaTable) -> Result<Vec<Complex64>> {
        self.check_bits(table.bits())?;
        if table.theta.len() != self.n_hidden {
            return Err(NqsError::DimensionMismatch {
                what: "theta table",
                expected: self.n_hidden,
                got: table.theta.len(),
            });
        }
        let (n, m) = (self.n_visible, self.n_hidden);
        let sigma: Vec<Complex64> = table.theta.iter().map(|&t| sigmoid(t)).collect();
        let mut out = vec![Complex64::new(0.0, 0.0); self.parameter_count()];
        for j in 0..n {
            if table.bits().bit(j) {
                out[j] = Complex64::new(1.0, 0.0);
                out[n + m + j * m..n + m + (j + 1) * m].copy_from_slice(&sigma);
            }
        }
        out[n..n + m].copy_from_slice(&sigma);
        Ok(out)
    }

    pub fn parameter_count(&self) -> usize {
        self.n_visible + self.n_hidden + self.n_visible * self.n_hidden
    }

    /// Parameters in the canonical order (visible biases, hidden biases,
    /// weights row-major), matching [`RbmState::variational_derivatives`].
    pub fn flatten_parameters(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        out.extend_from_slice(&self.visible_bias);
        out.extend_from_slice(&self.hidden_bias);
        out.extend_from_slice(&self.weights);
        out
    }

    /// Overwrite all parameters from a canonical-order vector.
    pub fn set_parameters(&mut self, params: &[Complex64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(NqsError::DimensionMismatch {
                what: "parameter vector",
                expected: self.parameter_count(),
                got: params.len(),
            });
        }
        if !params.iter().all(|z| z.is_finite()) {
            return Err(NqsError::NonFinite {
                what: "parameter vector",
            });
        }
        let (n, m) = (self.n_visible, self.n_hidden);
        self.visible_bias.copy_from_slice(&params[..n]);
        self.hidden_bias.copy_from_slice(&params[n..n + m]);
        self.weights.copy_from_slice(&params[n + m..]);
        Ok(())
    }

    /// Append hidden units. Each appended unit multiplies every amplitude by
    /// (1 + exp(bias + sum_j weights_j B_j)); a decoupled unit therefore
    /// rescales uniformly by 2, which is invisible up to normalization. An
    /// empty batch leaves the state untouched.
    pub fn add_hidden_units(&mut self, units: &[HiddenUnit]) -> Result<()> {
        for unit in units {
            if unit.weights.len() != self.n_visible {
                return Err(NqsError::DimensionMismatch {
                    what: "hidden unit couplings",
                    expected: self.n_visible,
                    got: unit.weights.len(),
                });
            }
            if !unit.bias.is_finite() || !unit.weights.iter().all(|z| z.is_finite()) {
                return Err(NqsError::NonFinite {
                    what: "hidden unit",
                });
            }
        }
        if units.is_empty() {
            return Ok(());
        }
        let (n, old_m) = (self.n_visible, self.n_hidden);
        let new_m = old_m + units.len();
        let mut weights = vec![Complex64::new(0.0, 0.0); n * new_m];
        for j in 0..n {
            weights[j * new_m..j * new_m + old_m]
                .copy_from_slice(&self.weights[j * old_m..(j + 1) * old_m]);
            for (i, unit) in units.iter().enumerate() {
                weights[j * new_m + old_m + i] = unit.weights[j];
            }
        }
        self.weights = weights;
        self.hidden_bias.extend(units.iter().map(|u| u.bias));
        self.n_hidden = new_m;
        Ok(())
    }
}

/// Per-walker scratch: the hidden-unit pre-activations theta_k and the
/// visible-bias sum for one bound bitstring, maintained incrementally so a
/// single-bit update costs O(M) instead of O(NM).
///
/// Tables are cheap scratch objects; they are never shared between walkers.
/// Index arguments follow slice semantics and panic when out of range.
#[derive(Debug, Clone)]
pub struct ThetaTable {
    bits: BitString,
    theta: Vec<Complex64>,
    visible_term: Complex64,
}

impl ThetaTable {
    pub fn new(state: &RbmState, bits: BitString) -> Result<Self> {
        state.check_bits(&bits)?;
        let mut theta = state.hidden_bias.to_vec();
        let mut visible_term = Complex64::new(0.0, 0.0);
        for j in 0..state.n_visible() {
            if bits.bit(j) {
                visible_term += state.visible_bias[j];
                for (t, w) in theta.iter_mut().zip(state.weight_row(j)) {
                    *t += w;
                }
            }
        }
        Ok(ThetaTable {
            bits,
            theta,
            visible_term,
        })
    }

    pub fn bits(&self) -> &BitString {
        &self.bits
    }

    pub fn theta(&self) -> &[Complex64] {
        &self.theta
    }

    /// log Psi of the bound bitstring in O(M). Unlike
    /// [`RbmState::log_amplitude`] this does not police finiteness: a real
    /// part of -inf encodes an exactly vanishing amplitude, which samplers
    /// treat as a configuration of zero weight.
    pub fn log_amplitude(&self, state: &RbmState) -> Complex64 {
        self.log_amplitude_with_flips(state, &[])
    }

    /// log Psi of the bound bitstring with the listed (distinct) bits
    /// flipped, without committing anything. O(M * flips).
    pub fn log_amplitude_with_flips(&self, state: &RbmState, flips: &[usize]) -> Complex64 {
        debug_assert!(flips
            .iter()
            .enumerate()
            .all(|(i, a)| flips[..i].iter().all(|b| b != a)));
        let mut acc = self.visible_term;
        for &j in flips {
            let sign = if self.bits.bit(j) { -1.0 } else { 1.0 };
            acc += state.visible_bias[j] * sign;
        }
        let m = state.n_hidden();
        for k in 0..m {
            let mut th = self.theta[k];
            for &j in flips {
                let sign = if self.bits.bit(j) { -1.0 } else { 1.0 };
                th += state.weights[j * m + k] * sign;
            }
            acc += ln_one_plus_exp(th);
        }
        acc
    }

    /// Commit one bit flip: theta_k gains ±W_lk (+ when the bit rises).
    pub fn flip(&mut self, state: &RbmState, l: usize) {
        let sign = if self.bits.bit(l) { -1.0 } else { 1.0 };
        for (t, w) in self.theta.iter_mut().zip(state.weight_row(l)) {
            *t += w * sign;
        }
        self.visible_term += state.visible_bias[l] * sign;
        self.bits.flip(l);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use num_complex::Complex64;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Independent check value: evaluate the amplitude as a literal product
    /// of factors, no log-space tricks.
    fn product_amplitude(state: &RbmState, b: &BitString) -> Complex64 {
        let mut vis = c(0.0, 0.0);
        for j in 0..state.n_visible() {
            vis += state.visible_bias()[j] * b.value(j);
        }
        let mut amp = vis.exp();
        for k in 0..state.n_hidden() {
            let mut theta = state.hidden_bias()[k];
            for j in 0..state.n_visible() {
                theta += state.weight(j, k) * b.value(j);
            }
            amp *= c(1.0, 0.0) + theta.exp();
        }
        amp
    }

    /// Random state with every component uniform in [-0.5, 0.5].
    fn uniform_state(n: usize, m: usize, seed: u64) -> RbmState {
        let mut rng = derive_rng(seed, &[n as u64, m as u64]);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
            c(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))
        };
        let visible_bias = (0..n).map(|_| draw(&mut rng)).collect();
        let hidden_bias = (0..m).map(|_| draw(&mut rng)).collect();
        let weights = (0..n * m).map(|_| draw(&mut rng)).collect();
        RbmState::from_parts(visible_bias, hidden_bias, weights).unwrap()
    }

    fn assert_complex_close(a: Complex64, b: Complex64, rel: f64) {
        assert_relative_eq!(a.re, b.re, max_relative = rel, epsilon = rel);
        assert_relative_eq!(a.im, b.im, max_relative = rel, epsilon = rel);
    }

    #[test]
    fn log_amplitude_trivial_cases() {
        let s = RbmState::from_parts(vec![c(0.0, 0.0)], vec![], vec![]).unwrap();
        let amp = s.log_amplitude(&BitString::from_bools(vec![true])).unwrap();
        assert_eq!(amp, c(0.0, 0.0));

        let s = RbmState::zeros(1, 1).unwrap();
        let amp = s.log_amplitude(&BitString::zeros(1)).unwrap();
        assert_complex_close(amp, c(2.0_f64.ln(), 0.0), 1e-15);
    }

    #[test]
    fn log_amplitude_matches_product_form() {
        let s = uniform_state(2, 2, 11);
        for idx in 0..4 {
            let b = BitString::from_index(idx, 2);
            let got = s.log_amplitude(&b).unwrap().exp();
            assert_complex_close(got, product_amplitude(&s, &b), 1e-12);
        }
    }

    #[test]
    fn log_amplitude_matches_product_form_every_bitstring() {
        for (n, m, seed) in [(6, 6, 21), (10, 5, 22)] {
            let s = uniform_state(n, m, seed);
            for idx in 0..(1usize << n) {
                let b = BitString::from_index(idx, n);
                let got = s.log_amplitude(&b).unwrap().exp();
                assert_complex_close(got, product_amplitude(&s, &b), 1e-10);
            }
        }
    }

    #[test]
    fn log_amplitude_rejects_wrong_length() {
        let s = RbmState::zeros(3, 1).unwrap();
        let err = s.log_amplitude(&BitString::zeros(2)).unwrap_err();
        assert!(matches!(
            err,
            crate::NqsError::DimensionMismatch { expected: 3, got: 2, .. }
        ));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        // Central differences of the product-form amplitude, which is an
        // entire function of each parameter: (Psi(p+h) - Psi(p-h)) / (2h Psi)
        // approximates d log Psi / dp. A step along the imaginary axis picks
        // up an extra factor i.
        let h = 1e-5;
        for seed in [1u64, 2, 3] {
            let s = uniform_state(4, 4, seed);
            let mut rng = derive_rng(seed, &[99]);
            let b = BitString::random(4, &mut rng);
            let table = ThetaTable::new(&s, b.clone()).unwrap();
            let derivs = s.variational_derivatives(&table).unwrap();
            let base = product_amplitude(&s, &b);
            let params = s.flatten_parameters();
            for (p, want) in derivs.iter().enumerate() {
                for (step, factor) in [(c(h, 0.0), c(1.0, 0.0)), (c(0.0, h), c(0.0, 1.0))] {
                    let mut plus = params.clone();
                    plus[p] += step;
                    let mut minus = params.clone();
                    minus[p] -= step;
                    let mut sp = s.clone();
                    sp.set_parameters(&plus).unwrap();
                    let mut sm = s.clone();
                    sm.set_parameters(&minus).unwrap();
                    let fd = (product_amplitude(&sp, &b) - product_amplitude(&sm, &b))
                        / (2.0 * h * base);
                    let got = fd / factor;
                    assert_abs_diff_eq!(got.re, want.re, epsilon = 1e-6);
                    assert_abs_diff_eq!(got.im, want.im, epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn derivatives_trivial_cases() {
        let s = uniform_state(3, 2, 5);
        let table = ThetaTable::new(&s, BitString::zeros(3)).unwrap();
        let d = s.variational_derivatives(&table).unwrap();
        // Bias derivatives B_j and weight derivatives B_j sigma all vanish on
        // the all-zeros bitstring.
        for j in 0..3 {
            assert_eq!(d[j], c(0.0, 0.0));
        }
        for w in &d[5..] {
            assert_eq!(*w, c(0.0, 0.0));
        }

        let s = RbmState::from_parts(vec![c(0.3, 0.0), c(0.1, 0.2)], vec![], vec![]).unwrap();
        let b = BitString::from_bools(vec![true, false]);
        let table = ThetaTable::new(&s, b.clone()).unwrap();
        let d = s.variational_derivatives(&table).unwrap();
        assert_eq!(d, vec![c(1.0, 0.0), c(0.0, 0.0)]);
    }

    #[test]
    fn derivative_order_is_visible_then_hidden_then_weights() {
        // N=2, M=1, both bits set: derivatives are (1, 1, sigma, sigma, sigma)
        // and the weight block is row-major in the visible index.
        let s = RbmState::from_parts(
            vec![c(0.0, 0.0), c(0.0, 0.0)],
            vec![c(0.25, 0.0)],
            vec![c(0.5, 0.0), c(-0.5, 0.0)],
        )
        .unwrap();
        let b = BitString::from_bools(vec![true, true]);
        let table = ThetaTable::new(&s, b).unwrap();
        let theta = c(0.25, 0.0) + c(0.5, 0.0) + c(-0.5, 0.0);
        let sig = crate::math::sigmoid(theta);
        let d = s.variational_derivatives(&table).unwrap();
        assert_eq!(d.len(), 5);
        assert_eq!(&d[..2], &[c(1.0, 0.0), c(1.0, 0.0)]);
        assert_complex_close(d[2], sig, 1e-15);
        assert_complex_close(d[3], sig, 1e-15);
        assert_complex_close(d[4], sig, 1e-15);
    }

    #[test]
    fn theta_table_matches_fresh_computation() {
        let s = uniform_state(6, 8, 7);
        let mut rng = derive_rng(7, &[1]);
        let b = BitString::random(6, &mut rng);
        let mut table = ThetaTable::new(&s, b.clone()).unwrap();

        table.flip(&s, 3);
        let mut flipped = b.clone();
        flipped.flip(3);
        let fresh = ThetaTable::new(&s, flipped).unwrap();
        for (a, b) in table.theta().iter().zip(fresh.theta()) {
            assert_complex_close(*a, *b, 1e-12);
        }

        // Flipping the same bit twice restores the original table.
        table.flip(&s, 3);
        let fresh = ThetaTable::new(&s, b).unwrap();
        for (a, b) in table.theta().iter().zip(fresh.theta()) {
            assert_complex_close(*a, *b, 1e-12);
        }
        assert_complex_close(
            table.log_amplitude(&s),
            fresh.log_amplitude(&s),
            1e-12,
        );
    }

    #[test]
    fn theta_table_with_no_hidden_units_is_empty() {
        let s = RbmState::from_parts(vec![c(0.1, 0.0)], vec![], vec![]).unwrap();
        let mut table = ThetaTable::new(&s, BitString::zeros(1)).unwrap();
        table.flip(&s, 0);
        assert!(table.theta().is_empty());
        assert_eq!(table.log_amplitude(&s), c(0.1, 0.0));
    }

    #[test]
    fn theta_table_survives_long_flip_sequences() {
        let s = uniform_state(8, 12, 13);
        let mut rng = derive_rng(13, &[2]);
        let mut table = ThetaTable::new(&s, BitString::random(8, &mut rng)).unwrap();
        for _ in 0..1000 {
            table.flip(&s, rng.gen_range(0..8));
        }
        let fresh = ThetaTable::new(&s, table.bits().clone()).unwrap();
        for (a, b) in table.theta().iter().zip(fresh.theta()) {
            assert_complex_close(*a, *b, 1e-9);
        }
        assert_complex_close(table.log_amplitude(&s), fresh.log_amplitude(&s), 1e-9);
    }

    #[test]
    fn flip_previews_match_committed_flips() {
        let s = uniform_state(5, 7, 17);
        let mut rng = derive_rng(17, &[3]);
        for _ in 0..20 {
            let b = BitString::random(5, &mut rng);
            let table = ThetaTable::new(&s, b.clone()).unwrap();
            let j = rng.gen_range(0..5);
            let mut l = rng.gen_range(0..5);
            while l == j {
                l = rng.gen_range(0..5);
            }

            let mut one = b.clone();
            one.flip(j);
            let fresh_one = ThetaTable::new(&s, one).unwrap();
            assert_complex_close(
                table.log_amplitude_with_flips(&s, &[j]),
                fresh_one.log_amplitude(&s),
                1e-12,
            );

            let mut two = b.clone();
            two.flip(j);
            two.flip(l);
            let fresh_two = ThetaTable::new(&s, two).unwrap();
            assert_complex_close(
                table.log_amplitude_with_flips(&s, &[j, l]),
                fresh_two.log_amplitude(&s),
                1e-12,
            );
        }
    }

    #[test]
    fn add_hidden_units_scales_amplitudes() {
        let s0 = uniform_state(4, 3, 19);
        let mut rng = derive_rng(19, &[4]);
        let unit = HiddenUnit {
            bias: c(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)),
            weights: (0..4)
                .map(|_| c(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)))
                .collect(),
        };
        let mut s1 = s0.clone();
        s1.add_hidden_units(std::slice::from_ref(&unit)).unwrap();
        assert_eq!(s1.n_hidden(), 4);

        for idx in 0..16 {
            let b = BitString::from_index(idx, 4);
            let ratio = (s1.log_amplitude(&b).unwrap() - s0.log_amplitude(&b).unwrap()).exp();
            let mut theta = unit.bias;
            for j in 0..4 {
                theta += unit.weights[j] * b.value(j);
            }
            let expected = c(1.0, 0.0) + theta.exp();
            assert_complex_close(ratio, expected, 1e-12);
        }
    }

    #[test]
    fn decoupled_hidden_unit_doubles_every_amplitude() {
        let s0 = uniform_state(3, 2, 23);
        let mut s1 = s0.clone();
        s1.add_hidden_units(&[HiddenUnit::decoupled(3)]).unwrap();
        for idx in 0..8 {
            let b = BitString::from_index(idx, 3);
            let ratio = (s1.log_amplitude(&b).unwrap() - s0.log_amplitude(&b).unwrap()).exp();
            assert_complex_close(ratio, c(2.0, 0.0), 1e-12);
        }
    }

    #[test]
    fn empty_hidden_unit_batch_is_identity() {
        let s0 = uniform_state(3, 2, 29);
        let mut s1 = s0.clone();
        s1.add_hidden_units(&[]).unwrap();
        assert_eq!(s0, s1);
    }

    #[test]
    fn extreme_theta_stays_finite() {
        for bias in [700.0, -700.0] {
            let s = RbmState::from_parts(
                vec![c(0.0, 0.0)],
                vec![c(bias, 0.3)],
                vec![c(1.0, 0.0)],
            )
            .unwrap();
            for idx in 0..2 {
                let b = BitString::from_index(idx, 1);
                let amp = s.log_amplitude(&b).unwrap();
                assert!(amp.re.is_finite() && amp.im.is_finite());
                let table = ThetaTable::new(&s, b).unwrap();
                let via_table = table.log_amplitude(&s);
                assert_complex_close(amp, via_table, 1e-12);
            }
        }
        let s = RbmState::from_parts(vec![c(-700.0, 0.0)], vec![], vec![]).unwrap();
        let amp = s
            .log_amplitude(&BitString::from_bools(vec![true]))
            .unwrap();
        assert_eq!(amp.re, -700.0);
    }

    #[test]
    fn parameter_vector_round_trip() {
        let s = uniform_state(3, 4, 31);
        assert_eq!(s.parameter_count(), 3 + 4 + 12);
        let flat = s.flatten_parameters();
        let mut copy = RbmState::zeros(3, 4).unwrap();
        copy.set_parameters(&flat).unwrap();
        assert_eq!(s, copy);
        // Canonical order: visible biases lead, then hidden biases, then the
        // weight row of visible index 0.
        assert_eq!(flat[0], s.visible_bias()[0]);
        assert_eq!(flat[3], s.hidden_bias()[0]);
        assert_eq!(flat[7], s.weight(0, 0));
        assert_eq!(flat[8], s.weight(0, 1));
        assert_eq!(flat[7 + 4], s.weight(1, 0));
    }

    #[test]
    fn set_parameters_rejects_bad_input() {
        let mut s = RbmState::zeros(2, 1).unwrap();
        let err = s.set_parameters(&[c(0.0, 0.0)]).unwrap_err();
        assert!(matches!(err, crate::NqsError::DimensionMismatch { .. }));
        let mut bad = s.flatten_parameters();
        bad[0] = c(f64::NAN, 0.0);
        let err = s.set_parameters(&bad).unwrap_err();
        assert!(matches!(err, crate::NqsError::NonFinite { .. }));
    }

    #[test]
    fn bitstring_index_round_trip() {
        // Qubit 0 is the least significant bit.
        let b = BitString::from_index(1, 3);
        assert!(b.bit(0) && !b.bit(1) && !b.bit(2));
        assert_eq!(b.to_string(), "100");
        for idx in 0..32 {
            assert_eq!(BitString::from_index(idx, 5).to_index(), idx);
        }
    }

    #[test]
    fn pinned_state_penalizes_hamming_distance() {
        let target = BitString::from_bools(vec![true, false, true]);
        let s = RbmState::pinned(&target, 40.0).unwrap();
        let top = s.log_amplitude(&target).unwrap();
        for idx in 0..8 {
            let b = BitString::from_index(idx, 3);
            let gap = (top - s.log_amplitude(&b).unwrap()).re;
            assert_abs_diff_eq!(
                gap,
                40.0 * b.hamming_distance(&target) as f64,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn random_state_is_seeded_and_spread() {
        let mut r1 = derive_rng(42, &[0]);
        let mut r2 = derive_rng(42, &[0]);
        let a = RbmState::random(4, 8, 0.01, &mut r1).unwrap();
        let b = RbmState::random(4, 8, 0.01, &mut r2).unwrap();
        assert_eq!(a, b);
        assert!(a.weights().iter().any(|z| z.norm() > 0.0));
        assert!(a.weights().iter().all(|z| z.norm() < 1.0));
        assert_eq!(a.alpha(), 2.0);
    }
}
