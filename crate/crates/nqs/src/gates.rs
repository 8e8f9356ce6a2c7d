//! Exact parameter-update rules for diagonal and Pauli gates.
//!
//! RZ, CRZ, X, Y and Z map an RBM state to another RBM state in closed form;
//! only Hadamard needs the stochastic learner. Every rule is exact up to a
//! global complex constant, which is never tracked because amplitudes are
//! unnormalized anyway.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;

use crate::error::{NqsError, Result};
use crate::rbm::{HiddenUnit, RbmState};

/// One gate in a circuit. Arity and the presence of an angle are encoded
/// structurally; CRZ is symmetric in its two qubits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateOp {
    H { qubit: usize },
    X { qubit: usize },
    Y { qubit: usize },
    Z { qubit: usize },
    Rz { qubit: usize, phi: f64 },
    Crz { control: usize, target: usize, phi: f64 },
}

impl GateOp {
    pub fn kind(&self) -> &'static str {
        match self {
            GateOp::H { .. } => "H",
            GateOp::X { .. } => "X",
            GateOp::Y { .. } => "Y",
            GateOp::Z { .. } => "Z",
            GateOp::Rz { .. } => "RZ",
            GateOp::Crz { .. } => "CRZ",
        }
    }

    pub fn qubits(&self) -> (usize, Option<usize>) {
        match *self {
            GateOp::H { qubit }
            | GateOp::X { qubit }
            | GateOp::Y { qubit }
            | GateOp::Z { qubit }
            | GateOp::Rz { qubit, .. } => (qubit, None),
            GateOp::Crz {
                control, target, ..
            } => (control, Some(target)),
        }
    }

    pub fn angle(&self) -> Option<f64> {
        match *self {
            GateOp::Rz { phi, .. } | GateOp::Crz { phi, .. } => Some(phi),
            _ => None,
        }
    }

    /// Whether a closed-form parameter update exists (everything except H).
    pub fn is_exact(&self) -> bool {
        !matches!(self, GateOp::H { .. })
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        let (q1, q2) = self.qubits();
        for q in std::iter::once(q1).chain(q2) {
            if q >= n_qubits {
                return Err(NqsError::IndexOutOfRange {
                    what: "qubit",
                    index: q,
                    len: n_qubits,
                });
            }
        }
        if let Some(q2) = q2 {
            if q1 == q2 {
                return Err(NqsError::DuplicateQubit(q1));
            }
        }
        if let Some(phi) = self.angle() {
            if !phi.is_finite() {
                return Err(NqsError::NonFinite { what: "gate angle" });
            }
        }
        Ok(())
    }
}

impl fmt::Display for GateOp {
    /// Circuit text-format line: `H 0`, `RZ 2 0.7`, `CRZ 0 1 1.5707963267948966`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            GateOp::H { qubit }
            | GateOp::X { qubit }
            | GateOp::Y { qubit }
            | GateOp::Z { qubit } => write!(f, "{} {}", self.kind(), qubit),
            GateOp::Rz { qubit, phi } => write!(f, "RZ {qubit} {phi}"),
            GateOp::Crz {
                control,
                target,
                phi,
            } => write!(f, "CRZ {control} {target} {phi}"),
        }
    }
}

fn check_qubit(state: &RbmState, qubit: usize) -> Result<()> {
    if qubit >= state.n_visible() {
        return Err(NqsError::IndexOutOfRange {
            what: "qubit",
            index: qubit,
            len: state.n_visible(),
        });
    }
    Ok(())
}

fn check_angle(phi: f64) -> Result<()> {
    if !phi.is_finite() {
        return Err(NqsError::NonFinite { what: "gate angle" });
    }
    Ok(())
}

/// Z rotation diag(1, e^{i phi}): the visible bias absorbs the phase,
/// a_l += i*phi, and nothing else moves.
pub fn apply_rz(state: &RbmState, qubit: usize, phi: f64) -> Result<RbmState> {
    check_qubit(state, qubit)?;
    check_angle(phi)?;
    let mut out = state.clone();
    out.visible_bias_mut()[qubit] += Complex64::new(0.0, phi);
    Ok(out)
}

/// Pauli Z = RZ(pi) up to a global phase: a_l += i*pi.
pub fn apply_pauli_z(state: &RbmState, qubit: usize) -> Result<RbmState> {
    apply_rz(state, qubit, PI)
}

/// Pauli X relabels bit l: b_k += W_lk, W_lk -> -W_lk, a_l -> -a_l. The
/// dropped constant e^{a_l} is a global scalar.
pub fn apply_pauli_x(state: &RbmState, qubit: usize) -> Result<RbmState> {
    check_qubit(state, qubit)?;
    let mut out = state.clone();
    let m = out.n_hidden();
    for k in 0..m {
        let w = out.weight(qubit, k);
        out.hidden_bias_mut()[k] += w;
        out.weights_mut()[qubit * m + k] = -w;
    }
    let a = out.visible_bias()[qubit];
    out.visible_bias_mut()[qubit] = -a;
    Ok(out)
}

/// Pauli Y: the X rule plus an extra i*pi on the flipped visible bias,
/// a_l -> -a_l + i*pi.
pub fn apply_pauli_y(state: &RbmState, qubit: usize) -> Result<RbmState> {
    let mut out = apply_pauli_x(state, qubit)?;
    out.visible_bias_mut()[qubit] += Complex64::new(0.0, PI);
    Ok(out)
}

/// The closed-form CRZ parameter changes for one angle. Kept public so the
/// verification suite can check (and deliberately corrupt) the solution
/// independently of state application.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrzUpdate {
    pub delta_a_control: Complex64,
    pub delta_a_target: Complex64,
    pub w_control: Complex64,
    pub w_target: Complex64,
}

impl CrzUpdate {
    /// With A = acosh(e^{-i phi/2}) (principal branch): the new hidden unit
    /// couples with -2A to the control and +2A to the target, while the
    /// visible biases gain i phi/2 + A and i phi/2 - A.
    pub fn for_angle(phi: f64) -> Self {
        let a = Complex64::new(0.0, -phi / 2.0).exp().acosh();
        CrzUpdate {
            delta_a_control: Complex64::new(0.0, phi / 2.0) + a,
            delta_a_target: Complex64::new(0.0, phi / 2.0) - a,
            w_control: -2.0 * a,
            w_target: 2.0 * a,
        }
    }

    /// The amplitude factor e^{da_c B_c + da_t B_t} (1 + e^{w_c B_c + w_t B_t})
    /// contributed on the four assignments (B_c, B_t) = 00, 10, 01, 11. A
    /// correct update makes these proportional to (1, 1, 1, e^{i phi}).
    pub fn assignment_factors(&self) -> [Complex64; 4] {
        let one = Complex64::new(1.0, 0.0);
        let factor = |bc: f64, bt: f64| {
            (self.delta_a_control * bc + self.delta_a_target * bt).exp()
                * (one + (self.w_control * bc + self.w_target * bt).exp())
        };
        [
            factor(0.0, 0.0),
            factor(1.0, 0.0),
            factor(0.0, 1.0),
            factor(1.0, 1.0),
        ]
    }
}

/// Controlled phase diag(1, 1, 1, e^{i phi}) on (control, target): adds one
/// hidden unit coupled only to the two qubits and shifts their visible
/// biases. Exact up to a global scalar (2 at phi = 0).
pub fn apply_crz(state: &RbmState, control: usize, target: usize, phi: f64) -> Result<RbmState> {
    check_qubit(state, control)?;
    check_qubit(state, target)?;
    if control == target {
        return Err(NqsError::DuplicateQubit(control));
    }
    check_angle(phi)?;
    let u = CrzUpdate::for_angle(phi);
    let mut out = state.clone();
    out.visible_bias_mut()[control] += u.delta_a_control;
    out.visible_bias_mut()[target] += u.delta_a_target;
    let mut weights = vec![Complex64::new(0.0, 0.0); state.n_visible()];
    weights[control] = u.w_control;
    weights[target] = u.w_target;
    out.add_hidden_units(&[HiddenUnit {
        bias: Complex64::new(0.0, 0.0),
        weights,
    }])?;
    Ok(out)
}

/// Dispatch a gate with a closed-form rule; H is refused.
pub fn apply_exact(state: &RbmState, gate: &GateOp) -> Result<RbmState> {
    gate.validate(state.n_visible())?;
    match *gate {
        GateOp::H { .. } => Err(NqsError::NoExactRule {
            gate: gate.to_string(),
        }),
        GateOp::X { qubit } => apply_pauli_x(state, qubit),
        GateOp::Y { qubit } => apply_pauli_y(state, qubit),
        GateOp::Z { qubit } => apply_pauli_z(state, qubit),
        GateOp::Rz { qubit, phi } => apply_rz(state, qubit, phi),
        GateOp::Crz {
            control,
            target,
            phi,
        } => apply_crz(state, control, target, phi),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{expand_rbm, scalar_mismatch, StateVector};
    use crate::rbm::BitString;
    use crate::rng::derive_rng;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_state(n: usize, m: usize, seed: u64) -> RbmState {
        let mut rng = derive_rng(seed, &[n as u64, m as u64, 77]);
        RbmState::random(n, m, 0.4, &mut rng).unwrap()
    }

    /// Expand before/after states and check the statevector relation
    /// after = gate * before, component-wise up to one global scalar.
    fn assert_gate_matches_oracle(before: &RbmState, after: &RbmState, gate: &GateOp, tol: f64) {
        let mut reference = expand_rbm(before).unwrap();
        reference.apply_gate(gate).unwrap();
        let got = expand_rbm(after).unwrap();
        let dev = scalar_mismatch(&reference, &got).unwrap();
        assert!(
            dev < tol,
            "gate {gate} deviates from oracle by {dev:.3e} (tol {tol:.0e})"
        );
    }

    #[test]
    fn rz_shifts_only_the_visible_bias() {
        let mut s = RbmState::zeros(2, 1).unwrap();
        s.visible_bias_mut()[1] = c(0.3, 0.0);
        let out = apply_rz(&s, 1, std::f64::consts::FRAC_PI_2).unwrap();
        assert_eq!(out.visible_bias()[1], c(0.3, std::f64::consts::FRAC_PI_2));
        assert_eq!(out.visible_bias()[0], c(0.0, 0.0));
        assert_eq!(out.hidden_bias(), s.hidden_bias());
        assert_eq!(out.weights(), s.weights());

        let unchanged = apply_rz(&s, 1, 0.0).unwrap();
        assert_eq!(unchanged, s);
    }

    #[test]
    fn rz_matches_oracle() {
        let s = random_state(3, 3, 1);
        let out = apply_rz(&s, 2, 0.7).unwrap();
        assert_gate_matches_oracle(&s, &out, &GateOp::Rz { qubit: 2, phi: 0.7 }, 1e-12);
    }

    #[test]
    fn rz_angles_compose_additively() {
        let s = random_state(3, 6, 2);
        let two_step = apply_rz(&apply_rz(&s, 1, 0.4).unwrap(), 1, -1.1).unwrap();
        let one_step = apply_rz(&s, 1, -0.7).unwrap();
        let dev = scalar_mismatch(
            &expand_rbm(&one_step).unwrap(),
            &expand_rbm(&two_step).unwrap(),
        )
        .unwrap();
        assert!(dev < 1e-12);
    }

    #[test]
    fn pauli_z_matches_rz_pi_and_oracle() {
        let s = random_state(3, 3, 3);
        let via_z = apply_pauli_z(&s, 0).unwrap();
        assert_gate_matches_oracle(&s, &via_z, &GateOp::Z { qubit: 0 }, 1e-12);
        // The all-zeros amplitude carries no visible bias, so it is untouched.
        let b = BitString::zeros(3);
        assert_eq!(
            s.log_amplitude(&b).unwrap(),
            via_z.log_amplitude(&b).unwrap()
        );
    }

    #[test]
    fn pauli_x_is_an_involution_on_parameters() {
        let s = random_state(4, 8, 4);
        let twice = apply_pauli_x(&apply_pauli_x(&s, 2).unwrap(), 2).unwrap();
        for (a, b) in s
            .flatten_parameters()
            .iter()
            .zip(twice.flatten_parameters())
        {
            assert_abs_diff_eq!(a.re, b.re, epsilon = 1e-15);
            assert_abs_diff_eq!(a.im, b.im, epsilon = 1e-15);
        }
    }

    #[test]
    fn pauli_x_matches_oracle() {
        let s = random_state(3, 3, 5);
        let out = apply_pauli_x(&s, 1).unwrap();
        assert_gate_matches_oracle(&s, &out, &GateOp::X { qubit: 1 }, 1e-12);
    }

    #[test]
    fn pauli_x_fixes_flip_symmetric_states() {
        // Zero bias and zero weight row on the flipped qubit: |Psi| is
        // flip-symmetric there, so X acts as the identity up to scalar.
        let mut s = random_state(3, 2, 6);
        s.visible_bias_mut()[1] = c(0.0, 0.0);
        let m = s.n_hidden();
        for k in 0..m {
            s.weights_mut()[m + k] = c(0.0, 0.0);
        }
        let out = apply_pauli_x(&s, 1).unwrap();
        let dev = scalar_mismatch(&expand_rbm(&s).unwrap(), &expand_rbm(&out).unwrap()).unwrap();
        assert!(dev < 1e-12);
    }

    #[test]
    fn pauli_y_matches_oracle() {
        let s = random_state(3, 3, 7);
        let out = apply_pauli_y(&s, 2).unwrap();
        assert_gate_matches_oracle(&s, &out, &GateOp::Y { qubit: 2 }, 1e-12);
    }

    #[test]
    fn pauli_y_squares_to_identity() {
        let s = random_state(3, 3, 8);
        let twice = apply_pauli_y(&apply_pauli_y(&s, 0).unwrap(), 0).unwrap();
        let dev = scalar_mismatch(&expand_rbm(&s).unwrap(), &expand_rbm(&twice).unwrap()).unwrap();
        assert!(dev < 1e-12);
    }

    #[test]
    fn pauli_y_rotates_pinned_zero_to_i_one() {
        // Strongly pinned |0>: Y|0> = i|1>.
        let s = RbmState::from_parts(vec![c(-40.0, 0.0)], vec![], vec![]).unwrap();
        let out = apply_pauli_y(&s, 0).unwrap();
        let v = expand_rbm(&out).unwrap();
        let target = StateVector::from_amplitudes(1, vec![c(0.0, 0.0), c(0.0, 1.0)]).unwrap();
        let dev = scalar_mismatch(&target, &v).unwrap();
        assert!(dev < 1e-12);
    }

    #[test]
    fn crz_zero_angle_is_identity_up_to_doubling() {
        let s = random_state(3, 3, 9);
        let out = apply_crz(&s, 0, 2, 0.0).unwrap();
        assert_eq!(out.n_hidden(), 4);
        // A(0) = 0: the new column vanishes and each amplitude doubles.
        for idx in 0..8 {
            let b = BitString::from_index(idx, 3);
            let ratio =
                (out.log_amplitude(&b).unwrap() - s.log_amplitude(&b).unwrap()).exp();
            assert_abs_diff_eq!(ratio.re, 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(ratio.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn crz_four_assignments_are_proportional_to_the_phase() {
        // 16 angles across (-2pi, 2pi], including the branch-sensitive ends.
        for i in 0..16 {
            let phi = -2.0 * PI + 4.0 * PI * ((i + 1) as f64) / 16.0;
            let factors = CrzUpdate::for_angle(phi).assignment_factors();
            let base = factors[0];
            assert!(base.norm() > 0.0);
            for (idx, f) in factors.iter().enumerate() {
                let expected = if idx == 3 {
                    c(0.0, phi).exp()
                } else {
                    c(1.0, 0.0)
                };
                let ratio = f / base;
                assert_abs_diff_eq!(ratio.re, expected.re, epsilon = 1e-12);
                assert_abs_diff_eq!(ratio.im, expected.im, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn crz_matches_oracle() {
        let s = random_state(4, 4, 10);
        let out = apply_crz(&s, 1, 3, PI / 4.0).unwrap();
        assert_gate_matches_oracle(
            &s,
            &out,
            &GateOp::Crz {
                control: 1,
                target: 3,
                phi: PI / 4.0,
            },
            1e-10,
        );
    }

    #[test]
    fn crz_is_symmetric_in_its_qubits() {
        let s = random_state(4, 4, 11);
        let ab = apply_crz(&s, 0, 2, 1.3).unwrap();
        let ba = apply_crz(&s, 2, 0, 1.3).unwrap();
        let dev = scalar_mismatch(&expand_rbm(&ab).unwrap(), &expand_rbm(&ba).unwrap()).unwrap();
        assert!(dev < 1e-10);
    }

    #[test]
    fn crz_grows_hidden_units_one_per_gate() {
        let mut s = random_state(4, 4, 12);
        for (i, phi) in [0.3, -0.9, 2.2].iter().enumerate() {
            s = apply_crz(&s, i, i + 1, *phi).unwrap();
            assert_eq!(s.n_hidden(), 4 + i + 1);
        }
    }

    #[test]
    fn crz_new_unit_couples_only_the_named_qubits() {
        let s = random_state(5, 5, 13);
        let out = apply_crz(&s, 1, 3, 0.8).unwrap();
        let new_k = out.n_hidden() - 1;
        for j in [0usize, 2, 4] {
            assert_eq!(out.weight(j, new_k), c(0.0, 0.0));
        }
        assert!(out.weight(1, new_k).norm() > 0.0);
        assert!(out.weight(3, new_k).norm() > 0.0);
        assert_eq!(out.hidden_bias()[new_k], c(0.0, 0.0));
    }

    #[test]
    fn dispatch_covers_every_exact_gate_and_refuses_h() {
        let s = random_state(3, 3, 14);
        let gates = [
            GateOp::X { qubit: 0 },
            GateOp::Y { qubit: 1 },
            GateOp::Z { qubit: 2 },
            GateOp::Rz { qubit: 0, phi: 0.5 },
            GateOp::Crz {
                control: 0,
                target: 1,
                phi: 0.5,
            },
        ];
        for gate in &gates {
            let out = apply_exact(&s, gate).unwrap();
            assert_gate_matches_oracle(&s, &out, gate, 1e-10);
        }
        let err = apply_exact(&s, &GateOp::H { qubit: 0 }).unwrap_err();
        assert!(matches!(err, NqsError::NoExactRule { .. }));
    }

    #[test]
    fn random_gates_match_oracle_across_sizes() {
        // A small-scale version of the full release property: random states
        // at both hidden-unit densities, random exact gates.
        for seed in 0..20u64 {
            let mut rng = derive_rng(seed, &[15]);
            let n = 2 + (seed as usize % 7);
            let alpha = 1 + (seed as usize % 2);
            let s = random_state(n, alpha * n, seed);
            let gate = random_exact_gate(n, &mut rng);
            let out = apply_exact(&s, &gate).unwrap();
            assert_gate_matches_oracle(&s, &out, &gate, 1e-10);
        }
    }

    fn random_exact_gate(n: usize, rng: &mut impl rand::Rng) -> GateOp {
        let q1 = rng.gen_range(0..n);
        let mut q2 = rng.gen_range(0..n);
        while q2 == q1 {
            q2 = rng.gen_range(0..n);
        }
        let phi = rng.gen_range(-PI..PI);
        match rng.gen_range(0..5) {
            0 => GateOp::X { qubit: q1 },
            1 => GateOp::Y { qubit: q1 },
            2 => GateOp::Z { qubit: q1 },
            3 => GateOp::Rz { qubit: q1, phi },
            _ => GateOp::Crz {
                control: q1,
                target: q2,
                phi,
            },
        }
    }

    #[test]
    fn invalid_gate_arguments_are_rejected() {
        let s = random_state(3, 3, 16);
        assert!(matches!(
            apply_rz(&s, 5, 0.1).unwrap_err(),
            NqsError::IndexOutOfRange { .. }
        ));
        assert!(matches!(
            apply_crz(&s, 1, 1, 0.1).unwrap_err(),
            NqsError::DuplicateQubit(1)
        ));
        assert!(matches!(
            apply_rz(&s, 0, f64::NAN).unwrap_err(),
            NqsError::NonFinite { .. }
        ));
        let bad = GateOp::Crz {
            control: 0,
            target: 9,
            phi: 0.2,
        };
        assert!(bad.validate(3).is_err());
        assert!(bad.validate(10).is_ok());
    }

    #[test]
    fn gate_text_round_trips_through_display() {
        let gates = [
            GateOp::H { qubit: 3 },
            GateOp::Rz {
                qubit: 0,
                phi: std::f64::consts::FRAC_PI_2,
            },
            GateOp::Crz {
                control: 4,
                target: 7,
                phi: -0.125,
            },
        ];
        assert_eq!(gates[0].to_string(), "H 3");
        assert_eq!(gates[1].to_string(), "RZ 0 1.5707963267948966");
        assert_eq!(gates[2].to_string(), "CRZ 4 7 -0.125");
    }
}
