//! Dense statevector backend: brute-force ground truth for small N.
//!
//! Amplitudes are indexed little-endian: qubit j is bit j of the index, so
//! for two qubits the order is |00>, |10>, |01>, |11> with the leftmost
//! digit belonging to qubit 0. [`crate::rbm::BitString::to_index`] uses the
//! same convention.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::circuit::Circuit;
use crate::error::{NqsError, Result};
use crate::gates::GateOp;
use crate::math::{exp_log_amp, ln_one_plus_exp};
use crate::rbm::{BitString, RbmState};
use crate::rng::{derive_rng, tag_salt};

/// Hard cap on brute-force system size; 2^20 amplitudes is the largest
/// footprint this backend will allocate.
pub const QUBIT_LIMIT: usize = 20;

fn check_qubit_count(n: usize) -> Result<()> {
    if n == 0 {
        return Err(NqsError::InvalidConfig(
            "statevector needs at least one qubit".into(),
        ));
    }
    if n > QUBIT_LIMIT {
        return Err(NqsError::QubitLimit {
            requested: n,
            limit: QUBIT_LIMIT,
        });
    }
    Ok(())
}

/// Dense 2^N complex amplitude vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// |0...0>.
    pub fn zero_state(n_qubits: usize) -> Result<Self> {
        Self::basis_state(n_qubits, 0)
    }

    /// The computational basis state with the given little-endian index.
    pub fn basis_state(n_qubits: usize, index: usize) -> Result<Self> {
        check_qubit_count(n_qubits)?;
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        if index >= amps.len() {
            return Err(NqsError::IndexOutOfRange {
                what: "basis state",
                index,
                len: amps.len(),
            });
        }
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(StateVector { n_qubits, amps })
    }

    pub fn from_amplitudes(n_qubits: usize, amps: Vec<Complex64>) -> Result<Self> {
        check_qubit_count(n_qubits)?;
        if amps.len() != 1 << n_qubits {
            return Err(NqsError::DimensionMismatch {
                what: "amplitude vector",
                expected: 1 << n_qubits,
                got: amps.len(),
            });
        }
        if !amps.iter().all(|z| z.is_finite()) {
            return Err(NqsError::NonFinite { what: "amplitudes" });
        }
        Ok(StateVector { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitude(&self, b: &BitString) -> Complex64 {
        self.amps[b.to_index()]
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let norm = self.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(NqsError::NonFinite {
                what: "statevector norm",
            });
        }
        for z in &mut self.amps {
            *z /= norm;
        }
        Ok(())
    }

    /// Born-rule probabilities |amp|^2 / norm^2.
    pub fn probabilities(&self) -> Vec<f64> {
        let norm_sqr: f64 = self.amps.iter().map(|z| z.norm_sqr()).sum();
        self.amps.iter().map(|z| z.norm_sqr() / norm_sqr).collect()
    }

    fn apply_one_qubit(&mut self, qubit: usize, m: [[Complex64; 2]; 2]) {
        let bit = 1usize << qubit;
        for i0 in 0..self.amps.len() {
            if i0 & bit != 0 {
                continue;
            }
            let i1 = i0 | bit;
            let a0 = self.amps[i0];
            let a1 = self.amps[i1];
            self.amps[i0] = m[0][0] * a0 + m[0][1] * a1;
            self.amps[i1] = m[1][0] * a0 + m[1][1] * a1;
        }
    }

    /// Apply one gate by its dense matrix; all six kinds, H included.
    pub fn apply_gate(&mut self, gate: &GateOp) -> Result<()> {
        gate.validate(self.n_qubits)?;
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        match *gate {
            GateOp::H { qubit } => {
                let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                self.apply_one_qubit(qubit, [[h, h], [h, -h]]);
            }
            GateOp::X { qubit } => {
                self.apply_one_qubit(qubit, [[zero, one], [one, zero]]);
            }
            GateOp::Y { qubit } => {
                let i = Complex64::new(0.0, 1.0);
                self.apply_one_qubit(qubit, [[zero, -i], [i, zero]]);
            }
            GateOp::Z { qubit } => {
                self.apply_one_qubit(qubit, [[one, zero], [zero, -one]]);
            }
            GateOp::Rz { qubit, phi } => {
                let phase = Complex64::new(0.0, phi).exp();
                self.apply_one_qubit(qubit, [[one, zero], [zero, phase]]);
            }
            GateOp::Crz {
                control,
                target,
                phi,
            } => {
                let phase = Complex64::new(0.0, phi).exp();
                let mask = (1usize << control) | (1usize << target);
                for (i, amp) in self.amps.iter_mut().enumerate() {
                    if i & mask == mask {
                        *amp *= phase;
                    }
                }
            }
        }
        Ok(())
    }
}

/// <u|v> with the conjugate on the first argument.
pub fn inner(u: &StateVector, v: &StateVector) -> Result<Complex64> {
    if u.n_qubits != v.n_qubits {
        return Err(NqsError::DimensionMismatch {
            what: "statevector pair",
            expected: u.n_qubits,
            got: v.n_qubits,
        });
    }
    Ok(u.amps
        .iter()
        .zip(&v.amps)
        .map(|(a, b)| a.conj() * b)
        .sum())
}

/// Normalized overlap |<u|v>| / (|u| |v|), in [0, 1].
pub fn overlap_exact(u: &StateVector, v: &StateVector) -> Result<f64> {
    Ok((inner(u, v)?.norm() / (u.norm() * v.norm())).min(1.0))
}

/// Largest component-wise deviation between v and the best global rescaling
/// c*u, normalized by v's largest amplitude magnitude. Zero means the two
/// vectors are equal up to one complex scalar.
pub fn scalar_mismatch(u: &StateVector, v: &StateVector) -> Result<f64> {
    let uu = inner(u, u)?.re;
    if uu == 0.0 {
        return Err(NqsError::NonFinite {
            what: "scalar fit against a zero vector",
        });
    }
    let c = inner(u, v)? / uu;
    let scale = v
        .amps
        .iter()
        .map(|z| z.norm())
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    Ok(u.amps
        .iter()
        .zip(&v.amps)
        .map(|(a, b)| (b - c * a).norm())
        .fold(0.0_f64, f64::max)
        / scale)
}

/// Evaluate every amplitude of an RBM state and normalize. The largest log
/// magnitude is subtracted before exponentiating, so states whose raw
/// amplitudes overflow double precision still expand cleanly.
pub fn expand_rbm(state: &RbmState) -> Result<StateVector> {
    let n = state.n_visible();
    check_qubit_count(n)?;
    state.validate()?;
    let m = state.n_hidden();
    let size = 1usize << n;
    let mut logs = Vec::with_capacity(size);
    let mut theta = vec![Complex64::new(0.0, 0.0); m];
    let mut max_re = f64::NEG_INFINITY;
    for index in 0..size {
        theta.copy_from_slice(state.hidden_bias());
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..n {
            if (index >> j) & 1 == 1 {
                acc += state.visible_bias()[j];
                for (t, w) in theta.iter_mut().zip(state.weight_row(j)) {
                    *t += w;
                }
            }
        }
        for &th in &theta {
            acc += ln_one_plus_exp(th);
        }
        max_re = max_re.max(acc.re);
        logs.push(acc);
    }
    let offset = Complex64::new(max_re, 0.0);
    let amps = logs.into_iter().map(|l| exp_log_amp(l - offset)).collect();
    let mut v = StateVector { n_qubits: n, amps };
    v.normalize()?;
    Ok(v)
}

/// Stochastic Pauli insertion noise for trajectory sampling.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseConfig {
    /// Probability of inserting a random Pauli error after each gate.
    pub rate: f64,
    /// Number of independent noisy trajectories to average over.
    pub trajectories: usize,
    /// Base seed; each trajectory derives its own substream.
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            rate: 1e-3,
            trajectories: 200,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.rate.is_finite() || !(0.0..=1.0).contains(&self.rate) {
            return Err(NqsError::InvalidConfig(format!(
                "noise rate must lie in [0, 1], got {}",
                self.rate
            )));
        }
        if self.trajectories == 0 {
            return Err(NqsError::InvalidConfig(
                "need at least one noise trajectory".into(),
            ));
        }
        Ok(())
    }
}

/// Single-qubit Pauli by index: 0 is the identity, then X, Y, Z.
fn apply_pauli(v: &mut StateVector, pauli: usize, qubit: usize) -> Result<()> {
    let gate = match pauli {
        0 => return Ok(()),
        1 => GateOp::X { qubit },
        2 => GateOp::Y { qubit },
        3 => GateOp::Z { qubit },
        _ => unreachable!("pauli index is drawn from 0..=3"),
    };
    v.apply_gate(&gate)
}

/// Runs one noisy trajectory of the circuit. Returns the final vector and
/// whether any error was actually inserted; a clean trajectory is identical
/// to the exact run by construction, so callers can skip the overlap.
fn noisy_trajectory(
    initial: &StateVector,
    circuit: &Circuit,
    rate: f64,
    rng: &mut impl Rng,
) -> Result<(StateVector, bool)> {
    let mut v = initial.clone();
    let mut inserted = false;
    for gate in circuit.gates() {
        v.apply_gate(gate)?;
        // Fixed consumption pattern: one uniform draw per gate, then the
        // Pauli choice only on insertion, so trajectories with the same
        // substream diverge only where an error fires.
        let fires = rng.gen::<f64>() < rate;
        if !fires {
            continue;
        }
        inserted = true;
        match gate.qubits() {
            (q, None) => {
                let pauli = rng.gen_range(1..4usize);
                apply_pauli(&mut v, pauli, q)?;
            }
            (q1, Some(q2)) => {
                // 15 non-identity pairs: index 1..16 in base 4, skipping
                // (identity, identity) at 0.
                let pair = rng.gen_range(1..16usize);
                apply_pauli(&mut v, pair % 4, q1)?;
                apply_pauli(&mut v, pair / 4, q2)?;
            }
        }
    }
    Ok((v, inserted))
}

/// Mean and standard error of |<exact final|noisy final>| over independent
/// Pauli-insertion trajectories of the circuit. Every gate is applied as an
/// exact matrix (Hadamards included); after each gate, with probability
/// `rate`, a uniformly random non-identity Pauli (pair) hits the gate's
/// qubit(s). The initial state is never noisy.
pub fn noisy_transform_overlap(
    initial: &StateVector,
    circuit: &Circuit,
    noise: &NoiseConfig,
) -> Result<(f64, f64)> {
    noise.validate()?;
    if initial.n_qubits() != circuit.n_qubits() {
        return Err(NqsError::DimensionMismatch {
            what: "noise initial state qubit count",
            expected: circuit.n_qubits(),
            got: initial.n_qubits(),
        });
    }
    let mut exact = initial.clone();
    for gate in circuit.gates() {
        exact.apply_gate(gate)?;
    }
    let overlaps: Vec<f64> = (0..noise.trajectories)
        .into_par_iter()
        .map(|t| {
            let mut rng = derive_rng(noise.seed, &[tag_salt("noise-trajectory"), t as u64]);
            let (v, inserted) = noisy_trajectory(initial, circuit, noise.rate, &mut rng)?;
            if inserted {
                overlap_exact(&exact, &v)
            } else {
                Ok(1.0)
            }
        })
        .collect::<Result<_>>()?;
    let n = overlaps.len() as f64;
    let mean = overlaps.iter().sum::<f64>() / n;
    let std_error = if overlaps.len() > 1 {
        let ss: f64 = overlaps.iter().map(|x| (x - mean) * (x - mean)).sum();
        (ss / (n * (n - 1.0))).sqrt()
    } else {
        0.0
    };
    Ok((mean, std_error))
}

pub mod ed {
    //! Lanczos ground-state solver for the transverse-field Ising model.
    //!
    //! The Hamiltonian −Γ Σᵢ Xᵢ + J Σ_bonds ZᵢZⱼ is real symmetric in the
    //! computational basis, so everything here runs on real vectors. The
    //! matrix is never materialized; matvec works the bits directly.

    use nalgebra::{DMatrix, SymmetricEigen};

    use super::{check_qubit_count, StateVector};
    use crate::error::{NqsError, Result};
    use crate::rng::{derive_rng, tag_salt};
    use num_complex::Complex64;
    use rand::Rng;

    /// Matrix-free TFIM Hamiltonian on `n_qubits` spins.
    #[derive(Debug, Clone)]
    pub struct TfimMatrix {
        n_qubits: usize,
        gamma: f64,
        j: f64,
        bonds: Vec<(usize, usize)>,
        /// Diagonal in the Z basis, precomputed once per instance.
        diagonal: Vec<f64>,
    }

    impl TfimMatrix {
        pub fn new(
            n_qubits: usize,
            gamma: f64,
            j: f64,
            bonds: &[(usize, usize)],
        ) -> Result<Self> {
            check_qubit_count(n_qubits)?;
            if !gamma.is_finite() || !j.is_finite() {
                return Err(NqsError::NonFinite {
                    what: "TFIM couplings",
                });
            }
            for &(a, b) in bonds {
                let hi = a.max(b);
                if hi >= n_qubits {
                    return Err(NqsError::IndexOutOfRange {
                        what: "bond site",
                        index: hi,
                        len: n_qubits,
                    });
                }
                if a == b {
                    return Err(NqsError::InvalidConfig(format!(
                        "bond ({a}, {b}) couples a site to itself"
                    )));
                }
            }
            let size = 1usize << n_qubits;
            let mut diagonal = vec![0.0; size];
            for (idx, d) in diagonal.iter_mut().enumerate() {
                let mut acc = 0.0;
                for &(a, b) in bonds {
                    let aligned = ((idx >> a) ^ (idx >> b)) & 1 == 0;
                    acc += if aligned { j } else { -j };
                }
                *d = acc;
            }
            Ok(TfimMatrix {
                n_qubits,
                gamma,
                j,
                bonds: bonds.to_vec(),
                diagonal,
            })
        }

        pub fn n_qubits(&self) -> usize {
            self.n_qubits
        }

        pub fn dimension(&self) -> usize {
            1 << self.n_qubits
        }

        pub fn gamma(&self) -> f64 {
            self.gamma
        }

        pub fn coupling(&self) -> f64 {
            self.j
        }

        pub fn bonds(&self) -> &[(usize, usize)] {
            &self.bonds
        }

        /// out = H v. The X term couples each index to its bit flips.
        pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
            assert_eq!(v.len(), self.dimension(), "matvec dimension");
            let mut out = vec![0.0; v.len()];
            for (idx, o) in out.iter_mut().enumerate() {
                let mut acc = self.diagonal[idx] * v[idx];
                for q in 0..self.n_qubits {
                    acc -= self.gamma * v[idx ^ (1 << q)];
                }
                *o = acc;
            }
            out
        }

        /// Lowest eigenpair by Lanczos with full reorthogonalization.
        ///
        /// Deterministic: the start vector comes from a fixed internal
        /// stream. The returned vector is normalized with its largest
        /// component made positive. With Γ = 0 the model is classical and
        /// degenerate; the result is then one minimizer, not a unique one.
        pub fn ground_state(&self) -> Result<(f64, StateVector)> {
            let dim = self.dimension();
            let max_steps = 400.min(dim);
            let tol = 1e-13;

            let mut rng = derive_rng(0x7f1a, &[tag_salt("lanczos-start")]);
            let mut v: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect();
            normalize(&mut v);

            let mut basis: Vec<Vec<f64>> = Vec::new();
            let mut alphas: Vec<f64> = Vec::new();
            let mut betas: Vec<f64> = Vec::new();
            let mut last_ritz = f64::INFINITY;

            for step in 0..max_steps {
                let mut w = self.matvec(&v);
                let alpha = dot(&v, &w);
                alphas.push(alpha);
                basis.push(v.clone());
                // Two reorthogonalization passes keep the basis orthogonal
                // to machine precision even after many steps.
                for _ in 0..2 {
                    for b in &basis {
                        let overlap = dot(b, &w);
                        for (wi, bi) in w.iter_mut().zip(b) {
                            *wi -= overlap * bi;
                        }
                    }
                }
                let beta = dot(&w, &w).sqrt();

                let (ritz, _) = tridiagonal_ground(&alphas, &betas);
                let converged = (last_ritz - ritz).abs() < tol * ritz.abs().max(1.0);
                last_ritz = ritz;
                if beta < 1e-12 || converged || step + 1 == max_steps {
                    let (energy, coeffs) = tridiagonal_ground(&alphas, &betas);
                    let mut ground = vec![0.0; dim];
                    for (c, b) in coeffs.iter().zip(&basis) {
                        for (g, bi) in ground.iter_mut().zip(b) {
                            *g += c * bi;
                        }
                    }
                    normalize(&mut ground);
                    canonical_sign(&mut ground);
                    let amps = ground.iter().map(|&x| Complex64::new(x, 0.0)).collect();
                    let vec = StateVector::from_amplitudes(self.n_qubits, amps)?;
                    return Ok((energy, vec));
                }
                betas.push(beta);
                for wi in w.iter_mut() {
                    *wi /= beta;
                }
                v = w;
            }
            unreachable!("the loop returns at the latest on its final step");
        }
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn normalize(v: &mut [f64]) {
        let norm = dot(v, v).sqrt();
        assert!(norm > 0.0, "cannot normalize a zero vector");
        for x in v.iter_mut() {
            *x /= norm;
        }
    }

    /// Flips the global sign so the largest-magnitude component is positive.
    fn canonical_sign(v: &mut [f64]) {
        let mut best = 0usize;
        for (i, x) in v.iter().enumerate() {
            if x.abs() > v[best].abs() {
                best = i;
            }
        }
        if v[best] < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }

    /// Ground eigenpair of the symmetric tridiagonal matrix with the given
    /// diagonal and off-diagonal. Dense solve; the Krylov space stays small.
    fn tridiagonal_ground(alphas: &[f64], betas: &[f64]) -> (f64, Vec<f64>) {
        let k = alphas.len();
        let mut t = DMatrix::zeros(k, k);
        for (i, &a) in alphas.iter().enumerate() {
            t[(i, i)] = a;
        }
        for (i, &b) in betas.iter().enumerate().take(k.saturating_sub(1)) {
            t[(i, i + 1)] = b;
            t[(i + 1, i)] = b;
        }
        let eig = SymmetricEigen::new(t);
        let mut best = 0usize;
        for i in 1..k {
            if eig.eigenvalues[i] < eig.eigenvalues[best] {
                best = i;
            }
        }
        let column = eig.eigenvectors.column(best);
        (eig.eigenvalues[best], column.iter().copied().collect())
    }
}
