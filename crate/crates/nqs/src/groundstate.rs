//! Variational ground-state preparation for the transverse-field Ising
//! model H = -Γ Σᵢ Xᵢ + J Σ_⟨i,j⟩ ZᵢZⱼ, with the interaction running over
//! nearest-neighbor bonds of a periodic lattice.
//!
//! Two preparation routes: plain VMC energy minimization with AdaMax (works
//! at any size the sampler handles), and a direct overlap fit against an
//! explicitly stored statevector (desk scale only, reuses the gate-learner
//! machinery). Stochastic reconfiguration is deliberately not implemented;
//! AdaMax converges well enough at these sizes and shares its optimizer
//! state layout with the rest of the crate.

use num_complex::Complex64;

use crate::error::{NqsError, Result};
use crate::learner::{
    adamax_step, learn_target, LearnReport, LearnerConfig, OptimizerState, VectorTarget,
};
use crate::oracle::StateVector;
use crate::rbm::{BitString, RbmState, ThetaTable};
use crate::rng::{derive_rng, mix_seed, tag_salt};
use crate::sampler::{run_chains, SampleBatch, SampleTarget, SamplerConfig};

/// One VMC iteration as recorded in an energy trace.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyPoint {
    pub iteration: usize,
    /// Estimated energy (real part of the local-energy mean).
    pub energy: f64,
    /// Standard error of the energy estimate over samples.
    pub energy_std_err: f64,
}

/// Periodic nearest-neighbor lattices the Hamiltonian is defined on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Lattice {
    ChainPeriodic { length: usize },
    SquarePeriodic { side: usize },
}

impl Lattice {
    pub fn validate(&self) -> Result<()> {
        let extent = match *self {
            Lattice::ChainPeriodic { length } => length,
            Lattice::SquarePeriodic { side } => side,
        };
        if extent < 2 {
            return Err(NqsError::InvalidConfig(format!(
                "lattice extent must be at least 2, got {extent}"
            )));
        }
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        match *self {
            Lattice::ChainPeriodic { length } => length,
            Lattice::SquarePeriodic { side } => side * side,
        }
    }

    /// Undirected nearest-neighbor bonds, each pair listed exactly once.
    ///
    /// Bonds are a set: on the length-2 periodic chain the left and right
    /// neighbor coincide, so there is one bond, not two. The same collapse
    /// happens on the 2x2 torus (4 bonds instead of 8). From extent 3 up,
    /// a chain of length L has L bonds and an LxL torus has 2L².
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        let mut set = std::collections::BTreeSet::new();
        match *self {
            Lattice::ChainPeriodic { length } => {
                for i in 0..length {
                    let j = (i + 1) % length;
                    set.insert((i.min(j), i.max(j)));
                }
            }
            Lattice::SquarePeriodic { side } => {
                let at = |x: usize, y: usize| (x % side) + side * (y % side);
                for y in 0..side {
                    for x in 0..side {
                        let here = at(x, y);
                        for neighbor in [at(x + 1, y), at(x, y + 1)] {
                            set.insert((here.min(neighbor), here.max(neighbor)));
                        }
                    }
                }
            }
        }
        set.into_iter().collect()
    }
}

/// Couplings of the transverse-field Ising Hamiltonian, signs as in the
/// module header: positive J is antiferromagnetic.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TfimParams {
    /// Transverse field Γ.
    pub gamma: f64,
    /// Ising coupling J.
    pub j: f64,
}

impl TfimParams {
    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || !self.j.is_finite() {
            return Err(NqsError::NonFinite {
                what: "TFIM couplings",
            });
        }
        Ok(())
    }
}

/// Diagonal part of the local energy: J Σ_bonds (±1), +1 per aligned bond.
fn diagonal_energy(b: &BitString, bonds: &[(usize, usize)], j: f64) -> f64 {
    let mut acc = 0.0;
    for &(p, q) in bonds {
        acc += if b.bit(p) == b.bit(q) { j } else { -j };
    }
    acc
}

/// Local energy from a prebuilt theta table, O(N·M). The table must be
/// bound to the bitstring whose local energy is wanted.
fn local_energy_from_table(
    state: &RbmState,
    table: &ThetaTable,
    bonds: &[(usize, usize)],
    p: &TfimParams,
) -> Result<Complex64> {
    let here = table.log_amplitude(state);
    if here.re == f64::NEG_INFINITY {
        // Unreachable through RbmState amplitudes (the product form never
        // vanishes in floating point), but the estimator is undefined
        // there, so the guard stays.
        return Err(NqsError::NonFinite {
            what: "local energy at a zero-amplitude bitstring",
        });
    }
    let mut acc = Complex64::new(diagonal_energy(table.bits(), bonds, p.j), 0.0);
    for site in 0..state.n_visible() {
        let flipped = table.log_amplitude_with_flips(state, &[site]);
        acc -= p.gamma * (flipped - here).exp();
    }
    Ok(acc)
}

/// Local energy of one bitstring: J Σ_bonds (-1)^(Bᵢ+Bⱼ) minus Γ times the
/// sum of amplitude ratios to single-flip neighbors.
pub fn local_energy(
    state: &RbmState,
    b: &BitString,
    lattice: &Lattice,
    p: &TfimParams,
) -> Result<Complex64> {
    lattice.validate()?;
    p.validate()?;
    if lattice.n_sites() != state.n_visible() {
        return Err(NqsError::DimensionMismatch {
            what: "lattice site count",
            expected: state.n_visible(),
            got: lattice.n_sites(),
        });
    }
    let table = ThetaTable::new(state, b.clone())?;
    local_energy_from_table(state, &table, &lattice.bonds(), p)
}

/// Weighted local-energy statistics of one sample batch: complex mean plus
/// jackknife-over-chains standard errors for both parts.
struct EnergyStats {
    mean: Complex64,
    std_err_re: f64,
    // Only consumed by the imaginary-part consistency test.
    #[cfg_attr(not(test), allow(dead_code))]
    std_err_im: f64,
}

fn energy_stats(batch: &SampleBatch, energies: &[Complex64]) -> EnergyStats {
    let mean: Complex64 = energies
        .iter()
        .zip(&batch.weights)
        .map(|(e, w)| e * *w)
        .sum();
    let chains = batch.n_chains;
    if chains < 2 {
        return EnergyStats {
            mean,
            std_err_re: 0.0,
            std_err_im: 0.0,
        };
    }
    let mut chain_means = Vec::with_capacity(chains);
    for c in 0..chains {
        let range = batch.chain_range(c);
        let weight: f64 = batch.weights[range.clone()].iter().sum();
        let sum: Complex64 = energies[range.clone()]
            .iter()
            .zip(&batch.weights[range])
            .map(|(e, w)| e * *w)
            .sum();
        chain_means.push(sum / weight.max(f64::MIN_POSITIVE));
    }
    // Chains are independent, so the error of the grand mean is the spread
    // of the direct chain means over sqrt(C).
    let center: Complex64 = chain_means.iter().sum::<Complex64>() / chains as f64;
    let c = chains as f64;
    let var_re: f64 = chain_means.iter().map(|m| (m.re - center.re).powi(2)).sum();
    let var_im: f64 = chain_means.iter().map(|m| (m.im - center.im).powi(2)).sum();
    EnergyStats {
        mean,
        std_err_re: (var_re / (c * (c - 1.0))).sqrt(),
        std_err_im: (var_im / (c * (c - 1.0))).sqrt(),
    }
}

fn batch_local_energies(
    state: &RbmState,
    batch: &SampleBatch,
    bonds: &[(usize, usize)],
    p: &TfimParams,
) -> Result<Vec<Complex64>> {
    batch
        .bitstrings
        .iter()
        .map(|b| {
            let table = ThetaTable::new(state, b.clone())?;
            local_energy_from_table(state, &table, bonds, p)
        })
        .collect()
}

/// Energy estimate (mean, standard error) of a state over a fresh sample
/// batch drawn from |Ψ|².
pub fn measure_energy(
    state: &RbmState,
    lattice: &Lattice,
    p: &TfimParams,
    scfg: &SamplerConfig,
) -> Result<(f64, f64)> {
    lattice.validate()?;
    p.validate()?;
    if lattice.n_sites() != state.n_visible() {
        return Err(NqsError::DimensionMismatch {
            what: "lattice site count",
            expected: state.n_visible(),
            got: lattice.n_sites(),
        });
    }
    let batch = run_chains(state, SampleTarget::Psi, scfg)?;
    let energies = batch_local_energies(state, &batch, &lattice.bonds(), p)?;
    let stats = energy_stats(&batch, &energies);
    Ok((stats.mean.re, stats.std_err_re))
}

/// Settings for VMC energy minimization.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VmcConfig {
    pub n_iterations: usize,
    pub learning_rate: f64,
    /// When set, the step size decays exponentially from `learning_rate`
    /// to this value across the run. A constant rate leaves the optimizer
    /// orbiting the minimum at a distance set by the gradient noise;
    /// annealing shrinks that orbit without giving up the hot start.
    pub final_learning_rate: Option<f64>,
    pub adamax_beta1: f64,
    pub adamax_beta2: f64,
    /// Scale of the random complex initialization of all parameters.
    pub init_noise_sigma: f64,
    /// Consecutive iterations the energy may sit significantly above the
    /// best seen before the run counts as diverged.
    pub divergence_patience: usize,
    pub seed: u64,
}

impl Default for VmcConfig {
    fn default() -> Self {
        VmcConfig {
            n_iterations: 300,
            learning_rate: 2e-2,
            final_learning_rate: None,
            adamax_beta1: 0.9,
            adamax_beta2: 0.999,
            init_noise_sigma: 0.01,
            divergence_patience: 25,
            seed: 0,
        }
    }
}

impl VmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iterations == 0 {
            return Err(NqsError::InvalidConfig(
                "VMC needs at least one iteration".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(NqsError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if let Some(rate) = self.final_learning_rate {
            if !(rate.is_finite() && rate > 0.0) {
                return Err(NqsError::InvalidConfig(format!(
                    "final learning rate must be positive, got {rate}"
                )));
            }
        }
        for (name, beta) in [
            ("adamax_beta1", self.adamax_beta1),
            ("adamax_beta2", self.adamax_beta2),
        ] {
            if !(0.0..1.0).contains(&beta) {
                return Err(NqsError::InvalidConfig(format!(
                    "{name} must lie in [0, 1), got {beta}"
                )));
            }
        }
        if !(self.init_noise_sigma.is_finite() && self.init_noise_sigma > 0.0) {
            return Err(NqsError::InvalidConfig(format!(
                "init noise must be positive, got {}",
                self.init_noise_sigma
            )));
        }
        if self.divergence_patience == 0 {
            return Err(NqsError::InvalidConfig(
                "divergence patience must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Ratio of hidden units to visible units. Stored as a float so configs can
/// say `alpha = 1.0`; the product alpha·N must land on an integer.
pub fn hidden_units_for(alpha: f64, n_sites: usize) -> Result<usize> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(NqsError::InvalidConfig(format!(
            "hidden-unit density must be positive, got {alpha}"
        )));
    }
    let exact = alpha * n_sites as f64;
    let rounded = exact.round();
    if (exact - rounded).abs() > 1e-9 {
        return Err(NqsError::InvalidConfig(format!(
            "hidden-unit density {alpha} times {n_sites} sites is not an integer"
        )));
    }
    Ok(rounded as usize)
}

/// Minimizes ⟨E_loc⟩ by stochastic gradient descent with AdaMax, starting
/// from small random parameters with M = alpha·N hidden units. Returns the
/// final state and the per-iteration energy trace.
///
/// The gradient per complex parameter is 2(⟨E_loc O*⟩ - ⟨E_loc⟩⟨O*⟩); its
/// real and imaginary parts drive the parameter's two real components.
pub fn vmc_ground_state(
    lattice: &Lattice,
    p: &TfimParams,
    alpha: f64,
    cfg: &VmcConfig,
    scfg: &SamplerConfig,
) -> Result<(RbmState, Vec<EnergyPoint>)> {
    lattice.validate()?;
    p.validate()?;
    cfg.validate()?;
    scfg.validate()?;
    let n = lattice.n_sites();
    let m = hidden_units_for(alpha, n)?;
    let bonds = lattice.bonds();

    let mut rng = derive_rng(cfg.seed, &[tag_salt("vmc-init")]);
    let mut state = RbmState::random(n, m, cfg.init_noise_sigma, &mut rng)?;
    let mut opt = OptimizerState::new(state.parameter_count());
    let mut trace: Vec<EnergyPoint> = Vec::with_capacity(cfg.n_iterations);

    let mut smoothed: Option<f64> = None;
    let mut best_smoothed = f64::INFINITY;
    let mut stalled = 0usize;

    for iteration in 0..cfg.n_iterations {
        let iter_scfg = SamplerConfig {
            seed: mix_seed(cfg.seed, &[tag_salt("vmc-batch"), iteration as u64]),
            ..scfg.clone()
        };
        let batch = run_chains(&state, SampleTarget::Psi, &iter_scfg)?;
        let energies = batch_local_energies(&state, &batch, &bonds, p)?;
        let stats = energy_stats(&batch, &energies);
        trace.push(EnergyPoint {
            iteration,
            energy: stats.mean.re,
            energy_std_err: stats.std_err_re,
        });

        // Divergence watch on an exponentially smoothed energy: one noisy
        // batch cannot set an unbeatable best or trip the counter, while a
        // genuine climb pushes the smoothed value above the best for many
        // iterations in a row. Non-finite estimates fail immediately. The
        // slack band covers two noise sources: batch sampling error, and
        // the optimizer's own orbit at a fixed learning rate, which on a
        // tightly converged state dwarfs the sampling error because the
        // local-energy variance vanishes with the residual.
        if !stats.mean.re.is_finite() {
            return Err(NqsError::EnergyDiverged { iteration, trace });
        }
        let ema = match smoothed {
            None => stats.mean.re,
            Some(prev) => 0.9 * prev + 0.1 * stats.mean.re,
        };
        smoothed = Some(ema);
        let slack = (5.0 * stats.std_err_re)
            .max(0.02 * best_smoothed.abs())
            .max(1e-9);
        if ema < best_smoothed {
            best_smoothed = ema;
            stalled = 0;
        } else if ema > best_smoothed + slack {
            stalled += 1;
            if stalled >= cfg.divergence_patience {
                return Err(NqsError::EnergyDiverged { iteration, trace });
            }
        } else {
            stalled = 0;
        }

        // Gradient accumulation: F = <E O*> - <E><O*> over the batch.
        let n_params = state.parameter_count();
        let mut mean_deriv = vec![Complex64::new(0.0, 0.0); n_params];
        let mut mean_energy_deriv = vec![Complex64::new(0.0, 0.0); n_params];
        for ((b, &w), e) in batch
            .bitstrings
            .iter()
            .zip(&batch.weights)
            .zip(&energies)
        {
            let table = ThetaTable::new(&state, b.clone())?;
            let derivs = state.variational_derivatives(&table)?;
            for ((md, med), d) in mean_deriv
                .iter_mut()
                .zip(mean_energy_deriv.iter_mut())
                .zip(&derivs)
            {
                let conj = d.conj();
                *md += w * conj;
                *med += w * e * conj;
            }
        }
        let grad: Vec<Complex64> = mean_energy_deriv
            .iter()
            .zip(&mean_deriv)
            .map(|(ed, d)| 2.0 * (ed - stats.mean * d))
            .collect();

        let rate = match cfg.final_learning_rate {
            None => cfg.learning_rate,
            Some(last) => {
                let span = (cfg.n_iterations - 1).max(1) as f64;
                cfg.learning_rate * (last / cfg.learning_rate).powf(iteration as f64 / span)
            }
        };
        let mut params = state.flatten_parameters();
        adamax_step(
            &mut opt,
            &mut params,
            &grad,
            rate,
            cfg.adamax_beta1,
            cfg.adamax_beta2,
        )?;
        state.set_parameters(&params)?;
    }
    Ok((state, trace))
}

/// Fits an RBM to an explicitly stored statevector by maximizing overlap,
/// reusing the gate-learner loss, gradient, and restart machinery with the
/// target amplitudes read straight from the vector.
pub fn fit_to_statevector(
    target: &StateVector,
    alpha: f64,
    cfg: &LearnerConfig,
    scfg: &SamplerConfig,
) -> Result<(RbmState, LearnReport)> {
    let n = target.n_qubits();
    let m = hidden_units_for(alpha, n)?;
    let base = RbmState::zeros(n, m)?;
    let vector_target = VectorTarget::new(target)?;
    let salt = mix_seed(tag_salt("fit-statevector"), &[n as u64, m as u64]);
    learn_target(&base, &vector_target, cfg, scfg, salt)
}
