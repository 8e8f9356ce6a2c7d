//! Metropolis-Hastings sampling of bitstrings from |Psi|^2, and from |Phi|^2
//! where Phi is Psi with one Hadamard applied.
//!
//! Proposals are uniform single-bit flips; acceptance uses only squared
//! amplitude magnitudes, never phases. Chains are embarrassingly parallel and
//! each one draws from its own deterministically derived RNG substream, so a
//! batch is a pure function of (state, target, config) regardless of thread
//! scheduling.
//!
//! RNG consumption per chain is part of the determinism contract: first
//! uniform random initial bitstrings until the target amplitude is nonzero,
//! then per proposal one site index followed by one uniform acceptance draw.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{NqsError, Result};
use crate::math::ln_sum_signed;
use crate::rbm::{BitString, RbmState, ThetaTable};
use crate::rng::{derive_rng, tag_salt};

/// Give up if this many initial bitstrings in a row have zero amplitude.
const MAX_INIT_ATTEMPTS: usize = 1000;

const LN_SQRT_2: f64 = std::f64::consts::LN_2 * 0.5;

/// What a chain samples from: the state itself, or the state with a Hadamard
/// applied to one qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleTarget {
    Psi,
    HPhi { qubit: usize },
}

impl SampleTarget {
    fn salt_words(&self) -> [u64; 2] {
        match *self {
            SampleTarget::Psi => [tag_salt("target-psi"), 0],
            SampleTarget::HPhi { qubit } => [tag_salt("target-hphi"), qubit as u64],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub burn_in_sweeps: usize,
    pub sweeps_between_samples: usize,
    pub samples_per_chain: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_chains: 16,
            burn_in_sweeps: 200,
            sweeps_between_samples: 1,
            samples_per_chain: 256,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("n_chains", self.n_chains),
            ("sweeps_between_samples", self.sweeps_between_samples),
            ("samples_per_chain", self.samples_per_chain),
        ] {
            if v == 0 {
                return Err(NqsError::InvalidConfig(format!("{what} must be positive")));
            }
        }
        Ok(())
    }

    pub fn total_samples(&self) -> usize {
        self.n_chains * self.samples_per_chain
    }
}

/// Samples from |target|^2 with cached target log-amplitudes, stored
/// chain-major (all of chain 0, then chain 1, ...). `weights` are normalized
/// importance weights: uniform 1/len for Markov-chain batches, Born-rule
/// probabilities for enumerated pseudo-batches.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub target: SampleTarget,
    pub n_chains: usize,
    pub bitstrings: Vec<BitString>,
    pub log_amps: Vec<Complex64>,
    pub weights: Vec<f64>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.bitstrings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bitstrings.is_empty()
    }

    pub fn samples_per_chain(&self) -> usize {
        self.len() / self.n_chains
    }

    /// Index range of one chain's samples.
    pub fn chain_range(&self, chain: usize) -> std::ops::Range<usize> {
        let per = self.samples_per_chain();
        chain * per..(chain + 1) * per
    }
}

/// log Phi(B) for Phi = H_qubit Psi:
/// Phi(B) = (Psi(B with bit=0) + (-1)^{B_qubit} Psi(B with bit=1)) / sqrt(2).
/// The larger branch is factored out before summing; an exact cancellation
/// yields a -inf real part, the log-space encoding of amplitude zero.
pub fn hadamard_log_amplitude(state: &RbmState, qubit: usize, b: &BitString) -> Result<Complex64> {
    if qubit >= state.n_visible() {
        return Err(NqsError::IndexOutOfRange {
            what: "hadamard qubit",
            index: qubit,
            len: state.n_visible(),
        });
    }
    let table = ThetaTable::new(state, b.clone())?;
    Ok(hadamard_log_amplitude_from_table(state, &table, qubit))
}

/// Table-based variant for hot loops; the table is bound to the bitstring of
/// interest.
pub fn hadamard_log_amplitude_from_table(
    state: &RbmState,
    table: &ThetaTable,
    qubit: usize,
) -> Complex64 {
    let bit = table.bits().bit(qubit);
    let (log0, log1) = if bit {
        (
            table.log_amplitude_with_flips(state, &[qubit]),
            table.log_amplitude(state),
        )
    } else {
        (
            table.log_amplitude(state),
            table.log_amplitude_with_flips(state, &[qubit]),
        )
    };
    let sign = if bit { -1.0 } else { 1.0 };
    ln_sum_signed(log0, log1, sign) - Complex64::new(LN_SQRT_2, 0.0)
}

fn current_log_amp(state: &RbmState, table: &ThetaTable, target: SampleTarget) -> Complex64 {
    match target {
        SampleTarget::Psi => table.log_amplitude(state),
        SampleTarget::HPhi { qubit } => hadamard_log_amplitude_from_table(state, table, qubit),
    }
}

/// Target log-amplitude of the table's bitstring with one site flipped,
/// without committing the flip.
fn proposal_log_amp(
    state: &RbmState,
    table: &ThetaTable,
    target: SampleTarget,
    site: usize,
) -> Complex64 {
    match target {
        SampleTarget::Psi => table.log_amplitude_with_flips(state, &[site]),
        SampleTarget::HPhi { qubit } => {
            let bit = table.bits().bit(qubit);
            if site == qubit {
                // Flipping the Hadamard qubit swaps nothing but the relative
                // sign between the two fixed-bit branches.
                let (log0, log1) = if bit {
                    (
                        table.log_amplitude_with_flips(state, &[qubit]),
                        table.log_amplitude(state),
                    )
                } else {
                    (
                        table.log_amplitude(state),
                        table.log_amplitude_with_flips(state, &[qubit]),
                    )
                };
                let sign_after = if bit { 1.0 } else { -1.0 };
                ln_sum_signed(log0, log1, sign_after) - Complex64::new(LN_SQRT_2, 0.0)
            } else {
                let (flips0, flips1): (&[usize], &[usize]) = if bit {
                    (&[site, qubit], &[site])
                } else {
                    (&[site], &[site, qubit])
                };
                let log0 = table.log_amplitude_with_flips(state, flips0);
                let log1 = table.log_amplitude_with_flips(state, flips1);
                let sign = if bit { -1.0 } else { 1.0 };
                ln_sum_signed(log0, log1, sign) - Complex64::new(LN_SQRT_2, 0.0)
            }
        }
    }
}

fn metropolis_sweep(
    state: &RbmState,
    target: SampleTarget,
    table: &mut ThetaTable,
    current: &mut Complex64,
    rng: &mut ChaCha8Rng,
) {
    let n = state.n_visible();
    for _ in 0..n {
        let site = rng.gen_range(0..n);
        let proposed = proposal_log_amp(state, table, target, site);
        let u: f64 = rng.gen();
        // Acceptance min(1, |ratio|^2) via logs; u.ln() < 0 covers the
        // always-accept case, and a -inf proposal never passes.
        if u.ln() < 2.0 * (proposed.re - current.re) {
            table.flip(state, site);
            *current = proposed;
        }
    }
}

/// Draw uniform random bitstrings until one has nonzero target amplitude.
/// Zero-amplitude starts are real for Hadamard targets (exact branch
/// cancellation), so a bounded redraw keeps chains off measure-zero points.
fn draw_initial_table(
    state: &RbmState,
    target: SampleTarget,
    rng: &mut ChaCha8Rng,
    max_attempts: usize,
) -> Result<(ThetaTable, Complex64)> {
    let n = state.n_visible();
    let mut attempts = 0;
    loop {
        let table = ThetaTable::new(state, BitString::random(n, rng))?;
        let current = current_log_amp(state, &table, target);
        attempts += 1;
        if current.re > f64::NEG_INFINITY {
            return Ok((table, current));
        }
        if attempts >= max_attempts {
            return Err(NqsError::SamplerStuck { attempts });
        }
    }
}

fn run_single_chain(
    state: &RbmState,
    target: SampleTarget,
    cfg: &SamplerConfig,
    chain: usize,
) -> Result<(Vec<BitString>, Vec<Complex64>)> {
    let target_salts = target.salt_words();
    let mut rng = derive_rng(
        cfg.seed,
        &[
            tag_salt("sampler"),
            target_salts[0],
            target_salts[1],
            chain as u64,
        ],
    );
    let (mut table, mut current) = draw_initial_table(state, target, &mut rng, MAX_INIT_ATTEMPTS)?;

    for _ in 0..cfg.burn_in_sweeps {
        metropolis_sweep(state, target, &mut table, &mut current, &mut rng);
    }

    let mut bits_out = Vec::with_capacity(cfg.samples_per_chain);
    let mut amps_out = Vec::with_capacity(cfg.samples_per_chain);
    for _ in 0..cfg.samples_per_chain {
        for _ in 0..cfg.sweeps_between_samples {
            metropolis_sweep(state, target, &mut table, &mut current, &mut rng);
        }
        // Re-derive the amplitude from the table at every recorded sample so
        // the cached value cannot drift over long runs.
        current = current_log_amp(state, &table, target);
        bits_out.push(table.bits().clone());
        amps_out.push(current);
    }
    Ok((bits_out, amps_out))
}

/// Run all configured chains and concatenate their samples in chain order.
pub fn run_chains(
    state: &RbmState,
    target: SampleTarget,
    cfg: &SamplerConfig,
) -> Result<SampleBatch> {
    cfg.validate()?;
    state.validate()?;
    if let SampleTarget::HPhi { qubit } = target {
        if qubit >= state.n_visible() {
            return Err(NqsError::IndexOutOfRange {
                what: "hadamard qubit",
                index: qubit,
                len: state.n_visible(),
            });
        }
    }
    let chains: Vec<(Vec<BitString>, Vec<Complex64>)> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|c| run_single_chain(state, target, cfg, c))
        .collect::<Result<_>>()?;

    let total = cfg.total_samples();
    let mut bitstrings = Vec::with_capacity(total);
    let mut log_amps = Vec::with_capacity(total);
    for (bits, amps) in chains {
        bitstrings.extend(bits);
        log_amps.extend(amps);
    }
    let weight = 1.0 / total as f64;
    Ok(SampleBatch {
        target,
        n_chains: cfg.n_chains,
        bitstrings,
        log_amps,
        weights: vec![weight; total],
    })
}

/// Exhaustive pseudo-batch over all 2^N bitstrings, weighted by the exact
/// Born probabilities |Psi|^2 / Z. Replaces Markov-chain noise with exact
/// expectation values in small-N tests.
pub fn enumerate_all(state: &RbmState) -> Result<SampleBatch> {
    let n = state.n_visible();
    if n > crate::oracle::QUBIT_LIMIT {
        return Err(NqsError::QubitLimit {
            requested: n,
            limit: crate::oracle::QUBIT_LIMIT,
        });
    }
    let size = 1usize << n;
    let mut bitstrings = Vec::with_capacity(size);
    let mut log_amps = Vec::with_capacity(size);
    for index in 0..size {
        let b = BitString::from_index(index, n);
        log_amps.push(state.log_amplitude(&b)?);
        bitstrings.push(b);
    }
    let max_re = log_amps
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = log_amps
        .iter()
        .map(|l| (2.0 * (l.re - max_re)).exp())
        .collect();
    let z: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= z;
    }
    Ok(SampleBatch {
        target: SampleTarget::Psi,
        n_chains: 1,
        bitstrings,
        log_amps,
        weights,
    })
}
