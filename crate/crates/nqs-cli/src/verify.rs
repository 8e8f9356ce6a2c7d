//! Built-in invariant battery behind the `verify` subcommand: the
//! properties every release must hold, runnable on any checkout in
//! seconds. Each check reports pass/fail with a short numeric detail.
//!
//! The battery can be run with a deliberately corrupted CRZ solution
//! (fault injection) to prove the checks can actually fail.

use num_complex::Complex64;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use nqs::gates::{apply_exact, CrzUpdate, GateOp};
use nqs::learner::overlap_gradient;
use nqs::oracle::{expand_rbm, overlap_exact, scalar_mismatch};
use nqs::rbm::RbmState;
use nqs::rng::{derive_rng, mix_seed, tag_salt};
use nqs::sampler::{enumerate_all, run_chains, SampleTarget, SamplerConfig};
use nqs::Result;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Deliberate defects for exercising the battery itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    None,
    /// Flip the sign of the CRZ target coupling; breaks the
    /// four-assignment phase structure for every nonzero angle.
    CrzSignFlip,
}

pub fn verify_suite(seed: u64) -> Result<VerifyReport> {
    verify_suite_with(seed, Fault::None)
}

pub fn verify_suite_with(seed: u64, fault: Fault) -> Result<VerifyReport> {
    let checks = vec![
        check_exact_gates(seed)?,
        check_crz_assignments(fault),
        check_gradient(seed)?,
        check_sampler(seed)?,
    ];
    Ok(VerifyReport { seed, checks })
}

fn random_state(seed: u64, salt: u64, rng_tag: &str) -> Result<(RbmState, usize)> {
    let mut rng = derive_rng(mix_seed(seed, &[tag_salt(rng_tag), salt]), &[0]);
    let n = rng.gen_range(2..=6);
    let alpha = if rng.gen_bool(0.5) { 1 } else { 2 };
    let state = RbmState::random(n, alpha * n, 0.4, &mut rng)?;
    Ok((state, n))
}

/// Every exact update rule agrees with the dense backend up to a global
/// scalar, across random states, gates, and angles.
fn check_exact_gates(seed: u64) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for instance in 0..40u64 {
        let (state, n) = random_state(seed, instance, "verify-exact")?;
        let mut rng = derive_rng(mix_seed(seed, &[tag_salt("verify-exact-gate"), instance]), &[0]);
        let qubit = rng.gen_range(0..n);
        let phi = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let gate = match rng.gen_range(0..5) {
            0 => GateOp::X { qubit },
            1 => GateOp::Y { qubit },
            2 => GateOp::Z { qubit },
            3 => GateOp::Rz { qubit, phi },
            _ => {
                let control = qubit;
                let target = (qubit + 1 + rng.gen_range(0..n - 1)) % n;
                GateOp::Crz {
                    control,
                    target,
                    phi,
                }
            }
        };
        let updated = apply_exact(&state, &gate)?;
        let mut reference = expand_rbm(&state)?;
        reference.apply_gate(&gate)?;
        let got = expand_rbm(&updated)?;
        worst = worst.max(scalar_mismatch(&got, &reference)?);
    }
    Ok(CheckResult {
        name: "exact gates match the dense backend",
        passed: worst < 1e-10,
        detail: format!("worst component mismatch {worst:.3e} over 40 instances"),
    })
}

/// The CRZ hidden-unit solution multiplies the four (control, target)
/// assignments by amplitudes proportional to (1, 1, 1, e^{i phi}).
fn check_crz_assignments(fault: Fault) -> CheckResult {
    let mut worst: f64 = 0.0;
    for step in 0..16 {
        let phi = -2.0 * std::f64::consts::PI
            + 4.0 * std::f64::consts::PI * (step as f64 + 1.0) / 16.0;
        let mut update = CrzUpdate::for_angle(phi);
        if fault == Fault::CrzSignFlip {
            update.w_target = -update.w_target;
        }
        let factors = update.assignment_factors();
        let expected = [
            Complex64::new(1.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, phi).exp(),
        ];
        for (factor, want) in factors.iter().zip(expected) {
            worst = worst.max((factor / factors[0] - want).norm());
        }
    }
    CheckResult {
        name: "CRZ four-assignment phase structure",
        passed: worst < 1e-12,
        detail: format!("worst deviation {worst:.3e} over 16 angles"),
    }
}

/// The enumeration-mode stochastic gradient equals the finite-difference
/// gradient of the exactly computed loss.
fn check_gradient(seed: u64) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for instance in 0..4u64 {
        let mut rng = derive_rng(mix_seed(seed, &[tag_salt("verify-grad"), instance]), &[0]);
        let n = rng.gen_range(3..=4);
        let psi = RbmState::random(n, n, 0.4, &mut rng)?;
        let src = RbmState::random(n, n, 0.4, &mut rng)?;
        let qubit = rng.gen_range(0..n);

        let mut target = expand_rbm(&src)?;
        target.apply_gate(&GateOp::H { qubit })?;
        let exact_loss = |params: &[Complex64]| -> Result<f64> {
            let mut s = psi.clone();
            s.set_parameters(params)?;
            Ok(-overlap_exact(&expand_rbm(&s)?, &target)?.ln())
        };

        let batch = enumerate_all(&psi)?;
        let grad = overlap_gradient(&psi, (&src, qubit), &batch)?;
        let base = psi.flatten_parameters();
        let h = 1e-4;
        for k in 0..base.len() {
            for (dir, got) in [
                (Complex64::new(h, 0.0), grad[k].re),
                (Complex64::new(0.0, h), grad[k].im),
            ] {
                let mut plus = base.clone();
                plus[k] += dir;
                let mut minus = base.clone();
                minus[k] -= dir;
                let fd = (exact_loss(&plus)? - exact_loss(&minus)?) / (2.0 * h);
                worst = worst.max((got - fd).abs());
            }
        }
    }
    Ok(CheckResult {
        name: "gradient matches finite differences",
        passed: worst < 1e-6,
        detail: format!("worst deviation {worst:.3e} over 4 instances"),
    })
}

/// Sampled bitstring frequencies agree with the Born probabilities of the
/// expanded state (chi-square at the 0.1% level).
fn check_sampler(seed: u64) -> Result<CheckResult> {
    let mut rng = derive_rng(mix_seed(seed, &[tag_salt("verify-sampler")]), &[0]);
    let n = 3usize;
    let state = RbmState::random(n, n, 0.4, &mut rng)?;
    let probabilities = expand_rbm(&state)?.probabilities();

    let scfg = SamplerConfig {
        n_chains: 16,
        burn_in_sweeps: 200,
        sweeps_between_samples: 1,
        samples_per_chain: 2048,
        seed: mix_seed(seed, &[tag_salt("verify-sampler-chains")]),
    };
    let batch = run_chains(&state, SampleTarget::Psi, &scfg)?;
    let mut counts = vec![0usize; 1 << n];
    for b in &batch.bitstrings {
        counts[b.to_index()] += 1;
    }
    let total = batch.bitstrings.len() as f64;
    let statistic: f64 = counts
        .iter()
        .zip(&probabilities)
        .map(|(&observed, &p)| {
            let expected = total * p;
            (observed as f64 - expected).powi(2) / expected
        })
        .sum();
    let dof = (1 << n) - 1;
    let threshold = ChiSquared::new(dof as f64)
        .expect("positive dof")
        .inverse_cdf(0.999);
    Ok(CheckResult {
        name: "sampler matches Born probabilities",
        passed: statistic < threshold,
        detail: format!(
            "chi-square {statistic:.2} vs threshold {threshold:.2} ({dof} dof, {} samples)",
            batch.bitstrings.len()
        ),
    })
}
