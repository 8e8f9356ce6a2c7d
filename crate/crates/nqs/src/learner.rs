//! Stochastic gate learning: approximates the action of a Hadamard on an RBM
//! state by minimizing the negative log of the normalized overlap between a
//! trial state and the gate's exact target amplitudes.
//!
//! The loss L = -ln O is driven by its complex gradient
//!   g_k = <O*_k>_Psi - <(Phi/Psi) O*_k>_Psi / <Phi/Psi>_Psi,
//! where O_k are the logarithmic parameter derivatives. For the real-valued
//! loss over (Re p, Im p) the descent direction is (Re g_k, Im g_k); the
//! finite-difference test pins this convention. Updates use AdaMax on the
//! real and imaginary parts as independent parameters.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{NqsError, Result};
use crate::math::exp_log_amp;
use crate::oracle::StateVector;
use crate::rbm::{BitString, RbmState, ThetaTable};
use crate::rng::{derive_rng, mix_seed, tag_salt};
use crate::sampler::{
    hadamard_log_amplitude, run_chains, SampleBatch, SampleTarget, SamplerConfig,
};

/// One overlap measurement along the optimization path.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub overlap: f64,
    pub overlap_std_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub n_iterations: usize,
    pub samples_per_iteration: usize,
    pub learning_rate: f64,
    pub adamax_beta1: f64,
    pub adamax_beta2: f64,
    pub init_noise_sigma: f64,
    pub overlap_check_interval: usize,
    pub target_infidelity: f64,
    pub max_reinit_attempts: usize,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            n_iterations: 500,
            samples_per_iteration: 4096,
            learning_rate: 5e-3,
            adamax_beta1: 0.9,
            adamax_beta2: 0.999,
            init_noise_sigma: 0.01,
            overlap_check_interval: 25,
            target_infidelity: 2e-4,
            max_reinit_attempts: 3,
            seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iterations == 0 || self.samples_per_iteration == 0 {
            return Err(NqsError::InvalidConfig(
                "iteration and sample counts must be positive".into(),
            ));
        }
        if self.overlap_check_interval == 0 {
            return Err(NqsError::InvalidConfig(
                "overlap_check_interval must be positive".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(NqsError::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, beta) in [
            ("adamax_beta1", self.adamax_beta1),
            ("adamax_beta2", self.adamax_beta2),
        ] {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(NqsError::InvalidConfig(format!(
                    "{name} must lie strictly inside (0,1), got {beta}"
                )));
            }
        }
        if !(self.init_noise_sigma.is_finite() && self.init_noise_sigma >= 0.0) {
            return Err(NqsError::InvalidConfig(format!(
                "init_noise_sigma must be finite and non-negative, got {}",
                self.init_noise_sigma
            )));
        }
        if !(self.target_infidelity.is_finite() && self.target_infidelity >= 0.0) {
            return Err(NqsError::InvalidConfig(format!(
                "target_infidelity must be finite and non-negative, got {}",
                self.target_infidelity
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnReport {
    pub final_overlap_estimate: f64,
    pub final_std_error: f64,
    pub iterations_run: usize,
    pub overlap_trace: Vec<TracePoint>,
}

/// AdaMax accumulators over the real-part/imaginary-part parameter slots.
/// Slot 2k is Re p_k, slot 2k+1 is Im p_k.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    first_moment: Vec<f64>,
    inf_norm: Vec<f64>,
    step_count: usize,
}

impl OptimizerState {
    pub fn new(n_complex_params: usize) -> Self {
        OptimizerState {
            first_moment: vec![0.0; 2 * n_complex_params],
            inf_norm: vec![0.0; 2 * n_complex_params],
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn inf_norm(&self) -> &[f64] {
        &self.inf_norm
    }
}

/// One AdaMax update in place. `grad` holds the complex gradient whose real
/// and imaginary parts drive the corresponding real slots.
pub fn adamax_step(
    opt: &mut OptimizerState,
    params: &mut [Complex64],
    grad: &[Complex64],
    lr: f64,
    beta1: f64,
    beta2: f64,
) -> Result<()> {
    if params.len() != grad.len() {
        return Err(NqsError::DimensionMismatch {
            what: "adamax gradient",
            expected: params.len(),
            got: grad.len(),
        });
    }
    if opt.first_moment.len() != 2 * params.len() {
        return Err(NqsError::DimensionMismatch {
            what: "adamax optimizer slots",
            expected: 2 * params.len(),
            got: opt.first_moment.len(),
        });
    }
    opt.step_count += 1;
    let correction = 1.0 - beta1.powi(opt.step_count as i32);
    let scale = lr / correction;
    for (k, p) in params.iter_mut().enumerate() {
        let slots = [(2 * k, grad[k].re), (2 * k + 1, grad[k].im)];
        let mut delta = [0.0; 2];
        for (which, (slot, g)) in slots.into_iter().enumerate() {
            let m = beta1 * opt.first_moment[slot] + (1.0 - beta1) * g;
            let u = (beta2 * opt.inf_norm[slot]).max(g.abs());
            opt.first_moment[slot] = m;
            opt.inf_norm[slot] = u;
            delta[which] = scale * m / u.max(1e-12);
        }
        *p -= Complex64::new(delta[0], delta[1]);
    }
    Ok(())
}

/// Source of target amplitudes Phi. Implementations provide log Phi(B) (with
/// a -inf real part for exact zeros) and a way to draw from |Phi|^2.
pub(crate) trait TargetAmplitudes: Sync {
    fn n_qubits(&self) -> usize;
    fn log_amplitude(&self, b: &BitString) -> Result<Complex64>;
    fn sample(&self, scfg: &SamplerConfig) -> Result<SampleBatch>;
}

/// Phi = H_qubit applied to a fixed RBM state.
pub(crate) struct HadamardTarget<'a> {
    pub state: &'a RbmState,
    pub qubit: usize,
}

impl TargetAmplitudes for HadamardTarget<'_> {
    fn n_qubits(&self) -> usize {
        self.state.n_visible()
    }

    fn log_amplitude(&self, b: &BitString) -> Result<Complex64> {
        hadamard_log_amplitude(self.state, self.qubit, b)
    }

    fn sample(&self, scfg: &SamplerConfig) -> Result<SampleBatch> {
        run_chains(self.state, SampleTarget::HPhi { qubit: self.qubit }, scfg)
    }
}

/// Phi is itself an RBM state (identity-gate targets in tests).
#[cfg(test)]
pub(crate) struct RbmTarget<'a> {
    pub state: &'a RbmState,
}

#[cfg(test)]
impl TargetAmplitudes for RbmTarget<'_> {
    fn n_qubits(&self) -> usize {
        self.state.n_visible()
    }

    fn log_amplitude(&self, b: &BitString) -> Result<Complex64> {
        self.state.log_amplitude(b)
    }

    fn sample(&self, scfg: &SamplerConfig) -> Result<SampleBatch> {
        run_chains(self.state, SampleTarget::Psi, scfg)
    }
}

/// Phi stored explicitly as a statevector; sampling is exact categorical
/// draws from the Born distribution, split over chains so jackknife errors
/// still apply.
pub(crate) struct VectorTarget {
    log_amps: Vec<Complex64>,
    cumulative: Vec<f64>,
    n_qubits: usize,
}

impl VectorTarget {
    pub fn new(vector: &StateVector) -> Result<Self> {
        let probs = vector.probabilities();
        let mut cumulative = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cumulative.push(acc);
        }
        let log_amps = vector
            .amplitudes()
            .iter()
            .map(|a| {
                if a.norm_sqr() == 0.0 {
                    Complex64::new(f64::NEG_INFINITY, 0.0)
                } else {
                    a.ln()
                }
            })
            .collect();
        Ok(VectorTarget {
            log_amps,
            cumulative,
            n_qubits: vector.n_qubits(),
        })
    }
}

impl TargetAmplitudes for VectorTarget {
    fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    fn log_amplitude(&self, b: &BitString) -> Result<Complex64> {
        if b.len() != self.n_qubits {
            return Err(NqsError::DimensionMismatch {
                what: "target bitstring length",
                expected: self.n_qubits,
                got: b.len(),
            });
        }
        Ok(self.log_amps[b.to_index()])
    }

    fn sample(&self, scfg: &SamplerConfig) -> Result<SampleBatch> {
        scfg.validate()?;
        let total = scfg.total_samples();
        let mut bitstrings = Vec::with_capacity(total);
        let mut log_amps = Vec::with_capacity(total);
        for chain in 0..scfg.n_chains {
            let mut rng = derive_rng(scfg.seed, &[tag_salt("vector-target"), chain as u64]);
            for _ in 0..scfg.samples_per_chain {
                let u: f64 = rng.gen();
                let idx = self
                    .cumulative
                    .partition_point(|&c| c < u)
                    .min(self.cumulative.len() - 1);
                bitstrings.push(BitString::from_index(idx, self.n_qubits));
                log_amps.push(self.log_amps[idx]);
            }
        }
        Ok(SampleBatch {
            target: SampleTarget::Psi,
            n_chains: scfg.n_chains,
            bitstrings,
            log_amps,
            weights: vec![1.0 / total as f64; total],
        })
    }
}

/// Weighted mean of exp(t_i - kappa) per chain, with the common offset kappa
/// chosen as the largest finite real part. Exact zeros (t.re = -inf) simply
/// contribute nothing.
struct OffsetRatioMean {
    kappa: f64,
    per_chain_sums: Vec<Complex64>,
    per_chain_weights: Vec<f64>,
    total: Complex64,
}

impl OffsetRatioMean {
    fn new(log_ratios: &[Complex64], weights: &[f64], n_chains: usize) -> Result<Self> {
        let kappa = log_ratios
            .iter()
            .map(|t| t.re)
            .filter(|r| r.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        let per = log_ratios.len() / n_chains;
        let mut per_chain_sums = vec![Complex64::new(0.0, 0.0); n_chains];
        let mut per_chain_weights = vec![0.0; n_chains];
        let mut total = Complex64::new(0.0, 0.0);
        if kappa.is_finite() {
            for (i, (t, w)) in log_ratios.iter().zip(weights).enumerate() {
                let r = exp_log_amp(t - Complex64::new(kappa, 0.0)) * w;
                per_chain_sums[i / per] += r;
                total += r;
            }
        }
        for (c, w) in per_chain_weights.iter_mut().enumerate() {
            *w = weights[c * per..(c + 1) * per].iter().sum();
        }
        if !total.is_finite() {
            return Err(NqsError::NonFinite {
                what: "offset amplitude-ratio mean",
            });
        }
        Ok(OffsetRatioMean {
            kappa,
            per_chain_sums,
            per_chain_weights,
            total,
        })
    }

    /// ln |mean| including the offset; -inf when every ratio was zero.
    fn log_abs_mean(&self) -> f64 {
        if self.total.norm_sqr() == 0.0 || !self.kappa.is_finite() {
            return f64::NEG_INFINITY;
        }
        self.kappa + self.total.norm().ln()
    }

    /// Same with chain `c` left out.
    fn log_abs_mean_without(&self, c: usize) -> f64 {
        let total = self.total - self.per_chain_sums[c];
        let weight = 1.0 - self.per_chain_weights[c];
        if total.norm_sqr() == 0.0 || !self.kappa.is_finite() || weight <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.kappa + (total.norm() / weight).ln()
    }
}

fn overlap_from_logs(log_m1: f64, log_m2: f64) -> f64 {
    if log_m1 == f64::NEG_INFINITY || log_m2 == f64::NEG_INFINITY {
        return 0.0;
    }
    (0.5 * (log_m1 + log_m2)).exp()
}

/// Overlap |<Psi|Phi>| / (|Psi| |Phi|) estimated as the square root of the
/// magnitude of <Phi/Psi>_Psi * <Psi/Phi>_Phi, with a jackknife-over-chains
/// standard error. Requires at least two chains.
pub fn estimate_overlap(
    psi: &RbmState,
    phi_source: (&RbmState, usize),
    scfg: &SamplerConfig,
) -> Result<(f64, f64)> {
    let target = HadamardTarget {
        state: phi_source.0,
        qubit: phi_source.1,
    };
    estimate_overlap_with(psi, &target, scfg)
}

pub(crate) fn estimate_overlap_with(
    psi: &RbmState,
    target: &dyn TargetAmplitudes,
    scfg: &SamplerConfig,
) -> Result<(f64, f64)> {
    scfg.validate()?;
    if scfg.n_chains < 2 {
        return Err(NqsError::InvalidConfig(
            "overlap estimation needs at least two chains for jackknife errors".into(),
        ));
    }
    if psi.n_visible() != target.n_qubits() {
        return Err(NqsError::DimensionMismatch {
            what: "overlap qubit count",
            expected: psi.n_visible(),
            got: target.n_qubits(),
        });
    }

    let mut cfg_psi = scfg.clone();
    cfg_psi.seed = mix_seed(scfg.seed, &[tag_salt("overlap-psi")]);
    let mut cfg_phi = scfg.clone();
    cfg_phi.seed = mix_seed(scfg.seed, &[tag_salt("overlap-phi")]);

    let batch_psi = run_chains(psi, SampleTarget::Psi, &cfg_psi)?;
    let batch_phi = target.sample(&cfg_phi)?;

    // log(Phi/Psi) on Psi samples and log(Psi/Phi) on Phi samples; the
    // estimator uses magnitudes only, so conjugation plays no role.
    let mut ratios_psi = Vec::with_capacity(batch_psi.len());
    for (b, log_psi) in batch_psi.bitstrings.iter().zip(&batch_psi.log_amps) {
        ratios_psi.push(target.log_amplitude(b)? - log_psi);
    }
    let mut ratios_phi = Vec::with_capacity(batch_phi.len());
    for (b, log_phi) in batch_phi.bitstrings.iter().zip(&batch_phi.log_amps) {
        ratios_phi.push(psi.log_amplitude(b)? - log_phi);
    }

    let m1 = OffsetRatioMean::new(&ratios_psi, &batch_psi.weights, batch_psi.n_chains)?;
    let m2 = OffsetRatioMean::new(&ratios_phi, &batch_phi.weights, batch_phi.n_chains)?;

    let estimate = overlap_from_logs(m1.log_abs_mean(), m2.log_abs_mean());

    let n_chains = batch_psi.n_chains.min(batch_phi.n_chains);
    let thetas: Vec<f64> = (0..n_chains)
        .map(|c| overlap_from_logs(m1.log_abs_mean_without(c), m2.log_abs_mean_without(c)))
        .collect();
    let mean: f64 = thetas.iter().sum::<f64>() / n_chains as f64;
    let ss: f64 = thetas.iter().map(|t| (t - mean).powi(2)).sum();
    let std_error = ((n_chains - 1) as f64 / n_chains as f64 * ss).sqrt();

    Ok((estimate, std_error))
}

/// Gradient of L = -ln O with respect to every parameter in canonical order,
/// estimated over a batch drawn from |Psi|^2. Returns the complex vector
/// whose (Re, Im) parts are the descent directions for (Re p, Im p).
pub fn overlap_gradient(
    psi: &RbmState,
    phi_source: (&RbmState, usize),
    batch: &SampleBatch,
) -> Result<Vec<Complex64>> {
    let target = HadamardTarget {
        state: phi_source.0,
        qubit: phi_source.1,
    };
    overlap_gradient_with(psi, &target, batch)
}

pub(crate) fn overlap_gradient_with(
    psi: &RbmState,
    target: &dyn TargetAmplitudes,
    batch: &SampleBatch,
) -> Result<Vec<Complex64>> {
    if psi.n_visible() != target.n_qubits() {
        return Err(NqsError::DimensionMismatch {
            what: "gradient qubit count",
            expected: psi.n_visible(),
            got: target.n_qubits(),
        });
    }
    if batch.is_empty() {
        return Err(NqsError::InvalidConfig("empty sample batch".into()));
    }

    let mut log_ratios = Vec::with_capacity(batch.len());
    for (b, log_psi) in batch.bitstrings.iter().zip(&batch.log_amps) {
        log_ratios.push(target.log_amplitude(b)? - log_psi);
    }
    let kappa = log_ratios
        .iter()
        .map(|t| t.re)
        .filter(|r| r.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);

    let n_params = psi.parameter_count();
    let mut mean_deriv = vec![Complex64::new(0.0, 0.0); n_params];
    let mut mean_ratio_deriv = vec![Complex64::new(0.0, 0.0); n_params];
    let mut denom = Complex64::new(0.0, 0.0);

    for (i, (b, w)) in batch.bitstrings.iter().zip(&batch.weights).enumerate() {
        let table = ThetaTable::new(psi, b.clone())?;
        let derivs = psi.variational_derivatives(&table)?;
        let ratio = if kappa.is_finite() {
            exp_log_amp(log_ratios[i] - Complex64::new(kappa, 0.0)) * w
        } else {
            Complex64::new(0.0, 0.0)
        };
        denom += ratio;
        for (k, d) in derivs.iter().enumerate() {
            let conj = d.conj();
            mean_deriv[k] += w * conj;
            mean_ratio_deriv[k] += ratio * conj;
        }
    }

    // The common offset exp(kappa) cancels between numerator and denominator,
    // which also makes the gradient exactly invariant under rescaling Phi.
    if denom.norm() < 1e-12 {
        return Err(NqsError::DegenerateOverlap {
            magnitude: denom.norm(),
        });
    }
    Ok(mean_deriv
        .iter()
        .zip(&mean_ratio_deriv)
        .map(|(a, b)| a - b / denom)
        .collect())
}

struct BestSeen {
    estimate: f64,
    std_error: f64,
    state: RbmState,
}

enum RestartOutcome {
    ReachedTarget,
    BudgetExhausted,
}

pub(crate) fn scfg_with_total_samples(scfg: &SamplerConfig, total: usize) -> SamplerConfig {
    let mut out = scfg.clone();
    out.samples_per_chain = total.div_ceil(scfg.n_chains);
    out
}

fn perturbed(base: &RbmState, sigma: f64, rng: &mut impl Rng) -> Result<RbmState> {
    let mut out = base.clone();
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| NqsError::InvalidConfig(format!("invalid init noise: {e}")))?;
        let mut params = base.flatten_parameters();
        for p in &mut params {
            *p += Complex64::new(normal.sample(rng), normal.sample(rng));
        }
        out.set_parameters(&params)?;
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn run_one_restart(
    base: &RbmState,
    target: &dyn TargetAmplitudes,
    cfg: &LearnerConfig,
    scfg: &SamplerConfig,
    salt: u64,
    restart: u64,
    trace: &mut Vec<TracePoint>,
    best: &mut Option<BestSeen>,
    global_iter: &mut usize,
) -> Result<RestartOutcome> {
    let mut init_rng = derive_rng(cfg.seed, &[salt, tag_salt("init"), restart]);
    let mut working = perturbed(base, cfg.init_noise_sigma, &mut init_rng)?;
    let mut opt = OptimizerState::new(working.parameter_count());
    let mut iter = 0usize;

    loop {
        let budget_done = iter >= cfg.n_iterations;
        if iter % cfg.overlap_check_interval == 0 || budget_done {
            let mut check_cfg = scfg_with_total_samples(scfg, cfg.samples_per_iteration);
            check_cfg.seed = mix_seed(
                cfg.seed,
                &[salt, tag_salt("check"), restart, *global_iter as u64],
            );
            let (est, se) = estimate_overlap_with(&working, target, &check_cfg)?;
            trace.push(TracePoint {
                iteration: *global_iter,
                overlap: est,
                overlap_std_err: se,
            });
            if best.as_ref().map_or(true, |b| est > b.estimate) {
                *best = Some(BestSeen {
                    estimate: est,
                    std_error: se,
                    state: working.clone(),
                });
            }
            if est >= 1.0 - cfg.target_infidelity {
                return Ok(RestartOutcome::ReachedTarget);
            }
        }
        if budget_done {
            return Ok(RestartOutcome::BudgetExhausted);
        }

        let mut batch_cfg = scfg_with_total_samples(scfg, cfg.samples_per_iteration);
        batch_cfg.seed = mix_seed(
            cfg.seed,
            &[salt, tag_salt("batch"), restart, *global_iter as u64],
        );
        let batch = run_chains(&working, SampleTarget::Psi, &batch_cfg)?;
        let grad = overlap_gradient_with(&working, target, &batch)?;

        let mut params = working.flatten_parameters();
        adamax_step(
            &mut opt,
            &mut params,
            &grad,
            cfg.learning_rate,
            cfg.adamax_beta1,
            cfg.adamax_beta2,
        )?;
        working.set_parameters(&params)?;
        iter += 1;
        *global_iter += 1;
    }
}

pub(crate) fn learn_target(
    base: &RbmState,
    target: &dyn TargetAmplitudes,
    cfg: &LearnerConfig,
    scfg: &SamplerConfig,
    salt: u64,
) -> Result<(RbmState, LearnReport)> {
    cfg.validate()?;
    scfg.validate()?;
    base.validate()?;
    if base.n_visible() != target.n_qubits() {
        return Err(NqsError::DimensionMismatch {
            what: "learner qubit count",
            expected: base.n_visible(),
            got: target.n_qubits(),
        });
    }

    let mut trace = Vec::new();
    let mut best: Option<BestSeen> = None;
    let mut global_iter = 0usize;
    let mut restarts_used = 0usize;
    let mut completed = false;

    for restart in 0..=cfg.max_reinit_attempts {
        match run_one_restart(
            base,
            target,
            cfg,
            scfg,
            salt,
            restart as u64,
            &mut trace,
            &mut best,
            &mut global_iter,
        ) {
            Ok(RestartOutcome::ReachedTarget) | Ok(RestartOutcome::BudgetExhausted) => {
                completed = true;
                break;
            }
            Err(NqsError::DegenerateOverlap { .. }) => {
                restarts_used = restart + 1;
                continue;
            }
            Err(other) => return Err(other),
        }
    }

    if !completed {
        return Err(NqsError::LearnerFailed {
            restarts: restarts_used,
            best_overlap: best.as_ref().map_or(0.0, |b| b.estimate),
            trace,
        });
    }

    let best = best.expect("at least one overlap check ran");
    Ok((
        best.state,
        LearnReport {
            final_overlap_estimate: best.estimate,
            final_std_error: best.std_error,
            iterations_run: global_iter,
            overlap_trace: trace,
        },
    ))
}

/// Learn an RBM approximation of H_qubit applied to `state`. Returns the
/// best-overlap parameters seen, not the last iterate.
pub fn learn_hadamard(
    state: &RbmState,
    qubit: usize,
    cfg: &LearnerConfig,
    scfg: &SamplerConfig,
) -> Result<(RbmState, LearnReport)> {
    if qubit >= state.n_visible() {
        return Err(NqsError::IndexOutOfRange {
            what: "hadamard qubit",
            index: qubit,
            len: state.n_visible(),
        });
    }
    let target = HadamardTarget { state, qubit };
    learn_target(
        state,
        &target,
        cfg,
        scfg,
        mix_seed(tag_salt("learn-hadamard"), &[qubit as u64]),
    )
}
