//! Experiment configuration: a single TOML document fully describes a run,
//! so every result is reproducible from the file plus the binary. Sections
//! carry complete defaults; `templates` returns commented starting points.
//!
//! Seeds never appear in the sub-sections. Every random stream derives from
//! the one top-level `seed` through named substreams, which is what makes
//! identical configs produce byte-identical traces.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nqs::groundstate::{hidden_units_for, Lattice, TfimParams, VmcConfig};
use nqs::learner::LearnerConfig;
use nqs::oracle::NoiseConfig;
use nqs::sampler::SamplerConfig;
use nqs::{NqsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    HadamardTransform,
    TruncatedFourier,
    NoiseSweep,
    PrepareGroundState,
    RunCircuitFile,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::HadamardTransform,
        ExperimentKind::TruncatedFourier,
        ExperimentKind::NoiseSweep,
        ExperimentKind::PrepareGroundState,
        ExperimentKind::RunCircuitFile,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::HadamardTransform => "hadamard_transform",
            ExperimentKind::TruncatedFourier => "truncated_fourier",
            ExperimentKind::NoiseSweep => "noise_sweep",
            ExperimentKind::PrepareGroundState => "prepare_ground_state",
            ExperimentKind::RunCircuitFile => "run_circuit_file",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.as_str() == name)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Physical system the circuit acts on: lattice geometry, TFIM couplings,
/// and the hidden-unit density of the variational state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub lattice: Lattice,
    pub gamma: f64,
    pub j: f64,
    pub alpha: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        SystemSection {
            lattice: Lattice::ChainPeriodic { length: 12 },
            gamma: 1.0,
            j: 1.0,
            alpha: 1.0,
        }
    }
}

impl SystemSection {
    pub fn params(&self) -> TfimParams {
        TfimParams {
            gamma: self.gamma,
            j: self.j,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.lattice.n_sites()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrepMethod {
    /// Variational energy minimization from a random start.
    Vmc,
    /// Stochastic fit to the exactly diagonalized ground state (N-limited).
    Fit,
    /// Load an RBM parameter file.
    Load,
    /// Product state concentrated on |0...0>.
    PinnedZeros,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreparationSection {
    pub method: PrepMethod,
    /// RBM parameter file for `method = "load"`.
    pub state_file: Option<PathBuf>,
    /// Bias magnitude for `method = "pinned_zeros"`. A wrong bit costs
    /// exp(-strength) in amplitude; 4.0 keeps residual tails below what the
    /// gate learner can represent while staying reachable for it.
    pub pin_strength: f64,
}

impl Default for PreparationSection {
    fn default() -> Self {
        PreparationSection {
            method: PrepMethod::Vmc,
            state_file: None,
            pin_strength: 4.0,
        }
    }
}

/// VMC energy-minimization settings, minus the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VmcSection {
    pub n_iterations: usize,
    pub learning_rate: f64,
    pub final_learning_rate: Option<f64>,
    pub adamax_beta1: f64,
    pub adamax_beta2: f64,
    pub init_noise_sigma: f64,
    pub divergence_patience: usize,
}

impl Default for VmcSection {
    /// Hotter and longer than the library defaults: sized for chain lengths
    /// around 12-16 where the energy valley takes thousands of iterations
    /// to cross, with an annealed tail to settle once it arrives.
    fn default() -> Self {
        let d = VmcConfig::default();
        VmcSection {
            n_iterations: 4000,
            learning_rate: 0.05,
            final_learning_rate: Some(0.005),
            adamax_beta1: d.adamax_beta1,
            adamax_beta2: d.adamax_beta2,
            init_noise_sigma: d.init_noise_sigma,
            divergence_patience: d.divergence_patience,
        }
    }
}

impl VmcSection {
    pub fn to_config(&self, seed: u64) -> VmcConfig {
        VmcConfig {
            n_iterations: self.n_iterations,
            learning_rate: self.learning_rate,
            final_learning_rate: self.final_learning_rate,
            adamax_beta1: self.adamax_beta1,
            adamax_beta2: self.adamax_beta2,
            init_noise_sigma: self.init_noise_sigma,
            divergence_patience: self.divergence_patience,
            seed,
        }
    }
}

/// Stochastic overlap-maximization settings, minus the seed. Used both for
/// learned Hadamard gates and (with the `fit` defaults below) for fitting a
/// state to an exact target vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerSection {
    pub n_iterations: usize,
    pub samples_per_iteration: usize,
    pub learning_rate: f64,
    pub adamax_beta1: f64,
    pub adamax_beta2: f64,
    pub init_noise_sigma: f64,
    pub overlap_check_interval: usize,
    pub target_infidelity: f64,
    pub max_reinit_attempts: usize,
}

impl Default for LearnerSection {
    /// Sized for the hardest gates of a chain-of-12 transform: the late
    /// Hadamards land on spread-out states with extra hidden units from
    /// earlier controlled phases, the overlap climbs slowly there, and
    /// iterations buy more than batch size.
    fn default() -> Self {
        LearnerSection {
            n_iterations: 2000,
            samples_per_iteration: 2048,
            learning_rate: 0.05,
            adamax_beta1: 0.9,
            adamax_beta2: 0.999,
            init_noise_sigma: 0.01,
            overlap_check_interval: 25,
            target_infidelity: 2e-4,
            max_reinit_attempts: 3,
        }
    }
}

impl LearnerSection {
    /// Fit runs chase the last decades of infidelity along a nearly flat
    /// valley, so they get a longer, hotter schedule and no early exit (the
    /// overlap estimate saturates on concentrated states long before the
    /// true overlap does).
    pub fn fit_defaults() -> Self {
        LearnerSection {
            n_iterations: 1500,
            samples_per_iteration: 4096,
            learning_rate: 0.03,
            overlap_check_interval: 1_000_000,
            ..LearnerSection::default()
        }
    }

    pub fn to_config(&self, seed: u64) -> LearnerConfig {
        LearnerConfig {
            n_iterations: self.n_iterations,
            samples_per_iteration: self.samples_per_iteration,
            learning_rate: self.learning_rate,
            adamax_beta1: self.adamax_beta1,
            adamax_beta2: self.adamax_beta2,
            init_noise_sigma: self.init_noise_sigma,
            overlap_check_interval: self.overlap_check_interval,
            target_infidelity: self.target_infidelity,
            max_reinit_attempts: self.max_reinit_attempts,
            seed,
        }
    }
}

/// Metropolis sampler geometry, minus the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub n_chains: usize,
    pub burn_in_sweeps: usize,
    pub sweeps_between_samples: usize,
    pub samples_per_chain: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        SamplerSection {
            n_chains: 16,
            burn_in_sweeps: 100,
            sweeps_between_samples: 1,
            samples_per_chain: 128,
        }
    }
}

impl SamplerSection {
    pub fn to_config(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            n_chains: self.n_chains,
            burn_in_sweeps: self.burn_in_sweeps,
            sweeps_between_samples: self.sweeps_between_samples,
            samples_per_chain: self.samples_per_chain,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    /// Pauli insertion probabilities to sweep, one sub-experiment per rate.
    pub rates: Vec<f64>,
    pub trajectories: usize,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            rates: vec![1e-4, 3e-4, 1e-3, 3e-3, 1e-2],
            trajectories: 200,
        }
    }
}

impl NoiseSection {
    pub fn to_config(&self, rate: f64, seed: u64) -> NoiseConfig {
        NoiseConfig {
            rate,
            trajectories: self.trajectories,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    /// Compare against the dense statevector backend when the qubit count
    /// allows it. Disable to run sizes past the dense limit.
    pub enabled: bool,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection { enabled: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Row label in trace files; defaults to "<experiment>-s<seed>".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    /// Master seed. Identical config + seed reproduces every trace row.
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub preparation: PreparationSection,
    #[serde(default)]
    pub vmc: VmcSection,
    #[serde(default = "LearnerSection::fit_defaults")]
    pub fit: LearnerSection,
    #[serde(default)]
    pub learner: LearnerSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub oracle: OracleSection,
    /// Gate list for `run_circuit_file`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circuit_file: Option<PathBuf>,
    /// Initial RBM parameter file for `run_circuit_file`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_state: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn default_for(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            experiment: kind,
            id: None,
            seed: 1,
            output_dir: PathBuf::from(format!("runs/{}", kind.as_str())),
            system: SystemSection::default(),
            preparation: PreparationSection::default(),
            vmc: VmcSection::default(),
            fit: LearnerSection::fit_defaults(),
            learner: LearnerSection::default(),
            sampler: SamplerSection::default(),
            noise: NoiseSection::default(),
            oracle: OracleSection::default(),
            circuit_file: None,
            input_state: None,
        }
    }

    /// Parse a TOML document. Parse errors keep toml's line/column report.
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text)
            .map_err(|e| NqsError::InvalidConfig(format!("config parse failed: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Load from disk, resolving relative file references against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            NqsError::InvalidConfig(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut config = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.output_dir]
            .into_iter()
            .chain(self.circuit_file.as_mut())
            .chain(self.input_state.as_mut())
            .chain(self.preparation.state_file.as_mut())
        {
            if p.is_relative() {
                *p = base.join(&p);
            }
        }
    }

    pub fn experiment_id(&self) -> String {
        self.id
            .clone()
            .unwrap_or_else(|| format!("{}-s{}", self.experiment.as_str(), self.seed))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(id) = &self.id {
            if id.is_empty() || id.contains(',') || id.chars().any(|c| c.is_control()) {
                return Err(NqsError::InvalidConfig(format!(
                    "id {id:?} must be non-empty and free of commas and control characters"
                )));
            }
        }
        self.system.lattice.validate()?;
        self.system.params().validate()?;
        hidden_units_for(self.system.alpha, self.system.n_sites())?;
        self.vmc.to_config(0).validate()?;
        self.fit.to_config(0).validate()?;
        self.learner.to_config(0).validate()?;
        self.sampler.to_config(0).validate()?;
        if !(self.preparation.pin_strength.is_finite() && self.preparation.pin_strength > 0.0) {
            return Err(NqsError::InvalidConfig(format!(
                "preparation.pin_strength must be positive, got {}",
                self.preparation.pin_strength
            )));
        }
        for &rate in &self.noise.rates {
            self.noise.to_config(rate, 0).validate()?;
        }

        match self.experiment {
            ExperimentKind::RunCircuitFile => {
                if self.circuit_file.is_none() {
                    return Err(NqsError::InvalidConfig(
                        "run_circuit_file needs circuit_file".into(),
                    ));
                }
                if self.input_state.is_none() {
                    return Err(NqsError::InvalidConfig(
                        "run_circuit_file needs input_state".into(),
                    ));
                }
            }
            ExperimentKind::NoiseSweep => {
                if self.noise.rates.is_empty() {
                    return Err(NqsError::InvalidConfig(
                        "noise_sweep needs at least one rate".into(),
                    ));
                }
                if !self.oracle.enabled {
                    return Err(NqsError::InvalidConfig(
                        "noise_sweep compares against the dense backend; oracle.enabled \
                         must stay true"
                            .into(),
                    ));
                }
            }
            _ => {}
        }
        if self.preparation.method == PrepMethod::Load && self.preparation.state_file.is_none() {
            return Err(NqsError::InvalidConfig(
                "preparation.method = \"load\" needs preparation.state_file".into(),
            ));
        }
        Ok(())
    }

    /// Existence of every referenced input file; separate from `validate` so
    /// config documents can be checked without touching the filesystem.
    pub fn check_referenced_files(&self) -> Result<()> {
        let mut referenced: Vec<&PathBuf> = Vec::new();
        referenced.extend(self.circuit_file.iter());
        referenced.extend(self.input_state.iter());
        if self.preparation.method == PrepMethod::Load {
            referenced.extend(self.preparation.state_file.iter());
        }
        for path in referenced {
            if !path.is_file() {
                return Err(NqsError::InvalidConfig(format!(
                    "referenced file does not exist: {}",
                    path.display()
                )));
            }
        }
        Ok(())
    }
}

/// Commented template for `init`. Every value shown is the default, so the
/// emitted file and an empty-sections file behave identically.
pub fn template(kind: ExperimentKind) -> String {
    let head = format!(
        "# {kind} experiment\n\
         experiment = \"{kind}\"\n\
         # Master seed; all randomness in the run derives from it.\n\
         seed = 1\n\
         # Every output (trace.csv, summary.json, saved states) lands here.\n\
         output_dir = \"runs/{kind}\"\n"
    );
    let system = "\n\
        [system]\n\
        # Transverse field and Ising coupling of H = -gamma*sum X + j*sum ZZ.\n\
        gamma = 1.0\n\
        j = 1.0\n\
        # Hidden units per site; alpha * sites must be an integer.\n\
        alpha = 1.0\n\
        \n\
        [system.lattice]\n\
        # \"chain_periodic\" (length) or \"square_periodic\" (side).\n\
        kind = \"chain_periodic\"\n\
        length = 12\n";
    let preparation = "\n\
        [preparation]\n\
        # How the initial state is produced:\n\
        #   \"vmc\"          variational energy minimization (default)\n\
        #   \"fit\"          stochastic fit to the exact ground state (dense-limited)\n\
        #   \"load\"         read state_file\n\
        #   \"pinned_zeros\" product state concentrated on |0...0>\n\
        method = \"vmc\"\n\
        # state_file = \"ground_state.json\"\n\
        pin_strength = 4.0\n";
    let vmc = "\n\
        [vmc]\n\
        n_iterations = 4000\n\
        # The step size decays exponentially from learning_rate to\n\
        # final_learning_rate across the run: hot enough to cross the energy\n\
        # valley, settling once it arrives.\n\
        learning_rate = 0.05\n\
        final_learning_rate = 0.005\n\
        adamax_beta1 = 0.9\n\
        adamax_beta2 = 0.999\n\
        init_noise_sigma = 0.01\n\
        # Iterations the energy may stall above the best seen before the run\n\
        # counts as diverged.\n\
        divergence_patience = 25\n";
    let fit = "\n\
        [fit]\n\
        # Budget for preparation.method = \"fit\". Longer and hotter than the\n\
        # gate learner: the last decades of infidelity are a slow crawl, and\n\
        # the overlap check stays off because mid-run estimates saturate on\n\
        # concentrated states.\n\
        n_iterations = 1500\n\
        samples_per_iteration = 4096\n\
        learning_rate = 0.03\n\
        adamax_beta1 = 0.9\n\
        adamax_beta2 = 0.999\n\
        init_noise_sigma = 0.01\n\
        overlap_check_interval = 1000000\n\
        target_infidelity = 0.0002\n\
        max_reinit_attempts = 3\n";
    let learner = "\n\
        [learner]\n\
        # Per-Hadamard stochastic learning budget. Late gates of a long\n\
        # transform are the slow ones (extra hidden units, spread-out\n\
        # states); iterations matter more than batch size there.\n\
        n_iterations = 2000\n\
        samples_per_iteration = 2048\n\
        learning_rate = 0.05\n\
        adamax_beta1 = 0.9\n\
        adamax_beta2 = 0.999\n\
        # Restart jitter when a learning attempt degenerates.\n\
        init_noise_sigma = 0.01\n\
        # Iterations between overlap estimates (early-exit checks).\n\
        overlap_check_interval = 25\n\
        # Stop a gate early once the estimate reaches 1 - target_infidelity.\n\
        target_infidelity = 0.0002\n\
        max_reinit_attempts = 3\n";
    let sampler = "\n\
        [sampler]\n\
        n_chains = 16\n\
        burn_in_sweeps = 100\n\
        sweeps_between_samples = 1\n\
        samples_per_chain = 128\n";
    let noise = "\n\
        [noise]\n\
        # Pauli insertion probability after every gate, one run per rate.\n\
        rates = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2]\n\
        trajectories = 200\n";
    let oracle = "\n\
        [oracle]\n\
        # Dense statevector comparison (exact per-gate overlaps) while the\n\
        # qubit count stays within the dense backend's limit.\n\
        enabled = true\n";
    let circuit_file = "\n\
        # Gate list, one gate per line: H/X/Y/Z q, RZ q phi, CRZ c t phi.\n\
        circuit_file = \"circuit.txt\"\n\
        # Initial state as an RBM parameter file.\n\
        input_state = \"input_state.json\"\n";

    let mut out = head;
    match kind {
        ExperimentKind::HadamardTransform | ExperimentKind::TruncatedFourier => {
            out += system;
            out += preparation;
            out += vmc;
            out += fit;
            out += learner;
            out += sampler;
            out += oracle;
        }
        ExperimentKind::NoiseSweep => {
            out += system;
            out += preparation;
            out += vmc;
            out += fit;
            out += learner;
            out += sampler;
            out += noise;
            out += oracle;
        }
        ExperimentKind::PrepareGroundState => {
            out += system;
            out += preparation;
            out += vmc;
            out += fit;
            out += sampler;
            out += oracle;
        }
        ExperimentKind::RunCircuitFile => {
            out += circuit_file;
            out += learner;
            out += sampler;
            out += oracle;
        }
    }
    out
}
