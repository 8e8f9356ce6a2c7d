//! The five experiment pipelines behind `run`: prepare an initial state,
//! drive the circuit (or the VMC / noise machinery), and emit trace rows
//! plus a summary.
//!
//! Every random stream is a named substream of the config seed, so a rerun
//! of the same file reproduces each trace row byte for byte. Failures that
//! carry a partial trace (learner failures, energy divergence) flush the
//! rows they have and surface through `Summary::aborted`; everything else
//! propagates as a hard error.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nqs::circuit::{
    build_hadamard_transform, build_truncated_fourier, execute_with, Circuit, ExecutionResult,
};
use nqs::groundstate::{
    fit_to_statevector, measure_energy, vmc_ground_state, EnergyPoint, Lattice, TfimParams,
};
use nqs::io::{load_rbm, save_rbm, save_statevector, Provenance};
use nqs::learner::TracePoint;
use nqs::oracle::{ed, expand_rbm, noisy_transform_overlap, overlap_exact, StateVector,
    QUBIT_LIMIT};
use nqs::rbm::{BitString, RbmState};
use nqs::rng::{mix_seed, tag_salt};
use nqs::{NqsError, Result};

use crate::config::{ExperimentConfig, ExperimentKind, PrepMethod};
use crate::output::{
    Summary, TraceWriter, ENERGY_HEADER, FIT_HEADER, NOISE_HEADER, TRACE_HEADER,
};

pub fn run_experiment(config: &ExperimentConfig) -> Result<Summary> {
    config.validate()?;
    config.check_referenced_files()?;
    fs::create_dir_all(&config.output_dir)?;
    let summary = match config.experiment {
        ExperimentKind::HadamardTransform => run_transform(config, false),
        ExperimentKind::TruncatedFourier => run_transform(config, true),
        ExperimentKind::NoiseSweep => run_noise_sweep(config),
        ExperimentKind::PrepareGroundState => run_prepare_ground_state(config),
        ExperimentKind::RunCircuitFile => run_circuit_file(config),
    }?;
    summary.write(&config.output_dir.join("summary.json"))?;
    Ok(summary)
}

/// Whether the dense backend participates in this run.
fn oracle_active(config: &ExperimentConfig, n_qubits: usize) -> bool {
    config.oracle.enabled && n_qubits <= QUBIT_LIMIT
}

/// The initial state for a circuit experiment, per [preparation].
fn prepare_initial_state(config: &ExperimentConfig) -> Result<RbmState> {
    let n = config.system.n_sites();
    match config.preparation.method {
        PrepMethod::Vmc => {
            let vcfg = config
                .vmc
                .to_config(mix_seed(config.seed, &[tag_salt("prep-vmc")]));
            let scfg = config
                .sampler
                .to_config(mix_seed(config.seed, &[tag_salt("prep-vmc-sampler")]));
            let (state, _) = vmc_ground_state(
                &config.system.lattice,
                &config.system.params(),
                config.system.alpha,
                &vcfg,
                &scfg,
            )?;
            Ok(state)
        }
        PrepMethod::Fit => {
            let (_, target) = ed_ground_state(config)?;
            let lcfg = config
                .fit
                .to_config(mix_seed(config.seed, &[tag_salt("prep-fit")]));
            let scfg = config
                .sampler
                .to_config(mix_seed(config.seed, &[tag_salt("prep-fit-sampler")]));
            let (state, _) = fit_to_statevector(&target, config.system.alpha, &lcfg, &scfg)?;
            Ok(state)
        }
        PrepMethod::Load => {
            let path = config.preparation.state_file.as_ref().expect("validated");
            let (state, _) = load_rbm(path)?;
            if state.n_visible() != n {
                return Err(NqsError::DimensionMismatch {
                    what: "loaded initial state qubit count",
                    expected: n,
                    got: state.n_visible(),
                });
            }
            Ok(state)
        }
        PrepMethod::PinnedZeros => {
            RbmState::pinned(&BitString::zeros(n), config.preparation.pin_strength)
        }
    }
}

fn ed_ground_state(config: &ExperimentConfig) -> Result<(f64, StateVector)> {
    let lattice = &config.system.lattice;
    let p = config.system.params();
    let matrix = ed::TfimMatrix::new(lattice.n_sites(), p.gamma, p.j, &lattice.bonds())?;
    matrix.ground_state()
}

/// Exact variational energy <v|H|v> of the expanded (normalized) state. The
/// Hamiltonian is real symmetric, so the cross terms cancel and the energy
/// splits over the real and imaginary parts.
fn exact_variational_energy(
    state: &RbmState,
    lattice: &Lattice,
    p: &TfimParams,
) -> Result<f64> {
    let v = expand_rbm(state)?;
    let matrix = ed::TfimMatrix::new(v.n_qubits(), p.gamma, p.j, &lattice.bonds())?;
    let re: Vec<f64> = v.amplitudes().iter().map(|z| z.re).collect();
    let im: Vec<f64> = v.amplitudes().iter().map(|z| z.im).collect();
    let h_re = matrix.matvec(&re);
    let h_im = matrix.matvec(&im);
    let energy = re
        .iter()
        .zip(&h_re)
        .chain(im.iter().zip(&h_im))
        .map(|(a, b)| a * b)
        .sum();
    Ok(energy)
}

struct CircuitRun {
    result: ExecutionResult,
    final_exact_overlap: Option<f64>,
}

/// Execute a circuit on the NQS backend, streaming one trace row per gate
/// (flushed as produced, so aborts keep the partial trace) and saving the
/// state after every gate. When the oracle participates, an exact
/// statevector runs alongside and each row gets its dense overlap.
fn run_circuit(
    config: &ExperimentConfig,
    initial: &RbmState,
    circuit: &Circuit,
    trace: &mut TraceWriter,
) -> Result<CircuitRun> {
    let experiment_id = config.experiment_id();
    let states_dir = config.output_dir.join("states");
    fs::create_dir_all(&states_dir)?;

    let mut ideal = if oracle_active(config, circuit.n_qubits()) {
        Some(expand_rbm(initial)?)
    } else {
        None
    };

    let lcfg = config
        .learner
        .to_config(mix_seed(config.seed, &[tag_salt("circuit-learner")]));
    let scfg = config
        .sampler
        .to_config(mix_seed(config.seed, &[tag_salt("circuit-sampler")]));

    let mut row_error: Option<NqsError> = None;
    let mut gate_index = 0usize;
    let result = execute_with(circuit, initial, &lcfg, &scfg, &mut |record, state| {
        if row_error.is_some() {
            return;
        }
        let step = (|| -> Result<()> {
            let exact = match ideal.as_mut() {
                Some(v) => {
                    v.apply_gate(&record.gate)?;
                    Some(overlap_exact(v, &expand_rbm(state)?)?)
                }
                None => None,
            };
            trace.gate_row(&experiment_id, gate_index, record, exact, config.seed)?;
            save_rbm(
                &states_dir.join(format!("gate_{gate_index:03}.json")),
                state,
                None,
            )
        })();
        if let Err(e) = step {
            row_error = Some(e);
        }
        gate_index += 1;
    })?;
    if let Some(e) = row_error {
        return Err(e);
    }

    let final_exact_overlap = match &ideal {
        Some(v) => Some(overlap_exact(v, &expand_rbm(&result.state)?)?),
        None => None,
    };
    save_rbm(
        &config.output_dir.join("state_final.json"),
        &result.state,
        None,
    )?;
    Ok(CircuitRun {
        result,
        final_exact_overlap,
    })
}

fn circuit_summary(config: &ExperimentConfig, initial: &RbmState, run: &CircuitRun) -> Summary {
    let mut summary = Summary::new(
        config.experiment.as_str(),
        &config.experiment_id(),
        config.seed,
        initial.n_visible(),
    );
    let records = &run.result.trace.records;
    summary.total_gates = Some(records.len());
    summary.learned_gates = Some(
        records
            .iter()
            .filter(|r| r.overlap_estimate.is_some())
            .count(),
    );
    summary.hidden_units_initial = Some(initial.n_hidden());
    summary.hidden_units_final = Some(run.result.state.n_hidden());
    summary.overlap_product = Some(run.result.trace.overlap_product());
    summary.min_gate_overlap = records
        .iter()
        .filter_map(|r| r.overlap_estimate)
        .fold(None, |acc: Option<f64>, o| {
            Some(acc.map_or(o, |a| a.min(o)))
        });
    summary.final_exact_overlap = run.final_exact_overlap;
    summary.gate_wall_times_s = Some(records.iter().map(|r| r.wall_time_s).collect());
    summary.output_state_file = Some("state_final.json".into());
    summary.aborted = run
        .result
        .trace
        .aborted
        .as_ref()
        .map(|a| format!("gate {}: {}", a.gate_index, a.reason));
    summary
}

fn run_transform(config: &ExperimentConfig, fourier: bool) -> Result<Summary> {
    let started = Instant::now();
    let n = config.system.n_sites();
    let initial = prepare_initial_state(config)?;
    let circuit = if fourier {
        build_truncated_fourier(n)?
    } else {
        build_hadamard_transform(n)?
    };
    let mut trace = TraceWriter::create(&config.output_dir.join("trace.csv"), TRACE_HEADER)?;
    let run = run_circuit(config, &initial, &circuit, &mut trace)?;
    let mut summary = circuit_summary(config, &initial, &run);
    summary.wall_time_s = started.elapsed().as_secs_f64();
    Ok(summary)
}

fn run_noise_sweep(config: &ExperimentConfig) -> Result<Summary> {
    let started = Instant::now();
    let n = config.system.n_sites();
    if !oracle_active(config, n) {
        return Err(NqsError::QubitLimit {
            requested: n,
            limit: QUBIT_LIMIT,
        });
    }
    let initial = prepare_initial_state(config)?;
    let initial_vec = expand_rbm(&initial)?;
    let circuit = build_hadamard_transform(n)?;

    // The learned run first: its final overlap is the quantity the noise
    // curve is read against.
    let mut trace = TraceWriter::create(&config.output_dir.join("trace.csv"), TRACE_HEADER)?;
    let run = run_circuit(config, &initial, &circuit, &mut trace)?;
    let mut summary = circuit_summary(config, &initial, &run);

    let mut noise_trace =
        TraceWriter::create(&config.output_dir.join("noise.csv"), NOISE_HEADER)?;
    let experiment_id = config.experiment_id();
    let mut results: Vec<(f64, f64)> = Vec::new();
    for (index, &rate) in config.noise.rates.iter().enumerate() {
        let ncfg = config.noise.to_config(
            rate,
            mix_seed(config.seed, &[tag_salt("noise-rate"), index as u64]),
        );
        let (mean, std_error) = noisy_transform_overlap(&initial_vec, &circuit, &ncfg)?;
        noise_trace.row(&[
            experiment_id.clone(),
            index.to_string(),
            rate.to_string(),
            mean.to_string(),
            std_error.to_string(),
            ncfg.trajectories.to_string(),
            config.seed.to_string(),
        ])?;
        results.push((mean, std_error));
    }

    summary.noise_rates = Some(config.noise.rates.clone());
    summary.noisy_overlaps = Some(results.clone());
    if let (Some(nqs_overlap), None) = (summary.final_exact_overlap, &summary.aborted) {
        let mut by_rate: Vec<(f64, f64)> = config
            .noise
            .rates
            .iter()
            .zip(&results)
            .map(|(&r, &(mean, _))| (r, mean))
            .collect();
        by_rate.sort_by(|a, b| a.0.total_cmp(&b.0));
        let below = by_rate
            .iter()
            .filter(|&&(_, mean)| mean >= nqs_overlap)
            .next_back();
        let above = by_rate.iter().find(|&&(_, mean)| mean <= nqs_overlap);
        if let (Some(&(lo, _)), Some(&(hi, _))) = (below, above) {
            summary.effective_rate_bracket = Some((lo, hi));
        }
    }
    summary.wall_time_s = started.elapsed().as_secs_f64();
    Ok(summary)
}

fn run_prepare_ground_state(config: &ExperimentConfig) -> Result<Summary> {
    let started = Instant::now();
    let n = config.system.n_sites();
    let lattice = &config.system.lattice;
    let p = config.system.params();
    let experiment_id = config.experiment_id();
    let mut summary = Summary::new(
        config.experiment.as_str(),
        &experiment_id,
        config.seed,
        n,
    );

    let state = match config.preparation.method {
        PrepMethod::Vmc => {
            let mut trace =
                TraceWriter::create(&config.output_dir.join("trace.csv"), ENERGY_HEADER)?;
            let vcfg = config
                .vmc
                .to_config(mix_seed(config.seed, &[tag_salt("prep-vmc")]));
            let scfg = config
                .sampler
                .to_config(mix_seed(config.seed, &[tag_salt("prep-vmc-sampler")]));
            let write_rows = |trace: &mut TraceWriter, points: &[EnergyPoint]| -> Result<()> {
                for pt in points {
                    trace.row(&[
                        experiment_id.clone(),
                        pt.iteration.to_string(),
                        pt.energy.to_string(),
                        pt.energy_std_err.to_string(),
                        config.seed.to_string(),
                    ])?;
                }
                Ok(())
            };
            match vmc_ground_state(lattice, &p, config.system.alpha, &vcfg, &scfg) {
                Ok((state, points)) => {
                    write_rows(&mut trace, &points)?;
                    state
                }
                Err(NqsError::EnergyDiverged { iteration, trace: points }) => {
                    write_rows(&mut trace, &points)?;
                    summary.aborted =
                        Some(format!("energy diverged at iteration {iteration}"));
                    summary.wall_time_s = started.elapsed().as_secs_f64();
                    return Ok(summary);
                }
                Err(other) => return Err(other),
            }
        }
        PrepMethod::Fit => {
            let mut trace =
                TraceWriter::create(&config.output_dir.join("trace.csv"), FIT_HEADER)?;
            let (reference_energy, target) = ed_ground_state(config)?;
            summary.reference_energy = Some(reference_energy);
            let lcfg = config
                .fit
                .to_config(mix_seed(config.seed, &[tag_salt("prep-fit")]));
            let scfg = config
                .sampler
                .to_config(mix_seed(config.seed, &[tag_salt("prep-fit-sampler")]));
            let write_rows = |trace: &mut TraceWriter, points: &[TracePoint]| -> Result<()> {
                for pt in points {
                    trace.row(&[
                        experiment_id.clone(),
                        pt.iteration.to_string(),
                        pt.overlap.to_string(),
                        pt.overlap_std_err.to_string(),
                        config.seed.to_string(),
                    ])?;
                }
                Ok(())
            };
            match fit_to_statevector(&target, config.system.alpha, &lcfg, &scfg) {
                Ok((state, report)) => {
                    write_rows(&mut trace, &report.overlap_trace)?;
                    state
                }
                Err(NqsError::LearnerFailed {
                    restarts,
                    best_overlap,
                    trace: points,
                }) => {
                    write_rows(&mut trace, &points)?;
                    summary.aborted = Some(format!(
                        "fit failed after {restarts} restarts (best overlap {best_overlap:.6})"
                    ));
                    summary.wall_time_s = started.elapsed().as_secs_f64();
                    return Ok(summary);
                }
                Err(other) => return Err(other),
            }
        }
        PrepMethod::Load | PrepMethod::PinnedZeros => {
            return Err(NqsError::InvalidConfig(
                "prepare_ground_state needs preparation.method \"vmc\" or \"fit\"".into(),
            ));
        }
    };

    // An independent sampled estimate with its own substream, then the
    // dense cross-checks when the size allows them.
    let mcfg = config
        .sampler
        .to_config(mix_seed(config.seed, &[tag_salt("final-energy")]));
    let (energy, std_err) = measure_energy(&state, lattice, &p, &mcfg)?;
    summary.energy_estimate = Some(energy);
    summary.energy_std_err = Some(std_err);

    let mut provenance_energy = energy;
    if oracle_active(config, n) {
        let variational = exact_variational_energy(&state, lattice, &p)?;
        summary.variational_energy = Some(variational);
        provenance_energy = variational;
        let (reference, _) = match summary.reference_energy {
            Some(e) => (e, ()),
            None => (ed_ground_state(config)?.0, ()),
        };
        summary.reference_energy = Some(reference);
        summary.relative_energy_error =
            Some((variational - reference).abs() / reference.abs());
    }

    let state_file = config.output_dir.join("ground_state.json");
    save_rbm(
        &state_file,
        &state,
        Some(&Provenance {
            lattice: *lattice,
            params: p,
            alpha: config.system.alpha,
            seed: config.seed,
            final_energy: provenance_energy,
        }),
    )?;
    summary.output_state_file = Some("ground_state.json".into());
    summary.wall_time_s = started.elapsed().as_secs_f64();
    Ok(summary)
}

/// Parse circuit text, tolerating a gate-free file by taking the qubit
/// count from the input state (the text format itself cannot express an
/// empty circuit).
fn parse_circuit_for_state(text: &str, state: &RbmState) -> Result<Circuit> {
    let has_gates = text
        .lines()
        .any(|l| !l.split('#').next().unwrap_or("").trim().is_empty());
    if has_gates {
        Circuit::parse(text)
    } else {
        Circuit::new(state.n_visible(), Vec::new())
    }
}

fn run_circuit_file(config: &ExperimentConfig) -> Result<Summary> {
    let started = Instant::now();
    let circuit_path = config.circuit_file.as_ref().expect("validated");
    let state_path = config.input_state.as_ref().expect("validated");
    let (initial, _) = load_rbm(state_path)?;
    let text = fs::read_to_string(circuit_path)?;
    let circuit = parse_circuit_for_state(&text, &initial)?;
    if circuit.n_qubits() != initial.n_visible() {
        return Err(NqsError::DimensionMismatch {
            what: "circuit qubit count",
            expected: initial.n_visible(),
            got: circuit.n_qubits(),
        });
    }
    let mut trace = TraceWriter::create(&config.output_dir.join("trace.csv"), TRACE_HEADER)?;
    let run = run_circuit(config, &initial, &circuit, &mut trace)?;
    let mut summary = circuit_summary(config, &initial, &run);
    summary.wall_time_s = started.elapsed().as_secs_f64();
    Ok(summary)
}

/// Expand an RBM parameter file to a statevector dump (dense-limited).
pub fn expand_state_file(state_path: &Path, out_path: &Path) -> Result<usize> {
    let (state, _) = load_rbm(state_path)?;
    let vector = expand_rbm(&state)?;
    save_statevector(out_path, &vector)?;
    Ok(vector.n_qubits())
}

/// Parse and describe a circuit file without running it. Returns a short
/// human-readable report.
pub fn check_circuit_file(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path)?;
    let has_gates = text
        .lines()
        .any(|l| !l.split('#').next().unwrap_or("").trim().is_empty());
    if !has_gates {
        return Ok("empty circuit: qubit count is taken from the input state at run time"
            .to_string());
    }
    let circuit = Circuit::parse(&text)?;
    let mut counts: std::collections::BTreeMap<&'static str, usize> =
        std::collections::BTreeMap::new();
    for gate in circuit.gates() {
        *counts.entry(gate.kind()).or_insert(0) += 1;
    }
    let breakdown = counts
        .iter()
        .map(|(kind, count)| format!("{kind} x{count}"))
        .collect::<Vec<_>>()
        .join(", ");
    let hadamards = counts.get("H").copied().unwrap_or(0);
    Ok(format!(
        "{} qubits, {} gates ({breakdown}); {} learned, {} exact",
        circuit.n_qubits(),
        circuit.len(),
        hadamards,
        circuit.len() - hadamards,
    ))
}

/// Output paths a run produces, for callers that want to read them back.
pub fn run_paths(config: &ExperimentConfig) -> (PathBuf, PathBuf) {
    (
        config.output_dir.join("trace.csv"),
        config.output_dir.join("summary.json"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SystemSection;
    use nqs::oracle::overlap_exact;

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("nqs-cli-exp-{tag}"));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn tiny_config(kind: ExperimentKind, dir: &Path) -> ExperimentConfig {
        let mut config = ExperimentConfig::default_for(kind);
        config.seed = 11;
        config.output_dir = dir.join("out");
        config.system = SystemSection {
            lattice: Lattice::ChainPeriodic { length: 2 },
            gamma: 1.0,
            j: 1.0,
            alpha: 1.0,
        };
        config.vmc.n_iterations = 300;
        config.vmc.learning_rate = 0.02;
        config.vmc.final_learning_rate = None;
        config.learner.n_iterations = 200;
        config.noise.rates = vec![0.05, 0.5];
        config.noise.trajectories = 40;
        config
    }

    #[test]
    fn prepare_ground_state_hits_the_two_site_closed_form() {
        let dir = temp_dir("prep2");
        let config = tiny_config(ExperimentKind::PrepareGroundState, &dir);
        let summary = run_experiment(&config).unwrap();
        assert!(summary.aborted.is_none());
        let exact = -(5.0_f64).sqrt();
        let energy = summary.variational_energy.unwrap();
        assert!(
            (energy - exact).abs() / exact.abs() < 5e-3,
            "variational energy {energy} vs {exact}"
        );
        assert!(summary.relative_energy_error.unwrap() < 5e-3);
        assert!((summary.reference_energy.unwrap() - exact).abs() < 1e-9);

        // Rows parse and carry the configured id and seed.
        let trace = fs::read_to_string(dir.join("out/trace.csv")).unwrap();
        let mut lines = trace.lines();
        assert_eq!(lines.next().unwrap(), ENERGY_HEADER);
        let first = lines.next().unwrap();
        assert!(first.starts_with("prepare_ground_state-s11,0,"));
        assert!(first.ends_with(",11"));
        assert_eq!(trace.lines().count(), 1 + config.vmc.n_iterations);

        // The saved state reloads with its provenance.
        let (state, prov) = load_rbm(&dir.join("out/ground_state.json")).unwrap();
        assert_eq!(state.n_visible(), 2);
        let prov = prov.unwrap();
        assert_eq!(prov.seed, 11);
        assert!((prov.final_energy - energy).abs() < 1e-12);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn fit_preparation_reports_overlap_rows() {
        let dir = temp_dir("prepfit");
        let mut config = tiny_config(ExperimentKind::PrepareGroundState, &dir);
        config.preparation.method = PrepMethod::Fit;
        config.fit.n_iterations = 400;
        config.fit.learning_rate = 0.05;
        config.fit.samples_per_iteration = 1024;
        let summary = run_experiment(&config).unwrap();
        assert!(summary.aborted.is_none());
        assert!(summary.relative_energy_error.unwrap() < 2e-2);
        let trace = fs::read_to_string(dir.join("out/trace.csv")).unwrap();
        assert_eq!(trace.lines().next().unwrap(), FIT_HEADER);
        assert!(trace.lines().count() > 1);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn run_circuit_file_on_an_empty_circuit_reproduces_the_input_file() {
        let dir = temp_dir("empty");
        let input = dir.join("input_state.json");
        let mut rng = nqs::rng::derive_rng(5, &[0]);
        let state = RbmState::random(3, 3, 0.4, &mut rng).unwrap();
        save_rbm(&input, &state, None).unwrap();
        let circuit_path = dir.join("circuit.txt");
        fs::write(&circuit_path, "# no gates here\n\n").unwrap();

        let mut config = tiny_config(ExperimentKind::RunCircuitFile, &dir);
        config.circuit_file = Some(circuit_path);
        config.input_state = Some(input.clone());
        let summary = run_experiment(&config).unwrap();
        assert_eq!(summary.total_gates, Some(0));
        assert_eq!(summary.final_exact_overlap, Some(1.0));

        let before = fs::read_to_string(&input).unwrap();
        let after = fs::read_to_string(dir.join("out/state_final.json")).unwrap();
        assert_eq!(before, after);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn run_circuit_file_applies_exact_gates_against_the_oracle() {
        let dir = temp_dir("exactcirc");
        let input = dir.join("in.json");
        let mut rng = nqs::rng::derive_rng(7, &[0]);
        let state = RbmState::random(3, 3, 0.4, &mut rng).unwrap();
        save_rbm(&input, &state, None).unwrap();
        let circuit_path = dir.join("circuit.txt");
        fs::write(&circuit_path, "X 0\nRZ 1 0.7\nCRZ 0 2 -1.2\nZ 1\n").unwrap();

        let mut config = tiny_config(ExperimentKind::RunCircuitFile, &dir);
        config.circuit_file = Some(circuit_path);
        config.input_state = Some(input);
        let summary = run_experiment(&config).unwrap();
        assert!(summary.aborted.is_none());
        assert_eq!(summary.total_gates, Some(4));
        assert_eq!(summary.learned_gates, Some(0));
        assert!(summary.final_exact_overlap.unwrap() > 1.0 - 1e-10);
        // CRZ adds its dedicated hidden unit.
        assert_eq!(summary.hidden_units_initial, Some(3));
        assert_eq!(summary.hidden_units_final, Some(4));

        // Per-gate states are saved and the last one matches state_final.
        let last = fs::read_to_string(dir.join("out/states/gate_003.json")).unwrap();
        let final_text = fs::read_to_string(dir.join("out/state_final.json")).unwrap();
        assert_eq!(last, final_text);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn two_site_transform_runs_end_to_end_with_oracle_rows() {
        let dir = temp_dir("ht2");
        let config = tiny_config(ExperimentKind::HadamardTransform, &dir);
        let summary = run_experiment(&config).unwrap();
        assert!(summary.aborted.is_none());
        assert_eq!(summary.total_gates, Some(2));
        assert_eq!(summary.learned_gates, Some(2));
        let final_overlap = summary.final_exact_overlap.unwrap();
        assert!(final_overlap > 0.98, "final overlap {final_overlap}");
        assert!(summary.min_gate_overlap.unwrap() > 0.9);
        let trace = fs::read_to_string(dir.join("out/trace.csv")).unwrap();
        let lines: Vec<&str> = trace.lines().collect();
        assert_eq!(lines.len(), 3);
        // Learned rows populate estimate, error, and the dense overlap.
        for line in &lines[1..] {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 8);
            assert_eq!(fields[2], "H");
            assert!(!fields[3].is_empty() && !fields[4].is_empty() && !fields[5].is_empty());
        }
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn noise_sweep_orders_rates_and_brackets_the_learned_overlap() {
        let dir = temp_dir("noise2");
        let config = tiny_config(ExperimentKind::NoiseSweep, &dir);
        let summary = run_experiment(&config).unwrap();
        assert!(summary.aborted.is_none());
        let overlaps = summary.noisy_overlaps.clone().unwrap();
        assert_eq!(overlaps.len(), 2);
        assert!(
            overlaps[0].0 >= overlaps[1].0 - 3.0 * (overlaps[0].1 + overlaps[1].1),
            "noise means not ordered: {overlaps:?}"
        );
        let noise = fs::read_to_string(dir.join("out/noise.csv")).unwrap();
        assert_eq!(noise.lines().next().unwrap(), NOISE_HEADER);
        assert_eq!(noise.lines().count(), 3);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn reruns_reproduce_trace_bytes_and_reseeds_change_them() {
        let dir = temp_dir("repro");
        let mut config = tiny_config(ExperimentKind::HadamardTransform, &dir);
        config.output_dir = dir.join("a");
        run_experiment(&config).unwrap();
        let first = fs::read(dir.join("a/trace.csv")).unwrap();

        config.output_dir = dir.join("b");
        run_experiment(&config).unwrap();
        let second = fs::read(dir.join("b/trace.csv")).unwrap();
        assert_eq!(first, second);

        config.output_dir = dir.join("c");
        config.seed = 12;
        run_experiment(&config).unwrap();
        let third = fs::read(dir.join("c/trace.csv")).unwrap();
        assert_ne!(first, third);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn oracle_can_be_disabled_leaving_exact_columns_empty() {
        let dir = temp_dir("nooracle");
        let mut config = tiny_config(ExperimentKind::HadamardTransform, &dir);
        config.oracle.enabled = false;
        let summary = run_experiment(&config).unwrap();
        assert_eq!(summary.final_exact_overlap, None);
        let trace = fs::read_to_string(dir.join("out/trace.csv")).unwrap();
        for line in trace.lines().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            assert!(fields[5].is_empty(), "exact column should be empty: {line}");
        }
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn loaded_initial_state_must_match_the_lattice() {
        let dir = temp_dir("loadmismatch");
        let state_path = dir.join("gs.json");
        save_rbm(&state_path, &RbmState::zeros(3, 3).unwrap(), None).unwrap();
        let mut config = tiny_config(ExperimentKind::HadamardTransform, &dir);
        config.preparation.method = PrepMethod::Load;
        config.preparation.state_file = Some(state_path);
        let err = run_experiment(&config).unwrap_err();
        assert!(matches!(err, NqsError::DimensionMismatch { .. }));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn expand_subcommand_writes_a_loadable_statevector() {
        let dir = temp_dir("expand");
        let state_path = dir.join("s.json");
        let mut rng = nqs::rng::derive_rng(9, &[0]);
        let state = RbmState::random(4, 4, 0.4, &mut rng).unwrap();
        save_rbm(&state_path, &state, None).unwrap();
        let out = dir.join("s.nqsvec");
        let n = expand_state_file(&state_path, &out).unwrap();
        assert_eq!(n, 4);
        let vector = nqs::io::load_statevector(&out).unwrap();
        let direct = expand_rbm(&state).unwrap();
        assert!(overlap_exact(&vector, &direct).unwrap() > 1.0 - 1e-12);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn circuit_check_reports_composition() {
        let dir = temp_dir("check");
        let path = dir.join("c.txt");
        fs::write(&path, "H 0\nCRZ 0 1 0.5\nH 1\n# done\n").unwrap();
        let report = check_circuit_file(&path).unwrap();
        assert!(report.contains("2 qubits"), "{report}");
        assert!(report.contains("3 gates"), "{report}");
        assert!(report.contains("2 learned"), "{report}");
        fs::write(&path, "# empty\n").unwrap();
        let report = check_circuit_file(&path).unwrap();
        assert!(report.contains("empty circuit"), "{report}");
        fs::remove_dir_all(&dir).unwrap();
    }
}
