//! Circuit representation, standard circuit builders, a plain text format,
//! and the execution engine that applies exact gates directly and Hadamards
//! through the stochastic learner.

use std::fmt;
use std::time::Instant;

use crate::error::{NqsError, Result};
use crate::gates::{apply_exact, GateOp};
use crate::learner::{
    estimate_overlap, learn_hadamard, scfg_with_total_samples, LearnerConfig,
};
use crate::rbm::RbmState;
use crate::rng::{mix_seed, tag_salt};
use crate::sampler::SamplerConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<GateOp>,
}

impl Circuit {
    pub fn new(n_qubits: usize, gates: Vec<GateOp>) -> Result<Self> {
        if n_qubits == 0 {
            return Err(NqsError::InvalidConfig(
                "circuit needs at least one qubit".into(),
            ));
        }
        for gate in &gates {
            gate.validate(n_qubits)?;
        }
        Ok(Circuit { n_qubits, gates })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[GateOp] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Parse the one-gate-per-line text form. `#` starts a comment. The
    /// qubit count is inferred as the highest index used plus one, so an
    /// empty circuit cannot be expressed in text.
    pub fn parse(text: &str) -> Result<Self> {
        let mut gates = Vec::new();
        for (line_index, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            gates.push(parse_gate_line(line, line_index + 1)?);
        }
        if gates.is_empty() {
            return Err(NqsError::CircuitParse {
                line: 0,
                msg: "no gates; qubit count cannot be inferred".into(),
            });
        }
        let n_qubits = gates
            .iter()
            .map(|g| {
                let (a, b) = g.qubits();
                b.map_or(a, |b| a.max(b))
            })
            .max()
            .unwrap()
            + 1;
        Circuit::new(n_qubits, gates)
    }
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for gate in &self.gates {
            writeln!(f, "{gate}")?;
        }
        Ok(())
    }
}

fn parse_gate_line(line: &str, line_no: usize) -> Result<GateOp> {
    let err = |msg: String| NqsError::CircuitParse { line: line_no, msg };
    let mut parts = line.split_whitespace();
    let kind = parts.next().expect("line is non-empty");
    let rest: Vec<&str> = parts.collect();

    let parse_qubit = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| err(format!("bad qubit index '{s}'")))
    };
    let parse_angle = |s: &str| -> Result<f64> {
        let phi: f64 = s
            .parse()
            .map_err(|_| err(format!("bad angle '{s}'")))?;
        if !phi.is_finite() {
            return Err(err(format!("angle '{s}' is not finite")));
        }
        Ok(phi)
    };
    let arity = |want: usize| -> Result<()> {
        if rest.len() == want {
            Ok(())
        } else {
            Err(err(format!(
                "{kind} expects {want} arguments, got {}",
                rest.len()
            )))
        }
    };

    match kind.to_ascii_uppercase().as_str() {
        "H" => {
            arity(1)?;
            Ok(GateOp::H {
                qubit: parse_qubit(rest[0])?,
            })
        }
        "X" => {
            arity(1)?;
            Ok(GateOp::X {
                qubit: parse_qubit(rest[0])?,
            })
        }
        "Y" => {
            arity(1)?;
            Ok(GateOp::Y {
                qubit: parse_qubit(rest[0])?,
            })
        }
        "Z" => {
            arity(1)?;
            Ok(GateOp::Z {
                qubit: parse_qubit(rest[0])?,
            })
        }
        "RZ" => {
            arity(2)?;
            Ok(GateOp::Rz {
                qubit: parse_qubit(rest[0])?,
                phi: parse_angle(rest[1])?,
            })
        }
        "CRZ" => {
            arity(3)?;
            let control = parse_qubit(rest[0])?;
            let target = parse_qubit(rest[1])?;
            if control == target {
                return Err(err(format!("CRZ qubits must differ, got {control} twice")));
            }
            Ok(GateOp::Crz {
                control,
                target,
                phi: parse_angle(rest[2])?,
            })
        }
        other => Err(err(format!("unknown gate '{other}'"))),
    }
}

/// H on every qubit in ascending order.
pub fn build_hadamard_transform(n_qubits: usize) -> Result<Circuit> {
    Circuit::new(
        n_qubits,
        (0..n_qubits).map(|qubit| GateOp::H { qubit }).collect(),
    )
}

/// Fourier transform truncated to nearest and next-nearest controlled
/// rotations: for each qubit i in order, H_i, then CRZ(pi/2) on (i, i+1) and
/// CRZ(pi/4) on (i, i+2) where those neighbors exist. No terminal swaps.
pub fn build_truncated_fourier(n_qubits: usize) -> Result<Circuit> {
    let mut gates = Vec::new();
    for i in 0..n_qubits {
        gates.push(GateOp::H { qubit: i });
        if i + 1 < n_qubits {
            gates.push(GateOp::Crz {
                control: i,
                target: i + 1,
                phi: std::f64::consts::FRAC_PI_2,
            });
        }
        if i + 2 < n_qubits {
            gates.push(GateOp::Crz {
                control: i,
                target: i + 2,
                phi: std::f64::consts::FRAC_PI_4,
            });
        }
    }
    Circuit::new(n_qubits, gates)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateMethod {
    Exact,
    Learned,
}

impl GateMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            GateMethod::Exact => "exact",
            GateMethod::Learned => "learned",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateRecord {
    pub gate: GateOp,
    pub method: GateMethod,
    /// Independent post-learning overlap measurement (learned gates only).
    pub overlap_estimate: Option<f64>,
    pub overlap_std_error: Option<f64>,
    pub learner_iterations: Option<usize>,
    pub wall_time_s: f64,
    pub hidden_units_after: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbortedExecution {
    pub gate_index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExecutionTrace {
    pub records: Vec<GateRecord>,
    pub aborted: Option<AbortedExecution>,
}

impl ExecutionTrace {
    /// Product of learned-gate overlap estimates, each capped at 1.
    pub fn overlap_product(&self) -> f64 {
        self.records
            .iter()
            .filter_map(|r| r.overlap_estimate)
            .map(|o| o.min(1.0))
            .product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionResult {
    pub state: RbmState,
    pub trace: ExecutionTrace,
}

pub fn execute(
    circuit: &Circuit,
    state: &RbmState,
    lcfg: &LearnerConfig,
    scfg: &SamplerConfig,
) -> Result<ExecutionResult> {
    execute_with(circuit, state, lcfg, scfg, &mut |_, _| {})
}

/// Execute with a per-gate observer, called after each record is finished
/// with the record and the state the gate produced. Gates run strictly in
/// order. A learner failure stops execution and is reported in
/// `trace.aborted` together with the last good state; config and dimension
/// errors abort with a hard error instead.
pub fn execute_with(
    circuit: &Circuit,
    state: &RbmState,
    lcfg: &LearnerConfig,
    scfg: &SamplerConfig,
    observer: &mut dyn FnMut(&GateRecord, &RbmState),
) -> Result<ExecutionResult> {
    if circuit.n_qubits() != state.n_visible() {
        return Err(NqsError::DimensionMismatch {
            what: "circuit qubit count",
            expected: state.n_visible(),
            got: circuit.n_qubits(),
        });
    }
    lcfg.validate()?;
    scfg.validate()?;

    let mut current = state.clone();
    let mut trace = ExecutionTrace::default();

    for (index, gate) in circuit.gates().iter().enumerate() {
        let started = Instant::now();
        let record = match *gate {
            GateOp::H { qubit } => {
                let mut gate_lcfg = lcfg.clone();
                gate_lcfg.seed = mix_seed(lcfg.seed, &[tag_salt("circuit-gate"), index as u64]);
                match learn_hadamard(&current, qubit, &gate_lcfg, scfg) {
                    Ok((learned, report)) => {
                        // Selecting the best-seen iterate makes its own
                        // overlap estimate optimistic, so measure once more
                        // with fresh samples before recording.
                        let mut measure_cfg = scfg_with_total_samples(
                            scfg,
                            4 * gate_lcfg.samples_per_iteration,
                        );
                        measure_cfg.seed =
                            mix_seed(lcfg.seed, &[tag_salt("gate-measure"), index as u64]);
                        let (est, se) = estimate_overlap(&learned, (&current, qubit), &measure_cfg)?;
                        current = learned;
                        GateRecord {
                            gate: *gate,
                            method: GateMethod::Learned,
                            overlap_estimate: Some(est),
                            overlap_std_error: Some(se),
                            learner_iterations: Some(report.iterations_run),
                            wall_time_s: started.elapsed().as_secs_f64(),
                            hidden_units_after: current.n_hidden(),
                        }
                    }
                    Err(NqsError::LearnerFailed {
                        restarts,
                        best_overlap,
                        ..
                    }) => {
                        trace.aborted = Some(AbortedExecution {
                            gate_index: index,
                            reason: format!(
                                "hadamard learner failed after {restarts} restarts \
                                 (best overlap {best_overlap:.6})"
                            ),
                        });
                        break;
                    }
                    Err(other) => return Err(other),
                }
            }
            exact => {
                current = apply_exact(&current, &exact)?;
                GateRecord {
                    gate: *gate,
                    method: GateMethod::Exact,
                    overlap_estimate: None,
                    overlap_std_error: None,
                    learner_iterations: None,
                    wall_time_s: started.elapsed().as_secs_f64(),
                    hidden_units_after: current.n_hidden(),
                }
            }
        };
        observer(&record, &current);
        trace.records.push(record);
    }

    Ok(ExecutionResult {
        state: current,
        trace,
    })
}
