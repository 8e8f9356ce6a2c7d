//! Result files: delimited trace rows, written and flushed as they happen
//! so an aborted run keeps its partial trace, plus a JSON summary.
//!
//! Trace rows carry only deterministic values; identical config + seed must
//! reproduce them byte for byte. Wall-clock times therefore live in the
//! summary, never in rows. Floats are formatted with the shortest
//! round-trip representation, so equal bits give equal bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use nqs::circuit::GateRecord;
use nqs::Result;

/// One gate row. `overlap_estimate`/`std_error` are empty for exact gates,
/// `exact_overlap` is empty when the dense comparison is off or out of
/// range.
pub const TRACE_HEADER: &str =
    "experiment_id,gate_index,gate_kind,overlap_estimate,std_error,exact_overlap,hidden_units,seed";

/// One VMC iteration row for ground-state preparation.
pub const ENERGY_HEADER: &str = "experiment_id,iteration,energy,energy_std_err,seed";

/// One iteration row for a direct fit to an exact target.
pub const FIT_HEADER: &str = "experiment_id,iteration,overlap_estimate,std_error,seed";

/// One noise rate row.
pub const NOISE_HEADER: &str =
    "experiment_id,rate_index,rate,mean_overlap,std_error,trajectories,seed";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Line-buffered delimited writer; every row is flushed to disk.
pub struct TraceWriter {
    path: PathBuf,
    file: BufWriter<File>,
}

impl TraceWriter {
    pub fn create(path: &Path, header: &str) -> Result<Self> {
        let mut file = BufWriter::new(File::create(path)?);
        writeln!(file, "{header}")?;
        file.flush()?;
        Ok(TraceWriter {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        writeln!(self.file, "{}", fields.join(","))?;
        self.file.flush()?;
        Ok(())
    }

    pub fn gate_row(
        &mut self,
        experiment_id: &str,
        gate_index: usize,
        record: &GateRecord,
        exact_overlap: Option<f64>,
        seed: u64,
    ) -> Result<()> {
        self.row(&[
            experiment_id.to_string(),
            gate_index.to_string(),
            record.gate.kind().to_string(),
            fmt_opt(record.overlap_estimate),
            fmt_opt(record.overlap_std_error),
            fmt_opt(exact_overlap),
            record.hidden_units_after.to_string(),
            seed.to_string(),
        ])
    }
}

/// Everything the run learned, in one JSON document. Wall times and other
/// non-reproducible observations belong here. Fields that do not apply to
/// the experiment are omitted.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Summary {
    pub experiment: String,
    pub experiment_id: String,
    pub seed: u64,
    pub n_qubits: usize,
    pub wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,

    // Circuit transforms.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_gates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learned_gates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_units_initial: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_units_final: Option<usize>,
    /// Product of learned-gate overlap estimates, each capped at 1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap_product: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_gate_overlap: Option<f64>,
    /// Dense-backend overlap between the final learned state and the exact
    /// circuit output.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_exact_overlap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gate_wall_times_s: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_state_file: Option<String>,

    // Ground-state preparation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_std_err: Option<f64>,
    /// Exact variational energy of the prepared state (dense-limited).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variational_energy: Option<f64>,
    /// Exactly diagonalized ground-state energy (dense-limited).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_energy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_energy_error: Option<f64>,

    // Noise sweep.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_rates: Option<Vec<f64>>,
    /// Per rate: (trajectory-mean overlap, standard error).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noisy_overlaps: Option<Vec<(f64, f64)>>,
    /// Noise rates whose mean overlaps bracket the learned run's final
    /// overlap: [last rate still above it, first rate at or below it].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub effective_rate_bracket: Option<(f64, f64)>,
}

impl Summary {
    pub fn new(experiment: &str, experiment_id: &str, seed: u64, n_qubits: usize) -> Self {
        Summary {
            experiment: experiment.to_string(),
            experiment_id: experiment_id.to_string(),
            seed,
            n_qubits,
            ..Summary::default()
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}
