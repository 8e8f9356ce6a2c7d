//! On-disk formats: RBM parameter files (JSON) and raw statevector dumps.
//!
//! The parameter file stores every complex entry as an `[re, im]` pair and
//! must round-trip bit-faithfully at double precision; the JSON writer emits
//! shortest-round-trip decimal floats, so parsing recovers the exact bits.
//! Statevector dumps are binary: an 8-byte magic, the qubit count as a
//! little-endian u64, then 2^N amplitudes as little-endian f64 (re, im) pairs.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{NqsError, Result};
use crate::groundstate::{Lattice, TfimParams};
use crate::oracle::StateVector;
use crate::rbm::RbmState;

/// Where a saved state came from, for states produced by ground-state
/// preparation. Purely informational; loading ignores physics consistency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub lattice: Lattice,
    pub params: TfimParams,
    pub alpha: f64,
    pub seed: u64,
    pub final_energy: f64,
}

/// Serialized form of an RBM. Dimensions are stored redundantly with the
/// vectors so a truncated or hand-edited file fails loudly instead of
/// shifting parameters.
#[derive(Serialize, Deserialize)]
struct RbmFile {
    n_visible: usize,
    n_hidden: usize,
    visible_bias: Vec<[f64; 2]>,
    hidden_bias: Vec<[f64; 2]>,
    /// One row per visible unit, each row of length `n_hidden`.
    weights: Vec<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    provenance: Option<Provenance>,
}

fn pair(z: &Complex64) -> [f64; 2] {
    [z.re, z.im]
}

fn unpair(p: &[f64; 2]) -> Complex64 {
    Complex64::new(p[0], p[1])
}

/// Render a state (and optional provenance) as the parameter file text.
pub fn rbm_to_json(state: &RbmState, provenance: Option<&Provenance>) -> Result<String> {
    let n = state.n_visible();
    let m = state.n_hidden();
    let file = RbmFile {
        n_visible: n,
        n_hidden: m,
        visible_bias: state.visible_bias().iter().map(pair).collect(),
        hidden_bias: state.hidden_bias().iter().map(pair).collect(),
        weights: (0..n)
            .map(|j| (0..m).map(|k| pair(&state.weight(j, k))).collect())
            .collect(),
        provenance: provenance.cloned(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// Parse parameter file text. The declared dimensions must match the
/// vectors exactly; parameters must be finite.
pub fn rbm_from_json(text: &str) -> Result<(RbmState, Option<Provenance>)> {
    let file: RbmFile = serde_json::from_str(text)?;
    if file.visible_bias.len() != file.n_visible {
        return Err(NqsError::StateFile(format!(
            "visible_bias has {} entries but n_visible is {}",
            file.visible_bias.len(),
            file.n_visible
        )));
    }
    if file.hidden_bias.len() != file.n_hidden {
        return Err(NqsError::StateFile(format!(
            "hidden_bias has {} entries but n_hidden is {}",
            file.hidden_bias.len(),
            file.n_hidden
        )));
    }
    if file.weights.len() != file.n_visible {
        return Err(NqsError::StateFile(format!(
            "weights has {} rows but n_visible is {}",
            file.weights.len(),
            file.n_visible
        )));
    }
    for (j, row) in file.weights.iter().enumerate() {
        if row.len() != file.n_hidden {
            return Err(NqsError::StateFile(format!(
                "weights row {} has {} entries but n_hidden is {}",
                j,
                row.len(),
                file.n_hidden
            )));
        }
    }
    let state = RbmState::from_parts(
        file.visible_bias.iter().map(unpair).collect(),
        file.hidden_bias.iter().map(unpair).collect(),
        file.weights.iter().flatten().map(unpair).collect(),
    )?;
    Ok((state, file.provenance))
}

pub fn save_rbm(path: &Path, state: &RbmState, provenance: Option<&Provenance>) -> Result<()> {
    let mut text = rbm_to_json(state, provenance)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_rbm(path: &Path) -> Result<(RbmState, Option<Provenance>)> {
    rbm_from_json(&fs::read_to_string(path)?)
}

const VECTOR_MAGIC: [u8; 8] = *b"NQSVEC01";

/// Dump a statevector in the raw binary layout. Amplitudes are written as
/// stored, without renormalization.
pub fn save_statevector(path: &Path, v: &StateVector) -> Result<()> {
    let mut bytes = Vec::with_capacity(16 + 16 * v.amplitudes().len());
    bytes.extend_from_slice(&VECTOR_MAGIC);
    bytes.extend_from_slice(&(v.n_qubits() as u64).to_le_bytes());
    for z in v.amplitudes() {
        bytes.extend_from_slice(&z.re.to_le_bytes());
        bytes.extend_from_slice(&z.im.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_statevector(path: &Path) -> Result<StateVector> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 || bytes[..8] != VECTOR_MAGIC {
        return Err(NqsError::StateFile(
            "not a statevector dump (bad magic)".into(),
        ));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let n: usize = n
        .try_into()
        .map_err(|_| NqsError::StateFile(format!("absurd qubit count {n}")))?;
    // Validate the count before sizing anything by 2^n.
    let probe = StateVector::zero_state(n)?;
    let expected = 16 + 16 * probe.amplitudes().len();
    if bytes.len() != expected {
        return Err(NqsError::StateFile(format!(
            "expected {} bytes for {} qubits, found {}",
            expected,
            n,
            bytes.len()
        )));
    }
    let amps = bytes[16..]
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    StateVector::from_amplitudes(n, amps)
}
