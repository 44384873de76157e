//! Analysis report assembly: certification figures plus the provenance
//! needed to re-run the command byte-identically.

use entsim_core::estimator::SYSTEMATICS_NOTE;
use entsim_core::gaussian::{
    check_physicality, entanglement_witness, negativity, GaussianState, NegativityResult,
    PhysicalityCheck, WitnessResult,
};
use entsim_core::BootstrapReport;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Everything needed to reproduce a report: hash of the input file, the
/// seed of any resampling, and the tool version.  Deliberately no
/// timestamps — re-running with the same inputs must yield identical bytes.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub input_sha256: String,
    pub seed: Option<u64>,
    pub version: String,
}

/// Full certification report for one two-mode state.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub witness: WitnessResult,
    pub negativity: NegativityResult,
    pub physicality: PhysicalityCheck,
    pub bootstrap: Option<BootstrapReport>,
    pub systematics_note: String,
    pub provenance: Provenance,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Witness, negativity, and physicality of a state, with provenance.
/// The negativity stage can fail only on matrices without a real symplectic
/// spectrum, which the caller maps to a domain error.
pub fn analyze_state(
    state: &GaussianState,
    bootstrap: Option<BootstrapReport>,
    input_sha256: String,
    seed: Option<u64>,
) -> Result<AnalysisReport, entsim_core::gaussian::GaussianError> {
    Ok(AnalysisReport {
        witness: entanglement_witness(state),
        negativity: negativity(state)?,
        physicality: check_physicality(state),
        bootstrap,
        systematics_note: SYSTEMATICS_NOTE.to_string(),
        provenance: Provenance {
            input_sha256,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}
