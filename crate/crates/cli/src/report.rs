//! Machine-readable run reports. Reports embed the resolved config and its
//! hash; re-running the embedded config reproduces the report byte for byte.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::AnalysisConfig;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
pub struct Report<T: Serialize> {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: AnalysisConfig,
    pub result: T,
}

pub fn config_hash(config: &AnalysisConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn render<T: Serialize>(command: &str, seed: u64, config: &AnalysisConfig, result: T) -> String {
    let report = Report {
        schema_version: REPORT_SCHEMA_VERSION,
        command: command.to_string(),
        seed,
        config_hash: config_hash(config),
        config: config.clone(),
        result,
    };
    serde_json::to_string_pretty(&report).expect("report serializes")
}

#[derive(Serialize)]
pub struct WitnessOut {
    pub t: f64,
    pub x: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partner: Option<Vec<f64>>,
}

#[derive(Serialize)]
pub struct MeasureOut {
    pub value: f64,
    pub method: String,
    pub witness: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_estimate: Option<f64>,
}

#[derive(Serialize)]
pub struct CertifyOut {
    pub condition: String,
    pub bound_b: f64,
    pub verdict_contracting: bool,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    pub nonsmooth_abs: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub osl_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measure_bound: Option<f64>,
}

#[derive(Serialize)]
pub struct EnvelopeOut {
    pub b: f64,
    pub tol: f64,
    pub max_violation: f64,
    pub pass: bool,
    pub worst_pair: (f64, f64),
}

#[derive(Serialize)]
pub struct IssOut {
    pub c: f64,
    pub ell: f64,
    pub max_violation: f64,
    pub pass: bool,
    pub sup_input_deviation: f64,
    pub measured_gain: f64,
    pub gain_bound: f64,
}

#[derive(Serialize)]
pub struct SimulateOut {
    pub csv_files: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blowup: Option<BlowupOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub envelope: Option<EnvelopeOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iss: Option<IssOut>,
    pub final_state: Vec<f64>,
}

#[derive(Serialize)]
pub struct BlowupOut {
    pub step: usize,
    pub time: f64,
}

#[derive(Serialize)]
pub struct InterconnectOut {
    pub gamma: Vec<Vec<f64>>,
    pub abscissa: f64,
    pub irreducible: bool,
    pub certified: bool,
    pub epsilon_used: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lmi_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation_envelope_pass: Option<bool>,
}
