//! JSON analysis configuration: schema, validation, and resolution of
//! defaults. Every run report embeds the fully resolved config so that
//! re-running it reproduces the report.

use contraction_core::certify::Region;
use contraction_core::error::Error as CoreError;
use contraction_core::model::{parse_vector_field, BuiltinSystem, VectorFieldModel};
use contraction_core::network::SubsystemSpec;
use contraction_core::norms::{Lp, NormSpec};
use contraction_core::pairings::{ChoiceRule, PairingKind};
use contraction_core::semi::{consensus_projector, SemiNormSpec};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

fn default_seed() -> u64 {
    0
}
fn default_states() -> usize {
    10_000
}
fn default_directions() -> usize {
    64
}
fn default_pairs() -> usize {
    10_000
}
fn default_step() -> f64 {
    1e-3
}
fn default_horizon() -> f64 {
    10.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub schema_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairing: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionConfig>,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certify: Option<CertifyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semi: Option<SemiConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    Builtin(BuiltinConfig),
    Expressions {
        source: String,
        state_dim: usize,
        #[serde(default)]
        input_dim: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum BuiltinConfig {
    Counterexample,
    Linear { matrix: Vec<Vec<f64>> },
    Hopfield {
        a: Vec<f64>,
        t: Vec<Vec<f64>>,
        bias: Vec<f64>,
    },
    ScalarIss { c: f64, ell: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PValue {
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormConfig {
    pub p: PValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    /// "R" for an invertible weight applied inside the norm, "P" for a
    /// symmetric positive definite quadratic form (l2 only).
    pub convention: String,
    pub entries: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default = "default_time")]
    pub time: [f64; 2],
}

fn default_time() -> [f64; 2] {
    [0.0, 1.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(default = "default_states")]
    pub states: usize,
    #[serde(default = "default_directions")]
    pub directions: usize,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            states: default_states(),
            directions: default_directions(),
            pairs: default_pairs(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureConfig {
    Matrix(Vec<Vec<f64>>),
    At { t: f64, x: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    /// measure | factored_measure | demidovich | osl | equilibrium | semi | subspace
    pub condition: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_star: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub t0: f64,
    pub x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<SignalConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_y: Option<SignalConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iss: Option<IssConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalConfig {
    Constant(Vec<f64>),
    Step { value: Vec<f64>, at: f64 },
    Sinusoid {
        amplitude: Vec<f64>,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl SignalConfig {
    pub fn dim(&self) -> usize {
        match self {
            SignalConfig::Constant(v) => v.len(),
            SignalConfig::Step { value, .. } => value.len(),
            SignalConfig::Sinusoid { amplitude, .. } => amplitude.len(),
        }
    }

    pub fn to_fn(&self) -> impl Fn(f64) -> DVector<f64> + Sync + '_ {
        move |t: f64| match self {
            SignalConfig::Constant(v) => DVector::from_row_slice(v),
            SignalConfig::Step { value, at } => {
                if t >= *at {
                    DVector::from_row_slice(value)
                } else {
                    DVector::zeros(value.len())
                }
            }
            SignalConfig::Sinusoid {
                amplitude,
                frequency,
                phase,
            } => DVector::from_row_slice(amplitude) * (frequency * t + phase).sin(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IssConfig {
    pub c: f64,
    pub ell: f64,
    /// Signal exponent: a number or "inf".
    pub q: PValue,
    pub probe: SignalConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProjectorConfig {
    Matrix(Vec<Vec<f64>>),
    Consensus(usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemiConfig {
    pub projector: ProjectorConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default)]
    pub epsilon: f64,
    pub subsystems: Vec<SubsystemConfig>,
    #[serde(default)]
    pub simulation_check: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsystemConfig {
    pub name: String,
    pub source: String,
    pub block_dim: usize,
    #[serde(default)]
    pub input_dim: usize,
    pub self_rate: f64,
    pub cross_gains: Vec<f64>,
    pub norm: NormConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairing: Option<String>,
}

/// Configuration problems surface with exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn parse_p(p: &PValue) -> Result<Lp, ConfigError> {
    let value = match p {
        PValue::Number(v) => *v,
        PValue::Text(s) => match s.trim() {
            "inf" | "infinity" | "oo" => f64::INFINITY,
            other => other
                .parse::<f64>()
                .map_err(|_| ConfigError(format!("invalid p value `{other}`")))?,
        },
    };
    Lp::from_f64(value).map_err(|e| ConfigError(e.to_string()))
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, ConfigError> {
    if rows.is_empty() {
        return Err(ConfigError(format!("{what}: empty matrix")));
    }
    let cols = rows[0].len();
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(ConfigError(format!("{what}: ragged or empty rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn build_norm(cfg: &NormConfig, dim: usize) -> Result<NormSpec, ConfigError> {
    let p = parse_p(&cfg.p)?;
    match &cfg.weight {
        None => Ok(NormSpec::unweighted(p, dim)),
        Some(w) => {
            let m = matrix_from_rows(&w.entries, "norm.weight")?;
            if m.nrows() != dim {
                return Err(ConfigError(format!(
                    "norm.weight is {}x{} but the state dimension is {dim}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            match w.convention.as_str() {
                "R" | "r" => NormSpec::weighted(p, m).map_err(|e| ConfigError(e.to_string())),
                "P" | "p" => {
                    if !p.is_two() {
                        return Err(ConfigError(
                            "the P weight convention applies only to p = 2".to_string(),
                        ));
                    }
                    NormSpec::weighted_l2_from_spd(m).map_err(|e| ConfigError(e.to_string()))
                }
                other => Err(ConfigError(format!(
                    "unknown weight convention `{other}` (expected R or P)"
                ))),
            }
        }
    }
}

pub fn build_pairing(
    name: Option<&str>,
    spec: &NormSpec,
) -> Result<PairingKind, ConfigError> {
    let kind = match name {
        None => PairingKind::default_for(spec),
        Some("gateaux_lp") => PairingKind::GateauxLp,
        Some("sign_l1") => PairingKind::SignL1,
        Some("max_linf") => PairingKind::MaxLinf,
        Some("deimling_numeric") => PairingKind::DeimlingNumeric,
        Some("deimling_l1_closed") => PairingKind::DeimlingL1Closed,
        Some("single_index_smallest") => PairingKind::SingleIndex(ChoiceRule::SmallestIndex),
        Some("single_index_largest") => PairingKind::SingleIndex(ChoiceRule::LargestIndex),
        Some(other) => return Err(ConfigError(format!("unknown pairing `{other}`"))),
    };
    kind.check_compatible(spec)
        .map_err(|e| ConfigError(e.to_string()))?;
    Ok(kind)
}

pub fn build_system(cfg: &SystemConfig) -> Result<VectorFieldModel, ConfigError> {
    match cfg {
        SystemConfig::Builtin(b) => Ok(match b {
            BuiltinConfig::Counterexample => BuiltinSystem::Counterexample.build(),
            BuiltinConfig::Linear { matrix } => {
                let m = matrix_from_rows(matrix, "system.linear")?;
                if m.nrows() != m.ncols() {
                    return Err(ConfigError("system.linear: matrix must be square".into()));
                }
                BuiltinSystem::Linear(m).build()
            }
            BuiltinConfig::Hopfield { a, t, bias } => {
                let t = matrix_from_rows(t, "system.hopfield.t")?;
                let n = a.len();
                if t.nrows() != n || t.ncols() != n || bias.len() != n {
                    return Err(ConfigError("system.hopfield: inconsistent dims".into()));
                }
                if a.iter().any(|&ai| ai <= 0.0) {
                    return Err(ConfigError("system.hopfield: decay must be positive".into()));
                }
                BuiltinSystem::Hopfield {
                    a: DVector::from_row_slice(a),
                    t,
                    bias: DVector::from_row_slice(bias),
                }
                .build()
            }
            BuiltinConfig::ScalarIss { c, ell } => BuiltinSystem::ScalarIss { c: *c, ell: *ell }.build(),
        }),
        SystemConfig::Expressions {
            source,
            state_dim,
            input_dim,
        } => parse_vector_field(source, *state_dim, *input_dim)
            .map_err(|e| ConfigError(e.to_string())),
    }
}

pub fn build_region(cfg: &RegionConfig) -> Result<Region, ConfigError> {
    Region::new(
        DVector::from_row_slice(&cfg.lower),
        DVector::from_row_slice(&cfg.upper),
        cfg.time[0],
        cfg.time[1],
    )
    .map_err(|e| ConfigError(e.to_string()))
}

pub fn build_semi(
    cfg: &SemiConfig,
    norm_cfg: Option<&NormConfig>,
) -> Result<SemiNormSpec, ConfigError> {
    let projector = match &cfg.projector {
        ProjectorConfig::Matrix(rows) => matrix_from_rows(rows, "semi.projector")?,
        ProjectorConfig::Consensus(n) => {
            if *n < 2 {
                return Err(ConfigError("semi.projector.consensus needs n >= 2".into()));
            }
            consensus_projector(*n)
        }
    };
    let image_dim = projector.nrows();
    let base = match norm_cfg {
        Some(nc) => build_norm(nc, image_dim)?,
        None => NormSpec::unweighted(Lp::P(2.0), image_dim),
    };
    SemiNormSpec::new(projector, base).map_err(|e| ConfigError(e.to_string()))
}

pub fn build_subsystems(
    cfg: &NetworkConfig,
) -> Result<Vec<SubsystemSpec>, ConfigError> {
    let full_dim: usize = cfg.subsystems.iter().map(|s| s.block_dim).sum();
    cfg.subsystems
        .iter()
        .map(|s| {
            let norm = build_norm(&s.norm, s.block_dim)?;
            let kind = build_pairing(s.pairing.as_deref(), &norm)?;
            SubsystemSpec::parse(
                &s.name,
                &s.source,
                full_dim,
                s.input_dim,
                s.self_rate,
                s.cross_gains.clone(),
                norm,
                kind,
            )
            .map_err(|e| ConfigError(e.to_string()))
        })
        .collect()
}

/// Which exit code a core error maps to: malformed problem statements are
/// config errors (2), runtime analysis failures are numerical errors (3).
pub fn core_error_exit_code(e: &CoreError) -> i32 {
    match e {
        CoreError::Parse { .. }
        | CoreError::DimensionMismatch { .. }
        | CoreError::ComponentCountMismatch { .. }
        | CoreError::InvalidRegion
        | CoreError::InvalidExponent { .. }
        | CoreError::InvalidSignalExponent { .. }
        | CoreError::NotSquare { .. }
        | CoreError::IncompatiblePairing { .. }
        | CoreError::BlockMismatch { .. }
        | CoreError::NoFactorization
        | CoreError::TooFewSamples { .. } => 2,
        _ => 3,
    }
}
