//! Contraction analysis for weighted lp norms.
//!
//! Weak pairings and matrix measures, vector-field models with exact
//! symbolic Jacobians, sample-based contraction certificates, fixed-step
//! trajectory verification (incremental envelopes, ISS bounds, gains),
//! composition of certificates over interconnected subsystems, and
//! semi-norm (projected) contraction.

pub mod certify;
pub mod error;
pub mod expr;
pub mod measure;
pub mod model;
pub mod network;
pub mod norms;
pub mod pairings;
pub mod semi;
pub mod sim;

pub use certify::{Condition, ContractionCertificate, Region, Witness};
pub use error::{Error, Result};
pub use measure::{matrix_measure, MeasureResult};
pub use model::{parse_vector_field, BuiltinSystem, VectorFieldModel};
pub use norms::{norm, Lp, NormSpec, SignalNorm};
pub use pairings::{weak_pairing, PairingKind};
