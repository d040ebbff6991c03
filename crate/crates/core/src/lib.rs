//! Event-causality toolkit: turns weather and traffic event logs into a
//! two-slice binary dataset, learns a Bayesian network over a fixed skeleton,
//! and answers prediction and what-if queries by exact inference.
//!
//! Pipeline: [`events`] → [`pairing`] → [`dataset`] → [`network`] →
//! [`learning`] → [`inference`] / [`evaluation`] / [`viz`].

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod events;
pub mod inference;
pub mod learning;
pub mod network;
pub mod pairing;
pub mod sampling;
pub mod stats;
pub mod viz;

pub use dataset::{Dataset, DatasetRow, RowBits, Slice, VariableId};
pub use error::{Error, Result};
pub use events::{EntityKind, EventType, GeospatialEntity, Location, Mode, SeverityLabel, SeverityLevel, TimeInterval};
pub use inference::{Evidence, EvidenceScope, InfluenceReport, PosteriorResult, Prediction};
pub use learning::{Cpd, Estimator, NetworkModel};
pub use network::{ChiSquare, ContingencyTable2x2, Edge, NetworkSkeleton};
pub use pairing::{CausalLink, CausalRule, PairingConfig};
