//! Moment-based and particle filtering for continuous-time multitype
//! branching processes observed at discrete times.

pub mod branching;
pub mod error;
pub mod filter;
pub mod gaussian;
pub mod hybrid;
pub mod inference;
pub mod linalg;
pub mod models;
pub mod particle;

pub use branching::{BranchingModel, MomentOperators, Offspring, StateVector};
pub use error::{Error, Result};
pub use filter::{
    EngineTag, FilterStep, FilterTrace, GaussianBelief, InitialState, ObservationModel, Schedule,
    TraceStatus,
};
pub use linalg::DenseMatrix;
