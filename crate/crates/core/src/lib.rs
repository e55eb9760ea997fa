//! Bayesian forecast aggregation.
//!
//! Experts observe private signals about an outcome and each reports its own
//! posterior. An aggregator maps the vector of reports to a forecast, and is
//! judged by its squared loss against the realized outcome. This crate builds
//! discrete information structures, computes the optimal aggregator exactly,
//! implements sample-based learners for it, generates the hard instances used
//! in lower bounds, and runs sample-complexity experiments.

pub mod aggregators;
pub mod error;
pub mod generators;
pub mod hard;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod rng;

pub use aggregators::{Aggregator, AggregatorKind, Forecast};
pub use error::{Error, Result};
pub use metrics::{DiscreteDist, LossReport};
pub use model::{
    CondIndepModel, DiscreteJoint, InfoStructure, Model, OutcomeSpace, Record, ReportProfile, ReportSupport, SampleSet,
};
