//! Q-learning control of a seismically excited single-storey frame under an
//! action-effect delay, with a reflexive γ reward filter.
//!
//! Modules follow the data flow: [`excitation`] records drive the
//! [`dynamics`] environment, [`reward`] scores each sample, [`gamma_filter`]
//! turns an impulse probe into per-step discount weights, [`nn`] and
//! [`agent`] implement the Q-learner, and [`trainer`] runs experiments whose
//! results [`report`] aggregates.

pub mod agent;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod excitation;
pub mod gamma_filter;
pub mod nn;
pub mod report;
pub mod reward;
pub mod trainer;

pub use config::{ExperimentConfig, Method, RecordSource};
pub use dynamics::{discretize, DiscreteModel, Environment, ResponseSample, SdofParams};
pub use error::{Error, Result};
pub use excitation::GroundMotion;
pub use gamma_filter::ReflexiveGamma;
pub use nn::{QModel, QNetwork};
pub use reward::{Peaks, RewardConfig};
pub use trainer::{evaluate, improvement_pct, run, RunOutput, Trainer};
