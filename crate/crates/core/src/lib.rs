//! Simulator for consensus protocols under a late, budget-bounded blocking
//! adversary.

pub mod adversary;
pub mod config;
pub mod engine;
pub mod harness;
pub mod oracle;
pub mod protocol;
pub mod rng;
pub mod stats;
pub mod types;
pub mod verify;

pub use adversary::{BlockSet, Observation, Pending, Strategy};
pub use config::{
    validate_config, AdversaryKind, BlockSemantics, ConfigError, LogBase, ProtocolKind, TrialConfig,
};
pub use engine::{check_termination, run_trial, EngineError, RoundRecord, Simulation, Termination, Trajectory};
pub use types::*;
