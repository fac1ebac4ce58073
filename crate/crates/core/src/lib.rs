//! Deterministic simulator of a robot-to-robot service economy.
//!
//! Autonomous robot agents buy and sell services from each other through
//! escrow-backed smart contracts recorded on a minimal proof-of-work
//! blockchain. A seeded discrete-event scheduler drives agent behaviour,
//! mining, peer validation, and a lossy peer network, so every run is
//! reproducible from a scenario config and a seed. The [`econ`] module
//! computes the closed-form cost model that the bundled cleaning scenario
//! reproduces on-chain, cent for cent.

pub mod agents;
pub mod bus;
pub mod contracts;
pub mod currency;
pub mod econ;
pub mod engine;
pub mod ledger;
pub mod netsim;
pub mod report;
pub mod scenario;

pub use currency::Cents;
pub use engine::{run_scenario, RunOutput, ScenarioFatal};
pub use ledger::{AccountId, AccountKind, Chain, Digest};
pub use report::{build_report, econ_section, ReportError, ScenarioReport};
pub use scenario::{ConfigError, ScenarioConfig};
