//! Scenario configuration: one JSON document that, together with a seed,
//! fully determines a simulation run.
//!
//! Parsing is strict (unknown fields are rejected so typos fail loudly)
//! and followed by cross-field validation, so the engine can assume a
//! well-formed world: unique account labels, priced capabilities, task
//! schedules that fit inside the simulated horizon, and link parameters
//! that keep every hop at least one tick long.

use crate::agents::{RobotAgent, RolePolicy, TaskSpec};
use crate::contracts::ServiceSpec;
use crate::currency::Cents;
use crate::econ::{
    annual_manual_cost, annual_robot_cost, CostStructure, ManualCostModel, RobotCostModel,
};
use crate::ledger::AccountId;
use crate::netsim::{LinkModel, PeerHonesty, Tick};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Contract escrow accounts are minted under this label prefix, so no
/// configured account may claim it.
pub const CONTRACT_LABEL_PREFIX: &str = "c-";

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config does not parse at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid config field {field}: {message}")]
    Invalid { field: String, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    /// Simulation horizon in ticks; no event fires after it.
    pub duration: Tick,
    /// Nominal wall-clock meaning of one tick, for report headings only.
    #[serde(default = "default_seconds_per_tick")]
    pub seconds_per_tick: u64,
    pub pow_difficulty: u32,
    /// The mempool is flushed into a block on this cadence.
    pub mine_interval: Tick,
    #[serde(default = "default_max_block_transactions")]
    pub max_block_transactions: usize,
    #[serde(default = "default_miner")]
    pub miner: String,
    pub link: LinkModel,
    pub peers: Vec<PeerConfig>,
    /// Per-tick provider cost of exercising a capability; quotes are
    /// estimated from these.
    pub unit_costs: BTreeMap<String, Cents>,
    pub owners: Vec<OwnerConfig>,
    pub robots: Vec<RobotConfig>,
    pub tasks: Vec<TaskTemplate>,
    /// How settled spend on each capability splits into budget buckets.
    #[serde(default)]
    pub cost_structures: BTreeMap<String, CostStructure>,
    /// Closed-form cost models reported alongside (and checked against)
    /// the simulation.
    #[serde(default)]
    pub econ: Option<EconConfig>,
}

fn default_seconds_per_tick() -> u64 {
    1
}

fn default_max_block_transactions() -> usize {
    16
}

fn default_miner() -> String {
    "miner".to_owned()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeerConfig {
    pub label: String,
    pub honesty: PeerHonesty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OwnerConfig {
    pub label: String,
    #[serde(default)]
    pub endowment: Cents,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotConfig {
    pub label: String,
    /// Label of the human principal who owns this robot.
    pub owner: String,
    #[serde(default)]
    pub endowment: Cents,
    #[serde(default)]
    pub capabilities: Vec<String>,
    pub role: RolePolicy,
    /// Balance the robot keeps for operations; earnings above it are
    /// swept to the owner.
    #[serde(default)]
    pub wallet_floor: Cents,
    #[serde(default)]
    pub bid_margin: f64,
    #[serde(default = "default_capacity")]
    pub capacity: u32,
}

fn default_capacity() -> u32 {
    1
}

/// A repeating job template; each repetition becomes one announced
/// contract.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskTemplate {
    /// Label of the robot that wants the work done.
    pub customer: String,
    pub task_kind: String,
    pub capability: String,
    pub count: u32,
    pub first_due: Tick,
    /// Ticks between repetitions; required (nonzero) when count > 1.
    #[serde(default)]
    pub interval: Tick,
    pub price: Cents,
    pub work_duration: Tick,
    pub success_probability: f64,
    /// Quotes arriving later than this many ticks after announcement are
    /// declined.
    pub quote_window: Tick,
    /// Deadline of each contract, relative to its announcement.
    pub deadline_after: Tick,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconConfig {
    pub manual: ManualCostModel,
    pub robot: RobotCostModel,
}

impl ScenarioConfig {
    /// Parses and validates a scenario document.
    pub fn from_json_str(text: &str) -> Result<ScenarioConfig, ConfigError> {
        let config: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| ConfigError::Parse {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        if self.name.is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        if self.duration == 0 {
            return Err(invalid("duration", "must be at least 1 tick"));
        }
        if self.seconds_per_tick == 0 {
            return Err(invalid("seconds_per_tick", "must be at least 1"));
        }
        if self.mine_interval == 0 || self.mine_interval > self.duration {
            return Err(invalid(
                "mine_interval",
                "must be between 1 and the duration",
            ));
        }
        if self.max_block_transactions == 0 {
            return Err(invalid("max_block_transactions", "must be at least 1"));
        }
        self.validate_link()?;
        self.validate_labels()?;
        self.validate_unit_costs()?;
        self.validate_robots()?;
        self.validate_tasks()?;
        self.validate_cost_structures()?;
        if let Some(econ) = &self.econ {
            annual_manual_cost(&econ.manual)
                .map_err(|e| invalid("econ.manual", e.to_string()))?;
            annual_robot_cost(&econ.robot).map_err(|e| invalid("econ.robot", e.to_string()))?;
        }
        Ok(())
    }

    fn validate_link(&self) -> Result<(), ConfigError> {
        if self.link.base_latency == 0 {
            return Err(invalid("link.base_latency", "must be at least 1 tick"));
        }
        if self.link.jitter >= self.link.base_latency {
            return Err(invalid(
                "link.jitter",
                "must be below base_latency so every hop takes at least one tick",
            ));
        }
        let p = self.link.drop_probability;
        if !p.is_finite() || !(0.0..1.0).contains(&p) {
            return Err(invalid("link.drop_probability", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Every owner, robot, peer, and the miner shares one account-label
    /// namespace; labels must be unique, plain, and stay out of the
    /// contract prefix.
    fn validate_labels(&self) -> Result<(), ConfigError> {
        if self.owners.is_empty() {
            return Err(invalid("owners", "at least one owner is required"));
        }
        if self.robots.is_empty() {
            return Err(invalid("robots", "at least one robot is required"));
        }
        if self.peers.is_empty() {
            return Err(invalid("peers", "at least one validating peer is required"));
        }
        let mut seen = BTreeSet::new();
        let all = self
            .owners
            .iter()
            .map(|o| ("owners", &o.label))
            .chain(self.robots.iter().map(|r| ("robots", &r.label)))
            .chain(self.peers.iter().map(|p| ("peers", &p.label)))
            .chain(std::iter::once(("miner", &self.miner)));
        for (field, label) in all {
            check_label(field, label)?;
            if !seen.insert(label.clone()) {
                return Err(invalid(field, format!("duplicate account label {label}")));
            }
        }
        Ok(())
    }

    fn validate_unit_costs(&self) -> Result<(), ConfigError> {
        for (capability, cost) in &self.unit_costs {
            if capability.is_empty() {
                return Err(invalid("unit_costs", "capability tag must not be empty"));
            }
            if cost.is_negative() {
                return Err(invalid(
                    "unit_costs",
                    format!("cost of {capability} must be nonnegative"),
                ));
            }
        }
        Ok(())
    }

    fn validate_robots(&self) -> Result<(), ConfigError> {
        let owner_labels: BTreeSet<&str> =
            self.owners.iter().map(|o| o.label.as_str()).collect();
        for robot in &self.robots {
            let field = format!("robots.{}", robot.label);
            if !owner_labels.contains(robot.owner.as_str()) {
                return Err(invalid(
                    &field,
                    format!("owner {} is not a configured owner", robot.owner),
                ));
            }
            if robot.endowment.is_negative() {
                return Err(invalid(&field, "endowment must be nonnegative"));
            }
            if robot.wallet_floor.is_negative() {
                return Err(invalid(&field, "wallet_floor must be nonnegative"));
            }
            if !robot.bid_margin.is_finite() || robot.bid_margin < 0.0 {
                return Err(invalid(&field, "bid_margin must be finite and nonnegative"));
            }
            if robot.capacity == 0 {
                return Err(invalid(&field, "capacity must be at least 1"));
            }
        }
        for owner in &self.owners {
            if owner.endowment.is_negative() {
                return Err(invalid(
                    &format!("owners.{}", owner.label),
                    "endowment must be nonnegative",
                ));
            }
        }
        Ok(())
    }

    fn validate_tasks(&self) -> Result<(), ConfigError> {
        let robots: BTreeMap<&str, &RobotConfig> = self
            .robots
            .iter()
            .map(|r| (r.label.as_str(), r))
            .collect();
        for (index, task) in self.tasks.iter().enumerate() {
            let field = format!("tasks[{index}]");
            let Some(customer) = robots.get(task.customer.as_str()) else {
                return Err(invalid(
                    &field,
                    format!("customer {} is not a configured robot", task.customer),
                ));
            };
            if !customer.role.can_buy() {
                return Err(invalid(
                    &field,
                    format!("customer {} cannot buy under its role", task.customer),
                ));
            }
            if task.task_kind.is_empty() {
                return Err(invalid(&field, "task_kind must not be empty"));
            }
            if !self.unit_costs.contains_key(&task.capability) {
                return Err(invalid(
                    &field,
                    format!("capability {} has no unit cost", task.capability),
                ));
            }
            if task.count == 0 {
                return Err(invalid(&field, "count must be at least 1"));
            }
            if task.count > 1 && task.interval == 0 {
                return Err(invalid(&field, "interval is required when count > 1"));
            }
            if task.first_due == 0 {
                return Err(invalid(&field, "first_due must be at least 1"));
            }
            if task.price.is_negative() {
                return Err(invalid(&field, "price must be nonnegative"));
            }
            if task.work_duration == 0 {
                return Err(invalid(&field, "work_duration must be at least 1"));
            }
            if !task.success_probability.is_finite()
                || !(0.0..=1.0).contains(&task.success_probability)
            {
                return Err(invalid(&field, "success_probability must lie in [0, 1]"));
            }
            if task.quote_window == 0 {
                return Err(invalid(&field, "quote_window must be at least 1"));
            }
            if task.deadline_after <= task.quote_window {
                return Err(invalid(
                    &field,
                    "deadline_after must exceed quote_window",
                ));
            }
            if task.parameters.values().any(|v| !v.is_finite()) {
                return Err(invalid(&field, "parameters must be finite"));
            }
            let last_due = task
                .first_due
                .saturating_add((task.count as u64 - 1).saturating_mul(task.interval));
            if last_due.saturating_add(task.deadline_after) > self.duration {
                return Err(invalid(
                    &field,
                    "the last contract's deadline falls outside the scenario duration",
                ));
            }
        }
        Ok(())
    }

    fn validate_cost_structures(&self) -> Result<(), ConfigError> {
        for (capability, s) in &self.cost_structures {
            let field = format!("cost_structures.{capability}");
            if s.labor.is_negative() || s.consumables.is_negative() || s.capital.is_negative() {
                return Err(invalid(&field, "weights must be nonnegative"));
            }
            if s.labor + s.consumables + s.capital == Cents::ZERO {
                return Err(invalid(&field, "weights must not all be zero"));
            }
        }
        Ok(())
    }

    pub fn miner_account(&self) -> AccountId {
        AccountId::human(&self.miner)
    }
}

impl RobotConfig {
    pub fn build_agent(&self) -> RobotAgent {
        RobotAgent::new(
            AccountId::robot(&self.label),
            AccountId::human(&self.owner),
            self.capabilities.iter().cloned().collect(),
            self.role,
            self.wallet_floor,
            self.bid_margin,
            self.capacity,
        )
    }
}

impl TaskTemplate {
    /// Expands the template into concrete tasks, one per repetition.
    pub fn materialize(&self) -> Vec<TaskSpec> {
        (0..self.count)
            .map(|i| {
                let due = self.first_due + (i as u64) * self.interval;
                TaskSpec {
                    due,
                    spec: ServiceSpec {
                        task_kind: self.task_kind.clone(),
                        required_capability: self.capability.clone(),
                        work_duration: self.work_duration,
                        success_probability: self.success_probability,
                        parameters: self.parameters.clone(),
                    },
                    price: self.price,
                    quote_window: self.quote_window,
                    deadline: due + self.deadline_after,
                }
            })
            .collect()
    }
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_owned(),
        message: message.into(),
    }
}

fn check_label(field: &str, label: &str) -> Result<(), ConfigError> {
    if label.is_empty() {
        return Err(invalid(field, "account label must not be empty"));
    }
    if label.starts_with(CONTRACT_LABEL_PREFIX) {
        return Err(invalid(
            field,
            format!("label {label} uses the reserved contract prefix {CONTRACT_LABEL_PREFIX}"),
        ));
    }
    if !label
        .chars()
        .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' || c == '_')
    {
        return Err(invalid(
            field,
            format!("label {label} may use only lowercase letters, digits, '-' and '_'"),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> serde_json::Value {
        serde_json::json!({
            "schema_version": 1,
            "name": "two-robot-exchange",
            "seed": 7,
            "duration": 5000,
            "pow_difficulty": 4,
            "mine_interval": 50,
            "link": {"base_latency": 3, "jitter": 2, "drop_probability": 0.0},
            "peers": [{"label": "watch-1", "honesty": "honest"}],
            "unit_costs": {"cleaning": 55},
            "owners": [
                {"label": "maurice", "endowment": 0},
                {"label": "mo-capital"}
            ],
            "robots": [
                {"label": "facility-bot", "owner": "maurice", "endowment": 20000,
                 "role": "customer_only", "wallet_floor": 20000},
                {"label": "mo-robot", "owner": "mo-capital", "capabilities": ["cleaning"],
                 "role": "provider_only", "bid_margin": 0.08}
            ],
            "tasks": [
                {"customer": "facility-bot", "task_kind": "cleaning", "capability": "cleaning",
                 "count": 2, "first_due": 100, "interval": 1000, "price": 6000,
                 "work_duration": 90, "success_probability": 1.0,
                 "quote_window": 60, "deadline_after": 600}
            ]
        })
    }

    fn parse(value: serde_json::Value) -> Result<ScenarioConfig, ConfigError> {
        ScenarioConfig::from_json_str(&value.to_string())
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let config = parse(minimal_json()).unwrap();
        assert_eq!(config.seconds_per_tick, 1);
        assert_eq!(config.max_block_transactions, 16);
        assert_eq!(config.miner, "miner");
        assert_eq!(config.robots[1].capacity, 1);
        assert_eq!(config.owners[1].endowment, Cents::ZERO);
        assert!(config.econ.is_none());
    }

    #[test]
    fn unknown_fields_and_missing_fields_fail_parsing() {
        let mut doc = minimal_json();
        doc["surprise"] = serde_json::json!(1);
        let err = parse(doc).unwrap_err();
        assert!(matches!(&err, ConfigError::Parse { message, .. } if message.contains("surprise")));

        let mut doc = minimal_json();
        doc.as_object_mut().unwrap().remove("seed");
        let err = parse(doc).unwrap_err();
        assert!(matches!(&err, ConfigError::Parse { message, .. } if message.contains("seed")));
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let mut doc = minimal_json();
        doc["schema_version"] = serde_json::json!(2);
        let err = parse(doc).unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { field, .. } if field == "schema_version"));
    }

    #[test]
    fn account_labels_share_one_namespace() {
        let mut doc = minimal_json();
        doc["peers"][0]["label"] = serde_json::json!("mo-robot");
        let err = parse(doc).unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { message, .. }
            if message.contains("duplicate account label mo-robot")));

        let mut doc = minimal_json();
        doc["robots"][0]["label"] = serde_json::json!("c-000001");
        let err = parse(doc).unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { message, .. }
            if message.contains("reserved contract prefix")));

        let mut doc = minimal_json();
        doc["owners"][0]["label"] = serde_json::json!("Maurice!");
        assert!(parse(doc).is_err());
    }

    #[test]
    fn link_must_keep_hops_at_least_one_tick() {
        let mut doc = minimal_json();
        doc["link"]["jitter"] = serde_json::json!(3);
        let err = parse(doc).unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { field, .. } if field == "link.jitter"));

        let mut doc = minimal_json();
        doc["link"]["drop_probability"] = serde_json::json!(1.0);
        assert!(parse(doc).is_err());
    }

    #[test]
    fn task_validation_catches_bad_schedules_and_roles() {
        let mut doc = minimal_json();
        doc["tasks"][0]["deadline_after"] = serde_json::json!(60);
        let err = parse(doc).unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { message, .. }
            if message.contains("deadline_after")));

        let mut doc = minimal_json();
        doc["tasks"][0]["capability"] = serde_json::json!("welding");
        let err = parse(doc).unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { message, .. }
            if message.contains("welding")));

        let mut doc = minimal_json();
        doc["tasks"][0]["customer"] = serde_json::json!("mo-robot");
        let err = parse(doc).unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { message, .. }
            if message.contains("cannot buy")));

        // Second repetition's deadline would land past the horizon.
        let mut doc = minimal_json();
        doc["duration"] = serde_json::json!(1000);
        let err = parse(doc).unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { message, .. }
            if message.contains("outside the scenario duration")));
    }

    #[test]
    fn robot_references_must_resolve() {
        let mut doc = minimal_json();
        doc["robots"][0]["owner"] = serde_json::json!("nobody");
        let err = parse(doc).unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { message, .. }
            if message.contains("nobody")));
    }

    #[test]
    fn templates_materialize_one_task_per_repetition() {
        let config = parse(minimal_json()).unwrap();
        let tasks = config.tasks[0].materialize();
        assert_eq!(tasks.len(), 2);
        assert_eq!(tasks[0].due, 100);
        assert_eq!(tasks[1].due, 1100);
        assert_eq!(tasks[0].deadline, 700);
        assert_eq!(tasks[1].spec.required_capability, "cleaning");
        assert_eq!(tasks[1].price, Cents(6000));
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = ScenarioConfig::from_json_str("{\n  \"schema_version\": }").unwrap_err();
        match err {
            ConfigError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
