//! Autonomous robot agents and the humans behind them.
//!
//! Robots trade services with each other, but they own nothing: every
//! robot is registered as an asset of a human principal, and everything a
//! provider earns above its operating reserve is swept to its owner's
//! account. Customers reserve money for the contracts they announce so
//! they can never promise the same cent twice.

use crate::contracts::ServiceSpec;
use crate::currency::{round_div, Cents};
use crate::ledger::{AccountId, AccountKind, Memo, TxIntent};
use crate::netsim::Tick;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

/// A registrable piece of property, robots included.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AssetId(pub String);

#[derive(Debug, Error, PartialEq)]
pub enum RegistryError {
    #[error("asset {asset} cannot be owned by non-human account {owner}")]
    NonHumanOwner { asset: String, owner: String },
    #[error("asset {0} is already registered")]
    DuplicateAsset(String),
    #[error("asset {0} is not registered")]
    UnknownAsset(String),
}

/// Who owns what. Ownership is restricted to human accounts; a robot can
/// hold a wallet for operations but never title to an asset.
#[derive(Debug, Default)]
pub struct AssetRegistry {
    owners: BTreeMap<AssetId, AccountId>,
}

impl AssetRegistry {
    pub fn new() -> AssetRegistry {
        AssetRegistry::default()
    }

    pub fn register(&mut self, asset: AssetId, owner: AccountId) -> Result<(), RegistryError> {
        if owner.kind != AccountKind::Human {
            return Err(RegistryError::NonHumanOwner {
                asset: asset.0,
                owner: owner.to_string(),
            });
        }
        if self.owners.contains_key(&asset) {
            return Err(RegistryError::DuplicateAsset(asset.0));
        }
        self.owners.insert(asset, owner);
        Ok(())
    }

    pub fn transfer(&mut self, asset: &AssetId, new_owner: AccountId) -> Result<(), RegistryError> {
        if new_owner.kind != AccountKind::Human {
            return Err(RegistryError::NonHumanOwner {
                asset: asset.0.clone(),
                owner: new_owner.to_string(),
            });
        }
        match self.owners.get_mut(asset) {
            Some(slot) => {
                *slot = new_owner;
                Ok(())
            }
            None => Err(RegistryError::UnknownAsset(asset.0.clone())),
        }
    }

    pub fn owner_of(&self, asset: &AssetId) -> Result<&AccountId, RegistryError> {
        self.owners
            .get(asset)
            .ok_or_else(|| RegistryError::UnknownAsset(asset.0.clone()))
    }

    pub fn len(&self) -> usize {
        self.owners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owners.is_empty()
    }

    /// The standing rule: every registered asset has a human owner.
    pub fn all_owned_by_humans(&self) -> bool {
        self.owners.values().all(|o| o.kind == AccountKind::Human)
    }
}

/// A human account and the robots registered to it.
#[derive(Clone, Debug)]
pub struct OwnerPrincipal {
    pub account: AccountId,
    pub robots: Vec<AccountId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolePolicy {
    CustomerOnly,
    ProviderOnly,
    Dual,
}

impl RolePolicy {
    pub fn can_buy(self) -> bool {
        matches!(self, RolePolicy::CustomerOnly | RolePolicy::Dual)
    }

    pub fn can_sell(self) -> bool {
        matches!(self, RolePolicy::ProviderOnly | RolePolicy::Dual)
    }
}

/// One job a customer robot wants done, scheduled for a point in time.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub due: Tick,
    pub spec: ServiceSpec,
    pub price: Cents,
    pub quote_window: Tick,
    pub deadline: Tick,
}

/// What a customer decided to do with a due task.
#[derive(Clone, Debug, PartialEq)]
pub enum CustomerAction {
    Announce(TaskSpec),
    /// Not enough uncommitted balance to cover the price; the task is
    /// dropped and reported, never silently retried.
    SkipInsufficient(TaskSpec),
}

#[derive(Debug)]
pub struct RobotAgent {
    pub account: AccountId,
    pub owner: AccountId,
    pub capabilities: BTreeSet<String>,
    pub role_policy: RolePolicy,
    /// Operating reserve the robot keeps; only earnings above this are
    /// swept to the owner.
    pub wallet_floor: Cents,
    /// Relative markup a provider adds over its estimated cost.
    pub bid_margin: f64,
    /// Maximum concurrent provider engagements (outstanding quotes count).
    pub capacity: u32,
    tasks: VecDeque<TaskSpec>,
    committed: Cents,
    engagements: u32,
    sweep_count: u64,
}

impl RobotAgent {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        account: AccountId,
        owner: AccountId,
        capabilities: BTreeSet<String>,
        role_policy: RolePolicy,
        wallet_floor: Cents,
        bid_margin: f64,
        capacity: u32,
    ) -> RobotAgent {
        RobotAgent {
            account,
            owner,
            capabilities,
            role_policy,
            wallet_floor,
            bid_margin,
            capacity,
            tasks: VecDeque::new(),
            committed: Cents::ZERO,
            engagements: 0,
            sweep_count: 0,
        }
    }

    /// Queues a task. Tasks must be pushed in due order.
    pub fn push_task(&mut self, task: TaskSpec) {
        debug_assert!(self
            .tasks
            .back()
            .is_none_or(|last| last.due <= task.due));
        self.tasks.push_back(task);
    }

    /// Money already promised to announced-but-unescrowed contracts.
    pub fn committed(&self) -> Cents {
        self.committed
    }

    /// Processes every task due by `now`. `uncommitted` is the spendable
    /// balance with mempool debits and prior commitments already removed;
    /// each announcement here reduces what the next task may use.
    pub fn customer_step(&mut self, now: Tick, uncommitted: Cents) -> Vec<CustomerAction> {
        debug_assert!(self.tasks.is_empty() || self.role_policy.can_buy());
        let mut actions = Vec::new();
        let mut remaining = uncommitted;
        while self.tasks.front().is_some_and(|t| t.due <= now) {
            let task = self.tasks.pop_front().expect("peeked front");
            if remaining >= task.price {
                remaining -= task.price;
                self.committed += task.price;
                actions.push(CustomerAction::Announce(task));
            } else {
                actions.push(CustomerAction::SkipInsufficient(task));
            }
        }
        actions
    }

    /// Frees a commitment once its escrow is on its way to the chain (or
    /// the contract expired unaccepted).
    pub fn release_commitment(&mut self, amount: Cents) {
        debug_assert!(self.committed >= amount);
        self.committed -= amount;
    }

    /// Estimated own cost: work duration times the per-tick unit cost of
    /// the required capability.
    pub fn estimate_cost(
        &self,
        spec: &ServiceSpec,
        unit_costs: &BTreeMap<String, Cents>,
    ) -> Option<Cents> {
        let unit = unit_costs.get(&spec.required_capability)?;
        Some(unit.scale(spec.work_duration as i64))
    }

    /// Decides whether to bid on an announcement and for how much. `None`
    /// means stay silent: wrong role, fully booked, missing capability,
    /// unpriceable work, or a bid that would exceed the posted price.
    pub fn consider_announcement(
        &self,
        spec: &ServiceSpec,
        posted_price: Cents,
        unit_costs: &BTreeMap<String, Cents>,
    ) -> Option<Cents> {
        if !self.role_policy.can_sell() || self.engagements >= self.capacity {
            return None;
        }
        if !self.capabilities.contains(&spec.required_capability) {
            return None;
        }
        let cost = self.estimate_cost(spec, unit_costs)?;
        let bid = Cents(round_div(
            (cost.0 as i128) * ((self.bid_margin * 1_000_000.0).round() as i128 + 1_000_000),
            1_000_000,
        ));
        (bid <= posted_price).then_some(bid)
    }

    pub fn engagements(&self) -> u32 {
        self.engagements
    }

    /// Claims a provider slot when a quote goes out.
    pub fn begin_engagement(&mut self) {
        debug_assert!(self.engagements < self.capacity);
        self.engagements += 1;
    }

    /// Releases the slot when the quote loses or the contract ends.
    pub fn end_engagement(&mut self) {
        debug_assert!(self.engagements > 0);
        self.engagements = self.engagements.saturating_sub(1);
    }

    /// Sweeps everything above the wallet floor to the owner, if anything.
    /// `available` must already exclude pending mempool debits.
    pub fn sweep(&mut self, available: Cents) -> Option<(String, TxIntent)> {
        let surplus = available - self.wallet_floor;
        if surplus <= Cents::ZERO {
            return None;
        }
        self.sweep_count += 1;
        let tx_id = format!("sweep-{}-{:04}", self.account.label, self.sweep_count);
        Some((
            tx_id,
            TxIntent {
                from: self.account.clone(),
                to: self.owner.clone(),
                amount: surplus,
                contract_ref: None,
                memo: Memo::Sweep,
            },
        ))
    }
}
