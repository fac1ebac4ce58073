//! Escrow-backed service contracts between robots.
//!
//! A contract walks six steps when everything goes right: the customer
//! creates it, a provider accepts it (escrow is locked at that moment), the
//! provider executes and submits the result, the response is delivered back
//! to the customer, the blockchain peers validate the exchange, and the
//! escrowed payment settles to the provider. Failure exits: the quorum can
//! reject delivered work, the deadline can pass mid-flight (both end in
//! `Refunded`), or nobody accepts before the deadline (`Expired`).
//! Terminal states are never left, and each contract pays out exactly once
//! or refunds exactly once, never both.

use crate::currency::Cents;
use crate::ledger::{
    to_canonical_bytes, AccountId, AccountKind, Digest, Memo, Signature, SignatureScheme, TxIntent,
};
use crate::netsim::Tick;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractState {
    Created,
    Accepted,
    Executed,
    Delivered,
    Validated,
    Rejected,
    Settled,
    Refunded,
    Expired,
}

impl ContractState {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            ContractState::Settled | ContractState::Refunded | ContractState::Expired
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ContractState::Created => "created",
            ContractState::Accepted => "accepted",
            ContractState::Executed => "executed",
            ContractState::Delivered => "delivered",
            ContractState::Validated => "validated",
            ContractState::Rejected => "rejected",
            ContractState::Settled => "settled",
            ContractState::Refunded => "refunded",
            ContractState::Expired => "expired",
        }
    }
}

/// Every legal state transition. Anything not listed here must be
/// unreachable no matter what sequence of operations is attempted.
pub const DECLARED_TRANSITIONS: &[(ContractState, ContractState)] = &[
    (ContractState::Created, ContractState::Accepted),
    (ContractState::Created, ContractState::Expired),
    (ContractState::Accepted, ContractState::Executed),
    (ContractState::Accepted, ContractState::Refunded),
    (ContractState::Executed, ContractState::Delivered),
    (ContractState::Executed, ContractState::Refunded),
    (ContractState::Delivered, ContractState::Validated),
    (ContractState::Delivered, ContractState::Rejected),
    (ContractState::Delivered, ContractState::Refunded),
    (ContractState::Validated, ContractState::Settled),
    (ContractState::Rejected, ContractState::Refunded),
];

/// Steps of the contract protocol as they appear in the event log. The
/// first six carry the step numbers of the happy path; the failure marks
/// have no number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolStep {
    Create,
    Accept,
    SubmitResult,
    DeliverResponse,
    QuorumApprove,
    Settle,
    QuorumReject,
    DeadlineExpired,
}

impl ProtocolStep {
    pub fn number(self) -> Option<u8> {
        match self {
            ProtocolStep::Create => Some(1),
            ProtocolStep::Accept => Some(2),
            ProtocolStep::SubmitResult => Some(3),
            ProtocolStep::DeliverResponse => Some(4),
            ProtocolStep::QuorumApprove => Some(5),
            ProtocolStep::Settle => Some(6),
            ProtocolStep::QuorumReject | ProtocolStep::DeadlineExpired => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolStep::Create => "create",
            ProtocolStep::Accept => "accept",
            ProtocolStep::SubmitResult => "submit_result",
            ProtocolStep::DeliverResponse => "deliver_response",
            ProtocolStep::QuorumApprove => "quorum_approve",
            ProtocolStep::Settle => "settle",
            ProtocolStep::QuorumReject => "quorum_reject",
            ProtocolStep::DeadlineExpired => "deadline_expired",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContractEvent {
    pub time: Tick,
    pub actor: AccountId,
    pub step: ProtocolStep,
    pub detail: String,
}

/// What the customer is buying.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub task_kind: String,
    pub required_capability: String,
    pub work_duration: Tick,
    pub success_probability: f64,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
}

impl ServiceSpec {
    pub fn validate(&self) -> Result<(), ContractError> {
        if self.task_kind.is_empty() {
            return Err(ContractError::InvalidSpec("task_kind is empty".into()));
        }
        if self.required_capability.is_empty() {
            return Err(ContractError::InvalidSpec(
                "required_capability is empty".into(),
            ));
        }
        if self.work_duration == 0 {
            return Err(ContractError::InvalidSpec("work_duration is zero".into()));
        }
        if !self.success_probability.is_finite()
            || !(0.0..=1.0).contains(&self.success_probability)
        {
            return Err(ContractError::InvalidSpec(
                "success_probability outside [0, 1]".into(),
            ));
        }
        if self.parameters.values().any(|v| !v.is_finite()) {
            return Err(ContractError::InvalidSpec(
                "parameters must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Result of executing the service, as reported by the provider.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ServiceOutcome {
    pub success: bool,
    pub evidence_digest: Digest,
}

/// A provider's offer to do the work for `bid`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Quote {
    pub provider: AccountId,
    pub bid: Cents,
    pub time: Tick,
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ContractError {
    #[error("customer {0} is not a robot account")]
    NonRobotCustomer(String),
    #[error("provider {0} is not a robot account")]
    NonRobotProvider(String),
    #[error("{account} cannot cover the price: {available} available, {price} required")]
    InsufficientFunds {
        account: String,
        available: Cents,
        price: Cents,
    },
    #[error("invalid service terms: {0}")]
    InvalidSpec(String),
    #[error("provider {provider} lacks required capability {required}")]
    CapabilityMismatch { provider: String, required: String },
    #[error("contract {0} is past its deadline")]
    Expired(String),
    #[error("contract {0} already has a provider")]
    AlreadyAccepted(String),
    #[error("contract {contract} is {actual:?}; this operation needs {expected:?}")]
    InvalidState {
        contract: String,
        expected: ContractState,
        actual: ContractState,
    },
    #[error("{caller} is not the party allowed to do this on contract {contract}")]
    WrongCaller { contract: String, caller: String },
    #[error("bid {bid} from {provider} exceeds the posted price {price}")]
    BidAbovePrice {
        provider: String,
        bid: Cents,
        price: Cents,
    },
    #[error("{0} already quoted on this contract")]
    DuplicateQuote(String),
    #[error("vote from {0} was not solicited or already counted")]
    UnexpectedVote(String),
    #[error("tally needs every vote: have {have} of {expect}")]
    VotesOutstanding { have: usize, expect: usize },
}

/// More approvals than half the voters, strictly.
pub fn strict_majority(approvals: usize, voters: usize) -> bool {
    2 * approvals > voters
}

#[derive(Clone, Debug)]
pub struct SmartContract {
    contract_id: String,
    customer: AccountId,
    provider: Option<AccountId>,
    escrow_account: AccountId,
    price: Cents,
    spec: ServiceSpec,
    state: ContractState,
    deadline: Tick,
    event_log: Vec<ContractEvent>,
    customer_signature: Signature,
    provider_signature: Option<Signature>,
    quotes: Vec<Quote>,
    outcome: Option<ServiceOutcome>,
    delivered_digest: Option<Digest>,
    votes: Vec<(AccountId, bool)>,
    expected_votes: usize,
}

/// The terms the customer signs. Parameter values are committed by their
/// IEEE-754 bit patterns so the signed bytes stay integer-only.
#[derive(Serialize)]
struct TermsView<'a> {
    contract_id: &'a str,
    customer: &'a AccountId,
    price: Cents,
    deadline: Tick,
    task_kind: &'a str,
    required_capability: &'a str,
    work_duration: Tick,
    success_probability_bits: u64,
    parameters_bits: BTreeMap<&'a str, u64>,
}

/// What the provider signs: the terms digest plus its own identity.
#[derive(Serialize)]
struct AcceptanceView<'a> {
    contract_id: &'a str,
    provider: &'a AccountId,
    terms_digest: Digest,
}

impl SmartContract {
    /// Step 1: the customer posts the contract. The price is fixed here
    /// and must already be covered by the customer's uncommitted balance.
    #[allow(clippy::too_many_arguments)]
    pub fn create(
        contract_id: String,
        customer: AccountId,
        available_balance: Cents,
        spec: ServiceSpec,
        price: Cents,
        deadline: Tick,
        now: Tick,
        scheme: &dyn SignatureScheme,
    ) -> Result<SmartContract, ContractError> {
        if customer.kind != AccountKind::Robot {
            return Err(ContractError::NonRobotCustomer(customer.to_string()));
        }
        spec.validate()?;
        if price.is_negative() {
            return Err(ContractError::InvalidSpec("price is negative".into()));
        }
        if deadline <= now {
            return Err(ContractError::InvalidSpec(
                "deadline is not in the future".into(),
            ));
        }
        if available_balance < price {
            return Err(ContractError::InsufficientFunds {
                account: customer.to_string(),
                available: available_balance,
                price,
            });
        }

        let escrow_account = AccountId::contract(contract_id.clone());
        let mut contract = SmartContract {
            contract_id,
            customer: customer.clone(),
            provider: None,
            escrow_account,
            price,
            spec,
            state: ContractState::Created,
            deadline,
            event_log: Vec::new(),
            customer_signature: Signature::empty(),
            provider_signature: None,
            quotes: Vec::new(),
            outcome: None,
            delivered_digest: None,
            votes: Vec::new(),
            expected_votes: 0,
        };
        contract.customer_signature = scheme.sign(&customer, &contract.terms_bytes());
        let detail = format!("{} for {}", contract.price, contract.spec.task_kind);
        contract.log(now, customer, ProtocolStep::Create, detail);
        Ok(contract)
    }

    pub fn contract_id(&self) -> &str {
        &self.contract_id
    }

    pub fn customer(&self) -> &AccountId {
        &self.customer
    }

    pub fn provider(&self) -> Option<&AccountId> {
        self.provider.as_ref()
    }

    pub fn escrow_account(&self) -> &AccountId {
        &self.escrow_account
    }

    pub fn price(&self) -> Cents {
        self.price
    }

    pub fn spec(&self) -> &ServiceSpec {
        &self.spec
    }

    pub fn state(&self) -> ContractState {
        self.state
    }

    pub fn deadline(&self) -> Tick {
        self.deadline
    }

    pub fn event_log(&self) -> &[ContractEvent] {
        &self.event_log
    }

    pub fn outcome(&self) -> Option<&ServiceOutcome> {
        self.outcome.as_ref()
    }

    pub fn delivered_digest(&self) -> Option<Digest> {
        self.delivered_digest
    }

    pub fn quotes(&self) -> &[Quote] {
        &self.quotes
    }

    /// Canonical bytes of the terms covered by the customer signature.
    pub fn terms_bytes(&self) -> Vec<u8> {
        let view = TermsView {
            contract_id: &self.contract_id,
            customer: &self.customer,
            price: self.price,
            deadline: self.deadline,
            task_kind: &self.spec.task_kind,
            required_capability: &self.spec.required_capability,
            work_duration: self.spec.work_duration,
            success_probability_bits: self.spec.success_probability.to_bits(),
            parameters_bits: self
                .spec
                .parameters
                .iter()
                .map(|(k, v)| (k.as_str(), v.to_bits()))
                .collect(),
        };
        to_canonical_bytes(&view).expect("terms encode without floats")
    }

    /// Canonical bytes covered by the provider signature.
    pub fn acceptance_bytes(&self, provider: &AccountId) -> Vec<u8> {
        let view = AcceptanceView {
            contract_id: &self.contract_id,
            provider,
            terms_digest: Digest::of(&self.terms_bytes()),
        };
        to_canonical_bytes(&view).expect("acceptance encodes without floats")
    }

    /// Both party signatures check out against the recorded terms.
    pub fn signatures_valid(&self, scheme: &dyn SignatureScheme) -> bool {
        if !scheme.verify(&self.customer, &self.terms_bytes(), &self.customer_signature) {
            return false;
        }
        match (&self.provider, &self.provider_signature) {
            (Some(provider), Some(signature)) => {
                scheme.verify(provider, &self.acceptance_bytes(provider), signature)
            }
            (None, None) => true,
            _ => false,
        }
    }

    /// Records a provider's offer while the contract is still open.
    pub fn record_quote(&mut self, quote: Quote) -> Result<(), ContractError> {
        if self.state != ContractState::Created {
            return Err(self.invalid_state(ContractState::Created));
        }
        if quote.bid > self.price {
            return Err(ContractError::BidAbovePrice {
                provider: quote.provider.to_string(),
                bid: quote.bid,
                price: self.price,
            });
        }
        if self.quotes.iter().any(|q| q.provider == quote.provider) {
            return Err(ContractError::DuplicateQuote(quote.provider.to_string()));
        }
        self.quotes.push(quote);
        Ok(())
    }

    /// Lowest bid wins; ties go to the lexicographically smaller provider
    /// label so selection is deterministic.
    pub fn select_winner(&self) -> Option<&Quote> {
        self.quotes
            .iter()
            .min_by_key(|q| (q.bid, q.provider.label.clone()))
    }

    /// Step 2: a capable provider takes the job. Returns the escrow
    /// transfer that locks the price; the caller must get it on-chain.
    pub fn accept(
        &mut self,
        provider: AccountId,
        provider_capabilities: &BTreeSet<String>,
        now: Tick,
        scheme: &dyn SignatureScheme,
    ) -> Result<TxIntent, ContractError> {
        match self.state {
            ContractState::Created => {}
            ContractState::Expired => return Err(ContractError::Expired(self.contract_id.clone())),
            _ => return Err(ContractError::AlreadyAccepted(self.contract_id.clone())),
        }
        if now >= self.deadline {
            return Err(ContractError::Expired(self.contract_id.clone()));
        }
        if provider.kind != AccountKind::Robot {
            return Err(ContractError::NonRobotProvider(provider.to_string()));
        }
        if !provider_capabilities.contains(&self.spec.required_capability) {
            return Err(ContractError::CapabilityMismatch {
                provider: provider.to_string(),
                required: self.spec.required_capability.clone(),
            });
        }

        self.provider_signature = Some(scheme.sign(&provider, &self.acceptance_bytes(&provider)));
        self.provider = Some(provider.clone());
        self.state = ContractState::Accepted;
        let detail = format!("by {}", provider.label);
        self.log(now, provider, ProtocolStep::Accept, detail);
        Ok(TxIntent {
            from: self.customer.clone(),
            to: self.escrow_account.clone(),
            amount: self.price,
            contract_ref: Some(self.contract_id.clone()),
            memo: Memo::Escrow,
        })
    }

    /// Step 3: the provider reports the executed work.
    pub fn submit_result(
        &mut self,
        caller: &AccountId,
        outcome: ServiceOutcome,
        now: Tick,
    ) -> Result<(), ContractError> {
        if self.state != ContractState::Accepted {
            return Err(self.invalid_state(ContractState::Accepted));
        }
        if Some(caller) != self.provider.as_ref() {
            return Err(ContractError::WrongCaller {
                contract: self.contract_id.clone(),
                caller: caller.to_string(),
            });
        }
        self.outcome = Some(outcome);
        self.state = ContractState::Executed;
        let detail = format!(
            "success={} evidence={}",
            outcome.success,
            &outcome.evidence_digest.to_hex()[..12]
        );
        self.log(now, caller.clone(), ProtocolStep::SubmitResult, detail);
        Ok(())
    }

    /// Step 4: the customer confirms receipt of the response, recording
    /// the evidence digest exactly as it arrived.
    pub fn deliver_response(
        &mut self,
        digest_received: Digest,
        now: Tick,
    ) -> Result<(), ContractError> {
        if self.state != ContractState::Executed {
            return Err(self.invalid_state(ContractState::Executed));
        }
        self.delivered_digest = Some(digest_received);
        self.state = ContractState::Delivered;
        let detail = format!("evidence={}", &digest_received.to_hex()[..12]);
        self.log(
            now,
            self.customer.clone(),
            ProtocolStep::DeliverResponse,
            detail,
        );
        Ok(())
    }

    /// Opens the validation round and fixes how many votes are expected.
    pub fn begin_validation(&mut self, expected_votes: usize) -> Result<(), ContractError> {
        if self.state != ContractState::Delivered {
            return Err(self.invalid_state(ContractState::Delivered));
        }
        self.votes.clear();
        self.expected_votes = expected_votes;
        Ok(())
    }

    /// Records one peer's vote. Each solicited peer votes at most once.
    pub fn record_vote(&mut self, peer: AccountId, approve: bool) -> Result<(), ContractError> {
        if self.state != ContractState::Delivered {
            return Err(self.invalid_state(ContractState::Delivered));
        }
        if self.expected_votes == 0
            || self.votes.len() >= self.expected_votes
            || self.votes.iter().any(|(voter, _)| *voter == peer)
        {
            return Err(ContractError::UnexpectedVote(peer.to_string()));
        }
        self.votes.push((peer, approve));
        Ok(())
    }

    pub fn all_votes_in(&self) -> bool {
        self.expected_votes > 0 && self.votes.len() == self.expected_votes
    }

    /// Step 5 or the quorum-reject exit: counts the votes under strict
    /// majority. Returns whether the quorum approved.
    pub fn tally(&mut self, actor: AccountId, now: Tick) -> Result<bool, ContractError> {
        if self.state != ContractState::Delivered {
            return Err(self.invalid_state(ContractState::Delivered));
        }
        if !self.all_votes_in() {
            return Err(ContractError::VotesOutstanding {
                have: self.votes.len(),
                expect: self.expected_votes,
            });
        }
        let approvals = self.votes.iter().filter(|(_, approve)| *approve).count();
        let approved = strict_majority(approvals, self.expected_votes);
        if approved {
            self.state = ContractState::Validated;
            let detail = format!("approved {approvals}/{}", self.expected_votes);
            self.log(now, actor, ProtocolStep::QuorumApprove, detail);
        } else {
            self.state = ContractState::Rejected;
            let detail = format!(
                "approved {approvals}/{}; escrow owed back to customer",
                self.expected_votes
            );
            self.log(now, actor, ProtocolStep::QuorumReject, detail);
        }
        Ok(approved)
    }

    /// Step 6: pays the escrowed price to the provider.
    pub fn settle(&mut self, now: Tick) -> Result<TxIntent, ContractError> {
        if self.state != ContractState::Validated {
            return Err(self.invalid_state(ContractState::Validated));
        }
        let provider = self.provider.clone().expect("validated contract has provider");
        self.state = ContractState::Settled;
        let detail = format!("{} to {}", self.price, provider.label);
        self.log(
            now,
            self.escrow_account.clone(),
            ProtocolStep::Settle,
            detail,
        );
        Ok(TxIntent {
            from: self.escrow_account.clone(),
            to: provider,
            amount: self.price,
            contract_ref: Some(self.contract_id.clone()),
            memo: Memo::Settlement,
        })
    }

    /// Returns the escrow to the customer after a quorum rejection. The
    /// rejection entry already marks the failure, so no new event is
    /// logged.
    pub fn refund_rejected(&mut self) -> Result<TxIntent, ContractError> {
        if self.state != ContractState::Rejected {
            return Err(self.invalid_state(ContractState::Rejected));
        }
        self.state = ContractState::Refunded;
        Ok(TxIntent {
            from: self.escrow_account.clone(),
            to: self.customer.clone(),
            amount: self.price,
            contract_ref: Some(self.contract_id.clone()),
            memo: Memo::Refund,
        })
    }

    /// Deadline processing. Unaccepted contracts expire; in-flight ones
    /// refund their escrow; anything else is unaffected.
    pub fn deadline_passed(&mut self, now: Tick) -> TimeoutOutcome {
        match self.state {
            ContractState::Created => {
                self.state = ContractState::Expired;
                self.log(
                    now,
                    self.customer.clone(),
                    ProtocolStep::DeadlineExpired,
                    "no provider before deadline".into(),
                );
                TimeoutOutcome::Expired
            }
            ContractState::Accepted | ContractState::Executed | ContractState::Delivered => {
                self.state = ContractState::Refunded;
                self.log(
                    now,
                    self.escrow_account.clone(),
                    ProtocolStep::DeadlineExpired,
                    format!("{} returned to {}", self.price, self.customer.label),
                );
                TimeoutOutcome::RefundDue(TxIntent {
                    from: self.escrow_account.clone(),
                    to: self.customer.clone(),
                    amount: self.price,
                    contract_ref: Some(self.contract_id.clone()),
                    memo: Memo::Refund,
                })
            }
            _ => TimeoutOutcome::Unaffected,
        }
    }

    fn invalid_state(&self, expected: ContractState) -> ContractError {
        ContractError::InvalidState {
            contract: self.contract_id.clone(),
            expected,
            actual: self.state,
        }
    }

    fn log(&mut self, time: Tick, actor: AccountId, step: ProtocolStep, detail: String) {
        debug_assert!(
            self.event_log.last().is_none_or(|last| time > last.time),
            "event log must stay strictly time-ordered"
        );
        self.event_log.push(ContractEvent {
            time,
            actor,
            step,
            detail,
        });
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TimeoutOutcome {
    /// Created and never accepted: no escrow existed, nothing to move.
    Expired,
    /// Escrow was locked and must go back to the customer.
    RefundDue(TxIntent),
    /// The deadline no longer matters in this state.
    Unaffected,
}
