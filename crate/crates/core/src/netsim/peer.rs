//! Validating peers holding chain replicas.

use crate::contracts::{ContractState, SmartContract};
use crate::ledger::{AccountId, Block, Chain, Memo, RejectReason, SignatureScheme};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Honest peers vote on what they can verify; faulty-reject peers vote no
/// regardless, modelling a stuck or hostile validator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeerHonesty {
    Honest,
    FaultyReject,
}

#[derive(Debug, Error)]
pub enum ReplicaError {
    #[error("peer {peer} rejected broadcast block at height {height}: {reason}")]
    BadBlock {
        peer: String,
        height: u64,
        reason: RejectReason,
    },
}

/// One validator node: an identity, a full chain replica, and a vote
/// policy.
#[derive(Debug)]
pub struct PeerNode {
    account: AccountId,
    honesty: PeerHonesty,
    replica: Chain,
    buffered: BTreeMap<u64, Block>,
}

impl PeerNode {
    pub fn new(account: AccountId, honesty: PeerHonesty) -> PeerNode {
        PeerNode {
            account,
            honesty,
            replica: Chain::new(),
            buffered: BTreeMap::new(),
        }
    }

    pub fn account(&self) -> &AccountId {
        &self.account
    }

    pub fn honesty(&self) -> PeerHonesty {
        self.honesty
    }

    pub fn replica(&self) -> &Chain {
        &self.replica
    }

    /// Ingests a broadcast block. Blocks can arrive out of order when a
    /// retransmission overtakes a later height, so future blocks are
    /// buffered until the gap fills; stale duplicates are dropped. Returns
    /// how many blocks were appended to the replica.
    pub fn receive_block(
        &mut self,
        block: Block,
        scheme: &dyn SignatureScheme,
    ) -> Result<usize, ReplicaError> {
        if block.height < self.replica.next_height() {
            return Ok(0);
        }
        self.buffered.insert(block.height, block);
        let mut applied = 0;
        while let Some(next) = self.buffered.remove(&self.replica.next_height()) {
            let height = next.height;
            self.replica
                .append_block(next, scheme)
                .map_err(|reason| ReplicaError::BadBlock {
                    peer: self.account.label.clone(),
                    height,
                    reason,
                })?;
            applied += 1;
        }
        Ok(applied)
    }

    /// This peer's vote on a delivered contract.
    pub fn evaluate(&self, contract: &SmartContract, scheme: &dyn SignatureScheme) -> bool {
        match self.honesty {
            PeerHonesty::FaultyReject => false,
            PeerHonesty::Honest => self.honest_checks(contract, scheme),
        }
    }

    /// An honest peer independently re-checks everything it can see: both
    /// party signatures, the escrow lock on its own replica, that the
    /// delivered evidence digest matches what the provider reported, and
    /// that the provider reported success.
    fn honest_checks(&self, contract: &SmartContract, scheme: &dyn SignatureScheme) -> bool {
        if contract.state() != ContractState::Delivered || contract.provider().is_none() {
            return false;
        }
        if !contract.signatures_valid(scheme) {
            return false;
        }
        let escrow_locked = self.replica.transactions().any(|(_, tx)| {
            tx.memo == Memo::Escrow
                && tx.contract_ref.as_deref() == Some(contract.contract_id())
                && tx.from == *contract.customer()
                && tx.to == *contract.escrow_account()
                && tx.amount == contract.price()
        });
        if !escrow_locked {
            return false;
        }
        match (contract.outcome(), contract.delivered_digest()) {
            (Some(outcome), Some(delivered)) => {
                outcome.evidence_digest == delivered && outcome.success
            }
            _ => false,
        }
    }
}
