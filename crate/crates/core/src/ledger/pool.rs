//! Pending-transaction pool with effective-balance admission.
//!
//! A transaction is admitted only if the sender can still cover it after
//! every debit already queued ahead of it, so any batch the miner takes is
//! guaranteed to validate against funds when mined in order.

use super::account::{AccountId, AccountKind};
use super::tx::{Memo, Transaction};
use super::{memo_shape_error, Chain, RejectReason, SignatureScheme};
use crate::currency::Cents;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

#[derive(Debug, Default)]
pub struct Mempool {
    queue: VecDeque<Transaction>,
    pending_debits: BTreeMap<AccountId, Cents>,
    pending_ids: BTreeSet<String>,
    pending_kinds: BTreeMap<String, AccountKind>,
}

impl Mempool {
    pub fn new() -> Mempool {
        Mempool::default()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Debits queued against an account but not yet mined.
    pub fn pending_debit_of(&self, account: &AccountId) -> Cents {
        self.pending_debits
            .get(account)
            .copied()
            .unwrap_or(Cents::ZERO)
    }

    /// Admits a transaction or reports the rule it would break when mined.
    pub fn submit(
        &mut self,
        tx: Transaction,
        chain: &Chain,
        scheme: &dyn SignatureScheme,
    ) -> Result<(), RejectReason> {
        if tx.amount.is_negative() {
            return Err(RejectReason::NegativeAmount { tx_id: tx.tx_id });
        }
        if !tx.verify_signature(scheme) {
            return Err(RejectReason::BadSignature { tx_id: tx.tx_id });
        }
        if tx.memo == Memo::Endowment {
            return Err(RejectReason::EndowmentOutsideGenesis { tx_id: tx.tx_id });
        }
        if let Some(reason) = memo_shape_error(&tx, false) {
            return Err(reason);
        }
        if chain.contains_tx(&tx.tx_id) || self.pending_ids.contains(&tx.tx_id) {
            return Err(RejectReason::DuplicateTxId { tx_id: tx.tx_id });
        }
        for account in [&tx.from, &tx.to] {
            let known = chain
                .kind_of_label(&account.label)
                .or_else(|| self.pending_kinds.get(&account.label).copied());
            if known.is_some_and(|kind| kind != account.kind) {
                return Err(RejectReason::AccountKindConflict {
                    label: account.label.clone(),
                });
            }
        }
        let settled = chain.balance_of(&tx.from).unwrap_or(Cents::ZERO);
        let available = settled - self.pending_debit_of(&tx.from);
        if available < tx.amount {
            return Err(RejectReason::InsufficientFunds {
                tx_id: tx.tx_id,
                account: tx.from.to_string(),
            });
        }

        *self
            .pending_debits
            .entry(tx.from.clone())
            .or_insert(Cents::ZERO) += tx.amount;
        self.pending_ids.insert(tx.tx_id.clone());
        self.pending_kinds
            .entry(tx.from.label.clone())
            .or_insert(tx.from.kind);
        self.pending_kinds
            .entry(tx.to.label.clone())
            .or_insert(tx.to.kind);
        self.queue.push_back(tx);
        Ok(())
    }

    /// Takes up to `max` transactions in submission order for mining.
    pub fn take_batch(&mut self, max: usize) -> Vec<Transaction> {
        let count = max.min(self.queue.len());
        let batch: Vec<Transaction> = self.queue.drain(..count).collect();
        self.rebuild_pending();
        batch
    }

    fn rebuild_pending(&mut self) {
        self.pending_debits.clear();
        self.pending_ids.clear();
        self.pending_kinds.clear();
        for tx in &self.queue {
            *self
                .pending_debits
                .entry(tx.from.clone())
                .or_insert(Cents::ZERO) += tx.amount;
            self.pending_ids.insert(tx.tx_id.clone());
            self.pending_kinds
                .entry(tx.from.label.clone())
                .or_insert(tx.from.kind);
            self.pending_kinds
                .entry(tx.to.label.clone())
                .or_insert(tx.to.kind);
        }
    }
}
