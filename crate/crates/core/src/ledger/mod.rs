//! Minimal single-miner proof-of-work ledger.
//!
//! One logical miner extends the chain; peers hold replicas and re-validate
//! every block. There are no forks, no mining rewards, and no fees, so the
//! sum of all balances equals the sum of genesis endowments at every
//! height. Blocks are hashed over their canonical JSON encoding, and every
//! validation failure is reported as a verdict naming the failing height
//! and rule rather than as a panic.

mod account;
mod block;
mod canonical;
mod hash;
mod pool;
mod sign;
mod tx;

pub use account::{AccountId, AccountKind};
pub use block::{mine_block, Block, MiningError, NONCE_SEARCH_BOUND};
pub use canonical::{to_canonical_bytes, CanonicalError};
pub use hash::Digest;
pub use pool::Mempool;
pub use sign::{KeyedDigestScheme, Signature, SignatureScheme};
pub use tx::{Memo, Transaction, TxIntent};

use crate::currency::Cents;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, BufRead, Write};
use thiserror::Error;

/// Why a block was refused. Doubles as the named rule in verdicts.
#[derive(Clone, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RejectReason {
    #[error("expected block height {expected}, found {found}")]
    WrongHeight { expected: u64, found: u64 },
    #[error("prev_hash does not match the chain tip")]
    BrokenLinkage,
    #[error("block hash does not meet its stated difficulty")]
    PowUnsatisfied,
    #[error("stored block hash does not match block contents")]
    HashMismatch,
    #[error("transaction {tx_id} has a negative amount")]
    NegativeAmount { tx_id: String },
    #[error("transaction {tx_id} carries an invalid signature")]
    BadSignature { tx_id: String },
    #[error("endowment {tx_id} appears outside the genesis block")]
    EndowmentOutsideGenesis { tx_id: String },
    #[error("endowment {tx_id} must self-credit and carry no contract_ref")]
    MalformedEndowment { tx_id: String },
    #[error("transaction {tx_id} needs a contract_ref for its memo")]
    MissingContractRef { tx_id: String },
    #[error("transaction {tx_id} must not carry a contract_ref")]
    UnexpectedContractRef { tx_id: String },
    #[error("transaction {tx_id} does not route through the escrow account it names")]
    EscrowShape { tx_id: String },
    #[error("transaction {tx_id} repeats an already-seen id")]
    DuplicateTxId { tx_id: String },
    #[error("label {label} is already bound to a different account kind")]
    AccountKindConflict { label: String },
    #[error("transaction {tx_id} overdraws {account}")]
    InsufficientFunds { tx_id: String, account: String },
}

/// Outcome of validating one block against a chain prefix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BlockVerdict {
    Accept,
    Reject(RejectReason),
}

/// Outcome of validating a whole chain from genesis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ChainVerdict {
    Accept,
    Reject { height: u64, reason: RejectReason },
}

impl fmt::Display for ChainVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainVerdict::Accept => f.write_str("Accept"),
            ChainVerdict::Reject { height, reason } => {
                write!(f, "Reject at height {height}: {reason}")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("unknown account {account}")]
    UnknownAccount { account: String },
    #[error("block rejected: {reason}")]
    RejectedBlock { reason: RejectReason },
}

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("malformed chain export at line {line}: {source}")]
    MalformedExport {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// The authoritative chain plus derived state for fast queries. Derived
/// state (balances, known labels, seen tx ids) is rebuilt identically by
/// any replica that replays the same blocks.
#[derive(Clone, Debug, Default)]
pub struct Chain {
    blocks: Vec<Block>,
    balances: BTreeMap<AccountId, Cents>,
    kinds: BTreeMap<String, AccountKind>,
    tx_ids: BTreeSet<String>,
    total_endowment: Cents,
}

impl Chain {
    pub fn new() -> Chain {
        Chain::default()
    }

    /// Replays and validates a block sequence into a chain.
    pub fn from_blocks(
        blocks: Vec<Block>,
        scheme: &dyn SignatureScheme,
    ) -> Result<Chain, ChainVerdict> {
        let mut chain = Chain::new();
        for block in blocks {
            let height = chain.next_height();
            chain
                .append_block(block, scheme)
                .map_err(|reason| ChainVerdict::Reject { height, reason })?;
        }
        Ok(chain)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn next_height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn tip_hash(&self) -> Digest {
        self.blocks
            .last()
            .map(|b| b.block_hash)
            .unwrap_or(Digest::ZERO)
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn tx_count(&self) -> usize {
        self.tx_ids.len()
    }

    pub fn contains_tx(&self, tx_id: &str) -> bool {
        self.tx_ids.contains(tx_id)
    }

    /// Kind bound to a label, if the label has appeared on-chain.
    pub fn kind_of_label(&self, label: &str) -> Option<AccountKind> {
        self.kinds.get(label).copied()
    }

    /// All transactions in chain order, tagged with their block height.
    pub fn transactions(&self) -> impl Iterator<Item = (u64, &Transaction)> {
        self.blocks
            .iter()
            .flat_map(|b| b.transactions.iter().map(move |tx| (b.height, tx)))
    }

    /// Current balance of an account that has appeared on-chain.
    pub fn balance_of(&self, account: &AccountId) -> Result<Cents, LedgerError> {
        match self.kinds.get(&account.label) {
            Some(kind) if *kind == account.kind => {
                Ok(self.balances.get(account).copied().unwrap_or(Cents::ZERO))
            }
            _ => Err(LedgerError::UnknownAccount {
                account: account.to_string(),
            }),
        }
    }

    pub fn balances(&self) -> impl Iterator<Item = (&AccountId, Cents)> {
        self.balances.iter().map(|(id, amount)| (id, *amount))
    }

    pub fn sum_of_balances(&self) -> Cents {
        self.balances.values().copied().sum()
    }

    pub fn total_endowment(&self) -> Cents {
        self.total_endowment
    }

    /// No money created or destroyed since genesis.
    pub fn conserves_endowment(&self) -> bool {
        self.sum_of_balances() == self.total_endowment
            && self.balances.values().all(|b| !b.is_negative())
    }

    /// Checks one candidate block against this chain as its prefix. The
    /// order is fixed: height, linkage, proof-of-work, hash integrity, then
    /// per-transaction checks with funds last.
    pub fn validate_block(&self, block: &Block, scheme: &dyn SignatureScheme) -> BlockVerdict {
        use BlockVerdict::Reject;

        let expected = self.next_height();
        if block.height != expected {
            return Reject(RejectReason::WrongHeight {
                expected,
                found: block.height,
            });
        }
        if block.prev_hash != self.tip_hash() {
            return Reject(RejectReason::BrokenLinkage);
        }
        if !block.satisfies_pow() {
            return Reject(RejectReason::PowUnsatisfied);
        }
        if block.compute_hash() != block.block_hash {
            return Reject(RejectReason::HashMismatch);
        }

        let genesis = block.height == 0;
        let mut deltas: BTreeMap<AccountId, Cents> = BTreeMap::new();
        let mut new_kinds: BTreeMap<&str, AccountKind> = BTreeMap::new();
        let mut seen_ids: BTreeSet<&str> = BTreeSet::new();

        for tx in &block.transactions {
            if tx.amount.is_negative() {
                return Reject(RejectReason::NegativeAmount {
                    tx_id: tx.tx_id.clone(),
                });
            }
            if !tx.verify_signature(scheme) {
                return Reject(RejectReason::BadSignature {
                    tx_id: tx.tx_id.clone(),
                });
            }
            if let Some(reason) = memo_shape_error(tx, genesis) {
                return Reject(reason);
            }
            if self.tx_ids.contains(&tx.tx_id) || !seen_ids.insert(tx.tx_id.as_str()) {
                return Reject(RejectReason::DuplicateTxId {
                    tx_id: tx.tx_id.clone(),
                });
            }
            for account in [&tx.from, &tx.to] {
                let known = self
                    .kinds
                    .get(&account.label)
                    .or_else(|| new_kinds.get(account.label.as_str()))
                    .copied();
                match known {
                    Some(kind) if kind != account.kind => {
                        return Reject(RejectReason::AccountKindConflict {
                            label: account.label.clone(),
                        });
                    }
                    Some(_) => {}
                    None => {
                        new_kinds.insert(account.label.as_str(), account.kind);
                    }
                }
            }
            if tx.memo == Memo::Endowment {
                *deltas.entry(tx.to.clone()).or_insert(Cents::ZERO) += tx.amount;
            } else {
                let available = self.balances.get(&tx.from).copied().unwrap_or(Cents::ZERO)
                    + deltas.get(&tx.from).copied().unwrap_or(Cents::ZERO);
                if available < tx.amount {
                    return Reject(RejectReason::InsufficientFunds {
                        tx_id: tx.tx_id.clone(),
                        account: tx.from.to_string(),
                    });
                }
                *deltas.entry(tx.from.clone()).or_insert(Cents::ZERO) -= tx.amount;
                *deltas.entry(tx.to.clone()).or_insert(Cents::ZERO) += tx.amount;
            }
        }

        BlockVerdict::Accept
    }

    /// Validates and appends; on success the derived state advances.
    pub fn append_block(
        &mut self,
        block: Block,
        scheme: &dyn SignatureScheme,
    ) -> Result<(), RejectReason> {
        match self.validate_block(&block, scheme) {
            BlockVerdict::Accept => {
                self.apply(block);
                Ok(())
            }
            BlockVerdict::Reject(reason) => Err(reason),
        }
    }

    fn apply(&mut self, block: Block) {
        for tx in &block.transactions {
            self.tx_ids.insert(tx.tx_id.clone());
            self.kinds
                .entry(tx.from.label.clone())
                .or_insert(tx.from.kind);
            self.kinds.entry(tx.to.label.clone()).or_insert(tx.to.kind);
            if tx.memo == Memo::Endowment {
                *self.balances.entry(tx.to.clone()).or_insert(Cents::ZERO) += tx.amount;
                self.total_endowment += tx.amount;
            } else {
                *self.balances.entry(tx.from.clone()).or_insert(Cents::ZERO) -= tx.amount;
                *self.balances.entry(tx.to.clone()).or_insert(Cents::ZERO) += tx.amount;
            }
        }
        self.blocks.push(block);
    }

    /// Full re-validation from genesis. The reported height is the position
    /// at which replay first fails.
    pub fn verdict(&self, scheme: &dyn SignatureScheme) -> ChainVerdict {
        validate_chain(&self.blocks, scheme)
    }

    /// Writes one canonical-JSON block per line, in height order.
    pub fn export_jsonl(&self, out: &mut dyn Write) -> io::Result<()> {
        for block in &self.blocks {
            let bytes =
                to_canonical_bytes(block).expect("blocks always encode to canonical JSON");
            out.write_all(&bytes)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn memo_shape_error(tx: &Transaction, genesis: bool) -> Option<RejectReason> {
    match tx.memo {
        Memo::Endowment => {
            if !genesis {
                return Some(RejectReason::EndowmentOutsideGenesis {
                    tx_id: tx.tx_id.clone(),
                });
            }
            if tx.from != tx.to || tx.contract_ref.is_some() {
                return Some(RejectReason::MalformedEndowment {
                    tx_id: tx.tx_id.clone(),
                });
            }
            None
        }
        Memo::Escrow | Memo::Settlement | Memo::Refund => {
            let Some(contract_ref) = &tx.contract_ref else {
                return Some(RejectReason::MissingContractRef {
                    tx_id: tx.tx_id.clone(),
                });
            };
            let escrow_side = if tx.memo == Memo::Escrow {
                &tx.to
            } else {
                &tx.from
            };
            if escrow_side.kind != AccountKind::Contract || escrow_side.label != *contract_ref {
                return Some(RejectReason::EscrowShape {
                    tx_id: tx.tx_id.clone(),
                });
            }
            None
        }
        Memo::Sweep => {
            if tx.contract_ref.is_some() {
                return Some(RejectReason::UnexpectedContractRef {
                    tx_id: tx.tx_id.clone(),
                });
            }
            None
        }
    }
}

/// Validates a block sequence from genesis, reporting the first failure.
pub fn validate_chain(blocks: &[Block], scheme: &dyn SignatureScheme) -> ChainVerdict {
    let mut chain = Chain::new();
    for block in blocks {
        let height = chain.next_height();
        match chain.validate_block(block, scheme) {
            BlockVerdict::Accept => chain.apply(block.clone()),
            BlockVerdict::Reject(reason) => return ChainVerdict::Reject { height, reason },
        }
    }
    ChainVerdict::Accept
}

/// Parses a JSON-lines chain export. Validation is a separate step.
pub fn import_blocks(reader: impl BufRead) -> Result<Vec<Block>, ImportError> {
    let mut blocks = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let block = serde_json::from_str(&line).map_err(|source| ImportError::MalformedExport {
            line: index + 1,
            source,
        })?;
        blocks.push(block);
    }
    Ok(blocks)
}
