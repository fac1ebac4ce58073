//! Transactions: the only way value moves between accounts.

use super::account::AccountId;
use super::canonical::to_canonical_bytes;
use super::sign::{Signature, SignatureScheme};
use crate::currency::Cents;
use serde::{Deserialize, Serialize};

/// Why a transaction exists. Endowments mint the initial balances in the
/// genesis block; everything after that only moves existing money.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Memo {
    Endowment,
    Escrow,
    Settlement,
    Refund,
    Sweep,
}

impl Memo {
    pub fn as_str(self) -> &'static str {
        match self {
            Memo::Endowment => "endowment",
            Memo::Escrow => "escrow",
            Memo::Settlement => "settlement",
            Memo::Refund => "refund",
            Memo::Sweep => "sweep",
        }
    }

    /// Escrow movements must name the contract they belong to.
    pub fn requires_contract_ref(self) -> bool {
        matches!(self, Memo::Escrow | Memo::Settlement | Memo::Refund)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub tx_id: String,
    pub from: AccountId,
    pub to: AccountId,
    pub amount: Cents,
    pub contract_ref: Option<String>,
    pub memo: Memo,
    pub authorization: Signature,
}

/// The signed portion of a transaction: every field except the
/// authorization itself.
#[derive(Serialize)]
struct SigningView<'a> {
    tx_id: &'a str,
    from: &'a AccountId,
    to: &'a AccountId,
    amount: Cents,
    contract_ref: &'a Option<String>,
    memo: Memo,
}

impl Transaction {
    /// Canonical bytes covered by the authorization signature.
    pub fn signing_bytes(&self) -> Vec<u8> {
        let view = SigningView {
            tx_id: &self.tx_id,
            from: &self.from,
            to: &self.to,
            amount: self.amount,
            contract_ref: &self.contract_ref,
            memo: self.memo,
        };
        to_canonical_bytes(&view).expect("transactions contain no floats")
    }

    /// Signs with the `from` account's key and returns the finished
    /// transaction.
    pub fn signed(mut self, scheme: &dyn SignatureScheme) -> Transaction {
        self.authorization = scheme.sign(&self.from, &self.signing_bytes());
        self
    }

    pub fn verify_signature(&self, scheme: &dyn SignatureScheme) -> bool {
        scheme.verify(&self.from, &self.signing_bytes(), &self.authorization)
    }

    /// Genesis mint: credits an account with its starting balance. The
    /// account self-signs, so `from == to`.
    pub fn endowment(account: AccountId, amount: Cents) -> Transaction {
        Transaction {
            tx_id: format!("endow-{}", account.label),
            from: account.clone(),
            to: account,
            amount,
            contract_ref: None,
            memo: Memo::Endowment,
            authorization: Signature::empty(),
        }
    }
}

/// A transfer some component wants recorded, before it has an id or a
/// signature. The engine assigns the id, signs as `from`, and submits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TxIntent {
    pub from: AccountId,
    pub to: AccountId,
    pub amount: Cents,
    pub contract_ref: Option<String>,
    pub memo: Memo,
}

impl TxIntent {
    pub fn into_transaction(self, tx_id: String, scheme: &dyn SignatureScheme) -> Transaction {
        Transaction {
            tx_id,
            from: self.from,
            to: self.to,
            amount: self.amount,
            contract_ref: self.contract_ref,
            memo: self.memo,
            authorization: Signature::empty(),
        }
        .signed(scheme)
    }
}
