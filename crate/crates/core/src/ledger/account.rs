//! Account identities on the ledger.

use serde::{Deserialize, Serialize};
use std::fmt;

/// What kind of principal stands behind an account. Contract accounts are
/// created by the escrow mechanism and are never operated directly.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum AccountKind {
    Human,
    Robot,
    Contract,
}

impl AccountKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AccountKind::Human => "human",
            AccountKind::Robot => "robot",
            AccountKind::Contract => "contract",
        }
    }
}

/// A ledger account: a kind plus a label unique across all kinds.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AccountId {
    pub kind: AccountKind,
    pub label: String,
}

impl AccountId {
    pub fn human(label: impl Into<String>) -> AccountId {
        AccountId {
            kind: AccountKind::Human,
            label: label.into(),
        }
    }

    pub fn robot(label: impl Into<String>) -> AccountId {
        AccountId {
            kind: AccountKind::Robot,
            label: label.into(),
        }
    }

    pub fn contract(label: impl Into<String>) -> AccountId {
        AccountId {
            kind: AccountKind::Contract,
            label: label.into(),
        }
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.as_str(), self.label)
    }
}
