//! Pluggable transaction authorization.
//!
//! Production deployments would slot a real public-key scheme in behind
//! [`SignatureScheme`]. The simulator ships [`KeyedDigestScheme`], a
//! deterministic keyed-digest construction whose per-account keys are
//! derived from the account id itself, so an exported chain can be verified
//! offline without any key distribution.

use super::account::AccountId;
use super::hash::Digest;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

/// An authorization tag over a message. Serializes as lowercase hex.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Signature(pub Vec<u8>);

impl Signature {
    /// Placeholder used while assembling a transaction before signing.
    pub fn empty() -> Signature {
        Signature(Vec::new())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sig:{}", self.to_hex())
    }
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Signature, D::Error> {
        struct HexVisitor;
        impl<'de> Visitor<'de> for HexVisitor {
            type Value = Signature;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a lowercase hex string")
            }
            fn visit_str<E: de::Error>(self, value: &str) -> Result<Signature, E> {
                if value.chars().any(|c| c.is_ascii_uppercase()) {
                    return Err(E::custom("signature hex must be lowercase"));
                }
                hex::decode(value).map(Signature).map_err(E::custom)
            }
        }
        deserializer.deserialize_str(HexVisitor)
    }
}

/// Signs and verifies messages on behalf of accounts.
pub trait SignatureScheme {
    fn sign(&self, signer: &AccountId, message: &[u8]) -> Signature;
    fn verify(&self, signer: &AccountId, message: &[u8], signature: &Signature) -> bool;
}

const KEY_DOMAIN: &[u8] = b"robosim:key:v1:";

/// Deterministic test scheme: each account's key is the SHA-256 of a fixed
/// domain string plus the account id, and a signature is the SHA-256 of the
/// key followed by the message. Anyone can recompute keys, which is exactly
/// what offline verification of an exported chain needs.
#[derive(Clone, Copy, Debug, Default)]
pub struct KeyedDigestScheme;

impl KeyedDigestScheme {
    pub fn account_key(account: &AccountId) -> Digest {
        Digest::of_parts(&[
            KEY_DOMAIN,
            account.kind.as_str().as_bytes(),
            b":",
            account.label.as_bytes(),
        ])
    }
}

impl SignatureScheme for KeyedDigestScheme {
    fn sign(&self, signer: &AccountId, message: &[u8]) -> Signature {
        let key = Self::account_key(signer);
        Signature(Digest::of_parts(&[&key.0, message]).0.to_vec())
    }

    fn verify(&self, signer: &AccountId, message: &[u8], signature: &Signature) -> bool {
        self.sign(signer, message) == *signature
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_then_verify_round_trips() {
        let scheme = KeyedDigestScheme;
        let signer = AccountId::robot("mo");
        let sig = scheme.sign(&signer, b"pay the provider");
        assert!(scheme.verify(&signer, b"pay the provider", &sig));
    }

    #[test]
    fn verify_rejects_wrong_signer_and_wrong_message() {
        let scheme = KeyedDigestScheme;
        let signer = AccountId::robot("mo");
        let sig = scheme.sign(&signer, b"message");
        assert!(!scheme.verify(&AccountId::robot("other"), b"message", &sig));
        assert!(!scheme.verify(&signer, b"tampered", &sig));
        assert!(!scheme.verify(&AccountId::human("mo"), b"message", &sig));
    }

    #[test]
    fn keys_differ_by_kind_and_label() {
        let robot = KeyedDigestScheme::account_key(&AccountId::robot("x"));
        let human = KeyedDigestScheme::account_key(&AccountId::human("x"));
        let other = KeyedDigestScheme::account_key(&AccountId::robot("y"));
        assert_ne!(robot, human);
        assert_ne!(robot, other);
    }

    #[test]
    fn signature_hex_round_trips_through_serde() {
        let sig = Signature(vec![0xde, 0xad, 0x00, 0x42]);
        let json = serde_json::to_string(&sig).unwrap();
        assert_eq!(json, r#""dead0042""#);
        let back: Signature = serde_json::from_str(&json).unwrap();
        assert_eq!(back, sig);
    }
}
