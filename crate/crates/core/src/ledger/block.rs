//! Blocks and proof-of-work mining.

use super::account::AccountId;
use super::canonical::to_canonical_bytes;
use super::hash::Digest;
use super::tx::Transaction;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Nonces are searched in ascending order starting from zero; a block whose
/// difficulty cannot be met within this many candidates is unminable.
pub const NONCE_SEARCH_BOUND: u64 = 1 << 32;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Digest,
    pub transactions: Vec<Transaction>,
    pub nonce: u64,
    pub pow_difficulty: u32,
    pub miner: AccountId,
    pub block_hash: Digest,
}

/// The hashed portion of a block: every field except `block_hash`.
#[derive(Serialize)]
struct HashView<'a> {
    height: u64,
    prev_hash: &'a Digest,
    transactions: &'a [Transaction],
    nonce: u64,
    pow_difficulty: u32,
    miner: &'a AccountId,
}

impl Block {
    /// Canonical bytes that `block_hash` commits to.
    pub fn canonical_serialize(&self) -> Vec<u8> {
        let view = HashView {
            height: self.height,
            prev_hash: &self.prev_hash,
            transactions: &self.transactions,
            nonce: self.nonce,
            pow_difficulty: self.pow_difficulty,
            miner: &self.miner,
        };
        to_canonical_bytes(&view).expect("blocks contain no floats")
    }

    pub fn compute_hash(&self) -> Digest {
        Digest::of(&self.canonical_serialize())
    }

    /// Whether the stored hash meets the block's own difficulty.
    pub fn satisfies_pow(&self) -> bool {
        self.block_hash.leading_zero_bits() >= self.pow_difficulty
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MiningError {
    #[error("no nonce below 2^32 satisfies difficulty {difficulty} at height {height}")]
    MiningExhausted { height: u64, difficulty: u32 },
}

/// Mines a block by deterministic ascending nonce search from zero. The
/// same inputs always yield the same nonce and hash.
///
/// Only the nonce digits change between candidates, so the canonical
/// bytes are built once and re-hashed around a spliced-in nonce instead
/// of being re-serialized per attempt. The winning hash is checked
/// against the full serialization, which stays the definition.
pub fn mine_block(
    transactions: Vec<Transaction>,
    prev_hash: Digest,
    height: u64,
    difficulty: u32,
    miner: AccountId,
) -> Result<Block, MiningError> {
    let mut block = Block {
        height,
        prev_hash,
        transactions,
        nonce: 0,
        pow_difficulty: difficulty,
        miner,
        block_hash: Digest::ZERO,
    };
    let template = block.canonical_serialize();
    let (prefix, suffix) = split_at_nonce(&template);
    let mut digits = [0u8; 20];
    for nonce in 0..NONCE_SEARCH_BOUND {
        let hash = Digest::of_parts(&[prefix, decimal(&mut digits, nonce), suffix]);
        if hash.leading_zero_bits() >= difficulty {
            block.nonce = nonce;
            block.block_hash = hash;
            debug_assert_eq!(hash, block.compute_hash());
            return Ok(block);
        }
    }
    Err(MiningError::MiningExhausted { height, difficulty })
}

/// Splits canonical block bytes around the nonce value. Canonical JSON
/// never contains an unescaped quote inside a string, so the byte
/// sequence `"nonce":` can only be the block's single nonce key.
fn split_at_nonce(template: &[u8]) -> (&[u8], &[u8]) {
    const KEY: &[u8] = b"\"nonce\":";
    let at = template
        .windows(KEY.len())
        .position(|w| w == KEY)
        .expect("hashed block bytes contain the nonce key");
    let digits_start = at + KEY.len();
    let digits_len = template[digits_start..]
        .iter()
        .take_while(|b| b.is_ascii_digit())
        .count();
    (&template[..digits_start], &template[digits_start + digits_len..])
}

fn decimal(buf: &mut [u8; 20], mut n: u64) -> &[u8] {
    let mut end = buf.len();
    loop {
        end -= 1;
        buf[end] = b'0' + (n % 10) as u8;
        n /= 10;
        if n == 0 {
            return &buf[end..];
        }
    }
}
