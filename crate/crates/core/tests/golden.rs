//! Frozen byte-level expectations for the hashing pipeline.
//!
//! The golden line was produced by an independent canonical-JSON encoder
//! and SHA-256 implementation (Python's json + hashlib) walking the same
//! nonce search. If encoding, signing, or mining drifts in any byte, these
//! comparisons fail.

use robosim::currency::Cents;
use robosim::ledger::{
    mine_block, to_canonical_bytes, AccountId, Digest, KeyedDigestScheme, Transaction,
};

#[test]
fn cleaner_genesis_block_matches_independent_implementation() {
    let scheme = KeyedDigestScheme;
    let endow =
        |id: AccountId, cents: i64| Transaction::endowment(id, Cents(cents)).signed(&scheme);
    let txs = vec![
        endow(AccountId::human("maurice"), 0),
        endow(AccountId::human("mo-capital"), 0),
        endow(AccountId::robot("facility-bot"), 1_560_000),
        endow(AccountId::robot("mo-robot"), 0),
    ];
    let block = mine_block(txs, Digest::ZERO, 0, 8, AccountId::human("miner")).unwrap();

    assert_eq!(block.nonce, 252);
    assert_eq!(
        block.block_hash.to_hex(),
        "00faba9111a0b5921afa0b4fa2238d66206616151a9abc197f4b496b8c0e141c"
    );

    let mut line = to_canonical_bytes(&block).unwrap();
    line.push(b'\n');
    let golden: &[u8] = include_bytes!("golden/cleaner_genesis.jsonl");
    assert_eq!(
        String::from_utf8_lossy(&line),
        String::from_utf8_lossy(golden)
    );
    assert_eq!(line, golden);
}
