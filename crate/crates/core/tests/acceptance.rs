//! The acceptance gate. Each test is one shipping criterion, checked at
//! its stated tolerance, so the suite output reads as a checklist: the
//! closed-form cost model to the cent, the budget shares, the six-step
//! protocol trace, conservation under a thousand mixed contracts, tamper
//! rejection with exact failing heights, exhaustive quorum behaviour,
//! bytewise determinism, and the simulation landing on the formula.

use rand::Rng;
use robosim::contracts::{
    strict_majority, ContractState, ServiceOutcome, ServiceSpec, SmartContract,
};
use robosim::econ::{annual_manual_cost, annual_robot_cost, ManualCostModel, RobotCostModel};
use robosim::engine::run_scenario;
use robosim::ledger::{
    mine_block, validate_chain, Block, ChainVerdict, KeyedDigestScheme, Memo, Transaction,
    TxIntent,
};
use robosim::netsim::{derive_stream, PeerHonesty, PeerNode};
use robosim::scenario::ScenarioConfig;
use robosim::{AccountId, Cents, Chain, Digest};
use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

const SCHEME: KeyedDigestScheme = KeyedDigestScheme;

fn reference_manual() -> ManualCostModel {
    ManualCostModel {
        unit_cost: Cents(10),
        area_m2: 600,
        cleanings_per_week: 5,
        weeks_per_year: 52,
        consumables_annual: Cents(120_000),
    }
}

fn reference_robot() -> RobotCostModel {
    RobotCostModel {
        maintenance_minutes_per_day: 20,
        specialist_hourly_wage: Cents(3_000),
        days_per_week: 5,
        weeks_per_year: 52,
        consumables_repair_annual: Cents(120_000),
        robot_price: Cents(4_500_000),
        depreciation_years: 4,
        capital_carrying_annual: Cents(55_000),
    }
}

fn cleaner_config() -> ScenarioConfig {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/cleaner.json");
    let text = std::fs::read_to_string(path).expect("cleaner scenario is committed");
    ScenarioConfig::from_json_str(&text).expect("cleaner scenario validates")
}

#[test]
fn criterion_1_closed_forms_exact_to_the_cent() {
    let manual = annual_manual_cost(&reference_manual()).unwrap();
    let robot = annual_robot_cost(&reference_robot()).unwrap();

    assert_eq!(manual.total, Cents(1_560_000));
    assert_eq!(manual.labor, Cents(1_440_000));
    assert_eq!(manual.consumables, Cents(120_000));

    assert_eq!(robot.total, Cents(1_560_000));
    assert_eq!(robot.labor, Cents(260_000));
    assert_eq!(robot.consumables, Cents(120_000));
    assert_eq!(robot.capital, Cents(1_180_000));
}

#[test]
fn criterion_2_budget_shares_in_stated_ranges() {
    let manual = annual_manual_cost(&reference_manual()).unwrap().shares().unwrap();
    let robot = annual_robot_cost(&reference_robot()).unwrap().shares().unwrap();

    assert!(
        manual.labor_share > 0.92 && manual.labor_share < 0.93,
        "manual labor share {} outside (0.92, 0.93)",
        manual.labor_share
    );
    assert!(
        robot.capital_share >= 0.75 && robot.capital_share <= 0.76,
        "robot capital share {} outside [0.75, 0.76]",
        robot.capital_share
    );
    // The computed quotient is reported as-is: 2600/15600 = 1/6, a touch
    // above a round 16%.
    assert!(
        (robot.labor_share - 1.0 / 6.0).abs() < 1e-12,
        "robot labor share {} is not 1/6",
        robot.labor_share
    );
    assert!((robot.labor_share - 0.167).abs() < 1e-3);
}

#[test]
fn criterion_3_happy_path_trace_is_exactly_steps_one_through_six() {
    let started = Instant::now();
    let doc = serde_json::json!({
        "schema_version": 1,
        "name": "happy-path",
        "seed": 7,
        "duration": 2000,
        "pow_difficulty": 4,
        "mine_interval": 50,
        "link": {"base_latency": 3, "jitter": 2, "drop_probability": 0.0},
        "peers": [
            {"label": "watch-1", "honesty": "honest"},
            {"label": "watch-2", "honesty": "honest"},
            {"label": "watch-3", "honesty": "honest"}
        ],
        "unit_costs": {"cleaning": 55},
        "owners": [{"label": "maurice"}, {"label": "mo-capital"}],
        "robots": [
            {"label": "facility-bot", "owner": "maurice", "endowment": 20000,
             "role": "customer_only", "wallet_floor": 20000},
            {"label": "mo-robot", "owner": "mo-capital", "capabilities": ["cleaning"],
             "role": "provider_only", "bid_margin": 0.08}
        ],
        "tasks": [
            {"customer": "facility-bot", "task_kind": "cleaning", "capability": "cleaning",
             "count": 1, "first_due": 100, "price": 6000,
             "work_duration": 90, "success_probability": 1.0,
             "quote_window": 60, "deadline_after": 600}
        ]
    });
    let cfg = ScenarioConfig::from_json_str(&doc.to_string()).unwrap();

    let first = run_scenario(&cfg, None).unwrap();
    let second = run_scenario(&cfg, None).unwrap();
    assert_eq!(first.final_hash, second.final_hash, "run is not deterministic");

    let contract = first.contracts.get("c-000001").expect("one contract ran");
    assert_eq!(contract.state(), ContractState::Settled);
    let steps: Vec<u8> = contract
        .event_log()
        .iter()
        .filter_map(|e| e.step.number())
        .collect();
    assert_eq!(steps, vec![1, 2, 3, 4, 5, 6]);

    let settlements: Vec<&Transaction> = first
        .chain
        .transactions()
        .map(|(_, tx)| tx)
        .filter(|tx| tx.memo == Memo::Settlement)
        .collect();
    assert_eq!(settlements.len(), 1, "exactly one settlement expected");
    assert_eq!(settlements[0].amount, contract.price());
    assert_eq!(settlements[0].contract_ref.as_deref(), Some("c-000001"));

    assert!(
        started.elapsed().as_secs() < 1,
        "took {:?}, budget is 1s",
        started.elapsed()
    );
}

#[test]
fn criterion_4_thousand_mixed_contracts_conserve_money() {
    let started = Instant::now();
    let capabilities = ["alpha", "beta", "gamma"];
    let mut owners = vec![serde_json::json!({"label": "holding"})];
    let mut robots = Vec::new();
    let mut tasks = Vec::new();

    for c in 0..10 {
        owners.push(serde_json::json!({"label": format!("owner-{c}")}));
        robots.push(serde_json::json!({
            "label": format!("buyer-{c}"), "owner": format!("owner-{c}"),
            "endowment": 200_000, "wallet_floor": 200_000, "role": "customer_only"
        }));
        // 60 ordinary jobs, a 25% failure rate priced in.
        tasks.push(serde_json::json!({
            "customer": format!("buyer-{c}"), "task_kind": "service",
            "capability": capabilities[c % 3], "count": 60,
            "first_due": 500 + c * 10, "interval": 900, "price": 1000,
            "work_duration": 90, "success_probability": 0.75,
            "quote_window": 60, "deadline_after": 600
        }));
        // 14 jobs whose work outlasts the deadline: guaranteed refunds.
        tasks.push(serde_json::json!({
            "customer": format!("buyer-{c}"), "task_kind": "service",
            "capability": capabilities[(c + 1) % 3], "count": 14,
            "first_due": 800 + c * 10, "interval": 3900, "price": 3000,
            "work_duration": 400, "success_probability": 1.0,
            "quote_window": 60, "deadline_after": 300
        }));
        // 26 jobs needing a capability nobody sells: guaranteed expiry.
        tasks.push(serde_json::json!({
            "customer": format!("buyer-{c}"), "task_kind": "service",
            "capability": "delta", "count": 26,
            "first_due": 650 + c * 10, "interval": 2100, "price": 1000,
            "work_duration": 90, "success_probability": 1.0,
            "quote_window": 60, "deadline_after": 300
        }));
    }
    for (i, capability) in capabilities.iter().cycle().take(6).enumerate() {
        robots.push(serde_json::json!({
            "label": format!("seller-{i}"), "owner": "holding",
            "capabilities": [capability], "role": "provider_only",
            "bid_margin": 0.04 + 0.02 * i as f64, "capacity": 4
        }));
    }

    let doc = serde_json::json!({
        "schema_version": 1,
        "name": "mixed-thousand",
        "seed": 1234,
        "duration": 56_000,
        "pow_difficulty": 4,
        "mine_interval": 60,
        "link": {"base_latency": 3, "jitter": 2, "drop_probability": 0.05},
        "peers": [
            {"label": "peer-a", "honesty": "honest"},
            {"label": "peer-b", "honesty": "honest"},
            {"label": "peer-c", "honesty": "faulty_reject"}
        ],
        "unit_costs": {"alpha": 5, "beta": 7, "gamma": 9, "delta": 11},
        "owners": owners,
        "robots": robots,
        "tasks": tasks
    });
    let cfg = ScenarioConfig::from_json_str(&doc.to_string()).unwrap();
    let out = run_scenario(&cfg, None).unwrap();

    assert_eq!(out.counters.contracts_created, 1_000);
    let closed = out.counters.settled
        + out.counters.refunded_quorum
        + out.counters.refunded_deadline
        + out.counters.expired;
    assert_eq!(closed, 1_000, "every contract must reach a terminal state");
    // The mix actually mixes: successes, quorum rejections, deadline
    // refunds, and expiries all occur.
    assert!(out.counters.settled > 0);
    assert!(out.counters.refunded_quorum > 0);
    assert!(out.counters.refunded_deadline > 0);
    assert!(out.counters.expired >= 260);

    assert!(out.chain.conserves_endowment(), "balances drifted from endowments");
    assert_eq!(out.chain.sum_of_balances(), out.chain.total_endowment());

    // Escrow reconciliation: per contract, at most one escrow, and every
    // escrow is released by exactly one settlement or refund of the same
    // amount.
    #[derive(Default)]
    struct Flows {
        escrow: Vec<Cents>,
        releases: Vec<Cents>,
    }
    let mut by_contract: BTreeMap<String, Flows> = BTreeMap::new();
    for (_, tx) in out.chain.transactions() {
        if let Some(cid) = tx.contract_ref.as_deref() {
            let entry = by_contract.entry(cid.to_owned()).or_default();
            match tx.memo {
                Memo::Escrow => entry.escrow.push(tx.amount),
                Memo::Settlement | Memo::Refund => entry.releases.push(tx.amount),
                _ => panic!("unexpected memo {:?} with contract ref", tx.memo),
            }
        }
    }
    for (cid, flows) in &by_contract {
        assert_eq!(flows.escrow.len(), 1, "{cid}: escrowed more than once");
        assert_eq!(flows.releases.len(), 1, "{cid}: released {} times", flows.releases.len());
        assert_eq!(flows.escrow[0], flows.releases[0], "{cid}: release amount differs");
    }
    for (cid, contract) in &out.contracts {
        let escrowed = by_contract.contains_key(cid);
        match contract.state() {
            ContractState::Settled | ContractState::Refunded => {
                assert!(escrowed, "{cid} closed with money but has no on-chain escrow")
            }
            ContractState::Expired => {
                assert!(!escrowed, "{cid} expired yet money moved")
            }
            other => panic!("{cid} finished in non-terminal state {other:?}"),
        }
    }

    assert!(
        started.elapsed().as_secs() < 10,
        "took {:?}, budget is 10s",
        started.elapsed()
    );
}

/// Builds a 50-block chain of sweeps for the tamper tests.
fn fifty_block_chain() -> Chain {
    let robot = AccountId::robot("worker");
    let owner = AccountId::human("payee");
    let endow = Transaction::endowment(robot.clone(), Cents(1_000_000)).signed(&SCHEME);
    let mut chain = Chain::new();
    chain
        .append_block(mine_block(vec![endow], Digest::ZERO, 0, 12, owner.clone()).unwrap(), &SCHEME)
        .unwrap();
    for i in 1..50u64 {
        let tx = TxIntent {
            from: robot.clone(),
            to: owner.clone(),
            amount: Cents(100 + i as i64),
            contract_ref: None,
            memo: Memo::Sweep,
        }
        .into_transaction(format!("sweep-{i:04}"), &SCHEME);
        let block = mine_block(vec![tx], chain.tip_hash(), i, 12, owner.clone()).unwrap();
        chain.append_block(block, &SCHEME).unwrap();
    }
    chain
}

#[test]
fn criterion_5_hundred_tampered_chains_all_reject_at_the_right_height() {
    let started = Instant::now();
    let chain = fifty_block_chain();
    assert_eq!(chain.block_count(), 50);
    assert_eq!(validate_chain(chain.blocks(), &SCHEME), ChainVerdict::Accept);

    let mut rng = derive_stream(99, "tamper");
    for trial in 0..100 {
        let mut blocks: Vec<Block> = chain.blocks().to_vec();
        let at = rng.random_range(0..blocks.len());
        let expected_height = apply_tamper(&mut blocks, at, rng.random_range(0..7));
        match validate_chain(&blocks, &SCHEME) {
            ChainVerdict::Accept => panic!("trial {trial}: tampered chain accepted"),
            ChainVerdict::Reject { height, .. } => assert_eq!(
                height, expected_height,
                "trial {trial}: rejected at {height}, tamper was at {expected_height}"
            ),
        }
    }
    assert!(
        started.elapsed().as_secs() < 10,
        "took {:?}, budget is 10s",
        started.elapsed()
    );
}

/// Applies one mutation to `blocks[at]` and returns the height at which
/// validation must fail. Mutations 0..=5 leave the stored hash stale, so
/// the tampered block itself is the failure point; mutation 6 re-hashes
/// honestly, which breaks either proof-of-work at that height or, for a
/// non-tip block, the next block's parent link.
fn apply_tamper(blocks: &mut [Block], at: usize, kind: u32) -> u64 {
    let block = &mut blocks[at];
    match kind {
        0 => block.transactions[0].amount += Cents(1),
        1 => block.transactions[0].tx_id.push('x'),
        2 => block.nonce ^= 1,
        3 => block.prev_hash = Digest::of(b"forged parent"),
        4 => block.miner = AccountId::human("impostor"),
        5 => block.transactions[0].authorization.0[0] ^= 0xff,
        6 => {
            block.transactions[0].amount += Cents(1);
            block.block_hash = block.compute_hash();
        }
        _ => unreachable!("tamper kinds are 0..7"),
    }
    block.height
}

#[test]
fn criterion_6_quorum_matches_strict_majority_exhaustively() {
    // Direct enumeration: every vote pattern for 1, 3, and 5 peers.
    for n in [1usize, 3, 5] {
        for pattern in 0u32..(1 << n) {
            let approvals = pattern.count_ones() as usize;
            let mut contract = delivered_contract();
            contract.begin_validation(n).unwrap();
            for i in 0..n {
                contract
                    .record_vote(AccountId::robot(format!("peer-{i}")), pattern & (1 << i) != 0)
                    .unwrap();
            }
            assert!(contract.all_votes_in());
            let approved = contract.tally(AccountId::robot("cust"), 50).unwrap();
            let expected = 2 * approvals > n;
            assert_eq!(
                approved, expected,
                "{approvals} of {n} approvals must {}",
                if expected { "pass" } else { "fail" }
            );
            assert_eq!(approved, strict_majority(approvals, n));
            assert_eq!(
                contract.state(),
                if expected { ContractState::Validated } else { ContractState::Rejected }
            );
        }
    }

    // The same rule through real validator nodes: honest peers approve a
    // verifiable delivery, faulty-rejecting peers never do, and the
    // outcome flips exactly where honest peers lose the majority.
    for n in [1usize, 3, 5] {
        for faulty in 0..=n {
            let (contract, replica_blocks) = delivered_contract_with_chain();
            let mut approvals = 0;
            for i in 0..n {
                let honesty = if i < faulty {
                    PeerHonesty::FaultyReject
                } else {
                    PeerHonesty::Honest
                };
                let mut peer = PeerNode::new(AccountId::robot(format!("peer-{i}")), honesty);
                for block in &replica_blocks {
                    peer.receive_block(block.clone(), &SCHEME).unwrap();
                }
                if peer.evaluate(&contract, &SCHEME) {
                    approvals += 1;
                }
            }
            assert_eq!(approvals, n - faulty, "honest peers approve, faulty never do");
            assert_eq!(
                strict_majority(approvals, n),
                2 * (n - faulty) > n,
                "{faulty} faulty of {n}"
            );
        }
    }
}

fn delivered_contract() -> SmartContract {
    let customer = AccountId::robot("cust");
    let provider = AccountId::robot("prov");
    let capabilities: BTreeSet<String> = std::iter::once("cleaning".to_owned()).collect();
    let spec = ServiceSpec {
        task_kind: "cleaning".into(),
        parameters: BTreeMap::new(),
        required_capability: "cleaning".into(),
        work_duration: 10,
        success_probability: 1.0,
    };
    let mut contract = SmartContract::create(
        "c-000001".into(),
        customer,
        Cents(10_000),
        spec,
        Cents(6_000),
        1_000,
        0,
        &SCHEME,
    )
    .unwrap();
    contract.accept(provider.clone(), &capabilities, 10, &SCHEME).unwrap();
    let evidence = Digest::of(b"work record");
    contract
        .submit_result(
            &provider,
            ServiceOutcome { success: true, evidence_digest: evidence },
            20,
        )
        .unwrap();
    contract.deliver_response(evidence, 30).unwrap();
    contract
}

fn delivered_contract_with_chain() -> (SmartContract, Vec<Block>) {
    let contract = delivered_contract();
    let endow =
        Transaction::endowment(AccountId::robot("cust"), Cents(10_000)).signed(&SCHEME);
    let genesis = mine_block(vec![endow], Digest::ZERO, 0, 4, AccountId::human("miner")).unwrap();
    let escrow = TxIntent {
        from: contract.customer().clone(),
        to: contract.escrow_account().clone(),
        amount: contract.price(),
        contract_ref: Some(contract.contract_id().to_owned()),
        memo: Memo::Escrow,
    }
    .into_transaction("escrow-c-000001".into(), &SCHEME);
    let second = mine_block(
        vec![escrow],
        genesis.block_hash,
        1,
        4,
        AccountId::human("miner"),
    )
    .unwrap();
    (contract, vec![genesis, second])
}

#[test]
fn criterion_7_cleaner_year_is_bytewise_deterministic() {
    let started = Instant::now();
    let cfg = cleaner_config();
    assert_eq!(cfg.seed, 42);

    let mut first = Vec::new();
    let mut second = Vec::new();
    let a = run_scenario(&cfg, Some(&mut first)).unwrap();
    let b = run_scenario(&cfg, Some(&mut second)).unwrap();

    assert!(!first.is_empty());
    assert_eq!(first, second, "traces differ between identical runs");
    assert_eq!(a.final_hash, b.final_hash, "final chain hashes differ");
    assert!(
        started.elapsed().as_secs() < 30,
        "took {:?}, budget is 30s",
        started.elapsed()
    );
}

#[test]
fn criterion_8_settled_spend_equals_the_closed_form_to_the_cent() {
    let cfg = cleaner_config();
    let out = run_scenario(&cfg, None).unwrap();

    let settled: Cents = out.settled_by_capability.values().copied().sum();
    let robot = annual_robot_cost(&cfg.econ.as_ref().unwrap().robot).unwrap();
    assert_eq!(out.counters.settled, 260);
    assert_eq!(settled, robot.total, "settled spend must equal the model exactly");
    assert_eq!(settled, Cents(1_560_000));
}
