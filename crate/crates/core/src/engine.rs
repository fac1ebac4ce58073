//! The simulation engine: a single deterministic event loop that drives
//! agents, the marketplace, mining, block broadcast, and peer validation.
//!
//! Everything that happens is an event on one queue. Message passing
//! samples the lossy link (with retransmission and exponential backoff),
//! so a (config, seed) pair fixes every delivery time, every coin flip,
//! and therefore the whole trace and the final chain byte for byte.
//!
//! The marketplace protocol per contract: the customer announces on the
//! shared topic, providers quote through the customer's quote service, the
//! lowest bid wins at the end of the quote window, acceptance locks the
//! price in escrow, the provider works and delivers, the peer quorum votes
//! on the delivery, and the escrow settles to the provider or refunds to
//! the customer. Deadlines cut through any of it.

use crate::agents::{AssetId, AssetRegistry, CustomerAction, RobotAgent};
use crate::bus::MessageBus;
use crate::contracts::{ContractError, Quote, ServiceOutcome, SmartContract, TimeoutOutcome};
use crate::currency::Cents;
use crate::ledger::{
    mine_block, AccountId, Block, Chain, Digest, KeyedDigestScheme, Memo, Mempool, MiningError,
    RejectReason, Transaction, TxIntent,
};
use crate::netsim::{
    backoff_delay, derive_stream, DeliveryStats, EventQueue, LossyLink, PeerHonesty, PeerNode,
    ReplicaError, Tick, MAX_SEND_ATTEMPTS,
};
use crate::scenario::ScenarioConfig;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::{self, Write};
use thiserror::Error;

/// Topic on which customers announce new contracts.
pub const ANNOUNCE_TOPIC: &str = "market/announcements";

#[derive(Debug, Error)]
pub enum ScenarioFatal {
    #[error("message from {from} to {to} lost after {attempts} attempts; the link is misconfigured")]
    Undeliverable {
        from: String,
        to: String,
        attempts: u32,
    },
    #[error(transparent)]
    Mining(#[from] MiningError),
    #[error("the engine's own block was rejected: {0}")]
    SelfRejected(RejectReason),
    #[error(transparent)]
    Replica(#[from] ReplicaError),
    #[error("contract protocol breach: {0}")]
    Protocol(#[from] ContractError),
    #[error("ownership rule violated at tick {0}: a non-human owns an asset")]
    OwnershipViolation(Tick),
    #[error("endowment conservation violated at tick {0}")]
    ConservationViolation(Tick),
    #[error("trace write failed: {0}")]
    Trace(#[from] io::Error),
}

/// Everything a message between simulation participants can carry.
#[derive(Clone, Debug)]
pub enum Message {
    Announce { contract_id: String },
    Quote { contract_id: String, bid: Cents },
    Decline { contract_id: String },
    Award { contract_id: String },
    ResultDelivery { contract_id: String, evidence: Digest },
    VoteRequest { contract_id: String },
    VoteReply { contract_id: String, approve: bool },
    OutcomeNotice { contract_id: String, settled: bool },
    Block(Box<Block>),
}

#[derive(Clone, Debug)]
enum EventKind {
    Deliver {
        from: AccountId,
        to: AccountId,
        msg: Message,
    },
    CustomerWake {
        robot: String,
    },
    QuoteWindowClose {
        contract_id: String,
    },
    WorkComplete {
        contract_id: String,
    },
    ContractDeadline {
        contract_id: String,
    },
    SettleContract {
        contract_id: String,
    },
    MineFlush,
}

fn kind_name(kind: &EventKind) -> &'static str {
    match kind {
        EventKind::Deliver { .. } => "deliver",
        EventKind::CustomerWake { .. } => "customer_wake",
        EventKind::QuoteWindowClose { .. } => "quote_window_close",
        EventKind::WorkComplete { .. } => "work_complete",
        EventKind::ContractDeadline { .. } => "contract_deadline",
        EventKind::SettleContract { .. } => "settle_contract",
        EventKind::MineFlush => "mine_flush",
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RunCounters {
    pub contracts_created: u64,
    pub quotes_recorded: u64,
    pub settled: u64,
    pub refunded_quorum: u64,
    pub refunded_deadline: u64,
    pub expired: u64,
    pub skipped_insufficient: u64,
    pub blocks_mined: u64,
    pub transactions_mined: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PeerSummary {
    pub label: String,
    pub honesty: PeerHonesty,
    pub replica_blocks: usize,
    pub in_sync: bool,
}

/// Everything a finished run leaves behind for reporting and assertions.
#[derive(Debug)]
pub struct RunOutput {
    pub chain: Chain,
    pub final_hash: Digest,
    pub counters: RunCounters,
    pub contracts: BTreeMap<String, SmartContract>,
    pub settled_by_capability: BTreeMap<String, Cents>,
    pub swept_by_owner: BTreeMap<String, Cents>,
    pub delivery: DeliveryStats,
    pub peer_summaries: Vec<PeerSummary>,
    pub mempool_residue: usize,
    pub end_time: Tick,
}

#[derive(Serialize)]
struct EventRecord<'a> {
    record: &'static str,
    time: Tick,
    seq: u64,
    kind: &'static str,
    summary: &'a str,
}

#[derive(Serialize)]
struct ContractRecord<'a> {
    record: &'static str,
    time: Tick,
    contract_id: &'a str,
    step: &'a str,
    actor: String,
    state_after: &'a str,
}

/// Runs one scenario to completion. If `trace` is given, one JSON line is
/// written per fired event (plus one per contract protocol step); the
/// trace is the determinism artifact compared across runs.
pub fn run_scenario<'a>(
    config: &'a ScenarioConfig,
    trace: Option<&'a mut dyn Write>,
) -> Result<RunOutput, ScenarioFatal> {
    Engine::new(config, trace)?.run()
}

struct Engine<'a> {
    cfg: &'a ScenarioConfig,
    scheme: KeyedDigestScheme,
    queue: EventQueue<EventKind>,
    bus: MessageBus,
    link: LossyLink,
    rng_agents: ChaCha12Rng,
    rng_net: ChaCha12Rng,
    chain: Chain,
    mempool: Mempool,
    agents: BTreeMap<String, RobotAgent>,
    peers: Vec<PeerNode>,
    peer_index: BTreeMap<String, usize>,
    registry: AssetRegistry,
    contracts: BTreeMap<String, SmartContract>,
    quote_deadline: BTreeMap<String, Tick>,
    /// Transfers whose funding escrow has not been mined yet; retried
    /// after every mined block.
    deferred: Vec<(String, TxIntent)>,
    next_contract: u64,
    counters: RunCounters,
    miner: AccountId,
    trace: Option<&'a mut dyn Write>,
}

impl<'a> Engine<'a> {
    fn new(
        cfg: &'a ScenarioConfig,
        trace: Option<&'a mut dyn Write>,
    ) -> Result<Engine<'a>, ScenarioFatal> {
        let scheme = KeyedDigestScheme;
        let miner = cfg.miner_account();

        // Genesis: every configured account gets its endowment, owners
        // first, in declaration order.
        let mut genesis = Vec::new();
        for owner in &cfg.owners {
            genesis.push(
                Transaction::endowment(AccountId::human(&owner.label), owner.endowment)
                    .signed(&scheme),
            );
        }
        for robot in &cfg.robots {
            genesis.push(
                Transaction::endowment(AccountId::robot(&robot.label), robot.endowment)
                    .signed(&scheme),
            );
        }
        let genesis_block = mine_block(
            genesis,
            Digest::ZERO,
            0,
            cfg.pow_difficulty,
            miner.clone(),
        )?;
        let mut chain = Chain::new();
        chain
            .append_block(genesis_block.clone(), &scheme)
            .map_err(ScenarioFatal::SelfRejected)?;

        let mut registry = AssetRegistry::new();
        let mut agents = BTreeMap::new();
        for robot in &cfg.robots {
            registry
                .register(
                    AssetId(format!("robot:{}", robot.label)),
                    AccountId::human(&robot.owner),
                )
                .expect("validated config registers robots to humans once");
            agents.insert(robot.label.clone(), robot.build_agent());
        }

        let mut bus = MessageBus::new();
        bus.create_topic(ANNOUNCE_TOPIC);
        for robot in &cfg.robots {
            let account = AccountId::robot(&robot.label);
            bus.subscribe(ANNOUNCE_TOPIC, account.clone())
                .expect("topic exists");
            bus.register_service(&format!("quotes/{}", robot.label), account);
        }

        let peers: Vec<PeerNode> = cfg
            .peers
            .iter()
            .map(|p| PeerNode::new(AccountId::robot(&p.label), p.honesty))
            .collect();
        let peer_index = cfg
            .peers
            .iter()
            .enumerate()
            .map(|(i, p)| (p.label.clone(), i))
            .collect();

        let mut engine = Engine {
            cfg,
            scheme,
            queue: EventQueue::new(),
            bus,
            link: LossyLink::new(cfg.link),
            rng_agents: derive_stream(cfg.seed, "agents"),
            rng_net: derive_stream(cfg.seed, "netsim"),
            chain,
            mempool: Mempool::new(),
            agents,
            peers,
            peer_index,
            registry,
            contracts: BTreeMap::new(),
            quote_deadline: BTreeMap::new(),
            deferred: Vec::new(),
            next_contract: 1,
            counters: RunCounters::default(),
            miner,
            trace,
        };

        // Tasks go to their customers in due order, merged across
        // templates; one wake event per distinct due tick per robot.
        let mut wakes = std::collections::BTreeSet::new();
        let mut queues: BTreeMap<&str, Vec<crate::agents::TaskSpec>> = BTreeMap::new();
        for template in &cfg.tasks {
            queues
                .entry(template.customer.as_str())
                .or_default()
                .extend(template.materialize());
        }
        for (customer, mut tasks) in queues {
            tasks.sort_by_key(|t| t.due);
            let agent = engine.agents.get_mut(customer).expect("validated customer");
            for task in tasks {
                wakes.insert((task.due, customer.to_owned()));
                agent.push_task(task);
            }
        }
        for (due, robot) in wakes {
            engine.schedule(due, EventKind::CustomerWake { robot });
        }
        engine.schedule(cfg.mine_interval, EventKind::MineFlush);

        // Peers learn the chain the same way they will learn every later
        // block: over the link.
        engine.broadcast_block(&genesis_block)?;
        Ok(engine)
    }

    fn run(mut self) -> Result<RunOutput, ScenarioFatal> {
        while let Some(next) = self.queue.peek_time() {
            if next > self.cfg.duration {
                break;
            }
            let event = self.queue.step().expect("peeked event");
            let name = kind_name(&event.kind);
            let summary = self.handle(event.kind)?;
            self.write_line(&EventRecord {
                record: "event",
                time: event.fire_time,
                seq: event.sequence,
                kind: name,
                summary: &summary,
            })?;
            if !self.registry.all_owned_by_humans() {
                return Err(ScenarioFatal::OwnershipViolation(event.fire_time));
            }
            if !self.chain.conserves_endowment() {
                return Err(ScenarioFatal::ConservationViolation(event.fire_time));
            }
        }
        if let Some(w) = self.trace.as_deref_mut() {
            w.flush()?;
        }

        let mut settled_by_capability: BTreeMap<String, Cents> = BTreeMap::new();
        let mut swept_by_owner: BTreeMap<String, Cents> = BTreeMap::new();
        for (_, tx) in self.chain.transactions() {
            match tx.memo {
                Memo::Settlement => {
                    let cid = tx.contract_ref.as_deref().expect("settlement names its contract");
                    let capability = self.contracts[cid].spec().required_capability.clone();
                    *settled_by_capability.entry(capability).or_default() += tx.amount;
                }
                Memo::Sweep => {
                    *swept_by_owner.entry(tx.to.label.clone()).or_default() += tx.amount;
                }
                _ => {}
            }
        }
        let peer_summaries = self
            .peers
            .iter()
            .map(|p| PeerSummary {
                label: p.account().label.clone(),
                honesty: p.honesty(),
                replica_blocks: p.replica().block_count(),
                in_sync: p.replica().tip_hash() == self.chain.tip_hash(),
            })
            .collect();

        Ok(RunOutput {
            final_hash: self.chain.tip_hash(),
            counters: self.counters,
            settled_by_capability,
            swept_by_owner,
            delivery: self.link.stats,
            peer_summaries,
            mempool_residue: self.mempool.len(),
            end_time: self.queue.now(),
            chain: self.chain,
            contracts: self.contracts,
        })
    }

    fn handle(&mut self, kind: EventKind) -> Result<String, ScenarioFatal> {
        match kind {
            EventKind::CustomerWake { robot } => self.on_customer_wake(&robot),
            EventKind::Deliver { from, to, msg } => self.on_deliver(from, to, msg),
            EventKind::QuoteWindowClose { contract_id } => self.on_window_close(&contract_id),
            EventKind::WorkComplete { contract_id } => self.on_work_complete(&contract_id),
            EventKind::ContractDeadline { contract_id } => self.on_deadline(&contract_id),
            EventKind::SettleContract { contract_id } => self.on_settle(&contract_id),
            EventKind::MineFlush => self.on_mine_flush(),
        }
    }

    fn on_customer_wake(&mut self, robot: &str) -> Result<String, ScenarioFatal> {
        let now = self.queue.now();
        let mut available = {
            let agent = &self.agents[robot];
            self.spendable(agent)
        };
        let actions = self
            .agents
            .get_mut(robot)
            .expect("configured robot")
            .customer_step(now, available);

        let mut notes = Vec::new();
        for action in actions {
            match action {
                CustomerAction::Announce(task) => {
                    let contract_id = format!("c-{:06}", self.next_contract);
                    self.next_contract += 1;
                    let customer = AccountId::robot(robot);
                    let contract = SmartContract::create(
                        contract_id.clone(),
                        customer.clone(),
                        available,
                        task.spec.clone(),
                        task.price,
                        task.deadline,
                        now,
                        &self.scheme,
                    )?;
                    available -= task.price;
                    self.counters.contracts_created += 1;
                    self.contracts.insert(contract_id.clone(), contract);
                    self.quote_deadline
                        .insert(contract_id.clone(), now + task.quote_window);
                    self.schedule(
                        now + task.quote_window,
                        EventKind::QuoteWindowClose {
                            contract_id: contract_id.clone(),
                        },
                    );
                    self.schedule(
                        task.deadline,
                        EventKind::ContractDeadline {
                            contract_id: contract_id.clone(),
                        },
                    );
                    self.trace_contract(&contract_id)?;

                    // Fan the announcement out to every subscriber, each
                    // with its own delivery time.
                    let subscribers = self
                        .bus
                        .subscribers(ANNOUNCE_TOPIC)
                        .expect("topic created at startup")
                        .to_vec();
                    let mut delays = Vec::with_capacity(subscribers.len());
                    for subscriber in &subscribers {
                        delays.push(self.reliable_delay(&customer, subscriber)?);
                    }
                    let mut next_delay = delays.into_iter();
                    let planned = self
                        .bus
                        .publish(ANNOUNCE_TOPIC, &customer, now, &mut || {
                            next_delay.next().expect("one delay per subscriber")
                        })
                        .expect("topic created at startup");
                    for hop in planned {
                        self.schedule(
                            hop.at,
                            EventKind::Deliver {
                                from: customer.clone(),
                                to: hop.to,
                                msg: Message::Announce {
                                    contract_id: contract_id.clone(),
                                },
                            },
                        );
                    }
                    notes.push(format!("{robot} announced {contract_id} ({})", task.price));
                }
                CustomerAction::SkipInsufficient(task) => {
                    self.counters.skipped_insufficient += 1;
                    notes.push(format!(
                        "{robot} skipped a {} task: {} needed, funds short",
                        task.spec.task_kind, task.price
                    ));
                }
            }
        }
        if notes.is_empty() {
            notes.push(format!("{robot} woke with nothing due"));
        }
        Ok(notes.join("; "))
    }

    fn on_deliver(
        &mut self,
        from: AccountId,
        to: AccountId,
        msg: Message,
    ) -> Result<String, ScenarioFatal> {
        let now = self.queue.now();
        match msg {
            Message::Announce { contract_id } => {
                let (customer, spec, price) = {
                    let c = &self.contracts[&contract_id];
                    (c.customer().clone(), c.spec().clone(), c.price())
                };
                if to == customer {
                    return Ok(format!("{} ignored its own announcement", to.label));
                }
                let bid = match self.agents.get(&to.label) {
                    Some(agent) => agent.consider_announcement(&spec, price, &self.cfg.unit_costs),
                    None => None,
                };
                match bid {
                    Some(bid) => {
                        self.agents
                            .get_mut(&to.label)
                            .expect("agent exists")
                            .begin_engagement();
                        let responder = self
                            .bus
                            .responder(&format!("quotes/{}", customer.label))
                            .expect("every robot registers a quote service")
                            .clone();
                        self.send(&to, &responder, Message::Quote { contract_id: contract_id.clone(), bid })?;
                        Ok(format!("{} quoted {bid} on {contract_id}", to.label))
                    }
                    None => Ok(format!("{} passed on {contract_id}", to.label)),
                }
            }
            Message::Quote { contract_id, bid } => {
                let open = {
                    let c = &self.contracts[&contract_id];
                    c.state() == crate::contracts::ContractState::Created
                        && now <= self.quote_deadline[&contract_id]
                };
                if open {
                    let quote = Quote {
                        provider: from.clone(),
                        bid,
                        time: now,
                    };
                    match self
                        .contracts
                        .get_mut(&contract_id)
                        .expect("known contract")
                        .record_quote(quote)
                    {
                        Ok(()) => {
                            self.counters.quotes_recorded += 1;
                            Ok(format!("recorded {bid} from {} on {contract_id}", from.label))
                        }
                        Err(_) => {
                            self.send(&to, &from, Message::Decline { contract_id: contract_id.clone() })?;
                            Ok(format!("refused quote from {} on {contract_id}", from.label))
                        }
                    }
                } else {
                    self.send(&to, &from, Message::Decline { contract_id: contract_id.clone() })?;
                    Ok(format!(
                        "late quote from {} on {contract_id} declined",
                        from.label
                    ))
                }
            }
            Message::Decline { contract_id } => {
                if let Some(agent) = self.agents.get_mut(&to.label) {
                    agent.end_engagement();
                }
                Ok(format!("{} released its slot on {contract_id}", to.label))
            }
            Message::Award { contract_id } => self.on_award(to, &contract_id),
            Message::ResultDelivery {
                contract_id,
                evidence,
            } => {
                let outcome = self
                    .contracts
                    .get_mut(&contract_id)
                    .expect("known contract")
                    .deliver_response(evidence, now);
                match outcome {
                    Ok(()) => {
                        self.trace_contract(&contract_id)?;
                        let customer = self.contracts[&contract_id].customer().clone();
                        self.contracts
                            .get_mut(&contract_id)
                            .expect("known contract")
                            .begin_validation(self.peers.len())?;
                        let peer_accounts: Vec<AccountId> =
                            self.peers.iter().map(|p| p.account().clone()).collect();
                        for peer in &peer_accounts {
                            self.send(
                                &customer,
                                peer,
                                Message::VoteRequest {
                                    contract_id: contract_id.clone(),
                                },
                            )?;
                        }
                        Ok(format!(
                            "delivery of {contract_id} confirmed; {} peers asked to validate",
                            peer_accounts.len()
                        ))
                    }
                    Err(_) => Ok(format!(
                        "result for {contract_id} arrived after the contract closed"
                    )),
                }
            }
            Message::VoteRequest { contract_id } => {
                let index = self.peer_index[&to.label];
                let approve =
                    self.peers[index].evaluate(&self.contracts[&contract_id], &self.scheme);
                let customer = self.contracts[&contract_id].customer().clone();
                self.send(
                    &to,
                    &customer,
                    Message::VoteReply {
                        contract_id: contract_id.clone(),
                        approve,
                    },
                )?;
                Ok(format!(
                    "{} voted {} on {contract_id}",
                    to.label,
                    if approve { "yes" } else { "no" }
                ))
            }
            Message::VoteReply {
                contract_id,
                approve,
            } => self.on_vote(from, &contract_id, approve),
            Message::OutcomeNotice {
                contract_id,
                settled,
            } => {
                if let Some(agent) = self.agents.get_mut(&to.label) {
                    agent.end_engagement();
                }
                Ok(format!(
                    "{} saw {contract_id} close ({})",
                    to.label,
                    if settled { "settled" } else { "refunded" }
                ))
            }
            Message::Block(block) => {
                let height = block.height;
                let index = self.peer_index[&to.label];
                let applied = self.peers[index].receive_block(*block, &self.scheme)?;
                Ok(format!(
                    "{} took block {height} ({applied} applied)",
                    to.label
                ))
            }
        }
    }

    fn on_award(&mut self, provider: AccountId, contract_id: &str) -> Result<String, ScenarioFatal> {
        let now = self.queue.now();
        let capabilities = self.agents[&provider.label].capabilities.clone();
        let accepted = self
            .contracts
            .get_mut(contract_id)
            .expect("known contract")
            .accept(provider.clone(), &capabilities, now, &self.scheme);
        match accepted {
            Ok(intent) => {
                let (customer_label, price, work) = {
                    let c = &self.contracts[contract_id];
                    (
                        c.customer().label.clone(),
                        c.price(),
                        c.spec().work_duration,
                    )
                };
                let tx = intent.into_transaction(format!("escrow-{contract_id}"), &self.scheme);
                self.mempool
                    .submit(tx, &self.chain, &self.scheme)
                    .map_err(ScenarioFatal::SelfRejected)?;
                self.agents
                    .get_mut(&customer_label)
                    .expect("customer exists")
                    .release_commitment(price);
                self.schedule(
                    now + work,
                    EventKind::WorkComplete {
                        contract_id: contract_id.to_owned(),
                    },
                );
                self.trace_contract(contract_id)?;
                Ok(format!(
                    "{} accepted {contract_id}; {price} moved to escrow",
                    provider.label
                ))
            }
            Err(ContractError::Expired(_)) => {
                self.agents
                    .get_mut(&provider.label)
                    .expect("agent exists")
                    .end_engagement();
                Ok(format!(
                    "award for {contract_id} reached {} after expiry",
                    provider.label
                ))
            }
            Err(other) => Err(other.into()),
        }
    }

    fn on_vote(
        &mut self,
        peer: AccountId,
        contract_id: &str,
        approve: bool,
    ) -> Result<String, ScenarioFatal> {
        let now = self.queue.now();
        let recorded = self
            .contracts
            .get_mut(contract_id)
            .expect("known contract")
            .record_vote(peer.clone(), approve);
        if recorded.is_err() {
            return Ok(format!(
                "vote from {} on {contract_id} ignored; contract already closed",
                peer.label
            ));
        }
        if !self.contracts[contract_id].all_votes_in() {
            return Ok(format!("vote from {} on {contract_id} recorded", peer.label));
        }

        let customer = self.contracts[contract_id].customer().clone();
        let provider = self.contracts[contract_id]
            .provider()
            .cloned()
            .expect("validated contract has a provider");
        let approved = self
            .contracts
            .get_mut(contract_id)
            .expect("known contract")
            .tally(customer.clone(), now)?;
        if approved {
            self.schedule(
                now + 1,
                EventKind::SettleContract {
                    contract_id: contract_id.to_owned(),
                },
            );
            self.trace_contract(contract_id)?;
            Ok(format!("quorum approved {contract_id}; settlement scheduled"))
        } else {
            let intent = self
                .contracts
                .get_mut(contract_id)
                .expect("known contract")
                .refund_rejected()?;
            self.submit_or_defer(format!("refund-{contract_id}"), intent)?;
            self.counters.refunded_quorum += 1;
            self.trace_contract(contract_id)?;
            self.send(
                &customer,
                &provider,
                Message::OutcomeNotice {
                    contract_id: contract_id.to_owned(),
                    settled: false,
                },
            )?;
            Ok(format!("quorum rejected {contract_id}; escrow refunded"))
        }
    }

    fn on_window_close(&mut self, contract_id: &str) -> Result<String, ScenarioFatal> {
        let (state, winner, losers, customer) = {
            let c = &self.contracts[contract_id];
            let winner = c.select_winner().cloned();
            let losers: Vec<AccountId> = c
                .quotes()
                .iter()
                .filter(|q| Some(&q.provider) != winner.as_ref().map(|w| &w.provider))
                .map(|q| q.provider.clone())
                .collect();
            (c.state(), winner, losers, c.customer().clone())
        };
        if state != crate::contracts::ContractState::Created {
            return Ok(format!("window closed on {contract_id}, already {state:?}"));
        }
        let Some(winner) = winner else {
            return Ok(format!(
                "no quotes on {contract_id}; it will expire at its deadline"
            ));
        };
        for loser in &losers {
            self.send(
                &customer,
                loser,
                Message::Decline {
                    contract_id: contract_id.to_owned(),
                },
            )?;
        }
        self.send(
            &customer,
            &winner.provider,
            Message::Award {
                contract_id: contract_id.to_owned(),
            },
        )?;
        Ok(format!(
            "awarded {contract_id} to {} at {} over {} rival(s)",
            winner.provider.label,
            winner.bid,
            losers.len()
        ))
    }

    fn on_work_complete(&mut self, contract_id: &str) -> Result<String, ScenarioFatal> {
        let now = self.queue.now();
        let (state, provider, customer, probability) = {
            let c = &self.contracts[contract_id];
            (
                c.state(),
                c.provider().cloned(),
                c.customer().clone(),
                c.spec().success_probability,
            )
        };
        if state != crate::contracts::ContractState::Accepted {
            return Ok(format!(
                "work on {contract_id} finished moot; contract is {state:?}"
            ));
        }
        let provider = provider.expect("accepted contract has a provider");
        let roll: f64 = self.rng_agents.random();
        let success = roll < probability;
        let evidence = Digest::of_parts(&[
            b"evidence:",
            contract_id.as_bytes(),
            &[u8::from(success)],
        ]);
        self.contracts
            .get_mut(contract_id)
            .expect("known contract")
            .submit_result(
                &provider,
                ServiceOutcome {
                    success,
                    evidence_digest: evidence,
                },
                now,
            )?;
        self.trace_contract(contract_id)?;
        self.send(
            &provider,
            &customer,
            Message::ResultDelivery {
                contract_id: contract_id.to_owned(),
                evidence,
            },
        )?;
        Ok(format!(
            "{} finished {contract_id} ({})",
            provider.label,
            if success { "success" } else { "failure" }
        ))
    }

    fn on_deadline(&mut self, contract_id: &str) -> Result<String, ScenarioFatal> {
        let now = self.queue.now();
        let outcome = self
            .contracts
            .get_mut(contract_id)
            .expect("known contract")
            .deadline_passed(now);
        match outcome {
            TimeoutOutcome::Expired => {
                let (customer, price) = {
                    let c = &self.contracts[contract_id];
                    (c.customer().label.clone(), c.price())
                };
                self.agents
                    .get_mut(&customer)
                    .expect("customer exists")
                    .release_commitment(price);
                self.counters.expired += 1;
                self.trace_contract(contract_id)?;
                Ok(format!("{contract_id} expired unaccepted"))
            }
            TimeoutOutcome::RefundDue(intent) => {
                let (customer, provider) = {
                    let c = &self.contracts[contract_id];
                    (
                        c.customer().clone(),
                        c.provider().cloned().expect("escrowed contract has provider"),
                    )
                };
                self.submit_or_defer(format!("refund-{contract_id}"), intent)?;
                self.counters.refunded_deadline += 1;
                self.trace_contract(contract_id)?;
                self.send(
                    &customer,
                    &provider,
                    Message::OutcomeNotice {
                        contract_id: contract_id.to_owned(),
                        settled: false,
                    },
                )?;
                Ok(format!("{contract_id} timed out; escrow refunded"))
            }
            TimeoutOutcome::Unaffected => {
                Ok(format!("deadline passed {contract_id} without effect"))
            }
        }
    }

    fn on_settle(&mut self, contract_id: &str) -> Result<String, ScenarioFatal> {
        let now = self.queue.now();
        let intent = self
            .contracts
            .get_mut(contract_id)
            .expect("known contract")
            .settle(now)?;
        let (customer, provider, price) = {
            let c = &self.contracts[contract_id];
            (
                c.customer().clone(),
                c.provider().cloned().expect("settled contract has provider"),
                c.price(),
            )
        };
        self.submit_or_defer(format!("settle-{contract_id}"), intent)?;
        self.counters.settled += 1;
        self.trace_contract(contract_id)?;
        self.send(
            &customer,
            &provider,
            Message::OutcomeNotice {
                contract_id: contract_id.to_owned(),
                settled: true,
            },
        )?;
        Ok(format!(
            "{contract_id} settled; {price} owed to {}",
            provider.label
        ))
    }

    fn on_mine_flush(&mut self) -> Result<String, ScenarioFatal> {
        let now = self.queue.now();
        let next = now + self.cfg.mine_interval;
        if next <= self.cfg.duration {
            self.schedule(next, EventKind::MineFlush);
        }
        let batch = self.mempool.take_batch(self.cfg.max_block_transactions);
        if batch.is_empty() {
            return Ok("mempool empty; no block mined".into());
        }
        let tx_count = batch.len();
        let block = mine_block(
            batch,
            self.chain.tip_hash(),
            self.chain.next_height(),
            self.cfg.pow_difficulty,
            self.miner.clone(),
        )?;
        self.chain
            .append_block(block.clone(), &self.scheme)
            .map_err(ScenarioFatal::SelfRejected)?;
        self.counters.blocks_mined += 1;
        self.counters.transactions_mined += tx_count as u64;
        let height = block.height;
        self.broadcast_block(&block)?;

        // Transfers that were waiting for this block's funds.
        let parked = std::mem::take(&mut self.deferred);
        for (tx_id, intent) in parked {
            self.submit_or_defer(tx_id, intent)?;
        }

        // Every robot above its wallet floor sends the surplus home.
        let mut sweeps = 0;
        let labels: Vec<String> = self.agents.keys().cloned().collect();
        for label in labels {
            let available = self.spendable(&self.agents[&label]);
            let swept = self
                .agents
                .get_mut(&label)
                .expect("agent exists")
                .sweep(available);
            if let Some((tx_id, intent)) = swept {
                let tx = intent.into_transaction(tx_id, &self.scheme);
                self.mempool
                    .submit(tx, &self.chain, &self.scheme)
                    .map_err(ScenarioFatal::SelfRejected)?;
                sweeps += 1;
            }
        }
        Ok(format!(
            "mined block {height} with {tx_count} tx(s); {sweeps} sweep(s) queued"
        ))
    }

    /// Sends one message over the lossy link, retransmitting with
    /// exponential backoff; per-pair FIFO order is preserved.
    fn send(
        &mut self,
        from: &AccountId,
        to: &AccountId,
        msg: Message,
    ) -> Result<(), ScenarioFatal> {
        let delay = self.reliable_delay(from, to)?;
        let planned = self.bus.unicast(from, to, self.queue.now(), delay);
        self.schedule(
            planned.at,
            EventKind::Deliver {
                from: from.clone(),
                to: planned.to,
                msg,
            },
        );
        Ok(())
    }

    /// Total delay until a message gets through: failed attempts burn
    /// backoff time, the successful one adds its sampled latency.
    fn reliable_delay(
        &mut self,
        from: &AccountId,
        to: &AccountId,
    ) -> Result<Tick, ScenarioFatal> {
        let mut elapsed = 0;
        for attempt in 0..MAX_SEND_ATTEMPTS {
            match self.link.send(&mut self.rng_net, attempt > 0) {
                Some(latency) => return Ok(elapsed + latency),
                None => elapsed += backoff_delay(self.link.model.base_latency, attempt),
            }
        }
        Err(ScenarioFatal::Undeliverable {
            from: from.to_string(),
            to: to.to_string(),
            attempts: MAX_SEND_ATTEMPTS,
        })
    }

    fn broadcast_block(&mut self, block: &Block) -> Result<(), ScenarioFatal> {
        let peer_accounts: Vec<AccountId> =
            self.peers.iter().map(|p| p.account().clone()).collect();
        for peer in &peer_accounts {
            let miner = self.miner.clone();
            let msg = Message::Block(Box::new(block.clone()));
            let delay = self.reliable_delay(&miner, peer)?;
            let planned = self.bus.unicast(&miner, peer, self.queue.now(), delay);
            self.schedule(
                planned.at,
                EventKind::Deliver {
                    from: miner,
                    to: planned.to,
                    msg,
                },
            );
        }
        Ok(())
    }

    /// Queues a transfer, parking it for retry after the next block when
    /// its funding has not been mined yet.
    fn submit_or_defer(&mut self, tx_id: String, intent: TxIntent) -> Result<(), ScenarioFatal> {
        let tx = intent
            .clone()
            .into_transaction(tx_id.clone(), &self.scheme);
        match self.mempool.submit(tx, &self.chain, &self.scheme) {
            Ok(()) => Ok(()),
            Err(RejectReason::InsufficientFunds { .. }) => {
                self.deferred.push((tx_id, intent));
                Ok(())
            }
            Err(other) => Err(ScenarioFatal::SelfRejected(other)),
        }
    }

    /// Chain balance minus mempool debits minus the agent's own standing
    /// commitments: what it may promise or sweep right now.
    fn spendable(&self, agent: &RobotAgent) -> Cents {
        let balance = self
            .chain
            .balance_of(&agent.account)
            .unwrap_or(Cents::ZERO);
        balance - self.mempool.pending_debit_of(&agent.account) - agent.committed()
    }

    fn schedule(&mut self, at: Tick, kind: EventKind) {
        self.queue
            .schedule(at, kind)
            .expect("engine never schedules into the past");
    }

    fn trace_contract(&mut self, contract_id: &str) -> Result<(), ScenarioFatal> {
        let record = {
            let contract = &self.contracts[contract_id];
            let last = contract
                .event_log()
                .last()
                .expect("traced contracts have events");
            ContractRecord {
                record: "contract",
                time: last.time,
                contract_id,
                step: last.step.as_str(),
                actor: last.actor.to_string(),
                state_after: contract.state().as_str(),
            }
        };
        self.write_line(&record)
    }

    fn write_line<T: Serialize>(&mut self, record: &T) -> Result<(), ScenarioFatal> {
        if let Some(w) = self.trace.as_deref_mut() {
            let line = serde_json::to_string(record).expect("trace records serialize");
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contracts::ContractState;

    fn config(doc: serde_json::Value) -> ScenarioConfig {
        ScenarioConfig::from_json_str(&doc.to_string()).expect("test config is valid")
    }

    fn exchange_config() -> serde_json::Value {
        serde_json::json!({
            "schema_version": 1,
            "name": "two-robot-exchange",
            "seed": 7,
            "duration": 5000,
            "pow_difficulty": 4,
            "mine_interval": 50,
            "link": {"base_latency": 3, "jitter": 2, "drop_probability": 0.0},
            "peers": [
                {"label": "watch-1", "honesty": "honest"},
                {"label": "watch-2", "honesty": "honest"},
                {"label": "watch-3", "honesty": "honest"}
            ],
            "unit_costs": {"cleaning": 55},
            "owners": [
                {"label": "maurice", "endowment": 0},
                {"label": "mo-capital"}
            ],
            "robots": [
                {"label": "facility-bot", "owner": "maurice", "endowment": 20000,
                 "role": "customer_only", "wallet_floor": 20000},
                {"label": "mo-robot", "owner": "mo-capital", "capabilities": ["cleaning"],
                 "role": "provider_only", "bid_margin": 0.08}
            ],
            "tasks": [
                {"customer": "facility-bot", "task_kind": "cleaning", "capability": "cleaning",
                 "count": 2, "first_due": 100, "interval": 1000, "price": 6000,
                 "work_duration": 90, "success_probability": 1.0,
                 "quote_window": 60, "deadline_after": 600}
            ]
        })
    }

    #[test]
    fn two_robot_exchange_settles_both_contracts() {
        let cfg = config(exchange_config());
        let out = run_scenario(&cfg, None).unwrap();

        assert_eq!(out.counters.contracts_created, 2);
        assert_eq!(out.counters.settled, 2);
        assert_eq!(out.counters.refunded_quorum, 0);
        assert_eq!(out.counters.expired, 0);
        assert!(out.chain.conserves_endowment());
        assert_eq!(out.mempool_residue, 0);

        for contract in out.contracts.values() {
            assert_eq!(contract.state(), ContractState::Settled);
            let steps: Vec<u8> = contract
                .event_log()
                .iter()
                .filter_map(|e| e.step.number())
                .collect();
            assert_eq!(steps, vec![1, 2, 3, 4, 5, 6]);
        }

        // All earnings swept to the provider's owner; the customer paid
        // for both jobs.
        assert_eq!(
            out.chain
                .balance_of(&AccountId::human("mo-capital"))
                .unwrap(),
            Cents(12000)
        );
        assert_eq!(
            out.chain
                .balance_of(&AccountId::robot("facility-bot"))
                .unwrap(),
            Cents(8000)
        );
        assert_eq!(
            out.chain.balance_of(&AccountId::robot("mo-robot")).unwrap(),
            Cents::ZERO
        );
        assert_eq!(out.settled_by_capability["cleaning"], Cents(12000));
        assert_eq!(out.swept_by_owner["mo-capital"], Cents(12000));
        assert!(out.delivery.reconciles());
        assert!(out.peer_summaries.iter().all(|p| p.in_sync));
    }

    #[test]
    fn same_seed_yields_identical_traces_and_hashes() {
        let cfg = config(exchange_config());
        let mut first = Vec::new();
        let mut second = Vec::new();
        let a = run_scenario(&cfg, Some(&mut first)).unwrap();
        let b = run_scenario(&cfg, Some(&mut second)).unwrap();
        assert!(!first.is_empty());
        assert_eq!(first, second);
        assert_eq!(a.final_hash, b.final_hash);
    }

    #[test]
    fn different_seeds_change_the_schedule_but_not_the_accounting() {
        let mut doc = exchange_config();
        doc["seed"] = serde_json::json!(8);
        let cfg = config(doc);
        let out = run_scenario(&cfg, None).unwrap();
        assert_eq!(out.counters.settled, 2);
        assert!(out.chain.conserves_endowment());
    }

    #[test]
    fn unpriceable_work_expires_and_releases_the_budget() {
        let mut doc = exchange_config();
        // No robot can weld; the announcement draws no quotes.
        doc["unit_costs"]["welding"] = serde_json::json!(70);
        doc["tasks"][0]["capability"] = serde_json::json!("welding");
        doc["tasks"][0]["count"] = serde_json::json!(1);
        let cfg = config(doc);
        let out = run_scenario(&cfg, None).unwrap();

        assert_eq!(out.counters.expired, 1);
        assert_eq!(out.counters.settled, 0);
        let contract = out.contracts.values().next().unwrap();
        assert_eq!(contract.state(), ContractState::Expired);
        assert!(out.chain.conserves_endowment());
        assert_eq!(
            out.chain
                .balance_of(&AccountId::robot("facility-bot"))
                .unwrap(),
            Cents(20000)
        );
    }

    #[test]
    fn slow_work_times_out_and_refunds_the_escrow() {
        let mut doc = exchange_config();
        // A job the provider will still bid on, but cannot finish before
        // the deadline: 800 ticks of work against a 600-tick horizon.
        doc["tasks"][0]["work_duration"] = serde_json::json!(800);
        doc["tasks"][0]["price"] = serde_json::json!(50000);
        doc["tasks"][0]["count"] = serde_json::json!(1);
        doc["robots"][0]["endowment"] = serde_json::json!(50000);
        doc["robots"][0]["wallet_floor"] = serde_json::json!(50000);
        let cfg = config(doc);
        let out = run_scenario(&cfg, None).unwrap();

        assert_eq!(out.counters.refunded_deadline, 1);
        assert_eq!(out.counters.settled, 0);
        let contract = out.contracts.values().next().unwrap();
        assert_eq!(contract.state(), ContractState::Refunded);
        assert!(out.chain.conserves_endowment());
        // The refund lands on-chain, restoring the full endowment.
        assert_eq!(
            out.chain
                .balance_of(&AccountId::robot("facility-bot"))
                .unwrap(),
            Cents(50000)
        );
        assert_eq!(
            out.chain
                .balance_of(&AccountId::contract("c-000001"))
                .unwrap(),
            Cents::ZERO
        );
    }

    #[test]
    fn failed_work_is_rejected_by_the_quorum_and_refunded() {
        let mut doc = exchange_config();
        doc["tasks"][0]["success_probability"] = serde_json::json!(0.0);
        doc["tasks"][0]["count"] = serde_json::json!(1);
        let cfg = config(doc);
        let out = run_scenario(&cfg, None).unwrap();

        assert_eq!(out.counters.refunded_quorum, 1);
        assert_eq!(out.counters.settled, 0);
        let contract = out.contracts.values().next().unwrap();
        assert_eq!(contract.state(), ContractState::Refunded);
        assert!(out.chain.conserves_endowment());
        assert_eq!(
            out.chain
                .balance_of(&AccountId::robot("facility-bot"))
                .unwrap(),
            Cents(20000)
        );
    }

    #[test]
    fn a_faulty_minority_cannot_block_settlement() {
        let mut doc = exchange_config();
        doc["peers"][2]["honesty"] = serde_json::json!("faulty_reject");
        let cfg = config(doc);
        let out = run_scenario(&cfg, None).unwrap();
        assert_eq!(out.counters.settled, 2);
    }

    #[test]
    fn a_faulty_majority_forces_refunds() {
        let mut doc = exchange_config();
        doc["peers"][1]["honesty"] = serde_json::json!("faulty_reject");
        doc["peers"][2]["honesty"] = serde_json::json!("faulty_reject");
        let cfg = config(doc);
        let out = run_scenario(&cfg, None).unwrap();
        assert_eq!(out.counters.settled, 0);
        assert_eq!(out.counters.refunded_quorum, 2);
        assert!(out.chain.conserves_endowment());
    }

    #[test]
    fn underfunded_customers_skip_tasks_instead_of_overpromising() {
        let mut doc = exchange_config();
        doc["robots"][0]["endowment"] = serde_json::json!(6000);
        doc["robots"][0]["wallet_floor"] = serde_json::json!(6000);
        // Both tasks fall due at once; only one fits the budget.
        doc["tasks"][0]["interval"] = serde_json::json!(0);
        doc["tasks"][0]["count"] = serde_json::json!(1);
        doc["tasks"].as_array_mut().unwrap().push(serde_json::json!(
            {"customer": "facility-bot", "task_kind": "cleaning", "capability": "cleaning",
             "count": 1, "first_due": 100, "price": 6000,
             "work_duration": 90, "success_probability": 1.0,
             "quote_window": 60, "deadline_after": 600}
        ));
        let cfg = config(doc);
        let out = run_scenario(&cfg, None).unwrap();
        assert_eq!(out.counters.contracts_created, 1);
        assert_eq!(out.counters.skipped_insufficient, 1);
        assert_eq!(out.counters.settled, 1);
        assert!(out.chain.conserves_endowment());
    }

    #[test]
    fn lossy_links_delay_but_do_not_derail_settlement() {
        let mut doc = exchange_config();
        doc["link"]["drop_probability"] = serde_json::json!(0.2);
        let cfg = config(doc);
        let out = run_scenario(&cfg, None).unwrap();
        assert_eq!(out.counters.settled, 2);
        assert!(out.delivery.dropped > 0);
        assert!(out.delivery.retransmitted > 0);
        assert!(out.delivery.reconciles());
        assert!(out.chain.conserves_endowment());
    }
}
