//! Turns a finished run into its final artifacts: one JSON document with
//! every number a test or a reader could want, and a text rendering whose
//! centerpiece is the two-panel budget table comparing the manual and the
//! robotic way of buying the same service.

use crate::currency::Cents;
use crate::econ::{
    annual_manual_cost, annual_robot_cost, decompose_spend, displacement_report, BudgetShare,
    DisplacementReport, ManualAnnualCost, RobotAnnualCost, SpendDecomposition,
};
use crate::engine::{PeerSummary, RunCounters, RunOutput};
use crate::netsim::{DeliveryStats, Tick};
use crate::scenario::ScenarioConfig;
use serde::Serialize;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReportError {
    /// The run ended with work still in flight, so settled totals would
    /// undercount what the scenario actually spent.
    #[error(
        "run incomplete: {open_contracts} contract(s) still open, \
         {unmined_transactions} transaction(s) never mined"
    )]
    IncompleteTrace {
        open_contracts: usize,
        unmined_transactions: usize,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSection {
    pub scenario: String,
    pub seed: u64,
    pub duration: Tick,
    pub end_time: Tick,
    pub seconds_per_tick: u64,
    pub counters: RunCounters,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainSection {
    pub blocks: usize,
    pub transactions: usize,
    pub final_hash: String,
    pub total_endowment: Cents,
    pub conserves_endowment: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct NetworkSection {
    pub delivery: DeliveryStats,
    pub peers: Vec<PeerSummary>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MarketSection {
    pub settled_by_capability: Vec<(String, Cents)>,
    pub swept_by_owner: Vec<(String, Cents)>,
    pub settled_total: Cents,
    pub decomposition: SpendDecomposition,
}

/// The closed-form cost models evaluated next to what the simulation
/// actually spent.
#[derive(Clone, Debug, Serialize)]
pub struct EconSection {
    pub manual: ManualAnnualCost,
    pub manual_shares: BudgetShare,
    pub robot: RobotAnnualCost,
    pub robot_shares: BudgetShare,
    pub displacement: DisplacementReport,
    /// Settled on-chain spend minus the model's robot total; zero when
    /// the simulation reproduces the closed form to the cent.
    pub settled_minus_model: Cents,
    pub simulation_matches_model: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioReport {
    pub run: RunSection,
    pub chain: ChainSection,
    pub network: NetworkSection,
    pub market: MarketSection,
    pub econ: Option<EconSection>,
}

/// Builds the closed-form half of the report alone, with the simulation
/// comparison left unfilled.
pub fn econ_section(cfg: &ScenarioConfig) -> Option<EconSection> {
    let econ = cfg.econ.as_ref()?;
    let manual = annual_manual_cost(&econ.manual).expect("validated config");
    let robot = annual_robot_cost(&econ.robot).expect("validated config");
    Some(EconSection {
        manual,
        manual_shares: manual.shares().expect("validated config"),
        robot,
        robot_shares: robot.shares().expect("validated config"),
        displacement: displacement_report(&econ.manual, &econ.robot).expect("validated config"),
        settled_minus_model: Cents::ZERO - robot.total,
        simulation_matches_model: false,
    })
}

/// Assembles the full report for a completed run.
pub fn build_report(
    cfg: &ScenarioConfig,
    out: &RunOutput,
) -> Result<ScenarioReport, ReportError> {
    let open_contracts = out
        .contracts
        .values()
        .filter(|c| !c.state().is_terminal())
        .count();
    if open_contracts > 0 || out.mempool_residue > 0 {
        return Err(ReportError::IncompleteTrace {
            open_contracts,
            unmined_transactions: out.mempool_residue,
        });
    }

    let settled_total: Cents = out.settled_by_capability.values().copied().sum();
    let decomposition = decompose_spend(&out.settled_by_capability, &cfg.cost_structures);
    let econ = econ_section(cfg).map(|mut section| {
        section.settled_minus_model = settled_total - section.robot.total;
        section.simulation_matches_model = settled_total == section.robot.total;
        section
    });

    Ok(ScenarioReport {
        run: RunSection {
            scenario: cfg.name.clone(),
            seed: cfg.seed,
            duration: cfg.duration,
            end_time: out.end_time,
            seconds_per_tick: cfg.seconds_per_tick,
            counters: out.counters,
        },
        chain: ChainSection {
            blocks: out.chain.block_count(),
            transactions: out.chain.tx_count(),
            final_hash: out.final_hash.to_hex(),
            total_endowment: out.chain.total_endowment(),
            conserves_endowment: out.chain.conserves_endowment(),
        },
        network: NetworkSection {
            delivery: out.delivery,
            peers: out.peer_summaries.clone(),
        },
        market: MarketSection {
            settled_by_capability: out
                .settled_by_capability
                .iter()
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
            swept_by_owner: out
                .swept_by_owner
                .iter()
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
            settled_total,
            decomposition,
        },
        econ,
    })
}

impl ScenarioReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "scenario {:?}, seed {}: {} ticks simulated of {}",
            self.run.scenario, self.run.seed, self.run.end_time, self.run.duration
        );
        let c = &self.run.counters;
        let _ = writeln!(
            s,
            "contracts: {} created, {} settled, {} refunded ({} by quorum, {} by deadline), {} expired, {} skipped for funds",
            c.contracts_created,
            c.settled,
            c.refunded_quorum + c.refunded_deadline,
            c.refunded_quorum,
            c.refunded_deadline,
            c.expired,
            c.skipped_insufficient
        );
        let _ = writeln!(
            s,
            "chain: {} blocks, {} transactions, endowment {} {}, tip {}",
            self.chain.blocks,
            self.chain.transactions,
            self.chain.total_endowment,
            if self.chain.conserves_endowment {
                "conserved"
            } else {
                "NOT CONSERVED"
            },
            &self.chain.final_hash[..16]
        );
        let d = &self.network.delivery;
        let _ = writeln!(
            s,
            "network: {} sent, {} delivered, {} dropped, {} retransmitted; {} peer(s), {} in sync",
            d.sent,
            d.delivered,
            d.dropped,
            d.retransmitted,
            self.network.peers.len(),
            self.network.peers.iter().filter(|p| p.in_sync).count()
        );

        let _ = writeln!(s, "\nsettled spend by capability:");
        if self.market.settled_by_capability.is_empty() {
            let _ = writeln!(s, "  (none)");
        }
        for (capability, amount) in &self.market.settled_by_capability {
            let _ = writeln!(s, "  {capability:<16} {amount:>14}");
        }
        let dec = &self.market.decomposition;
        let _ = writeln!(
            s,
            "  decomposed: labor {}, consumables {}, capital {}, unattributed {}",
            dec.labor, dec.consumables, dec.capital, dec.unattributed
        );
        if !self.market.swept_by_owner.is_empty() {
            let _ = writeln!(s, "earnings swept to owners:");
            for (owner, amount) in &self.market.swept_by_owner {
                let _ = writeln!(s, "  {owner:<16} {amount:>14}");
            }
        }

        if let Some(econ) = &self.econ {
            let _ = write!(s, "\n{}", render_budget_panels(econ));
            let _ = writeln!(
                s,
                "simulation settled {} against a modeled {}: {}",
                self.market.settled_total,
                econ.robot.total,
                if econ.simulation_matches_model {
                    "exact match".to_owned()
                } else {
                    format!("off by {}", econ.settled_minus_model)
                }
            );
        }
        s
    }
}

fn pct(share: f64) -> String {
    format!("{:.1}%", share * 100.0)
}

/// The side-by-side annual budget breakdown: same service, bought from a
/// human crew or from a robot, each spend split into labor, consumables,
/// and capital retribution.
pub fn render_budget_panels(econ: &EconSection) -> String {
    let mut s = String::new();
    let m = &econ.manual;
    let r = &econ.robot;
    let ms = &econ.manual_shares;
    let rs = &econ.robot_shares;
    let _ = writeln!(
        s,
        "annual budget      {:>14} {:>7}   {:>14} {:>7}",
        "manual", "", "robot", ""
    );
    let _ = writeln!(
        s,
        "  labor            {:>14} {:>7}   {:>14} {:>7}",
        m.labor.to_string(),
        pct(ms.labor_share),
        r.labor.to_string(),
        pct(rs.labor_share)
    );
    let _ = writeln!(
        s,
        "  consumables      {:>14} {:>7}   {:>14} {:>7}",
        m.consumables.to_string(),
        pct(ms.consumables_share),
        r.consumables.to_string(),
        pct(rs.consumables_share)
    );
    let _ = writeln!(
        s,
        "  capital          {:>14} {:>7}   {:>14} {:>7}",
        "$0.00",
        pct(ms.capital_share),
        r.capital.to_string(),
        pct(rs.capital_share)
    );
    let _ = writeln!(
        s,
        "  total            {:>14} {:>7}   {:>14} {:>7}",
        m.total.to_string(),
        "100.0%",
        r.total.to_string(),
        "100.0%"
    );
    let disp = &econ.displacement;
    let _ = writeln!(
        s,
        "displaced wages {}, new high-skill wages {}, capital retribution {}, net cost delta {}",
        disp.displaced_labor_cost,
        disp.new_highskill_labor_cost,
        disp.capital_retribution,
        disp.net_cost_delta
    );
    s
}
