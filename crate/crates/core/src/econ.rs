//! Closed-form cleaning economics: what a year of keeping a public hall
//! clean costs when a professional cleaner is hired versus when a cleaning
//! robot does the job.
//!
//! Both models land on the same annual total but split it very
//! differently. Manual cleaning is almost entirely labor; robotic cleaning
//! shifts most of the budget to capital (amortization plus carrying cost),
//! with a small slice of high-skill maintenance labor. All arithmetic is
//! in integer cents; shares are computed in floating point only when a
//! report is produced.

use crate::currency::{round_div, Cents};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EconError {
    #[error("invalid cost model: {0}")]
    InvariantViolation(String),
    #[error("components sum to {sum} but total is {total}")]
    ComponentMismatch { total: Cents, sum: Cents },
}

/// Hiring a professional cleaner: a per-square-meter rate covering labor
/// and materials, applied on a weekly schedule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManualCostModel {
    /// Cost of cleaning one square meter once.
    pub unit_cost: Cents,
    pub area_m2: u32,
    pub cleanings_per_week: u32,
    pub weeks_per_year: u32,
    /// Portion of the annual total that goes to consumables; the rest is
    /// labor.
    pub consumables_annual: Cents,
}

/// Hiring a cleaning robot: specialist maintenance labor, consumables and
/// repair, and the capital cost of the machine itself.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotCostModel {
    pub maintenance_minutes_per_day: u32,
    pub specialist_hourly_wage: Cents,
    pub days_per_week: u32,
    pub weeks_per_year: u32,
    pub consumables_repair_annual: Cents,
    pub robot_price: Cents,
    pub depreciation_years: u32,
    /// Capital cost beyond straight-line depreciation (insurance and the
    /// like).
    pub capital_carrying_annual: Cents,
}

/// One year of manual cleaning, broken down.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ManualAnnualCost {
    pub total: Cents,
    pub labor: Cents,
    pub consumables: Cents,
}

/// One year of robotic cleaning, broken down.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RobotAnnualCost {
    pub total: Cents,
    pub labor: Cents,
    pub consumables: Cents,
    pub capital: Cents,
}

/// Fractions of an annual budget going to labor, consumables, and capital.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BudgetShare {
    pub labor_share: f64,
    pub consumables_share: f64,
    pub capital_share: f64,
    /// True when the total was zero and all shares are defined as zero.
    pub degenerate: bool,
}

/// What replacing the cleaner with the robot does to the flow of money.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DisplacementReport {
    /// Annual wages that no longer go to the manual cleaner.
    pub displaced_labor_cost: Cents,
    /// Annual wages for the specialist who maintains the robot.
    pub new_highskill_labor_cost: Cents,
    /// Annual remuneration of the capital invested in the robot.
    pub capital_retribution: Cents,
    /// Robot total minus manual total; zero when the switch is cost
    /// neutral.
    pub net_cost_delta: Cents,
}

impl ManualCostModel {
    fn validate(&self) -> Result<(), EconError> {
        if self.unit_cost.is_negative() {
            return Err(EconError::InvariantViolation(
                "unit_cost must be nonnegative".into(),
            ));
        }
        if self.consumables_annual.is_negative() {
            return Err(EconError::InvariantViolation(
                "consumables_annual must be nonnegative".into(),
            ));
        }
        if self.consumables_annual > self.gross_total() {
            return Err(EconError::InvariantViolation(
                "consumables_annual exceeds the annual total".into(),
            ));
        }
        Ok(())
    }

    fn gross_total(&self) -> Cents {
        self.unit_cost
            .scale(self.area_m2 as i64)
            .scale(self.cleanings_per_week as i64)
            .scale(self.weeks_per_year as i64)
    }
}

impl RobotCostModel {
    fn validate(&self) -> Result<(), EconError> {
        for (value, name) in [
            (self.specialist_hourly_wage, "specialist_hourly_wage"),
            (self.consumables_repair_annual, "consumables_repair_annual"),
            (self.robot_price, "robot_price"),
            (self.capital_carrying_annual, "capital_carrying_annual"),
        ] {
            if value.is_negative() {
                return Err(EconError::InvariantViolation(format!(
                    "{name} must be nonnegative"
                )));
            }
        }
        if self.depreciation_years == 0 {
            return Err(EconError::InvariantViolation(
                "depreciation_years must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Annual cost of the manual model: rate times area times schedule, with
/// labor defined as whatever the consumables don't account for.
pub fn annual_manual_cost(model: &ManualCostModel) -> Result<ManualAnnualCost, EconError> {
    model.validate()?;
    let total = model.gross_total();
    Ok(ManualAnnualCost {
        total,
        labor: total - model.consumables_annual,
        consumables: model.consumables_annual,
    })
}

/// Annual cost of the robot model: maintenance labor plus consumables plus
/// capital (straight-line depreciation plus carrying cost).
pub fn annual_robot_cost(model: &RobotCostModel) -> Result<RobotAnnualCost, EconError> {
    model.validate()?;
    let minutes_per_year = (model.maintenance_minutes_per_day as i128)
        * (model.days_per_week as i128)
        * (model.weeks_per_year as i128);
    let labor = Cents(round_div(
        minutes_per_year * (model.specialist_hourly_wage.0 as i128),
        60,
    ));
    let amortization = Cents(round_div(
        model.robot_price.0 as i128,
        model.depreciation_years as i128,
    ));
    let capital = amortization + model.capital_carrying_annual;
    Ok(RobotAnnualCost {
        total: labor + model.consumables_repair_annual + capital,
        labor,
        consumables: model.consumables_repair_annual,
        capital,
    })
}

/// Splits a total into labor, consumables, and capital fractions. The
/// components must account for the whole total; a zero total yields the
/// degenerate all-zero share.
pub fn budget_shares(
    total: Cents,
    labor: Cents,
    consumables: Cents,
    capital: Cents,
) -> Result<BudgetShare, EconError> {
    let sum = labor + consumables + capital;
    if sum != total {
        return Err(EconError::ComponentMismatch { total, sum });
    }
    if total == Cents::ZERO {
        return Ok(BudgetShare {
            labor_share: 0.0,
            consumables_share: 0.0,
            capital_share: 0.0,
            degenerate: true,
        });
    }
    Ok(BudgetShare {
        labor_share: labor.ratio_of(total),
        consumables_share: consumables.ratio_of(total),
        capital_share: capital.ratio_of(total),
        degenerate: false,
    })
}

impl ManualAnnualCost {
    pub fn shares(&self) -> Result<BudgetShare, EconError> {
        budget_shares(self.total, self.labor, self.consumables, Cents::ZERO)
    }
}

impl RobotAnnualCost {
    pub fn shares(&self) -> Result<BudgetShare, EconError> {
        budget_shares(self.total, self.labor, self.consumables, self.capital)
    }
}

/// Compares the two models: who stops getting paid, who starts, and what
/// happens to the bottom line.
pub fn displacement_report(
    manual: &ManualCostModel,
    robot: &RobotCostModel,
) -> Result<DisplacementReport, EconError> {
    let manual_cost = annual_manual_cost(manual)?;
    let robot_cost = annual_robot_cost(robot)?;
    Ok(DisplacementReport {
        displaced_labor_cost: manual_cost.labor,
        new_highskill_labor_cost: robot_cost.labor,
        capital_retribution: robot_cost.capital,
        net_cost_delta: robot_cost.total - manual_cost.total,
    })
}

/// How one cent of settled spend on a capability splits across budget
/// buckets. The weights are relative; they are usually quoted as annual
/// cents but only their ratios matter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostStructure {
    pub labor: Cents,
    pub consumables: Cents,
    pub capital: Cents,
}

/// Settled simulation spend apportioned into budget buckets, in exact
/// cents. Spend on capabilities without a cost structure is reported as
/// unattributed rather than guessed at.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SpendDecomposition {
    pub total: Cents,
    pub labor: Cents,
    pub consumables: Cents,
    pub capital: Cents,
    pub unattributed: Cents,
}

impl SpendDecomposition {
    pub fn attributed(&self) -> Cents {
        self.labor + self.consumables + self.capital
    }
}

/// Apportions each capability's settled spend across the three buckets in
/// proportion to its cost structure, using largest-remainder rounding so
/// the integer parts always sum back to the settled amount.
pub fn decompose_spend(
    settled_by_capability: &BTreeMap<String, Cents>,
    structures: &BTreeMap<String, CostStructure>,
) -> SpendDecomposition {
    let mut out = SpendDecomposition::default();
    for (capability, &amount) in settled_by_capability {
        assert!(!amount.is_negative(), "settled spend cannot be negative");
        out.total += amount;
        let Some(s) = structures.get(capability) else {
            out.unattributed += amount;
            continue;
        };
        let weights = [s.labor.0 as i128, s.consumables.0 as i128, s.capital.0 as i128];
        let weight_sum: i128 = weights.iter().sum();
        if weight_sum <= 0 {
            out.unattributed += amount;
            continue;
        }
        let mut parts = [0i64; 3];
        let mut remainders = [0i128; 3];
        let mut assigned = 0i64;
        for (i, &w) in weights.iter().enumerate() {
            let scaled = (amount.0 as i128) * w;
            parts[i] = i64::try_from(scaled / weight_sum).expect("spend fits i64");
            remainders[i] = scaled % weight_sum;
            assigned += parts[i];
        }
        let mut leftover = amount.0 - assigned;
        // Hand out the remaining cents to the largest remainders, ties
        // resolved in bucket order so the result is deterministic.
        let mut order = [0usize, 1, 2];
        order.sort_by_key(|&i| (std::cmp::Reverse(remainders[i]), i));
        for &i in &order {
            if leftover == 0 {
                break;
            }
            parts[i] += 1;
            leftover -= 1;
        }
        out.labor += Cents(parts[0]);
        out.consumables += Cents(parts[1]);
        out.capital += Cents(parts[2]);
    }
    out
}
