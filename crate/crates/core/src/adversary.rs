//! Strategic agents: noise attackers and misreporting borrowers against the
//! estimators, and withholding agents against the static curve.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::controllers::StaticCurveParams;
use crate::error::{Error, Result};
use crate::market::CurveParams;

/// Occasional bursts of noise proportional to the current borrow and supply.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntermittentAttack {
    pub activation_prob: f64,
    pub sigma_attack: f64,
}

/// A borrower that, once triggered, exaggerates rate sensitivity for a fixed
/// number of blocks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersistentBorrowerAttack {
    pub activation_prob: f64,
    pub duration: u64,
    pub gamma_adv: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Borrower,
    Lender,
}

/// Agent controlling a share of demand or supply with an outside rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WithholdingAgent {
    pub side: Side,
    pub share: f64,
    pub external_rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AdversaryConfig {
    Intermittent(IntermittentAttack),
    PersistentBorrower(PersistentBorrowerAttack),
    Withholding(WithholdingAgent),
}

impl IntermittentAttack {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.activation_prob) {
            return Err(Error::invalid("adversary.activation_prob", "must lie in [0, 1]"));
        }
        if !(self.sigma_attack >= 0.0 && self.sigma_attack.is_finite()) {
            return Err(Error::invalid("adversary.sigma_attack", "must be non-negative"));
        }
        Ok(())
    }
}

impl PersistentBorrowerAttack {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.activation_prob) {
            return Err(Error::invalid("adversary.activation_prob", "must lie in [0, 1]"));
        }
        if self.duration < 1 {
            return Err(Error::invalid("adversary.duration", "must be at least 1"));
        }
        if !(self.gamma_adv > 1.0) {
            return Err(Error::invalid("adversary.gamma_adv", "must exceed 1"));
        }
        Ok(())
    }
}

impl WithholdingAgent {
    pub fn validate(&self) -> Result<()> {
        if !(self.share > 0.0 && self.share < 1.0) {
            return Err(Error::invalid("adversary.share", "must lie in (0, 1)"));
        }
        if !(self.external_rate > 0.0) {
            return Err(Error::invalid("adversary.external_rate", "must be positive"));
        }
        Ok(())
    }
}

impl AdversaryConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            AdversaryConfig::Intermittent(a) => a.validate(),
            AdversaryConfig::PersistentBorrower(a) => a.validate(),
            AdversaryConfig::Withholding(a) => a.validate(),
        }
    }
}

/// Draw whether the intermittent attacker is active this block.
pub fn intermittent_active<R: Rng + ?Sized>(attack: &IntermittentAttack, rng: &mut R) -> bool {
    attack.activation_prob > 0.0 && rng.random_bool(attack.activation_prob)
}

/// Noise added to a quantity of magnitude `level` while the attack is active.
pub fn attack_noise<R: Rng + ?Sized>(attack: &IntermittentAttack, level: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    level.abs() * attack.sigma_attack * z
}

/// Perturb one block's demand and supply. The market clamps are applied by
/// the caller afterwards.
pub fn apply_intermittent<R: Rng + ?Sized>(
    attack: &IntermittentAttack,
    demand: f64,
    supply: f64,
    rng: &mut R,
) -> (f64, f64) {
    if !intermittent_active(attack, rng) {
        return (demand, supply);
    }
    let d = demand + attack_noise(attack, demand, rng);
    let s = supply + attack_noise(attack, supply, rng);
    (d, s)
}

/// Activation state of the persistent borrower.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PersistentState {
    pub remaining: u64,
}

impl PersistentState {
    /// Advance one block: an idle attacker triggers with the activation
    /// probability and then stays active for `duration` blocks. Returns
    /// whether it is active in this block.
    pub fn advance<R: Rng + ?Sized>(&mut self, attack: &PersistentBorrowerAttack, rng: &mut R) -> bool {
        if self.remaining == 0 && attack.activation_prob > 0.0 && rng.random_bool(attack.activation_prob) {
            self.remaining = attack.duration;
        }
        if self.remaining > 0 {
            self.remaining -= 1;
            true
        } else {
            false
        }
    }
}

/// Demand parameters realized in the market this block. The true parameters
/// are returned unchanged when the attacker is idle.
pub fn apply_persistent_borrower(attack: &PersistentBorrowerAttack, params: &CurveParams, active: bool) -> CurveParams {
    if !active {
        return *params;
    }
    CurveParams {
        a_b: params.a_b * attack.gamma_adv,
        ..*params
    }
}

/// Slope and intercept of the steep branch, as used in the withholding
/// analysis.
fn steep_line(curve: &StaticCurveParams) -> (f64, f64) {
    (curve.steep_slope(), curve.steep_intercept())
}

/// Utility of a strategic lender depositing `deposit` out of its
/// `share * supply`, with the rate read off the steep branch and the
/// utilization multiplier dropped.
pub fn lender_utility(
    agent: &WithholdingAgent,
    deposit: f64,
    borrow: f64,
    supply: f64,
    curve: &StaticCurveParams,
) -> f64 {
    let (alpha, beta) = steep_line(curve);
    let rest = supply * (1.0 - agent.share);
    deposit * (alpha * borrow / (rest + deposit) + beta) + (supply * agent.share - deposit) * agent.external_rate
}

/// Utility of a strategic borrower taking `amount` out of its
/// `share * borrow`, with the rate read off the steep branch.
pub fn borrower_utility(
    agent: &WithholdingAgent,
    amount: f64,
    borrow: f64,
    supply: f64,
    curve: &StaticCurveParams,
) -> f64 {
    let (alpha, beta) = steep_line(curve);
    let rest = borrow * (1.0 - agent.share);
    -amount * (alpha * (rest + amount) / supply + beta) - (borrow * agent.share - amount) * agent.external_rate
}

/// Utility-maximizing deposit of a strategic lender. When the outside rate
/// does not exceed the steep intercept, withholding never pays and the full
/// share is deposited.
pub fn withholding_optimum_lender(
    agent: &WithholdingAgent,
    borrow: f64,
    supply: f64,
    curve: &StaticCurveParams,
) -> f64 {
    let (alpha, beta) = steep_line(curve);
    let cap = agent.share * supply;
    let gap = agent.external_rate - beta;
    if !(gap > 0.0) {
        return cap;
    }
    let rest = supply * (1.0 - agent.share);
    let l = -rest + (borrow * rest * alpha / gap).sqrt();
    l.clamp(0.0, cap)
}

/// Utility-maximizing borrow of a strategic borrower. Zero when the outside
/// rate is below the pool rate with only the other borrowers in.
pub fn withholding_optimum_borrower(
    agent: &WithholdingAgent,
    borrow: f64,
    supply: f64,
    curve: &StaticCurveParams,
) -> f64 {
    let (alpha, beta) = steep_line(curve);
    let cap = agent.share * borrow;
    let rest = borrow * (1.0 - agent.share);
    let b = (agent.external_rate - beta) * supply / (2.0 * alpha) - 0.5 * rest;
    b.clamp(0.0, cap)
}

/// Deposit of a truthful lender: as much of the share as keeps the steep
/// rate at or above the outside rate.
pub fn truthful_deposit(agent: &WithholdingAgent, borrow: f64, supply: f64, curve: &StaticCurveParams) -> f64 {
    let (alpha, beta) = steep_line(curve);
    let cap = agent.share * supply;
    let gap = agent.external_rate - beta;
    if !(gap > 0.0) {
        return cap;
    }
    (alpha * borrow / gap - supply * (1.0 - agent.share)).clamp(0.0, cap)
}

/// Borrow of a truthful borrower: as much of the share as keeps the steep
/// rate at or below the outside rate.
pub fn truthful_borrow(agent: &WithholdingAgent, borrow: f64, supply: f64, curve: &StaticCurveParams) -> f64 {
    let (alpha, beta) = steep_line(curve);
    let cap = agent.share * borrow;
    ((agent.external_rate - beta) * supply / alpha - borrow * (1.0 - agent.share)).clamp(0.0, cap)
}

/// Pool-level borrow and supply with the agent acting truthfully or
/// strategically, given the full truthful totals.
pub fn withholding_totals(
    agent: &WithholdingAgent,
    borrow: f64,
    supply: f64,
    curve: &StaticCurveParams,
    strategic: bool,
) -> (f64, f64) {
    match agent.side {
        Side::Lender => {
            let own = if strategic {
                withholding_optimum_lender(agent, borrow, supply, curve)
            } else {
                truthful_deposit(agent, borrow, supply, curve)
            };
            (borrow, supply * (1.0 - agent.share) + own)
        }
        Side::Borrower => {
            let own = if strategic {
                withholding_optimum_borrower(agent, borrow, supply, curve)
            } else {
                truthful_borrow(agent, borrow, supply, curve)
            };
            (borrow * (1.0 - agent.share) + own, supply)
        }
    }
}

/// Upper bound on the static-curve rate shift one withholding agent can
/// cause.
pub fn static_withholding_bound(agent: &WithholdingAgent, borrow: f64, supply: f64, curve: &StaticCurveParams) -> f64 {
    let base = borrow * agent.share * curve.r_slope2 / (supply * (1.0 - curve.kink));
    match agent.side {
        Side::Borrower => base,
        Side::Lender => base / (1.0 - agent.share),
    }
}

/// Rate shift on the static curve between truthful and strategic play with
/// fixed truthful totals.
pub fn static_withholding_impact(agent: &WithholdingAgent, borrow: f64, supply: f64, curve: &StaticCurveParams) -> f64 {
    let rate = |strategic| {
        let (b, l) = withholding_totals(agent, borrow, supply, curve, strategic);
        crate::controllers::static_rate((b / l).min(1.0), curve)
    };
    (rate(true) - rate(false)).abs()
}

/// Bound on the rate shift a learning controller suffers from a dominant
/// borrower or lender share with elastic truthful demand.
pub fn learning_controller_bound(
    params: &CurveParams,
    target_util: f64,
    share_b: f64,
    share_l: f64,
    supply: f64,
) -> f64 {
    let borrower = params.b_b * share_b / (2.0 * params.a_b);
    let lender = target_util * share_l * supply / (params.a_b * (2.0 - share_l));
    borrower.max(lender)
}
