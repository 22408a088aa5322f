//! Expected default and liquidation under a lognormal price move, and the
//! collateral-factor solver built on them.
//!
//! The next price is `p * X` with `ln X ~ N(mu, sigma^2)`. Both quantities are
//! per unit borrowed: default for a position opened at loan-to-value `LT`,
//! liquidation for a position opened at loan-to-value `c` with no incentive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{bisect_boundary, norm_cdf};

/// Solver tolerance on the collateral factor.
pub const RISK_TOL: f64 = 1e-6;

/// `E[max(0, 1 - X / LT)]`.
pub fn expected_default(lt: f64, mu: f64, sigma: f64) -> f64 {
    let z = (lt.ln() - mu) / sigma;
    let v = norm_cdf(z) - (0.5 * sigma * sigma + mu).exp() / lt * norm_cdf(z - sigma);
    v.max(0.0)
}

/// `E[max(0, 1 - (LT / c) X)] / (1 - LT)`: the liquidation needed to bring a
/// position opened at loan-to-value `c` back to `LT`, per unit borrowed.
pub fn expected_liquidation(lt: f64, c: f64, mu: f64, sigma: f64) -> f64 {
    let z = ((c / lt).ln() - mu) / sigma;
    let tail = norm_cdf(z) - lt / c * (mu + 0.5 * sigma * sigma).exp() * norm_cdf(z - sigma);
    tail.max(0.0) / (1.0 - lt)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskTargets {
    pub max_expected_default: f64,
    pub max_expected_liquidation: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lt_fixed: Option<f64>,
}

impl RiskTargets {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("risk.max_expected_default", self.max_expected_default),
            ("risk.max_expected_liquidation", self.max_expected_liquidation),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(name, format!("must lie in (0, 1), got {v}")));
            }
        }
        if let Some(lt) = self.lt_fixed {
            if !(lt > 0.0 && lt < 1.0) {
                return Err(Error::invalid("risk.lt_fixed", format!("must lie in (0, 1), got {lt}")));
            }
        }
        Ok(())
    }
}

/// Largest `c` in `(0, lt)` whose expected liquidation stays within `target`.
pub fn solve_collateral_factor(target: f64, lt: f64, mu: f64, sigma: f64) -> Result<f64> {
    let ok = |c: f64| expected_liquidation(lt, c, mu, sigma) <= target;
    let hi = lt - RISK_TOL;
    if ok(hi) {
        return Ok(hi);
    }
    let lo = RISK_TOL * lt;
    if !ok(lo) {
        return Err(Error::Infeasible {
            target,
            floor: lo,
            at_floor: expected_liquidation(lt, lo, mu, sigma),
        });
    }
    Ok(bisect_boundary(lo, hi, RISK_TOL, ok))
}

/// Largest liquidation threshold whose expected default stays within
/// `target`.
pub fn solve_liq_threshold(target: f64, mu: f64, sigma: f64) -> Result<f64> {
    let ok = |lt: f64| expected_default(lt, mu, sigma) <= target;
    let hi = 1.0 - RISK_TOL;
    if ok(hi) {
        return Ok(hi);
    }
    let lo = RISK_TOL;
    if !ok(lo) {
        return Err(Error::Infeasible {
            target,
            floor: lo,
            at_floor: expected_default(lo, mu, sigma),
        });
    }
    Ok(bisect_boundary(lo, hi, RISK_TOL, ok))
}

/// Liquidation threshold and collateral factor meeting both targets.
pub fn solve_risk_params(targets: &RiskTargets, mu: f64, sigma: f64) -> Result<(f64, f64)> {
    let lt = match targets.lt_fixed {
        Some(lt) => lt,
        None => solve_liq_threshold(targets.max_expected_default, mu, sigma)?,
    };
    let c = solve_collateral_factor(targets.max_expected_liquidation, lt, mu, sigma)?;
    Ok((lt, c))
}
