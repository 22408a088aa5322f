//! Interest-rate and risk-parameter policies.

pub mod rate;
pub mod risk;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{self, EstimatorConfig, EstimatorState, Observation};
use crate::market::PoolState;

pub use rate::{
    clamp_rate, optimal_rate_revenue, optimal_rate_util, rate_variance, revenue_objective, sample_rate,
    static_fixed_supply_steady_state, static_rate, Estimates, StaticCurveParams, StaticSteadyState,
};
pub use risk::{
    expected_default, expected_liquidation, solve_collateral_factor, solve_liq_threshold, solve_risk_params,
    RiskTargets, RISK_TOL,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    /// Online estimates plugged into the utilization-targeting rate.
    #[default]
    RlsUtil,
    /// Online estimates plugged into the revenue-maximizing rate.
    RlsRevenue,
    /// Two-slope utilization curve.
    Static,
    /// Open-loop excitation for estimator experiments: the true optimal rate
    /// with relative Gaussian dither. The estimators run but do not steer.
    OracleDither,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    #[serde(default)]
    pub kind: ControllerKind,
    #[serde(default = "defaults::target_util")]
    pub target_util: f64,
    #[serde(default = "defaults::u_max")]
    pub u_max: f64,
    /// Sample the emitted rate around the estimated optimum.
    #[serde(default = "defaults::explore")]
    pub explore: bool,
    /// Emitted-rate clamp; defaults to the base curve's band `[r_min, r_max]`,
    /// outside which demand no longer responds to the rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_bounds: Option<[f64; 2]>,
    /// Static curve; when absent the scenario derives one from the base
    /// curve.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub static_curve: Option<StaticCurveParams>,
    /// Blocks at the start of a run during which the rate is dithered around
    /// its initial value while the estimators gather data.
    #[serde(default = "defaults::bootstrap_blocks")]
    pub bootstrap_blocks: u64,
    /// Relative dither used during bootstrap and when the estimates give no
    /// usable rate.
    #[serde(default = "defaults::probe_dither")]
    pub probe_dither: f64,
}

mod defaults {
    pub fn target_util() -> f64 {
        0.7
    }
    pub fn u_max() -> f64 {
        0.9
    }
    pub fn explore() -> bool {
        true
    }
    pub fn bootstrap_blocks() -> u64 {
        20
    }
    pub fn probe_dither() -> f64 {
        0.05
    }
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            kind: ControllerKind::RlsUtil,
            target_util: defaults::target_util(),
            u_max: defaults::u_max(),
            explore: defaults::explore(),
            rate_bounds: None,
            static_curve: None,
            bootstrap_blocks: defaults::bootstrap_blocks(),
            probe_dither: defaults::probe_dither(),
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_util > 0.0 && self.target_util < 1.0) {
            return Err(Error::invalid("controller.target_util", "must lie in (0, 1)"));
        }
        if !(self.u_max > 0.0 && self.u_max <= 1.0) {
            return Err(Error::invalid("controller.u_max", "must lie in (0, 1]"));
        }
        if let Some([lo, hi]) = self.rate_bounds {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(Error::invalid("controller.rate_bounds", "need finite lo < hi"));
            }
        }
        if let Some(c) = &self.static_curve {
            c.validate()?;
        }
        if !(self.probe_dither >= 0.0 && self.probe_dither.is_finite()) {
            return Err(Error::invalid("controller.probe_dither", "must be non-negative"));
        }
        Ok(())
    }

    /// Rate bounds in force given the base curve's band.
    pub fn resolved_bounds(&self, base_r_min: f64, base_r_max: f64) -> [f64; 2] {
        self.rate_bounds.unwrap_or([base_r_min, base_r_max])
    }
}

/// Per-run controller: owns the demand and supply estimators.
#[derive(Clone, Debug)]
pub struct RateController {
    pub cfg: ControllerConfig,
    pub est_cfg: EstimatorConfig,
    pub curve: StaticCurveParams,
    pub bounds: [f64; 2],
    pub demand: EstimatorState,
    pub supply: EstimatorState,
    initial_rate: f64,
    last_rate: f64,
    reference_rate: f64,
    steps: u64,
    /// Whether the most recent rate came from the fallback probe.
    pub probing: bool,
}

impl RateController {
    pub fn new(
        cfg: ControllerConfig,
        est_cfg: EstimatorConfig,
        curve: StaticCurveParams,
        bounds: [f64; 2],
        initial_rate: f64,
    ) -> Self {
        RateController {
            cfg,
            est_cfg,
            curve,
            bounds,
            demand: EstimatorState::from_config(&est_cfg),
            supply: EstimatorState::from_config(&est_cfg),
            initial_rate,
            last_rate: initial_rate,
            reference_rate: initial_rate,
            steps: 0,
            probing: false,
        }
    }

    /// True optimal rate for the coming block, used only by
    /// [`ControllerKind::OracleDither`].
    pub fn set_reference_rate(&mut self, r: f64) {
        self.reference_rate = r;
    }

    pub fn estimates(&self) -> Estimates {
        Estimates::from_thetas(self.demand.theta, self.supply.theta)
    }

    /// Feed one block of observations to the estimators. Static controllers
    /// ignore them.
    pub fn observe(&mut self, demand: &Observation, supply: &Observation) -> Result<()> {
        if self.cfg.kind == ControllerKind::Static {
            return Ok(());
        }
        self.demand = estimators::update(&self.demand, demand, &self.est_cfg)?;
        self.supply = estimators::update(&self.supply, supply, &self.est_cfg)?;
        Ok(())
    }

    /// Rate for the next block given the pool after the current one.
    pub fn next_rate<R: Rng + ?Sized>(&mut self, pool: &PoolState, rng: &mut R) -> f64 {
        self.steps += 1;
        self.probing = false;
        let r = match self.cfg.kind {
            ControllerKind::Static => static_rate(pool.util, &self.curve),
            ControllerKind::OracleDither => self.dither(self.reference_rate, rng),
            _ if self.steps <= self.cfg.bootstrap_blocks => self.dither(self.initial_rate, rng),
            _ => match self.estimated_rate(rng) {
                Ok(r) => r,
                Err(_) => {
                    self.probing = true;
                    self.dither(self.last_rate, rng)
                }
            },
        };
        let r = clamp_rate(r, self.bounds);
        if !self.probing {
            self.last_rate = r;
        }
        r
    }

    /// Observe, then pick the next rate. Non-finite observations are errors;
    /// unusable estimates fall back to probing around the last good rate.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        pool: &PoolState,
        demand: &Observation,
        supply: &Observation,
        rng: &mut R,
    ) -> Result<f64> {
        self.observe(demand, supply)?;
        Ok(self.next_rate(pool, rng))
    }

    fn dither<R: Rng + ?Sized>(&self, around: f64, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        around * (1.0 + self.cfg.probe_dither * z)
    }

    fn estimated_rate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let est = self.estimates();
        let (mean, target) = match self.cfg.kind {
            ControllerKind::RlsRevenue => (optimal_rate_revenue(&est, self.cfg.u_max)?, self.cfg.u_max),
            _ => (optimal_rate_util(&est, self.cfg.target_util)?, self.cfg.target_util),
        };
        if !mean.is_finite() {
            return Err(Error::DegenerateDenominator(mean));
        }
        let mean = clamp_rate(mean, self.bounds);
        if !self.cfg.explore {
            return Ok(mean);
        }
        let var = rate_variance(&est, &self.demand.p, &self.supply.p, target);
        Ok(sample_rate(mean, var, self.bounds, rng))
    }
}
