//! Exogenous environment: collateral price, evolving curve parameters and the
//! truthful population's borrow/supply response.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Heston-style price state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceState {
    pub p: f64,
    pub var: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HestonParams {
    pub mu: f64,
    pub kappa: f64,
    pub theta: f64,
    pub xi: f64,
    pub var0: f64,
    pub p0: f64,
}

impl Default for HestonParams {
    fn default() -> Self {
        HestonParams {
            mu: 0.0,
            kappa: 0.05,
            theta: 1e-4,
            xi: 1e-3,
            var0: 1e-4,
            p0: 1.0,
        }
    }
}

impl HestonParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("heston.kappa", self.kappa >= 0.0),
            ("heston.theta", self.theta >= 0.0),
            ("heston.xi", self.xi >= 0.0),
            ("heston.var0", self.var0 >= 0.0),
            ("heston.p0", self.p0 > 0.0),
            ("heston.mu", self.mu.is_finite()),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(Error::invalid(name, "out of range"));
            }
        }
        Ok(())
    }

    pub fn initial_state(&self) -> PriceState {
        PriceState {
            p: self.p0,
            var: self.var0,
        }
    }

    /// Variance expected for the next block before its shock is drawn.
    pub fn next_variance_mean(&self, var: f64) -> f64 {
        (var + self.kappa * (self.theta - var)).max(0.0)
    }
}

/// One price step given the two standard-normal shocks: `vol_shock` drives
/// the variance recursion and `price_shock` the log-price.
pub fn step_price_with_shocks(
    state: PriceState,
    params: &HestonParams,
    vol_shock: f64,
    price_shock: f64,
) -> PriceState {
    let var =
        (state.var + params.kappa * (params.theta - state.var) + params.xi * state.var.sqrt() * vol_shock).max(0.0);
    let p = state.p * ((params.mu - 0.5 * var) + var.sqrt() * price_shock).exp();
    PriceState { p, var }
}

pub fn step_price<R: Rng + ?Sized>(state: PriceState, params: &HestonParams, rng: &mut R) -> PriceState {
    let vol_shock: f64 = rng.sample(StandardNormal);
    let price_shock: f64 = rng.sample(StandardNormal);
    step_price_with_shocks(state, params, vol_shock, price_shock)
}

/// Linear demand and supply curves with the band in which they apply.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveParams {
    pub a_b: f64,
    pub b_b: f64,
    pub a_l: f64,
    pub b_l: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for CurveParams {
    fn default() -> Self {
        CurveParams {
            a_b: 10.0,
            b_b: 5000.0,
            a_l: 500.0,
            b_l: 50.0,
            r_min: 1.0,
            r_max: 200.0,
        }
    }
}

impl CurveParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a_b", self.a_b),
            ("b_b", self.b_b),
            ("a_l", self.a_l),
            ("b_l", self.b_l),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        let lo = self.b_l / self.a_l;
        let hi = self.b_b / self.a_b;
        if !(lo < self.r_min && self.r_min < self.r_max && self.r_max < hi) {
            return Err(Error::invalid(
                "rate band",
                format!(
                    "need b_l/a_l ({lo}) < r_min ({}) < r_max ({}) < b_b/a_b ({hi})",
                    self.r_min, self.r_max
                ),
            ));
        }
        Ok(())
    }

    /// Demand parameters as the regression vector `[-a_b, b_b]`.
    pub fn demand_theta(&self) -> [f64; 2] {
        [-self.a_b, self.b_b]
    }

    /// Supply parameters as the regression vector `[a_l, -b_l]`.
    pub fn supply_theta(&self) -> [f64; 2] {
        [self.a_l, -self.b_l]
    }

    /// In-band borrow demand at rate `r`.
    pub fn demand_line(&self, r: f64) -> f64 {
        -self.a_b * r + self.b_b
    }

    /// In-band supply at effective rate `r * u`.
    pub fn supply_line(&self, effective_rate: f64) -> f64 {
        self.a_l * effective_rate - self.b_l
    }

    /// Noise-free equilibrium utilization when rate `r` is held fixed: the
    /// larger root of `a_l r U^2 - b_l U - (b_b - a_b r) = 0`.
    ///
    /// Returns `None` when the quadratic has no real root.
    pub fn equilibrium_utilization(&self, r: f64) -> Option<f64> {
        let disc = self.b_l * self.b_l - 4.0 * self.a_l * r * (self.a_b * r - self.b_b);
        if disc < 0.0 || r <= 0.0 {
            return None;
        }
        Some((self.b_l + disc.sqrt()) / (2.0 * self.a_l * r))
    }

    /// Restore positivity and the band ordering after a random perturbation.
    ///
    /// Each slope/intercept is floored at `floor_frac` of its magnitude in
    /// `reference`. If the supply threshold `b_l/a_l` reaches `b_b/a_b`, `b_l`
    /// is halved relative to that gap. Band edges are only moved when they
    /// fall outside `(b_l/a_l, b_b/a_b)`, and then just inside it.
    pub fn repaired(mut self, reference: &CurveParams, floor_frac: f64) -> CurveParams {
        self.a_b = self.a_b.max(floor_frac * reference.a_b.abs());
        self.b_b = self.b_b.max(floor_frac * reference.b_b.abs());
        self.a_l = self.a_l.max(floor_frac * reference.a_l.abs());
        self.b_l = self.b_l.max(floor_frac * reference.b_l.abs());
        let hi = self.b_b / self.a_b;
        if self.b_l / self.a_l >= hi {
            self.b_l = 0.5 * self.a_l * hi;
        }
        let lo = self.b_l / self.a_l;
        let inset = 1e-3 * (hi - lo);
        if !(self.r_min > lo && self.r_min < hi) {
            self.r_min = lo + inset;
        }
        if !(self.r_max < hi && self.r_max > self.r_min) {
            self.r_max = hi - inset;
        }
        if self.r_min >= self.r_max {
            self.r_min = lo + inset;
            self.r_max = hi - inset;
        }
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub block: u64,
    pub a_b: f64,
    pub b_b: f64,
    pub a_l: f64,
    pub b_l: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryMode {
    #[default]
    Static,
    RandomWalk,
    Replay,
}

/// How the true curve parameters evolve over a run.
///
/// In replay mode each entry applies from its block until the next entry;
/// the final entry covers `update_interval` blocks, after which the schedule
/// is exhausted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamTrajectory {
    #[serde(default)]
    pub mode: TrajectoryMode,
    #[serde(default = "default_update_interval")]
    pub update_interval: u64,
    #[serde(default)]
    pub sigma_trns: f64,
    #[serde(default)]
    pub base: CurveParams,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replay: Vec<ReplayEntry>,
}

fn default_update_interval() -> u64 {
    25
}

/// Positivity floor applied after each random-walk step, relative to `base`.
pub const PARAM_FLOOR_FRAC: f64 = 1e-3;

impl Default for ParamTrajectory {
    fn default() -> Self {
        ParamTrajectory {
            mode: TrajectoryMode::Static,
            update_interval: default_update_interval(),
            sigma_trns: 0.0,
            base: CurveParams::default(),
            replay: Vec::new(),
        }
    }
}

impl ParamTrajectory {
    pub fn validate(&self) -> Result<()> {
        if self.update_interval < 1 {
            return Err(Error::invalid("trajectory.update_interval", "must be at least 1"));
        }
        if !(self.sigma_trns >= 0.0 && self.sigma_trns.is_finite()) {
            return Err(Error::invalid("trajectory.sigma_trns", "must be non-negative"));
        }
        self.base.validate()?;
        if self.mode == TrajectoryMode::Replay {
            if self.replay.is_empty() {
                return Err(Error::invalid("trajectory.replay", "replay schedule is empty"));
            }
            if self.replay[0].block != 0 {
                return Err(Error::invalid("trajectory.replay", "first entry must start at block 0"));
            }
            if self.replay.windows(2).any(|w| w[1].block <= w[0].block) {
                return Err(Error::invalid(
                    "trajectory.replay",
                    "blocks must be strictly increasing",
                ));
            }
        }
        Ok(())
    }

    /// Parameters in force at block 0.
    pub fn initial(&self) -> CurveParams {
        match self.mode {
            TrajectoryMode::Replay if !self.replay.is_empty() => self.entry_params(&self.replay[0]),
            _ => self.base,
        }
    }

    fn entry_params(&self, e: &ReplayEntry) -> CurveParams {
        CurveParams {
            a_b: e.a_b,
            b_b: e.b_b,
            a_l: e.a_l,
            b_l: e.b_l,
            ..self.base
        }
        .repaired(&self.base, PARAM_FLOOR_FRAC)
    }
}

/// Load a replay schedule from a CSV with columns `block,a_b,b_b,a_l,b_l`.
pub fn load_replay_csv(path: &Path) -> Result<Vec<ReplayEntry>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in reader.deserialize().enumerate() {
        let e: ReplayEntry = rec.map_err(|err| Error::BadRow {
            row: i + 1,
            reason: err.to_string(),
        })?;
        out.push(e);
    }
    Ok(out)
}

/// Parameters in force at `block`, given those of the previous block.
pub fn step_params<R: Rng + ?Sized>(
    traj: &ParamTrajectory,
    current: &CurveParams,
    block: u64,
    rng: &mut R,
) -> Result<CurveParams> {
    match traj.mode {
        TrajectoryMode::Static => Ok(*current),
        TrajectoryMode::RandomWalk => {
            if block == 0 || !block.is_multiple_of(traj.update_interval) {
                return Ok(*current);
            }
            let shocks: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
            Ok(random_walk_step(traj, current, shocks))
        }
        TrajectoryMode::Replay => {
            let idx = traj.replay.partition_point(|e| e.block <= block);
            let last = traj
                .replay
                .last()
                .ok_or(Error::ReplayExhausted { block, last_block: 0 })?;
            if idx == 0 || block >= last.block + traj.update_interval && idx == traj.replay.len() {
                return Err(Error::ReplayExhausted {
                    block,
                    last_block: last.block,
                });
            }
            Ok(traj.entry_params(&traj.replay[idx - 1]))
        }
    }
}

/// One random-walk jump from explicit standard-normal shocks, ordered
/// `(a_b, b_b, a_l, b_l)`.
pub fn random_walk_step(traj: &ParamTrajectory, current: &CurveParams, shocks: [f64; 4]) -> CurveParams {
    let s = traj.sigma_trns;
    let next = CurveParams {
        a_b: current.a_b + s * current.a_b.abs() * shocks[0],
        b_b: current.b_b + s * current.b_b.abs() * shocks[1],
        a_l: current.a_l + s * current.a_l.abs() * shocks[2],
        b_l: current.b_l + s * current.b_l.abs() * shocks[3],
        ..*current
    };
    next.repaired(&traj.base, PARAM_FLOOR_FRAC)
}

/// Borrow demand given the previous block's rate and supply and a noise term.
pub fn demand_response(params: &CurveParams, prev_rate: f64, prev_supply: f64, noise: f64) -> f64 {
    let base = if prev_rate < params.r_min {
        prev_supply
    } else if prev_rate > params.r_max {
        0.0
    } else {
        params.demand_line(prev_rate)
    };
    (base + noise).min(prev_supply).max(0.0)
}

pub fn truthful_demand<R: Rng + ?Sized>(
    params: &CurveParams,
    prev_rate: f64,
    prev_supply: f64,
    noise_sd: f64,
    rng: &mut R,
) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    demand_response(params, prev_rate, prev_supply, noise_sd * z)
}

/// Supply given the previous block's effective rate `prev_rate * prev_util`.
pub fn supply_response(
    params: &CurveParams,
    prev_rate: f64,
    prev_util: f64,
    prev_borrow: f64,
    supply_cap: f64,
    noise: f64,
) -> f64 {
    let eff = prev_rate * prev_util;
    let base = if eff < params.r_min {
        prev_borrow
    } else if eff > params.r_max {
        supply_cap
    } else {
        params.supply_line(eff)
    };
    (base + noise).max(prev_borrow)
}

pub fn truthful_supply<R: Rng + ?Sized>(
    params: &CurveParams,
    prev_rate: f64,
    prev_util: f64,
    prev_borrow: f64,
    supply_cap: f64,
    noise_sd: f64,
    rng: &mut R,
) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    supply_response(params, prev_rate, prev_util, prev_borrow, supply_cap, noise_sd * z)
}

/// Per-block pool snapshot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolState {
    pub borrow: f64,
    pub supply: f64,
    pub util: f64,
    pub rate: f64,
    pub collateral_factor: f64,
    pub liq_threshold: f64,
    pub liq_incentive: f64,
    pub price: PriceState,
}

impl PoolState {
    /// Noise-free equilibrium of `params` at rate `r`, or `None` if the
    /// fixed-point utilization does not exist or leaves `[0, 1]`.
    pub fn equilibrium(params: &CurveParams, r: f64, price: PriceState) -> Option<PoolState> {
        let u = params.equilibrium_utilization(r)?;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let borrow = params.demand_line(r);
        Some(PoolState {
            borrow,
            supply: borrow / u,
            util: u,
            rate: r,
            collateral_factor: 0.8,
            liq_threshold: 0.9,
            liq_incentive: 0.0,
            price,
        })
    }
}

pub fn utilization(borrow: f64, supply: f64) -> f64 {
    if supply > 0.0 {
        borrow / supply
    } else {
        0.0
    }
}

pub fn advance_pool(state: &PoolState, demand: f64, supply: f64, new_rate: f64) -> PoolState {
    let borrow = demand.min(supply);
    PoolState {
        borrow,
        supply,
        util: utilization(borrow, supply),
        rate: new_rate,
        ..*state
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Component};

    #[test]
    fn price_identity_without_randomness() {
        let params = HestonParams {
            mu: 0.0,
            kappa: 0.0,
            theta: 0.0,
            xi: 0.0,
            var0: 0.0,
            p0: 100.0,
        };
        let mut rng = stream(1, 0, Component::Price);
        let s = step_price(PriceState { p: 100.0, var: 0.0 }, &params, &mut rng);
        assert_eq!(s, PriceState { p: 100.0, var: 0.0 });
    }

    #[test]
    fn drift_cancels_variance_correction() {
        let params = HestonParams {
            mu: 0.02,
            kappa: 0.0,
            theta: 0.0,
            xi: 0.0,
            var0: 0.04,
            p0: 100.0,
        };
        let s = step_price_with_shocks(PriceState { p: 100.0, var: 0.04 }, &params, 0.0, 0.0);
        assert_eq!(s.var, 0.04);
        assert!((s.p - 100.0).abs() < 1e-12);
    }

    #[test]
    fn variance_truncated_at_zero() {
        let params = HestonParams {
            mu: 0.0,
            kappa: 0.0,
            theta: 0.0,
            xi: 5.0,
            var0: 0.01,
            p0: 1.0,
        };
        let s = step_price_with_shocks(PriceState { p: 1.0, var: 0.01 }, &params, -10.0, 1.0);
        assert_eq!(s.var, 0.0);
        assert_eq!(s.p, 1.0);
    }

    #[test]
    fn demand_branches() {
        let p = CurveParams::default();
        assert_eq!(demand_response(&p, p.r_min - 1e-9, 1000.0, 0.0), 1000.0);
        assert_eq!(demand_response(&p, p.r_max + 1e-9, 1000.0, 0.0), 0.0);
        let q = CurveParams {
            a_b: 10.0,
            b_b: 50.0,
            a_l: 500.0,
            b_l: 50.0,
            r_min: 1.0,
            r_max: 4.0,
        };
        assert_eq!(demand_response(&q, 2.0, 1000.0, 0.0), 30.0);
        assert_eq!(demand_response(&q, 2.0, 1000.0, -100.0), 0.0);
        assert_eq!(demand_response(&q, 2.0, 20.0, 0.0), 20.0);
    }

    #[test]
    fn supply_branches() {
        let p = CurveParams {
            a_l: 500.0,
            b_l: 50.0,
            r_min: 0.15,
            ..CurveParams::default()
        };
        assert_eq!(supply_response(&p, 0.2, 0.5, 300.0, 1e6, 0.0), 300.0);
        assert_eq!(supply_response(&p, 0.4, 0.5, 10.0, 1e6, 0.0), 50.0);
        assert_eq!(supply_response(&p, 0.4, 0.5, 80.0, 1e6, 0.0), 80.0);
        assert_eq!(supply_response(&p, 500.0, 1.0, 10.0, 1e6, 0.0), 1e6);
    }

    #[test]
    fn advance_examples() {
        let s = PoolState::equilibrium(&CurveParams::default(), 20.0, PriceState { p: 1.0, var: 0.0 }).unwrap();
        let a = advance_pool(&s, 80.0, 100.0, 1.0);
        assert_eq!((a.borrow, a.supply, a.util, a.rate), (80.0, 100.0, 0.8, 1.0));
        let b = advance_pool(&s, 120.0, 100.0, 1.0);
        assert_eq!((b.borrow, b.util), (100.0, 1.0));
        let c = advance_pool(&s, 0.0, 0.0, 1.0);
        assert_eq!(c.util, 0.0);
    }

    #[test]
    fn repair_restores_band() {
        let reference = CurveParams::default();
        let broken = CurveParams {
            a_b: -3.0,
            b_b: 100.0,
            a_l: 1.0,
            b_l: 200.0,
            ..reference
        };
        let fixed = broken.repaired(&reference, PARAM_FLOOR_FRAC);
        fixed.validate().unwrap();
        assert_eq!(fixed.a_b, 0.01);
        let untouched = reference.repaired(&reference, PARAM_FLOOR_FRAC);
        assert_eq!(untouched, reference);
    }

    #[test]
    fn random_walk_only_on_interval() {
        let traj = ParamTrajectory {
            mode: TrajectoryMode::RandomWalk,
            update_interval: 25,
            sigma_trns: 0.1,
            ..ParamTrajectory::default()
        };
        let mut rng = stream(3, 0, Component::Params);
        let p0 = traj.base;
        assert_eq!(step_params(&traj, &p0, 24, &mut rng).unwrap(), p0);
        assert_ne!(step_params(&traj, &p0, 25, &mut rng).unwrap(), p0);
    }

    #[test]
    fn replay_schedule_and_exhaustion() {
        let base = CurveParams::default();
        let traj = ParamTrajectory {
            mode: TrajectoryMode::Replay,
            update_interval: 10,
            replay: vec![
                ReplayEntry {
                    block: 0,
                    a_b: 10.0,
                    b_b: 5000.0,
                    a_l: 500.0,
                    b_l: 50.0,
                },
                ReplayEntry {
                    block: 5,
                    a_b: 12.0,
                    b_b: 5000.0,
                    a_l: 500.0,
                    b_l: 50.0,
                },
            ],
            ..ParamTrajectory::default()
        };
        traj.validate().unwrap();
        let mut rng = stream(3, 0, Component::Params);
        assert_eq!(step_params(&traj, &base, 4, &mut rng).unwrap().a_b, 10.0);
        assert_eq!(step_params(&traj, &base, 14, &mut rng).unwrap().a_b, 12.0);
        assert!(matches!(
            step_params(&traj, &base, 15, &mut rng),
            Err(Error::ReplayExhausted { block: 15, .. })
        ));
    }
}
