//! Scenario configuration and the per-block simulation loop.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{self, AdversaryConfig, PersistentState};
use crate::controllers::{
    optimal_rate_revenue, optimal_rate_util, solve_risk_params, ControllerConfig, ControllerKind, Estimates,
    RateController, RiskTargets, StaticCurveParams,
};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorConfig, Observation};
use crate::market::{
    self, advance_pool, load_replay_csv, step_params, step_price, CurveParams, HestonParams, ParamTrajectory,
    PoolState, TrajectoryMode, PARAM_FLOOR_FRAC,
};
use crate::metrics::{MetricReport, RunTrace, TraceRow};
use crate::rng::{stream, Component};

/// When lenders react to the rate set in the previous block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupplyTiming {
    /// Supply settles jointly with this block's borrow: the effective rate
    /// uses the utilization at which the supply line meets realized demand.
    #[default]
    Equilibrium,
    /// Supply reacts to the previous block's utilization.
    Lagged,
}

/// One multiplicative change of the true parameters at a given block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamJump {
    pub block: u64,
    /// Factors applied to `(a_b, b_b, a_l, b_l)`.
    pub scale: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    #[serde(default)]
    pub trajectory: ParamTrajectory,
    /// Replay schedule file, resolved relative to the config file and inlined
    /// into `trajectory.replay` on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_csv: Option<PathBuf>,
    #[serde(default)]
    pub heston: HestonParams,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    /// Supply above the band; defaults to 100 times the initial supply.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supply_cap: Option<f64>,
    #[serde(default)]
    pub supply_timing: SupplyTiming,
    /// Rate at block 0; defaults to the controller's optimum for the initial
    /// parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump: Option<ParamJump>,
}

fn default_noise_sd() -> f64 {
    1.0
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            trajectory: ParamTrajectory::default(),
            replay_csv: None,
            heston: HestonParams::default(),
            noise_sd: default_noise_sd(),
            supply_cap: None,
            supply_timing: SupplyTiming::default(),
            initial_rate: None,
            jump: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Write one trace CSV per run.
    #[serde(default)]
    pub traces: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub horizon: u64,
    #[serde(default = "default_runs")]
    pub runs: u64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub market: MarketConfig,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adversary: Option<AdversaryConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub risk: Option<RiskTargets>,
    /// Metric names to report; all when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub metrics: Vec<String>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_runs() -> u64 {
    1
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            horizon: 1000,
            runs: 1,
            base_seed: 0,
            market: MarketConfig::default(),
            controller: ControllerConfig::default(),
            estimator: EstimatorConfig::default(),
            adversary: None,
            risk: None,
            metrics: Vec::new(),
            output: OutputConfig::default(),
        }
    }
}

const METRIC_NAMES: [&str; 13] = [
    "rate_deviation",
    "util_mse",
    "normalized_rate_dev",
    "param_rmse_a_b",
    "param_rmse_b_b",
    "param_rmse_a_l",
    "param_rmse_b_l",
    "param_mse",
    "param_rel_mse",
    "pred_error_demand",
    "pred_error_supply",
    "demand_rmse",
    "probe_fraction",
];

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<ScenarioConfig> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        Ok(cfg)
    }

    /// Parse a config file, inline any replay schedule and validate.
    pub fn load(path: &Path) -> Result<ScenarioConfig> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        let mut cfg = ScenarioConfig::from_toml_str(&text)?;
        if let Some(rel) = cfg.market.replay_csv.take() {
            let file = path.parent().unwrap_or(Path::new(".")).join(rel);
            cfg.market.trajectory.replay = load_replay_csv(&file)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if self.runs < 1 {
            return Err(Error::config("runs", "must be at least 1"));
        }
        let m = &self.market;
        m.trajectory.validate()?;
        m.heston.validate()?;
        if !(m.noise_sd >= 0.0 && m.noise_sd.is_finite()) {
            return Err(Error::config("market.noise_sd", "must be non-negative"));
        }
        if let Some(cap) = m.supply_cap {
            if !(cap > 0.0) {
                return Err(Error::config("market.supply_cap", "must be positive"));
            }
        }
        if let Some(j) = &m.jump {
            if j.scale.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::config("market.jump.scale", "factors must be positive"));
            }
        }
        self.controller.validate()?;
        self.estimator.validate()?;
        if let Some(a) = &self.adversary {
            a.validate()?;
            if matches!(a, AdversaryConfig::Withholding(_)) && self.controller.kind != ControllerKind::Static {
                return Err(Error::config(
                    "adversary",
                    "withholding agents act against the static curve; set controller.kind = \"static\"",
                ));
            }
        }
        if let Some(r) = &self.risk {
            r.validate()?;
        }
        if let Some(bad) = self.metrics.iter().find(|n| !METRIC_NAMES.contains(&n.as_str())) {
            return Err(Error::config("metrics", format!("unknown metric `{bad}`")));
        }
        self.setup()?;
        Ok(())
    }

    /// Rate targeted by the controller under `params`.
    pub fn optimal_rate(&self, params: &CurveParams) -> f64 {
        let est = Estimates::from(params);
        let util = || optimal_rate_util(&est, self.controller.target_util).unwrap_or(f64::NAN);
        match self.controller.kind {
            ControllerKind::RlsRevenue => optimal_rate_revenue(&est, self.controller.u_max).unwrap_or_else(|_| util()),
            _ => util(),
        }
    }

    /// Static curve in force: configured, or first slope at the initial
    /// optimal rate and second slope half of it, kinked at the target.
    pub fn static_curve(&self) -> StaticCurveParams {
        self.controller.static_curve.unwrap_or_else(|| {
            let r0 = self.optimal_rate(&self.market.trajectory.initial());
            StaticCurveParams {
                r_slope1: r0,
                r_slope2: 0.5 * r0,
                kink: self.controller.target_util,
            }
        })
    }

    fn setup(&self) -> Result<Setup> {
        let params = self.market.trajectory.initial();
        let rate = match self.market.initial_rate {
            Some(r) => r,
            None => self.optimal_rate(&params),
        };
        let price = self.market.heston.initial_state();
        let pool = PoolState::equilibrium(&params, rate, price).ok_or_else(|| {
            Error::config(
                "market.initial_rate",
                format!("no equilibrium utilization in [0, 1] at rate {rate}"),
            )
        })?;
        let bounds = self
            .controller
            .resolved_bounds(self.market.trajectory.base.r_min, self.market.trajectory.base.r_max);
        let pool = PoolState {
            rate: crate::controllers::clamp_rate(rate, bounds),
            ..pool
        };
        let cap = self.market.supply_cap.unwrap_or(100.0 * pool.supply);
        Ok(Setup {
            params,
            pool,
            bounds,
            cap,
            curve: self.static_curve(),
        })
    }

    /// Blocks the closed loop needs to forget its start.
    pub fn mixing_window(&self) -> u64 {
        match self.controller.kind {
            ControllerKind::Static => 1,
            _ => {
                let rho = self.estimator.rho.min(0.999);
                let memory = (1.0 / (1.0 - rho)).ceil() as u64;
                memory.max(self.controller.bootstrap_blocks)
            }
        }
    }
}

struct Setup {
    params: CurveParams,
    pool: PoolState,
    bounds: [f64; 2],
    cap: f64,
    curve: StaticCurveParams,
}

/// Trace and metrics of one run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub run_index: u64,
    pub trace: RunTrace,
    pub report: MetricReport,
    pub probe_blocks: u64,
    pub infeasible_risk_blocks: u64,
}

/// Simulate run `run_index`. With `adversarial` false any configured
/// adversary stays idle (withholding agents play truthfully) while all
/// exogenous noise is unchanged.
pub fn run_once(cfg: &ScenarioConfig, run_index: u64, adversarial: bool) -> Result<RunOutput> {
    let Setup {
        mut params,
        mut pool,
        bounds,
        cap,
        curve,
    } = cfg.setup()?;
    let seed = cfg.base_seed;
    let mut rng_params = stream(seed, run_index, Component::Params);
    let mut rng_market = stream(seed, run_index, Component::Market);
    let mut rng_price = stream(seed, run_index, Component::Price);
    let mut rng_ctrl = stream(seed, run_index, Component::Controller);
    let mut rng_adv = stream(seed, run_index, Component::Adversary);

    let traj = &cfg.market.trajectory;
    let base = traj.base;
    let heston = &cfg.market.heston;
    let noise_sd = cfg.market.noise_sd;
    let lag = cfg.estimator.lag as u64;
    let mut controller = RateController::new(cfg.controller, cfg.estimator, curve, bounds, pool.rate);
    let mut persistent = PersistentState::default();
    let mut applied: Vec<f64> = Vec::with_capacity(cfg.horizon as usize + 1);
    applied.push(pool.rate);
    let mut rows = Vec::with_capacity(cfg.horizon as usize);
    let (mut probe_blocks, mut infeasible) = (0, 0);

    for t in 1..=cfg.horizon {
        params = step_params(traj, &params, t, &mut rng_params)?;
        if let Some(j) = cfg.market.jump.filter(|j| j.block == t) {
            params = CurveParams {
                a_b: params.a_b * j.scale[0],
                b_b: params.b_b * j.scale[1],
                a_l: params.a_l * j.scale[2],
                b_l: params.b_l * j.scale[3],
                ..params
            }
            .repaired(&base, PARAM_FLOOR_FRAC);
        }
        let price = step_price(pool.price, heston, &mut rng_price);
        let r = pool.rate;
        applied.push(r);

        let z_demand: f64 = rand::Rng::sample(&mut rng_market, rand_distr::StandardNormal);
        let z_supply: f64 = rand::Rng::sample(&mut rng_market, rand_distr::StandardNormal);
        let (mut extra_d, mut extra_s) = (0.0, 0.0);
        let mut realized = params;
        match (&cfg.adversary, adversarial) {
            (Some(AdversaryConfig::Intermittent(a)), true) => {
                if adversary::intermittent_active(a, &mut rng_adv) {
                    extra_d = adversary::attack_noise(a, pool.borrow, &mut rng_adv);
                    extra_s = adversary::attack_noise(a, pool.supply, &mut rng_adv);
                }
            }
            (Some(AdversaryConfig::PersistentBorrower(a)), true) => {
                let active = persistent.advance(a, &mut rng_adv);
                realized = adversary::apply_persistent_borrower(a, &params, active);
            }
            _ => {}
        }
        let mut demand = market::demand_response(&realized, r, pool.supply, noise_sd * z_demand + extra_d);
        let supply_util = match cfg.market.supply_timing {
            SupplyTiming::Equilibrium => {
                let disc = (params.b_l * params.b_l + 4.0 * params.a_l * r.max(0.0) * demand).max(0.0);
                let l_eq = 0.5 * (-params.b_l + disc.sqrt());
                market::utilization(demand, l_eq)
            }
            SupplyTiming::Lagged => pool.util,
        };
        let mut supply =
            market::supply_response(&params, r, supply_util, pool.borrow, cap, noise_sd * z_supply + extra_s);
        if let Some(AdversaryConfig::Withholding(agent)) = &cfg.adversary {
            (demand, supply) = adversary::withholding_totals(agent, demand, supply, &curve, adversarial);
        }

        let mut next = advance_pool(&pool, demand, supply, r);
        next.price = price;

        let reg_rate = applied[t.saturating_sub(lag - 1).max(1) as usize];
        let supply_reg_util = match cfg.market.supply_timing {
            SupplyTiming::Equilibrium => next.util,
            SupplyTiming::Lagged => pool.util,
        };
        let obs_d = Observation::new(reg_rate, next.borrow);
        let obs_s = Observation::new(reg_rate * supply_reg_util, next.supply);
        let pred_borrow = controller.demand.predict(obs_d.x);
        let pred_supply = controller.supply.predict(obs_s.x);

        controller.set_reference_rate(cfg.optimal_rate(&params));
        next.rate = controller.step(&next, &obs_d, &obs_s, &mut rng_ctrl)?;
        if controller.probing {
            probe_blocks += 1;
        }

        if let Some(targets) = &cfg.risk {
            let v = heston.next_variance_mean(price.var);
            let sigma = v.sqrt().max(1e-12);
            match solve_risk_params(targets, heston.mu - 0.5 * v, sigma) {
                Ok((lt, c)) => {
                    next.liq_threshold = lt;
                    next.collateral_factor = c;
                }
                Err(_) => infeasible += 1,
            }
        }

        let est = controller.estimates();
        rows.push(TraceRow {
            t,
            rate: next.rate,
            optimal_rate: cfg.optimal_rate(&params),
            util: next.util,
            borrow: next.borrow,
            supply: next.supply,
            price: price.p,
            var: price.var,
            collateral_factor: next.collateral_factor,
            liq_threshold: next.liq_threshold,
            est_a_b: est.a_b,
            est_b_b: est.b_b,
            est_a_l: est.a_l,
            est_b_l: est.b_l,
            rho_demand: controller.demand.rho,
            rho_supply: controller.supply.rho,
            a_b: params.a_b,
            b_b: params.b_b,
            a_l: params.a_l,
            b_l: params.b_l,
            pred_borrow,
            obs_borrow: next.borrow,
            pred_supply,
            obs_supply: next.supply,
        });
        pool = next;
    }

    let trace = RunTrace { rows };
    let report = MetricReport::from_trace(&trace, cfg.controller.target_util, cfg.estimator.warmup, probe_blocks)?;
    Ok(RunOutput {
        run_index,
        trace,
        report,
        probe_blocks,
        infeasible_risk_blocks: infeasible,
    })
}

/// All runs of a scenario, in run order.
pub fn run_scenario(cfg: &ScenarioConfig, adversarial: bool) -> Result<Vec<RunOutput>> {
    cfg.validate()?;
    (0..cfg.runs)
        .into_par_iter()
        .map(|i| run_once(cfg, i, adversarial))
        .collect()
}

/// Apply `value` at the dotted `axis` path of the config. The path must
/// already exist; the value keeps the type of the current entry.
pub fn with_axis(cfg: &ScenarioConfig, axis: &str, value: &str) -> Result<ScenarioConfig> {
    let mut doc = toml::Value::try_from(cfg)?;
    let mut slot = &mut doc;
    for key in axis.split('.') {
        slot = slot.get_mut(key).ok_or_else(|| Error::UnknownAxis(axis.to_string()))?;
    }
    let parsed = match slot {
        toml::Value::Float(_) => value.parse::<f64>().ok().map(toml::Value::Float),
        toml::Value::Integer(_) => value.parse::<i64>().ok().map(toml::Value::Integer),
        toml::Value::Boolean(_) => value.parse::<bool>().ok().map(toml::Value::Boolean),
        toml::Value::String(_) => Some(toml::Value::String(value.to_string())),
        _ => return Err(Error::UnknownAxis(axis.to_string())),
    };
    *slot = parsed.ok_or_else(|| Error::config(axis, format!("cannot parse `{value}`")))?;
    let out: ScenarioConfig = doc
        .try_into()
        .map_err(|e: toml::de::Error| Error::config(axis, e.to_string()))?;
    out.validate()?;
    Ok(out)
}

/// Whether the trajectory needs a replay schedule that is missing.
pub fn needs_replay(cfg: &ScenarioConfig) -> bool {
    cfg.market.trajectory.mode == TrajectoryMode::Replay && cfg.market.trajectory.replay.is_empty()
}
