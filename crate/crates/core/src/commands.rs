//! Subcommand implementations shared by the command-line driver and tests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adversary::{self, AdversaryConfig};
use crate::controllers::{expected_liquidation, solve_risk_params, RiskTargets};
use crate::data::{self, PoolSeries};
use crate::error::{Error, Result};
use crate::market::step_price;
use crate::metrics::{aggregate, MetricReport, Summary};
use crate::rng::{stream, Component};
use crate::scenario::{run_once, run_scenario, with_axis, RunOutput, ScenarioConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimulateOutput {
    pub summary: Vec<Summary>,
    pub runs: Vec<MetricReport>,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn keep_selected(cfg: &ScenarioConfig, summary: Vec<Summary>) -> Vec<Summary> {
    if cfg.metrics.is_empty() {
        return summary;
    }
    summary
        .into_iter()
        .filter(|s| cfg.metrics.contains(&s.metric))
        .collect()
}

fn write_summary_csv(path: &Path, summary: &[Summary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in summary {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

/// Run every seed of a scenario and aggregate.
pub fn simulate(cfg: &ScenarioConfig) -> Result<(SimulateOutput, Vec<RunOutput>)> {
    let runs = run_scenario(cfg, true)?;
    let reports: Vec<MetricReport> = runs.iter().map(|r| r.report.clone()).collect();
    let summary = keep_selected(cfg, aggregate(&reports));
    Ok((SimulateOutput { summary, runs: reports }, runs))
}

/// `simulate` plus its files: the effective config, the aggregated report
/// and, if enabled, one trace per run.
pub fn cmd_simulate(cfg: &ScenarioConfig, out_dir: &Path, format: Format) -> Result<SimulateOutput> {
    let (out, runs) = simulate(cfg)?;
    ensure_dir(out_dir)?;
    fs::write(out_dir.join("effective_config.toml"), cfg.to_toml_string()?)?;
    match format {
        Format::Json => fs::write(out_dir.join("report.json"), serde_json::to_string_pretty(&out)?)?,
        Format::Csv => write_summary_csv(&out_dir.join("report.csv"), &out.summary)?,
    }
    if cfg.output.traces {
        let dir = out_dir.join("traces");
        ensure_dir(&dir)?;
        for r in &runs {
            r.trace.write_csv(&dir.join(format!("run_{:04}.csv", r.run_index)))?;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

/// Aggregated metrics for each value of one config axis, in long format.
pub fn sweep(cfg: &ScenarioConfig, axis: &str, values: &[String]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for v in values {
        let c = with_axis(cfg, axis, v)?;
        let (out, _) = simulate(&c)?;
        rows.extend(out.summary.into_iter().map(|s| SweepRow {
            axis: axis.to_string(),
            value: v.clone(),
            metric: s.metric,
            mean: s.mean,
            stderr: s.stderr,
            count: s.count,
        }));
    }
    Ok(rows)
}

pub fn cmd_sweep(
    cfg: &ScenarioConfig,
    axis: &str,
    values: &[String],
    out_dir: &Path,
    format: Format,
) -> Result<Vec<SweepRow>> {
    let rows = sweep(cfg, axis, values)?;
    ensure_dir(out_dir)?;
    fs::write(out_dir.join("effective_config.toml"), cfg.to_toml_string()?)?;
    match format {
        Format::Json => fs::write(out_dir.join("sweep.json"), serde_json::to_string_pretty(&rows)?)?,
        Format::Csv => {
            let mut w = csv::Writer::from_path(out_dir.join("sweep.csv"))?;
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactRow {
    pub run: u64,
    /// Mean absolute rate gap over the final quarter of the horizon.
    pub gap: f64,
    /// Theoretical bound at the truthful run's final-quarter totals, where
    /// one applies.
    pub bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactReport {
    pub runs: Vec<ImpactRow>,
    pub mean_gap: f64,
    pub mean_bound: Option<f64>,
}

/// Steady-state rate gap between a truthful and an adversarial run sharing
/// all exogenous randomness.
pub fn measure_adversarial_impact(cfg: &ScenarioConfig, run_index: u64, with_attack: bool) -> Result<ImpactRow> {
    let required = 4 * cfg.mixing_window();
    if cfg.horizon < required {
        return Err(Error::HorizonTooShort {
            horizon: cfg.horizon,
            required,
        });
    }
    let truthful = run_once(cfg, run_index, false)?;
    let strategic = run_once(cfg, run_index, with_attack)?;
    let a = truthful.trace.tail();
    let b = strategic.trace.tail();
    let gap = a.iter().zip(b).map(|(x, y)| (x.rate - y.rate).abs()).sum::<f64>() / a.len() as f64;
    let bound = match &cfg.adversary {
        Some(AdversaryConfig::Withholding(agent)) => {
            let n = a.len() as f64;
            let borrow = a.iter().map(|r| r.borrow).sum::<f64>() / n;
            let supply = a.iter().map(|r| r.supply).sum::<f64>() / n;
            Some(adversary::static_withholding_bound(
                agent,
                borrow,
                supply,
                &cfg.static_curve(),
            ))
        }
        _ => None,
    };
    Ok(ImpactRow {
        run: run_index,
        gap,
        bound,
    })
}

pub fn adversary_report(cfg: &ScenarioConfig) -> Result<ImpactReport> {
    cfg.validate()?;
    if cfg.adversary.is_none() {
        return Err(Error::config("adversary", "no adversary configured"));
    }
    use rayon::prelude::*;
    let runs = (0..cfg.runs)
        .into_par_iter()
        .map(|i| measure_adversarial_impact(cfg, i, true))
        .collect::<Result<Vec<_>>>()?;
    let n = runs.len() as f64;
    let mean_gap = runs.iter().map(|r| r.gap).sum::<f64>() / n;
    let mean_bound = runs
        .iter()
        .map(|r| r.bound)
        .collect::<Option<Vec<f64>>>()
        .map(|b| b.iter().sum::<f64>() / n);
    Ok(ImpactReport {
        runs,
        mean_gap,
        mean_bound,
    })
}

pub fn cmd_adversary(cfg: &ScenarioConfig, out_dir: &Path, format: Format) -> Result<ImpactReport> {
    let report = adversary_report(cfg)?;
    ensure_dir(out_dir)?;
    fs::write(out_dir.join("effective_config.toml"), cfg.to_toml_string()?)?;
    match format {
        Format::Json => fs::write(out_dir.join("impact.json"), serde_json::to_string_pretty(&report)?)?,
        Format::Csv => {
            let mut w = csv::Writer::from_path(out_dir.join("impact.csv"))?;
            for r in &report.runs {
                w.serialize(r)?;
            }
            w.flush()?;
        }
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub t: u64,
    pub sigma: f64,
    pub mu: f64,
    pub liq_threshold: f64,
    pub collateral_factor: f64,
    pub expected_liq: f64,
    pub feasible: bool,
}

#[derive(Clone, Copy, Debug, Deserialize)]
struct SigmaRow {
    sigma: f64,
    #[serde(default)]
    mu: Option<f64>,
}

/// Per-slot log-return drift and volatility: read from a CSV with a `sigma`
/// column (and optional `mu`), or forecast one block ahead along a simulated
/// price path.
pub fn volatility_path(cfg: &ScenarioConfig, sigma_csv: Option<&Path>) -> Result<Vec<(f64, f64)>> {
    let heston = &cfg.market.heston;
    if let Some(path) = sigma_csv {
        let mut reader = csv::Reader::from_path(path)?;
        let mut out = Vec::new();
        for (i, r) in reader.deserialize().enumerate() {
            let r: SigmaRow = r.map_err(|e| Error::BadRow {
                row: i + 1,
                reason: e.to_string(),
            })?;
            if !(r.sigma > 0.0) {
                return Err(Error::BadRow {
                    row: i + 1,
                    reason: "sigma must be positive".into(),
                });
            }
            out.push((r.mu.unwrap_or(heston.mu - 0.5 * r.sigma * r.sigma), r.sigma));
        }
        return Ok(out);
    }
    let mut rng = stream(cfg.base_seed, 0, Component::Price);
    let mut state = heston.initial_state();
    let mut out = Vec::with_capacity(cfg.horizon as usize);
    for _ in 0..cfg.horizon {
        let v = heston.next_variance_mean(state.var);
        out.push((heston.mu - 0.5 * v, v.sqrt().max(1e-12)));
        state = step_price(state, heston, &mut rng);
    }
    Ok(out)
}

/// Solve the risk parameters slot by slot.
pub fn risk_trajectory(targets: &RiskTargets, path: &[(f64, f64)]) -> Vec<RiskRow> {
    path.iter()
        .enumerate()
        .map(|(i, &(mu, sigma))| match solve_risk_params(targets, mu, sigma) {
            Ok((lt, c)) => RiskRow {
                t: i as u64 + 1,
                sigma,
                mu,
                liq_threshold: lt,
                collateral_factor: c,
                expected_liq: expected_liquidation(lt, c, mu, sigma),
                feasible: true,
            },
            Err(_) => RiskRow {
                t: i as u64 + 1,
                sigma,
                mu,
                liq_threshold: f64::NAN,
                collateral_factor: f64::NAN,
                expected_liq: f64::NAN,
                feasible: false,
            },
        })
        .collect()
}

/// Write the risk trajectory; infeasible slots are reported in the file and
/// turn the result into an infeasibility error.
pub fn cmd_risk(cfg: &ScenarioConfig, sigma_csv: Option<&Path>, out_dir: &Path) -> Result<Vec<RiskRow>> {
    let targets = cfg.risk.ok_or_else(|| Error::config("risk", "risk targets required"))?;
    targets.validate()?;
    let path = volatility_path(cfg, sigma_csv)?;
    let rows = risk_trajectory(&targets, &path);
    ensure_dir(out_dir)?;
    let mut w = csv::Writer::from_path(out_dir.join("risk.csv"))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    if let Some(bad) = rows.iter().find(|r| !r.feasible) {
        let lt = targets.lt_fixed.unwrap_or(1.0 - crate::controllers::RISK_TOL);
        let floor = crate::controllers::RISK_TOL * lt;
        return Err(Error::Infeasible {
            target: targets.max_expected_liquidation,
            floor,
            at_floor: expected_liquidation(lt, floor, bad.mu, bad.sigma),
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct FitOutput {
    pub lags: data::LagSearchResult,
    pub fit: data::FitSummary,
}

/// Lag search followed by a fit at the selected lags.
pub fn fit(series: &PoolSeries, rho: f64, max_delta: usize) -> Result<(FitOutput, data::FitReport)> {
    let deltas: Vec<usize> = (1..=max_delta).collect();
    let lags = data::lag_search(series, rho, &deltas)?;
    let report = data::fit_and_report(series, lags.best_delta_demand, lags.best_delta_supply, rho)?;
    Ok((
        FitOutput {
            lags,
            fit: report.summary.clone(),
        },
        report,
    ))
}

pub fn cmd_fit(series: &PoolSeries, rho: f64, max_delta: usize, out_dir: &Path) -> Result<FitOutput> {
    let (out, report) = fit(series, rho, max_delta)?;
    ensure_dir(out_dir)?;
    let mut w = csv::Writer::from_path(out_dir.join("lags.csv"))?;
    for r in &out.lags.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    data::write_fit_csv(&report, &out_dir.join("fit.csv"))?;
    fs::write(out_dir.join("fit_report.json"), serde_json::to_string_pretty(&out)?)?;
    Ok(out)
}

/// Size the global worker pool; `None` leaves the default of one worker per
/// core.
pub fn set_threads(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config("--threads", e.to_string()))?;
    }
    Ok(())
}

/// Output directory: explicit flag, then the config, then `out`.
pub fn resolve_out_dir(flag: Option<PathBuf>, cfg: &ScenarioConfig) -> PathBuf {
    flag.or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}
