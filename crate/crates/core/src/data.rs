//! Historical pool series: loading, lag selection and rolling RLS fits.
//!
//! Input CSV columns (header required, extra columns ignored):
//!
//! | column         | unit                  | required |
//! |----------------|-----------------------|----------|
//! | `timestamp`    | seconds               | yes      |
//! | `borrow_total` | asset units           | yes      |
//! | `supply_total` | asset units           | yes      |
//! | `borrow_rate`  | rate per slot         | for fits |
//! | `supply_rate`  | rate per slot         | no       |
//! | `utilization`  | fraction              | no       |

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{rls_update, EstimatorConfig, EstimatorState, Observation};
use crate::metrics::RunTrace;
use crate::rng::{stream, Component};

/// Slots excluded from error statistics while the estimator settles.
pub const FIT_WARMUP: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub timestamp: i64,
    pub borrow_total: f64,
    pub supply_total: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub borrow_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supply_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utilization: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapPolicy {
    #[default]
    ForwardFill,
    Error,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesSchema {
    pub slot_duration: i64,
    pub gaps: GapPolicy,
}

impl Default for SeriesSchema {
    fn default() -> Self {
        SeriesSchema {
            slot_duration: 10_800,
            gaps: GapPolicy::ForwardFill,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoolSeries {
    pub rows: Vec<SeriesRow>,
    pub slot_duration: i64,
}

impl PoolSeries {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn util(&self, i: usize) -> f64 {
        let r = &self.rows[i];
        r.utilization
            .unwrap_or_else(|| crate::market::utilization(r.borrow_total, r.supply_total))
    }

    fn borrow_rate(&self, i: usize) -> Result<f64> {
        self.rows[i].borrow_rate.ok_or(Error::BadRow {
            row: i + 1,
            reason: "missing borrow_rate".into(),
        })
    }

    /// Demand regressor at slot `i`.
    fn demand_regressor(&self, i: usize) -> Result<f64> {
        self.borrow_rate(i)
    }

    /// Supply regressor at slot `i`: supply rate when present, else the
    /// borrow rate scaled by utilization.
    fn supply_regressor(&self, i: usize) -> Result<f64> {
        match self.rows[i].supply_rate {
            Some(s) => Ok(s),
            None => Ok(self.borrow_rate(i)? * self.util(i)),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn bad(row: usize, reason: impl Into<String>) -> Error {
    Error::BadRow {
        row,
        reason: reason.into(),
    }
}

/// Check one row; `row` is the 1-based data row for diagnostics.
fn check_row(r: &SeriesRow, row: usize) -> Result<()> {
    if !(r.borrow_total >= 0.0 && r.supply_total >= 0.0) {
        return Err(bad(row, "totals must be non-negative"));
    }
    for (name, v) in [("borrow_rate", r.borrow_rate), ("supply_rate", r.supply_rate)] {
        if v.is_some_and(|v| !v.is_finite()) {
            return Err(bad(row, format!("{name} is not finite")));
        }
    }
    if let Some(u) = r.utilization {
        if !(0.0..=1.0).contains(&u) {
            return Err(bad(row, format!("utilization {u} outside [0, 1]")));
        }
    }
    Ok(())
}

/// Validate and regrid parsed rows.
pub fn build_series(raw: Vec<SeriesRow>, schema: &SeriesSchema) -> Result<PoolSeries> {
    if schema.slot_duration < 1 {
        return Err(Error::invalid("slot_duration", "must be positive"));
    }
    let mut rows: Vec<SeriesRow> = Vec::with_capacity(raw.len());
    for (i, r) in raw.into_iter().enumerate() {
        check_row(&r, i + 1)?;
        if let Some(prev) = rows.last().copied() {
            if r.timestamp <= prev.timestamp {
                return Err(bad(i + 1, "timestamps must be strictly increasing"));
            }
            let mut ts = prev.timestamp + schema.slot_duration;
            if ts < r.timestamp && schema.gaps == GapPolicy::Error {
                return Err(bad(i + 1, "gap in slot grid"));
            }
            while ts < r.timestamp {
                rows.push(SeriesRow { timestamp: ts, ..prev });
                ts += schema.slot_duration;
            }
        }
        rows.push(r);
    }
    if rows.is_empty() {
        return Err(Error::EmptyTrace);
    }
    Ok(PoolSeries {
        rows,
        slot_duration: schema.slot_duration,
    })
}

pub fn load_series(path: &Path, schema: &SeriesSchema) -> Result<PoolSeries> {
    let mut reader = csv::Reader::from_path(path)?;
    let raw = reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| bad(i + 1, e.to_string())))
        .collect::<Result<Vec<SeriesRow>>>()?;
    build_series(raw, schema)
}

/// Series view of a simulated run: one slot per block, the rate column
/// being the rate set at the end of each block.
pub fn series_from_trace(trace: &RunTrace, slot_duration: i64) -> PoolSeries {
    let rows = trace
        .rows
        .iter()
        .map(|r| SeriesRow {
            timestamp: r.t as i64 * slot_duration,
            borrow_total: r.borrow,
            supply_total: r.supply,
            borrow_rate: Some(r.rate),
            supply_rate: None,
            utilization: Some(r.util),
        })
        .collect();
    PoolSeries { rows, slot_duration }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagRow {
    pub delta: usize,
    pub mse_demand: f64,
    pub mse_supply: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LagSearchResult {
    pub rows: Vec<LagRow>,
    pub best_delta_demand: usize,
    pub best_delta_supply: usize,
}

fn fit_cfg(rho: f64) -> EstimatorConfig {
    EstimatorConfig {
        rho,
        ..EstimatorConfig::default()
    }
}

/// Mean squared one-step error of RLS on `y[t]` against `x[t - delta]`
/// over targets `t >= start`, skipping the first `FIT_WARMUP` errors.
fn lagged_mse(xs: &[f64], ys: &[f64], delta: usize, start: usize, cfg: &EstimatorConfig) -> Result<f64> {
    let mut state = EstimatorState::new(cfg.p0, cfg.rho);
    let (mut acc, mut n) = (0.0, 0usize);
    for (k, t) in (start..ys.len()).enumerate() {
        let obs = Observation::new(xs[t - delta], ys[t]);
        let e = obs.y - state.predict(obs.x);
        if k >= FIT_WARMUP {
            acc += e * e;
            n += 1;
        }
        state = rls_update(&state, &obs, cfg)?;
    }
    Ok(acc / n as f64)
}

/// One-step RLS error for each lag; every lag is scored on the same target
/// slots so ties are exact, and ties go to the smallest lag.
pub fn lag_search(series: &PoolSeries, rho: f64, deltas: &[usize]) -> Result<LagSearchResult> {
    let max_delta = deltas.iter().copied().max().ok_or(Error::invalid("deltas", "empty"))?;
    if deltas.contains(&0) {
        return Err(Error::invalid("deltas", "lags start at 1"));
    }
    let n = series.len();
    if n <= max_delta + FIT_WARMUP {
        return Err(Error::SeriesTooShort {
            len: n,
            required: max_delta + FIT_WARMUP,
        });
    }
    let xd = (0..n).map(|i| series.demand_regressor(i)).collect::<Result<Vec<_>>>()?;
    let xs = (0..n).map(|i| series.supply_regressor(i)).collect::<Result<Vec<_>>>()?;
    let yd: Vec<f64> = series.rows.iter().map(|r| r.borrow_total).collect();
    let ys: Vec<f64> = series.rows.iter().map(|r| r.supply_total).collect();
    let cfg = fit_cfg(rho);
    let rows = deltas
        .par_iter()
        .map(|&d| {
            Ok(LagRow {
                delta: d,
                mse_demand: lagged_mse(&xd, &yd, d, max_delta, &cfg)?,
                mse_supply: lagged_mse(&xs, &ys, d, max_delta, &cfg)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = |f: fn(&LagRow) -> f64| {
        let mut best = &rows[0];
        for r in &rows[1..] {
            if f(r) < f(best) || (f(r) == f(best) && r.delta < best.delta) {
                best = r;
            }
        }
        best.delta
    };
    Ok(LagSearchResult {
        best_delta_demand: best(|r| r.mse_demand),
        best_delta_supply: best(|r| r.mse_supply),
        rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub timestamp: i64,
    pub a_b: f64,
    pub b_b: f64,
    pub a_l: f64,
    pub b_l: f64,
    pub p_a_b: f64,
    pub p_b_b: f64,
    pub p_a_l: f64,
    pub p_b_l: f64,
    pub pred_borrow: f64,
    pub borrow: f64,
    pub pred_supply: f64,
    pub supply: f64,
}

/// Normalized one-step errors of a fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub delta_demand: usize,
    pub delta_supply: usize,
    pub rho: f64,
    pub slots: usize,
    /// Mean absolute one-step error over mean magnitude after warm-up,
    /// weighting every slot equally.
    pub error_demand: f64,
    pub error_supply: f64,
    pub final_rel_error_demand: f64,
    pub final_rel_error_supply: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub rows: Vec<FitRow>,
    pub summary: FitSummary,
}

/// Run both estimators over the series with the given lags.
pub fn fit_and_report(series: &PoolSeries, delta_demand: usize, delta_supply: usize, rho: f64) -> Result<FitReport> {
    let start = delta_demand.max(delta_supply);
    if delta_demand == 0 || delta_supply == 0 {
        return Err(Error::invalid("delta", "lags start at 1"));
    }
    if series.len() <= start + FIT_WARMUP {
        return Err(Error::SeriesTooShort {
            len: series.len(),
            required: start + FIT_WARMUP,
        });
    }
    let cfg = fit_cfg(rho);
    let mut dem = EstimatorState::new(cfg.p0, rho);
    let mut sup = EstimatorState::new(cfg.p0, rho);
    let mut rows = Vec::with_capacity(series.len() - start);
    let (mut err_d, mut mag_d, mut err_s, mut mag_s) = (0.0, 0.0, 0.0, 0.0);
    for (k, t) in (start..series.len()).enumerate() {
        let od = Observation::new(series.demand_regressor(t - delta_demand)?, series.rows[t].borrow_total);
        let os = Observation::new(series.supply_regressor(t - delta_supply)?, series.rows[t].supply_total);
        let pd = dem.predict(od.x);
        let ps = sup.predict(os.x);
        if k >= FIT_WARMUP {
            err_d += (pd - od.y).abs();
            mag_d += od.y.abs();
            err_s += (ps - os.y).abs();
            mag_s += os.y.abs();
        }
        dem = rls_update(&dem, &od, &cfg)?;
        sup = rls_update(&sup, &os, &cfg)?;
        rows.push(FitRow {
            timestamp: series.rows[t].timestamp,
            a_b: -dem.theta[0],
            b_b: dem.theta[1],
            a_l: sup.theta[0],
            b_l: -sup.theta[1],
            p_a_b: dem.p[0][0],
            p_b_b: dem.p[1][1],
            p_a_l: sup.p[0][0],
            p_b_l: sup.p[1][1],
            pred_borrow: pd,
            borrow: od.y,
            pred_supply: ps,
            supply: os.y,
        });
    }
    let ratio = |e: f64, m: f64| if m > 0.0 { e / m } else { 0.0 };
    let last = rows.last().copied().ok_or(Error::EmptyTrace)?;
    let rel = |p: f64, y: f64| if y != 0.0 { ((p - y) / y).abs() } else { (p - y).abs() };
    let summary = FitSummary {
        delta_demand,
        delta_supply,
        rho,
        slots: rows.len(),
        error_demand: ratio(err_d, mag_d),
        error_supply: ratio(err_s, mag_s),
        final_rel_error_demand: rel(last.pred_borrow, last.borrow),
        final_rel_error_supply: rel(last.pred_supply, last.supply),
    };
    Ok(FitReport { rows, summary })
}

pub fn write_fit_csv(report: &FitReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in &report.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Synthetic pool whose borrow responds to the rate `delta` slots earlier
/// and whose supply responds to the effective rate with the same lag. The
/// rate follows a mean-reverting AR(1) path.
pub fn synthetic_lagged_series(delta: usize, len: usize, noise_sd: f64, seed: u64, run_index: u64) -> PoolSeries {
    let mut rng = stream(seed, run_index, Component::Data);
    let (a_b, b_b, a_l, b_l) = (10.0, 5000.0, 500.0, 50.0);
    let (mean, phi, shock) = (20.0, 0.9, 2.0);
    let total = len + delta;
    let mut rates = Vec::with_capacity(total);
    let mut r: f64 = mean;
    for _ in 0..total {
        let z: f64 = rng.sample(StandardNormal);
        r = mean + phi * (r - mean) + shock * z;
        rates.push(r.max(1.0));
    }
    let util = 0.7;
    let rows = (0..len)
        .map(|i| {
            let t = i + delta;
            let zd: f64 = rng.sample(StandardNormal);
            let zs: f64 = rng.sample(StandardNormal);
            let borrow = (b_b - a_b * rates[t - delta] + noise_sd * zd).max(0.0);
            let supply = (a_l * rates[t - delta] * util - b_l + noise_sd * zs).max(borrow);
            SeriesRow {
                timestamp: i as i64 * 10_800,
                borrow_total: borrow,
                supply_total: supply,
                borrow_rate: Some(rates[t]),
                supply_rate: Some(rates[t] * util),
                utilization: None,
            }
        })
        .collect();
    PoolSeries {
        rows,
        slot_duration: 10_800,
    }
}
