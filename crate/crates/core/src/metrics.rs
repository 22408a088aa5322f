//! Evaluation quantities over simulated traces and per-user risk.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::mean_stderr;

/// One block of a simulated run. Column order of the trace CSV follows the
/// field order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u64,
    /// Rate set at the end of the block.
    pub rate: f64,
    /// Rate that targets the utilization goal under the true parameters.
    pub optimal_rate: f64,
    pub util: f64,
    pub borrow: f64,
    pub supply: f64,
    pub price: f64,
    pub var: f64,
    pub collateral_factor: f64,
    pub liq_threshold: f64,
    pub est_a_b: f64,
    pub est_b_b: f64,
    pub est_a_l: f64,
    pub est_b_l: f64,
    pub rho_demand: f64,
    pub rho_supply: f64,
    pub a_b: f64,
    pub b_b: f64,
    pub a_l: f64,
    pub b_l: f64,
    /// A-priori borrow prediction and its realized value.
    pub pred_borrow: f64,
    pub obs_borrow: f64,
    pub pred_supply: f64,
    pub obs_supply: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
}

impl RunTrace {
    pub fn validate(&self) -> Result<()> {
        if self.rows.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::BadRow {
                row: 0,
                reason: "trace blocks not strictly increasing".into(),
            });
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<RunTrace> {
        let mut reader = csv::Reader::from_path(path)?;
        let rows = reader
            .deserialize()
            .enumerate()
            .map(|(i, r)| {
                r.map_err(|e| Error::BadRow {
                    row: i + 1,
                    reason: e.to_string(),
                })
            })
            .collect::<Result<Vec<TraceRow>>>()?;
        Ok(RunTrace { rows })
    }

    /// Rows from the final quarter of the run.
    pub fn tail(&self) -> &[TraceRow] {
        let n = self.rows.len();
        &self.rows[n - n.div_ceil(4)..]
    }
}

fn nonempty<T>(xs: &[T]) -> Result<()> {
    if xs.is_empty() {
        Err(Error::EmptyTrace)
    } else {
        Ok(())
    }
}

/// Mean absolute gap between emitted and reference rates.
pub fn rate_deviation(rates: &[f64], oracle: &[f64]) -> Result<f64> {
    if rates.len() != oracle.len() {
        return Err(Error::LengthMismatch {
            left: rates.len(),
            right: oracle.len(),
        });
    }
    nonempty(rates)?;
    Ok(rates.iter().zip(oracle).map(|(r, o)| (r - o).abs()).sum::<f64>() / rates.len() as f64)
}

/// Mean absolute gap relative to the reference rate.
pub fn normalized_rate_deviation(rates: &[f64], oracle: &[f64]) -> Result<f64> {
    if rates.len() != oracle.len() {
        return Err(Error::LengthMismatch {
            left: rates.len(),
            right: oracle.len(),
        });
    }
    nonempty(rates)?;
    Ok(rates.iter().zip(oracle).map(|(r, o)| ((r - o) / o).abs()).sum::<f64>() / rates.len() as f64)
}

pub fn utilization_mse(rows: &[TraceRow], target: f64) -> Result<f64> {
    nonempty(rows)?;
    Ok(rows.iter().map(|r| (r.util - target).powi(2)).sum::<f64>() / rows.len() as f64)
}

fn param_errors(r: &TraceRow) -> [(f64, f64); 4] {
    [
        (r.est_a_b, r.a_b),
        (r.est_b_b, r.b_b),
        (r.est_a_l, r.a_l),
        (r.est_b_l, r.b_l),
    ]
}

/// Root mean squared estimation error per parameter, ordered
/// `(a_b, b_b, a_l, b_l)`.
pub fn param_rmse(rows: &[TraceRow]) -> Result<[f64; 4]> {
    nonempty(rows)?;
    let mut acc = [0.0; 4];
    for r in rows {
        for (a, (est, truth)) in acc.iter_mut().zip(param_errors(r)) {
            *a += (est - truth).powi(2);
        }
    }
    Ok(acc.map(|s| (s / rows.len() as f64).sqrt()))
}

/// Mean squared estimation error over all four parameters.
pub fn param_mse(rows: &[TraceRow]) -> Result<f64> {
    Ok(param_rmse(rows)?.iter().map(|e| e * e).sum::<f64>() / 4.0)
}

/// Mean squared estimation error relative to the true value, averaged over
/// the four parameters.
pub fn param_relative_mse(rows: &[TraceRow]) -> Result<f64> {
    nonempty(rows)?;
    let total: f64 = rows
        .iter()
        .flat_map(|r| param_errors(r).map(|(est, truth)| ((est - truth) / truth).powi(2)))
        .sum();
    Ok(total / (4 * rows.len()) as f64)
}

/// Mean absolute one-step prediction error over mean magnitude, for the
/// demand and supply curves.
pub fn prediction_error(rows: &[TraceRow]) -> Result<(f64, f64)> {
    nonempty(rows)?;
    let ratio = |pred: fn(&TraceRow) -> (f64, f64)| {
        let (mut err, mut mag) = (0.0, 0.0);
        for r in rows {
            let (p, y) = pred(r);
            err += (p - y).abs();
            mag += y.abs();
        }
        if mag > 0.0 {
            err / mag
        } else {
            0.0
        }
    };
    Ok((
        ratio(|r| (r.pred_borrow, r.obs_borrow)),
        ratio(|r| (r.pred_supply, r.obs_supply)),
    ))
}

/// Root mean squared a-priori error of the demand prediction.
pub fn demand_rmse(rows: &[TraceRow]) -> Result<f64> {
    nonempty(rows)?;
    Ok((rows.iter().map(|r| (r.pred_borrow - r.obs_borrow).powi(2)).sum::<f64>() / rows.len() as f64).sqrt())
}

/// Total shortfall of borrowers whose collateral value falls below their
/// debt.
pub fn pool_default(borrows: &[f64], collaterals: &[f64], p_next: f64) -> Result<f64> {
    if borrows.len() != collaterals.len() {
        return Err(Error::LengthMismatch {
            left: borrows.len(),
            right: collaterals.len(),
        });
    }
    Ok(borrows
        .iter()
        .zip(collaterals)
        .map(|(b, c)| (b - c * p_next).max(0.0))
        .sum())
}

/// Smallest repayment that brings a position back to the liquidation
/// threshold when the liquidator receives `1 + li` collateral per unit.
pub fn user_liquidation(borrow: f64, collateral: f64, p_next: f64, lt: f64, li: f64) -> Result<f64> {
    let k = lt * (1.0 + li);
    if k >= 1.0 {
        return Err(Error::LiquidationSpiral(k));
    }
    Ok(((borrow - lt * collateral * p_next) / (1.0 - k)).max(0.0))
}

/// Metrics of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rate_deviation: f64,
    pub util_mse: f64,
    pub normalized_rate_dev: f64,
    pub param_rmse: [f64; 4],
    pub param_mse: f64,
    pub param_rel_mse: f64,
    pub pred_error_demand: f64,
    pub pred_error_supply: f64,
    pub demand_rmse: f64,
    /// Share of blocks in which the controller fell back to probing.
    pub probe_fraction: f64,
}

impl MetricReport {
    /// Rate and utilization metrics cover every block; estimation metrics
    /// skip the first `warmup` blocks.
    pub fn from_trace(trace: &RunTrace, target_util: f64, warmup: u64, probe_blocks: u64) -> Result<MetricReport> {
        let rows = &trace.rows;
        let settled = match rows.iter().position(|r| r.t > warmup) {
            Some(i) => &rows[i..],
            None => &rows[rows.len() - 1..],
        };
        let rates: Vec<f64> = rows.iter().map(|r| r.rate).collect();
        let oracle: Vec<f64> = rows.iter().map(|r| r.optimal_rate).collect();
        let (pd, ps) = prediction_error(settled)?;
        Ok(MetricReport {
            rate_deviation: rate_deviation(&rates, &oracle)?,
            util_mse: utilization_mse(rows, target_util)?,
            normalized_rate_dev: normalized_rate_deviation(&rates, &oracle)?,
            param_rmse: param_rmse(settled)?,
            param_mse: param_mse(settled)?,
            param_rel_mse: param_relative_mse(settled)?,
            pred_error_demand: pd,
            pred_error_supply: ps,
            demand_rmse: demand_rmse(settled)?,
            probe_fraction: probe_blocks as f64 / rows.len() as f64,
        })
    }

    /// Named scalar view used for aggregation and long-format output.
    pub fn scalars(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("rate_deviation", self.rate_deviation),
            ("util_mse", self.util_mse),
            ("normalized_rate_dev", self.normalized_rate_dev),
            ("param_rmse_a_b", self.param_rmse[0]),
            ("param_rmse_b_b", self.param_rmse[1]),
            ("param_rmse_a_l", self.param_rmse[2]),
            ("param_rmse_b_l", self.param_rmse[3]),
            ("param_mse", self.param_mse),
            ("param_rel_mse", self.param_rel_mse),
            ("pred_error_demand", self.pred_error_demand),
            ("pred_error_supply", self.pred_error_supply),
            ("demand_rmse", self.demand_rmse),
            ("probe_fraction", self.probe_fraction),
        ]
    }
}

/// Mean and standard error of one metric across runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

pub fn aggregate(reports: &[MetricReport]) -> Vec<Summary> {
    let Some(first) = reports.first() else {
        return Vec::new();
    };
    first
        .scalars()
        .iter()
        .enumerate()
        .map(|(i, (name, _))| {
            let xs: Vec<f64> = reports.iter().map(|r| r.scalars()[i].1).collect();
            let (mean, stderr) = mean_stderr(&xs);
            Summary {
                metric: name.to_string(),
                mean,
                stderr,
                count: xs.len(),
            }
        })
        .collect()
}

/// Look up a metric mean in an aggregate.
pub fn summary_mean(summary: &[Summary], metric: &str) -> Option<f64> {
    summary.iter().find(|s| s.metric == metric).map(|s| s.mean)
}
