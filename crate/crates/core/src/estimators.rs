//! Recursive least squares for the two-parameter demand and supply lines.
//!
//! All three variants share one update: a weighted gain
//! `K = w P x / (rho + w x'P x)` where the weight `w` is 1 for plain and
//! adaptive-forgetting RLS and the M-estimate weight for robust RLS.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::median;

pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

/// Median of a chi-square variable with one degree of freedom; converts the
/// median squared residual into a variance estimate.
const CHI2_1_MEDIAN: f64 = 0.454_936_423_119_572_8;

/// Trailing squared residuals behind the median noise scale.
const SCALE_WINDOW: usize = 10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// Fixed forgetting factor.
    #[default]
    Rls,
    /// Forgetting factor adapted from the a-priori error statistics.
    Adaptive,
    /// Outlier-robust reweighted RLS.
    Robust,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default)]
    pub kind: EstimatorKind,
    #[serde(default = "defaults::rho")]
    pub rho: f64,
    /// Regressor lag in blocks.
    #[serde(default = "defaults::lag")]
    pub lag: usize,
    #[serde(default = "defaults::p0")]
    pub p0: f64,
    /// Updates before the noise scale is seeded and robust weighting or
    /// adaptive forgetting switches on.
    #[serde(default = "defaults::warmup")]
    pub warmup: u64,
    /// Smoothing of the long-run noise variance.
    #[serde(default = "defaults::beta")]
    pub beta: f64,
    /// Smoothing of the short-run `q` and a-priori error variances.
    #[serde(default = "defaults::beta_short")]
    pub beta_short: f64,
    #[serde(default = "defaults::xi_small")]
    pub xi_small: f64,
    #[serde(default = "defaults::rho_min")]
    pub rho_min: f64,
    #[serde(default = "defaults::rho_max")]
    pub rho_max: f64,
}

mod defaults {
    pub fn rho() -> f64 {
        0.95
    }
    pub fn lag() -> usize {
        1
    }
    pub fn p0() -> f64 {
        1e6
    }
    pub fn warmup() -> u64 {
        20
    }
    pub fn beta() -> f64 {
        0.99
    }
    pub fn beta_short() -> f64 {
        0.9
    }
    pub fn xi_small() -> f64 {
        1e-6
    }
    pub fn rho_min() -> f64 {
        0.5
    }
    pub fn rho_max() -> f64 {
        0.999
    }
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            kind: EstimatorKind::Rls,
            rho: defaults::rho(),
            lag: defaults::lag(),
            p0: defaults::p0(),
            warmup: defaults::warmup(),
            beta: defaults::beta(),
            beta_short: defaults::beta_short(),
            xi_small: defaults::xi_small(),
            rho_min: defaults::rho_min(),
            rho_max: defaults::rho_max(),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::invalid("estimator.rho", "must lie in (0, 1]"));
        }
        if self.lag < 1 {
            return Err(Error::invalid("estimator.lag", "must be at least 1"));
        }
        if !(self.p0 > 0.0) {
            return Err(Error::invalid("estimator.p0", "must be positive"));
        }
        for (name, v) in [("estimator.beta", self.beta), ("estimator.beta_short", self.beta_short)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(name, "must lie in (0, 1)"));
            }
        }
        if !(self.rho_min > 0.0 && self.rho_min <= self.rho_max && self.rho_max <= 1.0) {
            return Err(Error::invalid(
                "estimator.rho_min/rho_max",
                "need 0 < rho_min <= rho_max <= 1",
            ));
        }
        if !(self.xi_small > 0.0) {
            return Err(Error::invalid("estimator.xi_small", "must be positive"));
        }
        Ok(())
    }
}

/// One regression sample: `y ≈ x'theta` with `x = [regressor, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec2,
    pub y: f64,
}

impl Observation {
    pub fn new(regressor: f64, y: f64) -> Self {
        Observation { x: [regressor, 1.0], y }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorState {
    pub theta: Vec2,
    pub p: Mat2,
    pub rho: f64,
    pub noise_var: f64,
    pub q_var: f64,
    pub e_var: f64,
    pub updates: u64,
    /// Most recent a-priori error.
    pub last_error: f64,
    /// Weight applied to the most recent observation.
    pub last_weight: f64,
    /// Squared a-priori errors of the latest updates.
    recent_sq: Vec<f64>,
}

impl EstimatorState {
    pub fn new(p0: f64, rho: f64) -> Self {
        EstimatorState {
            theta: [0.0; 2],
            p: [[p0, 0.0], [0.0, p0]],
            rho,
            noise_var: 0.0,
            q_var: 0.0,
            e_var: 0.0,
            updates: 0,
            last_error: 0.0,
            last_weight: 1.0,
            recent_sq: Vec::new(),
        }
    }

    pub fn from_config(cfg: &EstimatorConfig) -> Self {
        let rho = match cfg.kind {
            EstimatorKind::Adaptive => cfg.rho_max,
            _ => cfg.rho,
        };
        EstimatorState::new(cfg.p0, rho)
    }

    pub fn predict(&self, x: Vec2) -> f64 {
        dot(x, self.theta)
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_var.sqrt()
    }
}

fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn mat_vec(m: &Mat2, v: Vec2) -> Vec2 {
    [dot(m[0], v), dot(m[1], v)]
}

fn check_finite(obs: &Observation) -> Result<()> {
    if obs.x.iter().all(|v| v.is_finite()) && obs.y.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteObservation { x: obs.x, y: obs.y })
    }
}

/// Core update with observation weight `w` and forgetting factor `state.rho`.
fn weighted_update(state: &mut EstimatorState, obs: &Observation, w: f64) {
    let px = mat_vec(&state.p, obs.x);
    let denom = state.rho + w * dot(obs.x, px);
    let k = [w * px[0] / denom, w * px[1] / denom];
    let e = obs.y - dot(obs.x, state.theta);
    state.theta = [state.theta[0] + k[0] * e, state.theta[1] + k[1] * e];
    // (I - K x') P / rho, written as P - K (x'P) since P is symmetric.
    let mut p = [[0.0; 2]; 2];
    for (i, row) in p.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (state.p[i][j] - k[i] * px[j]) / state.rho;
        }
    }
    let off = 0.5 * (p[0][1] + p[1][0]);
    p[0][1] = off;
    p[1][0] = off;
    state.p = p;
    state.last_weight = w;
}

/// M-estimate thresholds scaled by the residual standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MEstimateThresholds {
    pub xi: f64,
    pub delta1: f64,
    pub delta2: f64,
}

impl MEstimateThresholds {
    pub fn from_sd(sd: f64) -> Self {
        MEstimateThresholds {
            xi: 1.96 * sd,
            delta1: 2.24 * sd,
            delta2: 2.576 * sd,
        }
    }
}

/// The redescending M-estimate loss.
pub fn phi(e: f64, t: &MEstimateThresholds) -> f64 {
    let a = e.abs();
    let MEstimateThresholds { xi, delta1, delta2 } = *t;
    let third = |a: f64| 0.5 * xi * (delta2 + delta1) - 0.5 * xi * xi + xi * (a - delta2).powi(2) / (delta1 - delta2);
    if a < xi {
        0.5 * e * e
    } else if a < delta1 {
        xi * a - 0.5 * xi * xi
    } else if a < delta2 {
        third(a)
    } else {
        third(delta2)
    }
}

/// `phi'(e) / e`, clamped to `[0, 1]`.
pub fn phi_weight(e: f64, t: &MEstimateThresholds) -> f64 {
    let a = e.abs();
    if a == 0.0 || a < t.xi {
        1.0
    } else if a < t.delta1 {
        t.xi / a
    } else if a < t.delta2 {
        (2.0 * t.xi * (a - t.delta2) / ((t.delta1 - t.delta2) * a)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Residual bookkeeping shared by every variant: seeds the noise variance
/// from the median squared residual of the last warm-up updates. Afterwards
/// the robust variant smooths that windowed median, which ignores sparse
/// outliers but follows a lasting change in the error level; the others
/// smooth squared residuals clipped at the outer rejection threshold.
fn track_noise(state: &mut EstimatorState, e: f64, cfg: &EstimatorConfig) {
    state.updates += 1;
    state.last_error = e;
    let e2 = e * e;
    state.recent_sq.push(e2);
    if state.recent_sq.len() > SCALE_WINDOW {
        state.recent_sq.remove(0);
    }
    if state.updates < cfg.warmup {
        return;
    }
    if state.updates == cfg.warmup.max(1) {
        state.noise_var = median(&state.recent_sq) / CHI2_1_MEDIAN;
        return;
    }
    let sample = match cfg.kind {
        EstimatorKind::Robust => median(&state.recent_sq) / CHI2_1_MEDIAN,
        _ => {
            let clip = MEstimateThresholds::from_sd(state.noise_sd()).delta2;
            e2.min(clip * clip)
        }
    };
    state.noise_var = cfg.beta * state.noise_var + (1.0 - cfg.beta) * sample;
}

/// Plain RLS update with the state's forgetting factor.
pub fn rls_update(state: &EstimatorState, obs: &Observation, cfg: &EstimatorConfig) -> Result<EstimatorState> {
    check_finite(obs)?;
    let mut next = state.clone();
    let e = obs.y - state.predict(obs.x);
    track_noise(&mut next, e, cfg);
    weighted_update(&mut next, obs, 1.0);
    Ok(next)
}

/// Update the short-run trackers and return the adapted forgetting factor.
pub fn adaptive_rho(state: &mut EstimatorState, obs: &Observation, cfg: &EstimatorConfig) -> f64 {
    let q = dot(obs.x, mat_vec(&state.p, obs.x));
    let e = obs.y - state.predict(obs.x);
    // During warm-up P is still near its large prior, so the trackers only
    // start from the last warm-up values.
    if state.updates < cfg.warmup.max(1) {
        state.q_var = q * q;
        state.e_var = e * e;
        return state.rho;
    }
    state.q_var = cfg.beta_short * state.q_var + (1.0 - cfg.beta_short) * q * q;
    state.e_var = cfg.beta_short * state.e_var + (1.0 - cfg.beta_short) * e * e;
    let sd = state.noise_sd();
    let raw = state.q_var.sqrt() * sd / (cfg.xi_small + (state.e_var.sqrt() - sd).abs());
    raw.min(cfg.rho_max).max(cfg.rho_min)
}

/// RLS with the forgetting factor chosen by [`adaptive_rho`].
pub fn adaptive_rls_update(state: &EstimatorState, obs: &Observation, cfg: &EstimatorConfig) -> Result<EstimatorState> {
    check_finite(obs)?;
    let mut next = state.clone();
    next.rho = adaptive_rho(&mut next, obs, cfg);
    let e = obs.y - state.predict(obs.x);
    track_noise(&mut next, e, cfg);
    weighted_update(&mut next, obs, 1.0);
    Ok(next)
}

/// Outlier-robust RLS: the gain is scaled by the M-estimate weight of the
/// a-priori error once the warm-up has seeded the noise scale.
pub fn robust_rls_update(state: &EstimatorState, obs: &Observation, cfg: &EstimatorConfig) -> Result<EstimatorState> {
    check_finite(obs)?;
    let mut next = state.clone();
    let e = obs.y - state.predict(obs.x);
    let w = if state.updates >= cfg.warmup {
        phi_weight(e, &MEstimateThresholds::from_sd(state.noise_sd()))
    } else {
        1.0
    };
    track_noise(&mut next, e, cfg);
    weighted_update(&mut next, obs, w);
    Ok(next)
}

/// Dispatch on the configured variant.
pub fn update(state: &EstimatorState, obs: &Observation, cfg: &EstimatorConfig) -> Result<EstimatorState> {
    match cfg.kind {
        EstimatorKind::Rls => rls_update(state, obs, cfg),
        EstimatorKind::Adaptive => adaptive_rls_update(state, obs, cfg),
        EstimatorKind::Robust => robust_rls_update(state, obs, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> EstimatorConfig {
        EstimatorConfig::default()
    }

    #[test]
    fn zero_innovation_keeps_theta() {
        let mut s = EstimatorState::new(10.0, 0.9);
        s.theta = [2.0, 3.0];
        let obs = Observation::new(4.0, 11.0);
        let n = rls_update(&s, &obs, &cfg()).unwrap();
        assert_eq!(n.theta, s.theta);
        let px = mat_vec(&s.p, obs.x);
        let k0 = px[0] / (0.9 + dot(obs.x, px));
        assert!((n.p[0][0] - (10.0 - k0 * px[0]) / 0.9).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let s = EstimatorState::new(1e6, 0.9);
        assert!(rls_update(&s, &Observation::new(f64::NAN, 1.0), &cfg()).is_err());
        assert!(robust_rls_update(&s, &Observation::new(1.0, f64::INFINITY), &cfg()).is_err());
    }

    #[test]
    fn weight_pieces() {
        let t = MEstimateThresholds::from_sd(1.0);
        assert_eq!(phi_weight(0.0, &t), 1.0);
        assert_eq!(phi_weight(t.delta2 + 1.0, &t), 0.0);
        let mid = 0.5 * (t.xi + t.delta1);
        assert!((phi_weight(mid, &t) - t.xi / mid).abs() < 1e-15);
        assert!(phi_weight(-(t.delta2 - 1e-3), &t) >= 0.0);
    }

    #[test]
    fn rejected_observation_only_inflates_covariance() {
        let c = EstimatorConfig {
            kind: EstimatorKind::Robust,
            warmup: 0,
            ..cfg()
        };
        let mut s = EstimatorState::new(5.0, 0.8);
        s.updates = 3;
        s.noise_var = 1.0;
        s.theta = [1.0, 1.0];
        let n = robust_rls_update(&s, &Observation::new(1.0, 100.0), &c).unwrap();
        assert_eq!(n.theta, s.theta);
        assert_eq!(n.p[0][0], 5.0 / 0.8);
        assert_eq!(n.p[0][1], 0.0);
    }

    #[test]
    fn adaptive_rho_stays_clamped() {
        let c = EstimatorConfig {
            kind: EstimatorKind::Adaptive,
            warmup: 2,
            ..cfg()
        };
        let mut s = EstimatorState::from_config(&c);
        for t in 0..200 {
            let r = 1.0 + (t % 7) as f64;
            let y = if t % 50 == 0 { 1e4 } else { 3.0 * r + 2.0 };
            s = adaptive_rls_update(&s, &Observation::new(r, y), &c).unwrap();
            assert!(s.rho >= c.rho_min && s.rho <= c.rho_max);
        }
    }
}
