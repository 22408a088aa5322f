use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::CurveParams;

/// Point estimates of the four curve parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    pub a_b: f64,
    pub b_b: f64,
    pub a_l: f64,
    pub b_l: f64,
}

impl Estimates {
    /// From regression vectors `[-a_b, b_b]` and `[a_l, -b_l]`.
    pub fn from_thetas(demand: [f64; 2], supply: [f64; 2]) -> Self {
        Estimates {
            a_b: -demand[0],
            b_b: demand[1],
            a_l: supply[0],
            b_l: -supply[1],
        }
    }
}

impl From<&CurveParams> for Estimates {
    fn from(p: &CurveParams) -> Self {
        Estimates {
            a_b: p.a_b,
            b_b: p.b_b,
            a_l: p.a_l,
            b_l: p.b_l,
        }
    }
}

/// Rate that puts the noise-free market at utilization `target`.
///
/// Unclamped; callers apply their rate bounds.
pub fn optimal_rate_util(est: &Estimates, target: f64) -> Result<f64> {
    let denom = est.a_b + est.a_l * target * target;
    if !(denom > 0.0) {
        return Err(Error::DegenerateDenominator(denom));
    }
    Ok((est.b_b + est.b_l * target) / denom)
}

/// Delta-method variance of the utilization-targeting rate given the
/// estimator covariances. Diagonals are ordered (slope, intercept).
pub fn rate_variance(est: &Estimates, demand_p: &[[f64; 2]; 2], supply_p: &[[f64; 2]; 2], target: f64) -> f64 {
    let u2 = target * target;
    let num = est.b_b + est.b_l * target;
    let den = est.a_b + est.a_l * u2;
    let var_a_b = demand_p[0][0];
    let var_b_b = demand_p[1][1];
    let var_a_l = supply_p[0][0];
    let var_b_l = supply_p[1][1];
    (var_b_b + u2 * var_b_l) / den.powi(2) + num.powi(2) / den.powi(4) * (var_a_b + u2 * u2 * var_a_l)
}

pub fn clamp_rate(r: f64, bounds: [f64; 2]) -> f64 {
    r.max(bounds[0]).min(bounds[1])
}

/// Draw an exploratory rate around `mean` with variance `var`.
pub fn sample_rate<R: Rng + ?Sized>(mean: f64, var: f64, bounds: [f64; 2], rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    let sd = if var > 0.0 && var.is_finite() { var.sqrt() } else { 0.0 };
    clamp_rate(mean + sd * z, bounds)
}

/// Noise-free `B + L` as a function of a held rate, on the upper
/// equilibrium branch.
pub fn revenue_objective(est: &Estimates, r: f64) -> Result<f64> {
    let disc = est.b_l * est.b_l - 4.0 * est.a_l * r * (est.a_b * r - est.b_b);
    if disc < 0.0 {
        return Err(Error::NegativeDiscriminant {
            rate: r,
            discriminant: disc,
        });
    }
    Ok(-est.a_b * r + est.b_b - 0.5 * est.b_l + 0.5 * disc.sqrt())
}

fn equilibrium_util(est: &Estimates, r: f64) -> Result<f64> {
    let disc = est.b_l * est.b_l - 4.0 * est.a_l * r * (est.a_b * r - est.b_b);
    if disc < 0.0 {
        return Err(Error::NegativeDiscriminant {
            rate: r,
            discriminant: disc,
        });
    }
    Ok((est.b_l + disc.sqrt()) / (2.0 * est.a_l * r))
}

/// Rate maximizing `B + L` subject to utilization at most `u_max`.
///
/// The stationary point of the objective is
/// `b_b/(2 a_b) - sqrt((b_b^2/a_b + b_l^2/a_l) / (a_b + a_l)) / 2`; when it
/// is not positive or its equilibrium utilization exceeds `u_max`, the
/// constraint binds and the utilization-targeting rate at `u_max` is used.
pub fn optimal_rate_revenue(est: &Estimates, u_max: f64) -> Result<f64> {
    if !(est.a_b > 0.0 && est.a_l > 0.0) {
        return Err(Error::DegenerateDenominator(est.a_b.min(est.a_l)));
    }
    let spread = ((est.b_b * est.b_b / est.a_b + est.b_l * est.b_l / est.a_l) / (est.a_b + est.a_l)).sqrt();
    let stationary = est.b_b / (2.0 * est.a_b) - 0.5 * spread;
    if stationary > 0.0 && equilibrium_util(est, stationary)? <= u_max {
        return Ok(stationary);
    }
    optimal_rate_util(est, u_max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticCurveParams {
    pub r_slope1: f64,
    pub r_slope2: f64,
    pub kink: f64,
}

impl StaticCurveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_slope1 >= 0.0 && self.r_slope2 >= 0.0) {
            return Err(Error::invalid("static_curve", "slopes must be non-negative"));
        }
        if !(self.kink > 0.0 && self.kink < 1.0) {
            return Err(Error::invalid("static_curve.kink", "must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Slope of the steep branch per unit utilization.
    pub fn steep_slope(&self) -> f64 {
        self.r_slope2 / (1.0 - self.kink)
    }

    /// Intercept of the steep branch extended to `U = 0`.
    pub fn steep_intercept(&self) -> f64 {
        self.r_slope1 - self.r_slope2 * self.kink / (1.0 - self.kink)
    }
}

/// Two-slope utilization curve.
pub fn static_rate(u: f64, curve: &StaticCurveParams) -> f64 {
    if u <= curve.kink {
        curve.r_slope1 * u / curve.kink
    } else {
        curve.r_slope1 + curve.r_slope2 * (u - curve.kink) / (1.0 - curve.kink)
    }
}

/// Steady state of the static curve against linear demand and a fixed
/// supply `supply`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StaticSteadyState {
    pub rate: f64,
    /// Utilization-targeting rate `(b_b - supply * kink) / a_b`.
    pub target_rate: f64,
    pub deviation: f64,
}

/// Closed-form fixed point of `r = static_rate((b_b - a_b r) / supply)`.
pub fn static_fixed_supply_steady_state(
    a_b: f64,
    b_b: f64,
    supply: f64,
    curve: &StaticCurveParams,
) -> StaticSteadyState {
    let u_star = curve.kink;
    let target_rate = (b_b - supply * u_star) / a_b;
    let gap = (curve.r_slope1 - target_rate).abs();
    let (rate, deviation) = if curve.r_slope1 >= target_rate {
        let rate = b_b * curve.r_slope1 / (u_star * supply + a_b * curve.r_slope1);
        (rate, gap / (1.0 + a_b * curve.r_slope1 / (supply * u_star)))
    } else {
        let steep = curve.steep_slope();
        let rate = curve.r_slope1
            + curve.r_slope2 * (b_b - a_b * curve.r_slope1 - u_star * supply)
                / ((supply + a_b * steep) * (1.0 - u_star));
        (rate, gap / (1.0 + a_b * steep / supply))
    };
    StaticSteadyState {
        rate,
        target_rate,
        deviation,
    }
}
