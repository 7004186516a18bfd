//! Closed-form quantities of the impact model: the crossover scaling
//! function, expected impact, conditional variance, execution risk, and the
//! impact explanatory-power estimate.
//!
//! Units: durations are fractions of a trading day, prices are log-prices,
//! `sigma` is daily volatility in log-price units per sqrt(day).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-asset market parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Daily volatility, log-price units per sqrt(day). Must be > 0.
    pub sigma: f64,
    /// Daily traded volume in shares. Must be > 0.
    pub daily_volume: f64,
}

impl MarketParams {
    pub fn new(sigma: f64, daily_volume: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!("sigma must be finite and > 0, got {sigma}")));
        }
        if !(daily_volume > 0.0 && daily_volume.is_finite()) {
            return Err(Error::Domain(format!(
                "daily_volume must be finite and > 0, got {daily_volume}"
            )));
        }
        Ok(Self { sigma, daily_volume })
    }
}

/// Impact-model parameters: plateau amplitude, crossover participation
/// scale, and the multiplicative impact-fluctuation amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactModel {
    /// Dimensionless plateau amplitude Y. Must be > 0.
    pub y_const: f64,
    /// Dimensionless participation scale of the linear-to-square-root
    /// crossover. Must be > 0.
    pub phi0: f64,
    /// Dimensionless amplitude of impact fluctuations. Must be >= 0.
    pub a_fluct: f64,
}

impl ImpactModel {
    pub fn new(y_const: f64, phi0: f64, a_fluct: f64) -> Result<Self> {
        if !(y_const > 0.0 && y_const.is_finite()) {
            return Err(Error::Domain(format!("y_const must be finite and > 0, got {y_const}")));
        }
        if !(phi0 > 0.0 && phi0.is_finite()) {
            return Err(Error::Domain(format!("phi0 must be finite and > 0, got {phi0}")));
        }
        if !(a_fluct >= 0.0 && a_fluct.is_finite()) {
            return Err(Error::Domain(format!("a_fluct must be finite and >= 0, got {a_fluct}")));
        }
        Ok(Self { y_const, phi0, a_fluct })
    }
}

impl Default for ImpactModel {
    /// Y = 0.5, phi0 = 0.01, a = 0.1.
    fn default() -> Self {
        Self { y_const: 0.5, phi0: 0.01, a_fluct: 0.1 }
    }
}

/// One metaorder to be evaluated: sign, total size, and execution duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderSpec {
    /// +1 for a buy, -1 for a sell.
    pub sign: i8,
    /// Total executed quantity in shares. Must be >= 0.
    pub quantity: f64,
    /// Execution duration in fractions of a trading day. Must be > 0.
    pub duration: f64,
}

impl OrderSpec {
    pub fn new(sign: i8, quantity: f64, duration: f64) -> Result<Self> {
        if sign != 1 && sign != -1 {
            return Err(Error::Domain(format!("sign must be +1 or -1, got {sign}")));
        }
        if !(quantity >= 0.0 && quantity.is_finite()) {
            return Err(Error::Domain(format!("quantity must be finite and >= 0, got {quantity}")));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::Domain(format!("duration must be finite and > 0, got {duration}")));
        }
        Ok(Self { sign, quantity, duration })
    }

    /// Participation ratio phi = Q / (V * T).
    pub fn participation(&self, market: &MarketParams) -> f64 {
        self.quantity / (market.daily_volume * self.duration)
    }
}

/// Crossover scaling function F(phi) = Y * sqrt(phi / (phi + phi0)).
///
/// Behaves as Y*sqrt(phi/phi0) for phi << phi0 and saturates at Y for
/// phi >> phi0, so impact is linear in Q for small orders and square-root
/// for large ones.
pub fn scaling_function(phi: f64, model: &ImpactModel) -> Result<f64> {
    if !(phi >= 0.0 && phi.is_finite()) {
        return Err(Error::Domain(format!("phi must be finite and >= 0, got {phi}")));
    }
    Ok(model.y_const * (phi / (phi + model.phi0)).sqrt())
}

/// Expected impact I(Q, T) = sigma * sqrt(Q/V) * F(Q/(V*T)), in log-price
/// units. Zero iff Q is zero.
pub fn expected_impact(
    order: &OrderSpec,
    market: &MarketParams,
    model: &ImpactModel,
) -> Result<f64> {
    if order.duration <= 0.0 {
        return Err(Error::Domain(format!(
            "duration must be > 0 for impact evaluation, got {}",
            order.duration
        )));
    }
    let q_over_v = order.quantity / market.daily_volume;
    let phi = order.participation(market);
    Ok(market.sigma * q_over_v.sqrt() * scaling_function(phi, model)?)
}

/// Conditional variance of the signed price change,
/// sigma^2 * T * (1 + a^2 * phi * F^2(phi)).
pub fn conditional_variance(
    order: &OrderSpec,
    market: &MarketParams,
    model: &ImpactModel,
) -> Result<f64> {
    if order.duration <= 0.0 {
        return Err(Error::Domain(format!(
            "duration must be > 0 for variance evaluation, got {}",
            order.duration
        )));
    }
    let phi = order.participation(market);
    let f = scaling_function(phi, model)?;
    let a = model.a_fluct;
    Ok(market.sigma * market.sigma * order.duration * (1.0 + a * a * phi * f * f))
}

/// Execution risk sigma * sqrt(T): the dispersion of price moves over the
/// execution window, independent of order size.
pub fn execution_risk(duration: f64, market: &MarketParams) -> Result<f64> {
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::Domain(format!("duration must be finite and >= 0, got {duration}")));
    }
    Ok(market.sigma * duration.sqrt())
}

/// Fraction of daily price variance explained by the impact term in the
/// plateau regime: Y^2 * (Q/V), clamped just below 1.
pub fn impact_r_squared(q_over_v: f64, model: &ImpactModel) -> Result<f64> {
    if !(q_over_v >= 0.0 && q_over_v.is_finite()) {
        return Err(Error::Domain(format!("q_over_v must be finite and >= 0, got {q_over_v}")));
    }
    let r2 = model.y_const * model.y_const * q_over_v;
    Ok(r2.min(1.0 - 1e-12))
}
