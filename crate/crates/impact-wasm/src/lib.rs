//! wasm-bindgen surface for the browser demo: impact and variance curves
//! over a Q/V grid, and the cost-vs-risk report for a constant-rate
//! schedule. Build with `wasm-pack build --target web`.
//!
//! The `*_impl` functions carry the logic with plain `String` errors so
//! they stay testable on the host; the exported wrappers only translate
//! errors into `JsValue`.

use wasm_bindgen::prelude::*;

use impact_core::{
    conditional_variance, cost_vs_risk_report, expected_impact, ImpactModel, MarketParams,
    OrderSpec, Schedule,
};

fn market(sigma: f64, daily_volume: f64) -> Result<MarketParams, String> {
    MarketParams::new(sigma, daily_volume).map_err(|e| e.to_string())
}

fn model(y_const: f64, phi0: f64, a_fluct: f64) -> Result<ImpactModel, String> {
    ImpactModel::new(y_const, phi0, a_fluct).map_err(|e| e.to_string())
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let ratio = (hi / lo).ln();
    (0..n)
        .map(|i| lo * (ratio * i as f64 / (n - 1).max(1) as f64).exp())
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn impact_curve_impl(
    sigma: f64,
    daily_volume: f64,
    y_const: f64,
    phi0: f64,
    duration_days: f64,
    q_over_v_lo: f64,
    q_over_v_hi: f64,
    n_points: usize,
) -> Result<Vec<f64>, String> {
    let market = market(sigma, daily_volume)?;
    let model = model(y_const, phi0, 0.0)?;
    if !(q_over_v_lo > 0.0 && q_over_v_lo < q_over_v_hi) || n_points < 2 {
        return Err("need 0 < lo < hi and n_points >= 2".into());
    }
    let mut out = Vec::with_capacity(2 * n_points);
    for q_over_v in log_grid(q_over_v_lo, q_over_v_hi, n_points) {
        let order = OrderSpec::new(1, q_over_v * daily_volume, duration_days)
            .map_err(|e| e.to_string())?;
        let i = expected_impact(&order, &market, &model).map_err(|e| e.to_string())?;
        out.push(q_over_v);
        out.push(i);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn variance_curve_impl(
    sigma: f64,
    daily_volume: f64,
    y_const: f64,
    phi0: f64,
    a_fluct: f64,
    duration_days: f64,
    q_over_v_lo: f64,
    q_over_v_hi: f64,
    n_points: usize,
) -> Result<Vec<f64>, String> {
    let market = market(sigma, daily_volume)?;
    let model = model(y_const, phi0, a_fluct)?;
    if !(q_over_v_lo > 0.0 && q_over_v_lo < q_over_v_hi) || n_points < 2 {
        return Err("need 0 < lo < hi and n_points >= 2".into());
    }
    let mut out = Vec::with_capacity(2 * n_points);
    for q_over_v in log_grid(q_over_v_lo, q_over_v_hi, n_points) {
        let order = OrderSpec::new(1, q_over_v * daily_volume, duration_days)
            .map_err(|e| e.to_string())?;
        let v = conditional_variance(&order, &market, &model).map_err(|e| e.to_string())?;
        out.push(q_over_v);
        out.push(v);
    }
    Ok(out)
}

fn cost_risk_report_impl(
    sigma: f64,
    daily_volume: f64,
    y_const: f64,
    phi0: f64,
    quantity: f64,
    duration_days: f64,
) -> Result<String, String> {
    let market = market(sigma, daily_volume)?;
    let model = model(y_const, phi0, 0.0)?;
    let schedule =
        Schedule::constant_rate(quantity, duration_days).map_err(|e| e.to_string())?;
    let report = cost_vs_risk_report(&schedule, &market, &model).map_err(|e| e.to_string())?;
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

/// Expected impact I(Q, T) sampled on a log grid of Q/V for one duration.
/// Returns interleaved `[q_over_v, impact, q_over_v, impact, ...]`.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn impact_curve(
    sigma: f64,
    daily_volume: f64,
    y_const: f64,
    phi0: f64,
    duration_days: f64,
    q_over_v_lo: f64,
    q_over_v_hi: f64,
    n_points: usize,
) -> Result<Vec<f64>, JsValue> {
    impact_curve_impl(
        sigma,
        daily_volume,
        y_const,
        phi0,
        duration_days,
        q_over_v_lo,
        q_over_v_hi,
        n_points,
    )
    .map_err(|e| JsValue::from_str(&e))
}

/// Conditional variance of the signed price change on the same grid.
/// Returns interleaved `[q_over_v, variance, ...]`.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn variance_curve(
    sigma: f64,
    daily_volume: f64,
    y_const: f64,
    phi0: f64,
    a_fluct: f64,
    duration_days: f64,
    q_over_v_lo: f64,
    q_over_v_hi: f64,
    n_points: usize,
) -> Result<Vec<f64>, JsValue> {
    variance_curve_impl(
        sigma,
        daily_volume,
        y_const,
        phi0,
        a_fluct,
        duration_days,
        q_over_v_lo,
        q_over_v_hi,
        n_points,
    )
    .map_err(|e| JsValue::from_str(&e))
}

/// Cost-vs-risk report for a constant-rate schedule, as a JSON string:
/// `{"expected_cost_per_share": ..., "execution_risk": ..., "ratio": ...}`.
#[wasm_bindgen]
pub fn cost_risk_report(
    sigma: f64,
    daily_volume: f64,
    y_const: f64,
    phi0: f64,
    quantity: f64,
    duration_days: f64,
) -> Result<String, JsValue> {
    cost_risk_report_impl(sigma, daily_volume, y_const, phi0, quantity, duration_days)
        .map_err(|e| JsValue::from_str(&e))
}
