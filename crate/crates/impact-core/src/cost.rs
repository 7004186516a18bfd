//! Expected impact-cost overhead of an execution schedule, evaluated as
//! the path integral of the executed rate against the impact curve, and
//! its comparison against execution risk.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{execution_risk, expected_impact, ImpactModel, MarketParams, OrderSpec};

/// An execution trajectory Q(t): nondecreasing piecewise-linear breakpoints
/// on [0, T] with Q(0) = 0 and Q(T) = total_quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub total_quantity: f64,
    pub duration_days: f64,
    /// `[[t, Q(t)], ...]` breakpoints, strictly increasing in t.
    pub breakpoints: Vec<(f64, f64)>,
}

impl Schedule {
    pub fn new(total_quantity: f64, duration_days: f64, breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        let s = Self { total_quantity, duration_days, breakpoints };
        s.validate()?;
        Ok(s)
    }

    /// Uniform-rate (VWAP-like) schedule Q(t) = Q * t / T.
    pub fn constant_rate(total_quantity: f64, duration_days: f64) -> Result<Self> {
        Self::new(
            total_quantity,
            duration_days,
            vec![(0.0, 0.0), (duration_days, total_quantity)],
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_days > 0.0 && self.duration_days.is_finite()) {
            return Err(Error::Domain(format!(
                "schedule duration must be > 0, got {}",
                self.duration_days
            )));
        }
        if !(self.total_quantity >= 0.0 && self.total_quantity.is_finite()) {
            return Err(Error::Domain(format!(
                "total_quantity must be >= 0, got {}",
                self.total_quantity
            )));
        }
        if self.breakpoints.len() < 2 {
            return Err(Error::Domain("schedule needs at least 2 breakpoints".into()));
        }
        for (i, w) in self.breakpoints.windows(2).enumerate() {
            if !w[1].0.is_finite() || w[1].0 <= w[0].0 {
                return Err(Error::Domain(format!(
                    "breakpoint {}: times must be strictly increasing ({} then {})",
                    i + 1,
                    w[0].0,
                    w[1].0
                )));
            }
            if w[1].1 < w[0].1 {
                return Err(Error::Domain(format!(
                    "breakpoint {}: Q(t) must be nondecreasing ({} then {})",
                    i + 1,
                    w[0].1,
                    w[1].1
                )));
            }
        }
        let first = self.breakpoints[0];
        let last = self.breakpoints[self.breakpoints.len() - 1];
        if first != (0.0, 0.0) {
            return Err(Error::Domain(format!(
                "breakpoint 0: schedule must start at (0, 0), got ({}, {})",
                first.0, first.1
            )));
        }
        if last.0 != self.duration_days || last.1 != self.total_quantity {
            return Err(Error::Domain(format!(
                "breakpoint {}: schedule must end at (T, Q) = ({}, {}), got ({}, {})",
                self.breakpoints.len() - 1,
                self.duration_days,
                self.total_quantity,
                last.0,
                last.1
            )));
        }
        Ok(())
    }
}

/// Meaning of the impact curve's duration argument along the path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DurationArg {
    /// I(Q(t), t): elapsed time since the order started, so the running
    /// participation is Q(t) / (V t).
    #[default]
    Elapsed,
    /// I(Q(t), T): the total planned duration. Offered as a documented
    /// alternative reading, not the default.
    PlannedTotal,
}

const DEFAULT_REL_TOL: f64 = 1e-8;
const MAX_DEPTH: u32 = 48;

/// Adaptive Simpson on [a, b] given precomputed endpoint/midpoint values.
/// Returns (integral, error_estimate).
#[allow(clippy::too_many_arguments)]
fn adaptive_simpson<F>(
    f: &F,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth >= MAX_DEPTH || delta.abs() <= 15.0 * tol {
        return (left + right + delta / 15.0, delta.abs() / 15.0);
    }
    let (lv, le) = adaptive_simpson(f, a, fa, m, fm, flm, left, 0.5 * tol, depth + 1);
    let (rv, re) = adaptive_simpson(f, m, fm, b, fb, frm, right, 0.5 * tol, depth + 1);
    (lv + rv, le + re)
}

fn integrate<F>(f: F, a: f64, b: f64, tol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return (0.0, 0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    adaptive_simpson(&f, a, fa, b, fb, fm, whole, tol, 0)
}

/// Expected cost overhead of the schedule, in (log-price x shares) units:
/// the integral of Qdot(t) * I(Q(t), t) over the execution window.
///
/// Relative accuracy target 1e-8. The integrand behaves as sqrt(t) at the
/// open; segments touching t = 0 are evaluated in the u = sqrt(t) variable
/// to restore smoothness.
pub fn expected_cost(
    schedule: &Schedule,
    market: &MarketParams,
    model: &ImpactModel,
) -> Result<f64> {
    expected_cost_with(schedule, market, model, DurationArg::Elapsed, DEFAULT_REL_TOL)
}

pub fn expected_cost_with(
    schedule: &Schedule,
    market: &MarketParams,
    model: &ImpactModel,
    duration_arg: DurationArg,
    rel_tol: f64,
) -> Result<f64> {
    schedule.validate()?;
    if schedule.total_quantity == 0.0 {
        return Ok(0.0);
    }

    let impact_at = |executed: f64, t: f64| -> f64 {
        if executed <= 0.0 || t <= 0.0 {
            return 0.0;
        }
        let duration = match duration_arg {
            DurationArg::Elapsed => t,
            DurationArg::PlannedTotal => schedule.duration_days,
        };
        let order = OrderSpec { sign: 1, quantity: executed, duration };
        expected_impact(&order, market, model).expect("positive quantity and duration")
    };

    // Coarse pass to scale the absolute tolerance.
    let mut coarse = 0.0;
    for w in schedule.breakpoints.windows(2) {
        let (t0, q0) = w[0];
        let (t1, q1) = w[1];
        let rate = (q1 - q0) / (t1 - t0);
        if rate == 0.0 {
            continue;
        }
        let tm = 0.5 * (t0 + t1);
        let qm = 0.5 * (q0 + q1);
        coarse += (t1 - t0) * rate
            * (impact_at(q0, t0) + 4.0 * impact_at(qm, tm) + impact_at(q1, t1))
            / 6.0;
    }
    let abs_tol = rel_tol * coarse.abs().max(f64::MIN_POSITIVE);
    let n_active = schedule
        .breakpoints
        .windows(2)
        .filter(|w| w[1].1 > w[0].1)
        .count()
        .max(1);
    let seg_tol = abs_tol / n_active as f64;

    let mut total = 0.0;
    let mut err_bound = 0.0;
    for w in schedule.breakpoints.windows(2) {
        let (t0, q0) = w[0];
        let (t1, q1) = w[1];
        let rate = (q1 - q0) / (t1 - t0);
        if rate == 0.0 {
            continue;
        }
        let executed = |t: f64| q0 + rate * (t - t0);
        let (value, err) = if t0 == 0.0 {
            // u = sqrt(t): integral of 2 u rate I(Q(u^2), u^2) du.
            let g = |u: f64| 2.0 * u * rate * impact_at(executed(u * u), u * u);
            integrate(g, 0.0, t1.sqrt(), seg_tol)
        } else {
            let g = |t: f64| rate * impact_at(executed(t), t);
            integrate(g, t0, t1, seg_tol)
        };
        total += value;
        err_bound += err;
    }

    let target = rel_tol * total.abs().max(f64::MIN_POSITIVE);
    if err_bound > target.max(abs_tol) * 10.0 {
        return Err(Error::Quadrature {
            estimate: total,
            error_bound: err_bound,
            target,
        });
    }
    Ok(total)
}

/// Side-by-side view of average impact cost and execution risk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRiskReport {
    /// Expected cost divided by total quantity, in log-price units.
    pub expected_cost_per_share: f64,
    /// sigma * sqrt(T).
    pub execution_risk: f64,
    /// Per-share cost over risk; much below 1 whenever Q << V T.
    pub ratio: f64,
}

pub fn cost_vs_risk_report(
    schedule: &Schedule,
    market: &MarketParams,
    model: &ImpactModel,
) -> Result<CostRiskReport> {
    schedule.validate()?;
    let risk = execution_risk(schedule.duration_days, market)?;
    if schedule.total_quantity == 0.0 {
        return Ok(CostRiskReport {
            expected_cost_per_share: 0.0,
            execution_risk: risk,
            ratio: 0.0,
        });
    }
    let cost = expected_cost(schedule, market, model)?;
    let per_share = cost / schedule.total_quantity;
    Ok(CostRiskReport {
        expected_cost_per_share: per_share,
        execution_risk: risk,
        ratio: per_share / risk,
    })
}
