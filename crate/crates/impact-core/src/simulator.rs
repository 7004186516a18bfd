//! Synthetic metaorder panel generation.
//!
//! Each record is a deterministic function of `(seed, order_id)` alone, so
//! output is identical across thread counts and chunkings.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{expected_impact, ImpactModel, MarketParams, OrderSpec};
use crate::rng::RecordRng;

/// Chunk size for parallel generation. Fixed so that the work decomposition
/// does not depend on the number of workers.
pub(crate) const CHUNK: usize = 1 << 16;

/// Noise distribution for the eta and xi draws. Both must have zero mean
/// and unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    StandardNormal,
}

/// One duration bucket and its sampling weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TBucket {
    pub duration_days: f64,
    pub weight: f64,
}

/// Panel generation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_orders: u64,
    pub seed: u64,
    pub market: MarketParams,
    pub model: ImpactModel,
    /// Log-uniform sampling interval for Q/V, `[lo, hi]` with 0 < lo < hi.
    pub q_over_v_range: (f64, f64),
    pub t_buckets: Vec<TBucket>,
    #[serde(default)]
    pub noise_kind: NoiseKind,
}

impl SimConfig {
    /// Default panel: Q/V log-uniform on [1e-5, 1e-1], durations
    /// {1/16, 1/8, 1/4, 1/2, 1} day with equal weights.
    pub fn with_defaults(n_orders: u64, seed: u64) -> Self {
        Self {
            n_orders,
            seed,
            market: MarketParams { sigma: 0.02, daily_volume: 1e6 },
            model: ImpactModel::default(),
            q_over_v_range: (1e-5, 1e-1),
            t_buckets: [1.0 / 16.0, 1.0 / 8.0, 0.25, 0.5, 1.0]
                .iter()
                .map(|&duration_days| TBucket { duration_days, weight: 1.0 })
                .collect(),
            noise_kind: NoiseKind::StandardNormal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_orders == 0 {
            return Err(Error::Domain("n_orders must be >= 1".into()));
        }
        MarketParams::new(self.market.sigma, self.market.daily_volume)?;
        ImpactModel::new(self.model.y_const, self.model.phi0, self.model.a_fluct)?;
        let (lo, hi) = self.q_over_v_range;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::Domain(format!(
                "q_over_v_range must satisfy 0 < lo < hi, got [{lo}, {hi}]"
            )));
        }
        if self.t_buckets.is_empty() {
            return Err(Error::Domain("t_buckets must be nonempty".into()));
        }
        let mut total_weight = 0.0;
        for b in &self.t_buckets {
            if !(b.duration_days > 0.0 && b.duration_days.is_finite()) {
                return Err(Error::Domain(format!(
                    "t_bucket duration must be > 0, got {}",
                    b.duration_days
                )));
            }
            if !(b.weight >= 0.0 && b.weight.is_finite()) {
                return Err(Error::Domain(format!(
                    "t_bucket weight must be >= 0, got {}",
                    b.weight
                )));
            }
            total_weight += b.weight;
        }
        if total_weight <= 0.0 {
            return Err(Error::Domain("t_bucket weights must not all be zero".into()));
        }
        Ok(())
    }
}

/// One executed metaorder with its observed start/end log-prices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaorderRecord {
    pub order_id: u64,
    pub sign: i8,
    pub quantity: f64,
    pub duration_days: f64,
    pub start_logprice: f64,
    pub end_logprice: f64,
    pub sigma: f64,
    pub daily_volume: f64,
}

impl MetaorderRecord {
    /// Signed price change epsilon * (p_e - p_s).
    pub fn signed_price_change(&self) -> f64 {
        self.sign as f64 * (self.end_logprice - self.start_logprice)
    }

    pub fn q_over_v(&self) -> f64 {
        self.quantity / self.daily_volume
    }
}

/// Price-change ansatz: Delta p = eps * I(Q,T) * (1 + a*eta) + sigma*sqrt(T)*xi.
pub fn sample_price_change(
    order: &OrderSpec,
    market: &MarketParams,
    model: &ImpactModel,
    eta: f64,
    xi: f64,
) -> Result<f64> {
    if !eta.is_finite() || !xi.is_finite() {
        return Err(Error::Domain("eta and xi must be finite".into()));
    }
    let impact = expected_impact(order, market, model)?;
    Ok(order.sign as f64 * impact * (1.0 + model.a_fluct * eta)
        + market.sigma * order.duration.sqrt() * xi)
}

/// Generate record `order_id` of the panel. Pure function of the config and
/// the id.
pub fn generate_record(config: &SimConfig, order_id: u64) -> MetaorderRecord {
    let mut rng = RecordRng::new(config.seed, order_id);
    let sign = rng.sign();

    let (lo, hi) = config.q_over_v_range;
    let q_over_v = lo * (hi / lo).powf(rng.uniform());
    let quantity = q_over_v * config.market.daily_volume;

    let total_weight: f64 = config.t_buckets.iter().map(|b| b.weight).sum();
    let mut target = rng.uniform() * total_weight;
    let mut duration = config.t_buckets[config.t_buckets.len() - 1].duration_days;
    for b in &config.t_buckets {
        if target < b.weight {
            duration = b.duration_days;
            break;
        }
        target -= b.weight;
    }

    let (eta, xi) = rng.normal_pair();
    let order = OrderSpec { sign, quantity, duration };
    let dp = sample_price_change(&order, &config.market, &config.model, eta, xi)
        .expect("validated config yields a valid order");

    MetaorderRecord {
        order_id,
        sign,
        quantity,
        duration_days: duration,
        start_logprice: 0.0,
        end_logprice: dp,
        sigma: config.market.sigma,
        daily_volume: config.market.daily_volume,
    }
}

/// Sequentially streaming panel.
pub fn simulate_iter(config: &SimConfig) -> Result<impl Iterator<Item = MetaorderRecord> + '_> {
    config.validate()?;
    Ok((0..config.n_orders).map(move |i| generate_record(config, i)))
}

/// Full panel, generated in parallel over fixed-size chunks and returned in
/// order_id order.
pub fn simulate_panel(config: &SimConfig) -> Result<Vec<MetaorderRecord>> {
    config.validate()?;
    let n = config.n_orders;
    let n_chunks = (n as usize).div_ceil(CHUNK);
    let chunks: Vec<Vec<MetaorderRecord>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let start = (c * CHUNK) as u64;
            let end = n.min(start + CHUNK as u64);
            (start..end).map(|i| generate_record(config, i)).collect()
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}
