//! Run configuration: JSON file merged with command-line overrides, echoed
//! into the output directory for provenance.

use std::path::Path;

use serde::{Deserialize, Serialize};

use impact_core::fit::FitOptions;
use impact_core::{Error, Result, SimConfig};

/// Bucket-grid settings for the estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Number of log-spaced Q/V bins over the sampled range.
    pub n_bins: usize,
    /// Defaults to the simulator's Q/V sampling range.
    pub q_over_v_range: Option<(f64, f64)>,
    /// Minimum cell occupancy for diagnostics and fitting.
    pub n_min: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n_bins: 32, q_over_v_range: None, n_min: 50 }
    }
}

/// Full pipeline configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub sim: SimConfig,
    pub grid: GridConfig,
    pub fit: FitOptions,
    /// Collapse threshold for the square-root regime, as a multiple of
    /// phi0.
    pub phi_plateau_factor: f64,
    /// Upper phi bound (as a multiple of phi0) defining the linear regime
    /// in the diagnostics.
    pub phi_linear_factor: f64,
    /// Q/V ceiling for the variance-plateau pooling.
    pub plateau_q_over_v_max: f64,
}

impl Default for RunConfig {
    /// Reproduction profile: one million orders sampled across both the
    /// linear and the square-root regime, four duration buckets spanning
    /// almost two decades.
    fn default() -> Self {
        let seed = 1;
        let mut sim = SimConfig::with_defaults(1_000_000, seed);
        sim.q_over_v_range = (1e-7, 20.0);
        sim.t_buckets = [1.0 / 64.0, 1.0 / 16.0, 0.25, 1.0]
            .iter()
            .map(|&duration_days| impact_core::TBucket { duration_days, weight: 1.0 })
            .collect();
        Self {
            seed,
            sim,
            grid: GridConfig::default(),
            fit: FitOptions::default(),
            phi_plateau_factor: 1e3,
            phi_linear_factor: 1e-2,
            plateau_q_over_v_max: 1e-4,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Domain(format!("config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        if self.grid.n_bins == 0 {
            return Err(Error::Domain("grid.n_bins must be >= 1".into()));
        }
        if let Some((lo, hi)) = self.grid.q_over_v_range {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::Domain(format!(
                    "grid.q_over_v_range must satisfy 0 < lo < hi, got [{lo}, {hi}]"
                )));
            }
        }
        if !(self.phi_plateau_factor > 0.0 && self.phi_linear_factor > 0.0) {
            return Err(Error::Domain("phi regime factors must be > 0".into()));
        }
        if !self.plateau_q_over_v_max.is_finite() || self.plateau_q_over_v_max <= 0.0 {
            return Err(Error::Domain("plateau_q_over_v_max must be > 0".into()));
        }
        Ok(())
    }

    /// Q/V range the estimator grid covers.
    pub fn grid_range(&self) -> (f64, f64) {
        self.grid.q_over_v_range.unwrap_or(self.sim.q_over_v_range)
    }

    pub fn bucket_grid(&self) -> Result<impact_core::BucketGrid> {
        let (lo, hi) = self.grid_range();
        let t_buckets = self.sim.t_buckets.iter().map(|b| b.duration_days).collect();
        impact_core::BucketGrid::log_spaced(lo, hi, self.grid.n_bins, t_buckets)
    }
}
