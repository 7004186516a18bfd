//! Square-root market-impact law with participation crossover.
//!
//! The crate simulates synthetic metaorder panels from a stochastic
//! price-change ansatz, recovers impact and variance curves by conditional
//! bucketing over a (Q/V, T) grid, fits the model parameters, and evaluates
//! the expected impact-cost overhead and execution risk of trading
//! schedules.

pub mod cost;
pub mod dataio;
pub mod error;
pub mod estimator;
pub mod fit;
pub mod model;
pub mod nelder;
pub mod rng;
pub mod simulator;

pub use cost::{cost_vs_risk_report, expected_cost, CostRiskReport, DurationArg, Schedule};
pub use error::{Error, Result};
pub use estimator::{
    accumulate, accumulate_parallel, bin_spreads, collapse_diagnostic, merge,
    variance_plateau_slope, BucketGrid, BucketMatrix, BucketStats, BinSpread, CollapseResult,
    PlateauFit,
};
pub use fit::{fit_model, objective_at, FitMode, FitOptions, FitResult};
pub use model::{
    conditional_variance, execution_risk, expected_impact, impact_r_squared, scaling_function,
    ImpactModel, MarketParams, OrderSpec,
};
pub use simulator::{
    sample_price_change, simulate_iter, simulate_panel, MetaorderRecord, NoiseKind, SimConfig,
    TBucket,
};
