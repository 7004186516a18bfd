//! Weighted least-squares recovery of the impact-model parameters from a
//! bucketed matrix: cell means against the expected-impact curve and cell
//! variances against the conditional-variance curve, jointly or one panel
//! at a time.

use serde::{Deserialize, Serialize};

use crate::dataio::FitSummary;
use crate::error::{Error, Result};
use crate::estimator::{BucketMatrix, DEFAULT_N_MIN};
use crate::model::{
    conditional_variance, expected_impact, ImpactModel, MarketParams, OrderSpec,
};
use crate::nelder;

/// Which residual panels enter the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// Mean-impact and variance residuals together.
    #[default]
    Joint,
    MeanOnly,
    VarianceOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Minimum cell occupancy.
    pub n_min: u64,
    pub mode: FitMode,
    pub max_iters: usize,
    /// Starting points in (Y, phi0, a) space; the best-of-restarts result
    /// is returned.
    pub starts: Vec<[f64; 3]>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_min: DEFAULT_N_MIN,
            mode: FitMode::Joint,
            max_iters: 4000,
            starts: vec![[0.5, 0.01, 0.1], [1.0, 0.05, 0.3], [0.2, 0.002, 0.03]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ImpactModel,
    /// Absolute standard errors on (Y, phi0, a).
    pub std_errs: [f64; 3],
    /// Standard errors on the natural-log parameters.
    pub log_std_errs: [f64; 3],
    pub objective: f64,
    pub iterations: usize,
    pub n_cells: usize,
    pub converged: bool,
    /// True where the log-scale standard error spans more than a decade.
    pub weakly_identified: [bool; 3],
}

impl FitResult {
    pub fn to_summary(&self) -> FitSummary {
        let names = ["y_const", "phi0", "a_fluct"];
        FitSummary {
            y_const: self.model.y_const,
            phi0: self.model.phi0,
            a_fluct: self.model.a_fluct,
            y_const_std_err: self.std_errs[0],
            phi0_std_err: self.std_errs[1],
            a_fluct_std_err: self.std_errs[2],
            objective: self.objective,
            n_cells: self.n_cells,
            iterations: self.iterations,
            converged: self.converged,
            weakly_identified: names
                .iter()
                .zip(&self.weakly_identified)
                .filter(|(_, &w)| w)
                .map(|(n, _)| n.to_string())
                .collect(),
        }
    }
}

struct FitCell {
    q_over_v: f64,
    q_lo: f64,
    q_hi: f64,
    duration: f64,
    mean: f64,
    variance: f64,
    se_mean: f64,
    se_var: f64,
}

fn collect_cells(matrix: &BucketMatrix, n_min: u64) -> Vec<FitCell> {
    let grid = &matrix.grid;
    let edges = grid.q_over_v_edges();
    let mut cells = Vec::new();
    for q in 0..grid.n_q_bins() {
        for (t_idx, &t) in grid.t_buckets().iter().enumerate() {
            let cell = matrix.cell(q, t_idx);
            if cell.n_obs < n_min.max(2) {
                continue;
            }
            let variance = cell.variance().expect("n >= 2");
            if variance <= 0.0 {
                continue;
            }
            let n = cell.n_obs as f64;
            cells.push(FitCell {
                q_over_v: grid.bin_center(q),
                q_lo: edges[q],
                q_hi: edges[q + 1],
                duration: t,
                mean: cell.mean,
                variance,
                se_mean: (variance / n).sqrt(),
                // Standard error of the sample variance under near-normal
                // cell noise.
                se_var: variance * (2.0 / (n - 1.0)).sqrt(),
            });
        }
    }
    cells
}

/// 8-point Gauss-Legendre nodes and weights on [-1, 1].
const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
];

/// Model prediction for a cell's sample mean and sample variance.
///
/// Orders land in a bin with Q/V log-uniform across it, so the cell mean
/// is the bin average of I and the cell variance picks up the within-bin
/// spread of I on top of the conditional variance:
/// E[Var(dp|q)] + Var(I(q)). Evaluating at the bin center instead would
/// bias the fluctuation parameter on wide bins, where the spread of I is
/// comparable to a * I.
fn cell_prediction(
    q_lo: f64,
    q_hi: f64,
    duration: f64,
    market: &MarketParams,
    model: &ImpactModel,
) -> (f64, f64) {
    let mid = 0.5 * (q_hi.ln() + q_lo.ln());
    let half = 0.5 * (q_hi.ln() - q_lo.ln());
    let mut mean = 0.0;
    let mut second = 0.0;
    for &(node, weight) in &GL8 {
        let q_over_v = (mid + half * node).exp();
        let order = OrderSpec {
            sign: 1,
            quantity: q_over_v * market.daily_volume,
            duration,
        };
        let i = expected_impact(&order, market, model).expect("valid cell");
        let v = conditional_variance(&order, market, model).expect("valid cell");
        // Normalized weights: GL8 weights sum to 2.
        mean += 0.5 * weight * i;
        second += 0.5 * weight * (v + i * i);
    }
    (mean, second - mean * mean)
}

/// Standardized residuals (observed minus predicted, over the cell
/// standard error) at the given parameters.
fn fit_residuals(
    cells: &[FitCell],
    market: &MarketParams,
    model: &ImpactModel,
    mode: FitMode,
    out: &mut Vec<f64>,
) {
    out.clear();
    for c in cells {
        let (mean, variance) = cell_prediction(c.q_lo, c.q_hi, c.duration, market, model);
        if matches!(mode, FitMode::Joint | FitMode::MeanOnly) {
            out.push((c.mean - mean) / c.se_mean);
        }
        if matches!(mode, FitMode::Joint | FitMode::VarianceOnly) {
            out.push((c.variance - variance) / c.se_var);
        }
    }
}

/// Weighted sum of squared residuals at the given parameters.
fn fit_objective(
    cells: &[FitCell],
    market: &MarketParams,
    model: &ImpactModel,
    mode: FitMode,
) -> f64 {
    let mut residuals = Vec::with_capacity(2 * cells.len());
    fit_residuals(cells, market, model, mode, &mut residuals);
    residuals.iter().map(|r| r * r).sum()
}

fn model_from_log(x: &[f64]) -> ImpactModel {
    ImpactModel {
        y_const: x[0].exp(),
        phi0: x[1].exp(),
        a_fluct: x[2].exp(),
    }
}

/// Gauss-Jordan inverse with partial pivoting for matrices up to 3x3;
/// `None` when a pivot vanishes.
fn invert_small(a: &[[f64; 3]; 3], n: usize) -> Option<[[f64; 3]; 3]> {
    let mut work = *a;
    let mut inv = [[0.0; 3]; 3];
    for (i, row) in inv.iter_mut().enumerate().take(n) {
        row[i] = 1.0;
    }
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&a, &b| work[a][col].abs().total_cmp(&work[b][col].abs()))
            .unwrap();
        let pivot = work[pivot_row][col];
        if pivot == 0.0 || !pivot.is_finite() {
            return None;
        }
        work.swap(col, pivot_row);
        inv.swap(col, pivot_row);
        for j in 0..n {
            work[col][j] /= pivot;
            inv[col][j] /= pivot;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = work[row][col];
            for j in 0..n {
                work[row][j] -= factor * work[col][j];
                inv[row][j] -= factor * inv[col][j];
            }
        }
    }
    Some(inv)
}

/// Standard errors on the log parameters from the Gauss-Newton curvature
/// J^T J of the standardized residual vector: cov = (J^T J)^-1.
///
/// Parameters whose residual sensitivity is negligible (for example the
/// fluctuation amplitude when only the mean panel is fitted) are excluded
/// from the inversion and reported with infinite standard error, so a flat
/// direction does not poison the identified ones.
fn log_std_errs<F>(residuals: F, x: &[f64; 3]) -> [f64; 3]
where
    F: Fn(&[f64; 3]) -> Vec<f64>,
{
    let h = 1e-5;
    let mut columns: [Vec<f64>; 3] = Default::default();
    for i in 0..3 {
        let mut xp = *x;
        let mut xm = *x;
        xp[i] += h;
        xm[i] -= h;
        let rp = residuals(&xp);
        let rm = residuals(&xm);
        columns[i] = rp
            .iter()
            .zip(&rm)
            .map(|(p, m)| (p - m) / (2.0 * h))
            .collect();
    }
    let norms: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>())
        .collect();
    let max_norm = norms.iter().cloned().fold(0.0, f64::max);
    let kept: Vec<usize> = (0..3)
        .filter(|&i| norms[i] > 1e-24 * max_norm && norms[i] > 0.0)
        .collect();

    let mut out = [f64::INFINITY; 3];
    let k = kept.len();
    if k == 0 {
        return out;
    }
    let mut jtj = [[0.0; 3]; 3];
    for (a, &i) in kept.iter().enumerate() {
        for (b, &j) in kept.iter().enumerate() {
            jtj[a][b] = columns[i]
                .iter()
                .zip(&columns[j])
                .map(|(u, v)| u * v)
                .sum();
        }
    }
    if let Some(inv) = invert_small(&jtj, k) {
        for (a, &i) in kept.iter().enumerate() {
            let var = inv[a][a];
            out[i] = if var > 0.0 && var.is_finite() {
                var.sqrt()
            } else {
                f64::INFINITY
            };
        }
    }
    out
}

/// Objective value at an externally supplied parameter set, using the same
/// cells and weights as `fit_model`. Lets callers compare the fitted
/// optimum against the generating parameters.
pub fn objective_at(
    matrix: &BucketMatrix,
    market: &MarketParams,
    model: &ImpactModel,
    options: &FitOptions,
) -> f64 {
    let cells = collect_cells(matrix, options.n_min);
    fit_objective(&cells, market, model, options.mode)
}

/// Fit (Y, phi0, a) to the bucketed statistics.
///
/// Requires at least 10 populated cells spanning at least one decade of
/// Q/V. Optimization runs in log-parameter space from each configured
/// start; the best restart wins.
pub fn fit_model(
    matrix: &BucketMatrix,
    market: &MarketParams,
    options: &FitOptions,
) -> Result<FitResult> {
    let cells = collect_cells(matrix, options.n_min);
    if cells.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "fit needs >= 10 populated cells (n >= {}), found {}",
            options.n_min,
            cells.len()
        )));
    }
    let q_min = cells.iter().map(|c| c.q_over_v).fold(f64::MAX, f64::min);
    let q_max = cells.iter().map(|c| c.q_over_v).fold(f64::MIN, f64::max);
    if q_max / q_min < 10.0 {
        return Err(Error::InsufficientData(format!(
            "fit needs cells spanning >= 1 decade of Q/V, found [{q_min}, {q_max}]"
        )));
    }

    let objective = |x: &[f64]| fit_objective(&cells, market, &model_from_log(x), options.mode);

    let mut best: Option<nelder::SimplexResult> = None;
    let mut total_iters = 0;
    for start in &options.starts {
        let x0 = [start[0].ln(), start[1].ln(), start[2].ln()];
        let res = nelder::minimize(objective, &x0, 0.4, 1e-12, 1e-9, options.max_iters);
        total_iters += res.iterations;
        if best.as_ref().is_none_or(|b| res.fmin < b.fmin) {
            best = Some(res);
        }
    }
    let best = best.expect("at least one start");
    if !best.converged {
        return Err(Error::NonConvergence {
            iterations: total_iters,
            objective: best.fmin,
            best: [best.x[0].exp(), best.x[1].exp(), best.x[2].exp()],
        });
    }

    let x = [best.x[0], best.x[1], best.x[2]];
    let residuals = |x: &[f64; 3]| {
        let mut out = Vec::with_capacity(2 * cells.len());
        fit_residuals(&cells, market, &model_from_log(x), options.mode, &mut out);
        out
    };
    let log_ses = log_std_errs(residuals, &x);
    let model = model_from_log(&x);
    let std_errs = [
        model.y_const * log_ses[0],
        model.phi0 * log_ses[1],
        model.a_fluct * log_ses[2],
    ];
    let decade = std::f64::consts::LN_10;
    Ok(FitResult {
        model,
        std_errs,
        log_std_errs: log_ses,
        objective: best.fmin,
        iterations: total_iters,
        n_cells: cells.len(),
        converged: true,
        weakly_identified: [
            log_ses[0] > decade,
            log_ses[1] > decade,
            log_ses[2] > decade,
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{BucketGrid, BucketMatrix, BucketStats};

    /// Matrix whose cell means and variances are exactly the model curves.
    fn noiseless_matrix(
        market: &MarketParams,
        model: &ImpactModel,
        n_per_cell: u64,
    ) -> BucketMatrix {
        let grid = BucketGrid::log_spaced(
            1e-5,
            2.0,
            24,
            vec![1.0 / 64.0, 1.0 / 16.0, 0.25, 1.0],
        )
        .unwrap();
        let mut matrix = BucketMatrix::empty(grid.clone());
        let edges = grid.q_over_v_edges().to_vec();
        for q in 0..grid.n_q_bins() {
            for (t_idx, &t) in grid.t_buckets().to_vec().iter().enumerate() {
                let (mean, var) = cell_prediction(edges[q], edges[q + 1], t, market, model);
                let idx = grid.cell_index(q, t_idx);
                matrix.cells[idx] = BucketStats {
                    n_obs: n_per_cell,
                    mean,
                    m2: var * (n_per_cell - 1) as f64,
                };
            }
        }
        matrix
    }

    #[test]
    fn noiseless_recovery_is_exact() {
        let market = MarketParams::new(0.02, 1e6).unwrap();
        let truth = ImpactModel::default();
        let matrix = noiseless_matrix(&market, &truth, 10_000);
        let fit = fit_model(&matrix, &market, &FitOptions::default()).unwrap();
        assert!((fit.model.y_const / truth.y_const - 1.0).abs() < 1e-6, "{:?}", fit.model);
        assert!((fit.model.phi0 / truth.phi0 - 1.0).abs() < 1e-6, "{:?}", fit.model);
        assert!((fit.model.a_fluct / truth.a_fluct - 1.0).abs() < 1e-6, "{:?}", fit.model);
        assert!(fit.objective < 1e-12);
        assert!(fit.converged);
    }

    #[test]
    fn noiseless_recovery_off_default_truth() {
        let market = MarketParams::new(0.015, 5e6).unwrap();
        let truth = ImpactModel::new(0.8, 0.03, 0.2).unwrap();
        let matrix = noiseless_matrix(&market, &truth, 10_000);
        let fit = fit_model(&matrix, &market, &FitOptions::default()).unwrap();
        assert!((fit.model.y_const / truth.y_const - 1.0).abs() < 1e-6);
        assert!((fit.model.phi0 / truth.phi0 - 1.0).abs() < 1e-6);
        assert!((fit.model.a_fluct / truth.a_fluct - 1.0).abs() < 1e-6);
    }

    #[test]
    fn insufficient_cells_rejected() {
        let market = MarketParams::new(0.02, 1e6).unwrap();
        let grid = BucketGrid::log_spaced(1e-5, 1e-1, 4, vec![1.0]).unwrap();
        let matrix = BucketMatrix::empty(grid);
        assert!(matches!(
            fit_model(&matrix, &market, &FitOptions::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn plateau_only_cells_leave_phi0_weakly_identified() {
        // Restrict cells to phi >= 1e3 * phi0: Y pins down, phi0 does not.
        let market = MarketParams::new(0.02, 1e6).unwrap();
        let truth = ImpactModel::default();
        let grid = BucketGrid::log_spaced(
            15.0,
            2000.0,
            12,
            vec![1.0 / 1024.0, 1.0 / 512.0, 1.0 / 256.0],
        )
        .unwrap();
        let mut matrix = BucketMatrix::empty(grid.clone());
        let edges = grid.q_over_v_edges().to_vec();
        for q in 0..grid.n_q_bins() {
            for (t_idx, &t) in grid.t_buckets().to_vec().iter().enumerate() {
                assert!(grid.bin_center(q) / t >= 1e3 * truth.phi0);
                let (mean, var) =
                    cell_prediction(edges[q], edges[q + 1], t, &market, &truth);
                let idx = grid.cell_index(q, t_idx);
                matrix.cells[idx] =
                    BucketStats { n_obs: 1000, mean, m2: var * 999.0 };
            }
        }
        // Mean-only: the variance panel would re-identify phi0 through the
        // a^2 phi F^2 term.
        let options = FitOptions { mode: FitMode::MeanOnly, ..FitOptions::default() };
        let fit = fit_model(&matrix, &market, &options).unwrap();
        assert!((fit.model.y_const / truth.y_const - 1.0).abs() < 0.02, "{:?}", fit.model);
        assert!(fit.weakly_identified[1], "phi0 log SE = {}", fit.log_std_errs[1]);
        assert!(!fit.weakly_identified[0]);
    }
}
