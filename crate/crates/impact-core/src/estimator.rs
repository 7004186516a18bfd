//! Conditional bucketed statistics of signed price changes over a
//! (Q/V, T) grid, with streaming mergeable accumulators, plus the collapse
//! and variance-plateau diagnostics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::{MetaorderRecord, CHUNK};

/// Default minimum cell occupancy for diagnostics and fitting.
pub const DEFAULT_N_MIN: u64 = 50;

/// Conditioning grid: log-spaced Q/V bin edges and discrete T buckets.
///
/// Q/V intervals are left-closed right-open; the top edge is closed.
/// Durations match a bucket by nearest value within a relative tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketGrid {
    q_over_v_edges: Vec<f64>,
    t_buckets: Vec<f64>,
    t_rel_tol: f64,
}

impl BucketGrid {
    pub fn new(q_over_v_edges: Vec<f64>, t_buckets: Vec<f64>, t_rel_tol: f64) -> Result<Self> {
        if q_over_v_edges.len() < 2 {
            return Err(Error::Domain("need at least 2 Q/V edges".into()));
        }
        if !q_over_v_edges.iter().all(|&e| e > 0.0 && e.is_finite()) {
            return Err(Error::Domain("Q/V edges must be positive and finite".into()));
        }
        if !q_over_v_edges.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Domain("Q/V edges must be strictly increasing".into()));
        }
        if t_buckets.is_empty() {
            return Err(Error::Domain("need at least 1 T bucket".into()));
        }
        if !t_buckets.iter().all(|&t| t > 0.0 && t.is_finite()) {
            return Err(Error::Domain("T buckets must be positive and finite".into()));
        }
        if !t_buckets.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Domain("T buckets must be strictly increasing".into()));
        }
        if !(0.0..1.0).contains(&t_rel_tol) {
            return Err(Error::Domain("t_rel_tol must be in [0, 1)".into()));
        }
        Ok(Self { q_over_v_edges, t_buckets, t_rel_tol })
    }

    /// `n_bins` log-spaced Q/V bins on [lo, hi], default T tolerance 1e-6.
    pub fn log_spaced(lo: f64, hi: f64, n_bins: usize, t_buckets: Vec<f64>) -> Result<Self> {
        if !(lo > 0.0 && lo < hi && hi.is_finite()) || n_bins == 0 {
            return Err(Error::Domain(format!(
                "log_spaced needs 0 < lo < hi and n_bins >= 1, got [{lo}, {hi}] x {n_bins}"
            )));
        }
        let ratio = (hi / lo).ln();
        let edges = (0..=n_bins)
            .map(|i| lo * (ratio * i as f64 / n_bins as f64).exp())
            .collect();
        Self::new(edges, t_buckets, 1e-6)
    }

    /// Grid whose bins are synthesized around externally supplied centers
    /// (geometric midpoints as edges). Used when rebuilding a matrix from a
    /// curves file.
    pub fn from_centers(centers: &[f64], t_buckets: Vec<f64>) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::Domain("need at least 1 center".into()));
        }
        if !centers.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Domain("centers must be strictly increasing".into()));
        }
        let mut edges = Vec::with_capacity(centers.len() + 1);
        let first_ratio = if centers.len() > 1 {
            (centers[1] / centers[0]).sqrt()
        } else {
            2.0f64.sqrt()
        };
        edges.push(centers[0] / first_ratio);
        for w in centers.windows(2) {
            edges.push((w[0] * w[1]).sqrt());
        }
        let last_ratio = if centers.len() > 1 {
            (centers[centers.len() - 1] / centers[centers.len() - 2]).sqrt()
        } else {
            2.0f64.sqrt()
        };
        edges.push(centers[centers.len() - 1] * last_ratio);
        Self::new(edges, t_buckets, 1e-6)
    }

    pub fn n_q_bins(&self) -> usize {
        self.q_over_v_edges.len() - 1
    }

    pub fn n_t_buckets(&self) -> usize {
        self.t_buckets.len()
    }

    pub fn n_cells(&self) -> usize {
        self.n_q_bins() * self.n_t_buckets()
    }

    pub fn t_buckets(&self) -> &[f64] {
        &self.t_buckets
    }

    pub fn q_over_v_edges(&self) -> &[f64] {
        &self.q_over_v_edges
    }

    /// Geometric center of Q/V bin `i`.
    pub fn bin_center(&self, i: usize) -> f64 {
        (self.q_over_v_edges[i] * self.q_over_v_edges[i + 1]).sqrt()
    }

    /// Left-closed right-open bins; the top edge is closed.
    pub fn find_q_bin(&self, q_over_v: f64) -> Option<usize> {
        let edges = &self.q_over_v_edges;
        if q_over_v < edges[0] || q_over_v > edges[edges.len() - 1] {
            return None;
        }
        if q_over_v == edges[edges.len() - 1] {
            return Some(edges.len() - 2);
        }
        // partition_point: index of the first edge > q_over_v.
        let idx = edges.partition_point(|&e| e <= q_over_v);
        Some(idx - 1)
    }

    /// Nearest bucket within relative tolerance.
    pub fn find_t_bucket(&self, duration_days: f64) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &t) in self.t_buckets.iter().enumerate() {
            let rel = (duration_days - t).abs() / t;
            if rel <= self.t_rel_tol && best.is_none_or(|(_, b)| rel < b) {
                best = Some((i, rel));
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn cell_index(&self, q_bin: usize, t_bucket: usize) -> usize {
        q_bin * self.n_t_buckets() + t_bucket
    }
}

/// Streaming count/mean/second-moment accumulator (Welford), mergeable via
/// the parallel-update formula.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BucketStats {
    pub n_obs: u64,
    pub mean: f64,
    pub m2: f64,
}

impl BucketStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n_obs += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n_obs as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &BucketStats) {
        if other.n_obs == 0 {
            return;
        }
        if self.n_obs == 0 {
            *self = *other;
            return;
        }
        let n1 = self.n_obs as f64;
        let n2 = other.n_obs as f64;
        let delta = other.mean - self.mean;
        let n = n1 + n2;
        self.mean += delta * n2 / n;
        self.m2 += other.m2 + delta * delta * n1 * n2 / n;
        self.n_obs += other.n_obs;
    }

    /// Unbiased variance; `None` below 2 observations.
    pub fn variance(&self) -> Option<f64> {
        if self.n_obs < 2 {
            None
        } else {
            Some(self.m2 / (self.n_obs - 1) as f64)
        }
    }

    pub fn std_err_mean(&self) -> Option<f64> {
        self.variance().map(|v| (v / self.n_obs as f64).sqrt())
    }
}

/// Matrix of per-cell statistics over a grid, plus the out-of-range tally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketMatrix {
    pub grid: BucketGrid,
    pub cells: Vec<BucketStats>,
    pub out_of_range: u64,
}

impl BucketMatrix {
    pub fn empty(grid: BucketGrid) -> Self {
        let cells = vec![BucketStats::new(); grid.n_cells()];
        Self { grid, cells, out_of_range: 0 }
    }

    pub fn cell(&self, q_bin: usize, t_bucket: usize) -> &BucketStats {
        &self.cells[self.grid.cell_index(q_bin, t_bucket)]
    }

    pub fn push_record(&mut self, record: &MetaorderRecord) {
        let q_bin = self.grid.find_q_bin(record.q_over_v());
        let t_bucket = self.grid.find_t_bucket(record.duration_days);
        match (q_bin, t_bucket) {
            (Some(q), Some(t)) => {
                let idx = self.grid.cell_index(q, t);
                self.cells[idx].push(record.signed_price_change());
            }
            _ => self.out_of_range += 1,
        }
    }

    pub fn n_records(&self) -> u64 {
        self.cells.iter().map(|c| c.n_obs).sum::<u64>() + self.out_of_range
    }
}

/// Single-pass accumulation of a record stream into the grid.
pub fn accumulate<I>(grid: &BucketGrid, records: I) -> BucketMatrix
where
    I: IntoIterator<Item = MetaorderRecord>,
{
    let mut matrix = BucketMatrix::empty(grid.clone());
    for r in records {
        matrix.push_record(&r);
    }
    matrix
}

/// Parallel accumulation over fixed-size chunks, merged in chunk order so
/// the result does not depend on the number of workers.
pub fn accumulate_parallel(grid: &BucketGrid, records: &[MetaorderRecord]) -> BucketMatrix {
    let partials: Vec<BucketMatrix> = records
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut m = BucketMatrix::empty(grid.clone());
            for r in chunk {
                m.push_record(r);
            }
            m
        })
        .collect();
    let mut result = BucketMatrix::empty(grid.clone());
    for p in &partials {
        merge_into(&mut result, p).expect("identical grids by construction");
    }
    result
}

/// Cellwise merge; the result equals the stats of the concatenated sample.
pub fn merge(a: &BucketMatrix, b: &BucketMatrix) -> Result<BucketMatrix> {
    let mut out = a.clone();
    merge_into(&mut out, b)?;
    Ok(out)
}

fn merge_into(a: &mut BucketMatrix, b: &BucketMatrix) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch(
            "bucket matrices were built on different grids".into(),
        ));
    }
    for (ca, cb) in a.cells.iter_mut().zip(&b.cells) {
        ca.merge(cb);
    }
    a.out_of_range += b.out_of_range;
    Ok(())
}

/// Per-bin spread of mean impact across T buckets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpread {
    pub bin_index: usize,
    pub q_over_v_center: f64,
    /// Participation at the bin center for the largest included duration.
    pub phi_min: f64,
    /// Participation at the bin center for the smallest included duration.
    pub phi_max: f64,
    /// max over T-bucket pairs of |mean_i - mean_j| / |pooled mean|.
    pub spread: f64,
    pub n_buckets: usize,
}

/// Spread of the per-bucket mean impact for every Q/V bin with at least two
/// T buckets of occupancy >= `n_min`.
pub fn bin_spreads(matrix: &BucketMatrix, n_min: u64) -> Vec<BinSpread> {
    let grid = &matrix.grid;
    let mut out = Vec::new();
    for q in 0..grid.n_q_bins() {
        let center = grid.bin_center(q);
        let mut included: Vec<(f64, &BucketStats)> = Vec::new();
        for (t_idx, &t) in grid.t_buckets().iter().enumerate() {
            let cell = matrix.cell(q, t_idx);
            if cell.n_obs >= n_min.max(1) {
                included.push((t, cell));
            }
        }
        if included.len() < 2 {
            continue;
        }
        let mut pooled = BucketStats::new();
        for (_, c) in &included {
            pooled.merge(c);
        }
        let mut max_diff = 0.0f64;
        for i in 0..included.len() {
            for j in (i + 1)..included.len() {
                max_diff = max_diff.max((included[i].1.mean - included[j].1.mean).abs());
            }
        }
        let spread = if pooled.mean == 0.0 { f64::INFINITY } else { max_diff / pooled.mean.abs() };
        let t_max = included.iter().map(|(t, _)| *t).fold(f64::MIN, f64::max);
        let t_min = included.iter().map(|(t, _)| *t).fold(f64::MAX, f64::min);
        out.push(BinSpread {
            bin_index: q,
            q_over_v_center: center,
            phi_min: center / t_max,
            phi_max: center / t_min,
            spread,
            n_buckets: included.len(),
        });
    }
    out
}

/// Result of the T-collapse diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseResult {
    /// Bins whose participation is >= the threshold in every included
    /// T bucket.
    pub qualifying: Vec<BinSpread>,
    pub status: String,
}

/// Spread of mean impact across T buckets, restricted to bins whose implied
/// participation is at least `phi_threshold` in all included buckets.
pub fn collapse_diagnostic(
    matrix: &BucketMatrix,
    phi_threshold: f64,
    n_min: u64,
) -> CollapseResult {
    let qualifying: Vec<BinSpread> = bin_spreads(matrix, n_min)
        .into_iter()
        .filter(|b| b.phi_min >= phi_threshold)
        .collect();
    let status = if qualifying.is_empty() {
        format!(
            "no Q/V bin has phi >= {phi_threshold} in all T buckets with n >= {n_min}"
        )
    } else {
        format!("{} qualifying bins", qualifying.len())
    };
    CollapseResult { qualifying, status }
}

/// Least-squares line through the small-Q variance plateau vs duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauFit {
    /// Estimate of sigma^2 (variance per day).
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// (T, pooled small-Q variance) points the line was fit through.
    pub points: Vec<(f64, f64)>,
    /// True when only two points were available and the line interpolates
    /// them exactly.
    pub degenerate: bool,
}

/// Fit variance = slope * T + intercept over the T buckets, pooling cells
/// with bin center <= `q_over_v_max` and occupancy >= `n_min`.
pub fn variance_plateau_slope(
    matrix: &BucketMatrix,
    q_over_v_max: f64,
    n_min: u64,
) -> Result<PlateauFit> {
    let grid = &matrix.grid;
    let mut points = Vec::new();
    for (t_idx, &t) in grid.t_buckets().iter().enumerate() {
        let mut pooled = BucketStats::new();
        for q in 0..grid.n_q_bins() {
            if grid.bin_center(q) <= q_over_v_max {
                let cell = matrix.cell(q, t_idx);
                if cell.n_obs >= n_min.max(2) {
                    pooled.merge(cell);
                }
            }
        }
        if let Some(var) = pooled.variance() {
            points.push((t, var));
        }
    }
    if points.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "variance_plateau_slope needs >= 2 populated T buckets with Q/V <= {q_over_v_max}, found {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum();
    let degenerate = points.len() == 2;
    let r_squared = if degenerate || ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(PlateauFit { slope, intercept, r_squared, points, degenerate })
}
