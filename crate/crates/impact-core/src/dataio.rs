//! File formats: the fills CSV, the bucketed-curve CSV, and the fit-summary
//! JSON. Floats are serialized at full precision (shortest round-trip
//! decimal), so read(write(x)) is bit-exact.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{BucketGrid, BucketMatrix, BucketStats};
use crate::simulator::MetaorderRecord;

/// Mandatory fills header, in column order.
pub const FILLS_HEADER: [&str; 8] = [
    "order_id",
    "sign",
    "quantity",
    "duration_days",
    "start_logprice",
    "end_logprice",
    "sigma",
    "daily_volume",
];

/// Curves header, in column order.
pub const CURVES_HEADER: [&str; 6] = [
    "q_over_v_bin_center",
    "t_bucket_days",
    "n_obs",
    "mean_impact",
    "var_price_change",
    "std_err_mean",
];

fn validate_record(r: &MetaorderRecord, row: u64) -> Result<()> {
    let fail = |column: &'static str, message: String| Err(Error::Row { row, column, message });
    if r.sign != 1 && r.sign != -1 {
        return fail("sign", format!("must be +1 or -1, got {}", r.sign));
    }
    if !(r.quantity > 0.0 && r.quantity.is_finite()) {
        return fail("quantity", format!("must be > 0, got {}", r.quantity));
    }
    if !(r.duration_days > 0.0 && r.duration_days.is_finite()) {
        return fail("duration_days", format!("must be > 0, got {}", r.duration_days));
    }
    if !(r.end_logprice - r.start_logprice).is_finite() {
        return fail("end_logprice", "price change must be finite".into());
    }
    if !(r.sigma > 0.0 && r.sigma.is_finite()) {
        return fail("sigma", format!("must be > 0, got {}", r.sigma));
    }
    if !(r.daily_volume > 0.0 && r.daily_volume.is_finite()) {
        return fail("daily_volume", format!("must be > 0, got {}", r.daily_volume));
    }
    Ok(())
}

/// Streaming reader over a fills CSV. Yields one validated record per row;
/// errors carry the 1-based file row (header is row 1).
pub struct FillsReader<R: Read> {
    inner: csv::StringRecordsIntoIter<R>,
    row: u64,
}

/// Open a fills CSV and check the header.
pub fn read_fills<R: Read>(source: R) -> Result<FillsReader<R>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let expected: Vec<&str> = FILLS_HEADER.to_vec();
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::Schema(format!(
            "fills header must be {:?}, got {:?}",
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(FillsReader { inner: reader.into_records(), row: 1 })
}

impl<R: Read> FillsReader<R> {
    fn parse_row(&self, rec: &csv::StringRecord) -> Result<MetaorderRecord> {
        let row = self.row;
        if rec.len() != FILLS_HEADER.len() {
            return Err(Error::Schema(format!(
                "row {row}: expected {} fields, got {}",
                FILLS_HEADER.len(),
                rec.len()
            )));
        }
        fn field<T: std::str::FromStr>(
            rec: &csv::StringRecord,
            idx: usize,
            row: u64,
        ) -> Result<T> {
            let raw = &rec[idx];
            raw.trim().trim_start_matches('+').parse::<T>().map_err(|_| Error::Row {
                row,
                column: FILLS_HEADER[idx],
                message: format!("not numeric: {raw:?}"),
            })
        }
        let record = MetaorderRecord {
            order_id: field(rec, 0, row)?,
            sign: field(rec, 1, row)?,
            quantity: field(rec, 2, row)?,
            duration_days: field(rec, 3, row)?,
            start_logprice: field(rec, 4, row)?,
            end_logprice: field(rec, 5, row)?,
            sigma: field(rec, 6, row)?,
            daily_volume: field(rec, 7, row)?,
        };
        validate_record(&record, row)?;
        Ok(record)
    }
}

impl<R: Read> Iterator for FillsReader<R> {
    type Item = Result<MetaorderRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        let rec = match self.inner.next()? {
            Ok(r) => r,
            Err(e) => return Some(Err(e.into())),
        };
        self.row += 1;
        Some(self.parse_row(&rec))
    }
}

/// Write records as a fills CSV. Returns the data-row count.
pub fn write_fills<W: Write, I>(records: I, sink: W) -> Result<u64>
where
    I: IntoIterator<Item = MetaorderRecord>,
{
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(FILLS_HEADER)?;
    let mut count = 0u64;
    for r in records {
        writer.write_record(&[
            r.order_id.to_string(),
            r.sign.to_string(),
            r.quantity.to_string(),
            r.duration_days.to_string(),
            r.start_logprice.to_string(),
            r.end_logprice.to_string(),
            r.sigma.to_string(),
            r.daily_volume.to_string(),
        ])?;
        count += 1;
    }
    writer.flush()?;
    Ok(count)
}

/// One row of the bucketed-curve output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub q_over_v_bin_center: f64,
    pub t_bucket_days: f64,
    pub n_obs: u64,
    /// Mean of the signed price change; NaN-free: empty cells are skipped.
    pub mean_impact: f64,
    pub var_price_change: f64,
    pub std_err_mean: f64,
}

/// Flatten a bucket matrix into curve rows (cells with n >= 2 only), in
/// (Q/V bin, T bucket) order.
pub fn curve_rows(matrix: &BucketMatrix) -> Vec<CurveRow> {
    let grid = &matrix.grid;
    let mut rows = Vec::new();
    for q in 0..grid.n_q_bins() {
        for (t_idx, &t) in grid.t_buckets().iter().enumerate() {
            let cell = matrix.cell(q, t_idx);
            if let (Some(var), Some(se)) = (cell.variance(), cell.std_err_mean()) {
                rows.push(CurveRow {
                    q_over_v_bin_center: grid.bin_center(q),
                    t_bucket_days: t,
                    n_obs: cell.n_obs,
                    mean_impact: cell.mean,
                    var_price_change: var,
                    std_err_mean: se,
                });
            }
        }
    }
    rows
}

/// Write curve rows as CSV.
pub fn write_curves<W: Write>(rows: &[CurveRow], sink: W) -> Result<u64> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(CURVES_HEADER)?;
    for r in rows {
        writer.write_record(&[
            r.q_over_v_bin_center.to_string(),
            r.t_bucket_days.to_string(),
            r.n_obs.to_string(),
            r.mean_impact.to_string(),
            r.var_price_change.to_string(),
            r.std_err_mean.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(rows.len() as u64)
}

/// Read curve rows back from CSV.
pub fn read_curves<R: Read>(source: R) -> Result<Vec<CurveRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != CURVES_HEADER.to_vec() {
        return Err(Error::Schema(format!(
            "curves header must be {:?}, got {:?}",
            CURVES_HEADER.join(","),
            got.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i as u64 + 2;
        let parse = |idx: usize| -> Result<f64> {
            rec[idx].parse().map_err(|_| Error::Row {
                row,
                column: CURVES_HEADER[idx],
                message: format!("not numeric: {:?}", &rec[idx]),
            })
        };
        rows.push(CurveRow {
            q_over_v_bin_center: parse(0)?,
            t_bucket_days: parse(1)?,
            n_obs: rec[2].parse().map_err(|_| Error::Row {
                row,
                column: "n_obs",
                message: format!("not an integer: {:?}", &rec[2]),
            })?,
            mean_impact: parse(3)?,
            var_price_change: parse(4)?,
            std_err_mean: parse(5)?,
        });
    }
    Ok(rows)
}

/// Rebuild a bucket matrix from curve rows so the fitter can run on a
/// curves file as well as on raw fills. Bin edges are synthesized around
/// the stored centers; out-of-range information is not recoverable.
pub fn matrix_from_curve_rows(rows: &[CurveRow]) -> Result<BucketMatrix> {
    if rows.is_empty() {
        return Err(Error::InsufficientData("no curve rows".into()));
    }
    let mut centers: Vec<f64> = rows.iter().map(|r| r.q_over_v_bin_center).collect();
    centers.sort_by(f64::total_cmp);
    centers.dedup();
    let mut t_buckets: Vec<f64> = rows.iter().map(|r| r.t_bucket_days).collect();
    t_buckets.sort_by(f64::total_cmp);
    t_buckets.dedup();
    let grid = BucketGrid::from_centers(&centers, t_buckets.clone())?;
    let mut matrix = BucketMatrix::empty(grid);
    for r in rows {
        let q = centers.partition_point(|&c| c < r.q_over_v_bin_center) ;
        let t = t_buckets.partition_point(|&t| t < r.t_bucket_days);
        let idx = matrix.grid.cell_index(q, t);
        matrix.cells[idx] = BucketStats {
            n_obs: r.n_obs,
            mean: r.mean_impact,
            m2: r.var_price_change * (r.n_obs.saturating_sub(1)) as f64,
        };
    }
    Ok(matrix)
}

/// Fit summary emitted as JSON (schema documented in the README).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub y_const: f64,
    pub phi0: f64,
    pub a_fluct: f64,
    pub y_const_std_err: f64,
    pub phi0_std_err: f64,
    pub a_fluct_std_err: f64,
    pub objective: f64,
    pub n_cells: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Parameters whose log-scale standard error spans more than a decade.
    pub weakly_identified: Vec<String>,
}
