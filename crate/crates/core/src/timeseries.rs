//! Sampled trajectories: CSV ingestion, noise injection, Savitzky-Golay smoothing and differentiation.

use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimeSeriesError {
    #[error("empty input")]
    Empty,
    #[error("first column must be \"t\", found {0:?}")]
    MissingTimeColumn(String),
    #[error("duplicate column name {0:?}")]
    DuplicateName(String),
    #[error("non-numeric cell {value:?} at row {row}, column {column:?}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("non-finite value at row {row}, column {column:?}")]
    NonFinite { row: usize, column: String },
    #[error("time not strictly increasing in segment {segment} near t = {time}")]
    NonMonotonicTime { segment: i64, time: f64 },
    #[error("malformed csv: {0}")]
    Csv(String),
    #[error("negative noise level {0}")]
    NegativeNoise(f64),
    #[error("window must be odd, got {0}")]
    EvenWindow(usize),
    #[error("window {window} must exceed polyorder {polyorder}")]
    WindowNotAbovePolyorder { window: usize, polyorder: usize },
    #[error("series of length {len} is shorter than window {window}")]
    SeriesTooShort { len: usize, window: usize },
    #[error("derivative order {0} is not 1 or 2")]
    UnsupportedOrder(usize),
    #[error("polyorder {polyorder} is below derivative order {order}")]
    PolyorderBelowOrder { polyorder: usize, order: usize },
    #[error("time step must be positive")]
    NonPositiveStep,
    #[error("non-uniform time grid in segment {0}")]
    NonUniformGrid(i64),
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

pub type Result<T> = std::result::Result<T, TimeSeriesError>;

/// Sampled states with named columns, split into independent segments.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesTable<T: Real> {
    times: Vec<T>,
    names: Vec<String>,
    values: DMatrix<T>,
    segment_ids: Vec<i64>,
}

impl<T: Real> TimeSeriesTable<T> {
    /// Builds a validated table. Rows are reordered by (segment, time).
    pub fn new(
        times: Vec<T>,
        names: Vec<String>,
        values: DMatrix<T>,
        segment_ids: Vec<i64>,
    ) -> Result<Self> {
        let n = times.len();
        if values.nrows() != n || segment_ids.len() != n {
            return Err(TimeSeriesError::Shape(format!(
                "{} times, {} segment ids, {} value rows",
                n,
                segment_ids.len(),
                values.nrows()
            )));
        }
        if values.ncols() != names.len() {
            return Err(TimeSeriesError::Shape(format!(
                "{} names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        let mut seen = BTreeSet::new();
        for name in &names {
            if name == "t" || name == "segment" || !seen.insert(name.as_str()) {
                return Err(TimeSeriesError::DuplicateName(name.clone()));
            }
        }
        for (r, t) in times.iter().enumerate() {
            if !t.is_finite() {
                return Err(TimeSeriesError::NonFinite {
                    row: r,
                    column: "t".into(),
                });
            }
        }
        for c in 0..values.ncols() {
            for r in 0..n {
                if !values[(r, c)].is_finite() {
                    return Err(TimeSeriesError::NonFinite {
                        row: r,
                        column: names[c].clone(),
                    });
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            segment_ids[a]
                .cmp(&segment_ids[b])
                .then(times[a].partial_cmp(&times[b]).expect("finite times"))
        });
        let sorted = order.iter().enumerate().all(|(i, &j)| i == j);
        let (times, values, segment_ids) = if sorted {
            (times, values, segment_ids)
        } else {
            let t: Vec<T> = order.iter().map(|&i| times[i]).collect();
            let s: Vec<i64> = order.iter().map(|&i| segment_ids[i]).collect();
            let v = values.select_rows(order.iter());
            (t, v, s)
        };
        for r in 1..n {
            if segment_ids[r] == segment_ids[r - 1] && times[r] <= times[r - 1] {
                return Err(TimeSeriesError::NonMonotonicTime {
                    segment: segment_ids[r],
                    time: times[r].as_f64(),
                });
            }
        }
        Ok(Self {
            times,
            names,
            values,
            segment_ids,
        })
    }

    /// Single-segment table from named columns.
    pub fn from_columns(times: Vec<T>, columns: Vec<(String, Vec<T>)>) -> Result<Self> {
        let n = times.len();
        let mut names = Vec::with_capacity(columns.len());
        let mut values = DMatrix::zeros(n, columns.len());
        for (c, (name, col)) in columns.into_iter().enumerate() {
            if col.len() != n {
                return Err(TimeSeriesError::Shape(format!(
                    "column {name:?} has {} rows",
                    col.len()
                )));
            }
            values.set_column(c, &DVector::from_vec(col));
            names.push(name);
        }
        Self::new(times, names, values, vec![0; n])
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn segment_ids(&self) -> &[i64] {
        &self.segment_ids
    }

    pub fn n_rows(&self) -> usize {
        self.times.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Result<Vec<T>> {
        let c = self
            .column_index(name)
            .ok_or_else(|| TimeSeriesError::UnknownColumn(name.to_string()))?;
        Ok(self.values.column(c).iter().copied().collect())
    }

    /// Row ranges of each segment, in row order.
    pub fn segments(&self) -> Vec<(i64, Range<usize>)> {
        let mut out = Vec::new();
        let mut start = 0;
        for r in 1..=self.n_rows() {
            if r == self.n_rows() || self.segment_ids[r] != self.segment_ids[start] {
                out.push((self.segment_ids[start], start..r));
                start = r;
            }
        }
        out
    }

    /// Same rows, values replaced.
    pub fn with_values(&self, names: Vec<String>, values: DMatrix<T>) -> Result<Self> {
        Self::new(self.times.clone(), names, values, self.segment_ids.clone())
    }

    /// Keeps the listed columns in the given order.
    pub fn select(&self, names: &[&str]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| TimeSeriesError::UnknownColumn(n.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let values = self.values.select_columns(idx.iter());
        self.with_values(names.iter().map(|s| s.to_string()).collect(), values)
    }

    /// Appends columns sharing this table's rows.
    pub fn append_columns(&self, other: &TimeSeriesTable<T>) -> Result<Self> {
        if other.times != self.times || other.segment_ids != self.segment_ids {
            return Err(TimeSeriesError::Shape("row layouts differ".into()));
        }
        let mut names = self.names.clone();
        names.extend(other.names.iter().cloned());
        let mut values = DMatrix::zeros(self.n_rows(), names.len());
        values.columns_mut(0, self.n_cols()).copy_from(&self.values);
        values
            .columns_mut(self.n_cols(), other.n_cols())
            .copy_from(&other.values);
        self.with_values(names, values)
    }

    /// Stacks tables with identical columns; segment ids of `other` are shifted past ours.
    pub fn concat(&self, other: &TimeSeriesTable<T>) -> Result<Self> {
        if other.names != self.names {
            return Err(TimeSeriesError::Shape("column names differ".into()));
        }
        let shift = self.segment_ids.iter().max().map_or(0, |m| m + 1)
            - other.segment_ids.iter().min().copied().unwrap_or(0);
        let mut times = self.times.clone();
        times.extend(other.times.iter().copied());
        let mut segs = self.segment_ids.clone();
        segs.extend(other.segment_ids.iter().map(|s| s + shift));
        let n = self.n_rows();
        let mut values = DMatrix::zeros(n + other.n_rows(), self.n_cols());
        values.rows_mut(0, n).copy_from(&self.values);
        values.rows_mut(n, other.n_rows()).copy_from(&other.values);
        Self::new(times, self.names.clone(), values, segs)
    }
}

/// Parses CSV text with a leading `t` column and an optional integer `segment` column.
pub fn load_table<T: Real, R: Read>(source: R) -> Result<TimeSeriesTable<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| TimeSeriesError::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(TimeSeriesError::Empty);
    }
    if headers[0] != "t" {
        return Err(TimeSeriesError::MissingTimeColumn(headers[0].clone()));
    }
    let mut seen = BTreeSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(TimeSeriesError::DuplicateName(h.clone()));
        }
    }
    let seg_col = headers.iter().position(|h| h == "segment");
    let state_cols: Vec<usize> = (1..headers.len()).filter(|&c| Some(c) != seg_col).collect();
    let names: Vec<String> = state_cols.iter().map(|&c| headers[c].clone()).collect();

    let mut times = Vec::new();
    let mut segs = Vec::new();
    let mut flat = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| TimeSeriesError::Csv(e.to_string()))?;
        if record.len() != headers.len() {
            return Err(TimeSeriesError::Csv(format!(
                "row {row} has {} fields, expected {}",
                record.len(),
                headers.len()
            )));
        }
        let parse = |c: usize| -> Result<T> {
            let cell = &record[c];
            let v: T = cell.parse().map_err(|_| TimeSeriesError::NonNumeric {
                row,
                column: headers[c].clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(TimeSeriesError::NonFinite {
                    row,
                    column: headers[c].clone(),
                });
            }
            Ok(v)
        };
        times.push(parse(0)?);
        if let Some(c) = seg_col {
            let cell = &record[c];
            segs.push(
                cell.parse::<i64>()
                    .map_err(|_| TimeSeriesError::NonNumeric {
                        row,
                        column: "segment".into(),
                        value: cell.to_string(),
                    })?,
            );
        } else {
            segs.push(0);
        }
        for &c in &state_cols {
            flat.push(parse(c)?);
        }
    }
    if times.is_empty() {
        return Err(TimeSeriesError::Empty);
    }
    let values = DMatrix::from_row_slice(times.len(), names.len(), &flat);
    TimeSeriesTable::new(times, names, values, segs)
}

/// Writes `t,segment,<names>` CSV using shortest round-trip decimal formatting.
pub fn write_table<T: Real, W: Write>(table: &TimeSeriesTable<T>, sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    let io = |e: csv::Error| TimeSeriesError::Csv(e.to_string());
    let mut header = vec!["t".to_string(), "segment".to_string()];
    header.extend(table.names.iter().cloned());
    writer.write_record(&header).map_err(io)?;
    for r in 0..table.n_rows() {
        let mut rec = Vec::with_capacity(header.len());
        rec.push(table.times[r].to_string());
        rec.push(table.segment_ids[r].to_string());
        for c in 0..table.n_cols() {
            rec.push(table.values[(r, c)].to_string());
        }
        writer.write_record(&rec).map_err(io)?;
    }
    writer
        .flush()
        .map_err(|e| TimeSeriesError::Csv(e.to_string()))?;
    Ok(())
}

/// Stable 64-bit FNV-1a hash of a column name, used to pick its random stream.
fn stream_of(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Sample standard deviation (n − 1 denominator).
pub fn sample_std<T: Real>(xs: impl ExactSizeIterator<Item = T> + Clone) -> T {
    let n = xs.len();
    if n < 2 {
        return T::zero();
    }
    let nf = T::lit(n as f64);
    let mean = xs.clone().fold(T::zero(), |a, x| a + x) / nf;
    let ss = xs.fold(T::zero(), |a, x| a + (x - mean) * (x - mean));
    (ss / (nf - T::one())).sqrt()
}

/// Standard normal draws for one column, keyed by (seed, column name).
pub fn column_normals<T: Real>(seed: u64, name: &str, n: usize) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_of(name));
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::lit(z)
        })
        .collect()
}

/// Adds `pct · σ_col · N(0,1)` to every column, σ taken over all segments.
pub fn inject_noise<T: Real>(
    table: &TimeSeriesTable<T>,
    pct: T,
    seed: u64,
) -> Result<TimeSeriesTable<T>> {
    if pct < T::zero() || !pct.is_finite() {
        return Err(TimeSeriesError::NegativeNoise(pct.as_f64()));
    }
    if pct == T::zero() {
        return Ok(table.clone());
    }
    let mut values = table.values.clone();
    for (c, name) in table.names.iter().enumerate() {
        let sigma = sample_std(table.values.column(c).iter().copied());
        let z = column_normals::<T>(seed, name, table.n_rows());
        for (r, zr) in z.into_iter().enumerate() {
            values[(r, c)] += pct * sigma * zr;
        }
    }
    table.with_values(table.names.clone(), values)
}

fn check_window(len: usize, window: usize, polyorder: usize) -> Result<()> {
    if window.is_multiple_of(2) {
        return Err(TimeSeriesError::EvenWindow(window));
    }
    if window <= polyorder {
        return Err(TimeSeriesError::WindowNotAbovePolyorder { window, polyorder });
    }
    if len < window {
        return Err(TimeSeriesError::SeriesTooShort { len, window });
    }
    Ok(())
}

/// Filter weights for every anchor position inside the window.
///
/// Row `a` holds the weights that evaluate the `deriv`-th derivative of the
/// local least-squares polynomial at window offset `a`.
fn savgol_weights<T: Real>(dt: T, window: usize, polyorder: usize, deriv: usize) -> DMatrix<T> {
    let half = (window - 1) / 2;
    let scale = T::lit(half.max(1) as f64);
    let mut fact = T::one();
    for k in 1..=deriv {
        fact *= T::lit(k as f64);
    }
    let step = (scale * dt).powi(deriv as i32);
    let mut weights = DMatrix::zeros(window, window);
    for a in 0..window {
        let vander = DMatrix::from_fn(window, polyorder + 1, |k, m| {
            ((T::lit(k as f64) - T::lit(a as f64)) / scale).powi(m as i32)
        });
        let pinv = vander
            .svd(true, true)
            .pseudo_inverse(T::eps())
            .expect("svd of a Vandermonde block");
        for k in 0..window {
            weights[(a, k)] = pinv[(deriv, k)] * fact / step;
        }
    }
    weights
}

fn savgol_apply<T: Real>(series: &[T], weights: &DMatrix<T>) -> Vec<T> {
    let window = weights.nrows();
    let half = (window - 1) / 2;
    let n = series.len();
    (0..n)
        .map(|i| {
            let start = i.saturating_sub(half).min(n - window);
            let a = i - start;
            (0..window).fold(T::zero(), |acc, k| {
                acc + weights[(a, k)] * series[start + k]
            })
        })
        .collect()
}

/// Savitzky-Golay smoothing; boundaries use the edge-anchored window evaluated off-centre.
pub fn smooth_savgol<T: Real>(
    series: &[T],
    dt: T,
    window: usize,
    polyorder: usize,
) -> Result<Vec<T>> {
    check_window(series.len(), window, polyorder)?;
    if !(dt > T::zero()) {
        return Err(TimeSeriesError::NonPositiveStep);
    }
    Ok(savgol_apply(
        series,
        &savgol_weights(dt, window, polyorder, 0),
    ))
}

/// Savitzky-Golay derivative of order 1 or 2.
pub fn estimate_derivative<T: Real>(
    series: &[T],
    dt: T,
    order: usize,
    window: usize,
    polyorder: usize,
) -> Result<Vec<T>> {
    if !(order == 1 || order == 2) {
        return Err(TimeSeriesError::UnsupportedOrder(order));
    }
    check_window(series.len(), window, polyorder)?;
    if polyorder < order {
        return Err(TimeSeriesError::PolyorderBelowOrder { polyorder, order });
    }
    if !(dt > T::zero()) {
        return Err(TimeSeriesError::NonPositiveStep);
    }
    Ok(savgol_apply(
        series,
        &savgol_weights(dt, window, polyorder, order),
    ))
}

/// Savitzky-Golay settings recorded alongside derived tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SavgolParams {
    pub window: usize,
    pub polyorder: usize,
}

/// Derivative estimates sharing the source table's rows and column names.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeTable<T: Real> {
    pub table: TimeSeriesTable<T>,
    pub order: usize,
    pub method: SavgolParams,
}

/// Uniform step of one segment, or `NonUniformGrid`.
pub fn segment_step<T: Real>(times: &[T], segment: i64) -> Result<T> {
    if times.len() < 2 {
        return Err(TimeSeriesError::SeriesTooShort {
            len: times.len(),
            window: 2,
        });
    }
    let n = times.len();
    let dt = (times[n - 1] - times[0]) / T::lit((n - 1) as f64);
    let tol = dt * T::lit(1e-6);
    for w in times.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > tol {
            return Err(TimeSeriesError::NonUniformGrid(segment));
        }
    }
    Ok(dt)
}

fn per_segment<T: Real>(
    table: &TimeSeriesTable<T>,
    params: SavgolParams,
    f: impl Fn(&[T], T) -> Result<Vec<T>>,
) -> Result<TimeSeriesTable<T>> {
    let mut values = DMatrix::zeros(table.n_rows(), table.n_cols());
    for (seg, rows) in table.segments() {
        let times = &table.times[rows.clone()];
        if times.len() < params.window {
            return Err(TimeSeriesError::SeriesTooShort {
                len: times.len(),
                window: params.window,
            });
        }
        let dt = segment_step(times, seg)?;
        for c in 0..table.n_cols() {
            let series: Vec<T> = table
                .values
                .column(c)
                .rows(rows.start, rows.len())
                .iter()
                .copied()
                .collect();
            let out = f(&series, dt)?;
            for (k, v) in out.into_iter().enumerate() {
                values[(rows.start + k, c)] = v;
            }
        }
    }
    table.with_values(table.names.clone(), values)
}

/// Smooths every column segment by segment.
pub fn smooth_table<T: Real>(
    table: &TimeSeriesTable<T>,
    params: SavgolParams,
) -> Result<TimeSeriesTable<T>> {
    per_segment(table, params, |s, dt| {
        smooth_savgol(s, dt, params.window, params.polyorder)
    })
}

/// Differentiates every column segment by segment.
pub fn derivative_table<T: Real>(
    table: &TimeSeriesTable<T>,
    order: usize,
    params: SavgolParams,
) -> Result<DerivativeTable<T>> {
    let out = per_segment(table, params, |s, dt| {
        estimate_derivative(s, dt, order, params.window, params.polyorder)
    })?;
    Ok(DerivativeTable {
        table: out,
        order,
        method: params,
    })
}

/// Per-column sample standard deviations keyed by name.
pub fn column_stds<T: Real>(table: &TimeSeriesTable<T>) -> BTreeMap<String, T> {
    table
        .names
        .iter()
        .enumerate()
        .map(|(c, n)| {
            (
                n.clone(),
                sample_std(table.values.column(c).iter().copied()),
            )
        })
        .collect()
}
