//! CSV ingestion, z-score normalization, sliding windows and chronological
//! splits for ETT-style multivariate series.

use std::cmp::Ordering;
use std::io::Read;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}, column {column}: cannot parse {value:?} as a number")]
    Parse {
        row: usize,
        column: usize,
        value: String,
    },
    #[error("row {row}, column {column}: missing value")]
    Missing { row: usize, column: usize },
    #[error("row {row}, column {column}: non-finite value {value}")]
    NonFinite {
        row: usize,
        column: usize,
        value: String,
    },
    #[error("row {row}: expected {expected} columns, found {found}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("need at least 2 columns (time label + one variable), found {0}")]
    TooFewColumns(usize),
    #[error("row {row}: timestamp {current:?} does not follow {previous:?}")]
    TimestampOrder {
        row: usize,
        previous: String,
        current: String,
    },
    #[error("series has no rows")]
    EmptySeries,
    #[error("invalid span {start}..{end} for a series of {len} rows")]
    InvalidSpan { start: usize, end: usize, len: usize },
    #[error("normalization span needs at least 2 rows, got {0}")]
    SpanTooShort(usize),
    #[error("window parameters must be positive (input {input}, horizon {horizon}, stride {stride})")]
    InvalidWindow {
        input: usize,
        horizon: usize,
        stride: usize,
    },
    #[error("series of {rows} rows is shorter than input + horizon = {needed}")]
    EmptyDataset { rows: usize, needed: usize },
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    InvalidRatios([f64; 3]),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Timestamped `T × N` observation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RawSeries<T> {
    pub timestamps: Vec<String>,
    pub values: Matrix<T>,
    pub variable_names: Vec<String>,
}

impl<T: Scalar> RawSeries<T> {
    /// Builds a series, checking shape, finiteness and timestamp order.
    pub fn new(
        timestamps: Vec<String>,
        values: Matrix<T>,
        variable_names: Vec<String>,
    ) -> Result<Self, DataError> {
        if timestamps.len() != values.rows() {
            return Err(DataError::Dimension(format!(
                "{} timestamps for {} rows",
                timestamps.len(),
                values.rows()
            )));
        }
        if variable_names.len() != values.cols() {
            return Err(DataError::Dimension(format!(
                "{} names for {} columns",
                variable_names.len(),
                values.cols()
            )));
        }
        for r in 0..values.rows() {
            for (c, v) in values.row(r).iter().enumerate() {
                if !v.is_finite() {
                    return Err(DataError::NonFinite {
                        row: r,
                        column: c + 1,
                        value: v.to_string(),
                    });
                }
            }
        }
        for (r, pair) in timestamps.windows(2).enumerate() {
            if compare_labels(&pair[0], &pair[1]) != Ordering::Less {
                return Err(DataError::TimestampOrder {
                    row: r + 1,
                    previous: pair[0].clone(),
                    current: pair[1].clone(),
                });
            }
        }
        Ok(Self {
            timestamps,
            values,
            variable_names,
        })
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn n_vars(&self) -> usize {
        self.values.cols()
    }

    fn with_values(&self, values: Matrix<T>) -> Self {
        Self {
            timestamps: self.timestamps.clone(),
            values,
            variable_names: self.variable_names.clone(),
        }
    }
}

/// Orders time labels numerically when both parse as numbers, otherwise
/// lexicographically (ISO dates sort correctly as text).
fn compare_labels(a: &str, b: &str) -> Ordering {
    match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
        (Ok(x), Ok(y)) => x.partial_cmp(&y).unwrap_or(Ordering::Equal),
        _ => a.cmp(b),
    }
}

/// Loads a CSV whose first column is a time label and whose remaining
/// columns are numeric variables.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>, has_header: bool) -> Result<RawSeries<T>, DataError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, has_header)
}

/// Same as [`load_csv`] over any reader. Row numbers in errors are 1-based
/// file lines; column numbers are 0-based with the time label at 0.
pub fn read_csv<T: Scalar, R: Read>(reader: R, has_header: bool) -> Result<RawSeries<T>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();

    let mut variable_names = None;
    let mut first_line = 1;
    if has_header {
        match records.next() {
            Some(rec) => {
                let rec = rec?;
                if rec.len() < 2 {
                    return Err(DataError::TooFewColumns(rec.len()));
                }
                variable_names = Some(rec.iter().skip(1).map(str::to_string).collect::<Vec<_>>());
                first_line = 2;
            }
            None => return Err(DataError::EmptySeries),
        }
    }

    let mut width = variable_names.as_ref().map(|v: &Vec<String>| v.len() + 1);
    let mut timestamps = Vec::new();
    let mut data = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        let line = first_line + i;
        if rec.len() == 1 && rec.get(0).is_some_and(str::is_empty) {
            continue;
        }
        let expected = *width.get_or_insert(rec.len());
        if expected < 2 {
            return Err(DataError::TooFewColumns(expected));
        }
        if rec.len() != expected {
            return Err(DataError::Ragged {
                row: line,
                expected,
                found: rec.len(),
            });
        }
        timestamps.push(rec[0].to_string());
        for (c, cell) in rec.iter().enumerate().skip(1) {
            if cell.is_empty() {
                return Err(DataError::Missing { row: line, column: c });
            }
            let v: f64 = cell.parse().map_err(|_| DataError::Parse {
                row: line,
                column: c,
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    row: line,
                    column: c,
                    value: cell.to_string(),
                });
            }
            data.push(T::lit(v));
        }
    }
    if timestamps.is_empty() {
        return Err(DataError::EmptySeries);
    }
    let n = width.unwrap_or(0) - 1;
    let names = variable_names.unwrap_or_else(|| (0..n).map(|i| format!("var{i}")).collect());
    let values = Matrix::from_vec(timestamps.len(), n, data);
    RawSeries::new(timestamps, values, names)
}

/// Per-variable z-score parameters fitted on the training span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct NormalizationStats<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
    /// Columns whose sample std was zero and got replaced by 1.
    #[serde(default)]
    pub degenerate: Vec<usize>,
}

/// Mean and sample std (divisor `n − 1`) per variable over `train_span`.
/// Zero-variance columns get std 1 and a warning.
pub fn fit_normalization<T: Scalar>(
    series: &RawSeries<T>,
    train_span: Range<usize>,
) -> Result<NormalizationStats<T>, DataError> {
    if train_span.start >= train_span.end || train_span.end > series.len() {
        return Err(DataError::InvalidSpan {
            start: train_span.start,
            end: train_span.end,
            len: series.len(),
        });
    }
    let n = train_span.len();
    if n < 2 {
        return Err(DataError::SpanTooShort(n));
    }
    let nf = T::from_usize_lossy(n);
    let vars = series.n_vars();
    let mut mean = vec![T::zero(); vars];
    for r in train_span.clone() {
        for (m, &v) in mean.iter_mut().zip(series.values.row(r)) {
            *m = *m + v;
        }
    }
    for m in &mut mean {
        *m = *m / nf;
    }
    let mut ss = vec![T::zero(); vars];
    for r in train_span.clone() {
        for ((s, &v), &m) in ss.iter_mut().zip(series.values.row(r)).zip(&mean) {
            *s = *s + (v - m) * (v - m);
        }
    }
    // rounding in the mean can leave a tiny spread on a constant column, so
    // constancy is checked on the values themselves
    let first = series.values.row(train_span.start).to_vec();
    let constant: Vec<bool> = (0..vars)
        .map(|c| train_span.clone().all(|r| series.values[(r, c)] == first[c]))
        .collect();
    let mut degenerate = Vec::new();
    let std = ss
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let sd = (s / (nf - T::one())).sqrt();
            if sd > T::zero() && !constant[i] {
                sd
            } else {
                log::warn!(
                    "variable {:?} is constant over the training span; using std = 1",
                    series.variable_names.get(i).map_or("?", String::as_str)
                );
                degenerate.push(i);
                T::one()
            }
        })
        .collect();
    Ok(NormalizationStats {
        mean,
        std,
        degenerate,
    })
}

impl<T: Scalar> NormalizationStats<T> {
    fn check(&self, series: &RawSeries<T>) -> Result<(), DataError> {
        if series.n_vars() != self.mean.len() {
            return Err(DataError::Dimension(format!(
                "stats for {} variables, series has {}",
                self.mean.len(),
                series.n_vars()
            )));
        }
        Ok(())
    }

    pub fn normalize(&self, series: &RawSeries<T>) -> Result<RawSeries<T>, DataError> {
        self.check(series)?;
        let mut values = series.values.clone();
        for r in 0..values.rows() {
            for ((v, &m), &s) in values.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        Ok(series.with_values(values))
    }

    pub fn denormalize(&self, series: &RawSeries<T>) -> Result<RawSeries<T>, DataError> {
        self.check(series)?;
        let mut values = series.values.clone();
        self.denormalize_matrix(&mut values);
        Ok(series.with_values(values))
    }

    /// In-place inverse transform of any matrix with one column per variable.
    pub fn denormalize_matrix(&self, values: &mut Matrix<T>) {
        for r in 0..values.rows() {
            for ((v, &m), &s) in values.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
    }

    pub fn normalize_matrix(&self, values: &mut Matrix<T>) {
        for r in 0..values.rows() {
            for ((v, &m), &s) in values.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
    }
}

/// Supervised example: `input` rows immediately precede `target` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct WindowPair<T> {
    pub input: Matrix<T>,
    pub target: Matrix<T>,
    pub origin_index: usize,
}

impl<T: Scalar> WindowPair<T> {
    /// Row-major flattening of the input window (`L·N` values).
    pub fn flat_input(&self) -> &[T] {
        self.input.as_slice()
    }

    pub fn flat_target(&self) -> &[T] {
        self.target.as_slice()
    }
}

/// Look-back, horizon and stride of a windowing pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub input_len: usize,
    pub horizon: usize,
    pub stride: usize,
}

impl WindowSpec {
    pub fn new(input_len: usize, horizon: usize, stride: usize) -> Self {
        Self {
            input_len,
            horizon,
            stride,
        }
    }

    pub fn span(&self) -> usize {
        self.input_len + self.horizon
    }

    /// Number of windows over `rows` rows, checking the parameters.
    pub fn count(&self, rows: usize) -> Result<usize, DataError> {
        if self.input_len == 0 || self.horizon == 0 || self.stride == 0 {
            return Err(DataError::InvalidWindow {
                input: self.input_len,
                horizon: self.horizon,
                stride: self.stride,
            });
        }
        if rows < self.span() {
            return Err(DataError::EmptyDataset {
                rows,
                needed: self.span(),
            });
        }
        Ok((rows - self.span()) / self.stride + 1)
    }
}

/// Sliding windows at origins `0, stride, 2·stride, …`.
pub fn make_windows<T: Scalar>(
    series: &RawSeries<T>,
    input_len: usize,
    horizon: usize,
    stride: usize,
) -> Result<Vec<WindowPair<T>>, DataError> {
    let spec = WindowSpec::new(input_len, horizon, stride);
    let count = spec.count(series.len())?;
    Ok((0..count)
        .map(|k| {
            let origin = k * stride;
            WindowPair {
                input: series.values.slice_rows(origin, origin + input_len),
                target: series
                    .values
                    .slice_rows(origin + input_len, origin + input_len + horizon),
                origin_index: origin,
            }
        })
        .collect())
}

/// Chronological train / validation / test partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DatasetSplit<T> {
    pub train: Vec<WindowPair<T>>,
    pub validation: Vec<WindowPair<T>>,
    pub test: Vec<WindowPair<T>>,
    pub norm_stats: NormalizationStats<T>,
}

/// Window counts per split: validation and test get `floor(ratio · total)`,
/// train takes the remainder.
pub fn split_counts(total: usize, ratios: [f64; 3]) -> Result<[usize; 3], DataError> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(DataError::InvalidRatios(ratios));
    }
    // the small nudge keeps e.g. 0.1 * 1000 from flooring to 99
    let take = |r: f64| ((r * total as f64) + 1e-9).floor() as usize;
    let val = take(ratios[1]);
    let test = take(ratios[2]);
    let train = total.saturating_sub(val + test);
    for (name, n) in [("train", train), ("validation", val), ("test", test)] {
        if n == 0 {
            return Err(DataError::EmptySplit(name));
        }
    }
    Ok([train, val, test])
}

/// Partitions windows (sorted by origin) chronologically.
pub fn split_dataset<T: Scalar>(
    mut windows: Vec<WindowPair<T>>,
    ratios: [f64; 3],
    norm_stats: NormalizationStats<T>,
) -> Result<DatasetSplit<T>, DataError> {
    windows.sort_by_key(|w| w.origin_index);
    let [train, val, _] = split_counts(windows.len(), ratios)?;
    let test = windows.split_off(train + val);
    let validation = windows.split_off(train);
    Ok(DatasetSplit {
        train: windows,
        validation,
        test,
        norm_stats,
    })
}

/// Origin ranges and the raw-row span used for normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitLayout {
    pub window: WindowSpec,
    pub counts: [usize; 3],
    /// Raw rows touched by any training window (inputs and targets).
    pub train_rows: Range<usize>,
}

impl SplitLayout {
    pub fn plan(rows: usize, window: WindowSpec, ratios: [f64; 3]) -> Result<Self, DataError> {
        let total = window.count(rows)?;
        let counts = split_counts(total, ratios)?;
        let last_train_origin = (counts[0] - 1) * window.stride;
        Ok(Self {
            window,
            counts,
            train_rows: 0..last_train_origin + window.span(),
        })
    }
}

/// Fits normalization on the training rows of the raw series, normalizes the
/// whole series, windows it and splits chronologically.
pub fn prepare_split<T: Scalar>(
    series: &RawSeries<T>,
    window: WindowSpec,
    ratios: [f64; 3],
) -> Result<(DatasetSplit<T>, SplitLayout), DataError> {
    let layout = SplitLayout::plan(series.len(), window, ratios)?;
    let stats = fit_normalization(series, layout.train_rows.clone())?;
    let normalized = stats.normalize(series)?;
    let windows = make_windows(&normalized, window.input_len, window.horizon, window.stride)?;
    let split = split_dataset(windows, ratios, stats)?;
    Ok((split, layout))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series_from(cols: &[Vec<f64>]) -> RawSeries<f64> {
        let t = cols[0].len();
        let mut data = Vec::new();
        for r in 0..t {
            for c in cols {
                data.push(c[r]);
            }
        }
        RawSeries::new(
            (0..t).map(|i| i.to_string()).collect(),
            Matrix::from_vec(t, cols.len(), data),
            (0..cols.len()).map(|i| format!("v{i}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn loads_small_file() {
        let text = "date,a,b\n2020-01-01,1,2\n2020-01-02,3,4\n2020-01-03,5,6\n2020-01-04,7,8\n";
        let s: RawSeries<f64> = read_csv(text.as_bytes(), true).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s.n_vars(), 2);
        assert_eq!(s.variable_names, vec!["a", "b"]);
        assert_eq!(s.values[(3, 1)], 8.0);
    }

    #[test]
    fn reports_bad_cell_position() {
        let text = "date,a,b\n1,1,2\n2,abc,4\n";
        let err = read_csv::<f64, _>(text.as_bytes(), true).unwrap_err();
        match err {
            DataError::Parse { row, column, value } => {
                assert_eq!((row, column), (3, 1));
                assert_eq!(value, "abc");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_missing_nonfinite_and_narrow_files() {
        assert!(matches!(
            read_csv::<f64, _>("t,a\n1,\n".as_bytes(), true),
            Err(DataError::Missing { row: 2, column: 1 })
        ));
        assert!(matches!(
            read_csv::<f64, _>("t,a\n1,NaN\n".as_bytes(), true),
            Err(DataError::NonFinite { .. })
        ));
        assert!(matches!(
            read_csv::<f64, _>("1\n2\n".as_bytes(), false),
            Err(DataError::TooFewColumns(1))
        ));
        assert!(matches!(
            read_csv::<f64, _>("t,a\n2,1\n1,1\n".as_bytes(), true),
            Err(DataError::TimestampOrder { .. })
        ));
    }

    #[test]
    fn numeric_labels_order_numerically() {
        let text = "9,1\n10,2\n11,3\n";
        let s: RawSeries<f64> = read_csv(text.as_bytes(), false).unwrap();
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn two_point_normalization() {
        let s = series_from(&[vec![1.0, 3.0]]);
        let st = fit_normalization(&s, 0..2).unwrap();
        assert_eq!(st.mean, vec![2.0]);
        assert!((st.std[0] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_column_gets_unit_std() {
        let s = series_from(&[vec![5.0; 4], vec![1.0, 2.0, 3.0, 4.0]]);
        let st = fit_normalization(&s, 0..4).unwrap();
        assert_eq!(st.std[0], 1.0);
        assert_eq!(st.degenerate, vec![0]);
        let n = st.normalize(&s).unwrap();
        assert!(n.values.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalization_span_errors() {
        let s = series_from(&[vec![1.0, 2.0, 3.0]]);
        assert!(matches!(fit_normalization(&s, 1..1), Err(DataError::InvalidSpan { .. })));
        assert!(matches!(fit_normalization(&s, 0..1), Err(DataError::SpanTooShort(1))));
        assert!(matches!(fit_normalization(&s, 0..4), Err(DataError::InvalidSpan { .. })));
    }

    #[test]
    fn window_counts() {
        let s = series_from(&[(0..5).map(f64::from).collect()]);
        let w = make_windows(&s, 2, 1, 1).unwrap();
        assert_eq!(w.iter().map(|w| w.origin_index).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(w[1].input.as_slice(), &[1.0, 2.0]);
        assert_eq!(w[1].target.as_slice(), &[3.0]);
        assert!(matches!(
            make_windows(&s, 3, 3, 1),
            Err(DataError::EmptyDataset { rows: 5, needed: 6 })
        ));
        assert!(matches!(make_windows(&s, 0, 1, 1), Err(DataError::InvalidWindow { .. })));
    }

    #[test]
    fn long_series_window_count_matches_loop() {
        let s = series_from(&[(0..300).map(f64::from).collect()]);
        let mut expected = 0;
        let mut origin = 0;
        while origin + 96 + 96 <= 300 {
            expected += 1;
            origin += 1;
        }
        assert_eq!(expected, 109);
        assert_eq!(make_windows(&s, 96, 96, 1).unwrap().len(), expected);
        // stride > 1 against the same loop
        let mut strided = 0;
        let mut o = 0;
        while o + 10 + 5 <= 300 {
            strided += 1;
            o += 7;
        }
        assert_eq!(make_windows(&s, 10, 5, 7).unwrap().len(), strided);
    }

    fn dummy_windows(n: usize) -> Vec<WindowPair<f64>> {
        (0..n)
            .map(|i| WindowPair {
                input: Matrix::zeros(1, 1),
                target: Matrix::zeros(1, 1),
                origin_index: i,
            })
            .collect()
    }

    fn stats() -> NormalizationStats<f64> {
        NormalizationStats {
            mean: vec![0.0],
            std: vec![1.0],
            degenerate: vec![],
        }
    }

    #[test]
    fn split_sizes_and_order() {
        let s = split_dataset(dummy_windows(10), [0.6, 0.2, 0.2], stats()).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (6, 2, 2));

        let s = split_dataset(dummy_windows(1000), [0.7, 0.1, 0.2], stats()).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (700, 100, 200));
        let max_train = s.train.iter().map(|w| w.origin_index).max().unwrap();
        let min_val = s.validation.iter().map(|w| w.origin_index).min().unwrap();
        let max_val = s.validation.iter().map(|w| w.origin_index).max().unwrap();
        let min_test = s.test.iter().map(|w| w.origin_index).min().unwrap();
        assert!(max_train < min_val && max_val < min_test);
    }

    #[test]
    fn split_errors() {
        assert!(matches!(
            split_dataset(dummy_windows(10), [0.5, 0.5, 0.0], stats()),
            Err(DataError::EmptySplit("test"))
        ));
        assert!(matches!(
            split_dataset(dummy_windows(10), [0.5, 0.4, 0.2], stats()),
            Err(DataError::InvalidRatios(_))
        ));
    }

    #[test]
    fn prepare_fits_on_train_rows_only() {
        let col: Vec<f64> = (0..40).map(|i| (i * i) as f64).collect();
        let s = series_from(std::slice::from_ref(&col));
        let (split, layout) = prepare_split(&s, WindowSpec::new(4, 2, 1), [0.6, 0.2, 0.2]).unwrap();
        // 35 windows: val 7, test 7, train 21 -> rows 0..(20 + 6)
        assert_eq!(layout.counts, [21, 7, 7]);
        assert_eq!(layout.train_rows, 0..26);
        let direct = fit_normalization(&s, 0..26).unwrap();
        assert_eq!(split.norm_stats, direct);
        let w = &split.test[0];
        let raw = col[w.origin_index];
        assert!((w.input[(0, 0)] - (raw - direct.mean[0]) / direct.std[0]).abs() < 1e-12);
    }
}
