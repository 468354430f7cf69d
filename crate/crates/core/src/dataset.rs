//! Tabular datasets: ingestion, column statistics, splitting and standardization.

use std::collections::HashSet;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// A real-valued feature matrix with its regression target.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    target: Array1<f64>,
    feature_names: Vec<String>,
    target_name: String,
}

impl Dataset {
    /// Builds a dataset, checking shapes, name uniqueness and finiteness.
    pub fn new(
        features: Array2<f64>,
        target: Array1<f64>,
        feature_names: Vec<String>,
        target_name: impl Into<String>,
    ) -> Result<Self> {
        if features.nrows() != target.len() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                found: target.len(),
            });
        }
        if feature_names.len() != features.ncols() {
            return Err(Error::DimensionMismatch {
                expected: features.ncols(),
                found: feature_names.len(),
            });
        }
        let target_name = target_name.into();
        let mut seen = HashSet::new();
        for name in feature_names.iter().chain(std::iter::once(&target_name)) {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateColumn(name.clone()));
            }
        }
        if features.iter().chain(target.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset values must be finite"));
        }
        Ok(Dataset {
            features,
            target,
            feature_names,
            target_name,
        })
    }

    /// Builds a dataset with generated names `x1..xp` and target `y`.
    pub fn from_arrays(features: Array2<f64>, target: Array1<f64>) -> Result<Self> {
        let names = default_feature_names(features.ncols());
        Dataset::new(features, target, names, "y")
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn target(&self) -> &Array1<f64> {
        &self.target
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    /// Rows at `indices`, in that order. Indices may repeat.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), indices),
            target: self.target.select(Axis(0), indices),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
        }
    }

    /// Same features, different target. Used for teacher relabelling.
    pub fn with_target(&self, target: Array1<f64>) -> Result<Dataset> {
        Dataset::new(
            self.features.clone(),
            target,
            self.feature_names.clone(),
            self.target_name.clone(),
        )
    }

    /// Writes the dataset as CSV with the target as the last column.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Csv(e.to_string()))?;
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(&self.target_name);
        w.write_record(&header).map_err(|e| Error::Csv(e.to_string()))?;
        for (row, y) in self.features.rows().into_iter().zip(self.target.iter()) {
            let rec: Vec<String> = row.iter().chain(std::iter::once(y)).map(|v| v.to_string()).collect();
            w.write_record(&rec).map_err(|e| Error::Csv(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn default_feature_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    DropRow,
    Error,
}

/// Loads a numeric CSV file. Empty cells (and `NaN`) are missing; any other cell that is
/// not a finite number is rejected, which also rejects categorical columns.
pub fn load_csv(path: &Path, target_column: &str, policy: MissingPolicy) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|source| Error::DatasetFile {
        path: path.to_owned(),
        source,
    })?;
    load_csv_reader(file, target_column, policy)
}

pub fn load_csv_reader<R: std::io::Read>(reader: R, target_column: &str, policy: MissingPolicy) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let target_idx = header
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::MissingTargetColumn(target_column.to_owned()))?;
    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(h.as_str()) {
            return Err(Error::DuplicateColumn(h.clone()));
        }
    }

    let n_cols = header.len();
    let mut values: Vec<f64> = Vec::new();
    let mut target: Vec<f64> = Vec::new();
    let mut row_buf = vec![0.0; n_cols];
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        // Line number in the file, counting the header as line 1.
        let line = i + 2;
        let mut missing = false;
        for (c, cell) in record.iter().enumerate() {
            match parse_cell(cell) {
                Some(Ok(v)) => row_buf[c] = v,
                Some(Err(())) => {
                    return Err(Error::UnparseableCell {
                        row: line,
                        column: header[c].clone(),
                        value: cell.to_owned(),
                    })
                }
                None => {
                    if policy == MissingPolicy::Error {
                        return Err(Error::MissingValue {
                            row: line,
                            column: header[c].clone(),
                        });
                    }
                    missing = true;
                }
            }
        }
        if missing {
            continue;
        }
        for (c, &v) in row_buf.iter().enumerate() {
            if c == target_idx {
                target.push(v);
            } else {
                values.push(v);
            }
        }
    }
    if target.is_empty() {
        return Err(Error::NoRows);
    }
    let n_features = n_cols - 1;
    let features = Array2::from_shape_vec((target.len(), n_features), values).map_err(|e| Error::Csv(e.to_string()))?;
    let names = header
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    Dataset::new(features, Array1::from(target), names, target_column)
}

/// `None` for a missing cell, `Some(Err)` for a non-numeric one.
fn parse_cell(cell: &str) -> Option<std::result::Result<f64, ()>> {
    if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
        return None;
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Some(Ok(v)),
        _ => Some(Err(())),
    }
}

/// Per-column mean and sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl ColumnStats {
    pub fn n_features(&self) -> usize {
        self.means.len()
    }
}

/// Two-pass column statistics with the n-1 denominator (std is 0 for a single row).
pub fn compute_column_stats(data: &Dataset) -> Result<ColumnStats> {
    if data.is_empty() {
        return Err(Error::NoRows);
    }
    let (means, stds) = column_mean_std(data.features().view());
    Ok(ColumnStats { means, stds })
}

pub(crate) fn column_mean_std(x: ArrayView2<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows();
    let mut means = Vec::with_capacity(x.ncols());
    let mut stds = Vec::with_capacity(x.ncols());
    for col in x.columns() {
        let mean = col.sum() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
            (ss / (n - 1) as f64).sqrt()
        };
        means.push(mean);
        stds.push(std);
    }
    (means, stds)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn new(test_fraction: f64, seed: u64) -> Self {
        SplitSpec { test_fraction, seed }
    }

    /// Test-partition size for `n` rows: round half up, clamped to `[1, n-1]`.
    pub fn test_size(&self, n: usize) -> usize {
        let raw = (self.test_fraction * n as f64 + 0.5).floor() as usize;
        raw.clamp(1, n.saturating_sub(1).max(1))
    }
}

/// Seeded random train/test partition.
pub fn split(data: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let (train_idx, test_idx) = split_indices(data.n_rows(), spec)?;
    Ok((data.select_rows(&train_idx), data.select_rows(&test_idx)))
}

/// Index form of [`split`]: `(train, test)`.
pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test_fraction must lie in (0, 1), got {}",
            spec.test_fraction
        )));
    }
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, found: n });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from_seed(spec.seed));
    let n_test = spec.test_size(n);
    let train = perm.split_off(n_test);
    Ok((train, perm))
}

/// `n` distinct rows chosen uniformly without replacement.
pub fn subsample(data: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    Ok(data.select_rows(&subsample_indices(data.n_rows(), n, seed)?))
}

pub fn subsample_indices(n_rows: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::invalid("subsample size must be positive"));
    }
    if n > n_rows {
        return Err(Error::TooFewRows {
            needed: n,
            found: n_rows,
        });
    }
    let mut rng = rng_from_seed(seed);
    Ok(rand::seq::index::sample(&mut rng, n_rows, n).into_vec())
}

/// Per-feature affine standardization fitted on training data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    params: Option<(Vec<f64>, Vec<f64>)>,
}

impl Standardizer {
    pub fn is_fitted(&self) -> bool {
        self.params.is_some()
    }

    pub fn shift(&self) -> Option<&[f64]> {
        self.params.as_ref().map(|(s, _)| s.as_slice())
    }

    pub fn scale(&self) -> Option<&[f64]> {
        self.params.as_ref().map(|(_, s)| s.as_slice())
    }

    pub fn fit_matrix(x: ArrayView2<f64>) -> Result<Standardizer> {
        if x.nrows() == 0 {
            return Err(Error::NoRows);
        }
        let (means, stds) = column_mean_std(x);
        let scale = stds.into_iter().map(|s| if s > 0.0 { s } else { 1.0 }).collect();
        Ok(Standardizer {
            params: Some((means, scale)),
        })
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let (shift, scale) = self.checked(x.ncols())?;
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(shift).zip(scale) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn inverse_transform(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        let (shift, scale) = self.checked(z.ncols())?;
        let mut out = z.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(shift).zip(scale) {
                *v = *v * s + m;
            }
        }
        Ok(out)
    }

    fn checked(&self, n_cols: usize) -> Result<(&[f64], &[f64])> {
        let (shift, scale) = self.params.as_ref().ok_or(Error::NotFitted)?;
        if shift.len() != n_cols {
            return Err(Error::DimensionMismatch {
                expected: shift.len(),
                found: n_cols,
            });
        }
        Ok((shift, scale))
    }
}

pub fn fit_standardizer(train: &Dataset) -> Result<Standardizer> {
    Standardizer::fit_matrix(train.features().view())
}

/// Standardizes the features of `data`; the target is left unchanged.
pub fn apply_standardizer(s: &Standardizer, data: &Dataset) -> Result<Dataset> {
    let features = s.transform(data.features().view())?;
    Dataset::new(
        features,
        data.target().clone(),
        data.feature_names().to_vec(),
        data.target_name(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn csv(text: &str, target: &str, policy: MissingPolicy) -> Result<Dataset> {
        load_csv_reader(text.as_bytes(), target, policy)
    }

    #[test]
    fn loads_simple_csv() {
        let d = csv("a,b,y\n1,2,3\n4,5,6\n", "y", MissingPolicy::DropRow).unwrap();
        assert_eq!(d.n_rows(), 2);
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.target(), &array![3.0, 6.0]);
        assert_eq!(d.features(), &array![[1.0, 2.0], [4.0, 5.0]]);
        assert_eq!(d.feature_names(), ["a", "b"]);
    }

    #[test]
    fn target_may_be_any_column() {
        let d = csv("y,a\n3,1\n6,4\n", "y", MissingPolicy::DropRow).unwrap();
        assert_eq!(d.target(), &array![3.0, 6.0]);
        assert_eq!(d.features(), &array![[1.0], [4.0]]);
    }

    #[test]
    fn drop_row_skips_incomplete_rows() {
        let d = csv("a,b,y\n1,2,3\n4,5,6\n7,,9\n", "y", MissingPolicy::DropRow).unwrap();
        assert_eq!(d.n_rows(), 2);
        assert_eq!(d.target(), &array![3.0, 6.0]);
    }

    #[test]
    fn error_policy_rejects_missing() {
        let e = csv("a,b,y\n1,2,3\n7,,9\n", "y", MissingPolicy::Error).unwrap_err();
        assert!(matches!(e, Error::MissingValue { row: 3, .. }), "{e}");
    }

    #[test]
    fn missing_target_column() {
        let e = csv("a,b,y\n1,2,3\n", "z", MissingPolicy::DropRow).unwrap_err();
        assert!(matches!(e, Error::MissingTargetColumn(ref c) if c == "z"));
    }

    #[test]
    fn categorical_column_rejected() {
        let e = csv("a,b,y\n1,red,3\n", "y", MissingPolicy::DropRow).unwrap_err();
        assert!(matches!(e, Error::UnparseableCell { .. }));
    }

    #[test]
    fn all_rows_dropped_is_an_error() {
        let e = csv("a,y\n,1\n2,\n", "y", MissingPolicy::DropRow).unwrap_err();
        assert!(matches!(e, Error::NoRows));
    }

    #[test]
    fn missing_file() {
        let e = load_csv(Path::new("/nonexistent/data.csv"), "y", MissingPolicy::DropRow).unwrap_err();
        assert!(matches!(e, Error::DatasetFile { .. }) && e.is_data_error());
    }

    #[test]
    fn column_stats_examples() {
        let d = Dataset::from_arrays(
            array![[5.0, 1.0], [5.0, 2.0], [5.0, 3.0], [5.0, 4.0]],
            array![0.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let s = compute_column_stats(&d).unwrap();
        assert_eq!(s.means, vec![5.0, 2.5]);
        assert_eq!(s.stds[0], 0.0);
        assert!((s.stds[1] - 1.290_994_448_735_805_6).abs() < 1e-15);

        let one = Dataset::from_arrays(array![[7.0]], array![1.0]).unwrap();
        let s = compute_column_stats(&one).unwrap();
        assert_eq!((s.means[0], s.stds[0]), (7.0, 0.0));
    }

    #[test]
    fn split_sizes() {
        assert_eq!(SplitSpec::new(0.2, 0).test_size(10), 2);
        assert_eq!(SplitSpec::new(0.2, 0).test_size(5), 1);
        assert_eq!(SplitSpec::new(0.25, 0).test_size(2), 1);
        assert_eq!(SplitSpec::new(0.01, 0).test_size(10), 1);
        assert_eq!(SplitSpec::new(0.99, 0).test_size(10), 9);

        let d = Dataset::from_arrays(Array2::zeros((10, 1)), Array1::range(0.0, 10.0, 1.0)).unwrap();
        let (tr, te) = split(&d, &SplitSpec::new(0.2, 3)).unwrap();
        assert_eq!((tr.n_rows(), te.n_rows()), (8, 2));
        let (tr2, te2) = split(&d, &SplitSpec::new(0.2, 3)).unwrap();
        assert_eq!(tr, tr2);
        assert_eq!(te, te2);
        assert!(split_indices(1, &SplitSpec::default()).is_err());
        assert!(split_indices(10, &SplitSpec::new(1.0, 0)).is_err());
    }

    #[test]
    fn subsample_examples() {
        let idx = subsample_indices(10, 10, 4).unwrap();
        let mut sorted = idx.clone();
        sorted.sort();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
        assert_eq!(subsample_indices(10, 1, 4).unwrap().len(), 1);
        let a = subsample_indices(1000, 100, 1).unwrap();
        let b = subsample_indices(1000, 100, 2).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, subsample_indices(1000, 100, 1).unwrap());
        assert!(matches!(subsample_indices(10, 11, 0), Err(Error::TooFewRows { .. })));
    }

    #[test]
    fn standardizer_examples() {
        let d = Dataset::from_arrays(array![[1.0, 4.0], [2.0, 4.0], [3.0, 4.0]], array![0.0, 0.0, 0.0]).unwrap();
        let s = fit_standardizer(&d).unwrap();
        let z = apply_standardizer(&s, &d).unwrap();
        assert_eq!(z.features().column(0).to_vec(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(z.features().column(1).to_vec(), vec![0.0, 0.0, 0.0]);

        let unfitted = Standardizer::default();
        assert!(matches!(apply_standardizer(&unfitted, &d), Err(Error::NotFitted)));
        let narrow = Dataset::from_arrays(array![[1.0]], array![0.0]).unwrap();
        assert!(matches!(
            apply_standardizer(&s, &narrow),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_bad_shapes_and_names() {
        assert!(Dataset::from_arrays(Array2::zeros((2, 1)), array![1.0]).is_err());
        assert!(Dataset::new(Array2::zeros((1, 2)), array![1.0], vec!["a".into(), "a".into()], "y").is_err());
        assert!(Dataset::from_arrays(array![[f64::NAN]], array![1.0]).is_err());
    }
}
