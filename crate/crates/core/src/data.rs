//! Datasets, train/test splitting, feature standardization and CSV I/O.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_same_len, CairoError, Result};
use crate::matrix::Matrix;
use crate::rng::SeededRng;

/// Reserved CSV column holding the response.
pub const TARGET_COLUMN: &str = "__target";
/// Reserved CSV column holding the known conditional mean of synthetic data.
pub const TRUE_MEAN_COLUMN: &str = "__true_mean";

/// Feature matrix, response vector and (for simulated data) the true
/// conditional mean `E[Y | X = x_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    targets: Vec<f64>,
    true_mean: Option<Vec<f64>>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        targets: Vec<f64>,
        true_mean: Option<Vec<f64>>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n = features.rows();
        if n < 2 {
            return Err(CairoError::TooFewRows(n));
        }
        ensure_same_len(n, targets.len())?;
        if let Some(m) = &true_mean {
            ensure_same_len(n, m.len())?;
            ensure_finite(m, "true mean")?;
        }
        ensure_same_len(features.cols(), feature_names.len())?;
        ensure_finite(features.as_slice(), "features")?;
        ensure_finite(&targets, "targets")?;
        Ok(Self {
            features,
            targets,
            true_mean,
            feature_names,
        })
    }

    /// Dataset with generated feature names `x1..xd`.
    pub fn unnamed(
        features: Matrix,
        targets: Vec<f64>,
        true_mean: Option<Vec<f64>>,
    ) -> Result<Self> {
        let names = (1..=features.cols()).map(|j| format!("x{j}")).collect();
        Self::new(features, targets, true_mean, names)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn true_mean(&self) -> Option<&[f64]> {
        self.true_mean.as_deref()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Rows at `indices`, in that order. Skips the n >= 2 check so callers
    /// can form minibatches.
    pub(crate) fn subset_unchecked(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            true_mean: self
                .true_mean
                .as_ref()
                .map(|m| indices.iter().map(|&i| m[i]).collect()),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.len() < 2 {
            return Err(CairoError::TooFewRows(indices.len()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(CairoError::InvalidParameter(format!(
                "row index {bad} out of range for {} rows",
                self.len()
            )));
        }
        Ok(self.subset_unchecked(indices))
    }

    pub(crate) fn with_features(&self, features: Matrix) -> Self {
        Self {
            features,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Self {
        Self {
            train_fraction,
            seed,
        }
    }

    /// Train and test sizes for `n` rows: `floor(fraction * n)` and the rest.
    pub fn sizes(&self, n: usize) -> Result<(usize, usize)> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(CairoError::InvalidParameter(format!(
                "train fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        let train = (self.train_fraction * n as f64).floor() as usize;
        let test = n - train.min(n);
        if train < 1 || test < 1 {
            return Err(CairoError::DegenerateSplit { n, train, test });
        }
        Ok((train, test))
    }

    /// Sorted train and test row indices.
    pub fn indices(&self, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        let (train, _) = self.sizes(n)?;
        let mut order: Vec<usize> = (0..n).collect();
        SeededRng::new(self.seed).shuffle(&mut order);
        let mut test_idx = order.split_off(train);
        order.sort_unstable();
        test_idx.sort_unstable();
        Ok((order, test_idx))
    }
}

/// Random train/test partition. Both parts keep the original row order.
/// Parts may have a single row, so they bypass the `n >= 2` dataset check.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    let (train, test) = spec.indices(ds.len())?;
    Ok((ds.subset_unchecked(&train), ds.subset_unchecked(&test)))
}

/// Per-column affine standardization fitted on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

impl Standardizer {
    /// Column means and population standard deviations. A constant column
    /// gets stddev 1, so it standardizes to all zeros.
    pub fn fit(features: &Matrix) -> Self {
        let n = features.rows() as f64;
        let d = features.cols();
        let mut mean = vec![0.0; d];
        for i in 0..features.rows() {
            for (m, x) in mean.iter_mut().zip(features.row(i)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for i in 0..features.rows() {
            for ((v, x), m) in var.iter_mut().zip(features.row(i)).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let stddev = var
            .into_iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, stddev }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, features: &Matrix) -> Result<Matrix> {
        self.check(features)?;
        let mut out = features.clone();
        for i in 0..out.rows() {
            for ((x, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.stddev) {
                *x = (*x - m) / s;
            }
        }
        Ok(out)
    }

    pub fn inverse_transform(&self, features: &Matrix) -> Result<Matrix> {
        self.check(features)?;
        let mut out = features.clone();
        for i in 0..out.rows() {
            for ((x, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.stddev) {
                *x = *x * s + m;
            }
        }
        Ok(out)
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        Ok(ds.with_features(self.transform(ds.features())?))
    }

    fn check(&self, features: &Matrix) -> Result<()> {
        if features.cols() != self.dim() {
            return Err(CairoError::ShapeMismatch(format!(
                "standardizer fitted on {} columns, got {}",
                self.dim(),
                features.cols()
            )));
        }
        Ok(())
    }
}

pub fn fit_standardizer(ds: &Dataset) -> Standardizer {
    Standardizer::fit(ds.features())
}

struct Table {
    names: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_table(path: &Path, has_header: bool) -> Result<Table> {
    let file = File::open(path).map_err(|source| CairoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut records = Vec::new();
    for record in reader.records() {
        records.push(record?);
    }
    let width = records.first().map_or(0, |r| r.len());
    let names: Vec<String> = if has_header {
        reader.headers()?.iter().map(str::to_owned).collect()
    } else {
        (0..width).map(|j| j.to_string()).collect()
    };
    let mut rows = Vec::with_capacity(records.len());
    for (row, record) in records.iter().enumerate() {
        let values = (0..names.len())
            .map(|j| {
                let raw = record.get(j).unwrap_or("");
                raw.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| CairoError::NonNumeric {
                        row: row + 1,
                        column: names[j].clone(),
                        value: raw.to_owned(),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(values);
    }
    Ok(Table { names, rows })
}

impl Table {
    fn columns(&self, cols: &[usize]) -> Result<Matrix> {
        let data = self
            .rows
            .iter()
            .flat_map(|r| cols.iter().map(move |&j| r[j]))
            .collect();
        Matrix::from_vec(self.rows.len(), cols.len(), data)
    }

    fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|c| c == name)
    }
}

/// Reads a numeric CSV. Every column other than `target_column` and the
/// reserved `__true_mean` column becomes a feature. Without a header the
/// columns are named by their zero-based position ("0", "1", ...).
pub fn load_csv(path: impl AsRef<Path>, target_column: &str, has_header: bool) -> Result<Dataset> {
    let table = read_table(path.as_ref(), has_header)?;
    let target_idx = table
        .position(target_column)
        .ok_or_else(|| CairoError::MissingTargetColumn(target_column.to_owned()))?;
    let mean_idx = table
        .position(TRUE_MEAN_COLUMN)
        .filter(|&j| j != target_idx);
    if table.rows.len() < 2 {
        return Err(CairoError::TooFewRows(table.rows.len()));
    }
    let feature_cols: Vec<usize> = (0..table.names.len())
        .filter(|&j| j != target_idx && Some(j) != mean_idx)
        .collect();
    let features = table.columns(&feature_cols)?;
    let feature_names = feature_cols
        .iter()
        .map(|&j| table.names[j].clone())
        .collect();
    Dataset::new(
        features,
        table.column(target_idx),
        mean_idx.map(|j| table.column(j)),
        feature_names,
    )
}

/// Feature matrix of a CSV that may or may not carry the target and
/// `__true_mean` columns; both are dropped when present.
pub fn load_features_csv(
    path: impl AsRef<Path>,
    target_column: &str,
    has_header: bool,
) -> Result<Matrix> {
    let table = read_table(path.as_ref(), has_header)?;
    let skip = [
        table.position(target_column),
        table.position(TRUE_MEAN_COLUMN),
    ];
    let cols: Vec<usize> = (0..table.names.len())
        .filter(|j| !skip.contains(&Some(*j)))
        .collect();
    table.columns(&cols)
}

/// The column named `column` of a headed numeric CSV.
pub fn load_column_csv(path: impl AsRef<Path>, column: &str) -> Result<Vec<f64>> {
    let table = read_table(path.as_ref(), true)?;
    let j = table
        .position(column)
        .ok_or_else(|| CairoError::MissingColumn(column.to_owned()))?;
    Ok(table.column(j))
}

/// Writes `ds` with features first, then `__target`, then `__true_mean`
/// when present. Numbers carry 17 significant digits.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| CairoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut writer = csv::Writer::from_writer(file);
    let mut header: Vec<&str> = ds.feature_names().iter().map(String::as_str).collect();
    header.push(TARGET_COLUMN);
    if ds.true_mean().is_some() {
        header.push(TRUE_MEAN_COLUMN);
    }
    writer.write_record(&header)?;
    for i in 0..ds.len() {
        let mut row: Vec<String> = ds
            .features()
            .row(i)
            .iter()
            .map(|&v| format_f64(v))
            .collect();
        row.push(format_f64(ds.targets()[i]));
        if let Some(m) = ds.true_mean() {
            row.push(format_f64(m[i]));
        }
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|source| CairoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_f64(value: f64) -> String {
    format!("{value:.16e}")
}

/// Equal-length columns side by side under `headers`.
pub fn write_columns_csv(
    path: impl AsRef<Path>,
    headers: &[&str],
    columns: &[&[f64]],
) -> Result<()> {
    ensure_same_len(headers.len(), columns.len())?;
    let rows = columns.first().map_or(0, |c| c.len());
    for c in columns {
        ensure_same_len(rows, c.len())?;
    }
    let path = path.as_ref();
    let io_err = |source| CairoError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
    writeln!(file, "{}", headers.join(",")).map_err(io_err)?;
    for i in 0..rows {
        let line: Vec<String> = columns.iter().map(|c| format_f64(c[i])).collect();
        writeln!(file, "{}", line.join(",")).map_err(io_err)?;
    }
    file.flush().map_err(io_err)
}

/// Single-column CSV of values under `header`.
pub fn write_column_csv(path: impl AsRef<Path>, header: &str, values: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| CairoError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
    writeln!(file, "{header}").map_err(io_err)?;
    for &v in values {
        writeln!(file, "{}", format_f64(v)).map_err(io_err)?;
    }
    file.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn csv_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn toy(n: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, (i * i) as f64]).collect();
        Dataset::unnamed(
            Matrix::from_rows(&rows).unwrap(),
            (0..n).map(|i| i as f64).collect(),
            Some(vec![0.5; n]),
        )
        .unwrap()
    }

    #[test]
    fn load_simple_csv() {
        let f = csv_file("x1,y\n0,1\n1,2\n2,3\n");
        let ds = load_csv(f.path(), "y", true).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dim(), 1);
        assert_eq!(ds.targets(), &[1.0, 2.0, 3.0]);
        assert_eq!(ds.feature_names(), &["x1".to_string()]);
        assert!(ds.true_mean().is_none());
    }

    #[test]
    fn missing_target_column() {
        let f = csv_file("x1,y\n0,1\n1,2\n2,3\n");
        let err = load_csv(f.path(), "z", true).unwrap_err();
        assert!(err.to_string().contains("missing target column"), "{err}");
    }

    #[test]
    fn non_numeric_cell_names_row_and_column() {
        let f = csv_file("x1,x2,y\n0,1,1\n1,abc,2\n2,3,3\n");
        match load_csv(f.path(), "y", true).unwrap_err() {
            CairoError::NonNumeric { row, column, value } => {
                assert_eq!(row, 2);
                assert_eq!(column, "x2");
                assert_eq!(value, "abc");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn empty_cell_is_an_error() {
        let f = csv_file("x1,y\n0,1\n,2\n");
        assert!(matches!(
            load_csv(f.path(), "y", true),
            Err(CairoError::NonNumeric { .. })
        ));
    }

    #[test]
    fn too_few_rows_and_missing_file() {
        let f = csv_file("x1,y\n0,1\n");
        assert!(matches!(
            load_csv(f.path(), "y", true),
            Err(CairoError::TooFewRows(1))
        ));
        assert!(matches!(
            load_csv("/definitely/not/here.csv", "y", true),
            Err(CairoError::Io { .. })
        ));
    }

    #[test]
    fn feature_matrix_ignores_reserved_columns() {
        let f = csv_file("a,__target,b,__true_mean\n1,9,2,8\n3,9,4,8\n");
        let x = load_features_csv(f.path(), TARGET_COLUMN, true).unwrap();
        assert_eq!(x.to_rows(), vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let g = csv_file("a,b\n1,2\n");
        assert_eq!(
            load_features_csv(g.path(), TARGET_COLUMN, true)
                .unwrap()
                .rows(),
            1
        );
    }

    #[test]
    fn column_files_round_trip() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let a = [1.0 / 3.0, -2.5, 1e-300];
        let b = [0.0, 7.0, -1.0];
        write_columns_csv(f.path(), &["a", "b"], &[&a, &b]).unwrap();
        assert_eq!(load_column_csv(f.path(), "a").unwrap(), a);
        assert_eq!(load_column_csv(f.path(), "b").unwrap(), b);
        assert!(matches!(
            load_column_csv(f.path(), "c"),
            Err(CairoError::MissingColumn(_))
        ));
        assert!(write_columns_csv(f.path(), &["a", "b"], &[&a, &b[..2]]).is_err());
    }

    #[test]
    fn headerless_columns_are_positional() {
        let f = csv_file("0,1\n1,2\n");
        let ds = load_csv(f.path(), "1", false).unwrap();
        assert_eq!(ds.targets(), &[1.0, 2.0]);
        assert_eq!(ds.feature_names(), &["0".to_string()]);
    }

    #[test]
    fn csv_round_trip_with_reserved_columns() {
        let ds = Dataset::unnamed(
            Matrix::from_rows(&[vec![0.1, -3.25e-7], vec![1.0 / 3.0, 1e10]]).unwrap(),
            vec![std::f64::consts::PI, -2.0],
            Some(vec![0.7, 1.0 / 7.0]),
        )
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv(&ds, f.path()).unwrap();
        let back = load_csv(f.path(), TARGET_COLUMN, true).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn split_sizes() {
        let ds = toy(10);
        let (tr, te) = split(&ds, &SplitSpec::new(0.7, 42)).unwrap();
        assert_eq!((tr.len(), te.len()), (7, 3));
        let ds2 = toy(2);
        let (tr, te) = split(&ds2, &SplitSpec::new(0.7, 42)).unwrap();
        assert_eq!((tr.len(), te.len()), (1, 1));
        assert_eq!(tr.true_mean().unwrap().len(), 1);
    }

    #[test]
    fn split_is_deterministic_partition() {
        let spec = SplitSpec::new(0.7, 42);
        let (a_tr, a_te) = spec.indices(100).unwrap();
        let (b_tr, b_te) = spec.indices(100).unwrap();
        assert_eq!(a_tr, b_tr);
        assert_eq!(a_te, b_te);
        let mut all: Vec<usize> = a_tr.iter().chain(&a_te).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        let (c_tr, _) = SplitSpec::new(0.7, 43).indices(100).unwrap();
        assert_ne!(a_tr, c_tr);
    }

    #[test]
    fn degenerate_splits_rejected() {
        assert!(matches!(
            SplitSpec::new(0.3, 0).sizes(2),
            Err(CairoError::DegenerateSplit { .. })
        ));
        assert!(SplitSpec::new(1.0, 0).sizes(10).is_err());
        assert!(SplitSpec::new(0.0, 0).sizes(10).is_err());
    }

    #[test]
    fn standardize_column() {
        let m = Matrix::from_rows(&[vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let st = Standardizer::fit(&m);
        let z = st.transform(&m).unwrap();
        let c0 = z.column(0);
        let mean: f64 = c0.iter().sum::<f64>() / 3.0;
        let var: f64 = c0.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-10);
        assert!((var.sqrt() - 1.0).abs() < 1e-12);
        assert_eq!(z.column(1), vec![0.0, 0.0, 0.0]);
        assert_eq!(st.stddev[1], 1.0);
    }

    #[test]
    fn standardize_round_trip() {
        let ds = toy(20);
        let st = fit_standardizer(&ds);
        let z = st.transform(ds.features()).unwrap();
        let back = st.inverse_transform(&z).unwrap();
        for (a, b) in back.as_slice().iter().zip(ds.features().as_slice()) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn standardizer_rejects_wrong_width() {
        let st = Standardizer::fit(&Matrix::zeros(3, 2));
        assert!(st.transform(&Matrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn dataset_rejects_nan_and_short_true_mean() {
        let m = Matrix::from_rows(&[vec![f64::NAN], vec![1.0]]).unwrap();
        assert!(Dataset::unnamed(m, vec![1.0, 2.0], None).is_err());
        let m = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(Dataset::unnamed(m, vec![1.0, 2.0], Some(vec![0.0])).is_err());
    }
}
