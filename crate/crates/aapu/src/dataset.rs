//! CSV dataset files and their manifest.
//!
//! A dataset directory holds `positives.csv` (features), `unlabeled.csv`
//! (features, optionally followed by a `+1`/`-1` truth column), `test.csv`
//! (features followed by a label column) and `manifest.toml`. Files have no
//! header unless the loader is told otherwise.

use std::fs;
use std::path::{Path, PathBuf};

use aapu_core::{Label, Matrix, PUDataset};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const POSITIVES_FILE: &str = "positives.csv";
pub const UNLABELED_FILE: &str = "unlabeled.csv";
pub const TEST_FILE: &str = "test.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub n_p: usize,
    pub n_u: usize,
    pub n_test: usize,
    pub dim: usize,
    pub prior: f64,
    pub unlabeled_truth: bool,
    /// Generator seed, for synthetic data.
    pub seed: Option<u64>,
    pub fingerprint: String,
}

impl DatasetManifest {
    pub fn describe(data: &PUDataset, seed: Option<u64>) -> Self {
        DatasetManifest {
            n_p: data.n_p(),
            n_u: data.n_u(),
            n_test: data.test_labels().len(),
            dim: data.dim(),
            prior: data.prior(),
            unlabeled_truth: data.unlabeled_truth().is_some(),
            seed,
            fingerprint: fingerprint(data),
        }
    }
}

/// SHA-256 over every feature, label and the prior, as hex.
pub fn fingerprint(data: &PUDataset) -> String {
    let mut h = Sha256::new();
    h.update(b"aapu-dataset-v1");
    for m in [data.positives(), data.unlabeled(), data.test_features()] {
        h.update((m.rows() as u64).to_le_bytes());
        h.update((m.cols() as u64).to_le_bytes());
        for v in m.as_slice() {
            h.update(v.to_le_bytes());
        }
    }
    let labels = |h: &mut Sha256, labels: &[Label]| {
        h.update((labels.len() as u64).to_le_bytes());
        h.update(labels.iter().map(|l| u8::from(l.is_positive())).collect::<Vec<_>>());
    };
    match data.unlabeled_truth() {
        Some(truth) => {
            h.update([1]);
            labels(&mut h, truth);
        }
        None => h.update([0]),
    }
    labels(&mut h, data.test_labels());
    h.update(data.prior().to_le_bytes());
    hex::encode(h.finalize())
}

fn write_rows<'a>(path: &Path, rows: impl Iterator<Item = (&'a [f64], Option<Label>)>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for (features, label) in rows {
        let mut record: Vec<String> = features.iter().map(|v| v.to_string()).collect();
        if let Some(label) = label {
            record.push(label_text(label).to_string());
        }
        w.write_record(&record).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(Error::io(path))
}

fn label_text(label: Label) -> &'static str {
    match label {
        Label::Positive => "1",
        Label::Negative => "-1",
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io { path: path.to_path_buf(), source },
        other => Error::data(path, format!("{other:?}")),
    }
}

/// Writes the three CSV files and the manifest into `dir`, creating it.
pub fn write_dataset(dir: &Path, data: &PUDataset, seed: Option<u64>) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    write_rows(&dir.join(POSITIVES_FILE), data.positives().iter_rows().map(|r| (r, None)))?;
    let truth = data.unlabeled_truth();
    write_rows(
        &dir.join(UNLABELED_FILE),
        data.unlabeled().iter_rows().enumerate().map(|(i, r)| (r, truth.map(|t| t[i]))),
    )?;
    write_rows(
        &dir.join(TEST_FILE),
        data.test_features().iter_rows().zip(data.test_labels()).map(|(r, &l)| (r, Some(l))),
    )?;
    let manifest = DatasetManifest::describe(data, seed);
    let path = dir.join(MANIFEST_FILE);
    let text = toml::to_string(&manifest).map_err(|e| Error::data(&path, e.to_string()))?;
    fs::write(&path, text).map_err(Error::io(&path))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(Error::io(&path))?;
    toml::from_str(&text).map_err(|e| Error::data(&path, e.to_string()))
}

/// Numeric rows of a CSV file with their 1-based line numbers.
fn read_rows(path: &Path, header: bool) -> Result<Vec<(u64, Vec<f64>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let values = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field.parse::<f64>().map_err(|_| {
                    Error::data(path, format!("line {line}, column {}: `{field}` is not a number", col + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((line, values));
    }
    if rows.is_empty() {
        return Err(Error::data(path, "no data rows"));
    }
    Ok(rows)
}

fn features(path: &Path, rows: &[(u64, Vec<f64>)], dim: usize) -> Result<Matrix> {
    let mut data = Vec::with_capacity(rows.len() * dim);
    for (line, row) in rows {
        data.extend_from_slice(&row[..dim]);
        if let Some(v) = row[..dim].iter().find(|v| !v.is_finite()) {
            return Err(Error::data(path, format!("line {line}: feature {v} is not finite")));
        }
    }
    Ok(Matrix::from_vec(rows.len(), dim, data)?)
}

fn labels(path: &Path, rows: &[(u64, Vec<f64>)]) -> Result<Vec<Label>> {
    rows.iter()
        .map(|(line, row)| {
            let v = *row.last().expect("non-empty row");
            Label::from_sign(v).map_err(|_| Error::data(path, format!("line {line}: label {v} is not +1 or -1")))
        })
        .collect()
}

fn expect_width(path: &Path, rows: &[(u64, Vec<f64>)], allowed: &[usize], what: &str) -> Result<usize> {
    let width = rows[0].1.len();
    if !allowed.contains(&width) {
        return Err(Error::data(path, format!("line {}: {width} columns, expected {what}", rows[0].0)));
    }
    if let Some((line, row)) = rows.iter().find(|(_, r)| r.len() != width) {
        return Err(Error::data(
            path,
            format!("line {line}: dimension mismatch, {} columns where earlier rows have {width}", row.len()),
        ));
    }
    Ok(width)
}

/// Assembles a dataset from three CSV files with a user-supplied prior.
pub fn load_csv_dataset(
    positives: &Path,
    unlabeled: &Path,
    test: &Path,
    prior: f64,
    header: bool,
) -> Result<PUDataset> {
    let p_rows = read_rows(positives, header)?;
    let dim = expect_width(positives, &p_rows, &[p_rows[0].1.len()], "")?;
    let u_rows = read_rows(unlabeled, header)?;
    let u_width =
        expect_width(unlabeled, &u_rows, &[dim, dim + 1], &format!("{dim} features and an optional truth column"))?;
    let t_rows = read_rows(test, header)?;
    expect_width(test, &t_rows, &[dim + 1], &format!("{dim} features and a label column"))?;

    let truth = (u_width == dim + 1).then(|| labels(unlabeled, &u_rows)).transpose()?;
    Ok(PUDataset::new(
        features(positives, &p_rows, dim)?,
        features(unlabeled, &u_rows, dim)?,
        truth,
        features(test, &t_rows, dim)?,
        labels(test, &t_rows)?,
        prior,
    )?)
}

/// Loads a dataset directory. The prior defaults to the one in its manifest.
pub fn load_dataset_dir(dir: &Path, prior: Option<f64>, header: bool) -> Result<PUDataset> {
    let prior = match prior {
        Some(p) => p,
        None => read_manifest(dir)?.prior,
    };
    let file = |name: &str| -> PathBuf { dir.join(name) };
    load_csv_dataset(&file(POSITIVES_FILE), &file(UNLABELED_FILE), &file(TEST_FILE), prior, header)
}

#[cfg(test)]
mod tests {
    use super::*;
    use aapu_core::generate_sine_dataset;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let data = generate_sine_dataset(20, 50, 60, 4).unwrap();
        let manifest = write_dataset(dir.path(), &data, Some(4)).unwrap();
        assert_eq!(manifest.prior, data.prior());
        let back = load_dataset_dir(dir.path(), None, false).unwrap();
        assert_eq!(back, data);
        assert_eq!(fingerprint(&back), manifest.fingerprint);
        assert_eq!(read_manifest(dir.path()).unwrap(), manifest);
    }

    #[test]
    fn fingerprint_sees_every_part() {
        let a = generate_sine_dataset(5, 10, 10, 1).unwrap();
        let b = generate_sine_dataset(5, 10, 10, 2).unwrap();
        assert_ne!(fingerprint(&a), fingerprint(&b));
        let reprior = PUDataset::new(
            a.positives().clone(),
            a.unlabeled().clone(),
            a.unlabeled_truth().map(<[Label]>::to_vec),
            a.test_features().clone(),
            a.test_labels().to_vec(),
            0.3,
        )
        .unwrap();
        assert_ne!(fingerprint(&a), fingerprint(&reprior));
    }
}
