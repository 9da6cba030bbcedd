//! File formats: spectra and feature-matrix CSVs, label lists, and JSON
//! documents. All writers go through a temp-file-and-rename step so partial
//! output never lands under the target name.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::dataset::{Dataset, Label, SourceTag};
use crate::error::{Error, Result};
use crate::spectra::Spectrum;

/// Spectra CSV: header `mz,<id1>,<id2>,...`; column 1 is the shared m/z
/// grid, later columns one sample each.
pub fn read_spectra_csv(path: impl AsRef<Path>) -> Result<Vec<Spectrum>> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() || headers.get(0) != Some("mz") {
        return Err(Error::ConfigInvalid(format!(
            "{}: first column must be 'mz'",
            path.as_ref().display()
        )));
    }
    let ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    if ids.is_empty() {
        return Err(Error::ConfigInvalid("spectra file has no sample columns".into()));
    }
    let mut mz = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); ids.len()];
    for record in reader.records() {
        let record = record?;
        if record.len() != ids.len() + 1 {
            return Err(Error::ConfigInvalid(format!(
                "ragged spectra row with {} fields, expected {}",
                record.len(),
                ids.len() + 1
            )));
        }
        mz.push(parse_f64(record.get(0).unwrap())?);
        for (col, field) in columns.iter_mut().zip(record.iter().skip(1)) {
            col.push(parse_f64(field)?);
        }
    }
    ids.into_iter()
        .zip(columns)
        .map(|(id, intensity)| Spectrum::new(mz.clone(), intensity, id))
        .collect()
}

pub fn write_spectra_csv(path: impl AsRef<Path>, spectra: &[Spectrum]) -> Result<()> {
    let first = spectra.first().ok_or(Error::EmptyTrainingSet)?;
    for s in spectra {
        if s.mz != first.mz {
            return Err(Error::GridMismatch {
                detail: format!("spectrum {} is on a different grid", s.sample_id),
            });
        }
    }
    let mut buffer = Vec::new();
    {
        let mut writer = csv::Writer::from_writer(&mut buffer);
        let mut header = vec!["mz".to_string()];
        header.extend(spectra.iter().map(|s| s.sample_id.clone()));
        writer.write_record(&header)?;
        for i in 0..first.len() {
            let mut row = vec![first.mz[i].to_string()];
            row.extend(spectra.iter().map(|s| s.intensity[i].to_string()));
            writer.write_record(&row)?;
        }
        writer.flush()?;
    }
    write_bytes_atomic(path, &buffer)
}

/// A parsed feature-matrix CSV (`sample_id,<col1>,...`), one sample per row.
#[derive(Debug, Clone)]
pub struct FeatureFile {
    pub sample_ids: Vec<String>,
    pub column_names: Vec<String>,
    pub x: Array2<f64>,
}

pub fn read_feature_csv(path: impl AsRef<Path>) -> Result<FeatureFile> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    if headers.get(0) != Some("sample_id") {
        return Err(Error::ConfigInvalid(format!(
            "{}: first column must be 'sample_id'",
            path.as_ref().display()
        )));
    }
    let column_names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut sample_ids = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != column_names.len() + 1 {
            return Err(Error::ConfigInvalid(format!(
                "ragged feature row with {} fields, expected {}",
                record.len(),
                column_names.len() + 1
            )));
        }
        sample_ids.push(record.get(0).unwrap().to_string());
        for field in record.iter().skip(1) {
            values.push(parse_f64(field)?);
        }
    }
    let x = Array2::from_shape_vec((sample_ids.len(), column_names.len()), values)
        .expect("dimensions counted above");
    Ok(FeatureFile { sample_ids, column_names, x })
}

pub fn write_feature_csv(path: impl AsRef<Path>, d: &Dataset) -> Result<()> {
    let mut buffer = Vec::new();
    {
        let mut writer = csv::Writer::from_writer(&mut buffer);
        let mut header = vec!["sample_id".to_string()];
        header.extend(d.column_names.iter().cloned());
        writer.write_record(&header)?;
        for (i, id) in d.sample_ids.iter().enumerate() {
            let mut row = vec![id.clone()];
            row.extend(d.row(i).iter().map(|v| v.to_string()));
            writer.write_record(&row)?;
        }
        writer.flush()?;
    }
    write_bytes_atomic(path, &buffer)
}

/// Labels CSV: `sample_id,label` with labels `case` / `control`.
pub fn read_labels_csv(path: impl AsRef<Path>) -> Result<Vec<(String, Label)>> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    if headers.get(0) != Some("sample_id") || headers.get(1) != Some("label") {
        return Err(Error::ConfigInvalid(format!(
            "{}: expected header sample_id,label",
            path.as_ref().display()
        )));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let id = record.get(0).unwrap_or_default().to_string();
        let label = match record.get(1).map(str::trim) {
            Some("case") => Label::Case,
            Some("control") => Label::Control,
            other => {
                return Err(Error::ConfigInvalid(format!(
                    "unknown label '{}' for sample {id}",
                    other.unwrap_or_default()
                )))
            }
        };
        out.push((id, label));
    }
    Ok(out)
}

pub fn write_labels_csv(path: impl AsRef<Path>, pairs: &[(String, Label)]) -> Result<()> {
    let mut buffer = Vec::new();
    {
        let mut writer = csv::Writer::from_writer(&mut buffer);
        writer.write_record(["sample_id", "label"])?;
        for (id, label) in pairs {
            let text = if label.is_case() { "case" } else { "control" };
            writer.write_record([id.as_str(), text])?;
        }
        writer.flush()?;
    }
    write_bytes_atomic(path, &buffer)
}

/// Joins a feature file with a label list by sample id, preserving the
/// feature file's row order.
pub fn dataset_from_feature_file(
    file: FeatureFile,
    labels: &[(String, Label)],
    tag: SourceTag,
) -> Result<Dataset> {
    let lookup: std::collections::HashMap<&str, Label> =
        labels.iter().map(|(id, l)| (id.as_str(), *l)).collect();
    let y = file
        .sample_ids
        .iter()
        .map(|id| {
            lookup.get(id.as_str()).copied().ok_or_else(|| Error::SampleMismatch {
                detail: format!("sample '{id}' is missing from the label file"),
            })
        })
        .collect::<Result<Vec<Label>>>()?;
    let p = file.column_names.len();
    Dataset::new(file.x, y, vec![tag; p], file.column_names, file.sample_ids)
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let text = std::fs::read_to_string(path.as_ref())?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json_atomic<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes_atomic(path, text.as_bytes())
}

pub fn write_text_atomic(path: impl AsRef<Path>, text: &str) -> Result<()> {
    write_bytes_atomic(path, text.as_bytes())
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

fn write_bytes_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let unique = TEMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let temp = path.with_extension(format!("tmp.{}.{unique}", std::process::id()));
    std::fs::write(&temp, bytes)?;
    std::fs::rename(&temp, path)?;
    Ok(())
}

fn parse_f64(field: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::ConfigInvalid(format!("not a number: '{field}'")))
}
