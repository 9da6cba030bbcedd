//! Feature matrix with binary labels and per-column source tags.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary outcome; cases carry sign +1, controls −1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Case,
    Control,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Case => 1.0,
            Label::Control => -1.0,
        }
    }

    pub fn is_case(self) -> bool {
        matches!(self, Label::Case)
    }
}

/// Which source a feature column came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SourceTag {
    Spectral,
    Panel,
    Score,
}

/// An n×p feature matrix plus labels, sample ids and column metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<Label>,
    pub column_tags: Vec<SourceTag>,
    pub column_names: Vec<String>,
    pub sample_ids: Vec<String>,
}

impl Dataset {
    pub fn new(
        x: Array2<f64>,
        y: Vec<Label>,
        column_tags: Vec<SourceTag>,
        column_names: Vec<String>,
        sample_ids: Vec<String>,
    ) -> Result<Self> {
        let (n, p) = x.dim();
        if y.len() != n || sample_ids.len() != n {
            return Err(Error::LengthMismatch { left: n, right: y.len().max(sample_ids.len()) });
        }
        if column_tags.len() != p || column_names.len() != p {
            return Err(Error::ConfigInvalid(format!(
                "matrix has {p} columns but {} tags / {} names",
                column_tags.len(),
                column_names.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::ConfigInvalid("feature matrix contains non-finite values".into()));
        }
        Ok(Self { x, y, column_tags, column_names, sample_ids })
    }

    pub fn n_samples(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.x.row(i)
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let cases = self.y.iter().filter(|l| l.is_case()).count();
        (cases, self.y.len() - cases)
    }

    pub fn both_classes_present(&self) -> bool {
        let (cases, controls) = self.class_counts();
        cases > 0 && controls > 0
    }

    /// Row subset in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(0), rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            column_tags: self.column_tags.clone(),
            column_names: self.column_names.clone(),
            sample_ids: rows.iter().map(|&i| self.sample_ids[i].clone()).collect(),
        }
    }

    /// Column subset in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(Axis(1), cols),
            y: self.y.clone(),
            column_tags: cols.iter().map(|&j| self.column_tags[j]).collect(),
            column_names: cols.iter().map(|&j| self.column_names[j].clone()).collect(),
            sample_ids: self.sample_ids.clone(),
        }
    }

    /// Replaces the labels, keeping everything else. Used by leakage tests
    /// and by the split harness when reassembling repeat datasets.
    pub fn with_labels(&self, y: Vec<Label>) -> Result<Dataset> {
        if y.len() != self.n_samples() {
            return Err(Error::LengthMismatch { left: self.n_samples(), right: y.len() });
        }
        Ok(Dataset { y, ..self.clone() })
    }
}
