//! CSV ingestion.
//!
//! Files are RFC 4180 with a header row. Regressand and regressors must be
//! numeric; cluster columns may hold any text. Empty cells and `NA` are
//! rejected rather than dropped.

use std::collections::HashMap;
use std::path::Path;

use clusterkit_core::design::{fixed_effect_dummies, ClusteredDataset};
use clusterkit_core::DMatrix;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: csv::Error },
    #[error("{0} has no data rows")]
    Empty(String),
    #[error("column '{0}' not found in header")]
    MissingColumn(String),
    #[error("missing value in column '{column}' at data row {row}")]
    MissingValue { column: String, row: usize },
    #[error("non-numeric value '{value}' in column '{column}' at data row {row}")]
    NonNumeric { column: String, row: usize, value: String },
    #[error(transparent)]
    Core(#[from] clusterkit_core::Error),
}

/// Raw table of strings, as read.
#[derive(Clone, Debug)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    index: HashMap<String, usize>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, DataError> {
        let io = |source| DataError::Io { path: path.display().to_string(), source };
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path).map_err(io)?;
        let headers: Vec<String> = rdr.headers().map_err(io)?.iter().map(str::to_owned).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|r| r.iter().map(str::to_owned).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()
            .map_err(io)?;
        if rows.is_empty() {
            return Err(DataError::Empty(path.display().to_string()));
        }
        Ok(Self::from_parts(headers, rows))
    }

    pub fn from_parts(headers: Vec<String>, rows: Vec<Vec<String>>) -> Self {
        let index = headers.iter().enumerate().map(|(i, h)| (h.clone(), i)).collect();
        Self { headers, rows, index }
    }

    fn col(&self, name: &str) -> Result<usize, DataError> {
        self.index.get(name).copied().ok_or_else(|| DataError::MissingColumn(name.into()))
    }

    /// Text column, rejecting empty cells.
    pub fn labels(&self, name: &str) -> Result<Vec<String>, DataError> {
        let c = self.col(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| match row[c].as_str() {
                "" | "NA" => Err(DataError::MissingValue { column: name.into(), row: r + 1 }),
                s => Ok(s.to_owned()),
            })
            .collect()
    }

    pub fn numeric(&self, name: &str) -> Result<Vec<f64>, DataError> {
        self.labels(name)?
            .into_iter()
            .enumerate()
            .map(|(r, s)| match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(DataError::NonNumeric { column: name.into(), row: r + 1, value: s }),
            })
            .collect()
    }
}

/// Which columns make up the regression.
#[derive(Clone, Debug, Default)]
pub struct DataSpec {
    pub y: String,
    pub x: Vec<String>,
    pub cluster: String,
    pub cluster2: Option<String>,
    /// Binary treatment column; appended to X when not listed there.
    pub treatment: Option<String>,
    /// Categorical columns absorbed as dummies, first level dropped.
    pub fixed_effects: Vec<String>,
    pub constant: bool,
}

pub fn build_dataset(t: &Table, spec: &DataSpec) -> Result<ClusteredDataset, DataError> {
    let n = t.rows.len();
    let y = t.numeric(&spec.y)?;
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    if spec.constant {
        cols.push(vec![1.0; n]);
        names.push("const".into());
    }
    let mut xs = spec.x.clone();
    if let Some(tr) = &spec.treatment {
        if !xs.contains(tr) {
            xs.push(tr.clone());
        }
    }
    for name in &xs {
        cols.push(t.numeric(name)?);
        names.push(name.clone());
    }
    for fe in &spec.fixed_effects {
        let (dm, dn) = fixed_effect_dummies(&t.labels(fe)?, fe);
        for c in 0..dm.ncols() {
            cols.push(dm.column(c).iter().copied().collect());
        }
        names.extend(dn);
    }
    let x = DMatrix::from_fn(n, cols.len(), |i, c| cols[c][i]);
    let cluster = t.labels(&spec.cluster)?;
    let cluster2 = spec.cluster2.as_deref().map(|c| t.labels(c)).transpose()?;
    let mut d = ClusteredDataset::new(y, x, names, &cluster, cluster2.as_deref())?;
    if let Some(tr) = &spec.treatment {
        let j = d.column_index(tr).expect("treatment column was added to X");
        d = d.with_treatment(j)?;
    }
    Ok(d)
}

/// Text column of `t`, permuted into the dataset's stored row order.
pub fn labels_in_dataset_order(t: &Table, d: &ClusteredDataset, name: &str) -> Result<Vec<String>, DataError> {
    let raw = t.labels(name)?;
    Ok(d.original_row().iter().map(|&r| raw[r].clone()).collect())
}

pub fn load(path: &Path, spec: &DataSpec) -> Result<(Table, ClusteredDataset), DataError> {
    let t = Table::read(path)?;
    let d = build_dataset(&t, spec)?;
    Ok((t, d))
}
