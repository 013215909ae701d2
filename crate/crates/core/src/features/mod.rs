//! Predictor extraction around pools and the preprocessing that turns the raw
//! extraction into a model-ready matrix.

pub mod extract;
pub mod impute;
pub mod manifest;
pub mod preprocess;

use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use extract::{extract_matrix, load_layers, PreparedLayer};
pub use manifest::{AttributeKind, AttributeSpec, ImputationRule, LayerSpec, Manifest};
pub use preprocess::{preprocess, CorrelationGrouping, PreprocessOptions, PreprocessReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Extensive,
    Intensive,
    CategoryShare,
    RoadFlow,
    RoadType,
    TrafficDensity,
    RoadDensity,
    PointDensity,
    PointDistance,
    Raster,
    Pool,
    /// Read back from a table without metadata.
    Unspecified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub source: String,
    pub kind: ColumnKind,
}

/// Pools × predictors. Missing entries are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    row_ids: Vec<String>,
    columns: Vec<ColumnMeta>,
    values: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(row_ids: Vec<String>, columns: Vec<ColumnMeta>, values: Array2<f64>) -> Result<Self> {
        if values.nrows() != row_ids.len() || values.ncols() != columns.len() {
            return Err(Error::InvalidInput(format!(
                "matrix is {}×{} but has {} row ids and {} columns",
                values.nrows(),
                values.ncols(),
                row_ids.len(),
                columns.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(c) = columns.iter().find(|c| !seen.insert(c.name.as_str())) {
            return Err(Error::InvalidInput(format!("duplicate predictor name `{}`", c.name)));
        }
        Ok(Self {
            row_ids,
            columns,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn columns(&self) -> &[ColumnMeta] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub(crate) fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.column(j)
    }

    pub fn n_missing(&self) -> usize {
        self.values.iter().filter(|v| !v.is_finite()).count()
    }

    pub fn select_columns(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            row_ids: self.row_ids.clone(),
            columns: idx.iter().map(|&j| self.columns[j].clone()).collect(),
            values: self.values.select(ndarray::Axis(1), idx),
        }
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            row_ids: idx.iter().map(|&i| self.row_ids[i].clone()).collect(),
            columns: self.columns.clone(),
            values: self.values.select(ndarray::Axis(0), idx),
        }
    }

    /// Reorders and subsets columns to `names`; errors on the first absent name.
    pub fn align_to(&self, names: &[String]) -> Result<FeatureMatrix> {
        let idx = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| Error::schema("features", format!("missing column `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select_columns(&idx))
    }

    /// `pool_id` followed by one column per predictor; missing values are empty.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["pool_id".to_string()];
        header.extend(self.column_names());
        w.write_record(&header)?;
        for (i, id) in self.row_ids.iter().enumerate() {
            let mut rec = vec![id.clone()];
            rec.extend(self.values.row(i).iter().map(|v| if v.is_finite() { v.to_string() } else { String::new() }));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<FeatureMatrix> {
        let file = path.display().to_string();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::schema(&file, format!("cannot open: {e}")))?;
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("pool_id") {
            return Err(Error::schema(&file, "missing column `pool_id`"));
        }
        let columns: Vec<ColumnMeta> = headers
            .iter()
            .skip(1)
            .map(|h| ColumnMeta {
                name: h.to_string(),
                source: h.split('.').next().unwrap_or("").to_string(),
                kind: ColumnKind::Unspecified,
            })
            .collect();
        let p = columns.len();
        let mut ids = Vec::new();
        let mut flat = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            ids.push(rec.get(0).unwrap_or("").to_string());
            for j in 0..p {
                let raw = rec.get(j + 1).unwrap_or("");
                flat.push(if raw.is_empty() {
                    f64::NAN
                } else {
                    crate::ingest::io::parse_f64(&file, i as u64 + 2, &columns[j].name, raw)?
                });
            }
        }
        let values = Array2::from_shape_vec((ids.len(), p), flat)
            .map_err(|e| Error::schema(&file, e.to_string()))?;
        FeatureMatrix::new(ids, columns, values)
    }
}

/// Everything `features.csv` does not carry: column metadata, layer loading
/// notes and the preprocessing log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureReport {
    pub buffer_radius_m: f64,
    pub raw_columns: Vec<ColumnMeta>,
    pub raw_missing: Vec<(String, usize)>,
    pub load: extract::LoadReport,
    pub preprocess: PreprocessReport,
}
