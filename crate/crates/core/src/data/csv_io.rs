use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataPoint, Dataset};
use crate::error::{Error, Result};

/// Names the label and optional sensitive columns; every other column is a
/// numeric feature, in file order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub label_column: String,
    #[serde(default)]
    pub sensitive_column: Option<String>,
    /// Number of classes; inferred as `max label + 1` when absent.
    #[serde(default)]
    pub classes: Option<usize>,
    #[serde(default)]
    pub sensitive_classes: Option<usize>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            label_column: "label".into(),
            sensitive_column: None,
            classes: None,
            sensitive_classes: None,
        }
    }
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("no column named {name:?}"),
            })
    };
    let label_col = find(&schema.label_column)?;
    let sensitive_col = schema.sensitive_column.as_deref().map(find).transpose()?;

    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                line,
                message: format!("{} cells, header has {}", record.len(), headers.len()),
            });
        }
        let class_cell = |col: usize, what: &str| -> Result<usize> {
            let cell = record[col].trim();
            if cell.is_empty() {
                return Err(Error::Parse {
                    line,
                    message: format!("missing {what} in row {}", line - 1),
                });
            }
            cell.parse::<usize>().map_err(|_| Error::Parse {
                line,
                message: format!("{what} {cell:?} is not a class id"),
            })
        };
        let label = class_cell(label_col, "label")?;
        let sensitive = sensitive_col
            .map(|c| class_cell(c, "sensitive attribute"))
            .transpose()?;
        let mut features = Vec::with_capacity(record.len());
        for (col, cell) in record.iter().enumerate() {
            if col == label_col || Some(col) == sensitive_col {
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("column {:?} value {cell:?} is not numeric", &headers[col]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("column {:?} is not finite", &headers[col]),
                });
            }
            features.push(v);
        }
        points.push(DataPoint {
            features,
            label,
            sensitive,
        });
    }
    let k = schema
        .classes
        .unwrap_or_else(|| points.iter().map(|p| p.label + 1).max().unwrap_or(0).max(2));
    let s = sensitive_col.map(|_| {
        schema
            .sensitive_classes
            .unwrap_or_else(|| points.iter().filter_map(|p| p.sensitive).max().unwrap_or(0) + 1)
    });
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("csv")
        .to_string();
    Dataset::new(name, k, s, points)
}

/// Writes `f0..f{d-1}`, `label` and, when present, `sensitive` columns.
pub fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..ds.d).map(|i| format!("f{i}")).collect();
    header.push("label".into());
    if ds.s.is_some() {
        header.push("sensitive".into());
    }
    w.write_record(&header)?;
    for p in ds.points() {
        let mut row: Vec<String> = p.features.iter().map(|v| format!("{v}")).collect();
        row.push(p.label.to_string());
        if let Some(s) = p.sensitive {
            row.push(s.to_string());
        }
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    crate::experiment::write_atomic(path, &bytes)
}
