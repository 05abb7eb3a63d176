use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FeatureTable;
use crate::error::{Error, Result};

/// One image and its captions, as stored in a dataset JSONL line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub feature_ref: String,
    pub captions: Vec<String>,
}

/// Parses JSONL records without resolving feature references.
pub fn parse_dataset(text: &str, path: &Path) -> Result<Vec<DatasetRecord>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord =
            serde_json::from_str(line).map_err(|e| Error::format(path, n + 1, e.to_string()))?;
        if rec.captions.is_empty() {
            return Err(Error::format(path, n + 1, format!("record `{}` has no captions", rec.id)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, path)
}

/// Reads a dataset and checks every `feature_ref` against `features`.
pub fn load_dataset(path: impl AsRef<Path>, features: &FeatureTable) -> Result<Vec<DatasetRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records = parse_dataset(&text, path)?;
    let mut line = 0;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    for rec in &records {
        line = lines.next().map_or(line, |(n, _)| n + 1);
        if !features.contains(&rec.feature_ref) {
            return Err(Error::format(
                path,
                line,
                format!("record `{}` references unknown feature `{}`", rec.id, rec.feature_ref),
            ));
        }
    }
    Ok(records)
}

pub fn write_dataset(records: &[DatasetRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).expect("serializable"));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
