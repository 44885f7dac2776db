//! Embedding CSV and split-file ingestion.
//!
//! Embedding CSV: no header, each row `label,f_0,...,f_{d-1}` with a
//! non-negative base-10 label and decimal floats, UTF-8, LF endings.
//! Split file: one `many:<id>` or `few:<id>` line per class, `#` comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::dataset::{ClassId, ClassRole, UnbalancedDataset};
use crate::{Error, Result};

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Loads a dataset from an embedding CSV plus a many/few split file.
pub fn load_embeddings(data_path: &Path, split_path: &Path) -> Result<UnbalancedDataset> {
    let data_text = fs::read_to_string(data_path)?;
    let mut samples: BTreeMap<ClassId, Vec<Vec<f64>>> = BTreeMap::new();
    let mut dim: Option<usize> = None;
    for (idx, line) in data_text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label_text = fields.next().unwrap().trim();
        let label: ClassId = label_text.parse().map_err(|_| {
            parse_err(
                data_path,
                lineno,
                format!("invalid class label {label_text:?}"),
            )
        })?;
        let mut features = Vec::new();
        for f in fields {
            let v: f64 = f.trim().parse().map_err(|_| {
                parse_err(data_path, lineno, format!("invalid feature value {f:?}"))
            })?;
            if !v.is_finite() {
                return Err(parse_err(data_path, lineno, "non-finite feature value"));
            }
            features.push(v);
        }
        if features.is_empty() {
            return Err(parse_err(data_path, lineno, "row has no feature values"));
        }
        match dim {
            None => dim = Some(features.len()),
            Some(d) if d != features.len() => {
                return Err(parse_err(
                    data_path,
                    lineno,
                    format!("row has {} features, expected {d}", features.len()),
                ));
            }
            _ => {}
        }
        samples.entry(label).or_default().push(features);
    }
    let dim = dim.ok_or_else(|| parse_err(data_path, 1, "embedding file is empty"))?;

    let split_text = fs::read_to_string(split_path)?;
    let mut roles: BTreeMap<ClassId, ClassRole> = BTreeMap::new();
    for (idx, raw) in split_text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (role_text, id_text) = line.split_once(':').ok_or_else(|| {
            parse_err(split_path, lineno, "expected `many:<id>` or `few:<id>`")
        })?;
        let role = match role_text.trim() {
            "many" => ClassRole::ManyShot,
            "few" => ClassRole::FewShot,
            other => {
                return Err(parse_err(
                    split_path,
                    lineno,
                    format!("unknown role {other:?}"),
                ))
            }
        };
        let class: ClassId = id_text.trim().parse().map_err(|_| {
            parse_err(split_path, lineno, format!("invalid class id {id_text:?}"))
        })?;
        if !samples.contains_key(&class) {
            return Err(parse_err(
                split_path,
                lineno,
                format!("class {class} does not appear in the embedding file"),
            ));
        }
        if roles.insert(class, role).is_some() {
            return Err(parse_err(
                split_path,
                lineno,
                format!("class {class} listed more than once in the split"),
            ));
        }
    }
    for class in samples.keys() {
        if !roles.contains_key(class) {
            return Err(Error::Data(format!(
                "class {class} has samples but no entry in the split file"
            )));
        }
    }
    UnbalancedDataset::new(dim, roles, samples)
}

/// Serializes a dataset back to the embedding CSV / split formats.
/// Floats use the shortest representation that round-trips exactly.
pub fn save_embeddings(
    dataset: &UnbalancedDataset,
    data_path: &Path,
    split_path: &Path,
) -> Result<()> {
    let mut csv = String::new();
    for (class, features) in dataset.iter_samples() {
        write!(csv, "{class}").unwrap();
        for v in features {
            write!(csv, ",{v}").unwrap();
        }
        csv.push('\n');
    }
    fs::write(data_path, csv)?;

    let mut split = String::new();
    for class in dataset.class_ids() {
        let role = match dataset.role(class).unwrap() {
            ClassRole::ManyShot => "many",
            ClassRole::FewShot => "few",
        };
        writeln!(split, "{role}:{class}").unwrap();
    }
    fs::write(split_path, split)?;
    Ok(())
}
