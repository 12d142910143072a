//! CSV ingestion with polynomial feature expansion, plus the matrix writer
//! used by the dataset generators.
//!
//! Layout of the produced feature matrix, deterministic by construction:
//! min-max-scaled continuous columns in schema order, then all monomials of
//! degree 2..=degree over those columns (graded lexicographic), then one-hot
//! blocks for every remaining column in header order (categories in first
//! appearance order).

use crate::error::{DrfError, Result};
use std::collections::HashMap;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub label: String,
    pub sensitive: String,
    pub continuous: Vec<String>,
    /// When set, the label is 1 iff the cell equals this string; otherwise
    /// the cell must parse as a number and is thresholded at 0.5.
    pub label_positive: Option<String>,
    /// Same convention for the sensitive column.
    pub sensitive_positive: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub sensitive: Vec<f64>,
    /// Human-readable names of the produced feature columns.
    pub feature_names: Vec<String>,
}

/// Exponent vectors of all monomials in `vars` variables with total degree
/// in `2..=max_degree`, graded lexicographic.
pub fn monomial_exponents(vars: usize, max_degree: usize) -> Vec<Vec<usize>> {
    fn extend(out: &mut Vec<Vec<usize>>, prefix: &mut Vec<usize>, vars: usize, left: usize) {
        if prefix.len() == vars {
            if left == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        for e in (0..=left).rev() {
            prefix.push(e);
            extend(out, prefix, vars, left - e);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for degree in 2..=max_degree {
        let mut prefix = Vec::new();
        extend(&mut out, &mut prefix, vars, degree);
    }
    out
}

fn parse_binary(cell: &str, positive: &Option<String>, what: &str, line: usize) -> Result<f64> {
    match positive {
        Some(pos) => Ok(f64::from(cell.trim() == pos)),
        None => cell.trim().parse::<f64>().map_err(|_| {
            DrfError::Data(format!("line {line}: {what} value '{cell}' is not numeric"))
        }),
    }
}

/// Load a dataset per the schema. Errors carry the offending line number.
pub fn load_csv_dataset(
    path: impl AsRef<Path>,
    schema: &CsvSchema,
    degree: usize,
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(|e| DrfError::Data(format!("open {}: {e}", path.as_ref().display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| DrfError::Data(format!("header row: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DrfError::Data(format!("missing column '{name}'")))
    };
    let label_idx = col(&schema.label)?;
    let sensitive_idx = col(&schema.sensitive)?;
    let cont_idx: Vec<usize> = schema
        .continuous
        .iter()
        .map(|c| col(c))
        .collect::<Result<_>>()?;
    let cat_idx: Vec<usize> = (0..headers.len())
        .filter(|i| *i != label_idx && *i != sensitive_idx && !cont_idx.contains(i))
        .collect();

    let mut cont_rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut sensitive = Vec::new();
    let mut cat_rows: Vec<Vec<String>> = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let line = row_no + 2; // header is line 1
        let record = record.map_err(|e| DrfError::Data(format!("line {line}: {e}")))?;
        if record.len() != headers.len() {
            return Err(DrfError::Data(format!(
                "line {line}: {} fields, expected {}",
                record.len(),
                headers.len()
            )));
        }
        let mut cont = Vec::with_capacity(cont_idx.len());
        for (&ci, name) in cont_idx.iter().zip(&schema.continuous) {
            let v: f64 = record[ci].parse().map_err(|_| {
                DrfError::Data(format!(
                    "line {line}: continuous column '{name}' value '{}' is not numeric",
                    &record[ci]
                ))
            })?;
            cont.push(v);
        }
        labels.push(parse_binary(&record[label_idx], &schema.label_positive, "label", line)? > 0.5);
        sensitive.push(parse_binary(
            &record[sensitive_idx],
            &schema.sensitive_positive,
            "sensitive",
            line,
        )?);
        cont_rows.push(cont);
        cat_rows.push(cat_idx.iter().map(|&ci| record[ci].to_owned()).collect());
    }
    if cont_rows.is_empty() {
        return Err(DrfError::Data("dataset has no rows".into()));
    }

    // min-max scale the continuous block
    let k = cont_idx.len();
    let mut lo = vec![f64::INFINITY; k];
    let mut hi = vec![f64::NEG_INFINITY; k];
    for row in &cont_rows {
        for (j, v) in row.iter().enumerate() {
            lo[j] = lo[j].min(*v);
            hi[j] = hi[j].max(*v);
        }
    }
    for row in &mut cont_rows {
        for (j, v) in row.iter_mut().enumerate() {
            let span = hi[j] - lo[j];
            *v = if span > 0.0 { (*v - lo[j]) / span } else { 0.0 };
        }
    }

    // category dictionaries in first-appearance order
    let mut cat_values: Vec<Vec<String>> = vec![Vec::new(); cat_idx.len()];
    let mut cat_lookup: Vec<HashMap<String, usize>> = vec![HashMap::new(); cat_idx.len()];
    for row in &cat_rows {
        for (j, v) in row.iter().enumerate() {
            if !cat_lookup[j].contains_key(v) {
                cat_lookup[j].insert(v.clone(), cat_values[j].len());
                cat_values[j].push(v.clone());
            }
        }
    }

    let expansions = monomial_exponents(k, degree);
    let mut feature_names: Vec<String> = schema.continuous.clone();
    for exps in &expansions {
        let name = exps
            .iter()
            .enumerate()
            .filter(|(_, e)| **e > 0)
            .map(|(j, e)| format!("{}^{}", schema.continuous[j], e))
            .collect::<Vec<_>>()
            .join("*");
        feature_names.push(name);
    }
    for (j, values) in cat_values.iter().enumerate() {
        for v in values {
            feature_names.push(format!("{}={v}", headers[cat_idx[j]]));
        }
    }

    let mut features = Vec::with_capacity(cont_rows.len());
    for (row, cats) in cont_rows.iter().zip(&cat_rows) {
        let mut out = Vec::with_capacity(feature_names.len());
        out.extend_from_slice(row);
        for exps in &expansions {
            let mut v = 1.0;
            for (j, e) in exps.iter().enumerate() {
                for _ in 0..*e {
                    v *= row[j];
                }
            }
            out.push(v);
        }
        for (j, cell) in cats.iter().enumerate() {
            let hot = cat_lookup[j][cell];
            for c in 0..cat_values[j].len() {
                out.push(f64::from(c == hot));
            }
        }
        features.push(out);
    }

    Ok(Dataset {
        features,
        labels: labels.into_iter().map(u8::from).collect(),
        sensitive,
        feature_names,
    })
}

/// Write a plain numeric matrix with the given header names.
pub fn save_matrix_csv(
    path: impl AsRef<Path>,
    headers: &[String],
    rows: &[Vec<f64>],
) -> Result<()> {
    let mut writer = csv::Writer::from_path(path.as_ref())
        .map_err(|e| DrfError::Data(format!("create {}: {e}", path.as_ref().display())))?;
    writer
        .write_record(headers)
        .map_err(|e| DrfError::Data(e.to_string()))?;
    for row in rows {
        writer
            .write_record(row.iter().map(|v| format!("{v:.17e}")))
            .map_err(|e| DrfError::Data(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}
