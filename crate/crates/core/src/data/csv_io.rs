use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{ColumnKind, CompleteDataset, MaskedDataset};
use crate::error::{Error, Result};

/// Options for reading delimited tables.
#[derive(Clone, Debug)]
pub struct CsvOptions {
    pub delimiter: u8,
    /// Forces the kind of named columns instead of inferring it. Only the
    /// variant matters; categorical levels are always collected from the data.
    pub kind_overrides: BTreeMap<String, ColumnKind>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self { delimiter: b',', kind_overrides: BTreeMap::new() }
    }
}

const MISSING_OUT: &str = "NA";

fn is_missing_marker(field: &str) -> bool {
    let f = field.trim();
    f.is_empty() || f.eq_ignore_ascii_case("na") || f.eq_ignore_ascii_case("nan")
}

fn read_raw(reader: impl Read, delimiter: u8) -> Result<(Vec<String>, Vec<Vec<Option<String>>>)> {
    let mut rdr = csv::ReaderBuilder::new().delimiter(delimiter).has_headers(true).from_reader(reader);
    let names: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(Error::InvalidInput("missing header row".into()));
    }
    let mut columns: Vec<Vec<Option<String>>> = vec![Vec::new(); names.len()];
    for record in rdr.records() {
        let record = record?;
        for (col, field) in columns.iter_mut().zip(record.iter()) {
            col.push(if is_missing_marker(field) { None } else { Some(field.trim().to_string()) });
        }
    }
    Ok((names, columns))
}

fn parse_number(s: &str, column: &str) -> Result<f64> {
    let v: f64 = s
        .parse()
        .map_err(|_| Error::InvalidInput(format!("column {column:?}: {s:?} is not a number")))?;
    if !v.is_finite() {
        return Err(Error::InvalidInput(format!("column {column:?}: non-finite value {s:?}")));
    }
    Ok(v)
}

fn encode_columns(
    names: &[String],
    raw: Vec<Vec<Option<String>>>,
    options: &CsvOptions,
    schema: Option<&[ColumnKind]>,
) -> Result<(Vec<ColumnKind>, Vec<Vec<Option<f64>>>)> {
    if let Some(schema) = schema {
        if schema.len() != names.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} columns, file has {}",
                schema.len(),
                names.len()
            )));
        }
    }
    let mut kinds = Vec::with_capacity(names.len());
    let mut columns = Vec::with_capacity(names.len());
    for (j, (name, col)) in names.iter().zip(raw).enumerate() {
        let kind = match schema {
            Some(schema) => schema[j].clone(),
            None => {
                let categorical = match options.kind_overrides.get(name) {
                    Some(k) => k.is_categorical(),
                    None => col.iter().flatten().any(|s| s.parse::<f64>().is_err()),
                };
                if categorical {
                    let mut levels: Vec<String> = col.iter().flatten().cloned().collect();
                    levels.sort();
                    levels.dedup();
                    if levels.is_empty() {
                        return Err(Error::InvalidInput(format!("categorical column {name:?} has no observed values")));
                    }
                    ColumnKind::Categorical { levels }
                } else {
                    ColumnKind::Continuous
                }
            }
        };
        let values = col
            .iter()
            .map(|cell| {
                cell.as_deref()
                    .map(|s| match &kind {
                        ColumnKind::Continuous => parse_number(s, name),
                        ColumnKind::Categorical { levels } => levels
                            .iter()
                            .position(|l| l == s)
                            .map(|p| p as f64)
                            .ok_or_else(|| Error::UnseenLabel { column: name.clone(), label: s.to_string() }),
                    })
                    .transpose()
            })
            .collect::<Result<Vec<_>>>()?;
        kinds.push(kind);
        columns.push(values);
    }
    Ok((kinds, columns))
}

/// Reads a table with missing cells. Empty fields, `NA` and `NaN` (any case)
/// mark missing cells. With `schema`, column kinds and levels are taken from
/// it instead of being inferred.
pub fn read_masked_csv(reader: impl Read, options: &CsvOptions, schema: Option<&[ColumnKind]>) -> Result<MaskedDataset> {
    let (names, raw) = read_raw(reader, options.delimiter)?;
    let (kinds, columns) = encode_columns(&names, raw, options, schema)?;
    MaskedDataset::new(names, kinds, columns)
}

/// Reads a table that must not contain missing cells.
pub fn read_complete_csv(reader: impl Read, options: &CsvOptions, schema: Option<&[ColumnKind]>) -> Result<CompleteDataset> {
    let masked = read_masked_csv(reader, options, schema)?;
    let mut missing = Vec::new();
    for j in 0..masked.n_cols() {
        for i in 0..masked.n_rows() {
            if masked.is_missing(i, j) {
                missing.push((i, j));
            }
        }
    }
    if let Some(&(i, j)) = missing.first() {
        return Err(Error::InvalidInput(format!(
            "{} missing cell(s) in a table expected to be complete, first at row {} column {:?}",
            missing.len(),
            i + 1,
            masked.name(j)
        )));
    }
    let columns = masked.columns().iter().map(|c| c.iter().map(|v| v.unwrap()).collect()).collect();
    CompleteDataset::new(masked.names().to_vec(), masked.kinds().to_vec(), columns)
}

fn format_cell(kind: &ColumnKind, value: Option<f64>) -> String {
    match (kind, value) {
        (_, None) => MISSING_OUT.to_string(),
        (ColumnKind::Continuous, Some(v)) => format!("{v}"),
        (ColumnKind::Categorical { levels }, Some(v)) => levels[v as usize].clone(),
    }
}

fn write_rows(
    writer: impl Write,
    delimiter: u8,
    names: &[String],
    n_rows: usize,
    cell: impl Fn(usize, usize) -> String,
) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().delimiter(delimiter).from_writer(writer);
    wtr.write_record(names)?;
    for i in 0..n_rows {
        wtr.write_record((0..names.len()).map(|j| cell(i, j)))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes a table; missing cells are written as `NA`.
pub fn write_masked_csv(writer: impl Write, data: &MaskedDataset, delimiter: u8) -> Result<()> {
    write_rows(writer, delimiter, data.names(), data.n_rows(), |i, j| format_cell(data.kind(j), data.get(i, j)))
}

pub fn write_complete_csv(writer: impl Write, data: &CompleteDataset, delimiter: u8) -> Result<()> {
    write_rows(writer, delimiter, data.names(), data.n_rows(), |i, j| {
        format_cell(data.kind(j), Some(data.get(i, j)))
    })
}

/// Writes the 0/1 missingness mask with the same header as the data.
pub fn write_mask_csv(writer: impl Write, data: &MaskedDataset, delimiter: u8) -> Result<()> {
    write_rows(writer, delimiter, data.names(), data.n_rows(), |i, j| {
        if data.is_missing(i, j) { "1" } else { "0" }.to_string()
    })
}
