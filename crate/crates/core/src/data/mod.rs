//! Incomplete and complete tabular data.
//!
//! Columns are stored column-major. Continuous cells hold finite `f64`
//! values; categorical cells hold the index of their level, encoded as an
//! exact integer-valued `f64`. A missing cell is `None`, so the mask is
//! always derived from the values.

mod csv_io;
mod pattern;

pub use csv_io::{read_complete_csv, read_masked_csv, write_complete_csv, write_mask_csv, write_masked_csv, CsvOptions};
pub use pattern::{fallback_companion, PatternIndex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Categorical { levels: Vec<String> },
}

impl ColumnKind {
    pub fn categorical<S: Into<String>>(levels: impl IntoIterator<Item = S>) -> Result<Self> {
        let levels: Vec<String> = levels.into_iter().map(Into::into).collect();
        if levels.is_empty() {
            return Err(Error::InvalidInput("categorical column without levels".into()));
        }
        let mut sorted = levels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != levels.len() {
            return Err(Error::InvalidInput("duplicate categorical levels".into()));
        }
        Ok(ColumnKind::Categorical { levels })
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self, ColumnKind::Categorical { .. })
    }

    /// Width of the encoded value: 1 for continuous, the level count otherwise.
    pub fn arity(&self) -> usize {
        match self {
            ColumnKind::Continuous => 1,
            ColumnKind::Categorical { levels } => levels.len(),
        }
    }

    pub fn levels(&self) -> &[String] {
        match self {
            ColumnKind::Continuous => &[],
            ColumnKind::Categorical { levels } => levels,
        }
    }

    fn validate(&self, value: f64, column: &str) -> Result<()> {
        match self {
            ColumnKind::Continuous if !value.is_finite() => Err(Error::NonFinite {
                value,
                context: format!("column {column:?}"),
            }),
            ColumnKind::Categorical { levels }
                if !(value >= 0.0 && value.fract() == 0.0 && (value as usize) < levels.len()) =>
            {
                Err(Error::InvalidInput(format!(
                    "level code {value} out of range for column {column:?}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// One-hot encoding of a categorical level code over `p` levels.
pub fn one_hot_code(code: f64, p: usize) -> Vec<f64> {
    let mut v = vec![0.0; p];
    v[code as usize] = 1.0;
    v
}

/// Encodes a label of a categorical column as a one-hot vector.
pub fn one_hot_label(kind: &ColumnKind, column: &str, label: &str) -> Result<Vec<f64>> {
    let levels = kind.levels();
    let code = levels
        .iter()
        .position(|l| l == label)
        .ok_or_else(|| Error::UnseenLabel { column: column.to_string(), label: label.to_string() })?;
    Ok(one_hot_code(code as f64, levels.len()))
}

/// Inverse of [`one_hot_code`]: the level label of a one-hot vector.
pub fn decode_one_hot<'a>(kind: &'a ColumnKind, v: &[f64]) -> Option<&'a str> {
    let levels = kind.levels();
    if v.len() != levels.len() || v.iter().filter(|&&x| x == 1.0).count() != 1 {
        return None;
    }
    v.iter().position(|&x| x == 1.0).map(|i| levels[i].as_str())
}

/// Encodes a stored cell value (a number, or a level code) as the vector the
/// energy kernels compare: itself for continuous columns, one-hot otherwise.
pub fn encode_cell(kind: &ColumnKind, value: f64) -> Vec<f64> {
    match kind {
        ColumnKind::Continuous => vec![value],
        ColumnKind::Categorical { levels } => one_hot_code(value, levels.len()),
    }
}

fn check_header(names: &[String], kinds: &[ColumnKind], n_columns: usize) -> Result<()> {
    if names.len() != n_columns || kinds.len() != n_columns {
        return Err(Error::ShapeMismatch(format!(
            "{} names, {} kinds, {} columns",
            names.len(),
            kinds.len(),
            n_columns
        )));
    }
    Ok(())
}

/// A table with missing cells.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedDataset {
    names: Vec<String>,
    kinds: Vec<ColumnKind>,
    columns: Vec<Vec<Option<f64>>>,
    n_rows: usize,
}

impl MaskedDataset {
    pub fn new(names: Vec<String>, kinds: Vec<ColumnKind>, columns: Vec<Vec<Option<f64>>>) -> Result<Self> {
        check_header(&names, &kinds, columns.len())?;
        let n_rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(Error::ShapeMismatch("columns of unequal length".into()));
        }
        for ((name, kind), col) in names.iter().zip(&kinds).zip(&columns) {
            for v in col.iter().flatten() {
                kind.validate(*v, name)?;
            }
        }
        Ok(Self { names, kinds, columns, n_rows })
    }

    /// Builds a continuous-only dataset from row-major values.
    pub fn from_rows(names: &[&str], rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let d = names.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::ShapeMismatch("row width differs from header".into()));
        }
        let columns = (0..d).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Self::new(
            names.iter().map(|s| s.to_string()).collect(),
            vec![ColumnKind::Continuous; d],
            columns,
        )
    }

    /// Blanks the cells of `complete` where `is_missing(row, col)` holds.
    pub fn from_complete(complete: &CompleteDataset, is_missing: impl Fn(usize, usize) -> bool) -> Self {
        let columns = complete
            .columns
            .iter()
            .enumerate()
            .map(|(j, col)| {
                col.iter()
                    .enumerate()
                    .map(|(i, &v)| if is_missing(i, j) { None } else { Some(v) })
                    .collect()
            })
            .collect();
        Self {
            names: complete.names.clone(),
            kinds: complete.kinds.clone(),
            columns,
            n_rows: complete.n_rows,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, j: usize) -> &str {
        &self.names[j]
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn kind(&self, j: usize) -> &ColumnKind {
        &self.kinds[j]
    }

    pub fn column(&self, j: usize) -> &[Option<f64>] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<Option<f64>>] {
        &self.columns
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.columns[j][i]
    }

    pub fn is_missing(&self, i: usize, j: usize) -> bool {
        self.columns[j][i].is_none()
    }

    /// Row `i` of the missingness mask, `true` marking a missing cell.
    pub fn mask_row(&self, i: usize) -> Vec<bool> {
        self.columns.iter().map(|c| c[i].is_none()).collect()
    }

    pub fn missing_count(&self, j: usize) -> usize {
        self.columns[j].iter().filter(|v| v.is_none()).count()
    }

    pub fn total_missing(&self) -> usize {
        (0..self.n_cols()).map(|j| self.missing_count(j)).sum()
    }

    pub fn missing_fraction(&self) -> f64 {
        self.total_missing() as f64 / (self.n_rows * self.n_cols()).max(1) as f64
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            names: cols.iter().map(|&j| self.names[j].clone()).collect(),
            kinds: cols.iter().map(|&j| self.kinds[j].clone()).collect(),
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            n_rows: self.n_rows,
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            kinds: self.kinds.clone(),
            columns: self.columns.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
            n_rows: rows.len(),
        }
    }

    /// Checks that `imputed` has the same layout and agrees on every
    /// observed cell.
    pub fn check_completion(&self, imputed: &CompleteDataset) -> Result<()> {
        if imputed.n_rows() != self.n_rows || imputed.n_cols() != self.n_cols() {
            return Err(Error::ShapeMismatch(format!(
                "imputed is {}x{}, masked is {}x{}",
                imputed.n_rows(),
                imputed.n_cols(),
                self.n_rows,
                self.n_cols()
            )));
        }
        if imputed.names() != self.names() || imputed.kinds() != self.kinds() {
            return Err(Error::ShapeMismatch("column names or kinds differ".into()));
        }
        let mut cells = Vec::new();
        for (j, col) in self.columns.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                if let Some(v) = v {
                    if *v != imputed.get(i, j) {
                        cells.push((i, j));
                    }
                }
            }
        }
        if cells.is_empty() {
            Ok(())
        } else {
            Err(Error::ObservedMismatch { cells })
        }
    }
}

/// A table without missing cells.
#[derive(Clone, Debug, PartialEq)]
pub struct CompleteDataset {
    names: Vec<String>,
    kinds: Vec<ColumnKind>,
    columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl CompleteDataset {
    pub fn new(names: Vec<String>, kinds: Vec<ColumnKind>, columns: Vec<Vec<f64>>) -> Result<Self> {
        check_header(&names, &kinds, columns.len())?;
        let n_rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(Error::ShapeMismatch("columns of unequal length".into()));
        }
        for ((name, kind), col) in names.iter().zip(&kinds).zip(&columns) {
            for v in col {
                kind.validate(*v, name)?;
            }
        }
        Ok(Self { names, kinds, columns, n_rows })
    }

    /// Builds a continuous-only dataset from row-major values.
    pub fn from_rows(names: &[&str], rows: &[Vec<f64>]) -> Result<Self> {
        let d = names.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::ShapeMismatch("row width differs from header".into()));
        }
        let columns = (0..d).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Self::new(
            names.iter().map(|s| s.to_string()).collect(),
            vec![ColumnKind::Continuous; d],
            columns,
        )
    }

    /// Fills the missing cells of `masked` column by column. `fill(j)` must
    /// yield exactly one value per missing cell of column `j`, top to bottom.
    pub(crate) fn fill_from(masked: &MaskedDataset, mut fill: impl FnMut(usize, usize) -> f64) -> Self {
        let columns = masked
            .columns
            .iter()
            .enumerate()
            .map(|(j, col)| {
                col.iter()
                    .enumerate()
                    .map(|(i, v)| v.unwrap_or_else(|| fill(i, j)))
                    .collect()
            })
            .collect();
        Self {
            names: masked.names.clone(),
            kinds: masked.kinds.clone(),
            columns,
            n_rows: masked.n_rows,
        }
    }

    pub(crate) fn from_parts_unchecked(
        names: Vec<String>,
        kinds: Vec<ColumnKind>,
        columns: Vec<Vec<f64>>,
    ) -> Self {
        let n_rows = columns.first().map_or(0, Vec::len);
        Self { names, kinds, columns, n_rows }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, j: usize) -> &str {
        &self.names[j]
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn kind(&self, j: usize) -> &ColumnKind {
        &self.kinds[j]
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.columns[j][i]
    }

    pub fn to_masked(&self) -> MaskedDataset {
        MaskedDataset::from_complete(self, |_, _| false)
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            names: cols.iter().map(|&j| self.names[j].clone()).collect(),
            kinds: cols.iter().map(|&j| self.kinds[j].clone()).collect(),
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            n_rows: self.n_rows,
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            names: self.names.clone(),
            kinds: self.kinds.clone(),
            columns: self.columns.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
            n_rows: rows.len(),
        }
    }

    /// Row-major numeric matrix with categorical columns expanded one-hot.
    pub fn encoded_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows)
            .map(|i| {
                self.kinds
                    .iter()
                    .zip(&self.columns)
                    .flat_map(|(kind, col)| encode_cell(kind, col[i]))
                    .collect()
            })
            .collect()
    }
}

/// One-hot encodes categorical column `j`; missing rows stay `None` as a whole.
pub fn one_hot(data: &MaskedDataset, j: usize) -> Result<Vec<Option<Vec<f64>>>> {
    let kind = data.kind(j);
    let p = match kind {
        ColumnKind::Categorical { levels } => levels.len(),
        ColumnKind::Continuous => {
            return Err(Error::InvalidInput(format!("column {:?} is not categorical", data.name(j))))
        }
    };
    Ok(data.column(j).iter().map(|v| v.map(|c| one_hot_code(c, p))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abc() -> ColumnKind {
        ColumnKind::categorical(["a", "b", "c"]).unwrap()
    }

    #[test]
    fn one_hot_examples() {
        let kind = abc();
        assert_eq!(one_hot_label(&kind, "x", "b").unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(one_hot_label(&kind, "x", "a").unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(matches!(one_hot_label(&kind, "x", "z"), Err(Error::UnseenLabel { .. })));

        let data = MaskedDataset::new(
            vec!["x".into(), "y".into()],
            vec![kind, ColumnKind::Continuous],
            vec![vec![Some(1.0), None, Some(0.0)], vec![Some(0.5), Some(1.0), None]],
        )
        .unwrap();
        let enc = one_hot(&data, 0).unwrap();
        assert_eq!(enc[0], Some(vec![0.0, 1.0, 0.0]));
        assert_eq!(enc[1], None);
        assert_eq!(enc[2], Some(vec![1.0, 0.0, 0.0]));
        assert!(one_hot(&data, 1).is_err());
    }

    #[test]
    fn one_hot_decode_roundtrip() {
        let kind = abc();
        for label in kind.levels() {
            let v = one_hot_label(&kind, "x", label).unwrap();
            assert_eq!(decode_one_hot(&kind, &v), Some(label.as_str()));
        }
    }

    #[test]
    fn level_invariants() {
        assert!(ColumnKind::categorical(Vec::<String>::new()).is_err());
        assert!(ColumnKind::categorical(["a", "a"]).is_err());
        let bad = MaskedDataset::new(vec!["x".into()], vec![abc()], vec![vec![Some(3.0)]]);
        assert!(bad.is_err());
        let inf = MaskedDataset::from_rows(&["a"], &[vec![Some(f64::INFINITY)]]);
        assert!(matches!(inf, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn completion_check_reports_cells() {
        let masked = MaskedDataset::from_rows(&["a", "b"], &[vec![Some(1.0), None], vec![Some(2.0), Some(3.0)]]).unwrap();
        let good = CompleteDataset::from_rows(&["a", "b"], &[vec![1.0, 9.0], vec![2.0, 3.0]]).unwrap();
        masked.check_completion(&good).unwrap();
        let bad = CompleteDataset::from_rows(&["a", "b"], &[vec![1.0, 9.0], vec![2.5, 3.0]]).unwrap();
        match masked.check_completion(&bad) {
            Err(Error::ObservedMismatch { cells }) => assert_eq!(cells, vec![(1, 0)]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unmasking_reproduces_complete() {
        let complete = CompleteDataset::from_rows(&["a", "b"], &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let masked = MaskedDataset::from_complete(&complete, |i, j| i == j);
        assert_eq!(masked.total_missing(), 2);
        masked.check_completion(&complete).unwrap();
        assert_eq!(complete.to_masked().total_missing(), 0);
    }
}
