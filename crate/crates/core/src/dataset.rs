//! Tabular datasets of named real-valued columns.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dimension::VariableSpec;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset needs at least one row")]
    Empty,
    #[error("expected {expected} columns, row {row} has {found}")]
    Ragged { row: usize, expected: usize, found: usize },
    #[error("non-finite value in column `{column}` at row {row}")]
    NonFinite { column: String, row: usize },
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid number `{value}` in column `{column}`")]
    Parse { column: String, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Training,
    Test,
}

/// How a column takes part in modeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    /// Model input, also eligible as a linear-trend regressor.
    Input,
    /// Input generated by expansion; enters the correlation function only.
    Expanded,
    Output,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub spec: Option<VariableSpec>,
}

impl Column {
    pub fn input(name: impl Into<String>) -> Self {
        Column { name: name.into(), kind: ColumnKind::Input, spec: None }
    }

    pub fn output(name: impl Into<String>) -> Self {
        Column { name: name.into(), kind: ColumnKind::Output, spec: None }
    }

    pub fn with_spec(mut self, spec: VariableSpec) -> Self {
        self.spec = Some(spec);
        self
    }
}

/// An `n × k` matrix of finite values with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Column>,
    values: DMatrix<f64>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(columns: Vec<Column>, values: DMatrix<f64>, provenance: Provenance) -> Result<Self, DatasetError> {
        if values.nrows() == 0 {
            return Err(DatasetError::Empty);
        }
        if values.ncols() != columns.len() {
            return Err(DatasetError::Ragged { row: 0, expected: columns.len(), found: values.ncols() });
        }
        for (j, c) in columns.iter().enumerate() {
            if columns[..j].iter().any(|o| o.name == c.name) {
                return Err(DatasetError::DuplicateColumn(c.name.clone()));
            }
            if let Some(row) = values.column(j).iter().position(|v| !v.is_finite()) {
                return Err(DatasetError::NonFinite { column: c.name.clone(), row });
            }
        }
        Ok(Dataset { columns, values, provenance })
    }

    /// Builds a dataset from column vectors of equal length.
    pub fn from_columns(columns: Vec<(Column, Vec<f64>)>, provenance: Provenance) -> Result<Self, DatasetError> {
        let n = columns.first().map(|c| c.1.len()).unwrap_or(0);
        if let Some((_, v)) = columns.iter().find(|(_, v)| v.len() != n) {
            return Err(DatasetError::Ragged { row: 0, expected: n, found: v.len() });
        }
        let k = columns.len();
        let mut values = DMatrix::zeros(n, k);
        let mut heads = Vec::with_capacity(k);
        for (j, (c, v)) in columns.into_iter().enumerate() {
            values.column_mut(j).copy_from_slice(&v);
            heads.push(c);
        }
        Dataset::new(heads, values, provenance)
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<DVector<f64>> {
        self.column_index(name).map(|j| self.values.column(j).into_owned())
    }

    pub fn column_values(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }

    pub fn require(&self, name: &str) -> Result<usize, DatasetError> {
        self.column_index(name).ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    }

    pub fn get(&self, row: usize, name: &str) -> Option<f64> {
        self.column_index(name).map(|j| self.values[(row, j)])
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    /// Indices of columns of the given kinds, in column order.
    pub fn indices_of(&self, kinds: &[ColumnKind]) -> Vec<usize> {
        (0..self.columns.len()).filter(|&j| kinds.contains(&self.columns[j].kind)).collect()
    }

    /// The single output column, if present.
    pub fn output_index(&self) -> Option<usize> {
        self.columns.iter().position(|c| c.kind == ColumnKind::Output)
    }

    /// Columns `idx` as an `n × idx.len()` matrix.
    pub fn select(&self, idx: &[usize]) -> DMatrix<f64> {
        self.values.select_columns(idx)
    }

    /// New dataset keeping only `idx` columns.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            columns: idx.iter().map(|&j| self.columns[j].clone()).collect(),
            values: self.values.select_columns(idx),
            provenance: self.provenance,
        }
    }

    /// Appends a column; fails on duplicate names, length mismatch or non-finite values.
    pub fn push_column(&mut self, column: Column, values: &[f64]) -> Result<(), DatasetError> {
        if values.len() != self.nrows() {
            return Err(DatasetError::Ragged { row: 0, expected: self.nrows(), found: values.len() });
        }
        if self.column_index(&column.name).is_some() {
            return Err(DatasetError::DuplicateColumn(column.name));
        }
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(DatasetError::NonFinite { column: column.name, row });
        }
        let k = self.ncols();
        let mut grown = std::mem::replace(&mut self.values, DMatrix::zeros(0, 0)).insert_column(k, 0.0);
        grown.column_mut(k).copy_from_slice(values);
        self.values = grown;
        self.columns.push(column);
        Ok(())
    }

    /// Hash of names, kinds and exact bit patterns of every value.
    pub fn checksum(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for c in &self.columns {
            c.name.hash(&mut h);
        }
        self.values.nrows().hash(&mut h);
        for v in self.values.iter() {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    /// Writes a header row of column names followed by one row per record.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.column_names())?;
        for i in 0..self.nrows() {
            w.write_record(self.values.row(i).iter().map(|v| format!("{v:e}")))?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads a CSV with a header row; every column is tagged as an input.
    pub fn read_csv<R: Read>(reader: R, provenance: Provenance) -> Result<Dataset, DatasetError> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let names: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut rows: Vec<f64> = Vec::new();
        let mut n = 0;
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != names.len() {
                return Err(DatasetError::Ragged { row: i, expected: names.len(), found: rec.len() });
            }
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| DatasetError::Parse { column: names[j].clone(), value: field.to_string() })?;
                rows.push(v);
            }
            n += 1;
        }
        let values = DMatrix::from_row_slice(n, names.len(), &rows);
        Dataset::new(names.into_iter().map(Column::input).collect(), values, provenance)
    }

    /// Retags the named column as the output.
    pub fn mark_output(&mut self, name: &str) -> Result<(), DatasetError> {
        let j = self.require(name)?;
        for c in &mut self.columns {
            if c.kind == ColumnKind::Output {
                c.kind = ColumnKind::Input;
            }
        }
        self.columns[j].kind = ColumnKind::Output;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Dataset {
        Dataset::from_columns(
            vec![
                (Column::input("a"), vec![1.0, 2.0, 3.0]),
                (Column::output("y"), vec![0.5, -1.0, 1e-300]),
            ],
            Provenance::Training,
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            Dataset::from_columns(vec![(Column::input("a"), vec![])], Provenance::Test),
            Err(DatasetError::Empty)
        ));
        assert!(matches!(
            Dataset::from_columns(vec![(Column::input("a"), vec![f64::NAN])], Provenance::Test),
            Err(DatasetError::NonFinite { .. })
        ));
        assert!(matches!(
            Dataset::from_columns(
                vec![(Column::input("a"), vec![1.0]), (Column::input("a"), vec![2.0])],
                Provenance::Test
            ),
            Err(DatasetError::DuplicateColumn(_))
        ));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = small();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("a,y\n"));
        let mut back = Dataset::read_csv(buf.as_slice(), Provenance::Training).unwrap();
        back.mark_output("y").unwrap();
        assert_eq!(back.values(), d.values());
        assert_eq!(back.checksum(), d.checksum());
    }

    #[test]
    fn push_and_select() {
        let mut d = small();
        d.push_column(Column::input("b"), &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(d.indices_of(&[ColumnKind::Input]), vec![0, 2]);
        assert_eq!(d.output_index(), Some(1));
        assert_eq!(d.get(2, "b"), Some(6.0));
        assert!(d.push_column(Column::input("b"), &[0.0; 3]).is_err());
        assert!(d.push_column(Column::input("c"), &[0.0; 2]).is_err());
    }
}
