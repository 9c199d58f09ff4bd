use std::collections::BTreeMap;
use std::io::Read;

use super::EconError;
use crate::measures::{write_dataset, MoveObservation};

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<Option<f64>>),
    Text(Vec<Option<String>>),
}

impl Column {
    fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Text(v) => v.len(),
        }
    }

    fn is_missing(&self, i: usize) -> bool {
        match self {
            Column::Numeric(v) => v[i].is_none(),
            Column::Text(v) => v[i].is_none(),
        }
    }

    /// Cell rendered as text, `None` when missing.
    pub fn text_at(&self, i: usize) -> Option<String> {
        match self {
            Column::Numeric(v) => v[i].map(|x| x.to_string()),
            Column::Text(v) => v[i].clone(),
        }
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&i| v[i]).collect()),
            Column::Text(v) => Column::Text(rows.iter().map(|&i| v[i].clone()).collect()),
        }
    }
}

/// Named, equally long columns. A column read from text is numeric when
/// every non-empty cell parses as a number.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Frame {
    n_rows: usize,
    names: Vec<String>,
    columns: BTreeMap<String, Column>,
}

impl Frame {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Column names in insertion order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn push(&mut self, name: &str, column: Column) -> Result<(), EconError> {
        if self.names.is_empty() {
            self.n_rows = column.len();
        } else if column.len() != self.n_rows {
            return Err(EconError::InvalidSpec(format!(
                "column '{name}' has {} rows, expected {}",
                column.len(),
                self.n_rows
            )));
        }
        if self.columns.insert(name.to_string(), column).is_none() {
            self.names.push(name.to_string());
        }
        Ok(())
    }

    pub fn push_numeric(&mut self, name: &str, values: Vec<f64>) -> Result<(), EconError> {
        self.push(name, Column::Numeric(values.into_iter().map(Some).collect()))
    }

    pub fn push_text(&mut self, name: &str, values: Vec<String>) -> Result<(), EconError> {
        self.push(name, Column::Text(values.into_iter().map(Some).collect()))
    }

    pub fn column(&self, name: &str) -> Result<&Column, EconError> {
        self.columns
            .get(name)
            .ok_or_else(|| EconError::UnknownColumn(name.to_string()))
    }

    pub fn numeric(&self, name: &str) -> Result<&[Option<f64>], EconError> {
        match self.column(name)? {
            Column::Numeric(v) => Ok(v),
            Column::Text(_) => Err(EconError::InvalidSpec(format!(
                "column '{name}' is not numeric"
            ))),
        }
    }

    pub fn is_missing(&self, name: &str, row: usize) -> Result<bool, EconError> {
        Ok(self.column(name)?.is_missing(row))
    }

    /// Rows `rows`, in that order.
    pub fn select_rows(&self, rows: &[usize]) -> Frame {
        Frame {
            n_rows: rows.len(),
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|(k, c)| (k.clone(), c.select(rows)))
                .collect(),
        }
    }

    pub fn from_csv<R: Read>(input: R) -> Result<Frame, EconError> {
        let mut reader = csv::Reader::from_reader(input);
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| EconError::Io(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut cells: Vec<Vec<Option<String>>> = vec![Vec::new(); headers.len()];
        for record in reader.records() {
            let record = record.map_err(|e| EconError::Io(e.to_string()))?;
            for (j, cell) in record.iter().enumerate().take(headers.len()) {
                cells[j].push((!cell.is_empty()).then(|| cell.to_string()));
            }
        }
        let mut frame = Frame::new();
        for (name, col) in headers.iter().zip(cells) {
            let parsed: Option<Vec<Option<f64>>> = col
                .iter()
                .map(|c| match c {
                    None => Some(None),
                    Some(s) => s.parse::<f64>().ok().map(Some),
                })
                .collect();
            let has_values = col.iter().any(Option::is_some);
            let column = match parsed {
                Some(v) if has_values => Column::Numeric(v),
                _ if !has_values => Column::Numeric(vec![None; col.len()]),
                _ => Column::Text(col),
            };
            frame.push(name, column)?;
        }
        if headers.is_empty() {
            frame.n_rows = 0;
        }
        Ok(frame)
    }

    pub fn from_observations(rows: &[MoveObservation]) -> Result<Frame, EconError> {
        let mut buf = Vec::new();
        write_dataset(&mut buf, rows).map_err(|e| EconError::Io(e.to_string()))?;
        let mut frame = Frame::from_csv(buf.as_slice())?;
        // identifiers stay text even when they look numeric
        for id in ["game_id", "player_id"] {
            if let Ok(col) = frame.column(id) {
                if let Column::Numeric(_) = col {
                    let text = (0..frame.n_rows).map(|i| col.text_at(i)).collect();
                    frame.columns.insert(id.to_string(), Column::Text(text));
                }
            }
        }
        Ok(frame)
    }
}
