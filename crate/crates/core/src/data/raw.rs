use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

/// Untyped tabular records as read from a CSV file with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
    ids: Vec<String>,
}

impl RawTable {
    /// Builds a table from in-memory rows. Record ids default to the 1-based
    /// row number unless `id_column` names a header.
    pub fn new(headers: Vec<String>, rows: Vec<Vec<String>>, id_column: Option<&str>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != headers.len() {
                return Err(Error::Ingestion {
                    row: (i + 1).to_string(),
                    variable: "*".into(),
                    message: format!("expected {} fields, found {}", headers.len(), row.len()),
                });
            }
        }
        let ids = match id_column {
            Some(name) => {
                let col = headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
                rows.iter().map(|r| r[col].clone()).collect()
            }
            None => (1..=rows.len()).map(|i| i.to_string()).collect(),
        };
        Ok(Self { headers, rows, ids })
    }

    pub fn from_reader<R: Read>(reader: R, id_column: Option<&str>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Self::new(headers, rows, id_column)
    }

    pub fn from_csv_path(path: impl AsRef<Path>, id_column: Option<&str>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(std::io::BufReader::new(file), id_column)
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn get(&self, row: usize, col: usize) -> &str {
        &self.rows[row][col]
    }

    /// Rows restricted to the given indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            headers: self.headers.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }

    /// Writes the table as CSV, without the synthetic id column.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}
