//! Dense embedding tables keyed by `embedding_ref`.
//!
//! On disk a table is a headerless CSV matrix (row `r` holds the embedding of
//! `embedding_ref == r`) plus a JSON sidecar declaring the dimension.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    values: Vec<f64>,
}

/// Sidecar metadata stored next to an embedding CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSidecar {
    pub dim: usize,
    pub rows: usize,
    pub format: String,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable { dim, values: Vec::new() }
    }

    pub fn from_rows(dim: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut table = EmbeddingTable::new(dim);
        for row in rows {
            table.push(&row)?;
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.values.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Appends a row and returns its index.
    pub fn push(&mut self, row: &[f64]) -> Result<usize> {
        if row.len() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                actual: row.len(),
            });
        }
        self.values.extend_from_slice(row);
        Ok(self.len() - 1)
    }

    pub fn row(&self, r: usize) -> Option<&[f64]> {
        let start = r.checked_mul(self.dim)?;
        self.values.get(start..start + self.dim)
    }

    pub fn sidecar(&self) -> EmbeddingSidecar {
        EmbeddingSidecar {
            dim: self.dim,
            rows: self.len(),
            format: "csv".to_string(),
        }
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
        for r in 0..self.len() {
            writer.write_record(self.row(r).unwrap().iter().map(|v| v.to_string()))?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(source: R, sidecar: &EmbeddingSidecar) -> Result<Self> {
        if sidecar.format != "csv" {
            return Err(Error::Config(format!("unsupported embedding format {:?}", sidecar.format)));
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(source);
        let mut table = EmbeddingTable::new(sidecar.dim);
        for (idx, record) in reader.records().enumerate() {
            let record = record?;
            let line = idx + 1;
            if record.len() != sidecar.dim {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} values, found {}", sidecar.dim, record.len()),
                });
            }
            for field in record.iter() {
                let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("invalid embedding value {field:?}"),
                })?;
                table.values.push(v);
            }
        }
        if table.len() != sidecar.rows {
            return Err(Error::validation(
                None,
                format!("sidecar declares {} rows, file has {}", sidecar.rows, table.len()),
            ));
        }
        Ok(table)
    }
}
