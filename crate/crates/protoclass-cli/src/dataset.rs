//! CSV dataset ingestion and writing.
//!
//! Format: one header line of feature names, comma-separated decimal
//! numerals per row, and an optional final column named `label` carrying
//! class labels as text.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Column name that marks the trailing label column.
pub const LABEL_COLUMN: &str = "label";

/// In-memory tabular dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Ordered feature names (never includes the label column).
    pub schema: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Class labels aligned 1:1 with `rows`, when present.
    pub labels: Option<Vec<String>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows paired with labels, for priming.
    pub fn labeled_samples(&self) -> Result<Vec<(Vec<f64>, String)>> {
        let labels = self
            .labels
            .as_ref()
            .context("dataset has no label column")?;
        Ok(self
            .rows
            .iter()
            .cloned()
            .zip(labels.iter().cloned())
            .collect())
    }

    /// Distinct labels in first-appearance order.
    pub fn label_set(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        if let Some(labels) = &self.labels {
            for l in labels {
                if !out.iter().any(|x| x == l) {
                    out.push(l.clone());
                }
            }
        }
        out
    }

    /// Parse a CSV file.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
        Self::from_reader(file).with_context(|| format!("while parsing {}", path.display()))
    }

    /// Parse CSV content from any reader.
    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut csv_reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(reader);
        let headers = csv_reader.headers().context("missing header row")?.clone();
        if headers.is_empty() {
            bail!("header row is empty");
        }
        let labeled = headers.iter().next_back() == Some(LABEL_COLUMN);
        let feature_count = if labeled {
            headers.len() - 1
        } else {
            headers.len()
        };
        if feature_count == 0 {
            bail!("dataset has a label column but no feature columns");
        }
        let schema: Vec<String> = headers
            .iter()
            .take(feature_count)
            .map(String::from)
            .collect();

        let mut rows = Vec::new();
        let mut labels = if labeled { Some(Vec::new()) } else { None };
        for (i, record) in csv_reader.records().enumerate() {
            let line = i + 2; // header is line 1
            let record = record.with_context(|| format!("malformed row at line {line}"))?;
            let mut row = Vec::with_capacity(feature_count);
            for (j, cell) in record.iter().take(feature_count).enumerate() {
                let value: f64 = cell.trim().parse().with_context(|| {
                    format!(
                        "line {line}, column '{}': not a number: '{cell}'",
                        schema[j]
                    )
                })?;
                row.push(value);
            }
            rows.push(row);
            if let Some(labels) = labels.as_mut() {
                labels.push(record.iter().next_back().unwrap_or_default().to_string());
            }
        }
        Ok(Self {
            schema,
            rows,
            labels,
        })
    }

    /// Write the dataset as CSV. Floats use the shortest round-trip
    /// representation, so equal datasets produce byte-identical files.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file =
            File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut w = BufWriter::new(file);
        let mut header = self.schema.join(",");
        if self.labels.is_some() {
            header.push(',');
            header.push_str(LABEL_COLUMN);
        }
        writeln!(w, "{header}")?;
        for (i, row) in self.rows.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            match &self.labels {
                Some(labels) => writeln!(w, "{},{}", cells.join(","), labels[i])?,
                None => writeln!(w, "{}", cells.join(","))?,
            }
        }
        Ok(())
    }
}
