//! Flat CSV artifacts: `# meta key=value` header lines, one header row,
//! numeric rows printed with 17 significant digits, optional trailing
//! `#` comment lines. LF line endings throughout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use thiserror::Error;

const META_PREFIX: &str = "# meta ";

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}, column {column}: cannot parse {value:?} as a number")]
    Number { row: usize, column: String, value: String },
    #[error("missing column {0:?}")]
    MissingColumn(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

/// Round-trip float formatting: 17 significant digits in scientific form.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// A document assembled in memory and rendered in one go.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvDoc {
    pub meta: BTreeMap<String, String>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Lines emitted after the data, each prefixed with `# `.
    pub trailer: Vec<String>,
}

impl CsvDoc {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn meta(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.meta.insert(key.into(), value.to_string());
        self
    }

    pub fn push_row(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_trailer(&mut self, line: impl Into<String>) {
        self.trailer.push(line.into());
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            // Values never carry newlines into the header.
            let _ = writeln!(out, "{META_PREFIX}{k}={}", v.replace('\n', " "));
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Num(v) => format_float(*v),
                    Cell::Text(s) => s.clone(),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        for line in &self.trailer {
            let _ = writeln!(out, "# {line}");
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.render().as_bytes())
    }
}

/// A CSV file read back: meta header, columns and raw string records.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub meta: BTreeMap<String, String>,
    pub header: Vec<String>,
    pub records: Vec<Vec<String>>,
    /// Non-meta comment lines, without the leading `# `.
    pub comments: Vec<String>,
}

impl CsvTable {
    pub fn parse(text: &str) -> Result<Self, CsvError> {
        let mut meta = BTreeMap::new();
        let mut comments = Vec::new();
        for line in text.lines() {
            if let Some(kv) = line.strip_prefix(META_PREFIX) {
                if let Some((k, v)) = kv.split_once('=') {
                    meta.insert(k.to_string(), v.to_string());
                }
            } else if let Some(c) = line.strip_prefix('#') {
                comments.push(c.strip_prefix(' ').unwrap_or(c).to_string());
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header = reader.headers()?.iter().map(str::to_string).collect();
        let records = reader
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            meta,
            header,
            records,
            comments,
        })
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self, CsvError> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        Self::parse(&text)
    }

    pub fn column_index(&self, name: &str) -> Result<usize, CsvError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CsvError::MissingColumn(name.to_string()))
    }

    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>, CsvError> {
        let i = self.column_index(name)?;
        self.records
            .iter()
            .enumerate()
            .map(|(row, rec)| {
                let s = rec.get(i).map(String::as_str).unwrap_or("");
                s.parse::<f64>().map_err(|_| CsvError::Number {
                    row,
                    column: name.to_string(),
                    value: s.to_string(),
                })
            })
            .collect()
    }
}
