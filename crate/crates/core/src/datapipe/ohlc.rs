use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::DataError;

pub const CSV_HEADER: [&str; 6] = ["date", "open", "high", "low", "close", "volume"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Column {
    Open,
    High,
    Low,
    Close,
}

impl Column {
    pub const ALL: [Column; 4] = [Column::Open, Column::High, Column::Low, Column::Close];

    pub fn name(self) -> &'static str {
        match self {
            Column::Open => "open",
            Column::High => "high",
            Column::Low => "low",
            Column::Close => "close",
        }
    }
}

/// One trading day. Missing prices are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OhlcRecord {
    pub date: NaiveDate,
    pub open: Option<f64>,
    pub high: Option<f64>,
    pub low: Option<f64>,
    pub close: Option<f64>,
    pub volume: Option<u64>,
}

impl OhlcRecord {
    pub fn get(&self, column: Column) -> Option<f64> {
        match column {
            Column::Open => self.open,
            Column::High => self.high,
            Column::Low => self.low,
            Column::Close => self.close,
        }
    }

    pub fn get_mut(&mut self, column: Column) -> &mut Option<f64> {
        match column {
            Column::Open => &mut self.open,
            Column::High => &mut self.high,
            Column::Low => &mut self.low,
            Column::Close => &mut self.close,
        }
    }

    /// `low <= min(open, close) <= max(open, close) <= high` when all four
    /// prices are present; records with gaps are not judged.
    pub fn is_consistent(&self) -> bool {
        match (self.open, self.high, self.low, self.close) {
            (Some(o), Some(h), Some(l), Some(c)) => l <= o.min(c) && o.max(c) <= h,
            _ => true,
        }
    }
}

/// Date-ascending daily series for one symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct OhlcSeries {
    symbol: String,
    records: Vec<OhlcRecord>,
}

impl OhlcSeries {
    /// Requires strictly increasing dates.
    pub fn new(symbol: impl Into<String>, records: Vec<OhlcRecord>) -> Result<Self, DataError> {
        if let Some(w) = records.windows(2).find(|w| w[0].date >= w[1].date) {
            return Err(DataError::DateOrder(w[1].date));
        }
        Ok(OhlcSeries {
            symbol: symbol.into(),
            records,
        })
    }

    /// Sorts by date first; duplicate dates are still rejected.
    pub fn from_unsorted(symbol: impl Into<String>, mut records: Vec<OhlcRecord>) -> Result<Self, DataError> {
        records.sort_by_key(|r| r.date);
        Self::new(symbol, records)
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn records(&self) -> &[OhlcRecord] {
        &self.records
    }

    pub(crate) fn records_mut(&mut self) -> &mut [OhlcRecord] {
        &mut self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn column(&self, column: Column) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.get(column)).collect()
    }

    /// Every value of `column`; errors on the first gap.
    pub fn values(&self, column: Column) -> Result<Vec<f64>, DataError> {
        self.records
            .iter()
            .enumerate()
            .map(|(row, r)| {
                r.get(column).ok_or(DataError::MissingValue {
                    column: column.name(),
                    row,
                })
            })
            .collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.records.iter().map(|r| r.date).collect()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.records.first().map(|r| r.date)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.records.last().map(|r| r.date)
    }
}

/// Result of reading a CSV: the series plus the number of undated rows dropped.
#[derive(Debug, Clone)]
pub struct CsvImport {
    pub series: OhlcSeries,
    pub dropped_undated: usize,
}

fn parse_price(field: &str, row: usize, column: &'static str) -> Result<Option<f64>, DataError> {
    let field = field.trim();
    if field.is_empty() {
        return Ok(None);
    }
    field.parse::<f64>().map(Some).map_err(|_| DataError::Csv {
        line: row,
        detail: format!("{column}: `{field}` is not a number"),
    })
}

/// Reads the `date,open,high,low,close,volume` schema. Empty fields are
/// missing values; rows without a date are dropped and counted.
pub fn read_csv<R: Read>(reader: R, symbol: &str) -> Result<CsvImport, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| DataError::Csv {
        line: 1,
        detail: e.to_string(),
    })?;
    let got: Vec<String> = headers.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    if got != CSV_HEADER {
        return Err(DataError::Schema(format!(
            "expected header `{}`, got `{}`",
            CSV_HEADER.join(","),
            got.join(",")
        )));
    }
    let mut records = Vec::new();
    let mut dropped = 0;
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| DataError::Csv {
            line,
            detail: e.to_string(),
        })?;
        let date_field = row.get(0).unwrap_or("").trim();
        if date_field.is_empty() {
            dropped += 1;
            continue;
        }
        let date = NaiveDate::parse_from_str(date_field, "%Y-%m-%d").map_err(|e| DataError::Csv {
            line,
            detail: format!("date `{date_field}`: {e}"),
        })?;
        let field = |k: usize| row.get(k).unwrap_or("");
        let volume = match field(5).trim() {
            "" => None,
            v => Some(v.parse::<u64>().map_err(|_| DataError::Csv {
                line,
                detail: format!("volume `{v}` is not a nonnegative integer"),
            })?),
        };
        records.push(OhlcRecord {
            date,
            open: parse_price(field(1), line, "open")?,
            high: parse_price(field(2), line, "high")?,
            low: parse_price(field(3), line, "low")?,
            close: parse_price(field(4), line, "close")?,
            volume,
        });
    }
    Ok(CsvImport {
        series: OhlcSeries::from_unsorted(symbol, records)?,
        dropped_undated: dropped,
    })
}

/// Reads a CSV file; the symbol is the file stem.
pub fn read_csv_path(path: &Path) -> Result<CsvImport, DataError> {
    let symbol = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = File::open(path).map_err(|e| DataError::Io(format!("{}: {e}", path.display())))?;
    read_csv(file, &symbol)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the canonical schema with LF line endings. Prices use the shortest
/// representation that parses back to the same `f64`.
pub fn write_csv<W: Write>(series: &OhlcSeries, writer: W) -> Result<(), DataError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let io = |e: csv::Error| DataError::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in series.records() {
        w.write_record([
            r.date.format("%Y-%m-%d").to_string(),
            fmt_opt(r.open),
            fmt_opt(r.high),
            fmt_opt(r.low),
            fmt_opt(r.close),
            r.volume.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| DataError::Io(e.to_string()))
}
