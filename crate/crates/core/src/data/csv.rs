//! CSV series format: header `timestamp,dim_0,…,dim_{D-1}[,is_anomaly]`, one
//! row per time step. Empty cells mark missing values.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use nalgebra::DVector;

use super::LabeledSeries;
use crate::error::{Error, Result};

pub const LABEL_COLUMN: &str = "is_anomaly";
pub const TIME_COLUMN: &str = "timestamp";

/// One parsed row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub raw_timestamp: String,
    pub time: f64,
    pub values: DVector<f64>,
    pub label: Option<bool>,
    /// 1-based line number in the file.
    pub line: usize,
}

/// Row-at-a-time reader that holds no more than one record in memory.
pub struct SeriesReader<R: Read> {
    reader: csv::Reader<R>,
    record: csv::StringRecord,
    names: Vec<String>,
    has_labels: bool,
    last_time: Option<f64>,
}

impl SeriesReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| {
            Error::Input(format!("cannot open {}: {e}", path.display()))
        })?;
        Self::from_reader(BufReader::new(file))
    }
}

impl<R: Read> SeriesReader<R> {
    pub fn from_reader(r: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(r);
        let header = reader
            .headers()
            .map_err(|e| parse_error(e, 1))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect::<Vec<_>>();
        if header.first().map(String::as_str) != Some(TIME_COLUMN) {
            return Err(Error::Parse {
                line: 1,
                message: format!("first column must be `{TIME_COLUMN}`"),
            });
        }
        let has_labels = header.len() > 1 && header.last().map(String::as_str) == Some(LABEL_COLUMN);
        let end = header.len() - usize::from(has_labels);
        let names = header[1..end].to_vec();
        if names.is_empty() {
            return Err(Error::Parse {
                line: 1,
                message: "no value columns".into(),
            });
        }
        Ok(Self {
            reader,
            record: csv::StringRecord::new(),
            names,
            has_labels,
            last_time: None,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dims(&self) -> usize {
        self.names.len()
    }

    pub fn has_labels(&self) -> bool {
        self.has_labels
    }

    pub fn next_row(&mut self) -> Option<Result<CsvRow>> {
        match self.reader.read_record(&mut self.record) {
            Ok(false) => None,
            Ok(true) => Some(self.parse_record()),
            Err(e) => Some(Err(parse_error(e, 0))),
        }
    }

    fn parse_record(&mut self) -> Result<CsvRow> {
        let line = self.record.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| Error::Parse { line, message };
        let expected = 1 + self.names.len() + usize::from(self.has_labels);
        if self.record.len() != expected {
            return Err(bad(format!("expected {expected} fields, found {}", self.record.len())));
        }
        let raw = self.record[0].trim().to_string();
        let time = parse_timestamp(&raw).ok_or_else(|| bad(format!("unparseable timestamp `{raw}`")))?;
        if let Some(prev) = self.last_time {
            if time <= prev {
                return Err(Error::Input(format!(
                    "timestamps must be strictly increasing (line {line}: `{raw}`)"
                )));
            }
        }
        self.last_time = Some(time);
        let mut values = DVector::zeros(self.names.len());
        for (i, cell) in self.record.iter().skip(1).take(self.names.len()).enumerate() {
            values[i] = parse_value(cell).ok_or_else(|| bad(format!("invalid number `{cell}` in column {}", i + 1)))?;
        }
        let label = if self.has_labels {
            let cell = self.record[expected - 1].trim();
            Some(match cell {
                "1" | "true" | "True" => true,
                "0" | "false" | "False" => false,
                other => return Err(bad(format!("invalid label `{other}`"))),
            })
        } else {
            None
        };
        Ok(CsvRow {
            raw_timestamp: raw,
            time,
            values,
            label,
            line,
        })
    }
}

impl<R: Read> Iterator for SeriesReader<R> {
    type Item = Result<CsvRow>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_row()
    }
}

fn parse_error(e: csv::Error, fallback_line: usize) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            line,
            message: format!("{kind:?}"),
        },
    }
}

fn parse_value(cell: &str) -> Option<f64> {
    let cell = cell.trim();
    if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
        return Some(f64::NAN);
    }
    cell.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Numeric timestamps as-is; ISO-8601 dates and date-times as seconds since
/// the Unix epoch (naive times are read as UTC).
pub fn parse_timestamp(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(seconds(dt.naive_utc()));
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(seconds(dt));
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(seconds)
}

fn seconds(dt: NaiveDateTime) -> f64 {
    let utc = dt.and_utc();
    utc.timestamp() as f64 + f64::from(utc.timestamp_subsec_nanos()) * 1e-9
}

pub fn read_series(r: impl Read) -> Result<LabeledSeries> {
    let mut reader = SeriesReader::from_reader(r)?;
    let names = reader.names().to_vec();
    let has_labels = reader.has_labels();
    let mut series = LabeledSeries {
        names,
        raw_timestamps: Vec::new(),
        times: Vec::new(),
        values: Vec::new(),
        labels: has_labels.then(Vec::new),
    };
    for row in &mut reader {
        let row = row?;
        series.raw_timestamps.push(row.raw_timestamp);
        series.times.push(row.time);
        series.values.push(row.values);
        if let (Some(labels), Some(l)) = (series.labels.as_mut(), row.label) {
            labels.push(l);
        }
    }
    Ok(series)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<LabeledSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    read_series(BufReader::new(file))
}

/// Shortest representation that parses back to the same value; empty for missing.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn write_series(w: impl Write, series: &LabeledSeries) -> Result<()> {
    series.validate()?;
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    let mut header = vec![TIME_COLUMN.to_string()];
    header.extend(series.names.iter().cloned());
    if series.labels.is_some() {
        header.push(LABEL_COLUMN.into());
    }
    out.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for t in 0..series.len() {
        row.clear();
        row.push(series.raw_timestamps[t].clone());
        row.extend(series.values[t].iter().map(|v| format_value(*v)));
        if let Some(l) = &series.labels {
            row.push(if l[t] { "1" } else { "0" }.into());
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_csv(path: impl AsRef<Path>, series: &LabeledSeries) -> Result<()> {
    let file = File::create(path)?;
    write_series(std::io::BufWriter::new(file), series)
}
