//! Parsing, validation and deduplication of the three input datasets.
//!
//! Inputs are either delimited text with a header row or JSON lines (one
//! object per line). A [`Schema`] maps each logical field to the column (or
//! object key) that holds it, so exports with different column names can be
//! read without conversion. Rows that fail validation are never dropped
//! silently: every parser returns the accepted records together with a
//! [`RejectedRecord`] per bad row.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, Utc};
use thiserror::Error;

use crate::geo::GeoPoint;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read input: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot read delimited input: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
}

/// How records are laid out in a source stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    /// Delimited text with a header row.
    Delimited(u8),
    /// One JSON object per line.
    JsonLines,
}

impl Default for InputFormat {
    fn default() -> Self {
        InputFormat::Delimited(b',')
    }
}

impl InputFormat {
    /// `.jsonl` / `.ndjson` files are JSON lines; anything else is delimited.
    pub fn for_path(path: &Path, delimiter: u8) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => InputFormat::JsonLines,
            _ => InputFormat::Delimited(delimiter),
        }
    }
}

/// The logical fields a record type reads, split into required and optional.
#[derive(Debug, Clone, Copy)]
pub struct FieldSet {
    pub required: &'static [&'static str],
    pub optional: &'static [&'static str],
}

pub const CHECKIN_FIELDS: FieldSet = FieldSet {
    required: &["user_id", "beer_style", "lat", "lon", "timestamp"],
    optional: &["venue_id"],
};

pub const REPORT_FIELDS: FieldSet = FieldSet {
    required: &["report_id", "subdivision", "lat", "lon", "timestamp"],
    optional: &["subject", "comment"],
};

pub const COMMENT_FIELDS: FieldSet = FieldSet {
    required: &["comment_id", "text"],
    optional: &["article_id", "timestamp"],
};

impl FieldSet {
    fn knows(&self, key: &str) -> bool {
        self.required.contains(&key) || self.optional.contains(&key)
    }
}

/// Mapping from logical field names to source columns. Fields that are not
/// mapped are looked up under their own name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Schema {
    columns: BTreeMap<String, String>,
}

impl Schema {
    /// Parses `key=column` lines. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str, fields: FieldSet) -> Result<Schema, IngestError> {
        let mut columns = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, column) = line.split_once('=').ok_or_else(|| {
                IngestError::InvalidSchema(format!("line {}: expected key=column", n + 1))
            })?;
            let (key, column) = (key.trim(), column.trim());
            if !fields.knows(key) {
                return Err(IngestError::InvalidSchema(format!(
                    "line {}: unknown field `{key}`",
                    n + 1
                )));
            }
            if column.is_empty() {
                return Err(IngestError::InvalidSchema(format!(
                    "line {}: empty column for `{key}`",
                    n + 1
                )));
            }
            if columns
                .insert(key.to_string(), column.to_string())
                .is_some()
            {
                return Err(IngestError::InvalidSchema(format!(
                    "line {}: field `{key}` mapped twice",
                    n + 1
                )));
            }
        }
        Ok(Schema { columns })
    }

    pub fn load(path: &Path, fields: FieldSet) -> Result<Schema, IngestError> {
        Schema::parse(&std::fs::read_to_string(path)?, fields)
    }

    pub fn column<'a>(&'a self, field: &'a str) -> &'a str {
        self.columns.get(field).map(String::as_str).unwrap_or(field)
    }
}

/// A record timestamp. Values with an offset are normalised to UTC; values
/// without one are kept as local wall-clock time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Timestamp {
    Utc(DateTime<Utc>),
    Local(NaiveDateTime),
}

const LOCAL_FORMATS: &[&str] = &[
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
    "%d/%m/%Y %H:%M:%S",
    "%d/%m/%Y %H:%M",
];

impl Timestamp {
    pub fn parse(raw: &str) -> Option<Timestamp> {
        let raw = raw.trim();
        if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
            return Some(Timestamp::Utc(t.with_timezone(&Utc)));
        }
        for fmt in LOCAL_FORMATS {
            if let Ok(t) = NaiveDateTime::parse_from_str(raw, fmt) {
                return Some(Timestamp::Local(t));
            }
        }
        for fmt in ["%Y-%m-%d", "%d/%m/%Y"] {
            if let Ok(d) = NaiveDate::parse_from_str(raw, fmt) {
                return Some(Timestamp::Local(d.and_hms_opt(0, 0, 0)?));
            }
        }
        None
    }

    /// Wall-clock value used for ordering: the UTC time for zoned values,
    /// the local time otherwise.
    pub fn naive(&self) -> NaiveDateTime {
        match self {
            Timestamp::Utc(t) => t.naive_utc(),
            Timestamp::Local(t) => *t,
        }
    }

    pub fn date(&self) -> NaiveDate {
        self.naive().date()
    }
}

impl Ord for Timestamp {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let rank = |t: &Timestamp| matches!(t, Timestamp::Utc(_)) as u8;
        self.naive()
            .cmp(&other.naive())
            .then(rank(self).cmp(&rank(other)))
    }
}

impl PartialOrd for Timestamp {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Timestamp::Utc(t) => f.write_str(&t.to_rfc3339_opts(SecondsFormat::AutoSi, true)),
            Timestamp::Local(t) => write!(f, "{}", t.format("%Y-%m-%dT%H:%M:%S%.f")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckIn {
    pub user_id: String,
    pub venue_id: Option<String>,
    pub beer_style: String,
    pub location: GeoPoint,
    pub timestamp: Timestamp,
}

impl CheckIn {
    /// The drink location used for deduplication: the venue id, or the
    /// coordinates rounded to five decimals when the export has none.
    pub fn venue_key(&self) -> String {
        match &self.venue_id {
            Some(v) => v.clone(),
            None => format!("{:.5},{:.5}", self.location.lat(), self.location.lon()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub report_id: String,
    pub subject: String,
    pub subdivision: String,
    pub timestamp: Timestamp,
    pub comment_text: String,
    pub location: GeoPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comment {
    pub comment_id: String,
    pub article_id: String,
    pub text: String,
    pub timestamp: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    NoBeverageType,
    NoLocation,
    CoordinateOutOfRange,
    InvalidCoordinate,
    MissingField(&'static str),
    InvalidTimestamp,
    EmptySubdivision,
    EmptyText,
    InvalidUtf8,
    Malformed(String),
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::NoBeverageType => f.write_str("no beverage type"),
            RejectReason::NoLocation => f.write_str("no location"),
            RejectReason::CoordinateOutOfRange => f.write_str("coordinate out of range"),
            RejectReason::InvalidCoordinate => f.write_str("invalid coordinate"),
            RejectReason::MissingField(name) => write!(f, "missing {name}"),
            RejectReason::InvalidTimestamp => f.write_str("invalid timestamp"),
            RejectReason::EmptySubdivision => f.write_str("empty subdivision"),
            RejectReason::EmptyText => f.write_str("empty text"),
            RejectReason::InvalidUtf8 => f.write_str("invalid UTF-8"),
            RejectReason::Malformed(why) => write!(f, "malformed record: {why}"),
        }
    }
}

/// A row that could not be turned into a record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedRecord {
    /// 1-based position among the data rows of the source (header excluded).
    pub row: usize,
    pub reason: RejectReason,
}

/// Accepted records plus the rows that were rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub rejects: Vec<RejectedRecord>,
}

impl<T> Default for Parsed<T> {
    fn default() -> Self {
        Parsed {
            records: Vec::new(),
            rejects: Vec::new(),
        }
    }
}

impl<T> Parsed<T> {
    pub fn rows(&self) -> usize {
        self.records.len() + self.rejects.len()
    }
}

/// One source row, with values looked up by column name.
enum Row<'h> {
    Delimited {
        header: &'h HashMap<String, usize>,
        fields: Vec<String>,
    },
    Json(serde_json::Map<String, serde_json::Value>),
}

impl Row<'_> {
    /// Trimmed, nonempty value of a column.
    fn get(&self, column: &str) -> Option<String> {
        let value = match self {
            Row::Delimited { header, fields } => {
                header.get(column).and_then(|&i| fields.get(i)).cloned()
            }
            Row::Json(obj) => match obj.get(column)? {
                serde_json::Value::Null => None,
                serde_json::Value::String(s) => Some(s.clone()),
                other => Some(other.to_string()),
            },
        }?;
        let trimmed = value.trim();
        (!trimmed.is_empty()).then(|| trimmed.to_string())
    }
}

/// Streams rows through `build`, collecting accepted records and rejects.
fn parse_rows<R: Read, T>(
    source: R,
    format: InputFormat,
    schema: &Schema,
    fields: FieldSet,
    mut build: impl FnMut(&Row<'_>, &Schema) -> Result<T, RejectReason>,
) -> Result<Parsed<T>, IngestError> {
    let mut out = Parsed::default();
    let mut row_no = 0usize;
    let push = |row_no: usize, result: Result<T, RejectReason>, out: &mut Parsed<T>| match result {
        Ok(rec) => out.records.push(rec),
        Err(reason) => out.rejects.push(RejectedRecord {
            row: row_no,
            reason,
        }),
    };

    match format {
        InputFormat::Delimited(delimiter) => {
            let mut reader = csv::ReaderBuilder::new()
                .delimiter(delimiter)
                .flexible(true)
                .from_reader(source);
            let header_bytes = reader.byte_headers()?.clone();
            if header_bytes.is_empty() {
                return Ok(out);
            }
            let mut header = HashMap::new();
            for (i, h) in header_bytes.iter().enumerate() {
                let name = std::str::from_utf8(h).map_err(|_| {
                    IngestError::InvalidSchema(format!("header column {} is not UTF-8", i + 1))
                })?;
                header.entry(name.trim().to_string()).or_insert(i);
            }
            for key in fields.required {
                let col = schema.column(key);
                if !header.contains_key(col) {
                    return Err(IngestError::InvalidSchema(format!(
                        "required column `{col}` (field `{key}`) not in header"
                    )));
                }
            }
            let width = header_bytes.len();
            for record in reader.byte_records() {
                let record = record?;
                row_no += 1;
                if record.len() != width {
                    push(
                        row_no,
                        Err(RejectReason::Malformed(format!(
                            "expected {width} fields, found {}",
                            record.len()
                        ))),
                        &mut out,
                    );
                    continue;
                }
                let decoded: Result<Vec<String>, _> = record
                    .iter()
                    .map(|f| std::str::from_utf8(f).map(str::to_string))
                    .collect();
                let result = match decoded {
                    Ok(fields) => build(
                        &Row::Delimited {
                            header: &header,
                            fields,
                        },
                        schema,
                    ),
                    Err(_) => Err(RejectReason::InvalidUtf8),
                };
                push(row_no, result, &mut out);
            }
        }
        InputFormat::JsonLines => {
            let mut reader = BufReader::new(source);
            let mut line = Vec::new();
            loop {
                line.clear();
                if reader.read_until(b'\n', &mut line)? == 0 {
                    break;
                }
                let Ok(text) = std::str::from_utf8(&line) else {
                    row_no += 1;
                    push(row_no, Err(RejectReason::InvalidUtf8), &mut out);
                    continue;
                };
                if text.trim().is_empty() {
                    continue;
                }
                row_no += 1;
                let result = match serde_json::from_str::<serde_json::Value>(text) {
                    Ok(serde_json::Value::Object(obj)) => build(&Row::Json(obj), schema),
                    Ok(_) => Err(RejectReason::Malformed("not a JSON object".into())),
                    Err(e) => Err(RejectReason::Malformed(e.to_string())),
                };
                push(row_no, result, &mut out);
            }
        }
    }
    Ok(out)
}

fn location(row: &Row<'_>, schema: &Schema) -> Result<GeoPoint, RejectReason> {
    let (Some(lat), Some(lon)) = (row.get(schema.column("lat")), row.get(schema.column("lon")))
    else {
        return Err(RejectReason::NoLocation);
    };
    let (Ok(lat), Ok(lon)) = (lat.parse::<f64>(), lon.parse::<f64>()) else {
        return Err(RejectReason::InvalidCoordinate);
    };
    if !lat.is_finite() || !lon.is_finite() {
        return Err(RejectReason::InvalidCoordinate);
    }
    GeoPoint::new(lat, lon).map_err(|_| RejectReason::CoordinateOutOfRange)
}

fn required(row: &Row<'_>, schema: &Schema, field: &'static str) -> Result<String, RejectReason> {
    row.get(schema.column(field))
        .ok_or(RejectReason::MissingField(field))
}

fn timestamp(row: &Row<'_>, schema: &Schema) -> Result<Option<Timestamp>, RejectReason> {
    match row.get(schema.column("timestamp")) {
        None => Ok(None),
        Some(raw) => Timestamp::parse(&raw)
            .map(Some)
            .ok_or(RejectReason::InvalidTimestamp),
    }
}

/// Reads check-ins. Rows without a beverage type or a location are rejected.
pub fn parse_checkins<R: Read>(
    source: R,
    format: InputFormat,
    schema: &Schema,
) -> Result<Parsed<CheckIn>, IngestError> {
    parse_rows(source, format, schema, CHECKIN_FIELDS, |row, schema| {
        let beer_style = row
            .get(schema.column("beer_style"))
            .ok_or(RejectReason::NoBeverageType)?;
        let location = location(row, schema)?;
        let user_id = required(row, schema, "user_id")?;
        let timestamp = timestamp(row, schema)?.ok_or(RejectReason::MissingField("timestamp"))?;
        Ok(CheckIn {
            user_id,
            venue_id: row.get(schema.column("venue_id")),
            beer_style,
            location,
            timestamp,
        })
    })
}

pub fn parse_reports<R: Read>(
    source: R,
    format: InputFormat,
    schema: &Schema,
) -> Result<Parsed<Report>, IngestError> {
    parse_rows(source, format, schema, REPORT_FIELDS, |row, schema| {
        let report_id = required(row, schema, "report_id")?;
        let location = location(row, schema)?;
        let subdivision = row
            .get(schema.column("subdivision"))
            .ok_or(RejectReason::EmptySubdivision)?;
        let timestamp = timestamp(row, schema)?.ok_or(RejectReason::MissingField("timestamp"))?;
        Ok(Report {
            report_id,
            subject: row.get(schema.column("subject")).unwrap_or_default(),
            subdivision,
            timestamp,
            comment_text: row.get(schema.column("comment")).unwrap_or_default(),
            location,
        })
    })
}

pub fn parse_comments<R: Read>(
    source: R,
    format: InputFormat,
    schema: &Schema,
) -> Result<Parsed<Comment>, IngestError> {
    parse_rows(source, format, schema, COMMENT_FIELDS, |row, schema| {
        let comment_id = required(row, schema, "comment_id")?;
        let text = row
            .get(schema.column("text"))
            .ok_or(RejectReason::EmptyText)?;
        Ok(Comment {
            comment_id,
            article_id: row.get(schema.column("article_id")).unwrap_or_default(),
            text,
            timestamp: timestamp(row, schema)?,
        })
    })
}

fn open(path: &Path) -> Result<File, IngestError> {
    Ok(File::open(path)?)
}

pub fn load_checkins(
    path: &Path,
    format: InputFormat,
    schema: &Schema,
) -> Result<Parsed<CheckIn>, IngestError> {
    parse_checkins(open(path)?, format, schema)
}

pub fn load_reports(
    path: &Path,
    format: InputFormat,
    schema: &Schema,
) -> Result<Parsed<Report>, IngestError> {
    parse_reports(open(path)?, format, schema)
}

pub fn load_comments(
    path: &Path,
    format: InputFormat,
    schema: &Schema,
) -> Result<Parsed<Comment>, IngestError> {
    parse_comments(open(path)?, format, schema)
}

/// Keeps one check-in per (user, drink location): the earliest, with ties
/// going to the first in input order. Output is sorted by user then venue.
pub fn dedupe_checkins(records: &[CheckIn]) -> Vec<CheckIn> {
    let mut best: BTreeMap<(String, String), &CheckIn> = BTreeMap::new();
    for rec in records {
        best.entry((rec.user_id.clone(), rec.venue_key()))
            .and_modify(|kept| {
                if rec.timestamp < kept.timestamp {
                    *kept = rec;
                }
            })
            .or_insert(rec);
    }
    best.into_values().cloned().collect()
}

/// Whether a timestamp's date falls within the inclusive `[from, to]` range.
pub fn within_dates(ts: &Timestamp, from: Option<NaiveDate>, to: Option<NaiveDate>) -> bool {
    let d = ts.date();
    from.is_none_or(|f| d >= f) && to.is_none_or(|t| d <= t)
}
