//! Labeled datasets and their line-delimited file formats.
//!
//! Files are UTF-8, tab-separated, one record per line, preceded by a single
//! header line naming the format and its columns:
//!
//! ```text
//! #stl-level-v1       trajectory_id  avg_speed  formation_error  heading_variance  label
//! #stl-preference-v1  pair_id  p.avg_speed  p.formation_error  p.heading_variance  q.avg_speed  q.formation_error  q.heading_variance  I  I'
//! #stl-query-v1       query_id  origin  avg_speed  formation_error  heading_variance
//! ```
//!
//! Reals are written in Rust's shortest round-trip notation, so a written file
//! reads back bit-exactly.

use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, FEATURE_NAMES};
use crate::trust::{DemarcationSet, PreferenceLabel, TrustLevel};

pub const LEVEL_MARKER: &str = "#stl-level-v1";
pub const PREFERENCE_MARKER: &str = "#stl-preference-v1";
pub const QUERY_MARKER: &str = "#stl-query-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub trajectory_id: String,
    pub features: FeatureVector,
    pub label: TrustLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub pair_id: String,
    pub first: FeatureVector,
    pub second: FeatureVector,
    pub label: PreferenceLabel,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelDataset {
    pub records: Vec<LevelRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreferenceDataset {
    pub records: Vec<PreferenceRecord>,
}

impl LevelDataset {
    pub fn new(records: Vec<LevelRecord>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: LevelRecord) {
        self.records.push(record);
    }

    pub fn features(&self) -> Vec<FeatureVector> {
        self.records.iter().map(|r| r.features).collect()
    }
}

impl PreferenceDataset {
    pub fn new(records: Vec<PreferenceRecord>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: PreferenceRecord) {
        self.records.push(record);
    }
}

/// Where a query batch entry came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryOrigin {
    Active,
    Random,
}

impl QueryOrigin {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Active => "active",
            Self::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub origin: QueryOrigin,
    pub features: FeatureVector,
}

fn header(marker: &str, columns: &[&str]) -> String {
    let mut h = String::from(marker);
    for c in columns {
        h.push('\t');
        h.push_str(c);
    }
    h.push('\n');
    h
}

pub fn level_header() -> String {
    let mut cols = vec!["trajectory_id"];
    cols.extend(FEATURE_NAMES);
    cols.push("label");
    header(LEVEL_MARKER, &cols)
}

pub fn preference_header() -> String {
    let p: Vec<String> = FEATURE_NAMES.iter().map(|n| format!("p.{n}")).collect();
    let q: Vec<String> = FEATURE_NAMES.iter().map(|n| format!("q.{n}")).collect();
    let mut cols = vec!["pair_id"];
    cols.extend(p.iter().map(String::as_str));
    cols.extend(q.iter().map(String::as_str));
    cols.extend(["I", "I'"]);
    header(PREFERENCE_MARKER, &cols)
}

pub fn query_header() -> String {
    let mut cols = vec!["query_id", "origin"];
    cols.extend(FEATURE_NAMES);
    header(QUERY_MARKER, &cols)
}

fn push_features(line: &mut String, f: &FeatureVector) {
    for v in f.to_array() {
        write!(line, "\t{v}").unwrap();
    }
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['\t', '\n', '\r']) || id.starts_with('#') {
        return Err(Error::Config(format!(
            "identifier {id:?} cannot be written to a record file"
        )));
    }
    Ok(())
}

pub fn format_level_record(r: &LevelRecord) -> Result<String> {
    check_id(&r.trajectory_id)?;
    let mut line = r.trajectory_id.clone();
    push_features(&mut line, &r.features);
    writeln!(line, "\t{}", r.label.value()).unwrap();
    Ok(line)
}

pub fn format_preference_record(r: &PreferenceRecord) -> Result<String> {
    check_id(&r.pair_id)?;
    let mut line = r.pair_id.clone();
    push_features(&mut line, &r.first);
    push_features(&mut line, &r.second);
    let (i, ip) = r.label.as_pair();
    writeln!(line, "\t{i}\t{ip}").unwrap();
    Ok(line)
}

pub fn format_query_record(r: &QueryRecord) -> Result<String> {
    check_id(&r.query_id)?;
    let mut line = format!("{}\t{}", r.query_id, r.origin.as_str());
    push_features(&mut line, &r.features);
    line.push('\n');
    Ok(line)
}

pub fn level_to_string(data: &LevelDataset) -> Result<String> {
    let mut out = level_header();
    for r in &data.records {
        out.push_str(&format_level_record(r)?);
    }
    Ok(out)
}

pub fn preference_to_string(data: &PreferenceDataset) -> Result<String> {
    let mut out = preference_header();
    for r in &data.records {
        out.push_str(&format_preference_record(r)?);
    }
    Ok(out)
}

pub fn queries_to_string(queries: &[QueryRecord]) -> Result<String> {
    let mut out = query_header();
    for q in queries {
        out.push_str(&format_query_record(q)?);
    }
    Ok(out)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn write_level_dataset(path: impl AsRef<Path>, data: &LevelDataset) -> Result<()> {
    write_file(path.as_ref(), &level_to_string(data)?)
}

pub fn write_preference_dataset(path: impl AsRef<Path>, data: &PreferenceDataset) -> Result<()> {
    write_file(path.as_ref(), &preference_to_string(data)?)
}

pub fn write_queries(path: impl AsRef<Path>, queries: &[QueryRecord]) -> Result<()> {
    write_file(path.as_ref(), &queries_to_string(queries)?)
}

/// Appends one line, writing the header first when the file is new or empty,
/// and syncs before returning.
fn append_durable(path: &Path, header: &str, line: &str) -> Result<()> {
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let empty = file.metadata().map_err(|e| Error::io(path, e))?.len() == 0;
    let mut buf = String::new();
    if empty {
        buf.push_str(header);
    }
    buf.push_str(line);
    file.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))?;
    file.sync_data().map_err(|e| Error::io(path, e))
}

pub fn append_level_record(path: impl AsRef<Path>, record: &LevelRecord) -> Result<()> {
    append_durable(path.as_ref(), &level_header(), &format_level_record(record)?)
}

pub fn append_preference_record(path: impl AsRef<Path>, record: &PreferenceRecord) -> Result<()> {
    append_durable(path.as_ref(), &preference_header(), &format_preference_record(record)?)
}

/// Creates the file with only its header line if it does not exist yet.
pub fn ensure_header(path: impl AsRef<Path>, header: &str) -> Result<()> {
    let path = path.as_ref();
    if path.exists() {
        return Ok(());
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(header.as_bytes()).map_err(|e| Error::io(path, e))?;
    f.sync_data().map_err(|e| Error::io(path, e))
}

struct LineParser<'a> {
    source: &'a str,
    line: usize,
}

impl LineParser<'_> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Parse {
            path: self.source.to_string(),
            line: self.line,
            reason: reason.into(),
        }
    }

    fn float(&self, field: &str) -> Result<f64> {
        let v: f64 = field
            .parse()
            .map_err(|_| self.err(format!("`{field}` is not a number")))?;
        if !v.is_finite() {
            return Err(self.err(format!("`{field}` is not finite")));
        }
        Ok(v)
    }

    fn features(&self, fields: &[&str]) -> Result<FeatureVector> {
        Ok(FeatureVector::new(
            self.float(fields[0])?,
            self.float(fields[1])?,
            self.float(fields[2])?,
        ))
    }

    fn bit(&self, field: &str) -> Result<u8> {
        match field {
            "0" => Ok(0),
            "1" => Ok(1),
            other => Err(self.err(format!("`{other}` is not 0 or 1"))),
        }
    }
}

/// Yields `(line number, fields)` for every data line after validating the header.
fn data_lines<'a>(
    source: &'a str,
    text: &'a str,
    marker: &str,
    expected_header: &str,
    columns: usize,
) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == expected_header.trim_end() => {}
        Some((_, h)) if h.starts_with(marker) => {
            return Err(Error::Parse {
                path: source.into(),
                line: 1,
                reason: "header columns do not match the format".into(),
            })
        }
        _ => {
            return Err(Error::Parse {
                path: source.into(),
                line: 1,
                reason: format!("missing `{marker}` header line"),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != columns {
            return Err(Error::Parse {
                path: source.into(),
                line: i + 1,
                reason: format!("expected {columns} fields, found {}", fields.len()),
            });
        }
        out.push((i + 1, fields));
    }
    Ok(out)
}

pub fn parse_level_dataset(source: &str, text: &str, demarcations: &DemarcationSet) -> Result<LevelDataset> {
    let mut records = Vec::new();
    for (line, fields) in data_lines(source, text, LEVEL_MARKER, &level_header(), 5)? {
        let p = LineParser { source, line };
        let label = p.float(fields[4])?;
        let label = demarcations
            .level(label)
            .map_err(|_| p.err(format!("label {label} is not a demarcation")))?;
        records.push(LevelRecord {
            trajectory_id: fields[0].to_string(),
            features: p.features(&fields[1..4])?,
            label,
        });
    }
    Ok(LevelDataset { records })
}

pub fn parse_preference_dataset(source: &str, text: &str) -> Result<PreferenceDataset> {
    let mut records = Vec::new();
    for (line, fields) in data_lines(source, text, PREFERENCE_MARKER, &preference_header(), 9)? {
        let p = LineParser { source, line };
        let label = PreferenceLabel::from_pair(p.bit(fields[7])?, p.bit(fields[8])?)
            .map_err(|_| p.err("preference label must be one-hot"))?;
        records.push(PreferenceRecord {
            pair_id: fields[0].to_string(),
            first: p.features(&fields[1..4])?,
            second: p.features(&fields[4..7])?,
            label,
        });
    }
    Ok(PreferenceDataset { records })
}

pub fn parse_queries(source: &str, text: &str) -> Result<Vec<QueryRecord>> {
    let mut out = Vec::new();
    for (line, fields) in data_lines(source, text, QUERY_MARKER, &query_header(), 5)? {
        let p = LineParser { source, line };
        let origin = match fields[1] {
            "active" => QueryOrigin::Active,
            "random" => QueryOrigin::Random,
            other => return Err(p.err(format!("unknown origin `{other}`"))),
        };
        out.push(QueryRecord {
            query_id: fields[0].to_string(),
            origin,
            features: p.features(&fields[2..5])?,
        });
    }
    Ok(out)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_level_dataset(path: impl AsRef<Path>, demarcations: &DemarcationSet) -> Result<LevelDataset> {
    let path = path.as_ref();
    parse_level_dataset(&path.display().to_string(), &read_text(path)?, demarcations)
}

pub fn read_preference_dataset(path: impl AsRef<Path>) -> Result<PreferenceDataset> {
    let path = path.as_ref();
    parse_preference_dataset(&path.display().to_string(), &read_text(path)?)
}

pub fn read_queries(path: impl AsRef<Path>) -> Result<Vec<QueryRecord>> {
    let path = path.as_ref();
    parse_queries(&path.display().to_string(), &read_text(path)?)
}
