//! Import of pre-extracted fixations and stimulus boxes from CSV or JSON.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{build_stimulus, CharBox, Stimulus, StimulusError};
use crate::asc::Fixation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImportError {
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("non-numeric cell in row {row}, column {column:?}")]
    NonNumericCell { row: usize, column: String },
    #[error("could not read table: {0}")]
    Table(String),
    #[error(transparent)]
    Stimulus(#[from] StimulusError),
}

/// A header row plus string cells, read from CSV or a JSON array of flat objects.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub warnings: Vec<String>,
}

impl Table {
    pub fn from_csv(text: &str) -> Result<Self, ImportError> {
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| ImportError::Table(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| ImportError::Table(e.to_string()))?;
            rows.push(record.iter().map(str::to_string).collect());
        }
        Ok(Self::with_duplicate_check(headers, rows))
    }

    pub fn from_json(text: &str) -> Result<Self, ImportError> {
        let value: Value = serde_json::from_str(text).map_err(|e| ImportError::Table(e.to_string()))?;
        let Value::Array(items) = value else {
            return Err(ImportError::Table("expected a JSON array of objects".into()));
        };
        let mut headers: Vec<String> = Vec::new();
        for item in &items {
            let Value::Object(obj) = item else {
                return Err(ImportError::Table("expected a JSON array of objects".into()));
            };
            for key in obj.keys() {
                if !headers.contains(key) {
                    headers.push(key.clone());
                }
            }
        }
        let rows = items
            .iter()
            .map(|item| {
                headers
                    .iter()
                    .map(|h| match item.get(h) {
                        None | Some(Value::Null) => String::new(),
                        Some(Value::String(s)) => s.clone(),
                        Some(other) => other.to_string(),
                    })
                    .collect()
            })
            .collect();
        Ok(Self::with_duplicate_check(headers, rows))
    }

    fn with_duplicate_check(headers: Vec<String>, rows: Vec<Vec<String>>) -> Self {
        let mut warnings = Vec::new();
        for (i, h) in headers.iter().enumerate() {
            if headers[..i].contains(h) {
                warnings.push(format!("duplicate column {h:?}; using the first occurrence"));
            }
        }
        Self { headers, rows, warnings }
    }

    /// Position of the first column with this header.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn cell(&self, row: usize, column: usize) -> &str {
        self.rows[row].get(column).map_or("", String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnTarget {
    X,
    Y,
    Start,
    End,
    Duration,
    Char,
    XMin,
    YMin,
    XMax,
    YMax,
}

impl ColumnTarget {
    pub const ALL: [ColumnTarget; 10] = [
        ColumnTarget::X,
        ColumnTarget::Y,
        ColumnTarget::Start,
        ColumnTarget::End,
        ColumnTarget::Duration,
        ColumnTarget::Char,
        ColumnTarget::XMin,
        ColumnTarget::YMin,
        ColumnTarget::XMax,
        ColumnTarget::YMax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ColumnTarget::X => "x",
            ColumnTarget::Y => "y",
            ColumnTarget::Start => "start",
            ColumnTarget::End => "end",
            ColumnTarget::Duration => "duration",
            ColumnTarget::Char => "char",
            ColumnTarget::XMin => "x_min",
            ColumnTarget::YMin => "y_min",
            ColumnTarget::XMax => "x_max",
            ColumnTarget::YMax => "y_max",
        }
    }

    fn synonyms(self) -> &'static [&'static str] {
        match self {
            ColumnTarget::X => &["x", "fix_x", "xs", "x_pos", "xpos", "fixation_x", "gaze_x"],
            ColumnTarget::Y => &["y", "fix_y", "ys", "y_pos", "ypos", "fixation_y", "gaze_y"],
            ColumnTarget::Start => &["start", "start_time", "onset", "t_start", "start_ms", "stime"],
            ColumnTarget::End => &["end", "end_time", "offset", "t_end", "end_ms", "stop", "etime"],
            ColumnTarget::Duration => &["dur", "duration", "fix_dur", "duration_ms", "fixation_duration"],
            ColumnTarget::Char => &["char", "character", "letter"],
            ColumnTarget::XMin => &["x_min", "left", "x1", "xmin", "char_xmin"],
            ColumnTarget::YMin => &["y_min", "top", "y1", "ymin", "char_ymin"],
            ColumnTarget::XMax => &["x_max", "right", "x2", "xmax", "char_xmax"],
            ColumnTarget::YMax => &["y_max", "bottom", "y2", "ymax", "char_ymax"],
        }
    }
}

/// Target field → source header, with a guess confidence per target.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub sources: BTreeMap<ColumnTarget, String>,
    pub confidence: BTreeMap<ColumnTarget, f64>,
}

impl ColumnMap {
    pub fn set(&mut self, target: ColumnTarget, source: impl Into<String>) {
        self.sources.insert(target, source.into());
        self.confidence.insert(target, 1.0);
    }

    pub fn source(&self, target: ColumnTarget) -> Option<&str> {
        self.sources.get(&target).map(String::as_str)
    }
}

fn normalize(s: &str) -> String {
    s.chars().filter(char::is_ascii_alphanumeric).flat_map(char::to_lowercase).collect()
}

/// Guess which headers hold which fields.
///
/// Exact case-insensitive synonym hits score 1.0; hits after dropping
/// punctuation (`Fix-X` for `fix_x`) score 0.6. Unmatched targets are left
/// out of `sources` with confidence 0.
pub fn guess_column_map(headers: &[String]) -> ColumnMap {
    let mut map = ColumnMap::default();
    for target in ColumnTarget::ALL {
        let synonyms = target.synonyms();
        let exact = headers
            .iter()
            .find(|h| synonyms.iter().any(|s| h.trim().eq_ignore_ascii_case(s)));
        let loose = || {
            headers
                .iter()
                .find(|h| synonyms.iter().any(|s| normalize(h) == normalize(s)))
        };
        let (source, confidence) = match exact {
            Some(h) => (Some(h), 1.0),
            None => match loose() {
                Some(h) => (Some(h), 0.6),
                None => (None, 0.0),
            },
        };
        if let Some(h) = source {
            map.sources.insert(target, h.clone());
        }
        map.confidence.insert(target, confidence);
    }
    map
}

fn column_of(table: &Table, map: &ColumnMap, target: ColumnTarget) -> Result<usize, ImportError> {
    let source = map.source(target).ok_or_else(|| ImportError::MissingColumn(target.name().into()))?;
    table.column(source).ok_or_else(|| ImportError::MissingColumn(source.into()))
}

fn optional_column(table: &Table, map: &ColumnMap, target: ColumnTarget) -> Result<Option<usize>, ImportError> {
    match map.source(target) {
        None => Ok(None),
        Some(source) => table.column(source).map(Some).ok_or_else(|| ImportError::MissingColumn(source.into())),
    }
}

fn number(table: &Table, row: usize, col: usize) -> Result<f64, ImportError> {
    table
        .cell(row, col)
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| ImportError::NonNumericCell { row, column: table.headers[col].clone() })
}

/// Read fixations and stimulus boxes through a column map.
///
/// Fixations come back sorted by start time; whichever of end and duration
/// is absent is derived from the other.
pub fn import_custom(
    fixations: &Table,
    stimulus: &Table,
    map: &ColumnMap,
    include_spaces: bool,
) -> Result<(Vec<Fixation>, Stimulus), ImportError> {
    let x = column_of(fixations, map, ColumnTarget::X)?;
    let y = column_of(fixations, map, ColumnTarget::Y)?;
    let start = column_of(fixations, map, ColumnTarget::Start)?;
    let end = optional_column(fixations, map, ColumnTarget::End)?;
    let dur = optional_column(fixations, map, ColumnTarget::Duration)?;
    if end.is_none() && dur.is_none() {
        return Err(ImportError::MissingColumn("end or duration".into()));
    }

    let mut fixes = Vec::with_capacity(fixations.rows.len());
    for row in 0..fixations.rows.len() {
        let start_ms = number(fixations, row, start)?.trunc() as i64;
        let end_ms = match (end, dur) {
            (Some(e), _) => number(fixations, row, e)?.trunc() as i64,
            (None, Some(d)) => start_ms + number(fixations, row, d)?.trunc() as i64,
            (None, None) => unreachable!("checked above"),
        };
        if end_ms < start_ms {
            return Err(ImportError::NonNumericCell {
                row,
                column: fixations.headers[end.or(dur).expect("one exists")].clone(),
            });
        }
        fixes.push(Fixation::new(0, start_ms, end_ms, number(fixations, row, x)?, number(fixations, row, y)?));
    }
    fixes.sort_by_key(|f| f.start_ms);
    for (i, f) in fixes.iter_mut().enumerate() {
        f.index = i;
    }

    let ch = column_of(stimulus, map, ColumnTarget::Char)?;
    let bounds = [ColumnTarget::XMin, ColumnTarget::YMin, ColumnTarget::XMax, ColumnTarget::YMax]
        .map(|t| column_of(stimulus, map, t));
    let [x0, y0, x1, y1] = [bounds[0].clone()?, bounds[1].clone()?, bounds[2].clone()?, bounds[3].clone()?];
    let mut boxes = Vec::with_capacity(stimulus.rows.len());
    for row in 0..stimulus.rows.len() {
        let c = stimulus.cell(row, ch).chars().next().unwrap_or(' ');
        boxes.push(CharBox::new(
            row,
            c,
            number(stimulus, row, x0)?,
            number(stimulus, row, y0)?,
            number(stimulus, row, x1)?,
            number(stimulus, row, y1)?,
        ));
    }
    let stim = build_stimulus(&boxes, include_spaces)?;
    Ok((fixes, stim))
}
