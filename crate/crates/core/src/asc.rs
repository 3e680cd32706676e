//! EyeLink ASC parsing.
//!
//! Parsing runs in two passes. The first pass segments the file into trials
//! using the configured start/end message flags and collects per-trial
//! metadata; the second pass walks the lines of each trial span and extracts
//! fixation, saccade and blink events.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stimulus::CharBox;

pub const BUILTIN_START_FLAGS: [&str; 3] = ["SYNCTIME", "START", "GAZE TARGET ON"];
pub const BUILTIN_END_FLAGS: [&str; 3] = ["ENDBUTTON", "END", "KEYBOARD"];

/// Placeholder entry in a flag list that selects the custom flag string.
pub const CUSTOM_FLAG: &str = "custom";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AscError {
    #[error("no trials found for the selected start/end flags")]
    NoTrialsFound,
    #[error("malformed event line: {reason}: {line:?}")]
    MalformedEventLine { line: String, reason: String },
    #[error("invalid flag configuration: {0}")]
    InvalidFlags(String),
}

/// A non-fatal problem found while parsing. Parsing continues past these.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseWarning {
    /// Zero-based line index in the source file, when the warning is tied to a line.
    pub line: Option<usize>,
    pub message: String,
}

impl ParseWarning {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self { line: Some(line), message: message.into() }
    }
}

impl fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {}: {}", line + 1, self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AscParseConfig {
    pub start_flags: Vec<String>,
    pub end_flags: Vec<String>,
    pub custom_start: Option<String>,
    pub custom_end: Option<String>,
    pub discard_fixation_at_start: bool,
    pub include_spaces_in_words: bool,
    pub exclude_practice_and_questions: bool,
}

impl Default for AscParseConfig {
    fn default() -> Self {
        Self {
            start_flags: vec!["SYNCTIME".to_string()],
            end_flags: vec!["ENDBUTTON".to_string()],
            custom_start: None,
            custom_end: None,
            discard_fixation_at_start: true,
            include_spaces_in_words: false,
            exclude_practice_and_questions: true,
        }
    }
}

impl AscParseConfig {
    pub fn resolved_start_flags(&self) -> Vec<&str> {
        resolve_flags(&self.start_flags, self.custom_start.as_deref())
    }

    pub fn resolved_end_flags(&self) -> Vec<&str> {
        resolve_flags(&self.end_flags, self.custom_end.as_deref())
    }

    pub fn validate(&self) -> Result<(), AscError> {
        for (side, flags, custom) in [
            ("start", &self.start_flags, &self.custom_start),
            ("end", &self.end_flags, &self.custom_end),
        ] {
            let all = flags.iter().map(String::as_str).chain(custom.as_deref());
            for flag in all {
                if flag.trim().is_empty() {
                    return Err(AscError::InvalidFlags(format!("empty {side} flag")));
                }
                if flag.contains(['\n', '\r']) {
                    return Err(AscError::InvalidFlags(format!("{side} flag {flag:?} contains a newline")));
                }
            }
            if flags.iter().any(|f| f == CUSTOM_FLAG) && custom.is_none() {
                return Err(AscError::InvalidFlags(format!("custom {side} flag selected but not given")));
            }
        }
        if self.resolved_start_flags().is_empty() {
            return Err(AscError::InvalidFlags("no start flag selected".into()));
        }
        if self.resolved_end_flags().is_empty() {
            return Err(AscError::InvalidFlags("no end flag selected".into()));
        }
        Ok(())
    }
}

fn resolve_flags<'a>(flags: &'a [String], custom: Option<&'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = flags
        .iter()
        .map(String::as_str)
        .filter(|f| *f != CUSTOM_FLAG)
        .collect();
    if let Some(custom) = custom {
        if !out.contains(&custom) {
            out.push(custom);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Eye {
    L,
    R,
}

impl Eye {
    fn parse(token: &str) -> Option<Self> {
        match token {
            "L" | "l" => Some(Eye::L),
            "R" | "r" => Some(Eye::R),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Eye::L => "L",
            Eye::R => "R",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    pub index: usize,
    pub eye: Eye,
    pub start_ms: i64,
    pub end_ms: i64,
    pub duration_ms: i64,
    pub x: f64,
    pub y: f64,
    pub pupil: f64,
    pub blink_before: bool,
    pub blink_after: bool,
}

impl Fixation {
    pub fn new(index: usize, start_ms: i64, end_ms: i64, x: f64, y: f64) -> Self {
        Self {
            index,
            eye: Eye::R,
            start_ms,
            end_ms,
            duration_ms: end_ms - start_ms,
            x,
            y,
            pupil: 0.0,
            blink_before: false,
            blink_after: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Saccade {
    pub eye: Eye,
    pub start_ms: i64,
    pub end_ms: i64,
    pub duration_ms: i64,
    pub x_start: f64,
    pub y_start: f64,
    pub x_end: f64,
    pub y_end: f64,
    pub amplitude_deg: f64,
    pub peak_velocity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blink {
    pub eye: Eye,
    pub start_ms: i64,
    pub end_ms: i64,
    pub duration_ms: i64,
}

/// A `MSG` line: timestamp (offset already applied) and the payload text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub time_ms: i64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AscEvent {
    Fixation(Fixation),
    Saccade(Saccade),
    Blink(Blink),
    Message(Message),
    Sample { time_ms: i64 },
    Unknown,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialMetadata {
    pub trial_id: String,
    pub condition: String,
    pub item: String,
    pub question_response: Option<String>,
    pub screen_w: Option<u32>,
    pub screen_h: Option<u32>,
    pub start_line_idx: usize,
    pub end_line_idx: usize,
    pub start_ms: i64,
    pub end_ms: i64,
    pub trial_vars: BTreeMap<String, String>,
    pub ias_file: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub metadata: TrialMetadata,
    pub eye: Option<Eye>,
    pub fixations: Vec<Fixation>,
    pub saccades: Vec<Saccade>,
    pub blinks: Vec<Blink>,
    pub char_boxes: Vec<CharBox>,
    /// Character width estimate supplied by the stimulus source (word-level
    /// IAS regions); `None` means derive it from the character boxes.
    pub char_width_hint: Option<f64>,
    pub is_practice: bool,
    pub is_question: bool,
    /// Message payloads inside the trial block that no extractor consumed.
    pub messages: Vec<Message>,
    pub warnings: Vec<ParseWarning>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AscParse {
    pub trials: Vec<TrialRecord>,
    pub warnings: Vec<ParseWarning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSpan {
    pub start_idx: usize,
    pub end_idx: usize,
    pub start_ms: i64,
    pub end_ms: i64,
}

/// Split off the first whitespace-delimited token, returning it and the rest
/// with leading whitespace removed.
fn split_token(s: &str) -> Option<(&str, &str)> {
    let s = s.trim_start();
    if s.is_empty() {
        return None;
    }
    match s.find(char::is_whitespace) {
        Some(end) => Some((&s[..end], s[end..].trim_start())),
        None => Some((s, "")),
    }
}

/// Timestamps are whole milliseconds; fractional values are truncated.
fn parse_time(token: &str) -> Option<i64> {
    if let Ok(t) = token.parse::<i64>() {
        return Some(t);
    }
    let v = token.parse::<f64>().ok()?;
    v.is_finite().then(|| v.trunc() as i64)
}

fn parse_num(token: &str) -> Option<f64> {
    token.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Like [`parse_num`] but accepts EyeLink's `.` placeholder for missing data.
fn parse_num_or_missing(token: &str) -> Option<f64> {
    if token == "." {
        Some(f64::NAN)
    } else {
        parse_num(token)
    }
}

fn malformed(line: &str, reason: impl Into<String>) -> AscError {
    AscError::MalformedEventLine { line: line.to_string(), reason: reason.into() }
}

/// Parse the payload of a `MSG` line: `<time> [<offset>] <text>`.
///
/// Experiment Builder writes an integer offset before the text; the event time
/// is then `time - offset`.
fn parse_message(rest: &str) -> Option<Message> {
    let (time, payload) = split_token(rest)?;
    let mut time_ms = parse_time(time)?;
    let mut text = payload;
    if let Some((maybe_offset, after)) = split_token(payload) {
        if !after.is_empty() {
            if let Ok(offset) = maybe_offset.parse::<i64>() {
                time_ms -= offset;
                text = after;
            }
        }
    }
    Some(Message { time_ms, text: text.trim_end().to_string() })
}

pub fn parse_event_line(line: &str) -> Result<AscEvent, AscError> {
    let Some((tag, rest)) = split_token(line) else {
        return Ok(AscEvent::Unknown);
    };
    let fields: Vec<&str> = rest.split_whitespace().collect();
    match tag {
        "EFIX" => {
            if fields.len() < 7 {
                return Err(malformed(line, format!("EFIX needs 7 fields, found {}", fields.len())));
            }
            let eye = Eye::parse(fields[0]).ok_or_else(|| malformed(line, "bad eye"))?;
            let (start, end, dur) = event_times(line, &fields[1..4])?;
            let nums: Option<Vec<f64>> = fields[4..7].iter().map(|t| parse_num(t)).collect();
            let nums = nums.ok_or_else(|| malformed(line, "non-numeric position or pupil"))?;
            Ok(AscEvent::Fixation(Fixation {
                index: 0,
                eye,
                start_ms: start,
                end_ms: end,
                duration_ms: dur,
                x: nums[0],
                y: nums[1],
                pupil: nums[2],
                blink_before: false,
                blink_after: false,
            }))
        }
        "ESACC" => {
            if fields.len() < 10 {
                return Err(malformed(line, format!("ESACC needs 10 fields, found {}", fields.len())));
            }
            let eye = Eye::parse(fields[0]).ok_or_else(|| malformed(line, "bad eye"))?;
            let (start, end, dur) = event_times(line, &fields[1..4])?;
            let nums: Option<Vec<f64>> = fields[4..10].iter().map(|t| parse_num_or_missing(t)).collect();
            let nums = nums.ok_or_else(|| malformed(line, "non-numeric saccade field"))?;
            Ok(AscEvent::Saccade(Saccade {
                eye,
                start_ms: start,
                end_ms: end,
                duration_ms: dur,
                x_start: nums[0],
                y_start: nums[1],
                x_end: nums[2],
                y_end: nums[3],
                amplitude_deg: nums[4],
                peak_velocity: nums[5],
            }))
        }
        "EBLINK" => {
            if fields.len() < 4 {
                return Err(malformed(line, format!("EBLINK needs 4 fields, found {}", fields.len())));
            }
            let eye = Eye::parse(fields[0]).ok_or_else(|| malformed(line, "bad eye"))?;
            let (start, end, dur) = event_times(line, &fields[1..4])?;
            Ok(AscEvent::Blink(Blink { eye, start_ms: start, end_ms: end, duration_ms: dur }))
        }
        "SFIX" | "SSACC" | "SBLINK" => {
            if fields.len() < 2 || Eye::parse(fields[0]).is_none() || parse_time(fields[1]).is_none() {
                return Err(malformed(line, format!("{tag} needs <eye> <start>")));
            }
            Ok(AscEvent::Unknown)
        }
        "MSG" => parse_message(rest)
            .map(AscEvent::Message)
            .ok_or_else(|| malformed(line, "MSG without timestamp")),
        _ => match parse_time(tag) {
            Some(time_ms) => Ok(AscEvent::Sample { time_ms }),
            None => Ok(AscEvent::Unknown),
        },
    }
}

fn event_times(line: &str, fields: &[&str]) -> Result<(i64, i64, i64), AscError> {
    let start = parse_time(fields[0]).ok_or_else(|| malformed(line, "bad start time"))?;
    let end = parse_time(fields[1]).ok_or_else(|| malformed(line, "bad end time"))?;
    let dur = parse_time(fields[2]).ok_or_else(|| malformed(line, "bad duration"))?;
    if end < start {
        return Err(malformed(line, "end before start"));
    }
    Ok((start, end, dur))
}

/// Returns the flag timestamp when `line` carries one of `flags`.
///
/// A flag matches a `MSG` line whose text starts with it. Flags that are also
/// ASC record keywords (`START`, `END`) additionally match bare record lines
/// such as `START 1000 RIGHT SAMPLES EVENTS`.
fn flag_time(line: &str, flags: &[&str]) -> Option<i64> {
    let (tag, rest) = split_token(line)?;
    if tag == "MSG" {
        let msg = parse_message(rest)?;
        return flags.iter().any(|f| msg.text.starts_with(f)).then_some(msg.time_ms);
    }
    if flags.contains(&tag) {
        let (time, _) = split_token(rest)?;
        return parse_time(time);
    }
    None
}

/// Find trial spans delimited by the configured start and end flags.
///
/// A second start before any end restarts the span at the later start.
pub fn segment_trials(lines: &[&str], config: &AscParseConfig) -> (Vec<TrialSpan>, Vec<ParseWarning>) {
    let starts = config.resolved_start_flags();
    let ends = config.resolved_end_flags();
    let mut spans = Vec::new();
    let mut warnings = Vec::new();
    let mut open: Option<(usize, i64)> = None;

    for (idx, line) in lines.iter().enumerate() {
        if let Some((start_idx, start_ms)) = open {
            if let Some(end_ms) = flag_time(line, &ends) {
                spans.push(TrialSpan { start_idx, end_idx: idx, start_ms, end_ms });
                open = None;
                continue;
            }
        }
        if let Some(t) = flag_time(line, &starts) {
            if let Some((prev_idx, _)) = open {
                warnings.push(ParseWarning::at(
                    idx,
                    format!("start flag repeated before an end flag; discarding the start on line {}", prev_idx + 1),
                ));
            }
            open = Some((idx, t));
        } else if open.is_none() && flag_time(line, &ends).is_some() {
            warnings.push(ParseWarning::at(idx, "end flag without a preceding start flag"));
        }
    }
    if let Some((idx, _)) = open {
        warnings.push(ParseWarning::at(idx, "unbalanced flags: start flag without a matching end flag; span skipped"));
    }
    (spans, warnings)
}

/// Strip the `!V ` data-viewer prefix Experiment Builder puts on some messages.
fn strip_viewer_prefix(text: &str) -> &str {
    text.strip_prefix("!V ").map(str::trim_start).unwrap_or(text)
}

fn message_of(line: &str) -> Option<Message> {
    let (tag, rest) = split_token(line)?;
    if tag == "MSG" {
        parse_message(rest)
    } else {
        None
    }
}

/// Outcome of decoding a REGION CHAR message.
enum RegionChar {
    Box(CharBox, Option<&'static str>),
    NotRegion,
    Malformed(String),
}

fn parse_region_char(text: &str) -> RegionChar {
    let Some(rest) = text.strip_prefix("REGION CHAR") else {
        return RegionChar::NotRegion;
    };
    let tokens: Vec<&str> = rest.split_whitespace().collect();
    // <idx> <flag> <char> <x_min> <y_min> <x_max> <y_max>; a literal blank
    // character collapses into the surrounding whitespace and drops a token.
    let (ch, coords, encoding) = match tokens.len() {
        7 => {
            let token = tokens[2];
            let mut chars = token.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => (c, &tokens[3..7], None),
                _ if token.eq_ignore_ascii_case("space") => (' ', &tokens[3..7], Some("token \"space\"")),
                _ => return RegionChar::Malformed(format!("character field {token:?} is not a single character")),
            }
        }
        6 => (' ', &tokens[2..6], Some("literal blank")),
        n => return RegionChar::Malformed(format!("REGION CHAR needs 7 fields, found {n}")),
    };
    let nums: Option<Vec<f64>> = coords.iter().map(|t| parse_num(t)).collect();
    let Some(nums) = nums else {
        return RegionChar::Malformed("non-numeric REGION CHAR coordinates".into());
    };
    if !(nums[0] < nums[2] && nums[1] < nums[3]) {
        return RegionChar::Malformed("REGION CHAR box has non-positive size".into());
    }
    RegionChar::Box(CharBox::new(0, ch, nums[0], nums[1], nums[2], nums[3]), encoding)
}

/// Extract one [`CharBox`] per `REGION CHAR` message, in file order.
pub fn extract_region_chars(trial_lines: &[&str]) -> (Vec<CharBox>, Vec<ParseWarning>) {
    let mut boxes = Vec::new();
    let mut warnings = Vec::new();
    for (idx, line) in trial_lines.iter().enumerate() {
        let Some(msg) = message_of(line) else { continue };
        match parse_region_char(&msg.text) {
            RegionChar::Box(mut b, _) => {
                b.index = boxes.len();
                boxes.push(b);
            }
            RegionChar::Malformed(reason) => {
                warnings.push(ParseWarning::at(idx, format!("malformed REGION CHAR line skipped: {reason}")))
            }
            RegionChar::NotRegion => {}
        }
    }
    (boxes, warnings)
}

/// Parse EyeTrack-style trial identifiers `E<cond>I<item>D<dep>`.
fn eyetrack_trial_id(id: &str) -> Option<(String, String)> {
    let rest = id.strip_prefix('E')?;
    let cond_end = rest.find(|c: char| !c.is_ascii_digit())?;
    let (cond, rest) = rest.split_at(cond_end);
    let rest = rest.strip_prefix('I')?;
    let item_end = rest.find(|c: char| !c.is_ascii_digit())?;
    let (item, rest) = rest.split_at(item_end);
    let dep = rest.strip_prefix('D')?;
    if cond.is_empty() || item.is_empty() || dep.is_empty() || !dep.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    Some((cond.to_string(), item.to_string()))
}

fn screen_from_coords(text: &str) -> Option<(u32, u32)> {
    let rest = text
        .strip_prefix("DISPLAY_COORDS")
        .or_else(|| text.strip_prefix("GAZE_COORDS"))?;
    let v: Vec<f64> = rest.split_whitespace().filter_map(parse_num).collect();
    if v.len() < 4 {
        return None;
    }
    let w = (v[2] - v[0] + 1.0).round();
    let h = (v[3] - v[1] + 1.0).round();
    (w > 0.0 && h > 0.0).then_some((w as u32, h as u32))
}

fn var_lookup<'a>(vars: &'a BTreeMap<String, String>, keys: &[&str]) -> Option<&'a String> {
    keys.iter().find_map(|k| {
        vars.iter()
            .find(|(name, _)| name.eq_ignore_ascii_case(k))
            .map(|(_, v)| v)
    })
}

fn is_truthy(v: Option<&String>) -> bool {
    v.is_some_and(|v| v == "1" || v.eq_ignore_ascii_case("true"))
}

/// Collect trial metadata from the message lines of one trial block.
///
/// Span boundaries (line indices and timestamps) are filled in by the caller.
pub fn extract_metadata(trial_lines: &[&str]) -> TrialMetadata {
    let mut meta = TrialMetadata::default();
    let mut trial_id = None;
    for line in trial_lines {
        let Some(msg) = message_of(line) else { continue };
        let text = strip_viewer_prefix(&msg.text);
        if let Some(rest) = text.strip_prefix("TRIAL_VAR") {
            if let Some((key, value)) = split_token(rest) {
                meta.trial_vars.insert(key.to_string(), value.trim_end().to_string());
            }
        } else if let Some(rest) = text.strip_prefix("IAREA FILE") {
            let name = rest.trim();
            if !name.is_empty() {
                meta.ias_file = Some(name.to_string());
            }
        } else if let Some(rest) = text.strip_prefix("TRIALID") {
            let id = rest.trim();
            if !id.is_empty() {
                trial_id = Some(id.to_string());
            }
        } else if let Some((w, h)) = screen_from_coords(text) {
            meta.screen_w = Some(w);
            meta.screen_h = Some(h);
        }
    }

    let vars = &meta.trial_vars;
    let id = trial_id.or_else(|| var_lookup(vars, &["trial_id", "trial", "trialid"]).cloned());
    if let Some(id) = id {
        if let Some((cond, item)) = eyetrack_trial_id(&id) {
            meta.condition = cond;
            meta.item = item;
        }
        meta.trial_id = id;
    }
    if let Some(c) = var_lookup(vars, &["condition", "cond"]) {
        meta.condition = c.clone();
    }
    if let Some(i) = var_lookup(vars, &["item", "item_id"]) {
        meta.item = i.clone();
    }
    meta.question_response =
        var_lookup(vars, &["question_response", "question_answer", "response", "answer"]).cloned();
    meta
}

fn is_known_message(text: &str, starts: &[&str], ends: &[&str]) -> bool {
    let text = strip_viewer_prefix(text);
    ["REGION CHAR", "TRIAL_VAR", "IAREA FILE", "TRIALID", "DISPLAY_COORDS", "GAZE_COORDS"]
        .iter()
        .chain(starts)
        .chain(ends)
        .any(|p| text.starts_with(p))
}

/// Set `blink_before` / `blink_after` on time-sorted fixations.
///
/// `blink_after` holds when a blink starts in `(fix.end, next.start]`, and
/// `blink_before` when one starts in `(prev.end, fix.start]`; the first and
/// last fixations use open-ended intervals.
pub fn annotate_blink_adjacency(fixations: &mut [Fixation], blinks: &[Blink]) {
    let starts: Vec<i64> = {
        let mut s: Vec<i64> = blinks.iter().map(|b| b.start_ms).collect();
        s.sort_unstable();
        s
    };
    let any_in = |lo: Option<i64>, hi: Option<i64>| {
        starts.iter().any(|&t| lo.is_none_or(|lo| t > lo) && hi.is_none_or(|hi| t <= hi))
    };
    let bounds: Vec<(i64, i64)> = fixations.iter().map(|f| (f.start_ms, f.end_ms)).collect();
    for (i, fix) in fixations.iter_mut().enumerate() {
        let prev_end = i.checked_sub(1).map(|p| bounds[p].1);
        let next_start = bounds.get(i + 1).map(|b| b.0);
        fix.blink_before = any_in(prev_end, Some(fix.start_ms));
        fix.blink_after = any_in(Some(fix.end_ms), next_start);
    }
}

/// Line range holding the metadata for each span: from the span's `TRIALID`
/// message (or the end of the previous span) up to the next block.
fn metadata_blocks(lines: &[&str], spans: &[TrialSpan]) -> Vec<(usize, usize)> {
    let mut starts = Vec::with_capacity(spans.len());
    let mut prev_end: Option<usize> = None;
    for span in spans {
        let lo = prev_end.map_or(0, |e| e + 1);
        let trialid = (lo..=span.start_idx).rev().find(|&i| {
            message_of(lines[i]).is_some_and(|m| strip_viewer_prefix(&m.text).starts_with("TRIALID"))
        });
        starts.push(trialid.unwrap_or(lo));
        prev_end = Some(span.end_idx);
    }
    starts
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let e = starts.get(i + 1).map_or(lines.len(), |&next| next);
            (s, e.max(spans[i].end_idx + 1))
        })
        .collect()
}

/// Parse a whole ASC file into trials.
pub fn parse_asc(text: &str, config: &AscParseConfig) -> Result<AscParse, AscError> {
    config.validate()?;
    let lines: Vec<&str> = text.lines().collect();
    let (spans, mut warnings) = segment_trials(&lines, config);
    if spans.is_empty() {
        return Err(AscError::NoTrialsFound);
    }
    let starts = config.resolved_start_flags();
    let ends = config.resolved_end_flags();

    // Screen geometry is usually declared once in the file header.
    let mut header_screen: Vec<(usize, (u32, u32))> = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if let Some(msg) = message_of(line) {
            if let Some(s) = screen_from_coords(&msg.text) {
                header_screen.push((i, s));
            }
        }
    }

    let blocks = metadata_blocks(&lines, &spans);
    let mut trials = Vec::with_capacity(spans.len());
    for (ordinal, (span, &(block_lo, block_hi))) in spans.iter().zip(&blocks).enumerate() {
        let block = &lines[block_lo..block_hi];
        let mut meta = extract_metadata(block);
        if meta.trial_id.is_empty() {
            meta.trial_id = format!("trial_{}", ordinal + 1);
        }
        if meta.screen_w.is_none() {
            if let Some((_, (w, h))) = header_screen.iter().rev().find(|(i, _)| *i <= span.start_idx) {
                meta.screen_w = Some(*w);
                meta.screen_h = Some(*h);
            }
        }
        meta.start_line_idx = span.start_idx;
        meta.end_line_idx = span.end_idx;
        meta.start_ms = span.start_ms;
        meta.end_ms = span.end_ms;

        let mut trial = TrialRecord {
            is_practice: is_truthy(var_lookup(&meta.trial_vars, &["practice"])),
            is_question: is_truthy(var_lookup(&meta.trial_vars, &["question"])),
            metadata: meta,
            ..TrialRecord::default()
        };

        let (boxes, region_warnings) = extract_region_chars(block);
        trial.warnings.extend(region_warnings.into_iter().map(|w| ParseWarning {
            line: w.line.map(|l| l + block_lo),
            message: w.message,
        }));
        trial.char_boxes = boxes;
        for (offset, line) in block.iter().enumerate() {
            if let Some(msg) = message_of(line) {
                if let RegionChar::Box(_, Some(enc)) = parse_region_char(&msg.text) {
                    trial.warnings.push(ParseWarning::at(
                        block_lo + offset,
                        format!("REGION CHAR space encoded as {enc}"),
                    ));
                }
                if !is_known_message(&msg.text, &starts, &ends) {
                    trial.messages.push(msg);
                }
            }
        }

        extract_events(&lines, span, config, &mut trial);
        trials.push(trial);
    }

    if config.exclude_practice_and_questions {
        let before = trials.len();
        trials.retain(|t| !t.is_practice && !t.is_question);
        if trials.len() < before {
            warnings.push(ParseWarning {
                line: None,
                message: format!("{} practice/question trial(s) excluded", before - trials.len()),
            });
        }
    }
    Ok(AscParse { trials, warnings })
}

fn extract_events(lines: &[&str], span: &TrialSpan, config: &AscParseConfig, trial: &mut TrialRecord) {
    let mut fixations: Vec<Fixation> = Vec::new();
    let mut saccades: Vec<Saccade> = Vec::new();
    let mut blinks: Vec<Blink> = Vec::new();
    for (idx, line) in lines.iter().enumerate().take(span.end_idx).skip(span.start_idx + 1) {
        match parse_event_line(line) {
            Ok(AscEvent::Fixation(f)) => fixations.push(f),
            Ok(AscEvent::Saccade(s)) => saccades.push(s),
            Ok(AscEvent::Blink(b)) => blinks.push(b),
            Ok(_) => {}
            Err(e) => trial.warnings.push(ParseWarning::at(idx, e.to_string())),
        }
    }

    // Monocular analysis: keep the eye with more fixations (right eye on ties).
    let left = fixations.iter().filter(|f| f.eye == Eye::L).count();
    let right = fixations.len() - left;
    let eye = if left > right { Eye::L } else { Eye::R };
    if left > 0 && right > 0 {
        trial.warnings.push(ParseWarning {
            line: None,
            message: format!("binocular recording; keeping eye {} ({left} L / {right} R fixations)", eye.as_str()),
        });
    }
    trial.eye = (!fixations.is_empty()).then_some(eye);
    fixations.retain(|f| f.eye == eye);
    saccades.retain(|s| s.eye == eye);
    blinks.retain(|b| b.eye == eye);

    let (lo, hi) = (span.start_ms, span.end_ms);
    fixations.retain_mut(|f| {
        if f.start_ms < lo {
            if config.discard_fixation_at_start {
                return false;
            }
            f.start_ms = lo;
        }
        f.end_ms = f.end_ms.min(hi);
        f.duration_ms = f.end_ms - f.start_ms;
        f.end_ms >= f.start_ms
    });
    saccades.retain_mut(|s| {
        s.start_ms = s.start_ms.max(lo);
        s.end_ms = s.end_ms.min(hi);
        s.duration_ms = s.end_ms - s.start_ms;
        s.end_ms >= s.start_ms
    });
    blinks.retain_mut(|b| {
        b.start_ms = b.start_ms.max(lo);
        b.end_ms = b.end_ms.min(hi);
        b.duration_ms = b.end_ms - b.start_ms;
        b.end_ms >= b.start_ms
    });

    fixations.sort_by_key(|f| f.start_ms);
    saccades.sort_by_key(|s| s.start_ms);
    blinks.sort_by_key(|b| b.start_ms);
    for (i, f) in fixations.iter_mut().enumerate() {
        f.index = i;
    }
    annotate_blink_adjacency(&mut fixations, &blinks);
    trial.fixations = fixations;
    trial.saccades = saccades;
    trial.blinks = blinks;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> AscParseConfig {
        AscParseConfig::default()
    }

    #[test]
    fn efix_fields_map_directly() {
        let ev = parse_event_line("EFIX R 1000 1250 250 400.5 300.2 800").unwrap();
        let AscEvent::Fixation(f) = ev else { panic!("expected fixation") };
        assert_eq!((f.start_ms, f.end_ms, f.duration_ms), (1000, 1250, 250));
        assert_eq!((f.x, f.y, f.pupil), (400.5, 300.2, 800.0));
        assert_eq!(f.eye, Eye::R);
    }

    #[test]
    fn eblink_fields_map_directly() {
        let ev = parse_event_line("EBLINK R 2000 2100 100").unwrap();
        assert_eq!(
            ev,
            AscEvent::Blink(Blink { eye: Eye::R, start_ms: 2000, end_ms: 2100, duration_ms: 100 })
        );
    }

    #[test]
    fn short_efix_is_malformed() {
        assert!(matches!(
            parse_event_line("EFIX R 1000"),
            Err(AscError::MalformedEventLine { .. })
        ));
        assert!(parse_event_line("ESACC R 1 2 1 x 2 3 4 5 6").is_err());
    }

    #[test]
    fn other_line_kinds() {
        assert_eq!(parse_event_line("1000\t 400.0\t 300.0\t 800.0 ...").unwrap(), AscEvent::Sample { time_ms: 1000 });
        assert_eq!(
            parse_event_line("MSG\t1000 SYNCTIME").unwrap(),
            AscEvent::Message(Message { time_ms: 1000, text: "SYNCTIME".into() })
        );
        assert_eq!(
            parse_event_line("MSG 1010 -10 DISPLAY ON").unwrap(),
            AscEvent::Message(Message { time_ms: 1020, text: "DISPLAY ON".into() })
        );
        assert_eq!(parse_event_line("SFIX R 1000").unwrap(), AscEvent::Unknown);
        assert_eq!(parse_event_line("** CONVERTED FROM x.edf").unwrap(), AscEvent::Unknown);
        assert_eq!(parse_event_line("").unwrap(), AscEvent::Unknown);
        // fractional timestamps truncate
        let AscEvent::Blink(b) = parse_event_line("EBLINK L 2000.7 2100.2 100").unwrap() else { panic!() };
        assert_eq!((b.start_ms, b.end_ms), (2000, 2100));
        // missing saccade positions
        let AscEvent::Saccade(s) = parse_event_line("ESACC R 10 20 10 . . 5 6 0.1 30").unwrap() else { panic!() };
        assert!(s.x_start.is_nan());
    }

    #[test]
    fn single_span() {
        let lines = ["MSG 1000 SYNCTIME", "EFIX R 1000 1200 200 1 2 3", "MSG 5000 ENDBUTTON 1"];
        let (spans, warnings) = segment_trials(&lines, &cfg());
        assert_eq!(spans, vec![TrialSpan { start_idx: 0, end_idx: 2, start_ms: 1000, end_ms: 5000 }]);
        assert!(warnings.is_empty());
    }

    #[test]
    fn repeated_start_keeps_latest() {
        let lines = [
            "MSG 900 TRIALID T1",
            "MSG 1000 SYNCTIME",
            "EFIX R 1000 1200 200 1 2 3",
            "MSG 2000 SYNCTIME",
            "EFIX R 2000 2200 200 1 2 3",
            "MSG 5000 ENDBUTTON",
        ];
        let (spans, warnings) = segment_trials(&lines, &cfg());
        assert_eq!(spans, vec![TrialSpan { start_idx: 3, end_idx: 5, start_ms: 2000, end_ms: 5000 }]);
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].line, Some(3));
    }

    #[test]
    fn unmatched_start_is_skipped_with_warning() {
        let lines = ["MSG 1000 SYNCTIME", "EFIX R 1000 1200 200 1 2 3"];
        let (spans, warnings) = segment_trials(&lines, &cfg());
        assert!(spans.is_empty());
        assert!(warnings[0].message.contains("unbalanced"));
    }

    #[test]
    fn spans_follow_flag_selection() {
        let lines = ["MSG 1000 GAZE TARGET ON", "MSG 1500 SYNCTIME", "MSG 3000 KEYBOARD", "MSG 3100 ENDBUTTON"];
        let mut c = cfg();
        c.start_flags = vec!["GAZE TARGET ON".into()];
        c.end_flags = vec!["KEYBOARD".into()];
        let (spans, _) = segment_trials(&lines, &c);
        assert_eq!(spans.len(), 1);
        assert_eq!((spans[0].start_ms, spans[0].end_ms), (1000, 3000));

        let (spans, _) = segment_trials(&lines, &cfg());
        assert_eq!((spans[0].start_ms, spans[0].end_ms), (1500, 3100));

        let mut c = cfg();
        c.start_flags = vec!["custom".into()];
        c.custom_start = Some("DISPLAY ON".into());
        let (spans, _) = segment_trials(&lines, &c);
        assert!(spans.is_empty());
    }

    #[test]
    fn record_keyword_flags() {
        let lines = ["START 1000 RIGHT SAMPLES EVENTS", "EFIX R 1000 1200 200 1 2 3", "END 2000 SAMPLES EVENTS"];
        let mut c = cfg();
        c.start_flags = vec!["START".into()];
        c.end_flags = vec!["END".into()];
        let (spans, _) = segment_trials(&lines, &c);
        assert_eq!(spans.len(), 1);
        assert_eq!((spans[0].start_ms, spans[0].end_ms), (1000, 2000));
    }

    fn fix(start: i64, end: i64) -> Fixation {
        Fixation::new(0, start, end, 0.0, 0.0)
    }

    fn blink(start: i64, end: i64) -> Blink {
        Blink { eye: Eye::R, start_ms: start, end_ms: end, duration_ms: end - start }
    }

    #[test]
    fn blink_between_fixations() {
        let mut f = vec![fix(1000, 1250), fix(1500, 1700)];
        annotate_blink_adjacency(&mut f, &[blink(1300, 1400)]);
        assert!(f[0].blink_after && !f[0].blink_before);
        assert!(f[1].blink_before && !f[1].blink_after);
    }

    #[test]
    fn no_blinks_no_flags() {
        let mut f = vec![fix(0, 10), fix(20, 30)];
        annotate_blink_adjacency(&mut f, &[]);
        assert!(f.iter().all(|f| !f.blink_before && !f.blink_after));
    }

    #[test]
    fn blink_before_first_fixation() {
        let mut f = vec![fix(1000, 1200), fix(1300, 1500)];
        annotate_blink_adjacency(&mut f, &[blink(800, 900)]);
        assert!(f[0].blink_before);
        assert!(!f[0].blink_after && !f[1].blink_before && !f[1].blink_after);
    }

    #[test]
    fn region_char_lines() {
        let (boxes, w) = extract_region_chars(&["MSG 900 REGION CHAR 0 1 H 100 90 110 110"]);
        assert!(w.is_empty());
        assert_eq!(boxes.len(), 1);
        let b = &boxes[0];
        assert_eq!((b.index, b.ch), (0, 'H'));
        assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max), (100.0, 90.0, 110.0, 110.0));

        let (boxes, _) = extract_region_chars(&["MSG 1 SYNCTIME", "EFIX R 1 2 1 1 1 1"]);
        assert!(boxes.is_empty());

        let (boxes, _) = extract_region_chars(&[
            "MSG 900 REGION CHAR 1 1   110 90 120 110",
            "MSG 900 REGION CHAR 2 1 space 120 90 130 110",
            "MSG 900 REGION CHAR 3 1 ab 120 90 130 110",
        ]);
        assert_eq!(boxes.iter().map(|b| b.ch).collect::<String>(), "  ");
    }

    #[test]
    fn many_region_chars_keep_order() {
        let lines: Vec<String> = (0..40)
            .map(|i| {
                let x = 100 + 10 * i;
                let c = (b'a' + (i % 26) as u8) as char;
                format!("MSG 900 REGION CHAR {i} 1 {c} {x} 90 {} 110", x + 10)
            })
            .collect();
        let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
        let (boxes, _) = extract_region_chars(&refs);
        assert_eq!(boxes.len(), 40);
        for (i, b) in boxes.iter().enumerate() {
            assert_eq!(b.index, i);
            assert_eq!(b.x_min, 100.0 + 10.0 * i as f64);
        }
    }

    #[test]
    fn metadata_fields() {
        let m = extract_metadata(&["MSG 800 TRIAL_VAR condition easy", "MSG 810 IAREA FILE trial_3.ias"]);
        assert_eq!(m.trial_vars.get("condition").map(String::as_str), Some("easy"));
        assert_eq!(m.condition, "easy");
        assert_eq!(m.ias_file.as_deref(), Some("trial_3.ias"));

        let m = extract_metadata(&["MSG 1 SYNCTIME"]);
        assert!(m.trial_vars.is_empty());

        let m = extract_metadata(&[
            "MSG 1 TRIALID E3I12D0",
            "MSG 2 DISPLAY_COORDS 0 0 1919 1079",
            "MSG 3 -2 !V TRIAL_VAR question_response 2",
        ]);
        assert_eq!((m.condition.as_str(), m.item.as_str()), ("3", "12"));
        assert_eq!((m.screen_w, m.screen_h), (Some(1920), Some(1080)));
        assert_eq!(m.question_response.as_deref(), Some("2"));
    }

    #[test]
    fn empty_input_has_no_trials() {
        assert_eq!(parse_asc("", &cfg()), Err(AscError::NoTrialsFound));
    }

    #[test]
    fn straddling_fixation_at_start() {
        let text = "MSG 1000 SYNCTIME\nEFIX R 900 1100 200 10 20 30\nEFIX R 1150 1300 150 30 20 30\nMSG 2000 ENDBUTTON\n";
        let mut c = cfg();
        let parsed = parse_asc(text, &c).unwrap();
        let f = &parsed.trials[0].fixations;
        assert_eq!(f.len(), 1);
        assert_eq!((f[0].start_ms, f[0].index), (1150, 0));

        c.discard_fixation_at_start = false;
        let parsed = parse_asc(text, &c).unwrap();
        let f = &parsed.trials[0].fixations;
        assert_eq!(f.len(), 2);
        assert_eq!((f[0].start_ms, f[0].end_ms, f[0].duration_ms), (1000, 1100, 100));
    }

    #[test]
    fn binocular_keeps_dominant_eye() {
        let text = "MSG 1000 SYNCTIME\n\
                    EFIX L 1000 1100 100 1 1 1\n\
                    EFIX R 1000 1100 100 2 2 2\n\
                    EFIX L 1200 1300 100 1 1 1\n\
                    MSG 2000 ENDBUTTON\n";
        let parsed = parse_asc(text, &cfg()).unwrap();
        let t = &parsed.trials[0];
        assert_eq!(t.eye, Some(Eye::L));
        assert_eq!(t.fixations.len(), 2);
    }

    #[test]
    fn practice_trials_are_excluded_on_request() {
        let text = "MSG 1 TRIALID P1\nMSG 2 TRIAL_VAR practice 1\nMSG 10 SYNCTIME\nMSG 20 ENDBUTTON\n\
                    MSG 30 TRIALID T1\nMSG 40 SYNCTIME\nMSG 50 ENDBUTTON\n";
        let mut c = cfg();
        let parsed = parse_asc(text, &c).unwrap();
        assert_eq!(parsed.trials.len(), 1);
        assert_eq!(parsed.trials[0].metadata.trial_id, "T1");
        c.exclude_practice_and_questions = false;
        let parsed = parse_asc(text, &c).unwrap();
        assert_eq!(parsed.trials.len(), 2);
        assert!(parsed.trials[0].is_practice);
    }

    #[test]
    fn config_validation() {
        let mut c = cfg();
        c.start_flags = vec![];
        assert!(c.validate().is_err());
        c.custom_start = Some("DISPLAY ON".into());
        assert!(c.validate().is_ok());
        c.custom_end = Some("A\nB".into());
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.end_flags = vec!["".into()];
        assert!(c.validate().is_err());
    }
}
