//! Fixation-to-word mapping and reading measures.

use serde::{Deserialize, Serialize};

use crate::asc::Fixation;
use crate::assign::{LineAssignment, RealignedSaccade};
use crate::stimulus::Stimulus;
use crate::table::CsvTable;
use crate::util::{fmt_f64, fmt_opt};

pub const FIXATION_MEASURES: [&str; 10] = [
    "line_idx",
    "word_idx",
    "char_idx_in_line",
    "char_idx_in_word",
    "landing_position_in_word",
    "distance_prev_cw",
    "distance_next_cw",
    "launch_distance_cw",
    "blink_before",
    "blink_after",
];
pub const SACCADE_MEASURES: [&str; 6] =
    ["length_cw", "euclidean_px", "angle_deg", "is_line_change", "is_return_sweep", "is_directional_deviation"];
pub const WORD_MEASURES: [&str; 7] = [
    "first_fixation_duration_ms",
    "single_fixation_duration_ms",
    "gaze_duration_ms",
    "go_past_time_ms",
    "total_fixation_count",
    "total_fixation_duration_ms",
    "skipped_first_pass",
];
pub const SENTENCE_MEASURES: [&str; 3] = ["total_fixation_duration_ms", "fixation_count", "first_pass_duration_ms"];

const FIXATION_BASE: [&str; 7] = ["fixation_idx", "start_ms", "end_ms", "duration_ms", "x", "y", "corrected_y"];
const SACCADE_BASE: [&str; 11] = [
    "saccade_idx",
    "start_ms",
    "end_ms",
    "duration_ms",
    "x_start",
    "y_start",
    "x_end",
    "y_end",
    "from_line",
    "to_line",
    "from_fixation",
];
const WORD_BASE: [&str; 4] = ["word_idx", "text", "line_idx", "sentence_idx"];
const SENTENCE_BASE: [&str; 1] = ["sentence_idx"];

fn all(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Which optional columns appear in each output table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasuresConfig {
    pub fixation: Vec<String>,
    pub saccade: Vec<String>,
    pub word: Vec<String>,
    pub sentence: Vec<String>,
    /// Vertical extent, in line spacings, beyond which a backward
    /// within-line saccade counts as a directional deviation.
    pub deviation_y_frac: f64,
}

impl Default for MeasuresConfig {
    fn default() -> Self {
        Self {
            fixation: all(&FIXATION_MEASURES),
            saccade: all(&SACCADE_MEASURES),
            word: all(&WORD_MEASURES),
            sentence: all(&SENTENCE_MEASURES),
            deviation_y_frac: 0.5,
        }
    }
}

impl MeasuresConfig {
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        for (field, chosen, known) in [
            ("fixation", &self.fixation, &FIXATION_MEASURES[..]),
            ("saccade", &self.saccade, &SACCADE_MEASURES[..]),
            ("word", &self.word, &WORD_MEASURES[..]),
            ("sentence", &self.sentence, &SENTENCE_MEASURES[..]),
        ] {
            if let Some(bad) = chosen.iter().find(|c| !known.contains(&c.as_str())) {
                return Err((field, format!("unknown measure {bad:?}")));
            }
        }
        if self.deviation_y_frac.is_nan() || self.deviation_y_frac < 0.0 {
            return Err(("deviation_y_frac", "must be a non-negative number".into()));
        }
        Ok(())
    }
}

/// Column list: base columns, then the selected measures in canonical order.
fn columns<'a>(base: &[&'a str], known: &[&'a str], chosen: &[String]) -> Vec<&'a str> {
    base.iter().copied().chain(known.iter().copied().filter(|k| chosen.iter().any(|c| c == k))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordHit {
    pub word_idx: usize,
    /// Index into `stimulus.chars`.
    pub char_idx: usize,
    pub char_idx_in_line: usize,
    pub char_idx_in_word: usize,
}

/// Map each fixation to the horizontally nearest character that belongs to a
/// word on its assigned line.
pub fn assign_words(fixations: &[Fixation], assignment: &LineAssignment, stimulus: &Stimulus) -> Vec<WordHit> {
    assert_eq!(fixations.len(), assignment.line_idx.len(), "assignment covers every fixation");
    fixations
        .iter()
        .zip(&assignment.line_idx)
        .map(|(f, &line)| {
            let l = &stimulus.lines[line];
            let best = stimulus
                .line_chars(line)
                .iter()
                .filter(|c| c.word_idx.is_some())
                .min_by(|a, b| (a.center_x() - f.x).abs().total_cmp(&(b.center_x() - f.x).abs()).then(a.index.cmp(&b.index)))
                .expect("every line holds a word");
            let word = &stimulus.words[best.word_idx.expect("filtered")];
            WordHit {
                word_idx: word.word_idx,
                char_idx: best.index,
                char_idx_in_line: best.index - l.first_char,
                char_idx_in_word: best.index - word.first_char,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordMeasuresRow {
    pub word_idx: usize,
    pub text: String,
    pub line_idx: usize,
    pub sentence_idx: usize,
    pub first_fixation_duration_ms: Option<i64>,
    pub single_fixation_duration_ms: Option<i64>,
    pub gaze_duration_ms: Option<i64>,
    pub go_past_time_ms: Option<i64>,
    pub total_fixation_count: usize,
    pub total_fixation_duration_ms: i64,
    pub skipped_first_pass: bool,
}

/// Word-level measures from a fixation sequence of word indices and durations.
///
/// First pass on `w` starts at the first fixation on `w` unless a later
/// word was already fixated, in which case the word was skipped and its
/// first-pass measures stay unset. Go-past time runs from the first entry
/// until the first fixation on any later word.
pub fn word_measures_from_sequence(words: &[usize], durations: &[i64], word_count: usize) -> Vec<WordFirstPass> {
    (0..word_count)
        .map(|w| {
            let total_fixation_count = words.iter().filter(|&&x| x == w).count();
            let total_fixation_duration_ms = words.iter().zip(durations).filter(|(&x, _)| x == w).map(|(_, d)| d).sum();
            let mut out = WordFirstPass { total_fixation_count, total_fixation_duration_ms, ..Default::default() };
            let Some(entry) = words.iter().position(|&x| x == w) else {
                out.skipped_first_pass = true;
                return out;
            };
            if words[..entry].iter().any(|&x| x > w) {
                out.skipped_first_pass = true;
                return out;
            }
            let run = words[entry..].iter().take_while(|&&x| x == w).count();
            let exit = words[entry..].iter().position(|&x| x > w).map_or(words.len(), |p| entry + p);
            out.first_fixation_duration_ms = Some(durations[entry]);
            out.single_fixation_duration_ms = (run == 1).then_some(durations[entry]);
            out.gaze_duration_ms = Some(durations[entry..entry + run].iter().sum());
            out.go_past_time_ms = Some(durations[entry..exit].iter().sum());
            out
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordFirstPass {
    pub first_fixation_duration_ms: Option<i64>,
    pub single_fixation_duration_ms: Option<i64>,
    pub gaze_duration_ms: Option<i64>,
    pub go_past_time_ms: Option<i64>,
    pub total_fixation_count: usize,
    pub total_fixation_duration_ms: i64,
    pub skipped_first_pass: bool,
}

pub fn word_measures(fixations: &[Fixation], hits: &[WordHit], stimulus: &Stimulus) -> Vec<WordMeasuresRow> {
    let words: Vec<usize> = hits.iter().map(|h| h.word_idx).collect();
    let durations: Vec<i64> = fixations.iter().map(|f| f.duration_ms).collect();
    word_measures_from_sequence(&words, &durations, stimulus.words.len())
        .into_iter()
        .zip(&stimulus.words)
        .map(|(m, w)| WordMeasuresRow {
            word_idx: w.word_idx,
            text: w.text.clone(),
            line_idx: w.line_idx,
            sentence_idx: w.sentence_idx,
            first_fixation_duration_ms: m.first_fixation_duration_ms,
            single_fixation_duration_ms: m.single_fixation_duration_ms,
            gaze_duration_ms: m.gaze_duration_ms,
            go_past_time_ms: m.go_past_time_ms,
            total_fixation_count: m.total_fixation_count,
            total_fixation_duration_ms: m.total_fixation_duration_ms,
            skipped_first_pass: m.skipped_first_pass,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixationFeatureRow {
    pub fixation_idx: usize,
    pub start_ms: i64,
    pub end_ms: i64,
    pub duration_ms: i64,
    pub x: f64,
    pub y: f64,
    pub corrected_y: f64,
    pub line_idx: usize,
    pub word_idx: usize,
    pub char_idx_in_line: usize,
    pub char_idx_in_word: usize,
    pub landing_position_in_word: f64,
    pub distance_prev_cw: Option<f64>,
    pub distance_next_cw: Option<f64>,
    pub launch_distance_cw: Option<f64>,
    pub blink_before: bool,
    pub blink_after: bool,
}

pub fn fixation_features(
    fixations: &[Fixation],
    assignment: &LineAssignment,
    hits: &[WordHit],
    stimulus: &Stimulus,
) -> Vec<FixationFeatureRow> {
    let cw = stimulus.char_width;
    fixations
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let word = &stimulus.words[hits[i].word_idx];
            let prev = i.checked_sub(1).map(|p| &fixations[p]);
            let next = fixations.get(i + 1);
            FixationFeatureRow {
                fixation_idx: i,
                start_ms: f.start_ms,
                end_ms: f.end_ms,
                duration_ms: f.duration_ms,
                x: f.x,
                y: f.y,
                corrected_y: assignment.corrected_y[i],
                line_idx: assignment.line_idx[i],
                word_idx: hits[i].word_idx,
                char_idx_in_line: hits[i].char_idx_in_line,
                char_idx_in_word: hits[i].char_idx_in_word,
                landing_position_in_word: (f.x - word.x_min) / cw,
                distance_prev_cw: prev.map(|p| (f.x - p.x) / cw),
                distance_next_cw: next.map(|n| (n.x - f.x) / cw),
                launch_distance_cw: prev.map(|p| (word.x_min - p.x) / cw),
                blink_before: f.blink_before,
                blink_after: f.blink_after,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaccadeFeatureRow {
    pub saccade_idx: usize,
    pub start_ms: i64,
    pub end_ms: i64,
    pub duration_ms: i64,
    pub x_start: f64,
    pub y_start: f64,
    pub x_end: f64,
    pub y_end: f64,
    pub from_line: usize,
    pub to_line: usize,
    pub from_fixation: usize,
    pub length_cw: f64,
    pub euclidean_px: f64,
    pub angle_deg: f64,
    pub is_line_change: bool,
    pub is_return_sweep: bool,
    pub is_directional_deviation: bool,
}

/// Angle of a screen-space displacement in degrees, in (−180, 180]; positive is upward.
pub fn saccade_angle_deg(dx: f64, dy: f64) -> f64 {
    let a = (-dy).atan2(dx).to_degrees();
    if a <= -180.0 {
        a + 360.0
    } else {
        a
    }
}

pub fn saccade_features(saccades: &[RealignedSaccade], stimulus: &Stimulus, deviation_y_frac: f64) -> Vec<SaccadeFeatureRow> {
    let cw = stimulus.char_width;
    let spacing = stimulus.line_spacing();
    saccades
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let s = &r.saccade;
            let dx = s.x_end - s.x_start;
            let dy = s.y_end - s.y_start;
            let is_line_change = r.from_line != r.to_line;
            SaccadeFeatureRow {
                saccade_idx: i,
                start_ms: s.start_ms,
                end_ms: s.end_ms,
                duration_ms: s.duration_ms,
                x_start: s.x_start,
                y_start: s.y_start,
                x_end: s.x_end,
                y_end: s.y_end,
                from_line: r.from_line,
                to_line: r.to_line,
                from_fixation: r.from_fixation,
                length_cw: dx / cw,
                euclidean_px: dx.hypot(dy),
                angle_deg: saccade_angle_deg(dx, dy),
                is_line_change,
                is_return_sweep: r.to_line == r.from_line + 1 && dx < 0.0,
                is_directional_deviation: !is_line_change && dx < 0.0 && dy.abs() > deviation_y_frac * spacing,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceMeasuresRow {
    pub sentence_idx: usize,
    pub total_fixation_duration_ms: i64,
    pub fixation_count: usize,
    pub first_pass_duration_ms: i64,
}

/// Sentence totals; first-pass time counts fixations on the sentence that
/// happen before any later sentence is fixated.
pub fn sentence_measures(fixations: &[Fixation], hits: &[WordHit], stimulus: &Stimulus) -> Vec<SentenceMeasuresRow> {
    let sent: Vec<usize> = hits.iter().map(|h| stimulus.words[h.word_idx].sentence_idx).collect();
    (0..stimulus.sentence_count())
        .map(|s| {
            let mine = || sent.iter().zip(fixations).filter(move |(&x, _)| x == s);
            let cutoff = sent.iter().position(|&x| x > s).unwrap_or(sent.len());
            SentenceMeasuresRow {
                sentence_idx: s,
                total_fixation_duration_ms: mine().map(|(_, f)| f.duration_ms).sum(),
                fixation_count: mine().count(),
                first_pass_duration_ms: sent[..cutoff]
                    .iter()
                    .zip(fixations)
                    .filter(|(&x, _)| x == s)
                    .map(|(_, f)| f.duration_ms)
                    .sum(),
            }
        })
        .collect()
}

fn b(v: bool) -> String {
    v.to_string()
}

fn f(v: f64) -> String {
    fmt_f64(Some(v))
}

pub fn fixation_table(rows: &[FixationFeatureRow], cfg: &MeasuresConfig) -> CsvTable {
    let mut t = CsvTable::new(&FIXATION_BASE);
    t.headers.extend(FIXATION_MEASURES.iter().map(|s| s.to_string()));
    for r in rows {
        t.rows.push(vec![
            r.fixation_idx.to_string(),
            r.start_ms.to_string(),
            r.end_ms.to_string(),
            r.duration_ms.to_string(),
            f(r.x),
            f(r.y),
            f(r.corrected_y),
            r.line_idx.to_string(),
            r.word_idx.to_string(),
            r.char_idx_in_line.to_string(),
            r.char_idx_in_word.to_string(),
            f(r.landing_position_in_word),
            fmt_f64(r.distance_prev_cw),
            fmt_f64(r.distance_next_cw),
            fmt_f64(r.launch_distance_cw),
            b(r.blink_before),
            b(r.blink_after),
        ]);
    }
    t.select(&columns(&FIXATION_BASE, &FIXATION_MEASURES, &cfg.fixation))
}

pub fn saccade_table(rows: &[SaccadeFeatureRow], cfg: &MeasuresConfig) -> CsvTable {
    let mut t = CsvTable::new(&SACCADE_BASE);
    t.headers.extend(SACCADE_MEASURES.iter().map(|s| s.to_string()));
    for r in rows {
        t.rows.push(vec![
            r.saccade_idx.to_string(),
            r.start_ms.to_string(),
            r.end_ms.to_string(),
            r.duration_ms.to_string(),
            f(r.x_start),
            f(r.y_start),
            f(r.x_end),
            f(r.y_end),
            r.from_line.to_string(),
            r.to_line.to_string(),
            r.from_fixation.to_string(),
            f(r.length_cw),
            f(r.euclidean_px),
            f(r.angle_deg),
            b(r.is_line_change),
            b(r.is_return_sweep),
            b(r.is_directional_deviation),
        ]);
    }
    t.select(&columns(&SACCADE_BASE, &SACCADE_MEASURES, &cfg.saccade))
}

pub fn word_table(rows: &[WordMeasuresRow], cfg: &MeasuresConfig) -> CsvTable {
    let mut t = CsvTable::new(&WORD_BASE);
    t.headers.extend(WORD_MEASURES.iter().map(|s| s.to_string()));
    for r in rows {
        t.rows.push(vec![
            r.word_idx.to_string(),
            r.text.clone(),
            r.line_idx.to_string(),
            r.sentence_idx.to_string(),
            fmt_opt(r.first_fixation_duration_ms),
            fmt_opt(r.single_fixation_duration_ms),
            fmt_opt(r.gaze_duration_ms),
            fmt_opt(r.go_past_time_ms),
            r.total_fixation_count.to_string(),
            r.total_fixation_duration_ms.to_string(),
            b(r.skipped_first_pass),
        ]);
    }
    t.select(&columns(&WORD_BASE, &WORD_MEASURES, &cfg.word))
}

pub fn sentence_table(rows: &[SentenceMeasuresRow], cfg: &MeasuresConfig) -> CsvTable {
    let mut t = CsvTable::new(&SENTENCE_BASE);
    t.headers.extend(SENTENCE_MEASURES.iter().map(|s| s.to_string()));
    for r in rows {
        t.rows.push(vec![
            r.sentence_idx.to_string(),
            r.total_fixation_duration_ms.to_string(),
            r.fixation_count.to_string(),
            r.first_pass_duration_ms.to_string(),
        ]);
    }
    t.select(&columns(&SENTENCE_BASE, &SENTENCE_MEASURES, &cfg.sentence))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_example() {
        let m = word_measures_from_sequence(&[1, 2, 2, 1, 3], &[100, 150, 50, 80, 120], 5);
        assert_eq!(m[2].gaze_duration_ms, Some(200));
        assert_eq!(m[2].go_past_time_ms, Some(280));
        assert_eq!(m[2].first_fixation_duration_ms, Some(150));
        assert_eq!(m[2].single_fixation_duration_ms, None);
        assert_eq!(m[1].total_fixation_duration_ms, 180);
        assert!(m[0].skipped_first_pass);
        assert_eq!(m[0].gaze_duration_ms, None);
        assert!(m[4].skipped_first_pass);
    }

    #[test]
    fn single_fixation_word() {
        let m = word_measures_from_sequence(&[0], &[230], 1);
        let w = &m[0];
        assert_eq!(
            (w.first_fixation_duration_ms, w.single_fixation_duration_ms, w.gaze_duration_ms, w.go_past_time_ms),
            (Some(230), Some(230), Some(230), Some(230))
        );
        assert_eq!(w.total_fixation_duration_ms, 230);
    }

    #[test]
    fn word_skipped_then_regressed_to() {
        let m = word_measures_from_sequence(&[0, 2, 1], &[100, 100, 100], 3);
        assert!(m[1].skipped_first_pass);
        assert_eq!(m[1].total_fixation_count, 1);
        assert_eq!(m[0].go_past_time_ms, Some(100));
    }

    #[test]
    fn angles() {
        assert!((saccade_angle_deg(30.0, -40.0) - 53.130_102_354_156).abs() < 1e-9);
        assert_eq!(saccade_angle_deg(-10.0, 0.0), 180.0);
        assert_eq!(saccade_angle_deg(-10.0, -0.0), 180.0);
        assert_eq!(saccade_angle_deg(10.0, 0.0), 0.0);
    }
}
