//! Interest-area (IAS) files and their attachment to trials.
//!
//! Coordinates are treated as half-open boxes `[min, max)`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CharBox;
use crate::asc::{ParseWarning, TrialRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IasRegion {
    pub id: i64,
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub label: String,
}

/// Parse `RECTANGLE <id> <x_min> <y_min> <x_max> <y_max> <label>` lines.
///
/// Blank lines and `#` comments are skipped silently; anything else that is
/// not a well-formed RECTANGLE line is skipped with a warning.
pub fn parse_ias(text: &str) -> (Vec<IasRegion>, Vec<ParseWarning>) {
    let mut regions = Vec::new();
    let mut warnings = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens[0] != "RECTANGLE" {
            warnings.push(ParseWarning { line: Some(idx), message: format!("ignored IAS line starting with {:?}", tokens[0]) });
            continue;
        }
        if tokens.len() < 7 {
            warnings.push(ParseWarning { line: Some(idx), message: "malformed IAS line: too few fields".into() });
            continue;
        }
        let id = tokens[1].parse::<i64>();
        let coords: Result<Vec<f64>, _> = tokens[2..6].iter().map(|t| t.parse::<f64>()).collect();
        match (id, coords) {
            (Ok(id), Ok(c)) if c[0] < c[2] && c[1] < c[3] => regions.push(IasRegion {
                id,
                x_min: c[0],
                y_min: c[1],
                x_max: c[2],
                y_max: c[3],
                label: tokens[6..].join(" "),
            }),
            _ => warnings.push(ParseWarning { line: Some(idx), message: "malformed IAS line: bad id or coordinates".into() }),
        }
    }
    (regions, warnings)
}

/// Synthesize per-character boxes by dividing each region uniformly across
/// its label. Also returns the character width estimate: region width over
/// label length, averaged across regions.
pub fn ias_char_boxes(regions: &[IasRegion]) -> (Vec<CharBox>, Option<f64>) {
    let mut boxes = Vec::new();
    let mut per_region_width = Vec::new();
    for (r_idx, r) in regions.iter().enumerate() {
        let chars: Vec<char> = r.label.chars().collect();
        if chars.is_empty() {
            continue;
        }
        let w = (r.x_max - r.x_min) / chars.len() as f64;
        per_region_width.push(w);
        for (k, ch) in chars.into_iter().enumerate() {
            let x = r.x_min + w * k as f64;
            let mut b = CharBox::new(boxes.len(), ch, x, r.y_min, x + w, r.y_max);
            b.region = Some(r_idx);
            boxes.push(b);
        }
    }
    (boxes, crate::util::mean(&per_region_width))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IasAttachReport {
    pub attached: Vec<String>,
    /// Trial ids for which no IAS file could be found.
    pub missing: Vec<String>,
    pub warnings: Vec<String>,
}

fn basename(name: &str) -> &str {
    Path::new(name).file_name().and_then(|n| n.to_str()).unwrap_or(name)
}

/// Fill `char_boxes` for trials without REGION CHAR data from their IAS file.
///
/// Files are matched by exact name first, then by case-insensitive basename.
pub fn attach_ias_to_trials(trials: &mut [TrialRecord], ias_files: &BTreeMap<String, String>) -> IasAttachReport {
    let mut report = IasAttachReport::default();
    for trial in trials.iter_mut() {
        if !trial.char_boxes.is_empty() {
            continue;
        }
        let id = trial.metadata.trial_id.clone();
        let Some(wanted) = trial.metadata.ias_file.clone() else {
            report.missing.push(id);
            continue;
        };
        let found = ias_files.get(&wanted).map(|t| (wanted.clone(), t)).or_else(|| {
            let want = basename(&wanted).to_lowercase();
            ias_files
                .iter()
                .find(|(name, _)| basename(name).to_lowercase() == want)
                .map(|(name, t)| (name.clone(), t))
        });
        let Some((name, text)) = found else {
            report.missing.push(id);
            continue;
        };
        if name != wanted {
            report.warnings.push(format!("trial {id}: IAS file {wanted:?} matched {name:?} by basename"));
        }
        let (regions, warnings) = parse_ias(text);
        report.warnings.extend(warnings.iter().map(|w| format!("{name}: {w}")));
        let (boxes, width) = ias_char_boxes(&regions);
        if boxes.is_empty() {
            report.missing.push(id);
            continue;
        }
        trial.char_boxes = boxes;
        trial.char_width_hint = width;
        report.attached.push(id);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stimulus::build_stimulus;

    #[test]
    fn rectangle_line() {
        let (r, w) = parse_ias("RECTANGLE 1 100 90 160 110 there");
        assert!(w.is_empty());
        assert_eq!(
            r,
            vec![IasRegion { id: 1, x_min: 100.0, y_min: 90.0, x_max: 160.0, y_max: 110.0, label: "there".into() }]
        );
    }

    #[test]
    fn empty_and_unknown_lines() {
        let (r, w) = parse_ias("");
        assert!(r.is_empty() && w.is_empty());
        let (r, w) = parse_ias("ELLIPSE 1 0 0 1 1 x\nRECTANGLE 2 a 0 1 1 y\n\n# note");
        assert!(r.is_empty());
        assert_eq!(w.len(), 2);
    }

    fn twelve_word_ias() -> String {
        let words = ["Once", "upon", "a", "time", "there", "was", "a", "small", "red", "fox.", "It", "ran."];
        let mut out = String::new();
        let mut x = 100.0;
        for (i, w) in words.iter().enumerate() {
            if i == 6 {
                x = 100.0;
            }
            let y = if i < 6 { 200.0 } else { 260.0 };
            let width = 12.0 * w.len() as f64;
            out.push_str(&format!("RECTANGLE {} {} {} {} {} {}\n", i + 1, x, y - 20.0, x + width, y + 20.0, w));
            x += width + 12.0;
        }
        out
    }

    #[test]
    fn word_level_regions_become_words() {
        let (regions, _) = parse_ias(&twelve_word_ias());
        assert_eq!(regions.len(), 12);
        let (boxes, width) = ias_char_boxes(&regions);
        assert_eq!(width, Some(12.0));
        let s = build_stimulus(&boxes, false).unwrap();
        assert_eq!(s.words.len(), 12);
        let texts: Vec<&str> = s.words.iter().map(|w| w.text.as_str()).collect();
        let labels: Vec<&str> = regions.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(texts, labels);
        assert_eq!(s.sentence_count(), 2);
    }

    #[test]
    fn adjacent_regions_stay_separate_words() {
        let (regions, _) = parse_ias("RECTANGLE 1 0 0 30 20 abc\nRECTANGLE 2 30 0 50 20 de");
        let (boxes, _) = ias_char_boxes(&regions);
        let s = build_stimulus(&boxes, false).unwrap();
        assert_eq!(s.words.len(), 2);
    }

    fn trial_with_ias(name: &str) -> TrialRecord {
        let mut t = TrialRecord::default();
        t.metadata.trial_id = "t".into();
        t.metadata.ias_file = Some(name.into());
        t
    }

    #[test]
    fn attach_by_exact_and_basename() {
        let text = "RECTANGLE 1 0 0 30 20 abc".to_string();
        let mut trials = vec![trial_with_ias("t3.ias")];
        let map = BTreeMap::from([("t3.ias".to_string(), text.clone())]);
        let report = attach_ias_to_trials(&mut trials, &map);
        assert_eq!(report.attached, vec!["t"]);
        assert!(report.warnings.is_empty());
        assert_eq!(trials[0].char_boxes.len(), 3);

        let mut trials = vec![trial_with_ias("runtime/ias/t3.ias")];
        let map = BTreeMap::from([("T3.IAS".to_string(), text)]);
        let report = attach_ias_to_trials(&mut trials, &map);
        assert_eq!(report.attached.len(), 1);
        assert_eq!(report.warnings.len(), 1);

        let mut trials = vec![trial_with_ias("other.ias")];
        let report = attach_ias_to_trials(&mut trials, &map);
        assert_eq!(report.missing, vec!["t"]);
        assert!(trials[0].char_boxes.is_empty());
    }
}
