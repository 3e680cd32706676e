//! Geometric text model: characters grouped into words, lines and sentences.

mod custom;
mod ias;

pub use custom::{guess_column_map, import_custom, ColumnMap, ColumnTarget, ImportError, Table};
pub use ias::{attach_ias_to_trials, ias_char_boxes, parse_ias, IasAttachReport, IasRegion};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::median;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StimulusError {
    #[error("stimulus has no characters")]
    EmptyStimulus,
    #[error("no IAS file available for trial {0}")]
    MissingIasFile(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharBox {
    pub index: usize,
    #[serde(rename = "char")]
    pub ch: char,
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    #[serde(default)]
    pub line_idx: usize,
    #[serde(default)]
    pub word_idx: Option<usize>,
    /// Interest-area region the box was synthesized from; word boundaries
    /// also fall between different regions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<usize>,
}

impl CharBox {
    pub fn new(index: usize, ch: char, x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self { index, ch, x_min, y_min, x_max, y_max, line_idx: 0, word_idx: None, region: None }
    }

    pub fn center_x(&self) -> f64 {
        (self.x_min + self.x_max) / 2.0
    }

    pub fn center_y(&self) -> f64 {
        (self.y_min + self.y_max) / 2.0
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn is_space(&self) -> bool {
        self.ch.is_whitespace()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordBox {
    pub word_idx: usize,
    pub text: String,
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub line_idx: usize,
    pub sentence_idx: usize,
    /// Index of the word's first character in `Stimulus::chars`.
    pub first_char: usize,
    /// Number of member characters, including a folded trailing space.
    pub char_count: usize,
}

impl WordBox {
    pub fn center_x(&self) -> f64 {
        (self.x_min + self.x_max) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub first_char: usize,
    pub char_count: usize,
    pub first_word: usize,
    pub word_count: usize,
}

/// Characters in reading order plus the derived word, line and sentence structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stimulus {
    pub chars: Vec<CharBox>,
    pub words: Vec<WordBox>,
    pub lines: Vec<LineBox>,
    pub line_centers_y: Vec<f64>,
    pub line_heights: Vec<f64>,
    pub char_width: f64,
    pub include_spaces: bool,
}

impl Stimulus {
    pub fn line_count(&self) -> usize {
        self.lines.len()
    }

    pub fn sentence_count(&self) -> usize {
        self.words.last().map_or(0, |w| w.sentence_idx + 1)
    }

    /// Median distance between adjacent line centers; the median line height
    /// for single-line stimuli.
    pub fn line_spacing(&self) -> f64 {
        let gaps: Vec<f64> = self.line_centers_y.windows(2).map(|w| w[1] - w[0]).collect();
        median(&gaps)
            .or_else(|| median(&self.line_heights))
            .unwrap_or(1.0)
    }

    pub fn line_chars(&self, line: usize) -> &[CharBox] {
        let l = &self.lines[line];
        &self.chars[l.first_char..l.first_char + l.char_count]
    }

    pub fn line_words(&self, line: usize) -> &[WordBox] {
        let l = &self.lines[line];
        &self.words[l.first_word..l.first_word + l.word_count]
    }

    /// Index of the line whose center is closest to `y`; ties go to the upper line.
    pub fn nearest_line(&self, y: f64) -> usize {
        crate::util::argmin(self.line_centers_y.iter().map(|c| (c - y).abs())).unwrap_or(0)
    }
}

fn hull<'a>(boxes: impl IntoIterator<Item = &'a CharBox>) -> (f64, f64, f64, f64) {
    boxes.into_iter().fold(
        (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), x| (a.min(x.x_min), b.min(x.y_min), c.max(x.x_max), d.max(x.y_max)),
    )
}

fn ends_sentence(text: &str) -> bool {
    text.chars().last().is_some_and(|c| matches!(c, '.' | '!' | '?'))
}

/// Build the text model from character boxes.
///
/// Boxes whose vertical centers agree within half the median box height form
/// a line. Words are runs of non-space characters; with `include_spaces` a
/// word's trailing spaces join its hull. Sentences end after words whose last
/// character is `.`, `!` or `?`.
pub fn build_stimulus(char_boxes: &[CharBox], include_spaces: bool) -> Result<Stimulus, StimulusError> {
    if char_boxes.is_empty() {
        return Err(StimulusError::EmptyStimulus);
    }
    let mut input: Vec<&CharBox> = char_boxes.iter().collect();
    // canonical order so the result does not depend on input order
    input.sort_by(|a, b| {
        a.index
            .cmp(&b.index)
            .then(a.x_min.total_cmp(&b.x_min))
            .then(a.y_min.total_cmp(&b.y_min))
    });

    let heights: Vec<f64> = input.iter().map(|b| b.height()).collect();
    let tolerance = 0.5 * median(&heights).unwrap_or(0.0);

    let mut by_center = input.clone();
    by_center.sort_by(|a, b| a.center_y().total_cmp(&b.center_y()).then(a.index.cmp(&b.index)));
    let mut groups: Vec<Vec<&CharBox>> = Vec::new();
    let mut anchor = f64::NEG_INFINITY;
    for b in by_center {
        if groups.is_empty() || b.center_y() - anchor > tolerance {
            anchor = b.center_y();
            groups.push(Vec::new());
        }
        groups.last_mut().expect("group pushed above").push(b);
    }
    groups.retain(|g| g.iter().any(|b| !b.is_space()));
    if groups.is_empty() {
        return Err(StimulusError::EmptyStimulus);
    }

    let mut chars = Vec::with_capacity(char_boxes.len());
    let mut words: Vec<WordBox> = Vec::new();
    let mut lines = Vec::with_capacity(groups.len());
    for (line_idx, mut group) in groups.into_iter().enumerate() {
        group.sort_by(|a, b| a.x_min.total_cmp(&b.x_min).then(a.index.cmp(&b.index)));
        let first_char = chars.len();
        let first_word = words.len();
        let mut prev: Option<&CharBox> = None;
        for b in &group {
            let mut c = (*b).clone();
            c.index = chars.len();
            c.line_idx = line_idx;
            c.word_idx = None;
            if c.is_space() {
                let follows_word = chars.last().is_some_and(|p: &CharBox| p.line_idx == line_idx && p.word_idx.is_some());
                if include_spaces && follows_word {
                    let w = words.last_mut().expect("word exists when previous char has one");
                    c.word_idx = Some(w.word_idx);
                    w.char_count += 1;
                    w.x_min = w.x_min.min(c.x_min);
                    w.y_min = w.y_min.min(c.y_min);
                    w.x_max = w.x_max.max(c.x_max);
                    w.y_max = w.y_max.max(c.y_max);
                }
            } else {
                let continues = match (prev, chars.last()) {
                    (Some(p), Some(last)) => {
                        !p.is_space() && last.word_idx.is_some() && (p.region.is_none() || p.region == c.region)
                    }
                    _ => false,
                };
                if continues {
                    let w = words.last_mut().expect("continuing word exists");
                    c.word_idx = Some(w.word_idx);
                    w.text.push(c.ch);
                    w.char_count += 1;
                    w.x_min = w.x_min.min(c.x_min);
                    w.y_min = w.y_min.min(c.y_min);
                    w.x_max = w.x_max.max(c.x_max);
                    w.y_max = w.y_max.max(c.y_max);
                } else {
                    let word_idx = words.len();
                    c.word_idx = Some(word_idx);
                    words.push(WordBox {
                        word_idx,
                        text: c.ch.to_string(),
                        x_min: c.x_min,
                        y_min: c.y_min,
                        x_max: c.x_max,
                        y_max: c.y_max,
                        line_idx,
                        sentence_idx: 0,
                        first_char: c.index,
                        char_count: 1,
                    });
                }
            }
            prev = Some(b);
            chars.push(c);
        }
        let (x_min, y_min, x_max, y_max) = hull(&chars[first_char..]);
        lines.push(LineBox {
            x_min,
            y_min,
            x_max,
            y_max,
            first_char,
            char_count: chars.len() - first_char,
            first_word,
            word_count: words.len() - first_word,
        });
    }

    let mut sentence = 0;
    for w in &mut words {
        w.sentence_idx = sentence;
        if ends_sentence(&w.text) {
            sentence += 1;
        }
    }

    let widths: Vec<f64> = chars.iter().filter(|c| !c.is_space()).map(CharBox::width).collect();
    let char_width = median(&widths).unwrap_or(1.0);
    let line_centers_y = lines.iter().map(|l| (l.y_min + l.y_max) / 2.0).collect();
    let line_heights = lines.iter().map(|l| l.y_max - l.y_min).collect();
    Ok(Stimulus { chars, words, lines, line_centers_y, line_heights, char_width, include_spaces })
}

/// Lay out `lines` of monospace text as character boxes.
///
/// Line `i` is centered at `top_center + i * spacing`; every box is
/// `char_width` wide and `box_height` tall, starting at `left`.
pub fn monospace_boxes(
    lines: &[&str],
    left: f64,
    top_center: f64,
    spacing: f64,
    char_width: f64,
    box_height: f64,
) -> Vec<CharBox> {
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        let cy = top_center + spacing * i as f64;
        for (j, ch) in line.chars().enumerate() {
            let x = left + char_width * j as f64;
            out.push(CharBox::new(out.len(), ch, x, cy - box_height / 2.0, x + char_width, cy + box_height / 2.0));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_lines_with_known_centers() {
        let boxes = monospace_boxes(&["ab cd", "ef"], 100.0, 100.0, 100.0, 10.0, 40.0);
        let s = build_stimulus(&boxes, false).unwrap();
        assert_eq!(s.line_centers_y, vec![100.0, 200.0]);
        assert_eq!(s.line_heights, vec![40.0, 40.0]);
        assert_eq!(s.words.iter().map(|w| w.text.as_str()).collect::<Vec<_>>(), ["ab", "cd", "ef"]);
        assert_eq!(s.words.iter().map(|w| w.line_idx).collect::<Vec<_>>(), [0, 0, 1]);
    }

    #[test]
    fn singleton_box() {
        let s = build_stimulus(&[CharBox::new(0, 'A', 0.0, 0.0, 10.0, 20.0)], false).unwrap();
        assert_eq!(s.char_width, 10.0);
        assert_eq!((s.words.len(), s.lines.len(), s.sentence_count()), (1, 1, 1));
    }

    #[test]
    fn include_spaces_extends_hull() {
        let boxes = monospace_boxes(&["Hi there."], 0.0, 50.0, 50.0, 10.0, 20.0);
        let without = build_stimulus(&boxes, false).unwrap();
        let with = build_stimulus(&boxes, true).unwrap();
        assert_eq!(without.words[0].x_max, 20.0);
        assert_eq!(with.words[0].x_max, 30.0);
        assert_eq!(with.words[0].char_count, 3);
        assert_eq!(with.chars[2].word_idx, Some(0));
        assert_eq!(without.chars[2].word_idx, None);
        assert_eq!(with.words[1], without.words[1]);
    }

    #[test]
    fn sentences_split_on_terminal_punctuation() {
        let boxes = monospace_boxes(&["One two. Three!", "Four? five six"], 0.0, 50.0, 50.0, 10.0, 20.0);
        let s = build_stimulus(&boxes, false).unwrap();
        let ids: Vec<usize> = s.words.iter().map(|w| w.sentence_idx).collect();
        assert_eq!(ids, [0, 0, 1, 2, 3, 3]);
    }

    #[test]
    fn empty_is_error() {
        assert_eq!(build_stimulus(&[], false), Err(StimulusError::EmptyStimulus));
        let spaces = monospace_boxes(&["   "], 0.0, 50.0, 50.0, 10.0, 20.0);
        assert_eq!(build_stimulus(&spaces, false), Err(StimulusError::EmptyStimulus));
    }

    #[test]
    fn jittered_boxes_group_into_one_line() {
        let mut boxes = monospace_boxes(&["abcdef"], 0.0, 100.0, 50.0, 10.0, 40.0);
        for (i, b) in boxes.iter_mut().enumerate() {
            let j = if i % 2 == 0 { 3.0 } else { -3.0 };
            b.y_min += j;
            b.y_max += j;
        }
        let s = build_stimulus(&boxes, false).unwrap();
        assert_eq!(s.lines.len(), 1);
    }

    proptest! {
        #[test]
        fn permutation_invariant(seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let boxes = monospace_boxes(&["The cat sat.", "On the mat", "today! ok"], 50.0, 100.0, 60.0, 9.0, 30.0);
            let reference = build_stimulus(&boxes, true).unwrap();
            let mut shuffled = boxes.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(build_stimulus(&shuffled, true).unwrap(), reference);
        }

        #[test]
        fn structure_invariants(
            lines in proptest::collection::vec("[a-z]{1,6}( [a-z]{1,6}[.!?]?){0,5}", 1..5),
            width in 5.0f64..20.0,
        ) {
            let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
            let boxes = monospace_boxes(&refs, 10.0, 100.0, 50.0, width, 30.0);
            let s = build_stimulus(&boxes, false).unwrap();
            prop_assert!((s.char_width - width).abs() < 1e-9);
            prop_assert!(s.line_centers_y.windows(2).all(|w| w[0] < w[1]));
            for l in 0..s.line_count() {
                prop_assert!(!s.line_words(l).is_empty());
            }
            prop_assert!(s.words.iter().all(|w| w.char_count >= 1));
            prop_assert!(s.words.windows(2).all(|w| w[0].sentence_idx <= w[1].sentence_idx));
            prop_assert!(s.chars.iter().all(|c| c.line_idx < s.line_count()));
        }
    }
}
