//! Synthetic reading trials with known line membership, used by tests,
//! benchmarks and demos.
//!
//! The reference layout has three monospace lines of ten words, line
//! centers at y = 100, 200 and 300, 40 px tall boxes and 10 px characters.
//! One fixation lands on each word center in reading order.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::asc::{annotate_blink_adjacency, Blink, Eye, Fixation, Saccade, TrialMetadata, TrialRecord};
use crate::stimulus::{build_stimulus, monospace_boxes, CharBox, Stimulus};

pub const SYN1_LINES: [&str; 3] = [
    "Careful readers often move their eyes across several printed lines.",
    "Vertical drift slowly shifts recorded gaze positions away from text.",
    "Automatic line assignment methods restore each fixation to its line.",
];
pub const SYN1_LEFT: f64 = 100.0;
pub const SYN1_TOP: f64 = 100.0;
pub const SYN1_SPACING: f64 = 100.0;
pub const SYN1_CHAR_WIDTH: f64 = 10.0;
pub const SYN1_BOX_HEIGHT: f64 = 40.0;
pub const SYN1_FIRST_FIX_MS: i64 = 1000;
pub const SYN1_FIX_STEP_MS: i64 = 250;
pub const SYN1_FIX_DURATION_MS: i64 = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Drift {
    None,
    /// Every fixation shifted down by this many pixels.
    Offset(f64),
    /// Upward drift growing linearly from 0 at the first fixation to this
    /// many pixels at the last.
    Linear(f64),
    /// Independent Gaussian vertical noise.
    Noise { sigma: f64, seed: u64 },
}

pub fn syn1_char_boxes() -> Vec<CharBox> {
    monospace_boxes(&SYN1_LINES, SYN1_LEFT, SYN1_TOP, SYN1_SPACING, SYN1_CHAR_WIDTH, SYN1_BOX_HEIGHT)
}

pub fn syn1_stimulus() -> Stimulus {
    build_stimulus(&syn1_char_boxes(), false).expect("reference layout is valid")
}

/// Fixations on every word center plus the true line of each.
pub fn syn1_fixations(drift: Drift) -> (Vec<Fixation>, Vec<usize>) {
    let stim = syn1_stimulus();
    let n = stim.words.len();
    let mut noise = match drift {
        Drift::Noise { sigma, seed } => Some((ChaCha8Rng::seed_from_u64(seed), Normal::new(0.0, sigma).expect("finite sigma"))),
        _ => None,
    };
    let mut fixations = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for (i, w) in stim.words.iter().enumerate() {
        let y0 = stim.line_centers_y[w.line_idx];
        let y = match drift {
            Drift::None => y0,
            Drift::Offset(d) => y0 + d,
            Drift::Linear(d) => y0 - d * i as f64 / (n - 1).max(1) as f64,
            Drift::Noise { .. } => {
                let (rng, dist) = noise.as_mut().expect("noise source");
                y0 + dist.sample(rng)
            }
        };
        let start = SYN1_FIRST_FIX_MS + SYN1_FIX_STEP_MS * i as i64;
        let mut f = Fixation::new(i, start, start + SYN1_FIX_DURATION_MS, w.center_x(), y);
        f.pupil = 1000.0;
        fixations.push(f);
        truth.push(w.line_idx);
    }
    (fixations, truth)
}

/// One saccade filling each gap between consecutive fixations.
pub fn saccades_between(fixations: &[Fixation]) -> Vec<Saccade> {
    fixations
        .windows(2)
        .map(|w| Saccade {
            eye: w[0].eye,
            start_ms: w[0].end_ms,
            end_ms: w[1].start_ms,
            duration_ms: w[1].start_ms - w[0].end_ms,
            x_start: w[0].x,
            y_start: w[0].y,
            x_end: w[1].x,
            y_end: w[1].y,
            amplitude_deg: ((w[1].x - w[0].x).hypot(w[1].y - w[0].y) / 35.0 * 100.0).round() / 100.0,
            peak_velocity: 200.0,
        })
        .collect()
}

/// Fraction of positions where `lines` matches `truth`.
pub fn accuracy(lines: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 1.0;
    }
    lines.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// A full in-memory trial on the reference layout.
pub fn syn1_trial(trial_id: &str, drift: Drift) -> TrialRecord {
    let (mut fixations, _) = syn1_fixations(drift);
    annotate_blink_adjacency(&mut fixations, &[]);
    let saccades = saccades_between(&fixations);
    TrialRecord {
        metadata: TrialMetadata {
            trial_id: trial_id.to_string(),
            start_ms: SYN1_FIRST_FIX_MS - 10,
            end_ms: fixations.last().map_or(SYN1_FIRST_FIX_MS, |f| f.end_ms + 10),
            screen_w: Some(1024),
            screen_h: Some(768),
            ..Default::default()
        },
        eye: Some(Eye::R),
        fixations,
        saccades,
        char_boxes: syn1_char_boxes(),
        ..Default::default()
    }
}

/// Everything needed to write one trial block of an ASC file.
#[derive(Debug, Clone, Default)]
pub struct AscTrial {
    pub trial_id: String,
    pub vars: Vec<(String, String)>,
    /// Written as REGION CHAR messages when non-empty.
    pub char_boxes: Vec<CharBox>,
    pub ias_file: Option<String>,
    pub fixations: Vec<Fixation>,
    pub saccades: Vec<Saccade>,
    pub blinks: Vec<Blink>,
}

impl AscTrial {
    pub fn from_record(t: &TrialRecord) -> Self {
        Self {
            trial_id: t.metadata.trial_id.clone(),
            vars: t.metadata.trial_vars.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            char_boxes: t.char_boxes.clone(),
            ias_file: t.metadata.ias_file.clone(),
            fixations: t.fixations.clone(),
            saccades: t.saccades.clone(),
            blinks: t.blinks.clone(),
        }
    }
}

enum Ev<'a> {
    Fix(&'a Fixation),
    Sac(&'a Saccade),
    Blink(&'a Blink),
}

/// Render trials as an EyeLink-style ASC file. Trial `k` is shifted by
/// `k * trial_gap_ms` so blocks never overlap; events keep their relative
/// timing.
pub fn write_asc(trials: &[AscTrial], trial_gap_ms: i64) -> String {
    let mut out = String::new();
    out.push_str("** CONVERTED FROM synthetic.edf\n** DATE: Thu Jan  1 00:00:00 1970\n**\n");
    out.push_str("MSG\t100 DISPLAY_COORDS 0 0 1023 767\n");
    for (k, t) in trials.iter().enumerate() {
        let shift = k as i64 * trial_gap_ms;
        let first = t
            .fixations
            .iter()
            .map(|f| f.start_ms)
            .chain(t.saccades.iter().map(|s| s.start_ms))
            .chain(t.blinks.iter().map(|b| b.start_ms))
            .min()
            .unwrap_or(SYN1_FIRST_FIX_MS)
            + shift;
        let last = t
            .fixations
            .iter()
            .map(|f| f.end_ms)
            .chain(t.saccades.iter().map(|s| s.end_ms))
            .chain(t.blinks.iter().map(|b| b.end_ms))
            .max()
            .unwrap_or(first)
            + shift;
        let header = first - 50;
        let _ = writeln!(out, "MSG\t{header} TRIALID {}", t.trial_id);
        for (key, value) in &t.vars {
            let _ = writeln!(out, "MSG\t{header} !V TRIAL_VAR {key} {value}");
        }
        if let Some(ias) = &t.ias_file {
            let _ = writeln!(out, "MSG\t{header} IAREA FILE {ias}");
        }
        for (i, b) in t.char_boxes.iter().enumerate() {
            let ch = if b.ch == ' ' { String::new() } else { b.ch.to_string() };
            let _ = writeln!(out, "MSG\t{header} REGION CHAR {i} 1 {ch} {} {} {} {}", b.x_min, b.y_min, b.x_max, b.y_max);
        }
        let _ = writeln!(out, "START\t{} \tRIGHT\tSAMPLES\tEVENTS", header + 1);
        let _ = writeln!(out, "MSG\t{} SYNCTIME", first - 10);

        let mut events: Vec<(i64, Ev)> = Vec::new();
        events.extend(t.fixations.iter().map(|f| (f.start_ms, Ev::Fix(f))));
        events.extend(t.saccades.iter().map(|s| (s.start_ms, Ev::Sac(s))));
        events.extend(t.blinks.iter().map(|b| (b.start_ms, Ev::Blink(b))));
        events.sort_by_key(|e| e.0);
        for (_, ev) in events {
            match ev {
                Ev::Fix(f) => {
                    let (s, e) = (f.start_ms + shift, f.end_ms + shift);
                    let _ = writeln!(out, "SFIX R   {s}");
                    let _ = writeln!(out, "EFIX R   {s}\t{e}\t{}\t  {}\t  {}\t {}", e - s, f.x, f.y, f.pupil);
                }
                Ev::Sac(c) => {
                    let (s, e) = (c.start_ms + shift, c.end_ms + shift);
                    let _ = writeln!(out, "SSACC R  {s}");
                    let _ = writeln!(
                        out,
                        "ESACC R  {s}\t{e}\t{}\t  {}\t  {}\t  {}\t  {}\t {}\t {}",
                        e - s,
                        c.x_start,
                        c.y_start,
                        c.x_end,
                        c.y_end,
                        c.amplitude_deg,
                        c.peak_velocity
                    );
                }
                Ev::Blink(b) => {
                    let (s, e) = (b.start_ms + shift, b.end_ms + shift);
                    let _ = writeln!(out, "SBLINK R {s}");
                    let _ = writeln!(out, "EBLINK R {s}\t{e}\t{}", e - s);
                }
            }
        }
        let _ = writeln!(out, "MSG\t{} ENDBUTTON 1", last + 10);
        let _ = writeln!(out, "END\t{} \tSAMPLES\tEVENTS\tRES\t  38.00\t  38.00", last + 11);
    }
    out
}

/// A reading trial with realistic impurities: a blink pair, a short
/// fixation next to a long one, a long fixation, and an off-text glance.
pub fn impure_trial(trial_id: &str, drift: Drift) -> TrialRecord {
    let mut t = syn1_trial(trial_id, drift);
    let f = &mut t.fixations;
    // Short fixation just left of word 5, merged into it by default.
    let extra = Fixation {
        start_ms: f[5].start_ms - 45,
        end_ms: f[5].start_ms - 5,
        duration_ms: 40,
        x: f[5].x - 4.0,
        y: f[5].y,
        ..f[5].clone()
    };
    f.insert(5, extra);
    // Long final fixation.
    let last = f.len() - 1;
    f[last].duration_ms = 900;
    f[last].end_ms = f[last].start_ms + 900;
    // Off-text glance.
    f[20].x = 1000.0;
    let blink = Blink { eye: Eye::R, start_ms: f[15].end_ms + 5, end_ms: f[15].end_ms + 40, duration_ms: 35 };
    f.iter_mut().enumerate().for_each(|(i, x)| x.index = i);
    t.blinks = vec![blink];
    annotate_blink_adjacency(&mut t.fixations, &t.blinks);
    t.saccades = saccades_between(&t.fixations)
        .into_iter()
        .filter(|s| s.end_ms > s.start_ms && !(s.start_ms <= t.blinks[0].start_ms && t.blinks[0].start_ms < s.end_ms))
        .collect();
    t
}

/// The reference layout as an IAS file with one RECTANGLE per word.
pub fn syn1_ias() -> String {
    let mut out = String::from("# reference layout\n");
    for w in &syn1_stimulus().words {
        let _ = writeln!(out, "RECTANGLE\t{}\t{}\t{}\t{}\t{}\t{}", w.word_idx + 1, w.x_min, w.y_min, w.x_max, w.y_max, w.text);
    }
    out
}

/// A small two-file corpus: `p01.asc` and `p02.asc` with three trials each.
/// Trials mix drift types and impurities; some carry their layout inline,
/// some through `syn1.ias`, and trial `E3I6D0` of `p02.asc` names an IAS
/// file that is not supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoCorpus {
    /// (file name, ASC text), sorted by name.
    pub asc: Vec<(String, String)>,
    pub ias: std::collections::BTreeMap<String, String>,
}

pub const DEMO_MISSING_TRIAL: &str = "E3I6D0";

pub fn demo_corpus() -> DemoCorpus {
    let trial = |id: &str, drift: Drift, impure: bool, layout: Option<&str>, answer: &str| {
        let t = if impure { impure_trial(id, drift) } else { syn1_trial(id, drift) };
        let mut a = AscTrial::from_record(&t);
        a.vars.push(("question_response".into(), answer.into()));
        if let Some(ias) = layout {
            a.char_boxes.clear();
            a.ias_file = Some(ias.to_string());
        }
        a
    };
    let p01 = [
        trial("E1I1D0", Drift::None, false, None, "1"),
        trial("E1I2D0", Drift::Offset(30.0), true, Some("syn1.ias"), "2"),
        trial("E2I3D0", Drift::Linear(60.0), true, None, "1"),
    ];
    let p02 = [
        trial("E2I4D0", Drift::Noise { sigma: 8.0, seed: 3 }, true, Some("syn1.ias"), "1"),
        trial("E3I5D0", Drift::Offset(-20.0), false, None, "2"),
        trial(DEMO_MISSING_TRIAL, Drift::None, false, Some("missing.ias"), "2"),
    ];
    DemoCorpus {
        asc: vec![("p01.asc".into(), write_asc(&p01, 100_000)), ("p02.asc".into(), write_asc(&p02, 100_000))],
        ias: [("syn1.ias".to_string(), syn1_ias())].into_iter().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asc::{parse_asc, AscParseConfig};

    #[test]
    fn layout_has_thirty_words() {
        let s = syn1_stimulus();
        assert_eq!(s.words.len(), 30);
        assert_eq!(s.line_centers_y, vec![100.0, 200.0, 300.0]);
        assert_eq!(s.char_width, 10.0);
        assert_eq!(s.sentence_count(), 3);
    }

    #[test]
    fn linear_drift_reaches_its_maximum() {
        let (f, truth) = syn1_fixations(Drift::Linear(60.0));
        assert_eq!(f.last().unwrap().y, 240.0);
        assert_eq!(truth[29], 2);
    }

    #[test]
    fn asc_round_trip() {
        let t = impure_trial("E1I2D0", Drift::Offset(10.0));
        let text = write_asc(&[AscTrial::from_record(&t), AscTrial::from_record(&syn1_trial("b", Drift::None))], 100_000);
        let parsed = parse_asc(&text, &AscParseConfig::default()).unwrap();
        assert_eq!(parsed.trials.len(), 2);
        let p = &parsed.trials[0];
        assert_eq!(p.fixations.len(), t.fixations.len());
        assert_eq!(p.saccades.len(), t.saccades.len());
        assert_eq!(p.blinks, t.blinks);
        assert_eq!(p.char_boxes.len(), t.char_boxes.len());
        for (a, b) in p.fixations.iter().zip(&t.fixations) {
            assert_eq!((a.start_ms, a.end_ms, a.x, a.y, a.blink_before, a.blink_after), (b.start_ms, b.end_ms, b.x, b.y, b.blink_before, b.blink_after));
        }
        assert_eq!(p.metadata.condition, "1");
    }
}
