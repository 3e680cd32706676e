//! Plot scenes: everything a viewer needs to draw a trial, as JSON.

use serde::{Deserialize, Serialize};

use crate::asc::TrialRecord;
use crate::pipeline::{AssignStage, CleanStage, MeasureStage};
use crate::stimulus::Stimulus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneChar {
    pub char: char,
    #[serde(rename = "box")]
    pub bounds: SceneBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneWord {
    pub word_idx: usize,
    pub text: String,
    #[serde(rename = "box")]
    pub bounds: SceneBox,
    /// Value shown above the word box, when a measure layer is present.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePoint {
    /// Index used for the on-screen number.
    pub idx: usize,
    pub x: f64,
    pub y: f64,
    pub duration_ms: i64,
    pub line_idx: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixationSeries {
    /// `uncorrected` or an algorithm label.
    pub label: String,
    pub points: Vec<ScenePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDisposition {
    pub original_idx: usize,
    pub x: f64,
    pub y: f64,
    pub duration_ms: i64,
    pub disposition: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSaccade {
    pub x_start: f64,
    pub y_start: f64,
    pub x_end: f64,
    pub y_end: f64,
    pub y_start_snapped: f64,
    pub y_end_snapped: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub trial_id: String,
    pub screen: Option<[u32; 2]>,
    pub chars: Vec<SceneChar>,
    pub words: Vec<SceneWord>,
    pub lines: Vec<SceneBox>,
    pub series: Vec<FixationSeries>,
    pub dispositions: Vec<SceneDisposition>,
    pub saccades: Vec<SceneSaccade>,
    /// Name of the measure in `SceneWord::value`.
    pub word_value: Option<String>,
}

fn bx(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> SceneBox {
    SceneBox { x_min, y_min, x_max, y_max }
}

/// Assemble a scene from whichever stages have run.
pub fn build_scene(
    trial: &TrialRecord,
    stimulus: &Stimulus,
    clean: Option<&CleanStage>,
    assigned: Option<&AssignStage>,
    measures: Option<&MeasureStage>,
) -> Scene {
    let chars = stimulus.chars.iter().map(|c| SceneChar { char: c.ch, bounds: bx(c.x_min, c.y_min, c.x_max, c.y_max) }).collect();
    let mut words: Vec<SceneWord> = stimulus
        .words
        .iter()
        .map(|w| SceneWord { word_idx: w.word_idx, text: w.text.clone(), bounds: bx(w.x_min, w.y_min, w.x_max, w.y_max), value: None })
        .collect();
    let lines = stimulus.lines.iter().map(|l| bx(l.x_min, l.y_min, l.x_max, l.y_max)).collect();

    let source = clean.map_or(&trial.fixations, |c| &c.fixations);
    let mut series = vec![FixationSeries {
        label: "uncorrected".into(),
        points: source
            .iter()
            .enumerate()
            .map(|(i, f)| ScenePoint { idx: i, x: f.x, y: f.y, duration_ms: f.duration_ms, line_idx: None })
            .collect(),
    }];
    let mut saccades = Vec::new();
    if let (Some(c), Some(a)) = (clean, assigned) {
        for la in &a.assignments {
            series.push(FixationSeries {
                label: la.algorithm.clone(),
                points: c
                    .fixations
                    .iter()
                    .enumerate()
                    .map(|(i, f)| ScenePoint {
                        idx: i,
                        x: f.x,
                        y: la.corrected_y[i],
                        duration_ms: f.duration_ms,
                        line_idx: Some(la.line_idx[i]),
                    })
                    .collect(),
            });
        }
        saccades = a
            .saccades
            .iter()
            .map(|s| SceneSaccade {
                x_start: s.saccade.x_start,
                y_start: s.saccade.y_start,
                x_end: s.saccade.x_end,
                y_end: s.saccade.y_end,
                y_start_snapped: s.y_start_snapped,
                y_end_snapped: s.y_end_snapped,
            })
            .collect();
    }

    let dispositions = clean.map_or_else(Vec::new, |c| {
        trial
            .fixations
            .iter()
            .zip(&c.report.dispositions)
            .enumerate()
            .map(|(i, (f, d))| SceneDisposition { original_idx: i, x: f.x, y: f.y, duration_ms: f.duration_ms, disposition: d.to_string() })
            .collect()
    });

    let mut word_value = None;
    if let (Some(m), Some(c)) = (measures, clean) {
        // Total fixation time per word, whatever columns were selected.
        let mut totals = vec![0i64; words.len()];
        for (h, f) in m.hits.iter().zip(&c.fixations) {
            totals[h.word_idx] += f.duration_ms;
        }
        for (w, t) in words.iter_mut().zip(totals) {
            w.value = Some(t as f64);
        }
        word_value = Some("total_fixation_duration_ms".to_string());
    }

    Scene {
        trial_id: trial.metadata.trial_id.clone(),
        screen: trial.metadata.screen_w.zip(trial.metadata.screen_h).map(|(w, h)| [w, h]),
        chars,
        words,
        lines,
        series,
        dispositions,
        saccades,
        word_value,
    }
}
