//! Per-trial processing: clean, assign, realign, measure.
//!
//! Each stage is a separate function so callers can cache intermediate
//! results and rerun only what a config change invalidates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asc::{Fixation, TrialRecord};
use crate::assign::{assign, realign_saccades, wisdom_of_crowds, y_correction, AssignError, LineAssignment, RealignedSaccade, YCorrection, WOC_LABEL};
use crate::cleaning::{clean_fixations, CleaningConfig, CleaningReport};
use crate::config::{AssignmentConfig, PipelineConfig};
use crate::measures::{
    assign_words, fixation_features, fixation_table, saccade_features, saccade_table, sentence_measures, sentence_table,
    word_measures, word_table, MeasuresConfig, WordHit,
};
use crate::scene::{build_scene, Scene};
use crate::stimulus::{build_stimulus, Stimulus, StimulusError};
use crate::table::CsvTable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("no stimulus for trial {trial}: missing IAS file {ias:?}")]
    MissingIasFile { trial: String, ias: Option<String> },
    #[error(transparent)]
    Stimulus(#[from] StimulusError),
    #[error(transparent)]
    Assign(#[from] AssignError),
}

/// Build the trial's text model, honouring a character-width hint.
pub fn trial_stimulus(trial: &TrialRecord, include_spaces: bool) -> Result<Stimulus, PipelineError> {
    if trial.char_boxes.is_empty() {
        return Err(PipelineError::MissingIasFile { trial: trial.metadata.trial_id.clone(), ias: trial.metadata.ias_file.clone() });
    }
    let mut s = build_stimulus(&trial.char_boxes, include_spaces)?;
    if let Some(w) = trial.char_width_hint.filter(|w| *w > 0.0) {
        s.char_width = w;
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanStage {
    pub fixations: Vec<Fixation>,
    pub report: CleaningReport,
}

pub fn stage_clean(trial: &TrialRecord, stimulus: &Stimulus, config: &CleaningConfig) -> CleanStage {
    let (fixations, report) = clean_fixations(&trial.fixations, stimulus, config);
    CleanStage { fixations, report }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignStage {
    /// One per configured method, in configured order.
    pub assignments: Vec<LineAssignment>,
    pub y_corrections: Vec<YCorrection>,
    /// Index into `assignments` of the method used for measures.
    pub analysis: usize,
    pub saccades: Vec<RealignedSaccade>,
    pub warnings: Vec<String>,
}

impl AssignStage {
    pub fn analysis_assignment(&self) -> &LineAssignment {
        &self.assignments[self.analysis]
    }
}

pub fn stage_assign(
    trial: &TrialRecord,
    stimulus: &Stimulus,
    clean: &CleanStage,
    config: &AssignmentConfig,
) -> Result<AssignStage, PipelineError> {
    let fixes = &clean.fixations;
    let mut warnings = Vec::new();
    let mut done: BTreeMap<String, LineAssignment> = BTreeMap::new();
    let mut run = |label: &str, warnings: &mut Vec<String>| -> Result<LineAssignment, PipelineError> {
        if let Some(a) = done.get(label) {
            return Ok(a.clone());
        }
        let result = if label == WOC_LABEL {
            let mut members = Vec::new();
            for m in &config.params.woc_members {
                let a = match done.get(m) {
                    Some(a) => a.clone(),
                    None => fallback(m, assign(m, fixes, stimulus, &config.params), fixes, stimulus, config, warnings)?,
                };
                done.insert(m.clone(), a.clone());
                members.push(a);
            }
            wisdom_of_crowds(&members, stimulus).map_err(PipelineError::from)
        } else {
            fallback(label, assign(label, fixes, stimulus, &config.params), fixes, stimulus, config, warnings)
        }?;
        done.insert(label.to_string(), result.clone());
        Ok(result)
    };
    let mut assignments = Vec::new();
    for m in &config.methods {
        assignments.push(run(m, &mut warnings)?);
    }
    let y_corrections = assignments.iter().map(|a| y_correction(a, fixes)).collect::<Result<Vec<_>, _>>()?;
    let wanted = config.analysis_label();
    let analysis = config.methods.iter().position(|m| m == wanted).unwrap_or(0);
    let saccades = realign_saccades(&trial.saccades, fixes, &assignments[analysis]);
    Ok(AssignStage { assignments, y_corrections, analysis, saccades, warnings })
}

fn fallback(
    label: &str,
    result: Result<LineAssignment, AssignError>,
    fixes: &[Fixation],
    stimulus: &Stimulus,
    config: &AssignmentConfig,
    warnings: &mut Vec<String>,
) -> Result<LineAssignment, PipelineError> {
    match result {
        Ok(a) => Ok(a),
        Err(e @ (AssignError::AlgorithmFailure { .. } | AssignError::ExternalTimeout(_) | AssignError::InvalidExternalOutput(_)))
            if config.fallback_to_attach =>
        {
            warnings.push(format!("{e}; using attach instead"));
            let mut a = assign("attach", fixes, stimulus, &config.params)?;
            a.algorithm = label.to_string();
            Ok(a)
        }
        Err(e) => Err(e.into()),
    }
}

/// The four per-trial output tables.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialTables {
    pub fixations: CsvTable,
    pub saccades: CsvTable,
    pub words: CsvTable,
    pub sentences: CsvTable,
}

impl TrialTables {
    /// Headers only, for the given selection.
    pub fn empty(config: &MeasuresConfig) -> Self {
        Self {
            fixations: fixation_table(&[], config),
            saccades: saccade_table(&[], config),
            words: word_table(&[], config),
            sentences: sentence_table(&[], config),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureStage {
    pub hits: Vec<WordHit>,
    pub tables: TrialTables,
}

pub fn stage_measures(stimulus: &Stimulus, clean: &CleanStage, assigned: &AssignStage, config: &MeasuresConfig) -> MeasureStage {
    let fixes = &clean.fixations;
    let a = assigned.analysis_assignment();
    let hits = assign_words(fixes, a, stimulus);
    let tables = TrialTables {
        fixations: fixation_table(&fixation_features(fixes, a, &hits, stimulus), config),
        saccades: saccade_table(&saccade_features(&assigned.saccades, stimulus, config.deviation_y_frac), config),
        words: word_table(&word_measures(fixes, &hits, stimulus), config),
        sentences: sentence_table(&sentence_measures(fixes, &hits, stimulus), config),
    };
    MeasureStage { hits, tables }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_id: String,
    pub start_ms: i64,
    pub question_response: Option<String>,
    pub fixations_before: usize,
    pub clean: CleanStage,
    pub assign: AssignStage,
    pub measures: MeasureStage,
    pub scene: Scene,
    pub warnings: Vec<String>,
}

pub fn run_pipeline(trial: &TrialRecord, config: &PipelineConfig) -> Result<TrialResult, PipelineError> {
    let stimulus = trial_stimulus(trial, config.parse.include_spaces_in_words)?;
    let clean = stage_clean(trial, &stimulus, &config.cleaning);
    let assigned = stage_assign(trial, &stimulus, &clean, &config.assignment)?;
    let measures = stage_measures(&stimulus, &clean, &assigned, &config.measures);
    let scene = build_scene(trial, &stimulus, Some(&clean), Some(&assigned), Some(&measures));
    let mut warnings: Vec<String> = trial.warnings.iter().map(|w| w.to_string()).collect();
    warnings.extend(assigned.warnings.iter().cloned());
    Ok(TrialResult {
        trial_id: trial.metadata.trial_id.clone(),
        start_ms: trial.metadata.start_ms,
        question_response: trial.metadata.question_response.clone(),
        fixations_before: trial.fixations.len(),
        clean,
        assign: assigned,
        measures,
        scene,
        warnings,
    })
}
