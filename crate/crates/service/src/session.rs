//! Session state: uploaded files, parsed trials, the working config and
//! per-trial stage caches.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use axum::http::StatusCode;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use gazepipeline_core::asc::{parse_asc, TrialMetadata, TrialRecord};
use gazepipeline_core::batch::{expand_inputs, InputFile};
use gazepipeline_core::config::{load_config, PipelineConfig};
use gazepipeline_core::pipeline::{stage_assign, stage_clean, stage_measures, trial_stimulus, AssignStage, CleanStage, MeasureStage};
use gazepipeline_core::scene::build_scene;
use gazepipeline_core::stimulus::attach_ias_to_trials;

use crate::error::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Clean,
    Assign,
    Measures,
}

impl Stage {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "clean" => Some(Self::Clean),
            "assign" => Some(Self::Assign),
            "measures" => Some(Self::Measures),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Clean => "clean",
            Self::Assign => "assign",
            Self::Measures => "measures",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Warning {
    pub file: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl Warning {
    fn file(file: &str, message: impl Into<String>) -> Self {
        Self { file: Some(file.to_string()), line: None, message: message.into() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialInfo {
    pub tid: String,
    pub file_id: String,
    pub trial_id: String,
    pub metadata: TrialMetadata,
    pub fixation_count: usize,
    pub saccade_count: usize,
    pub blink_count: usize,
    pub has_stimulus: bool,
    pub is_practice: bool,
    pub is_question: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct UploadSummary {
    pub files: Vec<String>,
    pub trials: Vec<TrialInfo>,
    pub warnings: Vec<Warning>,
}

#[derive(Default)]
struct StageCache {
    clean: Option<(String, Arc<CleanStage>)>,
    assign: Option<(String, Arc<AssignStage>)>,
    measures: Option<(String, Arc<MeasureStage>)>,
}

struct SessionTrial {
    tid: String,
    file_id: String,
    record: TrialRecord,
    cache: StageCache,
}

pub struct Session {
    asc: BTreeMap<String, String>,
    ias: BTreeMap<String, String>,
    config: PipelineConfig,
    trials: Vec<SessionTrial>,
    warnings: Vec<Warning>,
    pub last_used: Instant,
}

/// sha256 over canonical JSON (object keys sorted).
pub fn content_hash<T: Serialize>(value: &T) -> String {
    let canonical = serde_json::to_value(value).expect("serializable").to_string();
    Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// RFC 7386 JSON merge patch.
pub fn merge_patch(target: &mut Value, patch: &Value) {
    let Value::Object(patch) = patch else {
        *target = patch.clone();
        return;
    };
    if !target.is_object() {
        *target = json!({});
    }
    let map = target.as_object_mut().expect("object");
    for (k, v) in patch {
        if v.is_null() {
            map.remove(k);
        } else {
            merge_patch(map.entry(k.clone()).or_insert(Value::Null), v);
        }
    }
}

fn url_safe(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' }).collect()
}

/// Stage keys chain, so a change upstream changes every key below it.
struct Keys {
    clean: String,
    assign: String,
    measures: String,
}

impl Keys {
    fn of(c: &PipelineConfig) -> Self {
        let clean = content_hash(&json!([c.parse.include_spaces_in_words, c.cleaning]));
        let assign = content_hash(&json!([clean, c.assignment]));
        let measures = content_hash(&json!([assign, c.measures]));
        Self { clean, assign, measures }
    }
}

pub struct StageOutput {
    pub body: Value,
    pub recomputed: Vec<&'static str>,
}

impl Default for Session {
    fn default() -> Self {
        Self::new()
    }
}

impl Session {
    pub fn new() -> Self {
        let mut config = PipelineConfig::default();
        // Interactive use surfaces algorithm failures instead of hiding them.
        config.assignment.fallback_to_attach = false;
        Self {
            asc: BTreeMap::new(),
            ias: BTreeMap::new(),
            config,
            trials: Vec::new(),
            warnings: Vec::new(),
            last_used: Instant::now(),
        }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn has_files(&self) -> bool {
        !self.asc.is_empty()
    }

    /// Uploaded files as batch inputs, ASC first then IAS, each sorted by name.
    pub fn input_files(&self) -> Vec<InputFile> {
        self.asc.iter().chain(&self.ias).map(|(n, t)| InputFile::new(n.clone(), t.as_bytes())).collect()
    }

    /// Add files (zips are expanded). A file with a known name replaces the
    /// old copy. `cap` bounds the total expanded size of this upload.
    pub fn add_files(&mut self, files: Vec<InputFile>, cap: u64) -> Result<UploadSummary, ApiError> {
        if files.is_empty() || files.iter().all(|f| f.bytes.is_empty()) {
            return Err(ApiError::bad_request("upload contains no files"));
        }
        let expanded = expand_inputs(&files).map_err(|e| ApiError::bad_request(e.to_string()))?;
        let size: u64 = expanded.asc.iter().map(|(_, t)| t.len() as u64).chain(expanded.ias.values().map(|t| t.len() as u64)).sum();
        if size > cap {
            return Err(ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "upload_too_large", format!("expanded upload is {size} bytes, limit {cap}")));
        }
        let mut upload_warnings: Vec<Warning> = expanded.warnings.iter().map(|w| Warning { file: None, line: None, message: w.clone() }).collect();
        let mut names = Vec::new();
        for (name, text) in expanded.asc {
            if self.asc.insert(name.clone(), text).is_some() {
                upload_warnings.push(Warning::file(&name, "replaced a previously uploaded file with the same name"));
            }
            names.push(name);
        }
        for (name, text) in expanded.ias {
            if self.ias.insert(name.clone(), text).is_some() {
                upload_warnings.push(Warning::file(&name, "replaced a previously uploaded file with the same name"));
            }
            names.push(name);
        }
        self.reparse();
        let mut summary = self.summary();
        summary.files = names;
        upload_warnings.extend(summary.warnings);
        summary.warnings = upload_warnings;
        Ok(summary)
    }

    pub fn summary(&self) -> UploadSummary {
        UploadSummary {
            files: self.asc.keys().chain(self.ias.keys()).cloned().collect(),
            trials: self
                .trials
                .iter()
                .map(|t| TrialInfo {
                    tid: t.tid.clone(),
                    file_id: t.file_id.clone(),
                    trial_id: t.record.metadata.trial_id.clone(),
                    metadata: t.record.metadata.clone(),
                    fixation_count: t.record.fixations.len(),
                    saccade_count: t.record.saccades.len(),
                    blink_count: t.record.blinks.len(),
                    has_stimulus: !t.record.char_boxes.is_empty(),
                    is_practice: t.record.is_practice,
                    is_question: t.record.is_question,
                })
                .collect(),
            warnings: self.warnings.clone(),
        }
    }

    /// Parse every ASC file again, keeping caches of unchanged trials.
    fn reparse(&mut self) {
        let mut old: BTreeMap<String, SessionTrial> = std::mem::take(&mut self.trials).into_iter().map(|t| (t.tid.clone(), t)).collect();
        self.warnings.clear();
        for (file, text) in &self.asc {
            let parsed = match parse_asc(text, &self.config.parse) {
                Ok(p) => p,
                Err(e) => {
                    self.warnings.push(Warning::file(file, e.to_string()));
                    continue;
                }
            };
            self.warnings.extend(parsed.warnings.iter().map(|w| Warning { file: Some(file.clone()), line: w.line, message: w.message.clone() }));
            let mut records = parsed.trials;
            let report = attach_ias_to_trials(&mut records, &self.ias);
            self.warnings.extend(report.warnings.iter().map(|w| Warning::file(file, w.clone())));
            for id in &report.missing {
                self.warnings.push(Warning::file(file, format!("trial {id}: no stimulus (REGION CHAR or IAS file)")));
            }
            records.sort_by_key(|t| t.metadata.start_ms);
            let mut seen: BTreeMap<String, usize> = BTreeMap::new();
            for record in records {
                let n = seen.entry(record.metadata.trial_id.clone()).or_default();
                *n += 1;
                let key = if *n == 1 { record.metadata.trial_id.clone() } else { format!("{}_{}", record.metadata.trial_id, n) };
                let tid = format!("{}~{}", url_safe(file), url_safe(&key));
                let cache = match old.remove(&tid) {
                    Some(prev) if prev.record == record => prev.cache,
                    _ => StageCache::default(),
                };
                self.trials.push(SessionTrial { tid, file_id: file.clone(), record, cache });
            }
        }
    }

    /// Replace the whole config.
    pub fn set_config(&mut self, config: PipelineConfig) {
        let reparse = config.parse != self.config.parse;
        self.config = config;
        if reparse {
            self.reparse();
        }
    }

    /// Apply a JSON merge patch to the config and validate the result.
    pub fn patch_config(&mut self, patch: &Value) -> Result<(), ApiError> {
        if patch.is_null() || patch.as_object().is_some_and(|o| o.is_empty()) {
            return Ok(());
        }
        if !patch.is_object() {
            return Err(ApiError::bad_request("config patch must be a JSON object"));
        }
        let mut merged = serde_json::to_value(&self.config).expect("config serializes");
        merge_patch(&mut merged, patch);
        let config = load_config(&merged.to_string())?;
        self.set_config(config);
        Ok(())
    }

    /// Run one stage for a trial, recomputing stale upstream stages.
    /// A stage whose predecessor was never run is an ordering error.
    pub fn process(&mut self, tid: &str, stage: Stage) -> Result<StageOutput, ApiError> {
        let config = self.config.clone();
        let keys = Keys::of(&config);
        let trial = self.trials.iter_mut().find(|t| t.tid == tid).ok_or_else(|| ApiError::unknown_trial(tid))?;
        let before = |s: &str| ApiError::conflict("stage_order", format!("run the {s} stage for this trial first"));
        match stage {
            Stage::Assign if trial.cache.clean.is_none() => return Err(before("clean")),
            Stage::Measures if trial.cache.assign.is_none() => return Err(before("assign")),
            _ => {}
        }
        let stimulus = trial_stimulus(&trial.record, config.parse.include_spaces_in_words)?;
        let mut recomputed = Vec::new();

        let clean = match &trial.cache.clean {
            Some((k, c)) if *k == keys.clean => c.clone(),
            _ => {
                let c = Arc::new(stage_clean(&trial.record, &stimulus, &config.cleaning));
                trial.cache.clean = Some((keys.clean.clone(), c.clone()));
                recomputed.push("clean");
                c
            }
        };
        if stage == Stage::Clean {
            let scene = build_scene(&trial.record, &stimulus, Some(&clean), None, None);
            let body = json!({ "tid": tid, "stage": "clean", "report": clean.report, "fixations": clean.fixations, "scene": scene });
            return Ok(StageOutput { body, recomputed });
        }

        let assigned = match &trial.cache.assign {
            Some((k, a)) if *k == keys.assign => a.clone(),
            _ => {
                let a = Arc::new(stage_assign(&trial.record, &stimulus, &clean, &config.assignment)?);
                trial.cache.assign = Some((keys.assign.clone(), a.clone()));
                recomputed.push("assign");
                a
            }
        };
        if stage == Stage::Assign {
            let scene = build_scene(&trial.record, &stimulus, Some(&clean), Some(&assigned), None);
            let body = json!({
                "tid": tid,
                "stage": "assign",
                "analysis_method": assigned.analysis_assignment().algorithm,
                "assignments": assigned.assignments,
                "y_corrections": assigned.y_corrections,
                "saccades": assigned.saccades,
                "warnings": assigned.warnings,
                "scene": scene,
            });
            return Ok(StageOutput { body, recomputed });
        }

        let measures = match &trial.cache.measures {
            Some((k, m)) if *k == keys.measures => m.clone(),
            _ => {
                let m = Arc::new(stage_measures(&stimulus, &clean, &assigned, &config.measures));
                trial.cache.measures = Some((keys.measures.clone(), m.clone()));
                recomputed.push("measures");
                m
            }
        };
        let scene = build_scene(&trial.record, &stimulus, Some(&clean), Some(&assigned), Some(&measures));
        let body = json!({ "tid": tid, "stage": "measures", "tables": measures.tables, "hits": measures.hits, "scene": scene });
        Ok(StageOutput { body, recomputed })
    }
}
