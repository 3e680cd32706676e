//! Whole-corpus processing with a worker pool and a zip archive of results.

use std::collections::BTreeMap;
use std::io::{Cursor, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipArchive, ZipWriter};

use crate::asc::{parse_asc, TrialRecord};
use crate::config::{save_config, PipelineConfig};
use crate::pipeline::{run_pipeline, TrialResult, TrialTables};
use crate::stimulus::attach_ias_to_trials;
use crate::table::CsvTable;

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("no input files")]
    NoInput,
    #[error("no trial could be processed ({} warnings)", .0.len())]
    NoSuccessfulTrials(Vec<String>),
    #[error("batch cancelled")]
    Cancelled,
    #[error("invalid zip input {name}: {reason}")]
    BadArchive { name: String, reason: String },
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl InputFile {
    pub fn new(name: impl Into<String>, bytes: impl Into<Vec<u8>>) -> Self {
        Self { name: name.into(), bytes: bytes.into() }
    }
}

/// ASC texts and IAS files after unpacking zip inputs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExpandedInputs {
    /// (file name, text), sorted by name.
    pub asc: Vec<(String, String)>,
    pub ias: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

fn has_ext(name: &str, ext: &str) -> bool {
    Path::new(name).extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

/// Unpack zip archives and sort files into ASC recordings and IAS layouts.
/// Other files are ignored with a warning.
pub fn expand_inputs(files: &[InputFile]) -> Result<ExpandedInputs, BatchError> {
    let mut out = ExpandedInputs::default();
    let add = |name: String, bytes: &[u8], out: &mut ExpandedInputs| {
        let text = String::from_utf8_lossy(bytes).into_owned();
        if has_ext(&name, "asc") {
            if out.asc.iter().any(|(n, _)| *n == name) {
                out.warnings.push(format!("{name}: duplicate file name; keeping the later copy"));
                out.asc.retain(|(n, _)| *n != name);
            }
            out.asc.push((name, text));
        } else if has_ext(&name, "ias") {
            out.ias.insert(name, text);
        } else {
            out.warnings.push(format!("{name}: not an .asc or .ias file; ignored"));
        }
    };
    for f in files {
        if has_ext(&f.name, "zip") {
            let mut archive = ZipArchive::new(Cursor::new(&f.bytes))
                .map_err(|e| BatchError::BadArchive { name: f.name.clone(), reason: e.to_string() })?;
            for i in 0..archive.len() {
                let mut entry = archive
                    .by_index(i)
                    .map_err(|e| BatchError::BadArchive { name: f.name.clone(), reason: e.to_string() })?;
                if entry.is_dir() {
                    continue;
                }
                let name = entry.name().to_string();
                let mut bytes = Vec::new();
                entry
                    .read_to_end(&mut bytes)
                    .map_err(|e| BatchError::BadArchive { name: f.name.clone(), reason: e.to_string() })?;
                add(name, &bytes, &mut out);
            }
        } else {
            add(f.name.clone(), &f.bytes, &mut out);
        }
    }
    out.asc.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FileSummary {
    pub file_id: String,
    pub trial_count: usize,
    pub failed_trials: usize,
    pub fixations_before: usize,
    pub fixations_after: usize,
    pub dispositions: BTreeMap<String, usize>,
    pub mean_abs_y_correction: BTreeMap<String, f64>,
    pub question_responses: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub files: Vec<FileSummary>,
    pub overall: FileSummary,
}

/// Accumulates a [`FileSummary`] with pooled y-correction means.
#[derive(Default)]
struct Acc {
    s: FileSummary,
    y_sum: BTreeMap<String, (f64, usize)>,
}

impl Acc {
    fn add(&mut self, r: &TrialResult) {
        self.s.trial_count += 1;
        self.s.fixations_before += r.fixations_before;
        self.s.fixations_after += r.clean.fixations.len();
        for (k, v) in &r.clean.report.counts {
            *self.s.dispositions.entry(k.clone()).or_default() += v;
        }
        for y in &r.assign.y_corrections {
            let e = self.y_sum.entry(y.algorithm.clone()).or_default();
            e.0 += y.values.iter().map(|v| v.abs()).sum::<f64>();
            e.1 += y.values.len();
        }
        let answer = r.question_response.clone().unwrap_or_else(|| "none".into());
        *self.s.question_responses.entry(answer).or_default() += 1;
    }

    fn finish(mut self) -> FileSummary {
        self.s.mean_abs_y_correction =
            self.y_sum.into_iter().filter(|(_, (_, n))| *n > 0).map(|(k, (sum, n))| (k, sum / n as f64)).collect();
        self.s
    }
}

/// Aggregate per-file and overall statistics over `(file_id, result)` pairs.
pub fn summarize<'a>(results: impl IntoIterator<Item = (&'a str, &'a TrialResult)>) -> SummaryStats {
    let mut per_file: BTreeMap<&str, Acc> = BTreeMap::new();
    let mut overall = Acc::default();
    for (file, r) in results {
        per_file.entry(file).or_default().add(r);
        overall.add(r);
    }
    let files = per_file
        .into_iter()
        .map(|(name, acc)| {
            let mut s = acc.finish();
            s.file_id = name.to_string();
            s
        })
        .collect();
    let mut overall = overall.finish();
    overall.file_id = "overall".into();
    SummaryStats { files, overall }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessedTrial {
    pub file_id: String,
    /// Unique within the file; a suffix is added to repeated trial ids.
    pub trial_key: String,
    pub result: TrialResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub fixations: CsvTable,
    pub saccades: CsvTable,
    pub words: CsvTable,
    pub sentences: CsvTable,
    pub summary: SummaryStats,
    pub warnings: Vec<String>,
    pub trials: Vec<ProcessedTrial>,
    pub archive: Vec<u8>,
}

impl BatchResult {
    pub fn summary_json(&self) -> String {
        summary_json(&self.summary, &self.warnings)
    }
}

fn summary_json(summary: &SummaryStats, warnings: &[String]) -> String {
    #[derive(Serialize)]
    struct Out<'a> {
        summary: &'a SummaryStats,
        warnings: &'a [String],
    }
    serde_json::to_string_pretty(&Out { summary, warnings }).expect("summary serializes")
}

/// Optional hooks for long runs.
#[derive(Default)]
pub struct BatchControl<'a> {
    /// Called with (files finished, files total) whenever a file completes.
    pub progress: Option<&'a (dyn Fn(usize, usize) + Sync)>,
    /// When set, trials not yet started are abandoned.
    pub cancel: Option<&'a AtomicBool>,
}

struct Task {
    file_idx: usize,
    trial: TrialRecord,
}

pub fn safe_path_part(s: &str) -> String {
    let cleaned: String =
        s.chars().map(|c| if c.is_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' }).collect();
    if cleaned.is_empty() || cleaned.chars().all(|c| c == '.') {
        "_".into()
    } else {
        cleaned
    }
}

pub fn run_batch(
    files: &[InputFile],
    extra_ias: &BTreeMap<String, String>,
    config: &PipelineConfig,
    control: &BatchControl<'_>,
) -> Result<BatchResult, BatchError> {
    if files.is_empty() {
        return Err(BatchError::NoInput);
    }
    let mut inputs = expand_inputs(files)?;
    inputs.ias.extend(extra_ias.iter().map(|(k, v)| (k.clone(), v.clone())));
    let mut warnings = inputs.warnings.clone();

    let mut tasks = Vec::new();
    let mut per_file_total = vec![0usize; inputs.asc.len()];
    for (file_idx, (name, text)) in inputs.asc.iter().enumerate() {
        let parsed = match parse_asc(text, &config.parse) {
            Ok(p) => p,
            Err(e) => {
                warnings.push(format!("{name}: {e}"));
                continue;
            }
        };
        warnings.extend(parsed.warnings.iter().map(|w| format!("{name}: {w}")));
        let mut trials = parsed.trials;
        let report = attach_ias_to_trials(&mut trials, &inputs.ias);
        warnings.extend(report.warnings.iter().map(|w| format!("{name}: {w}")));
        trials.sort_by_key(|t| t.metadata.start_ms);
        per_file_total[file_idx] = trials.len();
        tasks.extend(trials.into_iter().map(|trial| Task { file_idx, trial }));
    }

    let files_total = inputs.asc.len();
    let remaining: Vec<AtomicUsize> = per_file_total.iter().map(|&n| AtomicUsize::new(n)).collect();
    let files_done = AtomicUsize::new(per_file_total.iter().filter(|&&n| n == 0).count());
    let report_progress = |done: usize| {
        if let Some(p) = control.progress {
            p(done, files_total);
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| BatchError::Pool(e.to_string()))?;
    let outcomes: Vec<Option<Result<TrialResult, String>>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|task| {
                if control.cancel.is_some_and(|c| c.load(Ordering::SeqCst)) {
                    return None;
                }
                let out = run_pipeline(&task.trial, config).map_err(|e| e.to_string());
                if remaining[task.file_idx].fetch_sub(1, Ordering::SeqCst) == 1 {
                    let done = files_done.fetch_add(1, Ordering::SeqCst) + 1;
                    report_progress(done);
                }
                Some(out)
            })
            .collect()
    });
    if control.cancel.is_some_and(|c| c.load(Ordering::SeqCst)) && outcomes.iter().any(Option::is_none) {
        return Err(BatchError::Cancelled);
    }

    let mut processed = Vec::new();
    let mut failed_per_file: BTreeMap<usize, usize> = BTreeMap::new();
    let mut used_keys: BTreeMap<(usize, String), usize> = BTreeMap::new();
    for (task, outcome) in tasks.iter().zip(outcomes) {
        let file_id = &inputs.asc[task.file_idx].0;
        match outcome.expect("not cancelled") {
            Ok(result) => {
                warnings.extend(result.warnings.iter().map(|w| format!("{file_id} / {}: {w}", result.trial_id)));
                let n = used_keys.entry((task.file_idx, result.trial_id.clone())).or_default();
                *n += 1;
                let trial_key = if *n == 1 { result.trial_id.clone() } else { format!("{}_{}", result.trial_id, n) };
                processed.push(ProcessedTrial { file_id: file_id.clone(), trial_key, result });
            }
            Err(e) => {
                *failed_per_file.entry(task.file_idx).or_default() += 1;
                warnings.push(format!("{file_id} / {}: {e}", task.trial.metadata.trial_id));
            }
        }
    }
    if processed.is_empty() {
        return Err(BatchError::NoSuccessfulTrials(warnings));
    }

    let mut summary = summarize(processed.iter().map(|p| (p.file_id.as_str(), &p.result)));
    for (file_idx, n) in failed_per_file {
        let name = &inputs.asc[file_idx].0;
        if let Some(f) = summary.files.iter_mut().find(|f| f.file_id == *name) {
            f.failed_trials = n;
        } else {
            summary.files.push(FileSummary { file_id: name.clone(), failed_trials: n, ..Default::default() });
            summary.files.sort_by(|a, b| a.file_id.cmp(&b.file_id));
        }
        summary.overall.failed_trials += n;
    }

    let headers = TrialTables::empty(&config.measures);
    let keyed = |pick: fn(&TrialTables) -> &CsvTable| {
        let head = pick(&headers).with_keys(&[("file_id", ""), ("trial_id", "")]).headers;
        let parts: Vec<CsvTable> = processed
            .iter()
            .map(|p| pick(&p.result.measures.tables).with_keys(&[("file_id", &p.file_id), ("trial_id", &p.trial_key)]))
            .collect();
        CsvTable::concat(&head, &parts)
    };
    let fixations = keyed(|t| &t.fixations);
    let saccades = keyed(|t| &t.saccades);
    let words = keyed(|t| &t.words);
    let sentences = keyed(|t| &t.sentences);

    let mut entries: Vec<(String, Vec<u8>)> = vec![
        ("combined/fixations.csv".into(), fixations.to_csv().into_bytes()),
        ("combined/saccades.csv".into(), saccades.to_csv().into_bytes()),
        ("combined/words.csv".into(), words.to_csv().into_bytes()),
        ("combined/sentences.csv".into(), sentences.to_csv().into_bytes()),
        ("summary.json".into(), summary_json(&summary, &warnings).into_bytes()),
        ("config.json".into(), save_config(config).into_bytes()),
    ];
    for p in &processed {
        let dir = format!("{}/{}", safe_path_part(&p.file_id), safe_path_part(&p.trial_key));
        if config.output.separate_files_per_trial {
            let t = &p.result.measures.tables;
            for (name, table) in [("fixations", &t.fixations), ("saccades", &t.saccades), ("words", &t.words), ("sentences", &t.sentences)] {
                entries.push((format!("trials/{dir}/{name}.csv"), table.to_csv().into_bytes()));
            }
        }
        if config.output.emit_plot_data {
            let json = serde_json::to_string(&p.result.scene).expect("scene serializes");
            entries.push((format!("plots/{dir}.json"), json.into_bytes()));
        }
    }
    let archive = write_zip(&entries);

    Ok(BatchResult { fixations, saccades, words, sentences, summary, warnings, trials: processed, archive })
}

/// Zip with fixed timestamps and permissions so equal inputs give equal bytes.
pub fn write_zip(entries: &[(String, Vec<u8>)]) -> Vec<u8> {
    let mut w = ZipWriter::new(Cursor::new(Vec::new()));
    let options = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Deflated)
        .last_modified_time(DateTime::default())
        .unix_permissions(0o644);
    for (name, bytes) in entries {
        w.start_file(name.as_str(), options).expect("in-memory zip");
        w.write_all(bytes).expect("in-memory zip");
    }
    w.finish().expect("in-memory zip").into_inner()
}

/// Read every file of a zip archive into memory.
pub fn read_zip(bytes: &[u8]) -> Result<BTreeMap<String, Vec<u8>>, BatchError> {
    let bad = |e: zip::result::ZipError| BatchError::BadArchive { name: "archive".into(), reason: e.to_string() };
    let mut archive = ZipArchive::new(Cursor::new(bytes)).map_err(bad)?;
    let mut out = BTreeMap::new();
    for i in 0..archive.len() {
        let mut entry = archive.by_index(i).map_err(bad)?;
        let mut buf = Vec::new();
        entry
            .read_to_end(&mut buf)
            .map_err(|e| BatchError::BadArchive { name: "archive".into(), reason: e.to_string() })?;
        out.insert(entry.name().to_string(), buf);
    }
    Ok(out)
}
