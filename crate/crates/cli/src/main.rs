use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use gazepipeline_core::asc::{parse_asc, TrialRecord};
use gazepipeline_core::batch::{expand_inputs, run_batch, safe_path_part, BatchControl, BatchError, InputFile};
use gazepipeline_core::config::{load_config, PipelineConfig};
use gazepipeline_core::pipeline::{stage_assign, stage_clean, stage_measures, trial_stimulus, PipelineError};
use gazepipeline_core::stimulus::attach_ias_to_trials;

/// Reading eye-movement pipeline: ASC parsing, cleaning, line assignment and measures.
#[derive(Parser)]
#[command(name = "gazepipeline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse ASC files and write per-trial metadata to trials.json.
    Parse(Common),
    /// Clean fixations; writes <file>/<trial>/clean.json.
    Clean(Common),
    /// Clean and assign lines; writes <file>/<trial>/assign.json.
    Assign(Common),
    /// Run every stage; writes <file>/<trial>/{fixations,saccades,words,sentences}.csv.
    Measures(Common),
    /// Process everything in parallel and write results.zip.
    Batch(Common),
    /// Start the HTTP service (PORT, DATA_DIR, MAX_UPLOAD_BYTES, SESSION_TTL_S).
    Serve,
}

#[derive(Args)]
struct Common {
    /// ASC, IAS or zip files, or directories holding them.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Pipeline config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "gazepipeline-out")]
    out: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    /// Directory of IAS files referenced by IAREA FILE messages.
    #[arg(long)]
    ias: Option<PathBuf>,
    /// Line assignment methods, comma separated.
    #[arg(long, value_delimiter = ',')]
    method: Option<Vec<String>>,
}

enum Failure {
    Usage(String),
    NothingSucceeded(String),
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let out = match cli.command {
        Command::Serve => serve(),
        Command::Parse(c) => parse(&c),
        Command::Clean(c) => stages(&c, Stage::Clean),
        Command::Assign(c) => stages(&c, Stage::Assign),
        Command::Measures(c) => stages(&c, Stage::Measures),
        Command::Batch(c) => batch(&c),
    };
    match out {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::NothingSucceeded(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn config_for(c: &Common) -> Result<PipelineConfig, Failure> {
    let mut config = match &c.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            load_config(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(w) = c.workers {
        config.workers = w;
    }
    if let Some(m) = &c.method {
        config.assignment.methods = m.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        if config.assignment.analysis_method.as_ref().is_some_and(|a| !config.assignment.methods.contains(a)) {
            config.assignment.analysis_method = None;
        }
    }
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(config)
}

fn wanted(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| ["asc", "ias", "zip"].contains(&e.to_ascii_lowercase().as_str()))
}

fn read_inputs(paths: &[PathBuf]) -> Result<Vec<InputFile>, Failure> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|e| e.is_file() && wanted(e)).collect();
            entries.sort();
            for e in entries {
                files.push(read_input(&e)?);
            }
        } else {
            files.push(read_input(p)?);
        }
    }
    Ok(files)
}

fn read_input(path: &Path) -> Result<InputFile, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    Ok(InputFile::new(name, bytes))
}

fn read_ias_dir(dir: Option<&Path>) -> Result<BTreeMap<String, String>, Failure> {
    let mut map = BTreeMap::new();
    let Some(dir) = dir else { return Ok(map) };
    if !dir.is_dir() {
        return Err(Failure::Usage(format!("--ias {}: not a directory", dir.display())));
    }
    for e in fs::read_dir(dir)? {
        let path = e?.path();
        if path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("ias")) {
            let text = fs::read_to_string(&path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            map.insert(path.file_name().expect("file").to_string_lossy().into_owned(), text);
        }
    }
    Ok(map)
}

struct Loaded {
    file_id: String,
    key: String,
    record: TrialRecord,
}

/// Parse every ASC input and attach IAS files, in batch order.
fn load_trials(c: &Common, config: &PipelineConfig) -> Result<Vec<Loaded>, Failure> {
    let files = read_inputs(&c.inputs)?;
    let mut inputs = expand_inputs(&files).map_err(|e| Failure::Usage(e.to_string()))?;
    inputs.ias.extend(read_ias_dir(c.ias.as_deref())?);
    for w in &inputs.warnings {
        eprintln!("warning: {w}");
    }
    if inputs.asc.is_empty() {
        return Err(Failure::NothingSucceeded("no ASC files among the inputs".into()));
    }
    let mut out = Vec::new();
    for (name, text) in &inputs.asc {
        let parsed = match parse_asc(text, &config.parse) {
            Ok(p) => p,
            Err(e) => {
                eprintln!("warning: {name}: {e}");
                continue;
            }
        };
        for w in &parsed.warnings {
            eprintln!("warning: {name}: {w}");
        }
        let mut trials = parsed.trials;
        for w in attach_ias_to_trials(&mut trials, &inputs.ias).warnings {
            eprintln!("warning: {name}: {w}");
        }
        trials.sort_by_key(|t| t.metadata.start_ms);
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for record in trials {
            let n = seen.entry(record.metadata.trial_id.clone()).or_default();
            *n += 1;
            let key = if *n == 1 { record.metadata.trial_id.clone() } else { format!("{}_{}", record.metadata.trial_id, n) };
            out.push(Loaded { file_id: name.clone(), key, record });
        }
    }
    Ok(out)
}

fn parse(c: &Common) -> Result<(), Failure> {
    let config = config_for(c)?;
    let trials = load_trials(c, &config)?;
    if trials.is_empty() {
        return Err(Failure::NothingSucceeded("no trials found".into()));
    }
    let listing: Vec<_> = trials
        .iter()
        .map(|t| {
            json!({
                "file_id": t.file_id,
                "trial_id": t.key,
                "metadata": t.record.metadata,
                "fixation_count": t.record.fixations.len(),
                "saccade_count": t.record.saccades.len(),
                "blink_count": t.record.blinks.len(),
                "has_stimulus": !t.record.char_boxes.is_empty(),
            })
        })
        .collect();
    fs::create_dir_all(&c.out)?;
    fs::write(c.out.join("trials.json"), serde_json::to_string_pretty(&listing).expect("json") + "\n")?;
    println!("{} trial(s) parsed", trials.len());
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Stage {
    Clean,
    Assign,
    Measures,
}

fn run_stages(t: &Loaded, config: &PipelineConfig, stage: Stage, dir: &Path) -> Result<(), PipelineError> {
    let stimulus = trial_stimulus(&t.record, config.parse.include_spaces_in_words)?;
    let clean = stage_clean(&t.record, &stimulus, &config.cleaning);
    let write = |name: &str, bytes: String| fs::write(dir.join(name), bytes).expect("output directory is writable");
    if stage == Stage::Clean {
        let body = json!({ "report": clean.report, "fixations": clean.fixations });
        write("clean.json", serde_json::to_string_pretty(&body).expect("json") + "\n");
        return Ok(());
    }
    let assigned = stage_assign(&t.record, &stimulus, &clean, &config.assignment)?;
    for w in &assigned.warnings {
        eprintln!("warning: {} / {}: {w}", t.file_id, t.key);
    }
    if stage == Stage::Assign {
        let body = json!({
            "analysis_method": assigned.analysis_assignment().algorithm,
            "assignments": assigned.assignments,
            "y_corrections": assigned.y_corrections,
            "saccades": assigned.saccades,
        });
        write("assign.json", serde_json::to_string_pretty(&body).expect("json") + "\n");
        return Ok(());
    }
    let m = stage_measures(&stimulus, &clean, &assigned, &config.measures);
    write("fixations.csv", m.tables.fixations.to_csv());
    write("saccades.csv", m.tables.saccades.to_csv());
    write("words.csv", m.tables.words.to_csv());
    write("sentences.csv", m.tables.sentences.to_csv());
    Ok(())
}

fn stages(c: &Common, stage: Stage) -> Result<(), Failure> {
    let config = config_for(c)?;
    let trials = load_trials(c, &config)?;
    let mut ok = 0;
    for t in &trials {
        let dir = c.out.join(safe_path_part(&t.file_id)).join(safe_path_part(&t.key));
        fs::create_dir_all(&dir)?;
        match run_stages(t, &config, stage, &dir) {
            Ok(()) => ok += 1,
            Err(e) => {
                eprintln!("warning: {} / {}: {e}", t.file_id, t.key);
                let _ = fs::remove_dir(&dir);
            }
        }
    }
    println!("{ok} of {} trial(s) processed", trials.len());
    if ok == 0 {
        return Err(Failure::NothingSucceeded("no trial was processed".into()));
    }
    Ok(())
}

fn batch(c: &Common) -> Result<(), Failure> {
    let config = config_for(c)?;
    let files = read_inputs(&c.inputs)?;
    let ias = read_ias_dir(c.ias.as_deref())?;
    let progress = |done: usize, total: usize| eprintln!("files done: {done}/{total}");
    let control = BatchControl { progress: Some(&progress), ..Default::default() };
    let result = match run_batch(&files, &ias, &config, &control) {
        Ok(r) => r,
        Err(BatchError::NoSuccessfulTrials(warnings)) => {
            for w in warnings {
                eprintln!("warning: {w}");
            }
            return Err(Failure::NothingSucceeded("no trial was processed".into()));
        }
        Err(e @ BatchError::NoInput) => return Err(Failure::NothingSucceeded(e.to_string())),
        Err(e) => return Err(Failure::Usage(e.to_string())),
    };
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    fs::create_dir_all(&c.out)?;
    let path = c.out.join("results.zip");
    fs::write(&path, &result.archive)?;
    println!("{} trial(s) processed, {} failed; wrote {}", result.trials.len(), result.summary.overall.failed_trials, path.display());
    Ok(())
}

fn serve() -> Result<(), Failure> {
    tracing_subscriber::fmt().with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into())).init();
    let settings = gazepipeline_service::Settings::from_env().map_err(Failure::Usage)?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(gazepipeline_service::serve(settings))?;
    Ok(())
}
