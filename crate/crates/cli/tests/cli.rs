use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gazepipeline_core::batch::{read_zip, run_batch, BatchControl, InputFile};
use gazepipeline_core::config::{load_config, save_config, PipelineConfig};
use gazepipeline_core::synth::{demo_corpus, DEMO_MISSING_TRIAL};

fn run(args: &[&std::ffi::OsStr]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gazepipeline")).args(args).output().unwrap()
}

fn os<S: AsRef<std::ffi::OsStr> + ?Sized>(s: &S) -> &std::ffi::OsStr {
    s.as_ref()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Demo ASC files in `asc/`, their IAS files in `ias/`.
fn write_corpus(root: &Path) {
    let c = demo_corpus();
    fs::create_dir_all(root.join("asc")).unwrap();
    fs::create_dir_all(root.join("ias")).unwrap();
    for (n, t) in &c.asc {
        fs::write(root.join("asc").join(n), t).unwrap();
    }
    for (n, t) in &c.ias {
        fs::write(root.join("ias").join(n), t).unwrap();
    }
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(run(&[os("batch")]).status.code(), Some(1));
    assert_eq!(run(&[os("frobnicate")]).status.code(), Some(1));
    assert_eq!(run(&[os("batch"), os("x.asc"), os("--workers"), os("many")]).status.code(), Some(1));
    assert_eq!(run(&[os("--help")]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.asc");
    assert_eq!(run(&[os("parse"), missing.as_os_str()]).status.code(), Some(1));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"cleaning": {"max_duration_ms": -5}}"#).unwrap();
    let asc = dir.path().join("a.asc");
    fs::write(&asc, &demo_corpus().asc[0].1).unwrap();
    let o = run(&[os("batch"), asc.as_os_str(), os("--config"), bad.as_os_str()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cleaning.max_duration_ms"), "{}", stderr(&o));
    let o = run(&[os("batch"), asc.as_os_str(), os("--workers"), os("0")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn nothing_processed_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.asc");
    fs::write(&junk, "** not an asc file\n").unwrap();
    let out = dir.path().join("out");
    let o = run(&[os("batch"), junk.as_os_str(), os("--out"), out.as_os_str()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!out.join("results.zip").exists());
    assert_eq!(run(&[os("measures"), junk.as_os_str(), os("--out"), out.as_os_str()]).status.code(), Some(2));
}

#[test]
fn batch_matches_library_and_honours_flags() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path());
    let out = dir.path().join("out");
    let o = run(&[
        os("batch"),
        dir.path().join("asc").as_os_str(),
        os("--ias"),
        dir.path().join("ias").as_os_str(),
        os("--out"),
        out.as_os_str(),
        os("--workers"),
        os("3"),
        os("--method"),
        os("attach,cluster"),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains(DEMO_MISSING_TRIAL));
    assert!(stderr(&o).contains("files done: 2/2"));
    let zip = fs::read(out.join("results.zip")).unwrap();
    let entries = read_zip(&zip).unwrap();
    let config = load_config(std::str::from_utf8(&entries["config.json"]).unwrap()).unwrap();
    assert_eq!(config.workers, 3);
    assert_eq!(config.assignment.methods, vec!["attach".to_string(), "cluster".to_string()]);

    let c = demo_corpus();
    let files: Vec<InputFile> = c.asc.iter().map(|(n, t)| InputFile::new(n.clone(), t.as_bytes())).collect();
    let direct = run_batch(&files, &c.ias, &config, &BatchControl::default()).unwrap();
    assert_eq!(zip, direct.archive);
}

#[test]
fn stage_commands_write_per_trial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path());
    let asc = dir.path().join("asc");
    let ias = dir.path().join("ias");
    let out = dir.path().join("out");
    let cmd = |stage: &str| run(&[os(stage), asc.as_os_str(), os("--ias"), ias.as_os_str(), os("--out"), out.as_os_str()]);

    assert_eq!(cmd("parse").status.code(), Some(0));
    let listing: serde_json::Value = serde_json::from_slice(&fs::read(out.join("trials.json")).unwrap()).unwrap();
    assert_eq!(listing.as_array().unwrap().len(), 6);
    assert_eq!(listing[0]["file_id"], "p01.asc");

    let o = cmd("clean");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("5 of 6"));
    let clean: serde_json::Value = serde_json::from_slice(&fs::read(out.join("p01.asc/E1I1D0/clean.json")).unwrap()).unwrap();
    assert_eq!(clean["fixations"].as_array().unwrap().len(), 30);

    assert_eq!(cmd("assign").status.code(), Some(0));
    let a: serde_json::Value = serde_json::from_slice(&fs::read(out.join("p01.asc/E1I2D0/assign.json")).unwrap()).unwrap();
    assert_eq!(a["analysis_method"], "slice");

    assert_eq!(cmd("measures").status.code(), Some(0));
    for t in ["fixations", "saccades", "words", "sentences"] {
        assert!(out.join(format!("p02.asc/E3I5D0/{t}.csv")).is_file(), "{t}");
    }
    assert!(!out.join(format!("p02.asc/{DEMO_MISSING_TRIAL}")).exists());
    let words = fs::read_to_string(out.join("p01.asc/E1I1D0/words.csv")).unwrap();
    assert_eq!(words.lines().count(), 31);
}

#[test]
fn config_file_is_used_as_written() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path());
    let mut c = PipelineConfig::default();
    c.assignment.methods = vec!["warp".into()];
    c.output.emit_plot_data = true;
    let path = dir.path().join("config.json");
    fs::write(&path, save_config(&c)).unwrap();
    let out = dir.path().join("out");
    let o = run(&[os("batch"), dir.path().join("asc").as_os_str(), dir.path().join("ias").as_os_str(), os("--config"), path.as_os_str(), os("--out"), out.as_os_str()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let entries: BTreeMap<String, Vec<u8>> = read_zip(&fs::read(out.join("results.zip")).unwrap()).unwrap();
    assert_eq!(String::from_utf8_lossy(&entries["config.json"]), save_config(&c));
    assert!(entries.contains_key("plots/p01.asc/E1I1D0.json"));
}
