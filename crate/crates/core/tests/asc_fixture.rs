use std::collections::BTreeMap;

use gazepipeline_core::asc::{parse_asc, AscParseConfig};
use gazepipeline_core::config::PipelineConfig;
use gazepipeline_core::pipeline::run_pipeline;
use gazepipeline_core::stimulus::attach_ias_to_trials;

const ASC: &str = include_str!("fixtures/two_trials.asc");
const IAS: &str = include_str!("fixtures/trial_e2i7.ias");

#[path = "support/asc_scan.rs"]
mod scan;
use scan::{scan_counts, Counts};

#[test]
fn event_counts_match_text_scan() {
    let parsed = parse_asc(ASC, &AscParseConfig::default()).unwrap();
    let expected = scan_counts(ASC);
    assert_eq!(expected.len(), 2);
    let got: Vec<Counts> = parsed
        .trials
        .iter()
        .map(|t| Counts { fixations: t.fixations.len(), saccades: t.saccades.len(), blinks: t.blinks.len() })
        .collect();
    assert_eq!(got, expected);
    assert_eq!(got[0], Counts { fixations: 4, saccades: 4, blinks: 1 });
    assert_eq!(got[1], Counts { fixations: 4, saccades: 2, blinks: 1 });
}

#[test]
fn metadata_matches_hand_reading() {
    let trials = parse_asc(ASC, &AscParseConfig::default()).unwrap().trials;
    let m: Vec<_> = trials.iter().map(|t| &t.metadata).collect();
    assert_eq!(m[0].trial_id, "E1I3D0");
    assert_eq!((m[0].condition.as_str(), m[0].item.as_str()), ("1", "3"));
    assert_eq!(m[0].question_response.as_deref(), Some("1"));
    assert_eq!((m[0].screen_w, m[0].screen_h), (Some(1024), Some(768)));
    assert_eq!((m[0].start_ms, m[0].end_ms), (1000, 2190));
    assert_eq!(m[0].ias_file.as_deref(), Some("trial_e1i3.ias"));
    assert_eq!(m[0].trial_vars.get("subject").map(String::as_str), Some("p01"));
    assert_eq!(trials[0].char_boxes.len(), 11);
    assert_eq!(trials[0].char_boxes[3].ch, ' ');

    assert_eq!(m[1].trial_id, "E2I7D0");
    assert_eq!((m[1].condition.as_str(), m[1].item.as_str()), ("2", "7"));
    assert_eq!(m[1].question_response.as_deref(), Some("2"));
    assert_eq!((m[1].start_ms, m[1].end_ms), (3110, 4100));
    assert!(trials[1].char_boxes.is_empty());
}

#[test]
fn straddling_fixation_is_kept_and_clipped_when_asked() {
    let config = AscParseConfig { discard_fixation_at_start: false, ..Default::default() };
    let t = &parse_asc(ASC, &config).unwrap().trials[0];
    assert_eq!(t.fixations.len(), 5);
    assert_eq!((t.fixations[0].start_ms, t.fixations[0].end_ms), (1000, 1100));
}

#[test]
fn blink_neighbours_are_flagged() {
    let trials = parse_asc(ASC, &AscParseConfig::default()).unwrap().trials;
    let flags: Vec<(bool, bool)> = trials[1].fixations.iter().map(|f| (f.blink_before, f.blink_after)).collect();
    assert_eq!(flags, vec![(false, false), (false, false), (false, true), (true, false)]);
}

#[test]
fn both_trials_run_through_the_pipeline() {
    let mut trials = parse_asc(ASC, &AscParseConfig::default()).unwrap().trials;
    let ias = BTreeMap::from([("trial_e2i7.ias".to_string(), IAS.to_string())]);
    let report = attach_ias_to_trials(&mut trials, &ias);
    assert!(report.missing.is_empty());
    assert_eq!(trials[1].char_boxes.len(), 13);

    let config = PipelineConfig::default();
    let first = run_pipeline(&trials[0], &config).unwrap();
    // Blink neighbours go, leaving one fixation on each line.
    assert_eq!(first.clean.report.count("DiscardedBlink"), 2);
    assert_eq!(first.assign.analysis_assignment().line_idx, vec![0, 1]);

    let second = run_pipeline(&trials[1], &config).unwrap();
    assert_eq!(second.clean.fixations.len(), 2);
    assert_eq!(second.measures.tables.words.rows.len(), 3);
}
