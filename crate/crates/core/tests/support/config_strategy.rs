use gazepipeline_core::asc::AscParseConfig;
use gazepipeline_core::assign::{AssignmentParams, ExternalAssignerHandle, CLASSICAL_METHODS, WOC_LABEL};
use gazepipeline_core::cleaning::{CleaningConfig, ShortPolicy};
use gazepipeline_core::config::{AssignmentConfig, OutputConfig, PipelineConfig};
use gazepipeline_core::measures::{MeasuresConfig, FIXATION_MEASURES, SACCADE_MEASURES, SENTENCE_MEASURES, WORD_MEASURES};
use proptest::prelude::*;
use proptest::sample::subsequence;

/// Random configs that pass validation.
pub fn names(all: &'static [&'static str]) -> impl Strategy<Value = Vec<String>> {
    subsequence(all.to_vec(), 0..=all.len()).prop_map(|v| v.into_iter().map(String::from).collect())
}

pub fn bounds(lo: f64, hi: f64) -> impl Strategy<Value = [f64; 2]> {
    (lo..hi, lo..hi).prop_map(|(a, b)| if a <= b { [a, b] } else { [b, a] })
}

pub fn parse() -> impl Strategy<Value = AscParseConfig> {
    (any::<bool>(), any::<bool>(), any::<bool>(), prop::option::of("[A-Z_]{3,12}"), any::<bool>()).prop_map(
        |(discard, spaces, exclude, custom, keyboard)| {
            let mut c = AscParseConfig {
                discard_fixation_at_start: discard,
                include_spaces_in_words: spaces,
                exclude_practice_and_questions: exclude,
                ..Default::default()
            };
            if keyboard {
                c.end_flags.push("KEYBOARD".into());
            }
            c.custom_start = custom;
            c
        },
    )
}

pub fn cleaning() -> impl Strategy<Value = CleaningConfig> {
    let policy = prop_oneof![Just(ShortPolicy::Merge), Just(ShortPolicy::Discard), Just(ShortPolicy::MergeThenDiscard), Just(ShortPolicy::Keep)];
    (any::<bool>(), 0u32..400, 1u32..3000, 0.0..10.0f64, 0.0..10.0f64, policy, 0.0..10.0f64).prop_map(
        |(blink, min, extra, xt, yt, short_policy, md)| CleaningConfig {
            discard_blink_adjacent: blink,
            min_duration_ms: min,
            max_duration_ms: min + extra,
            outside_x_threshold_charwidths: xt,
            outside_y_threshold_lineheights: yt,
            short_policy,
            merge_distance_charwidths: md,
        },
    )
}

pub fn params() -> impl Strategy<Value = AssignmentParams> {
    (
        (1.0..500.0f64, 1.0..100.0f64, 1.0..1000.0f64, 1usize..5, 0.0..1.0f64, 1.0..100.0f64, 1.0..100.0f64),
        (bounds(-1.0, 1.0), bounds(-100.0, 100.0), bounds(0.5, 30.0), bounds(0.5, 2.0), bounds(-100.0, 100.0)),
        (prop::option::of(1.0..100.0f64), 1.0..500.0f64, prop::option::of(1.0..100.0f64), prop::option::of(1.0..300.0f64)),
        (subsequence(CLASSICAL_METHODS.to_vec(), 1..=CLASSICAL_METHODS.len()), prop::option::of((1u64..60_000, "[a-z]{1,8}"))),
    )
        .prop_map(|(a, b, c, d)| {
            let mut p = AssignmentParams {
                chain_x_max: a.0,
                chain_y_max: a.1,
                compare_sweep_px: a.2,
                compare_n_nearest: a.3,
                merge_slope_max: a.4,
                merge_y_max: a.5,
                merge_error_max: a.6,
                regress_k_bounds: b.0,
                regress_o_bounds: b.1,
                regress_s_bounds: b.2,
                stretch_scale_bounds: b.3,
                stretch_offset_bounds: b.4,
                slice_run_y_max: c.0,
                slice_run_x_max: c.1,
                slice_same_line_max: c.2,
                slice_adjacent_line_max: c.3,
                woc_members: d.0.into_iter().map(String::from).collect(),
                ..Default::default()
            };
            if let Some((timeout_ms, cmd)) = d.1 {
                p.external.insert("ext".into(), ExternalAssignerHandle { locator: format!("{cmd} --json"), timeout_ms });
            }
            p
        })
}

pub fn pipeline() -> impl Strategy<Value = PipelineConfig> {
    let measures = (names(&FIXATION_MEASURES), names(&SACCADE_MEASURES), names(&WORD_MEASURES), names(&SENTENCE_MEASURES), 0.0..3.0f64)
        .prop_map(|(fixation, saccade, word, sentence, deviation_y_frac)| MeasuresConfig { fixation, saccade, word, sentence, deviation_y_frac });
    let mut labels: Vec<&'static str> = CLASSICAL_METHODS.to_vec();
    labels.push(WOC_LABEL);
    (parse(), cleaning(), params(), subsequence(labels, 1..5), any::<bool>(), any::<bool>(), any::<bool>(), measures, any::<(bool, bool)>(), 1usize..64)
        .prop_map(|(parse, cleaning, params, methods, use_ext, pick_last, fallback, measures, out, workers)| {
            let mut methods: Vec<String> = methods.into_iter().map(String::from).collect();
            if use_ext && params.external.contains_key("ext") {
                methods.push("ext".into());
            }
            let analysis_method = pick_last.then(|| methods.last().cloned()).flatten();
            PipelineConfig {
                parse,
                cleaning,
                assignment: AssignmentConfig { methods, analysis_method, fallback_to_attach: fallback, params },
                measures,
                output: OutputConfig { separate_files_per_trial: out.0, emit_plot_data: out.1 },
                workers,
            }
        })
}
