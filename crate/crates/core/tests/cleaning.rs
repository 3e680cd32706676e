use gazepipeline_core::cleaning::{clean_fixations, CleaningConfig, Disposition, ShortPolicy};
use gazepipeline_core::synth::syn1_stimulus;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

#[path = "support/cleaning_cases.rs"]
mod cases;
use cases::*;

#[test]
fn twelve_fixation_disposition_table() {
    use Disposition::*;
    let (out, report) = clean_fixations(&twelve(), &syn1_stimulus(), &CleaningConfig::default());
    assert_eq!(
        report.dispositions,
        vec![
            Kept,
            DiscardedLong,
            DiscardedBlink,
            DiscardedBlink,
            MergedInto(5),
            Kept,
            DiscardedOutside,
            Kept,
            DiscardedShort,
            DiscardedShort,
            Kept,
            MergedInto(10),
        ]
    );
    let counts: Vec<usize> = ["Kept", "DiscardedBlink", "DiscardedLong", "DiscardedOutside", "DiscardedShort", "MergedInto"]
        .iter()
        .map(|k| report.count(k))
        .collect();
    assert_eq!(counts, vec![4, 2, 1, 1, 2, 2]);
    assert_eq!(report.survivors, vec![0, 5, 7, 10]);

    // Merge arithmetic: summed durations, plain mean of the coordinates,
    // earlier start.
    let got: Vec<(i64, i64, i64, f64, f64)> = out.iter().map(|f| (f.start_ms, f.end_ms, f.duration_ms, f.x, f.y)).collect();
    assert_eq!(
        got,
        vec![
            (1000, 1200, 200, 110.0, 100.0),
            (2900, 3210, 310, 243.0, 100.5),
            (3600, 3840, 240, 300.0, 200.0),
            (4150, 4450, 300, 402.0, 301.5),
        ]
    );
    assert_eq!(out.iter().map(|f| f.index).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
}

#[test]
fn merge_only_keeps_the_unmergeable_shorts() {
    let config = CleaningConfig { short_policy: ShortPolicy::Merge, ..Default::default() };
    let (_, report) = clean_fixations(&twelve(), &syn1_stimulus(), &config);
    assert_eq!(report.survivors, vec![0, 5, 7, 8, 9, 10]);
}

fn runner_config() -> ProptestConfig {
    ProptestConfig { cases: 1000, rng_seed: RngSeed::Fixed(0x5eed), failure_persistence: None, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(runner_config())]

    #[test]
    fn cleaning_is_idempotent(fixes in any_trial(), cfg in config()) {
        let stim = syn1_stimulus();
        let (once, _) = clean_fixations(&fixes, &stim, &cfg);
        let (twice, report) = clean_fixations(&once, &stim, &cfg);
        prop_assert_eq!(&twice, &once);
        prop_assert_eq!(report.count("Kept"), once.len());
    }

    #[test]
    fn policies_are_monotone(fixes in any_trial(), cfg in config()) {
        let stim = syn1_stimulus();
        let survivors = |p: ShortPolicy| clean_fixations(&fixes, &stim, &CleaningConfig { short_policy: p, ..cfg.clone() }).1.survivors;
        let merge = survivors(ShortPolicy::Merge);
        let mtd = survivors(ShortPolicy::MergeThenDiscard);
        let discard = survivors(ShortPolicy::Discard);
        let keep = survivors(ShortPolicy::Keep);
        prop_assert!(mtd.iter().all(|i| merge.contains(i)));
        prop_assert!(discard.iter().all(|i| keep.contains(i)));
    }

    #[test]
    fn report_partitions_and_conserves(fixes in any_trial(), cfg in config()) {
        let (out, report) = clean_fixations(&fixes, &syn1_stimulus(), &cfg);
        prop_assert_eq!(report.dispositions.len(), fixes.len());
        prop_assert_eq!(report.counts.values().sum::<usize>(), fixes.len());
        let retained: i64 = fixes
            .iter()
            .zip(&report.dispositions)
            .filter(|(_, d)| matches!(d, Disposition::Kept | Disposition::MergedInto(_)))
            .map(|(f, _)| f.duration_ms)
            .sum();
        prop_assert_eq!(out.iter().map(|f| f.duration_ms).sum::<i64>(), retained);
        prop_assert!(report.survivors.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(out.windows(2).all(|w| w[0].start_ms < w[1].start_ms));
        if matches!(cfg.short_policy, ShortPolicy::Discard | ShortPolicy::MergeThenDiscard) {
            prop_assert!(out.iter().all(|f| f.duration_ms >= cfg.min_duration_ms as i64));
        }
    }
}
