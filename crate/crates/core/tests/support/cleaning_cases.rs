use gazepipeline_core::asc::Fixation;
use gazepipeline_core::cleaning::{CleaningConfig, ShortPolicy};
use proptest::prelude::*;

pub fn fix(i: usize, start: i64, dur: i64, x: f64, y: f64) -> Fixation {
    Fixation::new(i, start, start + dur, x, y)
}

/// Twelve fixations over the three-line layout (lines centred at y 100, 200
/// and 300, text from x 100). Every disposition appears at least once.
pub fn twelve() -> Vec<Fixation> {
    let mut f = vec![
        fix(0, 1000, 200, 110.0, 100.0),
        fix(1, 1250, 900, 150.0, 100.0),
        fix(2, 2200, 220, 180.0, 102.0),
        fix(3, 2600, 230, 200.0, 98.0),
        fix(4, 2900, 60, 240.0, 100.0),
        fix(5, 2965, 250, 246.0, 101.0),
        fix(6, 3300, 210, 60.0, 100.0),
        fix(7, 3600, 240, 300.0, 200.0),
        fix(8, 3900, 50, 330.0, 200.0),
        fix(9, 4000, 70, 335.0, 204.0),
        fix(10, 4150, 260, 400.0, 300.0),
        fix(11, 4500, 40, 404.0, 303.0),
    ];
    f[2].blink_after = true;
    f[3].blink_before = true;
    f
}

pub fn policy() -> impl Strategy<Value = ShortPolicy> {
    prop_oneof![Just(ShortPolicy::Merge), Just(ShortPolicy::Discard), Just(ShortPolicy::MergeThenDiscard), Just(ShortPolicy::Keep)]
}

pub fn config() -> impl Strategy<Value = CleaningConfig> {
    (any::<bool>(), 40u32..200, 300u32..1200, 0.0..4.0f64, 0.0..2.0f64, policy(), 0.0..3.0f64).prop_map(
        |(blink, min, max, xt, yt, short_policy, md)| CleaningConfig {
            discard_blink_adjacent: blink,
            max_duration_ms: max,
            outside_x_threshold_charwidths: xt,
            outside_y_threshold_lineheights: yt,
            short_policy,
            min_duration_ms: min,
            merge_distance_charwidths: md,
        },
    )
}

/// Time-ordered fixations near the text, with many short ones and close
/// neighbours so merges actually happen.
pub fn trial() -> impl Strategy<Value = Vec<Fixation>> {
    prop::collection::vec((1i64..40, 20i64..1000, 40.0..820.0f64, 40.0..360.0f64, 0u8..10), 0..40).prop_map(|raw| {
        let mut t = 1000;
        let mut out = Vec::new();
        for (i, (gap, dur, x, y, blink)) in raw.into_iter().enumerate() {
            let mut f = fix(i, t + gap, dur, x.round(), y.round());
            f.blink_before = blink == 0;
            f.blink_after = blink == 1;
            t = f.end_ms;
            out.push(f);
        }
        out
    })
}

pub fn clustered_trial() -> impl Strategy<Value = Vec<Fixation>> {
    prop::collection::vec((1i64..20, 20i64..200, -8.0..8.0f64, -4.0..4.0f64), 1..30).prop_map(|raw| {
        let mut t = 1000;
        let mut x = 150.0;
        let mut out = Vec::new();
        for (i, (gap, dur, dx, dy)) in raw.into_iter().enumerate() {
            x += dx;
            let f = fix(i, t + gap, dur, x, 200.0 + dy);
            t = f.end_ms;
            out.push(f);
        }
        out
    })
}


pub fn any_trial() -> impl Strategy<Value = Vec<Fixation>> {
    prop_oneof![trial(), clustered_trial()]
}
