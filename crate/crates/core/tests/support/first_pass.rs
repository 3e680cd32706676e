use gazepipeline_core::asc::Fixation;
use gazepipeline_core::measures::WordFirstPass;
use proptest::prelude::*;

/// Single forward pass over the fixations, tracking the rightmost word seen.
pub fn first_pass_oracle(words: &[usize], durations: &[i64], word_count: usize) -> Vec<WordFirstPass> {
    let mut out: Vec<WordFirstPass> = (0..word_count).map(|_| WordFirstPass::default()).collect();
    let mut rightmost: Option<usize> = None;
    let mut in_run: Option<usize> = None;
    let mut open: Vec<usize> = Vec::new();
    for (&w, &d) in words.iter().zip(durations) {
        out[w].total_fixation_count += 1;
        out[w].total_fixation_duration_ms += d;
        // Moving past an open word closes its go-past window.
        open.retain(|&o| o >= w);
        for &o in &open {
            *out[o].go_past_time_ms.as_mut().unwrap() += d;
        }
        let fresh = out[w].first_fixation_duration_ms.is_none() && !out[w].skipped_first_pass;
        if fresh && rightmost.is_none_or(|r| r <= w) {
            out[w].first_fixation_duration_ms = Some(d);
            out[w].gaze_duration_ms = Some(d);
            out[w].go_past_time_ms = Some(d);
            out[w].single_fixation_duration_ms = Some(d);
            open.push(w);
            in_run = Some(w);
        } else if in_run == Some(w) {
            *out[w].gaze_duration_ms.as_mut().unwrap() += d;
            out[w].single_fixation_duration_ms = None;
        } else {
            in_run = None;
            if fresh {
                out[w].skipped_first_pass = true;
            }
        }
        rightmost = Some(rightmost.map_or(w, |r| r.max(w)));
    }
    for o in out.iter_mut() {
        if o.first_fixation_duration_ms.is_none() {
            o.skipped_first_pass = true;
        }
    }
    out
}

/// Word sequences with durations, and the word count.
pub fn sequences() -> impl Strategy<Value = (Vec<usize>, Vec<i64>, usize)> {
    (1usize..12).prop_flat_map(|n| {
        prop::collection::vec((0..n, 40i64..600), 0..40).prop_map(move |v| {
            let (w, d) = v.into_iter().unzip();
            (w, d, n)
        })
    })
}

/// Fixations scattered over the SYN1 page.
pub fn syn1_fixations() -> impl Strategy<Value = Vec<Fixation>> {
    prop::collection::vec((60.0..840.0f64, 40.0..360.0f64, 40i64..600), 0..60).prop_map(|v| {
        let mut t = 0;
        v.into_iter()
            .enumerate()
            .map(|(i, (x, y, d))| {
                let f = Fixation::new(i, t, t + d, x, y);
                t += d + 20;
                f
            })
            .collect()
    })
}
