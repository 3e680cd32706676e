//! Fixation cleaning: blink-adjacent, long, off-text and short fixations.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::asc::Fixation;
use crate::stimulus::Stimulus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShortPolicy {
    Merge,
    Discard,
    MergeThenDiscard,
    Keep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleaningConfig {
    pub discard_blink_adjacent: bool,
    pub max_duration_ms: u32,
    pub outside_x_threshold_charwidths: f64,
    pub outside_y_threshold_lineheights: f64,
    pub short_policy: ShortPolicy,
    pub min_duration_ms: u32,
    pub merge_distance_charwidths: f64,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            discard_blink_adjacent: true,
            max_duration_ms: 800,
            outside_x_threshold_charwidths: 2.0,
            outside_y_threshold_lineheights: 1.0,
            short_policy: ShortPolicy::MergeThenDiscard,
            min_duration_ms: 80,
            merge_distance_charwidths: 1.0,
        }
    }
}

impl CleaningConfig {
    /// Returns the offending field name and a reason.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.min_duration_ms >= self.max_duration_ms {
            return Err((
                "min_duration_ms",
                format!("must be below max_duration_ms ({} >= {})", self.min_duration_ms, self.max_duration_ms),
            ));
        }
        for (name, v) in [
            ("outside_x_threshold_charwidths", self.outside_x_threshold_charwidths),
            ("outside_y_threshold_lineheights", self.outside_y_threshold_lineheights),
            ("merge_distance_charwidths", self.merge_distance_charwidths),
        ] {
            if v.is_nan() || v < 0.0 {
                return Err((name, format!("must be a non-negative number, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Disposition {
    Kept,
    DiscardedBlink,
    DiscardedLong,
    DiscardedOutside,
    DiscardedShort,
    /// Absorbed by the fixation with this original index.
    MergedInto(usize),
}

impl Disposition {
    pub fn kind(self) -> &'static str {
        match self {
            Disposition::Kept => "Kept",
            Disposition::DiscardedBlink => "DiscardedBlink",
            Disposition::DiscardedLong => "DiscardedLong",
            Disposition::DiscardedOutside => "DiscardedOutside",
            Disposition::DiscardedShort => "DiscardedShort",
            Disposition::MergedInto(_) => "MergedInto",
        }
    }
}

impl fmt::Display for Disposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Disposition::MergedInto(t) => write!(f, "MergedInto({t})"),
            other => f.write_str(other.kind()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub source: usize,
    pub target: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    /// One entry per input fixation, by original index.
    pub dispositions: Vec<Disposition>,
    pub counts: BTreeMap<String, usize>,
    pub merges: Vec<MergeRecord>,
    /// Original index of each output fixation.
    pub survivors: Vec<usize>,
}

impl CleaningReport {
    fn from_parts(dispositions: Vec<Disposition>, merges: Vec<MergeRecord>, survivors: Vec<usize>) -> Self {
        let mut counts: BTreeMap<String, usize> = [
            "Kept",
            "DiscardedBlink",
            "DiscardedLong",
            "DiscardedOutside",
            "DiscardedShort",
            "MergedInto",
        ]
        .into_iter()
        .map(|k| (k.to_string(), 0))
        .collect();
        for d in &dispositions {
            *counts.entry(d.kind().to_string()).or_default() += 1;
        }
        Self { dispositions, counts, merges, survivors }
    }

    pub fn count(&self, kind: &str) -> usize {
        self.counts.get(kind).copied().unwrap_or(0)
    }
}

/// True when the fixation lies outside every line's hull expanded by
/// `x_thr_cw` character widths and `y_thr_lh` line heights.
pub fn is_outside_stimulus(fixation: &Fixation, stimulus: &Stimulus, x_thr_cw: f64, y_thr_lh: f64) -> bool {
    let spacing = stimulus.line_spacing();
    let dx = x_thr_cw * stimulus.char_width;
    !stimulus.lines.iter().zip(&stimulus.line_heights).any(|(line, &h)| {
        let dy = y_thr_lh * if h > 0.0 { h } else { spacing };
        fixation.x >= line.x_min - dx
            && fixation.x <= line.x_max + dx
            && fixation.y >= line.y_min - dy
            && fixation.y <= line.y_max + dy
    })
}

fn merged(short: &Fixation, target: &Fixation) -> Fixation {
    let duration_ms = short.duration_ms + target.duration_ms;
    let start_ms = short.start_ms.min(target.start_ms);
    Fixation {
        start_ms,
        end_ms: start_ms + duration_ms,
        duration_ms,
        x: (short.x + target.x) / 2.0,
        y: (short.y + target.y) / 2.0,
        blink_before: short.blink_before || target.blink_before,
        blink_after: short.blink_after || target.blink_after,
        ..target.clone()
    }
}

/// Merge short fixations into eligible neighbours, repeating until a full
/// pass changes nothing, then apply the policy to whatever is still short.
///
/// A neighbour is eligible when it carries no blink flag, is not itself
/// short, lies within `merge_distance_charwidths` character widths, and the
/// merged fixation would still pass the long and off-text checks. The last
/// condition keeps cleaning idempotent. Items carry their original index.
pub fn resolve_short_fixations(
    fixations: Vec<(usize, Fixation)>,
    stimulus: &Stimulus,
    config: &CleaningConfig,
) -> (Vec<(usize, Fixation)>, Vec<MergeRecord>, Vec<usize>) {
    let min = i64::from(config.min_duration_ms);
    let max = i64::from(config.max_duration_ms);
    let max_dist = config.merge_distance_charwidths * stimulus.char_width;
    let mut items = fixations;
    let mut merges = Vec::new();

    let mut changed = matches!(config.short_policy, ShortPolicy::Merge | ShortPolicy::MergeThenDiscard);
    while changed {
        changed = false;
        let mut i = 0;
        while i < items.len() {
            let short = &items[i].1;
            if short.duration_ms >= min {
                i += 1;
                continue;
            }
            let eligible = |j: usize| {
                let n = &items[j].1;
                if n.blink_before || n.blink_after || n.duration_ms < min {
                    return None;
                }
                if (n.x - short.x).hypot(n.y - short.y) > max_dist {
                    return None;
                }
                let m = merged(short, n);
                let ok = m.duration_ms <= max
                    && !is_outside_stimulus(
                        &m,
                        stimulus,
                        config.outside_x_threshold_charwidths,
                        config.outside_y_threshold_lineheights,
                    );
                ok.then_some((j, n.duration_ms))
            };
            let prev = if i > 0 { eligible(i - 1) } else { None };
            let next = if i + 1 < items.len() { eligible(i + 1) } else { None };
            let target = match (prev, next) {
                (Some(p), Some(n)) => Some(if n.1 > p.1 { n.0 } else { p.0 }),
                (p, n) => p.or(n).map(|t| t.0),
            };
            match target {
                Some(t) => {
                    let m = merged(&items[i].1, &items[t].1);
                    merges.push(MergeRecord { source: items[i].0, target: items[t].0 });
                    items[t].1 = m;
                    items.remove(i);
                    changed = true;
                }
                None => i += 1,
            }
        }
    }

    let mut discarded = Vec::new();
    if matches!(config.short_policy, ShortPolicy::Discard | ShortPolicy::MergeThenDiscard) {
        items.retain(|(orig, f)| {
            let keep = f.duration_ms >= min;
            if !keep {
                discarded.push(*orig);
            }
            keep
        });
    }
    (items, merges, discarded)
}

/// Run the four cleaning stages in order: blink-adjacent, long, off-text,
/// short. Survivors keep their relative order and are re-indexed from 0.
pub fn clean_fixations(fixations: &[Fixation], stimulus: &Stimulus, config: &CleaningConfig) -> (Vec<Fixation>, CleaningReport) {
    let mut dispositions = vec![Disposition::Kept; fixations.len()];
    let mut items: Vec<(usize, Fixation)> = Vec::with_capacity(fixations.len());
    for (i, f) in fixations.iter().enumerate() {
        let d = if config.discard_blink_adjacent && (f.blink_before || f.blink_after) {
            Disposition::DiscardedBlink
        } else if f.duration_ms > i64::from(config.max_duration_ms) {
            Disposition::DiscardedLong
        } else if is_outside_stimulus(f, stimulus, config.outside_x_threshold_charwidths, config.outside_y_threshold_lineheights) {
            Disposition::DiscardedOutside
        } else {
            items.push((i, f.clone()));
            continue;
        };
        dispositions[i] = d;
    }

    let (items, merges, discarded) = resolve_short_fixations(items, stimulus, config);
    for m in &merges {
        dispositions[m.source] = Disposition::MergedInto(m.target);
    }
    for i in discarded {
        dispositions[i] = Disposition::DiscardedShort;
    }
    let survivors = items.iter().map(|(i, _)| *i).collect();
    let cleaned = items
        .into_iter()
        .enumerate()
        .map(|(k, (_, mut f))| {
            f.index = k;
            f
        })
        .collect();
    (cleaned, CleaningReport::from_parts(dispositions, merges, survivors))
}
