use serde::{Deserialize, Serialize};

use super::LineAssignment;
use crate::asc::{Fixation, Saccade};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealignedSaccade {
    pub saccade: Saccade,
    /// Cleaned-fixation indices on either side.
    pub from_fixation: usize,
    pub to_fixation: usize,
    pub from_line: usize,
    pub to_line: usize,
    pub y_start_snapped: f64,
    pub y_end_snapped: f64,
}

/// Keep the saccades that connect consecutive surviving fixations.
///
/// A saccade is kept when it is the only saccade lying wholly inside the
/// gap `[prev.end, next.start]` between two consecutive cleaned fixations.
/// Two or more saccades in one gap mean a fixation between them was
/// removed, so none of them describes the movement between the survivors.
pub fn realign_saccades(saccades: &[Saccade], fixations: &[Fixation], assignment: &LineAssignment) -> Vec<RealignedSaccade> {
    let mut out = Vec::new();
    for (i, pair) in fixations.windows(2).enumerate() {
        let (prev, next) = (&pair[0], &pair[1]);
        let mut inside = saccades.iter().filter(|s| s.start_ms >= prev.end_ms && s.end_ms <= next.start_ms);
        let (Some(s), None) = (inside.next(), inside.next()) else { continue };
        out.push(RealignedSaccade {
            saccade: s.clone(),
            from_fixation: i,
            to_fixation: i + 1,
            from_line: assignment.line_idx[i],
            to_line: assignment.line_idx[i + 1],
            y_start_snapped: assignment.corrected_y[i],
            y_end_snapped: assignment.corrected_y[i + 1],
        });
    }
    out
}
