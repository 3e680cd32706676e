//! Line assignment: map each cleaned fixation to a text line.

mod algorithms;
mod dtw;
mod external;
mod saccades;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asc::Fixation;
use crate::stimulus::Stimulus;

pub use dtw::{dtw, DtwResult};
pub use external::{apply_external_assigner, ExternalRequest, ExternalResponse};
pub use saccades::{realign_saccades, RealignedSaccade};

/// The classical algorithms in vote-precedence order.
pub const CLASSICAL_METHODS: [&str; 11] = [
    "attach", "slice", "cluster", "regress", "merge", "segment", "split", "stretch", "chain", "compare", "warp",
];

pub const WOC_LABEL: &str = "wisdom_of_crowds";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssignError {
    #[error("unknown line assignment method {0:?}")]
    UnknownMethod(String),
    #[error("{method} failed: {reason}")]
    AlgorithmFailure { method: String, reason: String },
    #[error("assignments have different lengths")]
    LengthMismatch,
    #[error("external assigner {0:?} timed out or was unreachable")]
    ExternalTimeout(String),
    #[error("external assigner returned invalid output: {0}")]
    InvalidExternalOutput(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineAssignment {
    pub algorithm: String,
    pub line_idx: Vec<usize>,
    pub corrected_y: Vec<f64>,
}

impl LineAssignment {
    pub fn from_lines(algorithm: &str, line_idx: Vec<usize>, stimulus: &Stimulus) -> Self {
        let corrected_y = line_idx.iter().map(|&l| stimulus.line_centers_y[l]).collect();
        Self { algorithm: algorithm.to_string(), line_idx, corrected_y }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalAssignerHandle {
    /// `http://` or `https://` URL, otherwise a command line run with the
    /// request on stdin.
    pub locator: String,
    #[serde(default = "default_external_timeout")]
    pub timeout_ms: u64,
}

fn default_external_timeout() -> u64 {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssignmentParams {
    pub chain_x_max: f64,
    pub chain_y_max: f64,
    pub compare_sweep_px: f64,
    pub compare_n_nearest: usize,
    pub merge_slope_max: f64,
    /// Vertical jump that starts a new sequence before merging.
    pub merge_y_max: f64,
    /// RMS fit error allowed for a constrained merge.
    pub merge_error_max: f64,
    pub regress_k_bounds: [f64; 2],
    pub regress_o_bounds: [f64; 2],
    pub regress_s_bounds: [f64; 2],
    pub stretch_scale_bounds: [f64; 2],
    pub stretch_offset_bounds: [f64; 2],
    /// Pixels; unset means half the line spacing.
    pub slice_run_y_max: Option<f64>,
    pub slice_run_x_max: f64,
    /// Pixels; unset means half the line spacing.
    pub slice_same_line_max: Option<f64>,
    /// Pixels; unset means 1.4 line spacings.
    pub slice_adjacent_line_max: Option<f64>,
    pub woc_members: Vec<String>,
    pub external: BTreeMap<String, ExternalAssignerHandle>,
}

impl Default for AssignmentParams {
    fn default() -> Self {
        Self {
            chain_x_max: 192.0,
            chain_y_max: 32.0,
            compare_sweep_px: 512.0,
            compare_n_nearest: 3,
            merge_slope_max: 0.1,
            merge_y_max: 32.0,
            merge_error_max: 20.0,
            regress_k_bounds: [-0.1, 0.1],
            regress_o_bounds: [-50.0, 50.0],
            regress_s_bounds: [1.0, 20.0],
            stretch_scale_bounds: [0.9, 1.1],
            stretch_offset_bounds: [-50.0, 50.0],
            slice_run_y_max: None,
            slice_run_x_max: 192.0,
            slice_same_line_max: None,
            slice_adjacent_line_max: None,
            woc_members: CLASSICAL_METHODS.iter().map(|s| s.to_string()).collect(),
            external: BTreeMap::new(),
        }
    }
}

impl AssignmentParams {
    /// Returns the offending field name and a reason.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        for (name, b) in [
            ("regress_k_bounds", self.regress_k_bounds),
            ("regress_o_bounds", self.regress_o_bounds),
            ("regress_s_bounds", self.regress_s_bounds),
            ("stretch_scale_bounds", self.stretch_scale_bounds),
            ("stretch_offset_bounds", self.stretch_offset_bounds),
        ] {
            if b[0].partial_cmp(&b[1]).is_none_or(|o| o.is_gt()) {
                return Err((name, format!("lower bound {} exceeds upper bound {}", b[0], b[1])));
            }
        }
        if self.regress_s_bounds[0] <= 0.0 {
            return Err(("regress_s_bounds", "deviation must be positive".into()));
        }
        if self.compare_n_nearest == 0 {
            return Err(("compare_n_nearest", "must be at least 1".into()));
        }
        if self.woc_members.is_empty() {
            return Err(("woc_members", "must name at least one method".into()));
        }
        for m in &self.woc_members {
            if !self.is_member_label(m) {
                return Err(("woc_members", format!("unknown method {m:?}")));
            }
        }
        for (label, h) in &self.external {
            if h.locator.trim().is_empty() {
                return Err(("external", format!("{label}: empty locator")));
            }
            if CLASSICAL_METHODS.contains(&label.as_str()) || label == WOC_LABEL {
                return Err(("external", format!("{label}: label collides with a built-in method")));
            }
        }
        Ok(())
    }

    fn is_member_label(&self, label: &str) -> bool {
        CLASSICAL_METHODS.contains(&label) || self.external.contains_key(label)
    }

    /// True when `label` can be passed to [`assign`].
    pub fn is_known_method(&self, label: &str) -> bool {
        label == WOC_LABEL || self.is_member_label(label)
    }
}

/// Run one method. `wisdom_of_crowds` runs every configured member and votes.
pub fn assign(
    method: &str,
    fixations: &[Fixation],
    stimulus: &Stimulus,
    params: &AssignmentParams,
) -> Result<LineAssignment, AssignError> {
    if method == WOC_LABEL {
        let members = params
            .woc_members
            .iter()
            .map(|m| assign(m, fixations, stimulus, params))
            .collect::<Result<Vec<_>, _>>()?;
        return wisdom_of_crowds(&members, stimulus);
    }
    if !params.is_member_label(method) {
        return Err(AssignError::UnknownMethod(method.to_string()));
    }
    if let Some(handle) = params.external.get(method) {
        let mut a = apply_external_assigner(handle, fixations, stimulus)?;
        a.algorithm = method.to_string();
        return Ok(a);
    }
    if stimulus.line_count() <= 1 || fixations.is_empty() {
        return Ok(LineAssignment::from_lines(method, vec![0; fixations.len()], stimulus));
    }
    let xs: Vec<f64> = fixations.iter().map(|f| f.x).collect();
    let ys: Vec<f64> = fixations.iter().map(|f| f.y).collect();
    let lines = algorithms::run(method, &xs, &ys, stimulus, params);
    if let Some(bad) = lines.iter().find(|&&l| l >= stimulus.line_count()) {
        return Err(AssignError::AlgorithmFailure { method: method.into(), reason: format!("line index {bad} out of range") });
    }
    Ok(LineAssignment::from_lines(method, lines, stimulus))
}

fn precedence(label: &str) -> (usize, &str) {
    match CLASSICAL_METHODS.iter().position(|m| *m == label) {
        Some(p) => (p, ""),
        None => (CLASSICAL_METHODS.len(), label),
    }
}

/// Per-fixation majority vote. A tied vote goes to the line chosen by the
/// highest-precedence member among the tied lines.
pub fn wisdom_of_crowds(members: &[LineAssignment], stimulus: &Stimulus) -> Result<LineAssignment, AssignError> {
    let first = members.first().ok_or(AssignError::LengthMismatch)?;
    let n = first.line_idx.len();
    if members.iter().any(|m| m.line_idx.len() != n) {
        return Err(AssignError::LengthMismatch);
    }
    let mut ordered: Vec<&LineAssignment> = members.iter().collect();
    ordered.sort_by(|a, b| precedence(&a.algorithm).cmp(&precedence(&b.algorithm)));
    let lines = (0..n)
        .map(|i| {
            let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
            for m in &ordered {
                *votes.entry(m.line_idx[i]).or_default() += 1;
            }
            let top = *votes.values().max().expect("at least one member");
            ordered
                .iter()
                .map(|m| m.line_idx[i])
                .find(|l| votes[l] == top)
                .expect("a member voted for the top line")
        })
        .collect();
    Ok(LineAssignment::from_lines(WOC_LABEL, lines, stimulus))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YCorrection {
    pub algorithm: String,
    /// corrected_y − y per fixation.
    pub values: Vec<f64>,
    pub mean: Option<f64>,
    pub mean_abs: Option<f64>,
}

pub fn y_correction(assignment: &LineAssignment, fixations: &[Fixation]) -> Result<YCorrection, AssignError> {
    if assignment.corrected_y.len() != fixations.len() {
        return Err(AssignError::LengthMismatch);
    }
    let values: Vec<f64> = assignment.corrected_y.iter().zip(fixations).map(|(c, f)| c - f.y).collect();
    let abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    Ok(YCorrection {
        algorithm: assignment.algorithm.clone(),
        mean: crate::util::mean(&values),
        mean_abs: crate::util::mean(&abs),
        values,
    })
}
