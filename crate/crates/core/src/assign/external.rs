use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{AssignError, ExternalAssignerHandle, LineAssignment};
use crate::asc::Fixation;
use crate::stimulus::Stimulus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalFixation {
    pub x: f64,
    pub y: f64,
    pub start_ms: i64,
    pub duration_ms: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalLine {
    pub center_y: f64,
    pub x_min: f64,
    pub x_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalChar {
    pub char: char,
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalRequest {
    pub fixations: Vec<ExternalFixation>,
    pub lines: Vec<ExternalLine>,
    pub chars: Vec<ExternalChar>,
}

impl ExternalRequest {
    pub fn new(fixations: &[Fixation], stimulus: &Stimulus) -> Self {
        Self {
            fixations: fixations
                .iter()
                .map(|f| ExternalFixation { x: f.x, y: f.y, start_ms: f.start_ms, duration_ms: f.duration_ms })
                .collect(),
            lines: stimulus
                .lines
                .iter()
                .zip(&stimulus.line_centers_y)
                .map(|(l, &c)| ExternalLine { center_y: c, x_min: l.x_min, x_max: l.x_max })
                .collect(),
            chars: stimulus
                .chars
                .iter()
                .map(|c| ExternalChar { char: c.ch, x_min: c.x_min, y_min: c.y_min, x_max: c.x_max, y_max: c.y_max })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalResponse {
    pub line_idx: Vec<i64>,
}

fn is_http(locator: &str) -> bool {
    locator.starts_with("http://") || locator.starts_with("https://")
}

fn call_http(handle: &ExternalAssignerHandle, body: &str) -> Result<String, AssignError> {
    let timeout = Duration::from_millis(handle.timeout_ms);
    let agent = ureq::AgentBuilder::new().timeout(timeout).build();
    let timed_out = || AssignError::ExternalTimeout(handle.locator.clone());
    let resp = agent
        .post(&handle.locator)
        .set("Content-Type", "application/json")
        .send_string(body)
        .map_err(|e| match e {
            ureq::Error::Status(code, _) => AssignError::InvalidExternalOutput(format!("HTTP status {code}")),
            ureq::Error::Transport(_) => timed_out(),
        })?;
    resp.into_string().map_err(|_| timed_out())
}

fn call_process(handle: &ExternalAssignerHandle, body: &str) -> Result<String, AssignError> {
    let timed_out = || AssignError::ExternalTimeout(handle.locator.clone());
    let mut parts = handle.locator.split_whitespace();
    let program = parts.next().ok_or_else(timed_out)?;
    let mut child = Command::new(program)
        .args(parts)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|_| timed_out())?;

    let mut stdin = child.stdin.take().expect("piped stdin");
    let payload = body.to_owned();
    let writer = thread::spawn(move || {
        let _ = stdin.write_all(payload.as_bytes());
    });
    let mut stdout = child.stdout.take().expect("piped stdout");
    let reader = thread::spawn(move || {
        let mut out = String::new();
        let _ = stdout.read_to_string(&mut out);
        out
    });

    let deadline = Instant::now() + Duration::from_millis(handle.timeout_ms);
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
            _ => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(timed_out());
            }
        }
    };
    let _ = writer.join();
    let out = reader.join().unwrap_or_default();
    if !status.success() {
        return Err(AssignError::InvalidExternalOutput(format!("process exited with {status}")));
    }
    Ok(out)
}

/// Send fixations and the stimulus layout to an external assigner and
/// validate the per-fixation line indices it returns.
pub fn apply_external_assigner(
    handle: &ExternalAssignerHandle,
    fixations: &[Fixation],
    stimulus: &Stimulus,
) -> Result<LineAssignment, AssignError> {
    let body = serde_json::to_string(&ExternalRequest::new(fixations, stimulus)).expect("request serializes");
    let raw = if is_http(&handle.locator) { call_http(handle, &body)? } else { call_process(handle, &body)? };
    let resp: ExternalResponse =
        serde_json::from_str(&raw).map_err(|e| AssignError::InvalidExternalOutput(e.to_string()))?;
    if resp.line_idx.len() != fixations.len() {
        return Err(AssignError::InvalidExternalOutput(format!(
            "expected {} line indices, got {}",
            fixations.len(),
            resp.line_idx.len()
        )));
    }
    let m = stimulus.line_count() as i64;
    let lines = resp
        .line_idx
        .iter()
        .map(|&l| {
            if (0..m).contains(&l) {
                Ok(l as usize)
            } else {
                Err(AssignError::InvalidExternalOutput(format!("line index {l} outside [0, {m})")))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LineAssignment::from_lines(&handle.locator, lines, stimulus))
}
