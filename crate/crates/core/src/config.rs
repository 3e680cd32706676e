//! The pipeline configuration file.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asc::AscParseConfig;
use crate::assign::{AssignmentParams, WOC_LABEL};
use crate::cleaning::CleaningConfig;
use crate::measures::MeasuresConfig;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid config at {key}: {reason}")]
pub struct InvalidConfig {
    pub key: String,
    pub reason: String,
}

impl InvalidConfig {
    fn new(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self { key: key.into(), reason: reason.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssignmentConfig {
    /// Methods to run, in output order. May include `wisdom_of_crowds`.
    pub methods: Vec<String>,
    /// Method whose assignment feeds the measures; the first method if unset.
    pub analysis_method: Option<String>,
    /// On failure, substitute attach's result and record a warning.
    pub fallback_to_attach: bool,
    pub params: AssignmentParams,
}

impl Default for AssignmentConfig {
    fn default() -> Self {
        Self { methods: vec!["slice".into()], analysis_method: None, fallback_to_attach: true, params: AssignmentParams::default() }
    }
}

impl AssignmentConfig {
    pub fn analysis_label(&self) -> &str {
        self.analysis_method.as_deref().or(self.methods.first().map(String::as_str)).unwrap_or("attach")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub separate_files_per_trial: bool,
    pub emit_plot_data: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub parse: AscParseConfig,
    pub cleaning: CleaningConfig,
    pub assignment: AssignmentConfig,
    pub measures: MeasuresConfig,
    pub output: OutputConfig,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            parse: AscParseConfig::default(),
            cleaning: CleaningConfig::default(),
            assignment: AssignmentConfig::default(),
            measures: MeasuresConfig::default(),
            output: OutputConfig::default(),
            workers: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), InvalidConfig> {
        if self.workers == 0 {
            return Err(InvalidConfig::new("workers", "must be at least 1"));
        }
        self.parse.validate().map_err(|e| InvalidConfig::new("parse", e.to_string()))?;
        self.cleaning.validate().map_err(|(k, r)| InvalidConfig::new(format!("cleaning.{k}"), r))?;
        self.measures.validate().map_err(|(k, r)| InvalidConfig::new(format!("measures.{k}"), r))?;
        let a = &self.assignment;
        a.params.validate().map_err(|(k, r)| InvalidConfig::new(format!("assignment.params.{k}"), r))?;
        if a.methods.is_empty() {
            return Err(InvalidConfig::new("assignment.methods", "at least one method is required"));
        }
        for (i, m) in a.methods.iter().enumerate() {
            if !a.params.is_known_method(m) {
                return Err(InvalidConfig::new(format!("assignment.methods[{i}]"), format!("unknown method {m:?}")));
            }
            if a.methods[..i].contains(m) {
                return Err(InvalidConfig::new(format!("assignment.methods[{i}]"), format!("duplicate method {m:?}")));
            }
        }
        if let Some(m) = &a.analysis_method {
            if !a.methods.contains(m) {
                return Err(InvalidConfig::new(
                    "assignment.analysis_method",
                    format!("{m:?} is not among the chosen methods"),
                ));
            }
        }
        if a.methods.iter().any(|m| m == WOC_LABEL) && a.params.woc_members.is_empty() {
            return Err(InvalidConfig::new("assignment.params.woc_members", "must not be empty"));
        }
        Ok(())
    }
}

/// Parse and validate a JSON config. Missing keys take their defaults;
/// unknown keys and out-of-range values are rejected with their path.
pub fn load_config(text: &str) -> Result<PipelineConfig, InvalidConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: PipelineConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let mut key = e.path().to_string();
        let reason = e.inner().to_string();
        if let Some(field) = reason.strip_prefix("unknown field `").and_then(|r| r.split('`').next()) {
            if !key.ends_with(field) {
                key = if key == "." { field.to_string() } else { format!("{key}.{field}") };
            }
        }
        InvalidConfig::new(key, reason)
    })?;
    config.validate()?;
    Ok(config)
}

pub fn save_config(config: &PipelineConfig) -> String {
    serde_json::to_string_pretty(config).expect("config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cleaning::ShortPolicy;

    #[test]
    fn default_round_trip() {
        let c = PipelineConfig::default();
        assert_eq!(load_config(&save_config(&c)).unwrap(), c);
    }

    #[test]
    fn negative_duration_rejected() {
        let e = load_config(r#"{"cleaning": {"max_duration_ms": -5}}"#).unwrap_err();
        assert_eq!(e.key, "cleaning.max_duration_ms");
    }

    #[test]
    fn missing_blocks_take_defaults() {
        let c = load_config(r#"{"workers": 3}"#).unwrap();
        assert_eq!((c.cleaning.min_duration_ms, c.cleaning.max_duration_ms, c.cleaning.merge_distance_charwidths), (80, 800, 1.0));
        assert_eq!(c.cleaning.short_policy, ShortPolicy::MergeThenDiscard);
        assert_eq!(c.workers, 3);
    }

    #[test]
    fn unknown_keys_are_named() {
        let e = load_config(r#"{"cleaning": {"max_duraton_ms": 5}}"#).unwrap_err();
        assert_eq!(e.key, "cleaning.max_duraton_ms");
        let e = load_config(r#"{"colour": 1}"#).unwrap_err();
        assert_eq!(e.key, "colour");
    }

    #[test]
    fn semantic_checks() {
        assert_eq!(load_config(r#"{"workers": 0}"#).unwrap_err().key, "workers");
        assert_eq!(load_config(r#"{"assignment": {"methods": []}}"#).unwrap_err().key, "assignment.methods");
        assert_eq!(load_config(r#"{"assignment": {"methods": ["attach", "dist"]}}"#).unwrap_err().key, "assignment.methods[1]");
        assert_eq!(
            load_config(r#"{"cleaning": {"min_duration_ms": 900}}"#).unwrap_err().key,
            "cleaning.min_duration_ms"
        );
        let ok = load_config(r#"{"assignment": {"methods": ["attach", "cluster", "wisdom_of_crowds"], "analysis_method": "cluster"}}"#);
        assert_eq!(ok.unwrap().assignment.analysis_label(), "cluster");
    }
}
