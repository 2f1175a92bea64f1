//! Layered configuration: flags, then `TMK_*` environment variables, then the
//! config file, then built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use tmk_core::metrics::DEFAULT_ALIGNMENT_THRESHOLD;
use tmk_pipeline::{DEFAULT_MANUAL_BASELINE_HOURS, DEFAULT_MAX_REPAIRS};

use crate::CliError;

pub const DEFAULT_CONFIG_FILE: &str = "tmk.toml";
pub const DEFAULT_OUTPUT_DIR: &str = "tmk-out";

/// Keys accepted in the config file, one `key = value` per line.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model_dir: Option<PathBuf>,
    pub transcript: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub alignment_threshold: Option<f64>,
    pub max_repairs: Option<usize>,
    pub client_endpoint: Option<String>,
    pub client_key: Option<String>,
    pub strict_eval: Option<bool>,
    pub manual_baseline_hours: Option<f64>,
}

impl FileConfig {
    /// Reads `path`. A missing default file is an empty config; a missing
    /// explicit file is an error.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let (path, explicit) = match path {
            Some(p) => (p.to_path_buf(), true),
            None => (PathBuf::from(DEFAULT_CONFIG_FILE), false),
        };
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if !explicit && e.kind() == std::io::ErrorKind::NotFound => return Ok(Self::default()),
            Err(e) => return Err(CliError::usage(format!("{}: {e}", path.display()))),
        };
        toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }
}

/// Values already merged from flags and environment; `None` means neither
/// was given.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub alignment_threshold: Option<f64>,
    pub max_repairs: Option<usize>,
    pub client_endpoint: Option<String>,
    pub client_key: Option<String>,
    pub strict_eval: bool,
    pub manual_baseline_hours: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub model_dir: Option<PathBuf>,
    pub transcript_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub alignment_threshold: f64,
    pub max_repairs: usize,
    pub client_endpoint: Option<String>,
    pub client_key: Option<String>,
    pub strict_eval: bool,
    pub manual_baseline_hours: f64,
}

impl CliConfig {
    pub fn resolve(over: Overrides, file: FileConfig) -> Result<Self, CliError> {
        let config = Self {
            model_dir: file.model_dir,
            transcript_path: file.transcript,
            output_dir: over
                .output_dir
                .or(file.output_dir)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
            alignment_threshold: over
                .alignment_threshold
                .or(file.alignment_threshold)
                .unwrap_or(DEFAULT_ALIGNMENT_THRESHOLD),
            max_repairs: over.max_repairs.or(file.max_repairs).unwrap_or(DEFAULT_MAX_REPAIRS),
            client_endpoint: over.client_endpoint.or(file.client_endpoint),
            client_key: over.client_key.or(file.client_key),
            strict_eval: over.strict_eval || file.strict_eval.unwrap_or(false),
            manual_baseline_hours: over
                .manual_baseline_hours
                .or(file.manual_baseline_hours)
                .unwrap_or(DEFAULT_MANUAL_BASELINE_HOURS),
        };
        if config.alignment_threshold.is_nan() || config.alignment_threshold <= 0.0 || config.alignment_threshold > 1.0
        {
            return Err(CliError::usage(format!(
                "alignment threshold must lie in (0, 1], got {}",
                config.alignment_threshold
            )));
        }
        if config.manual_baseline_hours.is_nan() || config.manual_baseline_hours <= 0.0 {
            return Err(CliError::usage(format!(
                "manual baseline hours must be positive, got {}",
                config.manual_baseline_hours
            )));
        }
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let file: FileConfig =
            toml::from_str("output_dir = \"from-file\"\nmax_repairs = 5\nalignment_threshold = 0.6").unwrap();
        let over = Overrides {
            output_dir: Some("from-flag".into()),
            ..Default::default()
        };
        let c = CliConfig::resolve(over, file).unwrap();
        assert_eq!(c.output_dir, PathBuf::from("from-flag"));
        assert_eq!(c.max_repairs, 5);
        assert_eq!(c.alignment_threshold, 0.6);
        assert_eq!(c.manual_baseline_hours, 7.0);

        let c = CliConfig::resolve(Overrides::default(), FileConfig::default()).unwrap();
        assert_eq!(c.output_dir, PathBuf::from(DEFAULT_OUTPUT_DIR));
        assert_eq!(c.max_repairs, 2);
    }

    #[test]
    fn threshold_bounds() {
        for bad in [0.0, -0.1, 1.5] {
            let over = Overrides {
                alignment_threshold: Some(bad),
                ..Default::default()
            };
            assert!(CliConfig::resolve(over, FileConfig::default()).is_err());
        }
        assert!(toml::from_str::<FileConfig>("colour = 1").is_err());
    }
}
