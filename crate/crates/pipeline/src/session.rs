//! Refinement sessions and modeling-time reduction.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const DEFAULT_MANUAL_BASELINE_HOURS: f64 = 7.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("manual baseline must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error("refinement hours must be non-negative, got {0}")]
    NegativeRefinementHours(f64),
    #[error("session already ended")]
    AlreadyEnded,
    #[error("session end {ended} precedes start {started}")]
    EndBeforeStart {
        started: DateTime<Utc>,
        ended: DateTime<Utc>,
    },
    #[error("{0}")]
    Io(String),
}

/// `(manual - refinement) / manual`.
pub fn refinement_reduction(manual_hours: f64, refinement_hours: f64) -> Result<f64, SessionError> {
    if manual_hours.is_nan() || manual_hours <= 0.0 {
        return Err(SessionError::NonPositiveBaseline(manual_hours));
    }
    if refinement_hours.is_nan() || refinement_hours < 0.0 {
        return Err(SessionError::NegativeRefinementHours(refinement_hours));
    }
    Ok((manual_hours - refinement_hours) / manual_hours)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionEvent {
    pub timestamp: DateTime<Utc>,
    pub field_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub before: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RefinementSession {
    pub skill_name: String,
    pub started_at: DateTime<Utc>,
    #[serde(default)]
    pub ended_at: Option<DateTime<Utc>>,
    pub manual_baseline_hours: f64,
    /// Self-reported hours; overrides the wall-clock span when present.
    #[serde(default)]
    pub logged_hours: Option<f64>,
    #[serde(default)]
    pub events: Vec<SessionEvent>,
    #[serde(default)]
    pub raw_model_ref: Option<String>,
    #[serde(default)]
    pub refined_model_ref: Option<String>,
}

impl RefinementSession {
    pub fn start(skill_name: &str, manual_baseline_hours: f64, now: DateTime<Utc>) -> Result<Self, SessionError> {
        if manual_baseline_hours.is_nan() || manual_baseline_hours <= 0.0 {
            return Err(SessionError::NonPositiveBaseline(manual_baseline_hours));
        }
        Ok(Self {
            skill_name: skill_name.to_string(),
            started_at: now,
            ended_at: None,
            manual_baseline_hours,
            logged_hours: None,
            events: Vec::new(),
            raw_model_ref: None,
            refined_model_ref: None,
        })
    }

    pub fn record(&mut self, event: SessionEvent) -> Result<(), SessionError> {
        if self.ended_at.is_some() {
            return Err(SessionError::AlreadyEnded);
        }
        self.events.push(event);
        Ok(())
    }

    pub fn end(&mut self, now: DateTime<Utc>, logged_hours: Option<f64>) -> Result<(), SessionError> {
        if self.ended_at.is_some() {
            return Err(SessionError::AlreadyEnded);
        }
        if now < self.started_at {
            return Err(SessionError::EndBeforeStart {
                started: self.started_at,
                ended: now,
            });
        }
        if let Some(h) = logged_hours {
            if h.is_nan() || h < 0.0 {
                return Err(SessionError::NegativeRefinementHours(h));
            }
        }
        self.ended_at = Some(now);
        self.logged_hours = logged_hours.or(self.logged_hours);
        Ok(())
    }

    pub fn is_ended(&self) -> bool {
        self.ended_at.is_some()
    }

    /// Logged hours if given, else the span from start to end (or to `now`
    /// for an open session).
    pub fn refinement_hours(&self, now: DateTime<Utc>) -> f64 {
        if let Some(h) = self.logged_hours {
            return h;
        }
        let end = self.ended_at.unwrap_or(now);
        (end - self.started_at).num_milliseconds().max(0) as f64 / 3_600_000.0
    }

    pub fn reduction(&self, now: DateTime<Utc>) -> Result<f64, SessionError> {
        refinement_reduction(self.manual_baseline_hours, self.refinement_hours(now))
    }

    pub fn path_in(dir: &Path, skill: &str) -> PathBuf {
        dir.join(format!("{skill}.json"))
    }

    /// Writes `<dir>/<skill>.json` via a temporary file.
    pub fn save(&self, dir: &Path) -> Result<(), SessionError> {
        let io_err = |e: io::Error| SessionError::Io(e.to_string());
        fs::create_dir_all(dir).map_err(io_err)?;
        let path = Self::path_in(dir, &self.skill_name);
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(self).expect("sessions serialize");
        fs::write(&tmp, text).map_err(io_err)?;
        fs::rename(&tmp, &path).map_err(io_err)
    }

    pub fn load(dir: &Path, skill: &str) -> Result<Option<Self>, SessionError> {
        let path = Self::path_in(dir, skill);
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| SessionError::Io(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(SessionError::Io(e.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn reduction_examples() {
        assert!((refinement_reduction(7.0, 1.9).unwrap() - 0.7286).abs() < 1e-4);
        assert_eq!(refinement_reduction(7.0, 7.0).unwrap(), 0.0);
        assert!((refinement_reduction(6.0, 2.0).unwrap() - 0.6667).abs() < 1e-4);
        assert!(matches!(
            refinement_reduction(0.0, 1.0),
            Err(SessionError::NonPositiveBaseline(_))
        ));
        assert!(refinement_reduction(7.0, 9.0).unwrap() < 0.0);
    }

    #[test]
    fn wall_clock_and_override() {
        let t0 = Utc.with_ymd_and_hms(2026, 1, 5, 9, 0, 0).unwrap();
        let mut s = RefinementSession::start("sortlist", 7.0, t0).unwrap();
        s.end(t0 + chrono::Duration::minutes(90), None).unwrap();
        assert_eq!(s.refinement_hours(t0), 1.5);
        assert!(matches!(s.end(t0, None), Err(SessionError::AlreadyEnded)));

        let mut s = RefinementSession::start("sortlist", 7.0, t0).unwrap();
        s.end(t0 + chrono::Duration::hours(5), Some(1.9)).unwrap();
        assert_eq!(s.refinement_hours(t0), 1.9);
        assert!((s.reduction(t0).unwrap() - 0.7286).abs() < 1e-4);
    }
}
