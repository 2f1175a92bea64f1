//! On-disk model store.
//!
//! Layout under the store directory:
//! `models/<skill>.json` holds the version list of one skill and
//! `sessions/<skill>.json` its refinement sessions.
//!
//! Each skill has a writer mutex. Readers clone an `Arc` snapshot and never
//! wait on a writer.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tmk_core::bundle::{from_documents, to_documents, ModelDocuments};
use tmk_core::{validate_schema, TmkModel, ValidationReport};
use tmk_pipeline::RefinementSession;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VersionLabel {
    Raw,
    Refined,
    Working,
}

impl VersionLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Raw => "raw",
            Self::Refined => "refined",
            Self::Working => "working",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Version {
    pub id: usize,
    pub label: VersionLabel,
    pub created_at: DateTime<Utc>,
    pub model: TmkModel,
    pub validation: ValidationReport,
}

impl Version {
    pub fn new(id: usize, label: VersionLabel, model: TmkModel) -> Self {
        let validation = validate_schema(&model);
        Self {
            id,
            label,
            created_at: Utc::now(),
            model,
            validation,
        }
    }

    pub fn token(&self) -> String {
        format!("v{}", self.id)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct StoredVersion {
    id: usize,
    label: VersionLabel,
    created_at: DateTime<Utc>,
    documents: ModelDocuments,
    validation: ValidationReport,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct StoredSkill {
    skill_name: String,
    versions: Vec<StoredVersion>,
}

/// Immutable view of one skill.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillState {
    pub skill_name: String,
    /// Append-only; never empty.
    pub versions: Vec<Version>,
    pub sessions: Vec<RefinementSession>,
}

impl SkillState {
    pub fn head(&self) -> &Version {
        self.versions.last().expect("skills hold at least one version")
    }

    /// `latest`/`head`, a label (newest version carrying it) or a numeric id.
    pub fn resolve(&self, selector: Option<&str>) -> Option<&Version> {
        match selector.map(str::trim) {
            None | Some("") | Some("latest") | Some("head") => Some(self.head()),
            Some(s) => {
                if let Ok(id) = s.trim_start_matches('v').parse::<usize>() {
                    return self.versions.iter().find(|v| v.id == id);
                }
                self.versions.iter().rev().find(|v| v.label.as_str() == s)
            }
        }
    }

    pub fn open_session(&self) -> Option<&RefinementSession> {
        self.sessions.last().filter(|s| !s.is_ended())
    }
}

pub struct SkillSlot {
    write: Mutex<()>,
    state: RwLock<Arc<SkillState>>,
}

impl SkillSlot {
    fn new(state: SkillState) -> Self {
        Self {
            write: Mutex::new(()),
            state: RwLock::new(Arc::new(state)),
        }
    }

    pub fn snapshot(&self) -> Arc<SkillState> {
        self.state.read().expect("snapshot lock").clone()
    }

    /// Serializes writers for this skill.
    pub fn lock(&self) -> MutexGuard<'_, ()> {
        self.write.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn publish(&self, state: SkillState) -> Arc<SkillState> {
        let state = Arc::new(state);
        *self.state.write().expect("snapshot lock") = state.clone();
        state
    }
}

pub fn valid_skill_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 128
        && !name.starts_with('.')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c))
}

pub struct Store {
    dir: PathBuf,
    skills: RwLock<BTreeMap<String, Arc<SkillSlot>>>,
}

fn write_atomic(path: &Path, value: &impl Serialize) -> io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec_pretty(value).map_err(io::Error::other)?)?;
    fs::rename(&tmp, path)
}

fn invalid_data(path: &Path, e: impl std::fmt::Display) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display()))
}

impl Store {
    /// Opens `dir`, creating it if needed, and loads every stored skill.
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(dir.join("models"))?;
        fs::create_dir_all(dir.join("sessions"))?;
        let mut skills = BTreeMap::new();
        for entry in fs::read_dir(dir.join("models"))? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let stored: StoredSkill = serde_json::from_slice(&fs::read(&path)?).map_err(|e| invalid_data(&path, e))?;
            let mut versions = Vec::with_capacity(stored.versions.len());
            for v in stored.versions {
                versions.push(Version {
                    id: v.id,
                    label: v.label,
                    created_at: v.created_at,
                    model: from_documents(v.documents).map_err(|e| invalid_data(&path, e))?,
                    validation: v.validation,
                });
            }
            if versions.is_empty() {
                continue;
            }
            let sessions_path = dir.join("sessions").join(format!("{}.json", stored.skill_name));
            let sessions = match fs::read(&sessions_path) {
                Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| invalid_data(&sessions_path, e))?,
                Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
                Err(e) => return Err(e),
            };
            let state = SkillState {
                skill_name: stored.skill_name.clone(),
                versions,
                sessions,
            };
            skills.insert(stored.skill_name, Arc::new(SkillSlot::new(state)));
        }
        Ok(Self {
            dir,
            skills: RwLock::new(skills),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn get(&self, skill: &str) -> Option<Arc<SkillSlot>> {
        self.skills.read().expect("skill map").get(skill).cloned()
    }

    pub fn snapshots(&self) -> Vec<Arc<SkillState>> {
        let slots: Vec<_> = self.skills.read().expect("skill map").values().cloned().collect();
        slots.iter().map(|s| s.snapshot()).collect()
    }

    fn persist_models(&self, state: &SkillState) -> io::Result<()> {
        let stored = StoredSkill {
            skill_name: state.skill_name.clone(),
            versions: state
                .versions
                .iter()
                .map(|v| StoredVersion {
                    id: v.id,
                    label: v.label,
                    created_at: v.created_at,
                    documents: to_documents(&v.model),
                    validation: v.validation.clone(),
                })
                .collect(),
        };
        write_atomic(
            &self.dir.join("models").join(format!("{}.json", state.skill_name)),
            &stored,
        )
    }

    fn persist_sessions(&self, state: &SkillState) -> io::Result<()> {
        write_atomic(
            &self.dir.join("sessions").join(format!("{}.json", state.skill_name)),
            &state.sessions,
        )
    }

    /// Appends a version, creating the skill on first upload.
    pub fn append_version(&self, model: TmkModel, label: VersionLabel) -> io::Result<Arc<SkillState>> {
        let skill = model.skill_name.clone();
        let slot = {
            let mut map = self.skills.write().expect("skill map");
            if let Some(slot) = map.get(&skill) {
                slot.clone()
            } else {
                let state = SkillState {
                    skill_name: skill.clone(),
                    versions: vec![Version::new(0, label, model)],
                    sessions: Vec::new(),
                };
                self.persist_models(&state)?;
                let slot = Arc::new(SkillSlot::new(state));
                map.insert(skill, slot.clone());
                return Ok(slot.snapshot());
            }
        };
        let _guard = slot.lock();
        self.commit_version(&slot, Version::new(slot.snapshot().head().id + 1, label, model))
    }

    /// Appends `version` to a skill whose writer lock the caller holds.
    pub fn commit_version(&self, slot: &SkillSlot, version: Version) -> io::Result<Arc<SkillState>> {
        let mut next = (*slot.snapshot()).clone();
        next.versions.push(version);
        self.persist_models(&next)?;
        Ok(slot.publish(next))
    }

    /// Replaces the session list of a skill whose writer lock the caller holds.
    pub fn commit_sessions(&self, slot: &SkillSlot, sessions: Vec<RefinementSession>) -> io::Result<Arc<SkillState>> {
        let mut next = (*slot.snapshot()).clone();
        next.sessions = sessions;
        self.persist_sessions(&next)?;
        Ok(slot.publish(next))
    }
}
