//! Reading and writing model bundles.
//!
//! A bundle is three JSON documents. On disk they live in one directory as
//! `<skill>.task.json`, `<skill>.method.json` and `<skill>.knowledge.json`.
//! The method document holds an array of methods; a bare object is accepted
//! as a one-element array. The task document may carry `skillName` and
//! `sourceRefs` next to the root task's own fields.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::model::{KnowledgeSpec, MethodSpec, SourceRefs, TaskSpec, TmkModel};

const SKILL_NAME_KEY: &str = "skillName";
const SOURCE_REFS_KEY: &str = "sourceRefs";

const TASK_KEYS: &[&str] = &[
    "name",
    "description",
    "inputParameters",
    "outputParameters",
    "given",
    "makes",
    "means",
    "mechanismReference",
    "subtasks",
];
const METHOD_KEYS: &[&str] = &[
    "name",
    "description",
    "inputParameters",
    "outputParameters",
    "requires",
    "provides",
    "organizer",
];
const KNOWLEDGE_KEYS: &[&str] = &["concepts", "instances", "relations", "Concept", "Instance", "Relation"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Task,
    Method,
    Knowledge,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 3] = [Self::Task, Self::Method, Self::Knowledge];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Task => "task",
            Self::Method => "method",
            Self::Knowledge => "knowledge",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Self::Task => "Task",
            Self::Method => "Method",
            Self::Knowledge => "Knowledge",
        }
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("{component} document: {message} at line {line}, column {column} (near `{token}`)")]
    Syntax {
        component: ComponentKind,
        line: usize,
        column: usize,
        token: String,
        message: String,
    },
    #[error("{component} document: {message}")]
    MissingComponent { component: ComponentKind, message: String },
    #[error("{component} document: {message}")]
    Type { component: ComponentKind, message: String },
}

impl ParseError {
    pub fn component(&self) -> ComponentKind {
        match self {
            Self::Syntax { component, .. }
            | Self::MissingComponent { component, .. }
            | Self::Type { component, .. } => *component,
        }
    }
}

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{dir}: {message}")]
    Layout { dir: PathBuf, message: String },
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// The three canonical JSON texts of a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleTexts {
    pub task: String,
    pub method: String,
    pub knowledge: String,
}

/// The three documents of a model as JSON values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocuments {
    pub task: Value,
    pub method: Value,
    pub knowledge: Value,
}

impl ModelDocuments {
    pub fn get(&self, kind: ComponentKind) -> &Value {
        match kind {
            ComponentKind::Task => &self.task,
            ComponentKind::Method => &self.method,
            ComponentKind::Knowledge => &self.knowledge,
        }
    }

    pub fn get_mut(&mut self, kind: ComponentKind) -> &mut Value {
        match kind {
            ComponentKind::Task => &mut self.task,
            ComponentKind::Method => &mut self.method,
            ComponentKind::Knowledge => &mut self.knowledge,
        }
    }
}

fn syntax_error(component: ComponentKind, text: &str, err: &serde_json::Error) -> ParseError {
    let (line, column) = (err.line(), err.column());
    ParseError::Syntax {
        component,
        line,
        column,
        token: token_at(text, line, column),
        message: strip_position(&err.to_string()),
    }
}

/// serde_json appends " at line L column C"; the structured error carries both.
fn strip_position(message: &str) -> String {
    match message.rfind(" at line ") {
        Some(idx) => message[..idx].to_string(),
        None => message.to_string(),
    }
}

fn token_at(text: &str, line: usize, column: usize) -> String {
    let Some(row) = text.lines().nth(line.saturating_sub(1)) else {
        return "<eof>".into();
    };
    let chars: Vec<char> = row.chars().collect();
    if chars.is_empty() || column == 0 {
        return "<eof>".into();
    }
    let mut start = (column - 1).min(chars.len() - 1);
    while start > 0 && !chars[start - 1].is_whitespace() && !chars[start].is_whitespace() {
        start -= 1;
        if column - 1 - start >= 8 {
            break;
        }
    }
    let token: String = chars[start..]
        .iter()
        .take_while(|c| !c.is_whitespace())
        .take(16)
        .collect();
    if token.is_empty() {
        "<eof>".into()
    } else {
        token
    }
}

fn parse_text(component: ComponentKind, text: &str) -> Result<Value, ParseError> {
    serde_json::from_str(text).map_err(|e| syntax_error(component, text, &e))
}

fn require_shape(component: ComponentKind, obj: &Map<String, Value>, keys: &[&str]) -> Result<(), ParseError> {
    if keys.iter().any(|k| obj.contains_key(*k)) {
        Ok(())
    } else {
        Err(ParseError::MissingComponent {
            component,
            message: format!("object has none of the {component} fields ({})", keys.join(", ")),
        })
    }
}

fn from_value<T: serde::de::DeserializeOwned>(component: ComponentKind, value: Value) -> Result<T, ParseError> {
    serde_json::from_value(value).map_err(|e| ParseError::Type {
        component,
        message: e.to_string(),
    })
}

/// Parse a model from its three JSON texts.
pub fn parse_model_bundle(task: &str, method: &str, knowledge: &str) -> Result<TmkModel, ParseError> {
    let docs = ModelDocuments {
        task: parse_text(ComponentKind::Task, task)?,
        method: parse_text(ComponentKind::Method, method)?,
        knowledge: parse_text(ComponentKind::Knowledge, knowledge)?,
    };
    from_documents(docs)
}

/// Build a model from already-parsed documents.
pub fn from_documents(docs: ModelDocuments) -> Result<TmkModel, ParseError> {
    let ModelDocuments {
        task,
        method,
        knowledge,
    } = docs;

    let Value::Object(mut task_obj) = task else {
        return Err(ParseError::MissingComponent {
            component: ComponentKind::Task,
            message: "root is not a JSON object".into(),
        });
    };
    let skill_name = match task_obj.shift_remove(SKILL_NAME_KEY) {
        None => None,
        Some(Value::String(s)) => Some(s),
        Some(other) => {
            return Err(ParseError::Type {
                component: ComponentKind::Task,
                message: format!("skillName must be a string, found {other}"),
            })
        }
    };
    let source_refs = match task_obj.shift_remove(SOURCE_REFS_KEY) {
        None | Some(Value::Null) => None,
        Some(v) => Some(from_value::<SourceRefs>(ComponentKind::Task, v)?),
    };
    require_shape(ComponentKind::Task, &task_obj, TASK_KEYS)?;
    let task: TaskSpec = from_value(ComponentKind::Task, Value::Object(task_obj))?;

    let method_values = match method {
        Value::Array(items) => items,
        obj @ Value::Object(_) => vec![obj],
        _ => {
            return Err(ParseError::MissingComponent {
                component: ComponentKind::Method,
                message: "root is neither a method object nor an array of methods".into(),
            })
        }
    };
    if method_values.is_empty() {
        return Err(ParseError::MissingComponent {
            component: ComponentKind::Method,
            message: "method array is empty".into(),
        });
    }
    let mut methods = Vec::with_capacity(method_values.len());
    for (i, value) in method_values.into_iter().enumerate() {
        let Value::Object(obj) = &value else {
            return Err(ParseError::MissingComponent {
                component: ComponentKind::Method,
                message: format!("element {i} is not a JSON object"),
            });
        };
        require_shape(ComponentKind::Method, obj, METHOD_KEYS)?;
        methods.push(from_value::<MethodSpec>(ComponentKind::Method, value)?);
    }

    let Value::Object(knowledge_obj) = knowledge else {
        return Err(ParseError::MissingComponent {
            component: ComponentKind::Knowledge,
            message: "root is not a JSON object".into(),
        });
    };
    require_shape(ComponentKind::Knowledge, &knowledge_obj, KNOWLEDGE_KEYS)?;
    let knowledge: KnowledgeSpec = from_value(ComponentKind::Knowledge, Value::Object(knowledge_obj))?;

    Ok(TmkModel {
        skill_name: skill_name.unwrap_or_else(|| task.name.clone()),
        task,
        methods,
        knowledge,
        source_refs,
    })
}

/// Canonical JSON documents for a model. Key order follows the schema field
/// order, with unrecognized keys after the known ones in lexicographic order.
pub fn to_documents(model: &TmkModel) -> ModelDocuments {
    let mut task = Map::new();
    task.insert(SKILL_NAME_KEY.into(), Value::String(model.skill_name.clone()));
    if let Value::Object(fields) = to_value(&model.task) {
        task.extend(fields);
    }
    if let Some(refs) = &model.source_refs {
        task.insert(SOURCE_REFS_KEY.into(), to_value(refs));
    }
    ModelDocuments {
        task: Value::Object(task),
        method: Value::Array(model.methods.iter().map(to_value).collect()),
        knowledge: to_value(&model.knowledge),
    }
}

fn to_value<T: Serialize>(value: &T) -> Value {
    // model types hold only strings, sequences and string-keyed maps
    serde_json::to_value(value).expect("model types serialize infallibly")
}

/// Serialize a model to its three canonical texts (pretty-printed, trailing newline).
pub fn serialize_model(model: &TmkModel) -> BundleTexts {
    let docs = to_documents(model);
    let render = |v: &Value| {
        let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize infallibly");
        s.push('\n');
        s
    };
    BundleTexts {
        task: render(&docs.task),
        method: render(&docs.method),
        knowledge: render(&docs.knowledge),
    }
}

pub fn bundle_file_names(skill: &str) -> [String; 3] {
    [
        format!("{skill}.task.json"),
        format!("{skill}.method.json"),
        format!("{skill}.knowledge.json"),
    ]
}

fn read(path: &Path) -> Result<String, BundleError> {
    fs::read_to_string(path).map_err(|source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Locate the skill prefix of the single `<skill>.task.json` in `dir`.
pub fn find_skill_in_dir(dir: &Path) -> Result<String, BundleError> {
    let entries = fs::read_dir(dir).map_err(|source| BundleError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut skills: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().map(str::to_owned))
        .filter_map(|name| name.strip_suffix(".task.json").map(str::to_owned))
        .collect();
    skills.sort();
    match skills.len() {
        1 => Ok(skills.remove(0)),
        0 => Err(BundleError::Layout {
            dir: dir.to_path_buf(),
            message: "no <skill>.task.json file found".into(),
        }),
        _ => Err(BundleError::Layout {
            dir: dir.to_path_buf(),
            message: format!("several task documents found: {}", skills.join(", ")),
        }),
    }
}

/// Load the bundle stored in `dir`. The file prefix names the skill unless
/// the task document carries its own `skillName`.
pub fn load_bundle_dir(dir: &Path) -> Result<TmkModel, BundleError> {
    let skill = find_skill_in_dir(dir)?;
    let [task, method, knowledge] = bundle_file_names(&skill).map(|f| dir.join(f));
    let task_text = read(&task)?;
    let mut model = parse_model_bundle(&task_text, &read(&method)?, &read(&knowledge)?)?;
    let has_own_name = serde_json::from_str::<Value>(&task_text)
        .ok()
        .and_then(|v| v.get(SKILL_NAME_KEY).cloned())
        .is_some();
    if !has_own_name {
        model.skill_name = skill;
    }
    Ok(model)
}

/// Write the canonical bundle files for `model` into `dir`, creating it if needed.
pub fn write_bundle_dir(model: &TmkModel, dir: &Path) -> Result<(), BundleError> {
    fs::create_dir_all(dir).map_err(|source| BundleError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let texts = serialize_model(model);
    let [task, method, knowledge] = bundle_file_names(&model.skill_name).map(|f| dir.join(f));
    for (path, text) in [(task, texts.task), (method, texts.method), (knowledge, texts.knowledge)] {
        fs::write(&path, text).map_err(|source| BundleError::Io { path, source })?;
    }
    Ok(())
}
