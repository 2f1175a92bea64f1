//! Field-level diff and patch between two versions of a model.
//!
//! Paths are JSON pointers into the three documents, rooted at `/task`,
//! `/method` or `/knowledge`. Array elements are addressed as `@Name` when
//! every element of both versions is an object with a distinct non-empty
//! `name`, and by index otherwise.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;
use tmk_core::bundle::{from_documents, to_documents, ComponentKind, ModelDocuments, ParseError};
use tmk_core::validate::pointer_segment;
use tmk_core::TmkModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffKind {
    Added,
    Removed,
    Modified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DiffEntry {
    pub kind: DiffKind,
    pub field_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub before: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<Value>,
    /// Position in the refined array, for additions to arrays.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffCounts {
    pub added: usize,
    pub removed: usize,
    pub modified: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModelDiff {
    pub skill_name: String,
    pub entries: Vec<DiffEntry>,
    /// Keyed by component: `task`, `method`, `knowledge`.
    pub summary: BTreeMap<String, DiffCounts>,
}

impl ModelDiff {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffError {
    #[error("skill `{left}` cannot be diffed against skill `{right}`")]
    SkillMismatch { left: String, right: String },
    #[error("path `{0}` does not resolve")]
    PathNotFound(String),
    #[error("patched model does not parse: {0}")]
    Parse(#[from] ParseError),
}

fn element_name(v: &Value) -> Option<&str> {
    v.as_object()?.get("name")?.as_str().filter(|n| !n.is_empty())
}

/// Element names, when every element has a distinct one.
fn names(items: &[Value]) -> Option<Vec<&str>> {
    let names: Vec<&str> = items.iter().map(element_name).collect::<Option<_>>()?;
    let distinct: HashSet<&str> = names.iter().copied().collect();
    (distinct.len() == names.len()).then_some(names)
}

fn keyed_segment(name: &str) -> String {
    pointer_segment(&format!("@{name}"))
}

struct Differ {
    entries: Vec<DiffEntry>,
}

impl Differ {
    fn push(
        &mut self,
        kind: DiffKind,
        path: String,
        before: Option<&Value>,
        after: Option<&Value>,
        index: Option<usize>,
    ) {
        self.entries.push(DiffEntry {
            kind,
            field_path: path,
            before: before.cloned(),
            after: after.cloned(),
            index,
        });
    }

    fn value(&mut self, path: String, a: &Value, b: &Value) {
        if a == b {
            return;
        }
        match (a, b) {
            (Value::Object(ma), Value::Object(mb)) => self.object(&path, ma, mb),
            (Value::Array(xa), Value::Array(xb)) => self.array(path, xa, xb),
            _ => self.push(DiffKind::Modified, path, Some(a), Some(b), None),
        }
    }

    fn object(&mut self, path: &str, ma: &Map<String, Value>, mb: &Map<String, Value>) {
        for (k, va) in ma {
            let child = format!("{path}/{}", pointer_segment(k));
            match mb.get(k) {
                Some(vb) => self.value(child, va, vb),
                None => self.push(DiffKind::Removed, child, Some(va), None, None),
            }
        }
        for (k, vb) in mb {
            if !ma.contains_key(k) {
                self.push(
                    DiffKind::Added,
                    format!("{path}/{}", pointer_segment(k)),
                    None,
                    Some(vb),
                    None,
                );
            }
        }
    }

    fn array(&mut self, path: String, xa: &[Value], xb: &[Value]) {
        if let (Some(na), Some(nb)) = (names(xa), names(xb)) {
            let in_b: HashSet<&str> = nb.iter().copied().collect();
            let in_a: HashSet<&str> = na.iter().copied().collect();
            let common_a: Vec<&str> = na.iter().copied().filter(|n| in_b.contains(n)).collect();
            let common_b: Vec<&str> = nb.iter().copied().filter(|n| in_a.contains(n)).collect();
            if common_a != common_b {
                // surviving elements were reordered: replace the whole array
                let (a, b) = (Value::Array(xa.to_vec()), Value::Array(xb.to_vec()));
                self.push(DiffKind::Modified, path, Some(&a), Some(&b), None);
                return;
            }
            for (name, va) in na.iter().zip(xa) {
                let child = format!("{path}/{}", keyed_segment(name));
                match nb.iter().position(|n| n == name) {
                    Some(j) => self.value(child, va, &xb[j]),
                    None => self.push(DiffKind::Removed, child, Some(va), None, None),
                }
            }
            for (j, (name, vb)) in nb.iter().zip(xb).enumerate() {
                if !in_a.contains(name) {
                    self.push(
                        DiffKind::Added,
                        format!("{path}/{}", keyed_segment(name)),
                        None,
                        Some(vb),
                        Some(j),
                    );
                }
            }
            return;
        }
        for (i, (va, vb)) in xa.iter().zip(xb).enumerate() {
            self.value(format!("{path}/{i}"), va, vb);
        }
        for (i, va) in xa.iter().enumerate().skip(xb.len()) {
            self.push(DiffKind::Removed, format!("{path}/{i}"), Some(va), None, None);
        }
        for (i, vb) in xb.iter().enumerate().skip(xa.len()) {
            self.push(DiffKind::Added, format!("{path}/{i}"), None, Some(vb), Some(i));
        }
    }
}

fn component_of(path: &str) -> &str {
    path.trim_start_matches('/').split('/').next().unwrap_or("")
}

pub fn diff_models(raw: &TmkModel, refined: &TmkModel) -> Result<ModelDiff, DiffError> {
    if raw.skill_name != refined.skill_name {
        return Err(DiffError::SkillMismatch {
            left: raw.skill_name.clone(),
            right: refined.skill_name.clone(),
        });
    }
    let (da, db) = (to_documents(raw), to_documents(refined));
    let mut differ = Differ { entries: Vec::new() };
    for kind in ComponentKind::ALL {
        differ.value(format!("/{}", kind.as_str()), da.get(kind), db.get(kind));
    }
    let mut summary: BTreeMap<String, DiffCounts> = ComponentKind::ALL
        .iter()
        .map(|k| (k.as_str().to_string(), DiffCounts::default()))
        .collect();
    for e in &differ.entries {
        let counts = summary.entry(component_of(&e.field_path).to_string()).or_default();
        match e.kind {
            DiffKind::Added => counts.added += 1,
            DiffKind::Removed => counts.removed += 1,
            DiffKind::Modified => counts.modified += 1,
        }
    }
    Ok(ModelDiff {
        skill_name: raw.skill_name.clone(),
        entries: differ.entries,
        summary,
    })
}

fn unescape(seg: &str) -> String {
    seg.replace("~1", "/").replace("~0", "~")
}

fn split_path(path: &str) -> Result<(ComponentKind, Vec<String>), DiffError> {
    let mut segs = path
        .strip_prefix('/')
        .ok_or_else(|| DiffError::PathNotFound(path.into()))?
        .split('/');
    let head = segs.next().unwrap_or("");
    let kind = ComponentKind::ALL
        .into_iter()
        .find(|k| k.as_str() == head)
        .ok_or_else(|| DiffError::PathNotFound(path.into()))?;
    Ok((kind, segs.map(unescape).collect()))
}

fn array_index(items: &[Value], seg: &str) -> Option<usize> {
    match seg.strip_prefix('@') {
        Some(name) => items.iter().position(|v| element_name(v) == Some(name)),
        None => seg.parse().ok().filter(|&i| i < items.len()),
    }
}

fn child_mut<'a>(v: &'a mut Value, seg: &str) -> Option<&'a mut Value> {
    match v {
        Value::Object(map) => map.get_mut(seg),
        Value::Array(items) => {
            let i = array_index(items, seg)?;
            items.get_mut(i)
        }
        _ => None,
    }
}

fn resolve<'a>(docs: &'a mut ModelDocuments, path: &str) -> Result<(&'a mut Value, Option<String>), DiffError> {
    let (kind, segs) = split_path(path)?;
    let Some((last, parents)) = segs.split_last() else {
        return Ok((docs.get_mut(kind), None));
    };
    let mut cur = docs.get_mut(kind);
    for seg in parents {
        cur = child_mut(cur, seg).ok_or_else(|| DiffError::PathNotFound(path.into()))?;
    }
    Ok((cur, Some(last.clone())))
}

fn apply_entry(docs: &mut ModelDocuments, e: &DiffEntry) -> Result<(), DiffError> {
    let missing = || DiffError::PathNotFound(e.field_path.clone());
    let (parent, last) = resolve(docs, &e.field_path)?;
    match (e.kind, last) {
        (DiffKind::Modified, None) => *parent = e.after.clone().ok_or_else(missing)?,
        (DiffKind::Modified, Some(seg)) => {
            *child_mut(parent, &seg).ok_or_else(missing)? = e.after.clone().ok_or_else(missing)?
        }
        (DiffKind::Removed, Some(seg)) => match parent {
            Value::Object(map) => {
                map.shift_remove(&seg).ok_or_else(missing)?;
            }
            Value::Array(items) => {
                let i = array_index(items, &seg).ok_or_else(missing)?;
                items.remove(i);
            }
            _ => return Err(missing()),
        },
        (DiffKind::Added, Some(seg)) => {
            let value = e.after.clone().ok_or_else(missing)?;
            match parent {
                Value::Object(map) => {
                    map.insert(seg, value);
                }
                Value::Array(items) => {
                    let i = e.index.or_else(|| seg.parse().ok()).ok_or_else(missing)?;
                    if i > items.len() {
                        return Err(missing());
                    }
                    items.insert(i, value);
                }
                _ => return Err(missing()),
            }
        }
        (_, None) => return Err(missing()),
    }
    Ok(())
}

/// Applies removals (last first), then modifications, then additions.
pub fn apply_diff(raw: &TmkModel, diff: &ModelDiff) -> Result<TmkModel, DiffError> {
    if raw.skill_name != diff.skill_name {
        return Err(DiffError::SkillMismatch {
            left: raw.skill_name.clone(),
            right: diff.skill_name.clone(),
        });
    }
    let mut docs = to_documents(raw);
    let of = |kind| diff.entries.iter().filter(move |e| e.kind == kind);
    for e in of(DiffKind::Removed).collect::<Vec<_>>().into_iter().rev() {
        apply_entry(&mut docs, e)?;
    }
    for e in of(DiffKind::Modified) {
        apply_entry(&mut docs, e)?;
    }
    for e in of(DiffKind::Added) {
        apply_entry(&mut docs, e)?;
    }
    Ok(from_documents(docs)?)
}
