//! Depth-first enumeration of a component's leaf fields.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bundle::ComponentKind;
use crate::model::TmkModel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldText {
    /// Dotted path with bracketed indices, e.g. `organizer.transitions[0].dataCondition`.
    pub path: String,
    pub text: String,
}

/// Leaf fields of any serializable component in canonical key order.
pub fn canonical_flatten<T: Serialize>(component: &T) -> Vec<FieldText> {
    let value = serde_json::to_value(component).unwrap_or(Value::Null);
    flatten_value(&value)
}

pub fn flatten_value(value: &Value) -> Vec<FieldText> {
    let mut out = Vec::new();
    walk(value, String::new(), &mut out);
    out
}

fn walk(value: &Value, path: String, out: &mut Vec<FieldText>) {
    match value {
        Value::Null => {}
        Value::Bool(b) => out.push(FieldText {
            path,
            text: b.to_string(),
        }),
        Value::Number(n) => out.push(FieldText {
            path,
            text: n.to_string(),
        }),
        Value::String(s) => out.push(FieldText { path, text: s.clone() }),
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                walk(item, format!("{path}[{i}]"), out);
            }
        }
        Value::Object(map) => {
            for (key, item) in map {
                let child = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{path}.{key}")
                };
                walk(item, child, out);
            }
        }
    }
}

/// All leaf texts joined by single spaces, in path order.
pub fn overall_text(fields: &[FieldText]) -> String {
    fields
        .iter()
        .map(|f| f.text.as_str())
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// First named segment of a path, skipping leading indices:
/// `[1].organizer.states[0].name` -> `organizer`.
pub fn top_field(path: &str) -> &str {
    let mut rest = path;
    while let Some(stripped) = rest.strip_prefix('[') {
        rest = stripped.split_once(']').map_or("", |(_, tail)| tail);
        rest = rest.strip_prefix('.').unwrap_or(rest);
    }
    let end = rest.find(['.', '[']).unwrap_or(rest.len());
    &rest[..end]
}

/// The JSON value compared for one component of a model. The Method
/// component is always the array of methods.
pub fn component_value(model: &TmkModel, kind: ComponentKind) -> Value {
    let value = match kind {
        ComponentKind::Task => serde_json::to_value(&model.task),
        ComponentKind::Method => serde_json::to_value(&model.methods),
        ComponentKind::Knowledge => serde_json::to_value(&model.knowledge),
    };
    value.unwrap_or(Value::Null)
}
