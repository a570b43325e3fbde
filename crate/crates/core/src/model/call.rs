use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::canonical::canonicalize_value;

/// A named function invocation. On the wire: `{"name": .., "arguments": {..}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    #[serde(default)]
    pub arguments: BTreeMap<String, Value>,
}

impl ToolCall {
    pub fn new(name: impl Into<String>) -> Self {
        ToolCall {
            name: name.into(),
            arguments: BTreeMap::new(),
        }
    }

    pub fn arg(mut self, key: impl Into<String>, value: Value) -> Self {
        self.arguments.insert(key.into(), value);
        self
    }

    pub fn keys(&self) -> BTreeSet<&str> {
        self.arguments.keys().map(String::as_str).collect()
    }

    /// The call with every argument value canonicalized.
    pub fn canonical(&self) -> ToolCall {
        ToolCall {
            name: self.name.clone(),
            arguments: self
                .arguments
                .iter()
                .map(|(k, v)| (k.clone(), canonicalize_value(v)))
                .collect(),
        }
    }

    /// Compact JSON of the canonical call; equal keys mean AST-equal calls.
    pub fn canonical_key(&self) -> String {
        serde_json::to_string(&self.canonical()).expect("calls always serialize")
    }
}

/// Parses the interior of a call block: a JSON list of call objects.
///
/// Duplicate calls stay distinct entries. A missing `arguments` field is read
/// as no arguments.
pub fn parse_tool_calls(call_block: &str) -> Result<Vec<ToolCall>> {
    let value: Value = serde_json::from_str(call_block.trim())
        .map_err(|e| Error::MalformedCalls(e.to_string()))?;
    let Value::Array(items) = value else {
        return Err(Error::MalformedCalls("call block is not a list".into()));
    };
    items
        .into_iter()
        .enumerate()
        .map(|(i, item)| {
            let Value::Object(mut obj) = item else {
                return Err(Error::MalformedCalls(format!("entry {i} is not an object")));
            };
            let name = match obj.remove("name") {
                Some(Value::String(s)) if !s.trim().is_empty() => s,
                _ => return Err(Error::MalformedCalls(format!("entry {i} has no name"))),
            };
            let arguments = match obj.remove("arguments") {
                None => BTreeMap::new(),
                Some(Value::Object(args)) => args.into_iter().collect(),
                Some(_) => {
                    return Err(Error::MalformedCalls(format!(
                        "entry {i} has non-object arguments"
                    )))
                }
            };
            Ok(ToolCall { name, arguments })
        })
        .collect()
}

pub fn serialize_calls(calls: &[ToolCall]) -> String {
    serde_json::to_string(calls).expect("calls always serialize")
}

/// Multiset equality of canonical calls (order-insensitive AST match).
pub fn calls_equivalent(a: &[ToolCall], b: &[ToolCall]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut ka: Vec<String> = a.iter().map(ToolCall::canonical_key).collect();
    let mut kb: Vec<String> = b.iter().map(ToolCall::canonical_key).collect();
    ka.sort();
    kb.sort();
    ka == kb
}
