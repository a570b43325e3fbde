//! Tool schemas: the contract every argument is checked against.

use std::collections::{BTreeMap, BTreeSet};

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::canonical::canonicalize_value;

/// JSON-level kind of a parameter or literal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    String,
    Integer,
    Number,
    Boolean,
    Array,
    Object,
}

impl ParamKind {
    /// Kind of a literal. Integral numbers report `Integer`; `null` has no kind.
    pub fn of(value: &Value) -> Option<ParamKind> {
        match value {
            Value::Null => None,
            Value::Bool(_) => Some(ParamKind::Boolean),
            Value::Number(n) => {
                let integral = n.is_i64()
                    || n.is_u64()
                    || n.as_f64().is_some_and(|f| f.is_finite() && f.fract() == 0.0);
                Some(if integral {
                    ParamKind::Integer
                } else {
                    ParamKind::Number
                })
            }
            Value::String(_) => Some(ParamKind::String),
            Value::Array(_) => Some(ParamKind::Array),
            Value::Object(_) => Some(ParamKind::Object),
        }
    }

    /// Whether a literal conforms to this kind. `number` accepts integral values;
    /// `integer` accepts any number with zero fractional part.
    pub fn admits(self, value: &Value) -> bool {
        match (self, ParamKind::of(value)) {
            (_, None) => false,
            (ParamKind::Number, Some(ParamKind::Integer)) => true,
            (expected, Some(actual)) => expected == actual,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ParamKind::String => "string",
            ParamKind::Integer => "integer",
            ParamKind::Number => "number",
            ParamKind::Boolean => "boolean",
            ParamKind::Array => "array",
            ParamKind::Object => "object",
        }
    }
}

/// A restriction on admissible values beyond the kind.
///
/// Serialized externally tagged: `{"enum": [..]}`, `{"range": [lo, hi]}`,
/// `{"pattern": "^..$"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    Enum(Vec<Value>),
    Range(f64, f64),
    Pattern(String),
}

impl Constraint {
    pub fn is_satisfied_by(&self, value: &Value) -> bool {
        match self {
            Constraint::Enum(members) => {
                let v = canonicalize_value(value);
                members.iter().any(|m| canonicalize_value(m) == v)
            }
            Constraint::Range(lo, hi) => value
                .as_f64()
                .is_some_and(|x| *lo <= x && x <= *hi),
            Constraint::Pattern(pattern) => match (value.as_str(), Regex::new(pattern)) {
                (Some(s), Ok(re)) => re.is_match(s.trim()),
                _ => false,
            },
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        match self {
            Constraint::Enum(members) if members.is_empty() => Err("empty enum".into()),
            Constraint::Range(lo, hi) if !(lo.is_finite() && hi.is_finite() && lo <= hi) => {
                Err(format!("bad range [{lo}, {hi}]"))
            }
            Constraint::Pattern(p) => Regex::new(p).map(|_| ()).map_err(|e| e.to_string()),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    #[serde(default)]
    pub required: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<Constraint>,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, kind: ParamKind) -> Self {
        ParamSpec {
            name: name.into(),
            kind,
            required: false,
            constraints: Vec::new(),
        }
    }

    pub fn required(mut self) -> Self {
        self.required = true;
        self
    }

    pub fn with(mut self, constraint: Constraint) -> Self {
        self.constraints.push(constraint);
        self
    }

    pub fn constraints_hold(&self, value: &Value) -> bool {
        self.constraints.iter().all(|c| c.is_satisfied_by(value))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub function_name: String,
    #[serde(default)]
    pub params: Vec<ParamSpec>,
}

impl ToolSchema {
    pub fn new(function_name: impl Into<String>, params: Vec<ParamSpec>) -> Self {
        ToolSchema {
            function_name: function_name.into(),
            params,
        }
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Checks the structural invariants: non-empty names, unique parameter
    /// names, well-formed constraints.
    pub fn check(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidSchema {
            schema: self.function_name.clone(),
            reason,
        };
        if self.function_name.trim().is_empty() {
            return Err(fail("empty function name".into()));
        }
        let mut seen = BTreeSet::new();
        for p in &self.params {
            if p.name.is_empty() {
                return Err(fail("empty parameter name".into()));
            }
            if !seen.insert(p.name.as_str()) {
                return Err(fail(format!("duplicate parameter `{}`", p.name)));
            }
            for c in &p.constraints {
                c.check().map_err(|r| fail(format!("`{}`: {r}", p.name)))?;
            }
        }
        Ok(())
    }
}

/// Schemas keyed by function name. Serialized as a plain list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SchemaSet(BTreeMap<String, ToolSchema>);

impl Serialize for SchemaSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.0.values())
    }
}

impl<'de> Deserialize<'de> for SchemaSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let list = Vec::<ToolSchema>::deserialize(d)?;
        SchemaSet::new(list).map_err(serde::de::Error::custom)
    }
}

impl SchemaSet {
    pub fn new(schemas: impl IntoIterator<Item = ToolSchema>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for s in schemas {
            s.check()?;
            if map.contains_key(&s.function_name) {
                return Err(Error::InvalidSchema {
                    schema: s.function_name.clone(),
                    reason: "declared twice".into(),
                });
            }
            map.insert(s.function_name.clone(), s);
        }
        Ok(SchemaSet(map))
    }

    pub fn get(&self, name: &str) -> Option<&ToolSchema> {
        self.0.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&ToolSchema> {
        self.get(name)
            .ok_or_else(|| Error::MissingSchema(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &ToolSchema> {
        self.0.values()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_vec(&self) -> Vec<ToolSchema> {
        self.0.values().cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn kinds() {
        assert_eq!(ParamKind::of(&json!(1)), Some(ParamKind::Integer));
        assert_eq!(ParamKind::of(&json!(1.0)), Some(ParamKind::Integer));
        assert_eq!(ParamKind::of(&json!(1.5)), Some(ParamKind::Number));
        assert_eq!(ParamKind::of(&json!(null)), None);
        assert!(ParamKind::Number.admits(&json!(3)));
        assert!(!ParamKind::Integer.admits(&json!(3.5)));
        assert!(!ParamKind::Integer.admits(&json!("1")));
        assert!(!ParamKind::String.admits(&json!(null)));
    }

    #[test]
    fn constraint_json_shape() {
        let c: Constraint = serde_json::from_value(json!({"range": [0, 23]})).unwrap();
        assert_eq!(c, Constraint::Range(0.0, 23.0));
        let c: Constraint = serde_json::from_value(json!({"enum": ["a", "b"]})).unwrap();
        assert!(c.is_satisfied_by(&json!(" a ")));
        assert!(!c.is_satisfied_by(&json!("c")));
        let c = Constraint::Pattern("^[A-Z]{3}$".into());
        assert!(c.is_satisfied_by(&json!("EUR")));
        assert!(!c.is_satisfied_by(&json!("euro")));
        assert!(!c.is_satisfied_by(&json!(3)));
    }

    #[test]
    fn rejects_bad_schemas() {
        let dup = ToolSchema::new(
            "f",
            vec![
                ParamSpec::new("x", ParamKind::String),
                ParamSpec::new("x", ParamKind::Integer),
            ],
        );
        assert!(dup.check().is_err());
        let range = ToolSchema::new(
            "f",
            vec![ParamSpec::new("x", ParamKind::Integer).with(Constraint::Range(5.0, 1.0))],
        );
        assert!(range.check().is_err());
        let empty_enum = ToolSchema::new(
            "f",
            vec![ParamSpec::new("x", ParamKind::String).with(Constraint::Enum(vec![]))],
        );
        assert!(empty_enum.check().is_err());
        assert!(ToolSchema::new(" ", vec![]).check().is_err());
        let twice = SchemaSet::new(vec![ToolSchema::new("f", vec![]), ToolSchema::new("f", vec![])]);
        assert!(twice.is_err());
    }
}
