use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::call::ToolCall;
use crate::model::schema::ToolSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Finding {
    Ok,
    UnknownKey,
    TypeMismatch,
    ConstraintViolation,
    MissingRequired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyFinding {
    pub key: String,
    pub finding: Finding,
}

/// One finding per argument key (in key order), then one per missing
/// required parameter (in schema order).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<KeyFinding>,
}

impl ValidationReport {
    pub fn all_ok(&self) -> bool {
        self.findings.iter().all(|f| f.finding == Finding::Ok)
    }

    pub fn finding(&self, key: &str) -> Option<Finding> {
        self.findings.iter().find(|f| f.key == key).map(|f| f.finding)
    }
}

pub fn validate_call(call: &ToolCall, schema: &ToolSchema) -> Result<ValidationReport> {
    if call.name != schema.function_name {
        return Err(Error::SchemaNameMismatch {
            call: call.name.clone(),
            schema: schema.function_name.clone(),
        });
    }
    let mut findings: Vec<KeyFinding> = call
        .arguments
        .iter()
        .map(|(key, value)| {
            let finding = match schema.param(key) {
                None => Finding::UnknownKey,
                Some(p) if !p.kind.admits(value) => Finding::TypeMismatch,
                Some(p) if !p.constraints_hold(value) => Finding::ConstraintViolation,
                Some(_) => Finding::Ok,
            };
            KeyFinding {
                key: key.clone(),
                finding,
            }
        })
        .collect();
    findings.extend(
        schema
            .params
            .iter()
            .filter(|p| p.required && !call.arguments.contains_key(&p.name))
            .map(|p| KeyFinding {
                key: p.name.clone(),
                finding: Finding::MissingRequired,
            }),
    );
    Ok(ValidationReport { findings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::schema::{Constraint, ParamKind, ParamSpec};
    use serde_json::json;

    fn g() -> ToolSchema {
        ToolSchema::new("g", vec![ParamSpec::new("x", ParamKind::Integer).required()])
    }

    #[test]
    fn exact_conformance() {
        let r = validate_call(&ToolCall::new("g").arg("x", json!(1)), &g()).unwrap();
        assert_eq!(r.findings, vec![KeyFinding { key: "x".into(), finding: Finding::Ok }]);
        assert!(r.all_ok());
    }

    #[test]
    fn string_for_integer_is_type_mismatch() {
        let r = validate_call(&ToolCall::new("g").arg("x", json!("1")), &g()).unwrap();
        assert_eq!(r.finding("x"), Some(Finding::TypeMismatch));
    }

    #[test]
    fn absent_required() {
        let r = validate_call(&ToolCall::new("g"), &g()).unwrap();
        assert_eq!(r.findings.len(), 1);
        assert_eq!(r.finding("x"), Some(Finding::MissingRequired));
    }

    #[test]
    fn unknown_key_and_constraint() {
        let schema = ToolSchema::new(
            "g",
            vec![ParamSpec::new("x", ParamKind::Integer)
                .required()
                .with(Constraint::Range(0.0, 10.0))],
        );
        let r = validate_call(
            &ToolCall::new("g").arg("x", json!(11)).arg("y", json!(true)),
            &schema,
        )
        .unwrap();
        assert_eq!(r.finding("x"), Some(Finding::ConstraintViolation));
        assert_eq!(r.finding("y"), Some(Finding::UnknownKey));
        assert_eq!(r.findings.len(), 2);
    }

    #[test]
    fn name_mismatch_is_an_error() {
        assert!(validate_call(&ToolCall::new("h"), &g()).is_err());
    }
}
