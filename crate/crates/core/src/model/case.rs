use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::call::ToolCall;
use crate::model::schema::SchemaSet;
use crate::model::trajectory::{parse_trajectory, Trajectory};
use crate::model::validate::validate_call;
use crate::profiling::CaseProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
}

/// A recorded tool-use episode: query, response, reference target, outcome,
/// and (once profiled) its complexity and failure profile.
///
/// Serialized as one flat JSON record per line; see `docs/format.md`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CaseRecord", into = "CaseRecord")]
pub struct ExecutionCase {
    pub id: String,
    pub query: String,
    pub trajectory: Trajectory,
    pub reference_calls: Vec<ToolCall>,
    pub schemas: SchemaSet,
    pub outcome: Outcome,
    pub profile: Option<CaseProfile>,
}

impl ExecutionCase {
    pub fn hardness(&self) -> Result<f64> {
        self.profile
            .as_ref()
            .map(|p| p.hardness)
            .ok_or_else(|| Error::Unprofiled(self.id.clone()))
    }

    pub fn require_profile(&self) -> Result<&CaseProfile> {
        self.profile
            .as_ref()
            .ok_or_else(|| Error::Unprofiled(self.id.clone()))
    }

    /// Ingestion check: every reference call has a schema and conforms to it.
    pub fn check_reference(&self) -> Result<()> {
        for call in &self.reference_calls {
            let schema = self.schemas.require(&call.name)?;
            let report = validate_call(call, schema)?;
            if !report.all_ok() {
                return Err(Error::InvalidSchema {
                    schema: call.name.clone(),
                    reason: format!("reference call does not conform: {:?}", report.findings),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseRecord {
    id: String,
    query: String,
    raw_text: String,
    reference_calls: Vec<ToolCall>,
    schemas: SchemaSet,
    outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    profile: Option<CaseProfile>,
}

impl TryFrom<CaseRecord> for ExecutionCase {
    type Error = Error;

    fn try_from(r: CaseRecord) -> Result<Self> {
        let case = ExecutionCase {
            id: r.id,
            query: r.query,
            trajectory: parse_trajectory(&r.raw_text),
            reference_calls: r.reference_calls,
            schemas: r.schemas,
            outcome: r.outcome,
            profile: r.profile,
        };
        case.check_reference()?;
        Ok(case)
    }
}

impl From<ExecutionCase> for CaseRecord {
    fn from(c: ExecutionCase) -> Self {
        CaseRecord {
            id: c.id,
            query: c.query,
            raw_text: c.trajectory.raw_text,
            reference_calls: c.reference_calls,
            schemas: c.schemas,
            outcome: c.outcome,
            profile: c.profile,
        }
    }
}
