//! Tool-call data model: schemas, calls, trajectories, validation and value
//! canonicalization.

mod call;
mod canonical;
mod case;
mod schema;
mod trajectory;
mod validate;

pub use call::{calls_equivalent, parse_tool_calls, serialize_calls, ToolCall};
pub use canonical::canonicalize_value;
pub use case::{ExecutionCase, Outcome};
pub use schema::{Constraint, ParamKind, ParamSpec, SchemaSet, ToolSchema};
pub use trajectory::{
    count_tokens, parse_trajectory, Trajectory, CALL_CLOSE, CALL_OPEN, THINK_CLOSE, THINK_OPEN,
};
pub use validate::{validate_call, Finding, KeyFinding, ValidationReport};
