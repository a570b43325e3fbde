//! Six-dimensional structural reward, the normalized tool-side reward, and
//! the failure profile derived from it.

use std::collections::BTreeSet;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::align::{align_calls, key_overlap};
use crate::error::Result;
use crate::model::{calls_equivalent, canonicalize_value, SchemaSet, ToolCall};

/// Maximum of the raw structural score (six unit components).
pub const S_MAX: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardVector {
    pub r_name: f64,
    pub r_key: f64,
    pub r_type: f64,
    pub r_constraint: f64,
    pub r_value: f64,
    pub r_exact: f64,
}

impl RewardVector {
    pub const ONES: RewardVector = RewardVector {
        r_name: 1.0,
        r_key: 1.0,
        r_type: 1.0,
        r_constraint: 1.0,
        r_value: 1.0,
        r_exact: 1.0,
    };

    pub const ZEROS: RewardVector = RewardVector {
        r_name: 0.0,
        r_key: 0.0,
        r_type: 0.0,
        r_constraint: 0.0,
        r_value: 0.0,
        r_exact: 0.0,
    };

    pub fn components(&self) -> [f64; 6] {
        [
            self.r_name,
            self.r_key,
            self.r_type,
            self.r_constraint,
            self.r_value,
            self.r_exact,
        ]
    }

    pub fn raw(&self) -> f64 {
        self.components().iter().sum()
    }
}

/// Which structural dimensions broke. `exact` has no flag of its own.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureProfile {
    pub name_error: bool,
    pub key_error: bool,
    pub type_error: bool,
    pub constraint_error: bool,
    pub value_error: bool,
}

impl FailureProfile {
    pub fn any(&self) -> bool {
        self.is_structural() || self.value_error
    }

    /// Name, key, type or constraint failure (everything except a bare value miss).
    pub fn is_structural(&self) -> bool {
        self.name_error || self.key_error || self.type_error || self.constraint_error
    }

    pub fn flags(&self) -> [bool; 5] {
        [
            self.name_error,
            self.key_error,
            self.type_error,
            self.constraint_error,
            self.value_error,
        ]
    }
}

fn ratio_to_f64(r: Ratio<i128>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn mean_indicator(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Orders calls by their canonical text so the score depends only on the
/// call multisets, not on the order the calls were emitted in.
fn canonical_order(calls: &[ToolCall]) -> Vec<&ToolCall> {
    let mut keyed: Vec<(String, &ToolCall)> = calls.iter().map(|c| (c.canonical_key(), c)).collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed.into_iter().map(|(_, c)| c).collect()
}

/// Scores predicted calls against reference calls.
///
/// Two empty lists (correct abstention) score all ones.
pub fn reward_vector(
    refs: &[ToolCall],
    preds: &[ToolCall],
    schemas: &SchemaSet,
) -> Result<RewardVector> {
    for r in refs {
        schemas.require(&r.name)?;
    }
    if refs.is_empty() && preds.is_empty() {
        return Ok(RewardVector::ONES);
    }

    let ref_names: BTreeSet<&str> = refs.iter().map(|c| c.name.as_str()).collect();
    let pred_names: BTreeSet<&str> = preds.iter().map(|c| c.name.as_str()).collect();
    let r_name = mean_indicator(
        ref_names.intersection(&pred_names).count(),
        ref_names.union(&pred_names).count(),
    );

    let refs_sorted: Vec<ToolCall> = canonical_order(refs).into_iter().cloned().collect();
    let preds_sorted: Vec<ToolCall> = canonical_order(preds).into_iter().cloned().collect();
    let alignment = align_calls(&refs_sorted, &preds_sorted);

    let mut key_sum = Ratio::from_integer(0i128);
    let (mut overlapping, mut type_ok, mut constraint_ok, mut value_ok) = (0, 0, 0, 0);
    for &(i, j) in &alignment.pairs {
        let (g, p) = (&refs_sorted[i], &preds_sorted[j]);
        key_sum += match key_overlap(g, p) {
            (_, 0) => Ratio::from_integer(1),
            (inter, union) => Ratio::new(inter as i128, union as i128),
        };
        let schema = schemas.require(&g.name)?;
        for (key, expected) in &g.arguments {
            let Some(actual) = p.arguments.get(key) else {
                continue;
            };
            overlapping += 1;
            let spec = schema.param(key);
            type_ok += spec.is_some_and(|s| s.kind.admits(actual)) as usize;
            constraint_ok += spec.is_some_and(|s| s.constraints_hold(actual)) as usize;
            value_ok += (canonicalize_value(actual) == canonicalize_value(expected)) as usize;
        }
    }
    let r_key = if alignment.pairs.is_empty() {
        0.0
    } else {
        ratio_to_f64(key_sum / Ratio::from_integer(alignment.pairs.len() as i128))
    };

    Ok(RewardVector {
        r_name,
        r_key,
        r_type: mean_indicator(type_ok, overlapping),
        r_constraint: mean_indicator(constraint_ok, overlapping),
        r_value: mean_indicator(value_ok, overlapping),
        r_exact: if calls_equivalent(refs, preds) { 1.0 } else { 0.0 },
    })
}

/// `R_Tool = 2·R_raw/S_max − 1`, in `[-1, 1]`.
pub fn tool_reward(v: &RewardVector) -> f64 {
    2.0 * v.raw() / S_MAX - 1.0
}

/// Flags every dimension whose component fell short of 1.
pub fn derive_failure_profile(v: &RewardVector) -> FailureProfile {
    FailureProfile {
        name_error: v.r_name < 1.0,
        key_error: v.r_key < 1.0,
        type_error: v.r_type < 1.0,
        constraint_error: v.r_constraint < 1.0,
        value_error: v.r_value < 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Constraint, ParamKind, ParamSpec, ToolSchema};
    use serde_json::json;

    fn weather_schemas() -> SchemaSet {
        SchemaSet::new(vec![ToolSchema::new(
            "get_weather",
            vec![
                ParamSpec::new("city", ParamKind::String).required(),
                ParamSpec::new("unit", ParamKind::String)
                    .required()
                    .with(Constraint::Enum(vec![json!("celsius"), json!("fahrenheit")])),
            ],
        )])
        .unwrap()
    }

    fn weather(unit: serde_json::Value) -> ToolCall {
        ToolCall::new("get_weather")
            .arg("city", json!("Paris"))
            .arg("unit", unit)
    }

    #[test]
    fn wrong_unit_kind() {
        let v = reward_vector(&[weather(json!("celsius"))], &[weather(json!(7))], &weather_schemas())
            .unwrap();
        assert_eq!(
            v,
            RewardVector {
                r_name: 1.0,
                r_key: 1.0,
                r_type: 0.5,
                r_constraint: 0.5,
                r_value: 0.5,
                r_exact: 0.0
            }
        );
        assert!((tool_reward(&v) - 1.0 / 6.0).abs() < 1e-15);
        let f = derive_failure_profile(&v);
        assert!(!f.name_error && !f.key_error);
        assert!(f.type_error && f.constraint_error && f.value_error);
    }

    #[test]
    fn identical_calls_score_all_ones() {
        let c = [weather(json!("celsius"))];
        assert_eq!(reward_vector(&c, &c, &weather_schemas()).unwrap(), RewardVector::ONES);
        assert_eq!(tool_reward(&RewardVector::ONES), 1.0);
        assert_eq!(derive_failure_profile(&RewardVector::ONES), FailureProfile::default());
    }

    #[test]
    fn empty_prediction_bottoms_out() {
        let s = SchemaSet::new(vec![ToolSchema::new(
            "f",
            vec![ParamSpec::new("a", ParamKind::Integer)],
        )])
        .unwrap();
        let v = reward_vector(&[ToolCall::new("f").arg("a", json!(1))], &[], &s).unwrap();
        assert_eq!(v, RewardVector::ZEROS);
        assert_eq!(tool_reward(&v), -1.0);
    }

    #[test]
    fn name_only_failure() {
        let v = RewardVector {
            r_name: 0.0,
            r_exact: 0.0,
            ..RewardVector::ONES
        };
        let f = derive_failure_profile(&v);
        assert_eq!(
            f,
            FailureProfile {
                name_error: true,
                ..Default::default()
            }
        );
    }

    #[test]
    fn missing_schema_is_reported() {
        let err = reward_vector(&[ToolCall::new("nope")], &[], &weather_schemas()).unwrap_err();
        assert!(err.to_string().contains("nope"));
    }

    #[test]
    fn abstention_scores_all_ones() {
        assert_eq!(
            reward_vector(&[], &[], &SchemaSet::default()).unwrap(),
            RewardVector::ONES
        );
    }

    #[test]
    fn order_and_formatting_do_not_matter() {
        let s = SchemaSet::new(vec![ToolSchema::new(
            "f",
            vec![ParamSpec::new("a", ParamKind::Integer)],
        )])
        .unwrap();
        let refs = [
            ToolCall::new("f").arg("a", json!(1)),
            ToolCall::new("f").arg("a", json!(2)),
        ];
        let preds = [
            ToolCall::new("f").arg("a", json!(2.0)),
            ToolCall::new("f").arg("a", json!(1)),
        ];
        assert_eq!(reward_vector(&refs, &preds, &s).unwrap(), RewardVector::ONES);
    }
}
