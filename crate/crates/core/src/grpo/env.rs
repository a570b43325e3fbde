//! Synthetic tool-use environment.
//!
//! An action is a pair (reasoning-length bucket, call template). Template
//! ids are bit sets over four injected errors; template 0 is the reference
//! call itself. A correct intent is realized with probability
//! `p_min + (p_max − p_min)·min(1, L/L_need)` and otherwise degrades into a
//! uniformly chosen single-error template. Wrong intents are emitted as is.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::model::{Constraint, ExecutionCase, ParamKind, ParamSpec, SchemaSet, ToolCall, Trajectory};
use crate::structural::{derive_failure_profile, reward_vector, FailureProfile};

pub const TEMPLATE_COUNT: usize = 16;
pub const CORRECT: usize = 0;
/// Call the function under a name the schema set does not know.
pub const WRONG_NAME: usize = 1;
/// Drop the last argument key.
pub const MISSING_KEY: usize = 2;
/// Replace the first argument with a value of another kind.
pub const WRONG_TYPE: usize = 4;
/// Replace the second argument with another admissible value.
pub const WRONG_VALUE: usize = 8;
pub const SINGLE_ERRORS: [usize; 4] = [WRONG_NAME, MISSING_KEY, WRONG_TYPE, WRONG_VALUE];

const FILLER: &str = "step";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Reasoning lengths the policy can pick, in tokens.
    pub buckets: Vec<u32>,
    pub p_min: f64,
    pub p_max: f64,
    /// `L_need` at hardness 0 and 1; geometric in between.
    pub need_min: f64,
    pub need_max: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            buckets: vec![32, 64, 128, 256, 512, 1024],
            p_min: 0.2,
            p_max: 0.95,
            need_min: 32.0,
            need_max: 1024.0,
        }
    }
}

impl EnvConfig {
    pub fn check(&self) -> Result<()> {
        if self.buckets.is_empty() {
            return Err(Error::Config("env.buckets is empty".into()));
        }
        if !(0.0 <= self.p_min && self.p_min <= self.p_max && self.p_max <= 1.0) {
            return Err(Error::Config(format!(
                "need 0 <= p_min <= p_max <= 1, got {} / {}",
                self.p_min, self.p_max
            )));
        }
        if !(0.0 < self.need_min && self.need_min <= self.need_max && self.need_max.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < need_min <= need_max, got {} / {}",
                self.need_min, self.need_max
            )));
        }
        Ok(())
    }

    pub fn action_count(&self) -> usize {
        self.buckets.len() * TEMPLATE_COUNT
    }

    pub fn action(&self, bucket: usize, template: usize) -> usize {
        bucket * TEMPLATE_COUNT + template
    }

    /// `(bucket index, template id)`.
    pub fn decode(&self, action: usize) -> (usize, usize) {
        (action / TEMPLATE_COUNT, action % TEMPLATE_COUNT)
    }

    pub fn bucket_length(&self, bucket: usize) -> f64 {
        self.buckets[bucket] as f64
    }

    pub fn length_need(&self, hardness: f64) -> f64 {
        self.need_min * (self.need_max / self.need_min).powf(hardness)
    }

    /// Probability that a correct intent comes out correct at length `l`.
    pub fn p_correct(&self, l: f64, need: f64) -> f64 {
        self.p_min + (self.p_max - self.p_min) * (l / need).min(1.0)
    }

    /// Distribution over emitted templates for an intent at length `l`.
    pub fn emission_probs(&self, template: usize, l: f64, need: f64) -> [f64; TEMPLATE_COUNT] {
        let mut probs = [0.0; TEMPLATE_COUNT];
        if template == CORRECT {
            let p = self.p_correct(l, need);
            probs[CORRECT] = p;
            for e in SINGLE_ERRORS {
                probs[e] = (1.0 - p) / SINGLE_ERRORS.len() as f64;
            }
        } else {
            probs[template] = 1.0;
        }
        probs
    }
}

/// A training query with its latent deliberation need.
#[derive(Debug, Clone, PartialEq)]
pub struct SimQuery {
    pub id: usize,
    pub class: usize,
    pub band: usize,
    pub hardness: f64,
    pub reference_calls: Vec<ToolCall>,
    pub schemas: SchemaSet,
    pub length_need: f64,
}

impl SimQuery {
    /// Builds a query from a profiled case; the policy class is the band.
    pub fn from_case(id: usize, case: &ExecutionCase, env: &EnvConfig) -> Result<SimQuery> {
        let profile = case.require_profile()?;
        Ok(SimQuery {
            id,
            class: profile.band,
            band: profile.band,
            hardness: profile.hardness,
            reference_calls: case.reference_calls.clone(),
            schemas: case.schemas.clone(),
            length_need: env.length_need(profile.hardness),
        })
    }

    /// The call list a template stands for.
    pub fn template_calls(&self, template: usize) -> Vec<ToolCall> {
        let mut calls = self.reference_calls.clone();
        let Some(first) = calls.first_mut() else {
            return calls;
        };
        let schema = self.schemas.get(&first.name).cloned();
        let spec = |key: &str| schema.as_ref().and_then(|s| s.param(key)).cloned();
        let keys: Vec<String> = first.arguments.keys().cloned().collect();
        if template & WRONG_VALUE != 0 {
            if let Some(key) = keys.get(1).or(keys.first()) {
                let v = perturb_value(&first.arguments[key], spec(key).as_ref());
                first.arguments.insert(key.clone(), v);
            }
        }
        if template & WRONG_TYPE != 0 {
            if let Some(key) = keys.first() {
                let v = retype_value(&first.arguments[key]);
                first.arguments.insert(key.clone(), v);
            }
        }
        if template & MISSING_KEY != 0 {
            if let Some(key) = keys.last() {
                first.arguments.remove(key);
            }
        }
        if template & WRONG_NAME != 0 {
            first.name = format!("{}_alt", first.name);
        }
        calls
    }

    /// Failure profile and exactness of every template against the reference.
    pub fn template_outcomes(&self) -> Result<Vec<(FailureProfile, bool)>> {
        (0..TEMPLATE_COUNT)
            .map(|t| {
                let v = reward_vector(&self.reference_calls, &self.template_calls(t), &self.schemas)?;
                Ok((derive_failure_profile(&v), v.r_exact == 1.0))
            })
            .collect()
    }
}

fn enum_members(spec: Option<&ParamSpec>) -> Option<&[Value]> {
    spec?.constraints.iter().find_map(|c| match c {
        Constraint::Enum(members) if members.len() > 1 => Some(members.as_slice()),
        _ => None,
    })
}

fn range_of(spec: Option<&ParamSpec>) -> Option<(f64, f64)> {
    spec?.constraints.iter().find_map(|c| match c {
        Constraint::Range(lo, hi) => Some((*lo, *hi)),
        _ => None,
    })
}

/// Another value of the same kind, inside the declared constraints when
/// they leave room for one.
fn perturb_value(value: &Value, spec: Option<&ParamSpec>) -> Value {
    if let Some(members) = enum_members(spec) {
        let at = members.iter().position(|m| m == value).unwrap_or(0);
        return members[(at + 1) % members.len()].clone();
    }
    match value {
        Value::Bool(b) => Value::Bool(!b),
        Value::Number(n) => {
            let x = n.as_f64().unwrap_or(0.0);
            let (lo, hi) = range_of(spec).unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
            let y = if x + 1.0 <= hi { x + 1.0 } else if x - 1.0 >= lo { x - 1.0 } else { x + 1.0 };
            if spec.is_some_and(|s| s.kind == ParamKind::Integer) || n.is_i64() || n.is_u64() {
                json!(y as i64)
            } else {
                json!(y)
            }
        }
        Value::String(s) => Value::String(format!("{s}_alt")),
        Value::Array(items) => {
            let mut items = items.clone();
            items.push(Value::Null);
            Value::Array(items)
        }
        Value::Object(map) => {
            let mut map = map.clone();
            map.insert("_alt".into(), Value::Null);
            Value::Object(map)
        }
        Value::Null => json!(0),
    }
}

/// A value of a different kind.
fn retype_value(value: &Value) -> Value {
    match value {
        Value::String(_) => json!(0),
        Value::Number(n) => Value::String(n.to_string()),
        Value::Bool(b) => Value::String(b.to_string()),
        Value::Array(_) | Value::Object(_) | Value::Null => Value::String("none".into()),
    }
}

/// Reasoning text of exactly `tokens` whitespace tokens.
pub fn filler_reasoning(tokens: usize) -> String {
    vec![FILLER; tokens].join(" ")
}

/// One sampled response.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub action: usize,
    pub emitted: usize,
    pub trajectory: Trajectory,
}

/// Index drawn from a categorical distribution.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Emits a response for a fixed action.
pub fn realize<R: Rng + ?Sized>(action: usize, query: &SimQuery, env: &EnvConfig, rng: &mut R) -> Rollout {
    let (bucket, template) = env.decode(action);
    let l = env.bucket_length(bucket);
    let emitted = sample_index(&env.emission_probs(template, l, query.length_need), rng);
    let trajectory = Trajectory::render(&filler_reasoning(l as usize), &query.template_calls(emitted));
    Rollout {
        action,
        emitted,
        trajectory,
    }
}

/// Samples an action from the class distribution `probs` and emits a response.
pub fn rollout<R: Rng + ?Sized>(probs: &[f64], query: &SimQuery, env: &EnvConfig, rng: &mut R) -> Rollout {
    let action = sample_index(probs, rng);
    realize(action, query, env, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ParamSpec, ToolSchema};
    use crate::structural::tool_reward;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn query(hardness: f64) -> SimQuery {
        let env = EnvConfig::default();
        let schemas = SchemaSet::new(vec![ToolSchema::new(
            "set_alarm",
            vec![
                ParamSpec::new("hour", ParamKind::Integer).required().with(Constraint::Range(0.0, 23.0)),
                ParamSpec::new("label", ParamKind::String)
                    .required()
                    .with(Constraint::Enum(vec![json!("work"), json!("gym")])),
                ParamSpec::new("minute", ParamKind::Integer).required().with(Constraint::Range(0.0, 59.0)),
            ],
        )])
        .unwrap();
        SimQuery {
            id: 0,
            class: 0,
            band: 0,
            hardness,
            reference_calls: vec![ToolCall::new("set_alarm")
                .arg("hour", json!(7))
                .arg("label", json!("gym"))
                .arg("minute", json!(30))],
            schemas,
            length_need: env.length_need(hardness),
        }
    }

    #[test]
    fn success_model_endpoints() {
        let env = EnvConfig::default();
        let need = env.length_need(0.0);
        assert_eq!(need, 32.0);
        assert_eq!(env.length_need(1.0), 1024.0);
        for l in [32.0, 64.0, 1024.0] {
            assert_eq!(env.p_correct(l, need), 0.95);
        }
        assert_eq!(env.p_correct(0.0, need), 0.2);
        assert!(env.length_need(0.3) < env.length_need(0.6));
    }

    #[test]
    fn each_template_breaks_its_own_dimension() {
        let q = query(0.5);
        let outcomes = q.template_outcomes().unwrap();
        assert_eq!(outcomes[CORRECT], (FailureProfile::default(), true));
        let (f, exact) = outcomes[WRONG_NAME];
        assert!(f.name_error && !f.key_error && !f.type_error && !f.value_error && !exact);
        let (f, _) = outcomes[MISSING_KEY];
        assert!(f.key_error && !f.name_error && !f.type_error && !f.value_error);
        let (f, _) = outcomes[WRONG_TYPE];
        assert!(f.type_error && !f.key_error && !f.name_error);
        let (f, _) = outcomes[WRONG_VALUE];
        assert_eq!(
            f,
            FailureProfile {
                value_error: true,
                ..Default::default()
            }
        );
        // a value swap keeps the schema satisfied
        let v = reward_vector(&q.reference_calls, &q.template_calls(WRONG_VALUE), &q.schemas).unwrap();
        assert_eq!((v.r_type, v.r_constraint), (1.0, 1.0));
        for (t, outcome) in outcomes.iter().enumerate().skip(1) {
            assert!(!outcome.1, "template {t} should not be exact");
            let v = reward_vector(&q.reference_calls, &q.template_calls(t), &q.schemas).unwrap();
            assert!(tool_reward(&v) < 1.0);
        }
    }

    #[test]
    fn reasoning_has_bucket_length() {
        let env = EnvConfig::default();
        let q = query(0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for bucket in 0..env.buckets.len() {
            let r = realize(env.action(bucket, CORRECT), &q, &env, &mut rng);
            assert!(r.trajectory.format_valid);
            assert_eq!(r.trajectory.reasoning.split_whitespace().count(), env.buckets[bucket] as usize);
        }
    }

    #[test]
    fn emitted_frequencies_match_the_closed_form() {
        let env = EnvConfig::default();
        let q = query(0.8);
        let probs = vec![1.0 / env.action_count() as f64; env.action_count()];
        let n = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = [0usize; TEMPLATE_COUNT];
        for _ in 0..n {
            counts[rollout(&probs, &q, &env, &mut rng).emitted] += 1;
        }
        let mut expected = [0.0; TEMPLATE_COUNT];
        for (a, p) in probs.iter().enumerate() {
            let (b, t) = env.decode(a);
            for (e, pe) in env.emission_probs(t, env.bucket_length(b), q.length_need).iter().enumerate() {
                expected[e] += p * pe;
            }
        }
        for e in 0..TEMPLATE_COUNT {
            let freq = counts[e] as f64 / n as f64;
            assert!((freq - expected[e]).abs() <= 0.02, "template {e}: {freq} vs {}", expected[e]);
        }
    }

    #[test]
    fn correct_intent_frequency_per_length() {
        let env = EnvConfig::default();
        let q = query(0.6);
        let n = 10_000;
        for bucket in [0, 3, 5] {
            let mut rng = ChaCha8Rng::seed_from_u64(bucket as u64);
            let hits = (0..n)
                .filter(|_| realize(env.action(bucket, CORRECT), &q, &env, &mut rng).emitted == CORRECT)
                .count();
            let expected = env.p_correct(env.bucket_length(bucket), q.length_need);
            assert!((hits as f64 / n as f64 - expected).abs() <= 0.02);
        }
    }
}
