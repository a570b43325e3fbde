//! Synthetic case bases with a prescribed easy/hard mix.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::grpo::env::{sample_index, EnvConfig, SimQuery, CORRECT};
use crate::model::{
    Constraint, ExecutionCase, Outcome, ParamKind, ParamSpec, SchemaSet, ToolCall, ToolSchema, Trajectory,
};
use crate::profiling::{verify, BandThresholds, CaseProfile, DEFAULT_PARTITION_THRESHOLD};
use crate::structural::{derive_failure_profile, reward_vector};

const WORDS: [&str; 8] = ["alpha", "bravo", "delta", "harbor", "meadow", "orbit", "quartz", "summit"];

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSpec {
    pub count: usize,
    /// Share of cases with `H ≤ 0.5`; rounded to a whole number of cases.
    pub easy_fraction: f64,
    pub schema_pool: Vec<ToolSchema>,
    pub seed: u64,
    /// Success model of the recorded responses.
    pub env: EnvConfig,
    pub bands: BandThresholds,
    /// Log-scale spread of recorded lengths around each case's need.
    pub length_spread: f64,
}

impl GenerateSpec {
    pub fn new(count: usize, easy_fraction: f64, seed: u64) -> Self {
        GenerateSpec {
            count,
            easy_fraction,
            schema_pool: default_schema_pool(),
            seed,
            env: EnvConfig::default(),
            bands: BandThresholds::default(),
            length_spread: 0.5,
        }
    }
}

fn enum_of(values: &[&str]) -> Constraint {
    Constraint::Enum(values.iter().map(|v| json!(v)).collect())
}

/// Five tools, each with at least three required parameters.
pub fn default_schema_pool() -> Vec<ToolSchema> {
    let cities = ["Lisbon", "Oslo", "Kyoto", "Lima", "Nairobi", "Quebec"];
    let currencies = ["USD", "EUR", "JPY", "GBP", "CHF"];
    let airports = ["LIS", "OSL", "KIX", "LIM", "NBO", "YQB"];
    vec![
        ToolSchema::new(
            "get_weather",
            vec![
                ParamSpec::new("city", ParamKind::String).required().with(enum_of(&cities)),
                ParamSpec::new("days", ParamKind::Integer).required().with(Constraint::Range(1.0, 14.0)),
                ParamSpec::new("unit", ParamKind::String)
                    .required()
                    .with(enum_of(&["celsius", "fahrenheit"])),
                ParamSpec::new("hourly", ParamKind::Boolean),
            ],
        ),
        ToolSchema::new(
            "set_alarm",
            vec![
                ParamSpec::new("hour", ParamKind::Integer).required().with(Constraint::Range(0.0, 23.0)),
                ParamSpec::new("label", ParamKind::String)
                    .required()
                    .with(enum_of(&["work", "gym", "school", "meds"])),
                ParamSpec::new("minute", ParamKind::Integer).required().with(Constraint::Range(0.0, 59.0)),
                ParamSpec::new("repeat", ParamKind::Boolean),
            ],
        ),
        ToolSchema::new(
            "convert_currency",
            vec![
                ParamSpec::new("amount", ParamKind::Number)
                    .required()
                    .with(Constraint::Range(0.01, 100000.0)),
                ParamSpec::new("from_currency", ParamKind::String).required().with(enum_of(&currencies)),
                ParamSpec::new("to_currency", ParamKind::String).required().with(enum_of(&currencies)),
            ],
        ),
        ToolSchema::new(
            "book_table",
            vec![
                ParamSpec::new("party_size", ParamKind::Integer)
                    .required()
                    .with(Constraint::Range(1.0, 20.0)),
                ParamSpec::new("restaurant", ParamKind::String)
                    .required()
                    .with(enum_of(&["Aurora", "Basilico", "Kiln", "Tamarind"])),
                ParamSpec::new("time", ParamKind::String)
                    .required()
                    .with(enum_of(&["18:00", "19:00", "20:00", "21:00"])),
                ParamSpec::new("outdoor", ParamKind::Boolean),
            ],
        ),
        ToolSchema::new(
            "search_flights",
            vec![
                ParamSpec::new("cabin", ParamKind::String)
                    .required()
                    .with(enum_of(&["economy", "premium", "business"])),
                ParamSpec::new("destination", ParamKind::String).required().with(enum_of(&airports)),
                ParamSpec::new("origin", ParamKind::String).required().with(enum_of(&airports)),
                ParamSpec::new("passengers", ParamKind::Integer)
                    .required()
                    .with(Constraint::Range(1.0, 9.0)),
            ],
        ),
    ]
}

/// A value satisfying the parameter's kind and constraints.
fn sample_value(spec: &ParamSpec, rng: &mut ChaCha8Rng) -> Result<Value> {
    let mut range = None;
    let mut pattern = None;
    for c in &spec.constraints {
        match c {
            Constraint::Enum(members) if !members.is_empty() => {
                return Ok(members.choose(rng).cloned().unwrap_or(Value::Null));
            }
            Constraint::Range(lo, hi) => range = Some((*lo, *hi)),
            Constraint::Pattern(_) => pattern = Some(c),
            Constraint::Enum(_) => {}
        }
    }
    let value = match spec.kind {
        ParamKind::Boolean => json!(rng.random_bool(0.5)),
        ParamKind::Integer => {
            let (lo, hi) = range.unwrap_or((0.0, 100.0));
            let (lo, hi) = (lo.ceil() as i64, hi.floor() as i64);
            if lo > hi {
                return Err(Error::Config(format!("no integer inside the range of {}", spec.name)));
            }
            json!(rng.random_range(lo..=hi))
        }
        ParamKind::Number => {
            let (lo, hi) = range.unwrap_or((0.0, 100.0));
            let x = (rng.random_range(lo..=hi) * 100.0).round() / 100.0;
            json!(x.clamp(lo, hi))
        }
        ParamKind::String => {
            let fits: Vec<&str> = WORDS
                .iter()
                .copied()
                .filter(|w| pattern.is_none_or(|p| p.is_satisfied_by(&json!(w))))
                .collect();
            match fits.choose(rng) {
                Some(w) => json!(w),
                None => return Err(Error::Config(format!("cannot sample a value for {}", spec.name))),
            }
        }
        ParamKind::Array => json!([WORDS.choose(rng).copied().unwrap_or("alpha")]),
        ParamKind::Object => json!({}),
    };
    Ok(value)
}

fn describe(call: &ToolCall) -> String {
    let args: Vec<String> = call.arguments.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("Use {} with {}", call.name, args.join(", "))
}

/// Stratified hardness: `n_easy` values spread over `[0, 0.5)`, the rest over
/// `(0.5, 1]`, one per stratum.
fn stratified_hardness(count: usize, n_easy: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n_hard = count - n_easy;
    let half = DEFAULT_PARTITION_THRESHOLD;
    let mut h: Vec<f64> = (0..n_easy)
        .map(|i| half * (i as f64 + rng.random::<f64>()) / n_easy as f64)
        .collect();
    h.extend((0..n_hard).map(|i| half + (1.0 - half) * (i as f64 + 1.0 - rng.random::<f64>()) / n_hard as f64));
    h
}

/// Generates profiled cases. Each case's recorded response has a length
/// spread log-normally around its need and is correct with the environment's
/// success probability at that length.
pub fn generate_cases(spec: &GenerateSpec) -> Result<Vec<ExecutionCase>> {
    if spec.count == 0 {
        return Ok(Vec::new());
    }
    if spec.schema_pool.is_empty() {
        return Err(Error::EmptySchemaPool);
    }
    if !(0.0..=1.0).contains(&spec.easy_fraction) {
        return Err(Error::OutOfRange {
            name: "easy_fraction",
            value: spec.easy_fraction,
            range: "[0, 1]",
        });
    }
    let schemas = SchemaSet::new(spec.schema_pool.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_easy = (spec.count as f64 * spec.easy_fraction).round() as usize;
    let mut hardness = stratified_hardness(spec.count, n_easy, &mut rng);
    hardness.shuffle(&mut rng);

    let mut cases = Vec::with_capacity(spec.count);
    for (i, h) in hardness.into_iter().enumerate() {
        let schema = spec.schema_pool.choose(&mut rng).ok_or(Error::EmptySchemaPool)?;
        let mut call = ToolCall::new(schema.function_name.clone());
        for p in &schema.params {
            if p.required || rng.random_bool(0.5) {
                call = call.arg(p.name.clone(), sample_value(p, &mut rng)?);
            }
        }
        let need = spec.env.length_need(h);
        let z: f64 = rng.sample(StandardNormal);
        let length = (need * (spec.length_spread * z).exp()).round().clamp(8.0, 4096.0);
        let query = SimQuery {
            id: i,
            class: 0,
            band: 0,
            hardness: h,
            reference_calls: vec![call.clone()],
            schemas: schemas.clone(),
            length_need: need,
        };
        let emitted = sample_index(&spec.env.emission_probs(CORRECT, length, need), &mut rng);
        let trajectory = Trajectory::render(
            &crate::grpo::env::filler_reasoning(length as usize),
            &query.template_calls(emitted),
        );
        let v = reward_vector(&query.reference_calls, &trajectory.calls, &schemas)?;
        let success = verify(&trajectory, &query.reference_calls, &schemas);
        cases.push(ExecutionCase {
            id: format!("case-{i:05}"),
            query: describe(&call),
            trajectory,
            reference_calls: vec![call],
            schemas: schemas.clone(),
            outcome: if success { Outcome::Success } else { Outcome::Failure },
            profile: Some(CaseProfile {
                hardness: h,
                band: spec.bands.band_of(h)?,
                failure: derive_failure_profile(&v),
            }),
        });
    }
    Ok(cases)
}

/// The suite the simulator and its checks run on by default: 120 cases,
/// half easy, three bands of 40.
pub fn default_suite(seed: u64) -> Result<Vec<ExecutionCase>> {
    generate_cases(&GenerateSpec::new(120, 0.5, seed))
}
