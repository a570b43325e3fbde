//! Newline-delimited JSON scoring service.
//!
//! Every input line is one request and gets exactly one response line. A
//! request that cannot be parsed at all is answered with `"id": null`.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::Arc;
use std::thread;

use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::io::numbers::round_json;
use crate::model::{parse_trajectory, SchemaSet, ToolCall};
use crate::profiling::{hardness, stub_verdict, verify, BandThresholds};
use crate::shaping::{composite_reward_with, RewardContext, RewardOptions, ShapingConfig};
use crate::structural::{derive_failure_profile, reward_vector, FailureProfile};

pub const KINDS: [&str; 2] = ["score", "judge"];

/// Stateless scorer shared by all connections.
#[derive(Debug, Clone)]
pub struct Engine {
    /// Used when a request carries no schemas of its own.
    pub schemas: SchemaSet,
    pub shaping: ShapingConfig,
    pub bands: BandThresholds,
    pub options: RewardOptions,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreRequest {
    #[allow(dead_code)]
    id: Value,
    kind: String,
    #[serde(default)]
    #[allow(dead_code)]
    query: String,
    raw_text: String,
    #[serde(default)]
    reference_calls: Vec<ToolCall>,
    #[serde(default)]
    schemas: Option<SchemaSet>,
    hardness: Option<f64>,
    band: Option<usize>,
    step: Option<u64>,
}

fn error_response(id: Value, code: &str, message: impl Into<String>) -> Value {
    json!({ "id": id, "error": code, "message": message.into() })
}

fn error_code(e: &Error) -> &'static str {
    match e {
        Error::MissingSchema(_) => "missing_schema",
        Error::OutOfRange { .. } | Error::UnknownBand(_) | Error::DegenerateBaseline(_) => "invalid_value",
        _ => "scoring_error",
    }
}

fn insert_failure(out: &mut Map<String, Value>, f: &FailureProfile) {
    for (name, flag) in ["name_error", "key_error", "type_error", "constraint_error", "value_error"]
        .into_iter()
        .zip(f.flags())
    {
        out.insert(name.into(), Value::Bool(flag));
    }
}

impl Engine {
    /// Answers one request line.
    pub fn handle_line(&self, line: &str) -> Value {
        let value: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => return error_response(Value::Null, "parse_error", e.to_string()),
        };
        let Some(obj) = value.as_object() else {
            return error_response(Value::Null, "invalid_request", "request must be a JSON object");
        };
        let id = obj.get("id").cloned().unwrap_or(Value::Null);
        match obj.get("kind").and_then(Value::as_str) {
            None => return error_response(id, "invalid_request", "missing string field `kind`"),
            Some(k) if !KINDS.contains(&k) => {
                return error_response(id, "unsupported_kind", format!("unsupported kind `{k}`"))
            }
            Some(_) => {}
        }
        let request: ScoreRequest = match serde_json::from_value(value.clone()) {
            Ok(r) => r,
            Err(e) => return error_response(id, "invalid_request", e.to_string()),
        };
        let mut response = match self.answer(&request) {
            Ok(body) => {
                let mut out = Map::new();
                out.insert("id".into(), id);
                out.insert("kind".into(), Value::String(request.kind.clone()));
                out.extend(body);
                Value::Object(out)
            }
            Err(e) => error_response(id, error_code(&e), e.to_string()),
        };
        round_json(&mut response);
        response
    }

    fn answer(&self, req: &ScoreRequest) -> Result<Map<String, Value>> {
        let schemas = match &req.schemas {
            Some(s) if !s.is_empty() => s,
            _ => &self.schemas,
        };
        let trajectory = parse_trajectory(&req.raw_text);
        let v = reward_vector(&req.reference_calls, &trajectory.calls, schemas)?;
        let verified = verify(&trajectory, &req.reference_calls, schemas);
        let verdict = stub_verdict(trajectory.format_valid, &v);
        let h = match req.hardness {
            Some(h) => h,
            None => hardness(verified, verdict.aggregate)?,
        };
        let band = match req.band {
            Some(b) => b,
            None => self.bands.band_of(h)?,
        };
        let mut out = Map::new();
        match req.kind.as_str() {
            "score" => {
                let step = req.step.unwrap_or(0);
                let ctx = RewardContext {
                    reference_calls: &req.reference_calls,
                    schemas,
                    hardness: h,
                    band,
                    step,
                };
                let breakdown = composite_reward_with(&trajectory, &ctx, &self.shaping, self.options)?;
                if let Value::Object(fields) = serde_json::to_value(breakdown)? {
                    out.extend(fields);
                }
                out.insert("step".into(), json!(step));
            }
            _ => {
                if let Value::Object(fields) = serde_json::to_value(verdict)? {
                    out.extend(fields);
                }
            }
        }
        insert_failure(&mut out, &derive_failure_profile(&v));
        out.insert("verified".into(), Value::Bool(verified));
        out.insert("hardness".into(), json!(h));
        out.insert("band".into(), json!(band));
        Ok(out)
    }

    /// Serves one stream until end of input. Blank lines are ignored.
    /// Returns the number of requests answered.
    pub fn serve_stream<R: BufRead, W: Write>(&self, mut reader: R, mut writer: W) -> Result<usize> {
        let mut answered = 0;
        let mut buf = Vec::new();
        loop {
            buf.clear();
            if reader.read_until(b'\n', &mut buf)? == 0 {
                break;
            }
            let line = String::from_utf8_lossy(&buf);
            if line.trim().is_empty() {
                continue;
            }
            let response = self.handle_line(line.trim());
            serde_json::to_writer(&mut writer, &response)?;
            writer.write_all(b"\n")?;
            writer.flush()?;
            answered += 1;
        }
        Ok(answered)
    }

    /// Accepts connections forever; each connection is served on its own thread.
    pub fn serve_tcp(self: Arc<Self>, listener: TcpListener) -> Result<()> {
        for stream in listener.incoming() {
            let stream = stream?;
            let engine = Arc::clone(&self);
            thread::spawn(move || -> Result<usize> {
                let reader = BufReader::new(stream.try_clone()?);
                engine.serve_stream(reader, stream)
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::config::fallback_shaping;
    use crate::model::{Constraint, ParamKind, ParamSpec, ToolSchema};

    fn engine() -> Engine {
        Engine {
            schemas: SchemaSet::new(vec![ToolSchema::new(
                "get_weather",
                vec![
                    ParamSpec::new("city", ParamKind::String).required(),
                    ParamSpec::new("unit", ParamKind::String)
                        .required()
                        .with(Constraint::Enum(vec![json!("celsius"), json!("fahrenheit")])),
                ],
            )])
            .unwrap(),
            shaping: fallback_shaping(3, 100).unwrap(),
            bands: BandThresholds::default(),
            options: RewardOptions::default(),
        }
    }

    const CALL: &str = r#"[{"name": "get_weather", "arguments": {"city": "Paris", "unit": "celsius"}}]"#;

    fn request(id: Value, kind: &str, call: &str) -> String {
        json!({
            "id": id,
            "kind": kind,
            "query": "weather in Paris",
            "raw_text": format!("<think>look it up</think><tool_call>{call}</tool_call>"),
            "reference_calls": serde_json::from_str::<Value>(CALL).unwrap(),
        })
        .to_string()
    }

    #[test]
    fn exact_match_scores_full_tool_reward() {
        let r = engine().handle_line(&request(json!("a"), "score", CALL));
        assert_eq!(r["id"], "a");
        assert_eq!(r["r_tool"], 1.0);
        assert_eq!(r["r_exact"], 1.0);
        assert_eq!(r["verified"], true);
        assert_eq!(r["hardness"], 0.0);
        assert_eq!(r["name_error"], false);
        // alpha = 1 well under budget: 2 + 1 + 1
        assert_eq!(r["r_total"], 4.0);
    }

    #[test]
    fn judge_kind() {
        let wrong = r#"[{"name": "get_weather", "arguments": {"city": "Paris", "unit": 7}}]"#;
        let r = engine().handle_line(&request(json!(3), "judge", wrong));
        assert_eq!(r["id"], 3);
        assert_eq!(r["verified"], false);
        assert_eq!(r["type_error"], true);
        assert_eq!(r["coherence"], 1.0);
        // aggregate (1 + 0.75 + 0.5) / 3 = 0.75, hardness 0.25
        assert_eq!(r["aggregate"], 0.75);
        assert_eq!(r["hardness"], 0.25);
    }

    #[test]
    fn protocol_errors() {
        let e = engine();
        let r = e.handle_line(&request(json!("k"), "rank", CALL));
        assert_eq!((r["id"].clone(), r["error"].clone()), (json!("k"), json!("unsupported_kind")));
        let r = e.handle_line("{not json");
        assert_eq!((r["id"].clone(), r["error"].clone()), (Value::Null, json!("parse_error")));
        let r = e.handle_line(r#"{"id": 5, "kind": "score"}"#);
        assert_eq!((r["id"].clone(), r["error"].clone()), (json!(5), json!("invalid_request")));
        let r = e.handle_line(r#"[1, 2]"#);
        assert_eq!(r["error"], "invalid_request");
        let mut bad = serde_json::from_str::<Value>(&request(json!(6), "score", CALL)).unwrap();
        bad["reference_calls"] = json!([{"name": "unknown_tool", "arguments": {}}]);
        let r = e.handle_line(&bad.to_string());
        assert_eq!((r["id"].clone(), r["error"].clone()), (json!(6), json!("missing_schema")));
        bad["reference_calls"] = serde_json::from_str(CALL).unwrap();
        bad["hardness"] = json!(1.5);
        assert_eq!(e.handle_line(&bad.to_string())["error"], "invalid_value");
    }

    #[test]
    fn pipelined_requests_keep_ids() {
        let input = format!(
            "{}\n\n{}\nnot json\n",
            request(json!("first"), "score", CALL),
            request(json!("second"), "judge", CALL)
        );
        let mut out = Vec::new();
        let n = engine().serve_stream(input.as_bytes(), &mut out).unwrap();
        assert_eq!(n, 3);
        let ids: Vec<Value> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str::<Value>(l).unwrap()["id"].clone())
            .collect();
        assert_eq!(ids, vec![json!("first"), json!("second"), Value::Null]);
    }
}
