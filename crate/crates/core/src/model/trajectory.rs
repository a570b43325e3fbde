use serde::{Deserialize, Serialize};

use crate::model::call::{parse_tool_calls, serialize_calls, ToolCall};

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const CALL_OPEN: &str = "<tool_call>";
pub const CALL_CLOSE: &str = "</tool_call>";

const TAGS: [&str; 4] = [THINK_OPEN, THINK_CLOSE, CALL_OPEN, CALL_CLOSE];

/// A parsed model response: one reasoning block followed by one call block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub raw_text: String,
    pub reasoning: String,
    pub calls: Vec<ToolCall>,
    pub length_tokens: usize,
    pub format_valid: bool,
}

impl Trajectory {
    /// Renders `<think>reasoning</think><tool_call>[..]</tool_call>` and parses it back.
    pub fn render(reasoning: &str, calls: &[ToolCall]) -> Trajectory {
        parse_trajectory(&format!(
            "{THINK_OPEN}{reasoning}{THINK_CLOSE}{CALL_OPEN}{}{CALL_CLOSE}",
            serialize_calls(calls)
        ))
    }
}

/// Whitespace-delimited segments of the text.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Parses a raw response. Never fails: text that breaks the tag grammar or
/// carries a malformed call list comes back with `format_valid == false`
/// and no calls.
///
/// Grammar: optional whitespace, `<think>..</think>`, optional whitespace,
/// `<tool_call>..</tool_call>`, optional whitespace. Neither block may
/// contain a tag.
pub fn parse_trajectory(raw_text: &str) -> Trajectory {
    let length_tokens = count_tokens(raw_text);
    match split_blocks(raw_text) {
        Some((reasoning, block)) => match parse_tool_calls(block) {
            Ok(calls) => Trajectory {
                raw_text: raw_text.to_string(),
                reasoning: reasoning.trim().to_string(),
                calls,
                length_tokens,
                format_valid: true,
            },
            Err(_) => invalid(raw_text, length_tokens),
        },
        None => invalid(raw_text, length_tokens),
    }
}

fn invalid(raw_text: &str, length_tokens: usize) -> Trajectory {
    Trajectory {
        raw_text: raw_text.to_string(),
        reasoning: String::new(),
        calls: Vec::new(),
        length_tokens,
        format_valid: false,
    }
}

fn split_blocks(text: &str) -> Option<(&str, &str)> {
    let rest = text.trim_start().strip_prefix(THINK_OPEN)?;
    let end = rest.find(THINK_CLOSE)?;
    let reasoning = &rest[..end];
    let rest = rest[end + THINK_CLOSE.len()..]
        .trim_start()
        .strip_prefix(CALL_OPEN)?;
    let end = rest.find(CALL_CLOSE)?;
    let block = &rest[..end];
    let tail = &rest[end + CALL_CLOSE.len()..];
    let clean = |s: &str| !TAGS.iter().any(|t| s.contains(t));
    (clean(reasoning) && clean(block) && tail.trim().is_empty()).then_some((reasoning, block))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn well_formed() {
        let t = parse_trajectory(
            r#"<think>ok</think><tool_call>[{"name":"f","arguments":{}}]</tool_call>"#,
        );
        assert!(t.format_valid);
        assert_eq!(t.reasoning, "ok");
        assert_eq!(t.calls.len(), 1);
        assert_eq!(t.calls[0].name, "f");
        assert!(t.calls[0].arguments.is_empty());
    }

    #[test]
    fn missing_call_block() {
        let t = parse_trajectory("<think>ok</think>");
        assert!(!t.format_valid);
        assert!(t.calls.is_empty());
    }

    #[test]
    fn duplicate_reasoning_block() {
        let t = parse_trajectory("<think>a</think><think>b</think><tool_call>[]</tool_call>");
        assert!(!t.format_valid);
    }

    #[test]
    fn trailing_text_and_nested_tags() {
        assert!(!parse_trajectory("<think>a</think><tool_call>[]</tool_call> bye").format_valid);
        assert!(!parse_trajectory("<think>a<think></think><tool_call>[]</tool_call>").format_valid);
        assert!(
            !parse_trajectory("<think>a</think><tool_call>[]</tool_call><tool_call>[]</tool_call>")
                .format_valid
        );
        assert!(parse_trajectory("  <think>a</think>\n<tool_call>[]</tool_call>\n").format_valid);
    }

    #[test]
    fn malformed_call_list_is_format_invalid() {
        let t = parse_trajectory(r#"<think>a</think><tool_call>[{"name":"g"</tool_call>"#);
        assert!(!t.format_valid);
        assert!(t.calls.is_empty());
    }

    #[test]
    fn token_count_is_whitespace_segments() {
        let t = Trajectory::render("w w w w", &[ToolCall::new("f")]);
        assert!(t.format_valid);
        assert_eq!(t.length_tokens, 4);
        assert_eq!(count_tokens("  a\tb\n c "), 3);
    }

    proptest! {
        #[test]
        fn never_aborts(s in any::<String>()) {
            let t = parse_trajectory(&s);
            prop_assert_eq!(t.length_tokens, count_tokens(&s));
            if !t.format_valid {
                prop_assert!(t.calls.is_empty());
            }
        }

        #[test]
        fn tag_soup_never_aborts(parts in prop::collection::vec(
            prop_oneof![Just(THINK_OPEN), Just(THINK_CLOSE), Just(CALL_OPEN), Just(CALL_CLOSE),
                        Just("[]"), Just("x "), Just("[{\"name\":\"f\"}]")], 0..8)) {
            let s: String = parts.concat();
            let _ = parse_trajectory(&s);
        }
    }
}
