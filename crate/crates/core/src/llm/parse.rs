//! Step grammar for model output.
//!
//! ```text
//! Thought: <text>
//! Action: <Tool Name> [key: value, key: "quoted, value"]
//! Observation: <text>
//! Action: Finish [<final response, brackets may nest>]
//! ```
//!
//! A marker starts a new step. Other non-blank lines continue the current
//! Thought or Observation; text before the first marker is ignored. Parsing
//! stops at the first Finish.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::FrameworkKind;
use crate::tools::{ToolCall, POSITIONAL_ARG};

const THOUGHT: &str = "Thought:";
const ACTION: &str = "Action:";
const OBSERVATION: &str = "Observation:";
const FINISH: &str = "Finish";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Thought,
    Action,
    Observation,
    Finish,
}

/// One parsed unit of an agent trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentStep {
    Thought {
        text: String,
    },
    /// `text` is the raw payload after `Action:`. Exactly one of `call` and
    /// `diagnostic` is set.
    Action {
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        call: Option<ToolCall>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        diagnostic: Option<String>,
    },
    Observation {
        text: String,
    },
    Finish {
        final_response: String,
    },
}

impl AgentStep {
    pub fn thought(text: impl Into<String>) -> Self {
        AgentStep::Thought { text: text.into() }
    }

    pub fn action(call: ToolCall) -> Self {
        AgentStep::Action {
            text: call.render(),
            call: Some(call),
            diagnostic: None,
        }
    }

    pub fn observation(text: impl Into<String>) -> Self {
        AgentStep::Observation { text: text.into() }
    }

    pub fn finish(response: impl Into<String>) -> Self {
        AgentStep::Finish {
            final_response: response.into(),
        }
    }

    pub fn kind(&self) -> StepKind {
        match self {
            AgentStep::Thought { .. } => StepKind::Thought,
            AgentStep::Action { .. } => StepKind::Action,
            AgentStep::Observation { .. } => StepKind::Observation,
            AgentStep::Finish { .. } => StepKind::Finish,
        }
    }

    pub fn text(&self) -> &str {
        match self {
            AgentStep::Thought { text }
            | AgentStep::Action { text, .. }
            | AgentStep::Observation { text } => text,
            AgentStep::Finish { final_response } => final_response,
        }
    }

    pub fn tool_call(&self) -> Option<&ToolCall> {
        match self {
            AgentStep::Action { call, .. } => call.as_ref(),
            _ => None,
        }
    }

    pub fn is_finish(&self) -> bool {
        matches!(self, AgentStep::Finish { .. })
    }

    /// Renders the step as one grammar line (or more, for multi-line text).
    pub fn render(&self) -> String {
        match self {
            AgentStep::Thought { text } => format!("{THOUGHT} {text}"),
            AgentStep::Action { text, call, .. } => match call {
                Some(call) => format!("{ACTION} {}", call.render()),
                None => format!("{ACTION} {text}"),
            },
            AgentStep::Observation { text } => format!("{OBSERVATION} {text}"),
            AgentStep::Finish { final_response } => {
                format!("{ACTION} {FINISH} [{final_response}]")
            }
        }
    }
}

/// Renders steps in order, one per line.
pub fn render_steps(steps: &[AgentStep]) -> String {
    steps
        .iter()
        .map(AgentStep::render)
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum ParseError {
    #[error("output has no Thought/Action/Observation marker")]
    Unstructured,
    #[error("format violation: {0}")]
    FormatViolation(String),
    #[error("malformed action: {0}")]
    MalformedAction(String),
}

impl ParseError {
    pub fn code(&self) -> &'static str {
        match self {
            ParseError::Unstructured => "unstructured",
            ParseError::FormatViolation(_) => "format_violation",
            ParseError::MalformedAction(_) => "malformed_action",
        }
    }
}

/// Finds the index just past the `]` that balances the `[` at `open`.
fn balanced_close(text: &str, open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (i, c) in text[open..].char_indices() {
        match c {
            '[' => depth += 1,
            ']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(open + i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Splits `k: v, k2: "v, 2"` on commas outside double quotes.
fn split_args(payload: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut current = String::new();
    let mut in_quotes = false;
    let mut escaped = false;
    for c in payload.chars() {
        if escaped {
            current.push(c);
            escaped = false;
            continue;
        }
        match c {
            '\\' if in_quotes => {
                current.push(c);
                escaped = true;
            }
            '"' => {
                in_quotes = !in_quotes;
                current.push(c);
            }
            ',' if !in_quotes => parts.push(std::mem::take(&mut current)),
            _ => current.push(c),
        }
    }
    parts.push(current);
    parts
}

fn unquote(value: &str) -> String {
    let v = value.trim();
    if v.len() >= 2 && v.starts_with('"') && v.ends_with('"') {
        let inner = &v[1..v.len() - 1];
        let mut out = String::with_capacity(inner.len());
        let mut chars = inner.chars();
        while let Some(c) = chars.next() {
            if c == '\\' {
                if let Some(next) = chars.next() {
                    out.push(next);
                }
            } else {
                out.push(c);
            }
        }
        out
    } else {
        v.to_string()
    }
}

/// Colon position outside quotes, if any.
fn key_separator(part: &str) -> Option<usize> {
    let mut in_quotes = false;
    for (i, c) in part.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            ':' if !in_quotes => return Some(i),
            _ => {}
        }
    }
    None
}

fn parse_call(name: &str, payload: Option<&str>) -> Result<ToolCall, String> {
    let name = name.trim();
    if name.is_empty() {
        return Err("missing tool name".to_string());
    }
    let mut call = ToolCall::new(name);
    let Some(payload) = payload else {
        return Ok(call);
    };
    if payload.trim().is_empty() {
        return Ok(call);
    }
    let parts = split_args(payload);
    if parts.len() == 1 && key_separator(&parts[0]).is_none() {
        call.args
            .insert(POSITIONAL_ARG.to_string(), unquote(&parts[0]));
        return Ok(call);
    }
    for part in parts {
        let Some(sep) = key_separator(&part) else {
            return Err(format!(
                "argument `{}` is not a `key: value` pair",
                part.trim()
            ));
        };
        let key = part[..sep].trim();
        if key.is_empty() {
            return Err(format!("argument `{}` has an empty key", part.trim()));
        }
        call.args.insert(key.to_string(), unquote(&part[sep + 1..]));
    }
    Ok(call)
}

/// Byte offset of each line start, paired with the line (without `\n`).
fn lines_with_offsets(text: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in text.char_indices() {
        if c == '\n' {
            out.push((start, &text[start..i]));
            start = i + 1;
        }
    }
    if start <= text.len() {
        out.push((start, &text[start..]));
    }
    out
}

/// Parses raw model text into steps. Under Act-Only a Thought line is a
/// format violation.
pub fn parse_agent_output(
    raw: &str,
    framework: FrameworkKind,
) -> Result<Vec<AgentStep>, ParseError> {
    let text = raw.replace("\r\n", "\n");
    let lines = lines_with_offsets(&text);
    let mut steps: Vec<AgentStep> = Vec::new();
    let mut saw_marker = false;
    // Lines before this offset were consumed by a multi-line bracket payload.
    let mut skip_until = 0usize;
    // Whether non-marker lines continue the last step.
    let mut continuing = false;

    for &(offset, line) in &lines {
        if offset < skip_until {
            continue;
        }
        let trimmed = line.trim_start();
        let lead = line.len() - trimmed.len();
        if let Some(rest) = trimmed.strip_prefix(THOUGHT) {
            saw_marker = true;
            if !framework.has_thoughts() {
                return Err(ParseError::FormatViolation(
                    "Thought steps are not allowed under Act-Only".to_string(),
                ));
            }
            steps.push(AgentStep::thought(rest.trim()));
            continuing = true;
        } else if let Some(rest) = trimmed.strip_prefix(OBSERVATION) {
            saw_marker = true;
            steps.push(AgentStep::observation(rest.trim()));
            continuing = true;
        } else if let Some(rest) = trimmed.strip_prefix(ACTION) {
            saw_marker = true;
            continuing = false;
            let body = rest.trim_start();
            let body_offset = offset + lead + ACTION.len() + (rest.len() - body.len());
            let is_finish = body.starts_with(FINISH)
                && body[FINISH.len()..]
                    .chars()
                    .next()
                    .is_none_or(|c| c.is_whitespace() || c == '[');
            if is_finish {
                let after = body_offset + FINISH.len();
                let open = text[after..]
                    .find('[')
                    .map(|i| after + i)
                    .filter(|&o| text[after..o].trim().is_empty())
                    .ok_or_else(|| {
                        ParseError::MalformedAction("Finish without a bracketed response".into())
                    })?;
                let close = balanced_close(&text, open).ok_or_else(|| {
                    ParseError::MalformedAction("unbalanced bracket in Finish".into())
                })?;
                steps.push(AgentStep::finish(text[open + 1..close - 1].trim()));
                break;
            }
            match body.find('[') {
                Some(rel) => {
                    let open = body_offset + rel;
                    let close = balanced_close(&text, open).ok_or_else(|| {
                        ParseError::MalformedAction(format!(
                            "unbalanced bracket in action `{}`",
                            body.trim()
                        ))
                    })?;
                    let name = &text[body_offset..open];
                    let payload = &text[open + 1..close - 1];
                    let raw_text = text[body_offset..close].trim().to_string();
                    steps.push(match parse_call(name, Some(payload)) {
                        Ok(call) => AgentStep::Action {
                            text: raw_text,
                            call: Some(call),
                            diagnostic: None,
                        },
                        Err(d) => AgentStep::Action {
                            text: raw_text,
                            call: None,
                            diagnostic: Some(d),
                        },
                    });
                    skip_until = close;
                }
                None => {
                    if body.contains(']') {
                        return Err(ParseError::MalformedAction(format!(
                            "unbalanced bracket in action `{}`",
                            body.trim()
                        )));
                    }
                    let raw_text = body.trim().to_string();
                    steps.push(match parse_call(&raw_text, None) {
                        Ok(call) => AgentStep::Action {
                            text: raw_text,
                            call: Some(call),
                            diagnostic: None,
                        },
                        Err(d) => AgentStep::Action {
                            text: raw_text,
                            call: None,
                            diagnostic: Some(d),
                        },
                    });
                }
            }
        } else if continuing && !trimmed.trim().is_empty() {
            match steps.last_mut() {
                Some(AgentStep::Thought { text }) | Some(AgentStep::Observation { text }) => {
                    text.push('\n');
                    text.push_str(line.trim());
                }
                _ => {}
            }
        }
    }

    if !saw_marker {
        return Err(ParseError::Unstructured);
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thought_then_action() {
        let raw = "Thought: The client wants to know the year of construction of the house.\n\
                   Action: House Information [house_id: 1021111]";
        let steps = parse_agent_output(raw, FrameworkKind::ReAct).unwrap();
        assert_eq!(steps.len(), 2);
        assert_eq!(steps[0].kind(), StepKind::Thought);
        let call = steps[1].tool_call().unwrap();
        assert_eq!(call.tool_name, "House Information");
        assert_eq!(call.args["house_id"], "1021111");
    }

    #[test]
    fn finish_with_nested_brackets() {
        let raw =
            "Action: Finish [This house was built in 2020 [see listing [A]] ok]\nThought: ignored";
        let steps = parse_agent_output(raw, FrameworkKind::Raise).unwrap();
        assert_eq!(
            steps,
            vec![AgentStep::finish(
                "This house was built in 2020 [see listing [A]] ok"
            )]
        );
    }

    #[test]
    fn finish_spanning_lines() {
        let raw = "Thought: t\nAction: Finish [line one\nline two]";
        let steps = parse_agent_output(raw, FrameworkKind::ReAct).unwrap();
        assert_eq!(steps[1], AgentStep::finish("line one\nline two"));
    }

    #[test]
    fn error_kinds() {
        assert_eq!(
            parse_agent_output("", FrameworkKind::ReAct),
            Err(ParseError::Unstructured)
        );
        assert_eq!(
            parse_agent_output("just chatting", FrameworkKind::ReAct),
            Err(ParseError::Unstructured)
        );
        let err = parse_agent_output("Thought: x\nAction: Finish [done]", FrameworkKind::ActOnly)
            .unwrap_err();
        assert_eq!(err.code(), "format_violation");
        let err = parse_agent_output(
            "Action: House Information [house_id: 1",
            FrameworkKind::ReAct,
        )
        .unwrap_err();
        assert_eq!(err.code(), "malformed_action");
        let err = parse_agent_output("Action: Finish [unclosed", FrameworkKind::ReAct).unwrap_err();
        assert_eq!(err.code(), "malformed_action");
        let err = parse_agent_output("Action: Finish", FrameworkKind::ReAct).unwrap_err();
        assert_eq!(err.code(), "malformed_action");
    }

    #[test]
    fn quoted_args_keep_commas() {
        let raw = "Action: Search [name: \"Huarun 24 City, quiet\", city: 510100]";
        let steps = parse_agent_output(raw, FrameworkKind::ActOnly).unwrap();
        let call = steps[0].tool_call().unwrap();
        assert_eq!(call.args["name"], "Huarun 24 City, quiet");
        assert_eq!(call.args["city"], "510100");
    }

    #[test]
    fn bad_arguments_become_diagnostics() {
        let raw = "Action: House Information [house_id: 1, oops]";
        let steps = parse_agent_output(raw, FrameworkKind::ActOnly).unwrap();
        match &steps[0] {
            AgentStep::Action {
                call, diagnostic, ..
            } => {
                assert!(call.is_none());
                assert!(diagnostic.as_deref().unwrap().contains("oops"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn positional_and_bare_actions() {
        let steps = parse_agent_output(
            "Action: Recommend Listings [Conversation History]",
            FrameworkKind::ActOnly,
        )
        .unwrap();
        assert_eq!(
            steps[0].tool_call().unwrap().args[POSITIONAL_ARG],
            "Conversation History"
        );
        let steps =
            parse_agent_output("Action: Recommend Listings", FrameworkKind::ActOnly).unwrap();
        assert!(steps[0].tool_call().unwrap().args.is_empty());
    }

    #[test]
    fn continuation_lines_and_preamble() {
        let raw =
            "Scratchpad: something echoed\nThought: first\nsecond line\n\nAction: Finish [ok]";
        let steps = parse_agent_output(raw, FrameworkKind::Raise).unwrap();
        assert_eq!(steps[0], AgentStep::thought("first\nsecond line"));
        assert_eq!(steps.len(), 2);
    }

    #[test]
    fn render_round_trip_on_reference_trajectory() {
        let steps = vec![
            AgentStep::thought("The client wants to know the year of construction of the house."),
            AgentStep::action(ToolCall::new("House Information").arg("house_id", "1021111")),
            AgentStep::observation("House ID: 1021111; Construction Year: 2020"),
            AgentStep::thought(
                "Based on the information I've gathered, this house was built in 2020.",
            ),
            AgentStep::finish("This house was built in 2020, making it a relatively new property."),
        ];
        let rendered = render_steps(&steps);
        assert_eq!(
            parse_agent_output(&rendered, FrameworkKind::ReAct).unwrap(),
            steps
        );
    }
}
