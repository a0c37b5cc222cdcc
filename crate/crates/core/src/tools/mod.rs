//! Tool module: descriptor registry, call validation and execution of the
//! twelve real-estate tools against a read-only fixture store.

mod exec;
mod fixtures;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use exec::{execute, NO_RECORD_FOUND};
pub use fixtures::{
    Community, Consultant, FixtureCollections, FixtureStore, HouseRecord, Layout, MarketNote,
    Policy, PolicyKind, PricePoint, PriceSeries, PriceSubject, Transaction,
};

/// Argument key used when an action carries a bare bracket payload
/// (`Recommend Listings [Conversation History]`) instead of `key: value` pairs.
pub const POSITIONAL_ARG: &str = "_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    /// Numeric record identifier.
    Id,
    Text,
    /// Supplied by the runtime from the session's conversation history.
    ConversationHistory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
}

impl ParamSpec {
    pub fn new(name: &str, kind: ParamKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
        }
    }

    /// Label used in rendered descriptions, e.g. `house_id` or `Conversation History`.
    fn label(&self) -> &str {
        match self.kind {
            ParamKind::ConversationHistory => "Conversation History",
            _ => &self.name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub name: String,
    pub function_description: String,
    pub required_params: Vec<ParamSpec>,
    #[serde(default)]
    pub optional_params: Vec<ParamSpec>,
    #[serde(default)]
    pub usage_examples: Vec<String>,
}

/// A tool invocation as planned by the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool_name: String,
    pub args: BTreeMap<String, String>,
    #[serde(default)]
    pub turn_index: u32,
}

impl ToolCall {
    pub fn new(tool_name: impl Into<String>) -> Self {
        Self {
            tool_name: tool_name.into(),
            args: BTreeMap::new(),
            turn_index: 0,
        }
    }

    pub fn arg(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.args.insert(key.into(), value.into());
        self
    }

    /// Renders the call in the step grammar: `Name [k: v, k2: v2]`.
    pub fn render(&self) -> String {
        if self.args.is_empty() {
            return self.tool_name.clone();
        }
        let parts: Vec<String> = self
            .args
            .iter()
            .map(|(k, v)| {
                let v = quote_if_needed(v);
                if k == POSITIONAL_ARG {
                    v
                } else {
                    format!("{k}: {v}")
                }
            })
            .collect();
        format!("{} [{}]", self.tool_name, parts.join(", "))
    }
}

fn quote_if_needed(value: &str) -> String {
    let needs = value.is_empty()
        || value.contains([',', '"', '[', ']', ':', '\n'])
        || value.trim() != value;
    if needs {
        format!("\"{}\"", value.replace('\\', "\\\\").replace('"', "\\\""))
    } else {
        value.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationStatus {
    Ok,
    NotFound,
    ToolError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub tool_name: String,
    pub formatted_text: String,
    pub status: ObservationStatus,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ToolError {
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("tool `{tool}` is missing required parameter `{param}`")]
    MissingParam { tool: String, param: String },
    #[error("tool `{tool}` parameter `{param}` has unparseable value `{value}`")]
    InvalidParam {
        tool: String,
        param: String,
        value: String,
    },
    #[error("tool `{0}` is already registered")]
    DuplicateTool(String),
    #[error("invalid descriptor for `{0}`: {1}")]
    InvalidDescriptor(String, String),
}

impl ToolError {
    /// Short machine-readable tag used in traces.
    pub fn code(&self) -> &'static str {
        match self {
            ToolError::UnknownTool(_) => "unknown_tool",
            ToolError::MissingParam { .. } => "missing_param",
            ToolError::InvalidParam { .. } => "invalid_param",
            ToolError::DuplicateTool(_) => "duplicate_tool",
            ToolError::InvalidDescriptor(..) => "invalid_descriptor",
        }
    }
}

/// The twelve tool names, in registration order.
pub mod names {
    pub const CONSULTANT_INFORMATION: &str = "Real Estate Consultant Information";
    pub const HOUSE_INFORMATION: &str = "House Information";
    pub const COMMUNITY_INFORMATION: &str = "Community Information";
    pub const HOUSE_LAYOUT_ANALYSIS: &str = "House Layout Analysis";
    pub const HOUSE_PRICE_CHANGES: &str = "House Price Changes";
    pub const COMMUNITY_PRICE_CHANGES: &str = "Community Price Changes";
    pub const COMMUNITY_TRANSACTIONS: &str = "Community Transactions";
    pub const TAX_POLICY: &str = "Tax Policy";
    pub const LOAN_POLICY: &str = "Loan Policy";
    pub const MARKET_ANALYSIS: &str = "Market Analysis";
    pub const RECOMMEND_LISTINGS: &str = "Recommend Listings";
    pub const VALUE_REPORT: &str = "Value Report";
}

/// Ordered collection of tool descriptors.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolRegistry {
    descriptors: Vec<ToolDescriptor>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry holding the twelve built-in tools.
    pub fn builtin() -> Self {
        let mut registry = Self::new();
        registry
            .register_builtin_tools()
            .expect("empty registry accepts builtin tools");
        registry
    }

    pub fn register(&mut self, descriptor: ToolDescriptor) -> Result<(), ToolError> {
        if descriptor.name.trim().is_empty() {
            return Err(ToolError::InvalidDescriptor(
                descriptor.name,
                "empty name".into(),
            ));
        }
        if self.get(&descriptor.name).is_some() {
            return Err(ToolError::DuplicateTool(descriptor.name));
        }
        for opt in &descriptor.optional_params {
            if descriptor
                .required_params
                .iter()
                .any(|r| r.name == opt.name)
            {
                return Err(ToolError::InvalidDescriptor(
                    descriptor.name,
                    format!("`{}` is both required and optional", opt.name),
                ));
            }
        }
        self.descriptors.push(descriptor);
        Ok(())
    }

    pub fn register_builtin_tools(&mut self) -> Result<(), ToolError> {
        use names::*;
        let id = |name: &str| ParamSpec::new(name, ParamKind::Id);
        let tools = [
            (
                CONSULTANT_INFORMATION,
                "Retrieves the consultant's name, contact details, WeChat ID, ranking, performance metrics, and more.",
                id("agent_ucid"),
            ),
            (
                HOUSE_INFORMATION,
                "Offers essential details about a property, including its size, price, floor level, school district presence, and renovation status.",
                id("house_id"),
            ),
            (
                COMMUNITY_INFORMATION,
                "Provides insights into the community, covering aspects like green spaces, property management, building specifications, proximity to subway stations, schools, and medical facilities.",
                id("resblock_id"),
            ),
            (
                HOUSE_LAYOUT_ANALYSIS,
                "Analyzes the strengths and weaknesses of a property's layout.",
                id("frame_id"),
            ),
            (
                HOUSE_PRICE_CHANGES,
                "Tracks price fluctuations for a specific property.",
                id("house_id"),
            ),
            (
                COMMUNITY_PRICE_CHANGES,
                "Reports on average price trends within a particular community.",
                id("resblock_id"),
            ),
            (
                COMMUNITY_TRANSACTIONS,
                "Accesses recent transaction data from the same community.",
                id("resblock_id"),
            ),
            (
                TAX_POLICY,
                "Updates on the latest tax regulations and implications.",
                id("city_id"),
            ),
            (
                LOAN_POLICY,
                "Delivers current information on loan policies.",
                id("city_id"),
            ),
            (
                MARKET_ANALYSIS,
                "Provides up-to-date real estate market insights.",
                id("city_id"),
            ),
            (
                RECOMMEND_LISTINGS,
                "Suggests property listings to customers based on their conversation history and inferred needs, including rationale for each recommendation.",
                ParamSpec::new("conversation_history", ParamKind::ConversationHistory),
            ),
            (
                VALUE_REPORT,
                "Generates a comprehensive value report card for a property, aimed at engaging customers and encouraging them to share their contact details.",
                id("house_id"),
            ),
        ];
        for (name, description, param) in tools {
            let example = match param.kind {
                ParamKind::ConversationHistory => format!("{name} [Conversation History]"),
                _ => format!("{name} [{}: <id>]", param.name),
            };
            self.register(ToolDescriptor {
                name: name.to_string(),
                function_description: description.to_string(),
                required_params: vec![param],
                optional_params: Vec::new(),
                usage_examples: vec![example],
            })?;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ToolDescriptor> {
        self.descriptors.iter().find(|d| d.name == name)
    }

    pub fn descriptors(&self) -> &[ToolDescriptor] {
        &self.descriptors
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    /// Checks the call against its descriptor and returns a normalized copy.
    ///
    /// A bare positional payload is bound to the tool's single required
    /// parameter. Parameters of kind [`ParamKind::ConversationHistory`] are
    /// satisfied by the runtime and never need to be spelled out.
    pub fn validate_call(&self, call: &ToolCall) -> Result<ToolCall, ToolError> {
        let descriptor = self
            .get(call.tool_name.trim())
            .ok_or_else(|| ToolError::UnknownTool(call.tool_name.clone()))?;
        let mut args = call.args.clone();
        if let Some(positional) = args.remove(POSITIONAL_ARG) {
            if let [only] = descriptor.required_params.as_slice() {
                if only.kind != ParamKind::ConversationHistory {
                    args.entry(only.name.clone()).or_insert(positional);
                }
            }
        }
        for param in &descriptor.required_params {
            if param.kind == ParamKind::ConversationHistory {
                continue;
            }
            let value = args
                .get(&param.name)
                .ok_or_else(|| ToolError::MissingParam {
                    tool: descriptor.name.clone(),
                    param: param.name.clone(),
                })?;
            check_value(descriptor, param, value)?;
        }
        for param in &descriptor.optional_params {
            if let Some(value) = args.get(&param.name) {
                check_value(descriptor, param, value)?;
            }
        }
        Ok(ToolCall {
            tool_name: descriptor.name.clone(),
            args,
            turn_index: call.turn_index,
        })
    }

    /// Numbered `(i) Name [param]: description` lines in registration order.
    pub fn render_tool_descriptions(&self) -> String {
        self.descriptors
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let params: Vec<&str> = d.required_params.iter().map(ParamSpec::label).collect();
                format!(
                    "({}) {} [{}]: {}",
                    i + 1,
                    d.name,
                    params.join(", "),
                    d.function_description
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn check_value(
    descriptor: &ToolDescriptor,
    param: &ParamSpec,
    value: &str,
) -> Result<(), ToolError> {
    let ok = match param.kind {
        ParamKind::Id => is_numeric_id(value.trim()),
        ParamKind::Text => !value.trim().is_empty(),
        ParamKind::ConversationHistory => true,
    };
    if ok {
        Ok(())
    } else {
        Err(ToolError::InvalidParam {
            tool: descriptor.name.clone(),
            param: param.name.clone(),
            value: value.to_string(),
        })
    }
}

pub(crate) fn is_numeric_id(value: &str) -> bool {
    !value.is_empty() && value.len() <= 20 && value.bytes().all(|b| b.is_ascii_digit())
}

impl fmt::Display for ToolCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}
