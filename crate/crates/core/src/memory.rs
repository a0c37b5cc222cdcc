//! Working memory of one dialogue session.
//!
//! Conversation history and scratchpad live for the whole dialogue; the task
//! trajectory and recalled examples are reset at the start of every turn.
//! All mutations can be expressed as [`MemoryOp`] values so that a recorded
//! log replays to an identical [`WorkingMemory`].

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::LazyLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::AgentStep;
use crate::retrieval::RetrievedExample;
use crate::tools::is_numeric_id;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum MemoryError {
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("sequencing error: {0}")]
    Sequencing(String),
    #[error("validation error: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FewShotMode {
    IncludeOneShot,
    Omit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemPromptSpec {
    pub profile: String,
    pub instructions: String,
    /// Names of the registered tools whose descriptions the prompt carries.
    pub tool_names: Vec<String>,
    pub few_shot_mode: FewShotMode,
}

impl SystemPromptSpec {
    pub fn new(
        profile: impl Into<String>,
        instructions: impl Into<String>,
        tool_names: Vec<String>,
        few_shot_mode: FewShotMode,
    ) -> Result<Self, MemoryError> {
        let spec = Self {
            profile: profile.into(),
            instructions: instructions.into(),
            tool_names,
            few_shot_mode,
        };
        if spec.profile.trim().is_empty() || spec.instructions.trim().is_empty() {
            return Err(MemoryError::Configuration(
                "system prompt profile and instructions must be non-empty".into(),
            ));
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub turn_index: u32,
    pub query: String,
    /// `None` while the turn is being answered.
    pub response: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationHistory {
    turns: Vec<Turn>,
}

impl ConversationHistory {
    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn pending(&self) -> Option<&Turn> {
        self.turns.last().filter(|t| t.response.is_none())
    }

    /// Turns with a committed response.
    pub fn completed(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(|t| t.response.is_some())
    }

    pub fn next_index(&self) -> u32 {
        self.turns.len() as u32 + 1
    }

    /// Opens a new turn; returns its index.
    pub fn append_query(&mut self, query: impl Into<String>) -> Result<u32, MemoryError> {
        if let Some(p) = self.pending() {
            return Err(MemoryError::Sequencing(format!(
                "turn {} is still waiting for a response",
                p.turn_index
            )));
        }
        let turn_index = self.next_index();
        self.turns.push(Turn {
            turn_index,
            query: query.into(),
            response: None,
        });
        Ok(turn_index)
    }

    pub fn commit_response(&mut self, response: impl Into<String>) -> Result<(), MemoryError> {
        match self.turns.last_mut() {
            Some(turn) if turn.response.is_none() => {
                turn.response = Some(response.into());
                Ok(())
            }
            _ => Err(MemoryError::Sequencing("no pending turn to answer".into())),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskTrajectory {
    pub query_ref: u32,
    pub steps: Vec<AgentStep>,
}

impl TaskTrajectory {
    pub fn push(&mut self, step: AgentStep) -> Result<(), MemoryError> {
        if self.steps.last().is_some_and(AgentStep::is_finish) {
            return Err(MemoryError::Sequencing(
                "trajectory already ended with Finish".into(),
            ));
        }
        self.steps.push(step);
        Ok(())
    }

    pub fn is_finished(&self) -> bool {
        self.steps.last().is_some_and(AgentStep::is_finish)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    House,
    Community,
    Consultant,
}

impl EntityKind {
    fn label(self) -> (&'static str, &'static str) {
        match self {
            EntityKind::House => ("House", "House"),
            EntityKind::Community => ("Community", "Community"),
            EntityKind::Consultant => ("Consultant", "Agent UCID"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub entity_kind: EntityKind,
    pub entity_id: String,
    pub display_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolNote {
    pub tool_name: String,
    pub observation_text: String,
    pub turn_index: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scratchpad {
    pub session_context: BTreeMap<String, String>,
    pub entity: Option<Entity>,
    pub tool_notes: Vec<ToolNote>,
}

/// Result of scanning a query for a product link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EntityUpdate {
    Unchanged,
    Updated(Entity),
    /// A link pattern matched but its id was unusable.
    Rejected(String),
}

static PAYLOAD_KEYS: [(EntityKind, &str, &str); 3] = [
    (EntityKind::House, "houseCode", "houseName"),
    (EntityKind::Community, "resblockCode", "resblockName"),
    (EntityKind::Consultant, "agentUcid", "agentName"),
];

static PAYLOAD: LazyLock<Vec<(EntityKind, Regex, Regex)>> = LazyLock::new(|| {
    PAYLOAD_KEYS
        .iter()
        .map(|(kind, code, name)| {
            let q = r#"["“”]"#;
            let code_re = Regex::new(&format!(r#"{q}{code}{q}\s*:\s*{q}([^"“”]*){q}"#))
                .expect("payload pattern");
            let name_re = Regex::new(&format!(r#"{q}{name}{q}\s*:\s*{q}([^"“”]*){q}"#))
                .expect("payload pattern");
            (*kind, code_re, name_re)
        })
        .collect()
});

static LINK_URL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"https?://[^\s"'<>]*?/(house|ershoufang|community|xiaoqu|agent)/([^/\s"'<>?#.]*)"#)
        .expect("url pattern")
});

/// Finds the last product link in `query`.
fn find_link(query: &str) -> Option<(usize, EntityKind, String, Option<String>)> {
    let mut best: Option<(usize, EntityKind, String, Option<String>)> = None;
    for (kind, code_re, name_re) in PAYLOAD.iter() {
        for cap in code_re.captures_iter(query) {
            let pos = cap.get(0).map_or(0, |m| m.start());
            let name = name_re
                .captures(query)
                .map(|c| c[1].trim().to_string())
                .filter(|n| !n.is_empty());
            if best.as_ref().is_none_or(|b| pos >= b.0) {
                best = Some((pos, *kind, cap[1].trim().to_string(), name));
            }
        }
    }
    for cap in LINK_URL.captures_iter(query) {
        let pos = cap.get(0).map_or(0, |m| m.start());
        let kind = match &cap[1] {
            "house" | "ershoufang" => EntityKind::House,
            "community" | "xiaoqu" => EntityKind::Community,
            _ => EntityKind::Consultant,
        };
        if best.as_ref().is_none_or(|b| pos >= b.0) {
            best = Some((pos, kind, cap[2].to_string(), None));
        }
    }
    best
}

impl Scratchpad {
    /// Builds the dialogue-start scratchpad from role names and the clock.
    pub fn init_session_context(
        roles: &BTreeMap<String, String>,
        clock: DateTime<Utc>,
    ) -> Result<Self, MemoryError> {
        for key in ["user_role", "agent_role"] {
            if roles.get(key).is_none_or(|v| v.trim().is_empty()) {
                return Err(MemoryError::Configuration(format!(
                    "session roles must include `{key}`"
                )));
            }
        }
        let mut session_context = roles.clone();
        session_context.insert("date".into(), clock.format("%Y-%m-%d").to_string());
        session_context.insert("time".into(), clock.format("%H:%M").to_string());
        Ok(Self {
            session_context,
            entity: None,
            tool_notes: Vec::new(),
        })
    }

    pub fn update_entity_from_query(&mut self, query: &str) -> EntityUpdate {
        let Some((_, kind, id, name)) = find_link(query) else {
            return EntityUpdate::Unchanged;
        };
        if !is_numeric_id(&id) {
            let warning = format!("ignored {kind:?} link with unusable id `{id}`").to_lowercase();
            tracing::warn!("{warning}");
            return EntityUpdate::Rejected(warning);
        }
        let entity = Entity {
            entity_kind: kind,
            entity_id: id,
            display_name: name,
        };
        self.entity = Some(entity.clone());
        EntityUpdate::Updated(entity)
    }

    pub fn record_tool_note(
        &mut self,
        tool_name: impl Into<String>,
        observation_text: impl Into<String>,
        turn_index: u32,
    ) -> Result<(), MemoryError> {
        let observation_text = observation_text.into();
        if observation_text.trim().is_empty() {
            return Err(MemoryError::Validation(
                "tool note needs a non-empty observation".into(),
            ));
        }
        self.tool_notes.push(ToolNote {
            tool_name: tool_name.into(),
            observation_text,
            turn_index,
        });
        Ok(())
    }

    /// Canonical rendering: session context, then entity, then tool notes in
    /// the order they were recorded.
    pub fn render(&self) -> String {
        let mut lines = Vec::new();
        if !self.session_context.is_empty() {
            let mut keys: Vec<&String> = Vec::new();
            for k in ["user_role", "agent_role", "date", "time"] {
                if let Some((key, _)) = self.session_context.get_key_value(k) {
                    keys.push(key);
                }
            }
            for k in self.session_context.keys() {
                if !keys.contains(&k) {
                    keys.push(k);
                }
            }
            let pairs: Vec<String> = keys
                .iter()
                .map(|k| format!("{}: {}", k, self.session_context[*k]))
                .collect();
            lines.push(format!("[Session Context]: {}", pairs.join("; ")));
        }
        if let Some(e) = &self.entity {
            let (title, id_label) = e.entity_kind.label();
            let id_label = if id_label == title {
                format!("{title} ID")
            } else {
                id_label.to_string()
            };
            let mut line = format!("[Current {title}]: {id_label}: {}", e.entity_id);
            if let Some(name) = &e.display_name {
                line.push_str(&format!("; {title} Name: {name}"));
            }
            lines.push(line);
        }
        for note in &self.tool_notes {
            lines.push(format!("[{}]: {}", note.tool_name, note.observation_text));
        }
        lines.join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub query: String,
    pub response: String,
}

/// Long-term store of query-response pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamplePool {
    examples: Vec<ExampleRecord>,
}

impl ExamplePool {
    pub fn new(examples: Vec<ExampleRecord>) -> Result<Self, MemoryError> {
        let mut seen = std::collections::BTreeSet::new();
        for e in &examples {
            if !seen.insert(e.id.as_str()) {
                return Err(MemoryError::Validation(format!(
                    "duplicate example id `{}`",
                    e.id
                )));
            }
            if e.query.trim().is_empty() || e.response.trim().is_empty() {
                return Err(MemoryError::Validation(format!(
                    "example `{}` has an empty query or response",
                    e.id
                )));
            }
        }
        Ok(Self { examples })
    }

    /// Reads one JSON object per line with fields `id`, `query`, `response`.
    pub fn load(path: &Path) -> Result<Self, crate::Error> {
        let text = fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        let records = crate::jsonl::parse_lines::<ExampleRecord>(&text, path)?;
        Ok(Self::new(records)?)
    }

    /// The bundled example pool.
    pub fn canonical() -> Self {
        let text = include_str!("../fixtures/examples.jsonl");
        let records = crate::jsonl::parse_lines::<ExampleRecord>(text, Path::new("examples.jsonl"))
            .expect("bundled examples parse");
        Self::new(records).expect("bundled examples are valid")
    }

    pub fn examples(&self) -> &[ExampleRecord] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkingMemory {
    pub system_prompt: SystemPromptSpec,
    pub history: ConversationHistory,
    pub trajectory: TaskTrajectory,
    pub scratchpad: Scratchpad,
    pub recalled_examples: Vec<RetrievedExample>,
}

/// A single memory mutation, as recorded in turn transcripts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum MemoryOp {
    BeginTurn,
    AppendQuery {
        query: String,
    },
    SetRecalled {
        examples: Vec<RetrievedExample>,
    },
    UpdateEntity {
        query: String,
    },
    PushStep {
        step: AgentStep,
    },
    RecordToolNote {
        tool_name: String,
        observation_text: String,
        turn_index: u32,
    },
    CommitResponse {
        response: String,
    },
}

impl WorkingMemory {
    pub fn new(system_prompt: SystemPromptSpec, scratchpad: Scratchpad) -> Self {
        Self {
            system_prompt,
            history: ConversationHistory::default(),
            trajectory: TaskTrajectory {
                query_ref: 1,
                steps: Vec::new(),
            },
            scratchpad,
            recalled_examples: Vec::new(),
        }
    }

    /// Resets turn-level memory. History and scratchpad are untouched.
    pub fn begin_turn(&mut self) {
        self.trajectory = TaskTrajectory {
            query_ref: self.history.next_index(),
            steps: Vec::new(),
        };
        self.recalled_examples.clear();
    }

    /// Applies one operation. Entity updates report their outcome.
    pub fn apply(&mut self, op: &MemoryOp) -> Result<EntityUpdate, MemoryError> {
        match op {
            MemoryOp::BeginTurn => self.begin_turn(),
            MemoryOp::AppendQuery { query } => {
                let index = self.history.append_query(query.clone())?;
                self.trajectory.query_ref = index;
            }
            MemoryOp::SetRecalled { examples } => self.recalled_examples = examples.clone(),
            MemoryOp::UpdateEntity { query } => {
                return Ok(self.scratchpad.update_entity_from_query(query));
            }
            MemoryOp::PushStep { step } => self.trajectory.push(step.clone())?,
            MemoryOp::RecordToolNote {
                tool_name,
                observation_text,
                turn_index,
            } => self.scratchpad.record_tool_note(
                tool_name.clone(),
                observation_text.clone(),
                *turn_index,
            )?,
            MemoryOp::CommitResponse { response } => {
                self.history.commit_response(response.clone())?
            }
        }
        Ok(EntityUpdate::Unchanged)
    }

    /// Replays a log on top of `self`.
    pub fn replay<'a>(
        &mut self,
        ops: impl IntoIterator<Item = &'a MemoryOp>,
    ) -> Result<(), MemoryError> {
        for op in ops {
            self.apply(op)?;
        }
        Ok(())
    }

    /// Structured snapshot with keys `system_prompt`, `history`, `trajectory`,
    /// `scratchpad` and `recalled_examples`.
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("memory serializes")
    }
}
