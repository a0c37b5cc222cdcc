//! Task inference prompts for the five framework variants.
//!
//! Static text comes from `templates/<framework>.txt`; the per-turn sections
//! (scratchpad, examples, history, query) are rendered from working memory.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{render_steps, AgentStep};
use crate::memory::{FewShotMode, SystemPromptSpec, WorkingMemory};
use crate::retrieval::render_examples;
use crate::tools::ToolRegistry;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum PromptError {
    #[error("sequencing error: {0}")]
    Sequencing(String),
    #[error("prompt configuration error: {0}")]
    Configuration(String),
    #[error("unknown framework `{0}` (expected one of: act_only, react, react_scratchpad, react_examples, raise)")]
    UnknownFramework(String),
    #[error("unknown mode `{0}` (expected prompting or finetuned)")]
    UnknownMode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameworkKind {
    ActOnly,
    #[serde(rename = "react")]
    ReAct,
    #[serde(rename = "react_scratchpad")]
    ReActScratchpad,
    #[serde(rename = "react_examples")]
    ReActExamples,
    Raise,
}

impl FrameworkKind {
    pub const ALL: [FrameworkKind; 5] = [
        FrameworkKind::ActOnly,
        FrameworkKind::ReAct,
        FrameworkKind::ReActScratchpad,
        FrameworkKind::ReActExamples,
        FrameworkKind::Raise,
    ];

    pub fn has_thoughts(self) -> bool {
        self != FrameworkKind::ActOnly
    }

    pub fn has_scratchpad(self) -> bool {
        matches!(self, FrameworkKind::ReActScratchpad | FrameworkKind::Raise)
    }

    pub fn has_examples(self) -> bool {
        matches!(self, FrameworkKind::ReActExamples | FrameworkKind::Raise)
    }

    /// Identifier used in config, file names and URLs.
    pub fn slug(self) -> &'static str {
        match self {
            FrameworkKind::ActOnly => "act_only",
            FrameworkKind::ReAct => "react",
            FrameworkKind::ReActScratchpad => "react_scratchpad",
            FrameworkKind::ReActExamples => "react_examples",
            FrameworkKind::Raise => "raise",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            FrameworkKind::ActOnly => "Act-Only",
            FrameworkKind::ReAct => "ReAct",
            FrameworkKind::ReActScratchpad => "ReAct+Scratchpad",
            FrameworkKind::ReActExamples => "ReAct+Examples",
            FrameworkKind::Raise => "RAISE",
        }
    }

    /// Step keywords named in the instructions.
    pub fn step_keywords(self) -> &'static [&'static str] {
        match self {
            FrameworkKind::ActOnly => &["Action", "Observation", "Finish"],
            FrameworkKind::ReAct => &["Thought", "Action", "Observation", "Finish"],
            FrameworkKind::ReActScratchpad => &["Scratchpad", "Thought", "Action", "Finish"],
            FrameworkKind::ReActExamples => {
                &["Examples", "Thought", "Action", "Observation", "Finish"]
            }
            FrameworkKind::Raise => &[
                "Scratchpad",
                "Examples",
                "Thought",
                "Action",
                "Observation",
                "Finish",
            ],
        }
    }

    fn template_source(self) -> &'static str {
        match self {
            FrameworkKind::ActOnly => include_str!("../templates/act_only.txt"),
            FrameworkKind::ReAct => include_str!("../templates/react.txt"),
            FrameworkKind::ReActScratchpad => include_str!("../templates/react_scratchpad.txt"),
            FrameworkKind::ReActExamples => include_str!("../templates/react_examples.txt"),
            FrameworkKind::Raise => include_str!("../templates/raise.txt"),
        }
    }

    pub fn template(self) -> &'static Template {
        static TEMPLATES: LazyLock<Vec<Template>> = LazyLock::new(|| {
            FrameworkKind::ALL
                .iter()
                .map(|f| Template::parse(f.template_source()).expect("bundled template parses"))
                .collect()
        });
        &TEMPLATES[self as usize]
    }
}

impl fmt::Display for FrameworkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for FrameworkKind {
    type Err = PromptError;

    /// Accepts slugs and display names, ignoring case and `-`, `_`, `+`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | '+' | ' '))
            .collect::<String>()
            .to_lowercase();
        Ok(match key.as_str() {
            "actonly" | "act" => FrameworkKind::ActOnly,
            "react" => FrameworkKind::ReAct,
            "reactscratchpad" => FrameworkKind::ReActScratchpad,
            "reactexamples" => FrameworkKind::ReActExamples,
            "raise" => FrameworkKind::Raise,
            _ => return Err(PromptError::UnknownFramework(s.to_string())),
        })
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Prompting,
    Finetuned,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Prompting, Mode::Finetuned];

    pub fn slug(self) -> &'static str {
        match self {
            Mode::Prompting => "prompting",
            Mode::Finetuned => "finetuned",
        }
    }

    pub fn few_shot_mode(self) -> FewShotMode {
        match self {
            Mode::Prompting => FewShotMode::IncludeOneShot,
            Mode::Finetuned => FewShotMode::Omit,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for Mode {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().replace(['-', '_'], "").as_str() {
            "prompting" | "prompt" => Ok(Mode::Prompting),
            "finetuned" | "finetuning" | "sft" => Ok(Mode::Finetuned),
            _ => Err(PromptError::UnknownMode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Profile,
    StepInstructions,
    ToolDescriptions,
    OneShotExample,
    Scratchpad,
    Examples,
    ConversationHistory,
    CurrentQuery,
    TrajectorySoFar,
}

impl Section {
    /// Header of a per-turn section, as it appears at the start of its line.
    pub fn label(self) -> Option<&'static str> {
        match self {
            Section::Scratchpad => Some("Scratchpad"),
            Section::Examples => Some("Examples"),
            Section::ConversationHistory => Some("Conversation History"),
            Section::CurrentQuery => Some("Current Query"),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptLayout {
    pub framework: FrameworkKind,
    pub mode: Mode,
    pub sections: Vec<Section>,
}

impl PromptLayout {
    pub fn contains(&self, section: Section) -> bool {
        self.sections.contains(&section)
    }

    /// The comma-separated step keywords.
    pub fn step_keywords(&self) -> String {
        self.framework.step_keywords().join(", ")
    }
}

pub fn layout_for(framework: FrameworkKind, mode: Mode) -> PromptLayout {
    let mut sections = vec![
        Section::Profile,
        Section::StepInstructions,
        Section::ToolDescriptions,
    ];
    if mode == Mode::Prompting {
        sections.push(Section::OneShotExample);
    }
    if framework.has_scratchpad() {
        sections.push(Section::Scratchpad);
    }
    if framework.has_examples() {
        sections.push(Section::Examples);
    }
    sections.extend([
        Section::ConversationHistory,
        Section::CurrentQuery,
        Section::TrajectorySoFar,
    ]);
    PromptLayout {
        framework,
        mode,
        sections,
    }
}

/// Parsed template file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub profile: String,
    pub instructions: String,
    pub tools: String,
    pub one_shot: String,
    pub start: String,
}

const TOOLS_PLACEHOLDER: &str = "{{tool_descriptions}}";

impl Template {
    /// `[name]` lines open sections; `#` lines before the first section are
    /// comments.
    pub fn parse(source: &str) -> Result<Self, PromptError> {
        let mut sections: Vec<(String, Vec<&str>)> = Vec::new();
        for line in source.lines() {
            let t = line.trim_end();
            let is_header = t.len() > 2
                && t.starts_with('[')
                && t.ends_with(']')
                && t[1..t.len() - 1]
                    .bytes()
                    .all(|b| b.is_ascii_lowercase() || b == b'_');
            if is_header {
                sections.push((t[1..t.len() - 1].to_string(), Vec::new()));
            } else if let Some((_, lines)) = sections.last_mut() {
                lines.push(line);
            } else if !(t.is_empty() || t.starts_with('#')) {
                return Err(PromptError::Configuration(format!(
                    "template text before first section: `{t}`"
                )));
            }
        }
        let mut take = |name: &str| -> Result<String, PromptError> {
            let at = sections
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| PromptError::Configuration(format!("template lacks [{name}]")))?;
            let (_, lines) = sections.remove(at);
            Ok(lines.join("\n").trim_matches('\n').to_string())
        };
        let template = Self {
            profile: take("profile")?,
            instructions: take("instructions")?,
            tools: take("tools")?,
            one_shot: take("one_shot")?,
            start: take("start")?,
        };
        if let Some((extra, _)) = sections.first() {
            return Err(PromptError::Configuration(format!(
                "unknown template section [{extra}]"
            )));
        }
        if !template.tools.contains(TOOLS_PLACEHOLDER) {
            return Err(PromptError::Configuration(format!(
                "[tools] must contain {TOOLS_PLACEHOLDER}"
            )));
        }
        Ok(template)
    }
}

/// The system prompt a session of `framework`/`mode` starts with.
pub fn system_prompt_for(
    framework: FrameworkKind,
    mode: Mode,
    registry: &ToolRegistry,
) -> SystemPromptSpec {
    let t = framework.template();
    SystemPromptSpec::new(
        t.profile.clone(),
        t.instructions.clone(),
        registry
            .descriptors()
            .iter()
            .map(|d| d.name.clone())
            .collect(),
        mode.few_shot_mode(),
    )
    .expect("bundled templates have non-empty profile and instructions")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptOptions {
    /// Character budget for the rendered conversation history.
    pub history_budget_chars: usize,
}

impl Default for PromptOptions {
    fn default() -> Self {
        Self {
            history_budget_chars: 6000,
        }
    }
}

/// Renders completed turns as `User:`/`Agent:` lines, keeping the most recent
/// turns that fit in `budget` characters.
pub fn render_history(memory: &WorkingMemory, budget: usize) -> String {
    let rendered: Vec<String> = memory
        .history
        .completed()
        .map(|t| {
            format!(
                "User: {}\nAgent: {}",
                t.query,
                t.response.as_deref().unwrap_or_default()
            )
        })
        .collect();
    let mut kept = 0;
    let mut used = 0;
    for r in rendered.iter().rev() {
        let cost = r.chars().count() + usize::from(kept > 0);
        if used + cost > budget {
            break;
        }
        used += cost;
        kept += 1;
    }
    rendered[rendered.len() - kept..].join("\n")
}

fn labeled(label: &str, body: &str) -> String {
    if body.is_empty() {
        format!("{label}:")
    } else {
        format!("{label}: {body}")
    }
}

fn tool_descriptions(memory: &WorkingMemory, registry: &ToolRegistry) -> String {
    let names = &memory.system_prompt.tool_names;
    let mut subset = ToolRegistry::new();
    for d in registry.descriptors() {
        if names.iter().any(|n| n == &d.name) {
            subset
                .register(d.clone())
                .expect("registry names are unique");
        }
    }
    subset.render_tool_descriptions()
}

pub fn assemble(
    framework: FrameworkKind,
    mode: Mode,
    memory: &WorkingMemory,
    registry: &ToolRegistry,
) -> Result<String, PromptError> {
    assemble_with(framework, mode, memory, registry, &PromptOptions::default())
}

pub fn assemble_with(
    framework: FrameworkKind,
    mode: Mode,
    memory: &WorkingMemory,
    registry: &ToolRegistry,
    options: &PromptOptions,
) -> Result<String, PromptError> {
    let Some(pending) = memory.history.pending() else {
        return Err(PromptError::Sequencing(
            "prompt assembly needs a pending query".into(),
        ));
    };
    if memory.system_prompt.few_shot_mode != mode.few_shot_mode() {
        return Err(PromptError::Configuration(format!(
            "session few-shot mode {:?} does not match {mode} mode",
            memory.system_prompt.few_shot_mode
        )));
    }
    let layout = layout_for(framework, mode);
    let template = framework.template();
    let mut blocks = Vec::new();
    let mut live = vec![template.start.clone()];
    for section in &layout.sections {
        match section {
            Section::Profile => blocks.push(memory.system_prompt.profile.clone()),
            Section::StepInstructions => blocks.push(memory.system_prompt.instructions.clone()),
            Section::ToolDescriptions => blocks.push(
                template
                    .tools
                    .replace(TOOLS_PLACEHOLDER, &tool_descriptions(memory, registry)),
            ),
            Section::OneShotExample => blocks.push(template.one_shot.clone()),
            Section::Scratchpad => live.push(labeled("Scratchpad", &memory.scratchpad.render())),
            Section::Examples => live.push(labeled(
                "Examples",
                &render_examples(&memory.recalled_examples),
            )),
            Section::ConversationHistory => live.push(labeled(
                "Conversation History",
                &render_history(memory, options.history_budget_chars),
            )),
            Section::CurrentQuery => live.push(labeled("Current Query", &pending.query)),
            // Added by assemble_continuation.
            Section::TrajectorySoFar => {}
        }
    }
    blocks.push(live.join("\n"));
    Ok(blocks.join("\n\n"))
}

/// Appends the rendered trajectory to a base prompt so the model continues
/// after the latest Observation.
pub fn assemble_continuation(
    framework: FrameworkKind,
    base_prompt: &str,
    trajectory: &[AgentStep],
) -> Result<String, PromptError> {
    match trajectory.last() {
        None => Err(PromptError::Sequencing("trajectory is empty".into())),
        Some(AgentStep::Observation { .. }) => {
            if !framework.has_thoughts()
                && trajectory
                    .iter()
                    .any(|s| matches!(s, AgentStep::Thought { .. }))
            {
                return Err(PromptError::Sequencing(
                    "Act-Only trajectory contains a Thought step".into(),
                ));
            }
            Ok(format!("{base_prompt}\n{}", render_steps(trajectory)))
        }
        Some(AgentStep::Finish { .. }) => Err(PromptError::Sequencing(
            "trajectory already ended with Finish".into(),
        )),
        Some(_) => Err(PromptError::Sequencing(
            "continuation must follow an Observation".into(),
        )),
    }
}

/// Instruction appended after output that did not follow the step grammar.
pub fn corrective_suffix(framework: FrameworkKind) -> String {
    let markers = if framework.has_thoughts() {
        "\"Thought:\", \"Action:\""
    } else {
        "\"Action:\""
    };
    format!(
        "Your previous output did not follow the required format. Start every step on a new line with {markers}, call tools as Action: Tool Name [param: value], and end with Action: Finish [your response]."
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::Scratchpad;
    use crate::tools::ToolCall;

    fn memory(framework: FrameworkKind, mode: Mode) -> WorkingMemory {
        let registry = ToolRegistry::builtin();
        let mut m = WorkingMemory::new(
            system_prompt_for(framework, mode, &registry),
            Scratchpad::default(),
        );
        m.history.append_query("q").unwrap();
        m
    }

    #[test]
    fn framework_sections() {
        use FrameworkKind::*;
        for f in FrameworkKind::ALL {
            let l = layout_for(f, Mode::Prompting);
            assert_eq!(
                l.contains(Section::Scratchpad),
                matches!(f, Raise | ReActScratchpad)
            );
            assert_eq!(
                l.contains(Section::Examples),
                matches!(f, Raise | ReActExamples)
            );
            assert!(l.contains(Section::OneShotExample));
            assert!(!layout_for(f, Mode::Finetuned).contains(Section::OneShotExample));
        }
        assert_eq!(
            layout_for(Raise, Mode::Prompting).step_keywords(),
            "Scratchpad, Examples, Thought, Action, Observation, Finish"
        );
        assert_eq!(
            layout_for(ActOnly, Mode::Prompting).step_keywords(),
            "Action, Observation, Finish"
        );
    }

    #[test]
    fn instructions_name_the_step_keywords() {
        for f in FrameworkKind::ALL {
            let t = f.template();
            let expected = format!(
                "using the steps of {}, based on",
                f.step_keywords().join(", ")
            );
            assert!(t.instructions.contains(&expected), "{f}");
            let anti = if f == FrameworkKind::ReActScratchpad {
                "Do not repeat actions that have already been executed"
            } else {
                "Avoid repeating actions that have been used before"
            };
            assert!(t.instructions.contains(anti), "{f}");
            assert_eq!(t.start, "Let's get started:");
        }
    }

    #[test]
    fn parse_names_round_trip() {
        for f in FrameworkKind::ALL {
            assert_eq!(f.slug().parse::<FrameworkKind>().unwrap(), f);
            assert_eq!(f.display_name().parse::<FrameworkKind>().unwrap(), f);
            let json = serde_json::to_string(&f).unwrap();
            assert_eq!(json, format!("\"{}\"", f.slug()));
        }
        assert!("X".parse::<FrameworkKind>().is_err());
        assert_eq!("fine-tuned".parse::<Mode>().unwrap(), Mode::Finetuned);
    }

    #[test]
    fn ends_with_history_and_query() {
        for f in FrameworkKind::ALL {
            for mode in Mode::ALL {
                let p = assemble(f, mode, &memory(f, mode), &ToolRegistry::builtin()).unwrap();
                assert!(
                    p.ends_with("Conversation History:\nCurrent Query: q"),
                    "{f}/{mode}"
                );
                let live = &p[p.rfind("Let's get started:").unwrap()..];
                assert_eq!(live.contains("\nScratchpad:"), f.has_scratchpad());
                assert_eq!(live.contains("\nExamples:"), f.has_examples());
                assert_eq!(p.contains("Here is an example:"), mode == Mode::Prompting);
            }
        }
    }

    #[test]
    fn assemble_requires_pending_query_and_matching_mode() {
        let registry = ToolRegistry::builtin();
        let mut m = memory(FrameworkKind::Raise, Mode::Prompting);
        m.history.commit_response("a").unwrap();
        assert!(matches!(
            assemble(FrameworkKind::Raise, Mode::Prompting, &m, &registry),
            Err(PromptError::Sequencing(_))
        ));
        let m = memory(FrameworkKind::Raise, Mode::Prompting);
        assert!(matches!(
            assemble(FrameworkKind::Raise, Mode::Finetuned, &m, &registry),
            Err(PromptError::Configuration(_))
        ));
    }

    #[test]
    fn history_truncation_drops_oldest_whole_turns() {
        let mut m = memory(FrameworkKind::ReAct, Mode::Prompting);
        m.history.commit_response("a").unwrap();
        for i in 0..3 {
            m.history.append_query(format!("query {i}")).unwrap();
            m.history.commit_response(format!("answer {i}")).unwrap();
        }
        let full = render_history(&m, usize::MAX);
        assert_eq!(full.lines().count(), 8);
        let one = "User: query 2\nAgent: answer 2";
        assert_eq!(render_history(&m, one.len()), one);
        assert_eq!(render_history(&m, one.len() - 1), "");
        let two = render_history(&m, one.len() * 2 + 1);
        assert_eq!(
            two,
            "User: query 1\nAgent: answer 1\nUser: query 2\nAgent: answer 2"
        );
    }

    #[test]
    fn continuation_appends_steps() {
        let base = "prompt";
        let steps = vec![
            AgentStep::thought("look it up"),
            AgentStep::action(ToolCall::new("House Information").arg("house_id", "1021111")),
            AgentStep::observation("House ID: 1021111"),
        ];
        let p = assemble_continuation(FrameworkKind::ReAct, base, &steps).unwrap();
        assert!(p.starts_with(base));
        assert!(p.ends_with("Observation: House ID: 1021111"));
        assert!(assemble_continuation(FrameworkKind::ReAct, base, &[]).is_err());
        let mut done = steps.clone();
        done.push(AgentStep::finish("x"));
        assert!(assemble_continuation(FrameworkKind::ReAct, base, &done).is_err());
        assert!(assemble_continuation(FrameworkKind::ActOnly, base, &steps).is_err());
    }

    #[test]
    fn template_parser_rejects_bad_sources() {
        assert!(Template::parse("stray\n[profile]\nx").is_err());
        assert!(Template::parse("[profile]\nx").is_err());
        let ok = "[profile]\np\n[instructions]\ni\n[tools]\n{{tool_descriptions}}\n[one_shot]\no\n[start]\ns\n";
        assert!(Template::parse(ok).is_ok());
        assert!(Template::parse(&format!("{ok}[extra]\n")).is_err());
    }
}
