//! The agent loop for one user query.
//!
//! Per turn: open the turn, recall examples, refresh the scratchpad entity,
//! then alternate model calls and tool executions until the model finishes,
//! the loop cap is hit, or the backend fails. Every memory mutation is logged
//! as a [`MemoryOp`] so the turn can be replayed.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::render_steps;
use crate::llm::{
    parse_agent_output, AgentStep, CompletionRequest, LanguageModel, ParseError, SamplingParams,
};
use crate::memory::{
    EntityUpdate, ExamplePool, MemoryOp, Scratchpad, TaskTrajectory, WorkingMemory,
};
use crate::prompt::{
    assemble_continuation, assemble_with, corrective_suffix, system_prompt_for, FrameworkKind,
    Mode, PromptOptions,
};
use crate::retrieval::{history_tail, Embedder, ExampleIndex, HashedBowEmbedder};
use crate::tools::{execute, FixtureStore, ObservationStatus, ToolRegistry};

pub const DEFAULT_FALLBACK: &str = "Sorry, I can't give you a reliable answer right now. Let me check the details and get back to you shortly.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    pub framework: FrameworkKind,
    pub mode: Mode,
    pub max_loops: u32,
    pub k_examples: usize,
    pub history_window: usize,
    pub history_budget_chars: usize,
    pub fallback_response: String,
    /// Stop the dialogue at the first system error.
    pub abort_on_system_error: bool,
    pub sampling: SamplingParams,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            framework: FrameworkKind::Raise,
            mode: Mode::Prompting,
            max_loops: 5,
            k_examples: 3,
            history_window: 2,
            history_budget_chars: PromptOptions::default().history_budget_chars,
            fallback_response: DEFAULT_FALLBACK.to_string(),
            abort_on_system_error: false,
            sampling: SamplingParams::default(),
        }
    }
}

impl LoopConfig {
    pub fn new(framework: FrameworkKind, mode: Mode) -> Self {
        Self {
            framework,
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_loops == 0 {
            return Err(Error::Validation("max_loops must be at least 1".into()));
        }
        if self.fallback_response.trim().is_empty() {
            return Err(Error::Validation(
                "fallback_response must be non-empty".into(),
            ));
        }
        self.sampling.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Finish,
    LoopCap,
    SystemError,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub per_model_call_seconds: Vec<f64>,
}

/// One record of the per-turn event log; mirrors a trajectory step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step_kind: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_name: Option<String>,
    pub duration_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnResult {
    pub turn_index: u32,
    pub query: String,
    pub response: String,
    pub trajectory: TaskTrajectory,
    pub termination: Termination,
    pub timings: Timings,
    pub events: Vec<TraceEvent>,
    /// Recoverable problems met during the turn (parse errors, tool errors,
    /// rejected links, backend failures).
    pub diagnostics: Vec<String>,
    pub model_calls: u32,
    pub tool_executions: u32,
    /// Memory operations applied during the turn, in order.
    pub ops: Vec<MemoryOp>,
    /// Every prompt sent to the model, in order.
    #[serde(default, skip_serializing)]
    pub prompts: Vec<String>,
}

impl TurnResult {
    /// Copy with all wall-clock fields zeroed, for comparing runs.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.timings = Timings {
            total_seconds: 0.0,
            per_model_call_seconds: vec![0.0; r.timings.per_model_call_seconds.len()],
        };
        r.events.iter_mut().for_each(|e| e.duration_seconds = 0.0);
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Finish,
    LoopCap,
    SystemError,
}

pub fn decide_termination(
    last_step: Option<&AgentStep>,
    iterations: u32,
    max_loops: u32,
    system_error: bool,
) -> Decision {
    if system_error {
        Decision::SystemError
    } else if last_step.is_some_and(AgentStep::is_finish) {
        Decision::Finish
    } else if iterations >= max_loops {
        Decision::LoopCap
    } else {
        Decision::Continue
    }
}

/// Read-only handles shared by every session.
#[derive(Clone)]
pub struct Resources {
    pub registry: Arc<ToolRegistry>,
    pub store: Arc<FixtureStore>,
    pub embedder: Arc<dyn Embedder>,
    pub index: Arc<ExampleIndex>,
}

impl std::fmt::Debug for Resources {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Resources")
            .field("tools", &self.registry.len())
            .field("examples", &self.index.len())
            .field("embedder", &self.embedder.id())
            .finish()
    }
}

impl Resources {
    pub fn new(
        store: FixtureStore,
        pool: &ExamplePool,
        embedder: Arc<dyn Embedder>,
    ) -> Result<Self> {
        let index = if pool.is_empty() {
            ExampleIndex::empty(embedder.as_ref())
        } else {
            ExampleIndex::build(pool, embedder.as_ref())?
        };
        Ok(Self {
            registry: Arc::new(ToolRegistry::builtin()),
            store: Arc::new(store),
            embedder,
            index: Arc::new(index),
        })
    }

    /// Bundled fixtures and example pool with the default embedder.
    pub fn canonical() -> Self {
        Self::new(
            FixtureStore::canonical(),
            &ExamplePool::canonical(),
            Arc::new(HashedBowEmbedder::default()),
        )
        .expect("bundled resources are valid")
    }
}

pub fn default_roles() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("user_role".to_string(), "customer".to_string()),
        (
            "agent_role".to_string(),
            "real estate consultant".to_string(),
        ),
    ])
}

/// Fresh working memory for a session.
pub fn start_memory(
    config: &LoopConfig,
    registry: &ToolRegistry,
    roles: &BTreeMap<String, String>,
    clock: DateTime<Utc>,
) -> Result<WorkingMemory> {
    let scratchpad = Scratchpad::init_session_context(roles, clock)?;
    Ok(WorkingMemory::new(
        system_prompt_for(config.framework, config.mode, registry),
        scratchpad,
    ))
}

pub struct Controller<'a> {
    pub resources: &'a Resources,
    pub backend: &'a dyn LanguageModel,
    pub config: &'a LoopConfig,
}

struct Turn<'m> {
    memory: &'m mut WorkingMemory,
    ops: Vec<MemoryOp>,
    events: Vec<TraceEvent>,
}

impl Turn<'_> {
    fn apply(&mut self, op: MemoryOp) -> Result<EntityUpdate> {
        let update = self.memory.apply(&op)?;
        self.ops.push(op);
        Ok(update)
    }

    fn push_step(&mut self, step: AgentStep, duration: f64) -> Result<()> {
        let tool_name = step.tool_call().map(|c| c.tool_name.clone());
        self.events.push(TraceEvent {
            step_kind: format!("{:?}", step.kind()).to_lowercase(),
            text: match &step {
                AgentStep::Finish { final_response } => final_response.clone(),
                s => s.text().to_string(),
            },
            tool_name,
            duration_seconds: duration,
        });
        self.apply(MemoryOp::PushStep { step })?;
        Ok(())
    }
}

enum Outcome {
    Finished(String),
    LoopCap,
    SystemError,
}

impl Controller<'_> {
    pub fn new<'a>(
        resources: &'a Resources,
        backend: &'a dyn LanguageModel,
        config: &'a LoopConfig,
    ) -> Controller<'a> {
        Controller {
            resources,
            backend,
            config,
        }
    }

    /// Runs one turn. Fails only when the turn cannot start (invalid query,
    /// pending turn, bad config); model and tool faults end the turn with a
    /// `system_error` termination instead.
    pub fn handle_query(&self, memory: &mut WorkingMemory, query: &str) -> Result<TurnResult> {
        self.config.validate()?;
        if query.trim().is_empty() {
            return Err(Error::Validation("query must be non-empty".into()));
        }
        if let Some(p) = memory.history.pending() {
            return Err(Error::Memory(crate::memory::MemoryError::Sequencing(
                format!("turn {} is still waiting for a response", p.turn_index),
            )));
        }
        let started = Instant::now();
        let framework = self.config.framework;
        let mut turn = Turn {
            memory,
            ops: Vec::new(),
            events: Vec::new(),
        };
        let mut diagnostics = Vec::new();
        let mut timings = Timings::default();
        let mut prompts = Vec::new();
        let mut tool_executions = 0u32;

        turn.apply(MemoryOp::BeginTurn)?;
        turn.apply(MemoryOp::AppendQuery {
            query: query.to_string(),
        })?;
        let turn_index = turn.memory.trajectory.query_ref;

        if framework.has_examples() && self.config.k_examples > 0 {
            let tail = history_tail(&turn.memory.history, self.config.history_window);
            let examples = self.resources.index.recall_top_k(
                self.resources.embedder.as_ref(),
                &tail,
                query,
                self.config.k_examples,
            )?;
            turn.apply(MemoryOp::SetRecalled { examples })?;
        }
        if framework.has_scratchpad() {
            if let EntityUpdate::Rejected(w) = turn.apply(MemoryOp::UpdateEntity {
                query: query.to_string(),
            })? {
                diagnostics.push(w);
            }
        }

        let options = PromptOptions {
            history_budget_chars: self.config.history_budget_chars,
        };
        let base = assemble_with(
            framework,
            self.config.mode,
            turn.memory,
            &self.resources.registry,
            &options,
        )?;

        let mut iterations = 0u32;
        let mut reprompted = false;
        let mut correction: Option<String> = None;
        let outcome = loop {
            let steps = &turn.memory.trajectory.steps;
            let mut prompt = if steps.is_empty() {
                base.clone()
            } else if matches!(steps.last(), Some(AgentStep::Observation { .. })) {
                assemble_continuation(framework, &base, steps)?
            } else {
                format!("{base}\n{}", render_steps(steps))
            };
            if let Some(c) = correction.take() {
                prompt = format!("{prompt}\n{c}");
            }
            let request =
                CompletionRequest::with_params(prompt.clone(), self.config.sampling.clone());
            prompts.push(prompt);
            let call_started = Instant::now();
            let reply = self.backend.complete(&request);
            let call_seconds = call_started.elapsed().as_secs_f64();
            timings.per_model_call_seconds.push(call_seconds);
            let raw = match reply {
                Ok(raw) => raw,
                Err(e) => {
                    diagnostics.push(format!("{}: {e}", e.code()));
                    break Outcome::SystemError;
                }
            };

            let parsed = parse_agent_output(&raw, framework).and_then(|steps| {
                take_plan(&steps, framework, turn.memory.trajectory.steps.is_empty())
            });
            let plan = match parsed {
                Ok(plan) => plan,
                Err(e) => {
                    diagnostics.push(format!("{}: {e}", e.code()));
                    if reprompted {
                        break Outcome::SystemError;
                    }
                    reprompted = true;
                    correction = Some(corrective_suffix(framework));
                    continue;
                }
            };

            let mut duration = call_seconds;
            let mut finished = None;
            for step in plan {
                match step {
                    AgentStep::Finish { ref final_response } => {
                        finished = Some(final_response.clone());
                        turn.push_step(step, duration)?;
                    }
                    AgentStep::Action { .. } => {
                        let tool_started = Instant::now();
                        let (step, observation, tool_name) =
                            self.run_action(step, turn.memory, turn_index);
                        if observation.status == ObservationStatus::ToolError {
                            diagnostics.push(observation.formatted_text.clone());
                        }
                        turn.push_step(step, duration)?;
                        let text = observation.formatted_text;
                        turn.push_step(
                            AgentStep::observation(text.clone()),
                            tool_started.elapsed().as_secs_f64(),
                        )?;
                        if framework.has_scratchpad() {
                            turn.apply(MemoryOp::RecordToolNote {
                                tool_name,
                                observation_text: text,
                                turn_index,
                            })?;
                        }
                        tool_executions += 1;
                        iterations += 1;
                    }
                    other => turn.push_step(other, duration)?,
                }
                duration = 0.0;
            }
            match decide_termination(
                turn.memory.trajectory.steps.last(),
                iterations,
                self.config.max_loops,
                false,
            ) {
                Decision::Continue => {}
                Decision::Finish => break Outcome::Finished(finished.unwrap_or_default()),
                Decision::LoopCap => break Outcome::LoopCap,
                Decision::SystemError => unreachable!("no error reported"),
            }
        };

        let (response, termination) = match outcome {
            Outcome::Finished(r) => (r, Termination::Finish),
            Outcome::LoopCap => (self.config.fallback_response.clone(), Termination::LoopCap),
            Outcome::SystemError => (
                self.config.fallback_response.clone(),
                Termination::SystemError,
            ),
        };
        turn.apply(MemoryOp::CommitResponse {
            response: response.clone(),
        })?;
        timings.total_seconds = started.elapsed().as_secs_f64();
        let trajectory = turn.memory.trajectory.clone();
        Ok(TurnResult {
            turn_index,
            query: query.to_string(),
            response,
            trajectory,
            termination,
            model_calls: timings.per_model_call_seconds.len() as u32,
            timings,
            events: turn.events,
            diagnostics,
            tool_executions,
            ops: turn.ops,
            prompts,
        })
    }

    /// Validates and executes one Action step. Invalid calls become a
    /// tool-error Observation so the model can recover.
    fn run_action(
        &self,
        step: AgentStep,
        memory: &WorkingMemory,
        turn_index: u32,
    ) -> (AgentStep, crate::tools::Observation, String) {
        let AgentStep::Action {
            text,
            call,
            diagnostic,
        } = step
        else {
            unreachable!("run_action takes Action steps");
        };
        let error = |tool_name: String, message: String| crate::tools::Observation {
            tool_name,
            formatted_text: format!("Tool error: {message}"),
            status: ObservationStatus::ToolError,
        };
        let Some(mut call) = call else {
            let message = diagnostic
                .clone()
                .unwrap_or_else(|| "unreadable action".into());
            let obs = error("Invalid Action".into(), message);
            return (
                AgentStep::Action {
                    text,
                    call: None,
                    diagnostic,
                },
                obs,
                "Invalid Action".into(),
            );
        };
        call.turn_index = turn_index;
        match self.resources.registry.validate_call(&call) {
            Ok(valid) => {
                let obs = execute(&self.resources.store, &valid, Some(&memory.history));
                let name = valid.tool_name.clone();
                (
                    AgentStep::Action {
                        text,
                        call: Some(valid),
                        diagnostic: None,
                    },
                    obs,
                    name,
                )
            }
            Err(e) => {
                let name = call.tool_name.clone();
                let obs = error(name.clone(), e.to_string());
                (
                    AgentStep::Action {
                        text,
                        call: Some(call),
                        diagnostic: Some(e.code().to_string()),
                    },
                    obs,
                    name,
                )
            }
        }
    }

    /// Runs `queries` in order on one memory.
    pub fn run_dialogue(
        &self,
        memory: &mut WorkingMemory,
        queries: &[String],
    ) -> Result<Vec<TurnResult>> {
        if queries.is_empty() {
            return Err(Error::Validation(
                "dialogue needs at least one query".into(),
            ));
        }
        let mut results = Vec::with_capacity(queries.len());
        for q in queries {
            let r = self.handle_query(memory, q)?;
            let stop =
                r.termination == Termination::SystemError && self.config.abort_on_system_error;
            results.push(r);
            if stop {
                break;
            }
        }
        Ok(results)
    }
}

/// Selects the steps to act on from one model output: everything up to and
/// including the first Action or Finish, minus any Observations the model
/// wrote itself.
fn take_plan(
    steps: &[AgentStep],
    framework: FrameworkKind,
    first_of_turn: bool,
) -> std::result::Result<Vec<AgentStep>, ParseError> {
    if first_of_turn
        && framework.has_thoughts()
        && !matches!(steps.first(), Some(AgentStep::Thought { .. }))
    {
        return Err(ParseError::FormatViolation(
            "the first step of a turn must be a Thought".into(),
        ));
    }
    let mut plan = Vec::new();
    for step in steps {
        match step {
            AgentStep::Observation { .. } => {}
            AgentStep::Thought { .. } => plan.push(step.clone()),
            AgentStep::Action { .. } | AgentStep::Finish { .. } => {
                plan.push(step.clone());
                return Ok(plan);
            }
        }
    }
    Err(ParseError::FormatViolation(
        "output has no Action or Finish step".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedBackend;
    use chrono::TimeZone;

    const HOUSE: &str = r#"{"houseCode": "1021111", "houseName": "Huarun 24 City Mansion, good lighting and view, quiet"}"#;

    fn run(
        framework: FrameworkKind,
        replies: &[&str],
        queries: &[&str],
    ) -> (WorkingMemory, Vec<TurnResult>) {
        let resources = Resources::canonical();
        let config = LoopConfig::new(framework, Mode::Prompting);
        let backend = ScriptedBackend::from_replies(replies.iter().copied()).unwrap();
        let mut memory = start_memory(
            &config,
            &resources.registry,
            &default_roles(),
            Utc.with_ymd_and_hms(2023, 11, 1, 10, 0, 0).unwrap(),
        )
        .unwrap();
        let c = Controller::new(&resources, &backend, &config);
        let queries: Vec<String> = queries.iter().map(|s| s.to_string()).collect();
        let results = c.run_dialogue(&mut memory, &queries).unwrap();
        (memory, results)
    }

    #[test]
    fn thought_action_finish() {
        let (memory, results) = run(
            FrameworkKind::ReAct,
            &[
                "Thought: I need the house record.\nAction: House Information [house_id: 1021111]",
                "Thought: It was built in 2020.\nAction: Finish [This house was built in 2020.]",
            ],
            &["What year was the house constructed?"],
        );
        let r = &results[0];
        assert_eq!(r.termination, Termination::Finish);
        assert_eq!(r.response, "This house was built in 2020.");
        assert_eq!(r.tool_executions, 1);
        assert_eq!(r.model_calls, 2);
        let kinds: Vec<_> = r.trajectory.steps.iter().map(AgentStep::kind).collect();
        use crate::llm::StepKind::*;
        assert_eq!(kinds, [Thought, Action, Observation, Thought, Finish]);
        assert!(r.prompts[1].ends_with(&render_steps(&r.trajectory.steps[..3])));
        assert_eq!(
            memory.history.turns()[0].response.as_deref(),
            Some(r.response.as_str())
        );
        assert_eq!(r.events.len(), r.trajectory.steps.len());
    }

    #[test]
    fn model_observations_are_replaced_by_tool_output() {
        let (_, results) = run(
            FrameworkKind::ReAct,
            &[
                "Thought: look.\nAction: House Information [house_id: 1021111]\nObservation: invented\nThought: done\nAction: Finish [x]",
                "Thought: ok\nAction: Finish [Built in 2020.]",
            ],
            &["year?"],
        );
        let obs = results[0].trajectory.steps[2].text();
        assert!(obs.contains("Construction Year: 2020"), "{obs}");
        assert_eq!(results[0].response, "Built in 2020.");
    }

    #[test]
    fn loop_cap_after_max_loops_tool_calls() {
        let reply = "Thought: again\nAction: House Information [house_id: 1021111]";
        let (_, results) = run(FrameworkKind::ReAct, &[reply; 10], &["q"]);
        let r = &results[0];
        assert_eq!(r.termination, Termination::LoopCap);
        assert_eq!(r.tool_executions, 5);
        assert_eq!(r.model_calls, 5);
        assert_eq!(r.response, DEFAULT_FALLBACK);
    }

    #[test]
    fn one_corrective_reprompt_then_system_error() {
        let (_, ok) = run(
            FrameworkKind::ReAct,
            &["no markers at all", "Thought: fine\nAction: Finish [ok]"],
            &["q"],
        );
        assert_eq!(ok[0].termination, Termination::Finish);
        assert!(ok[0].prompts[1].ends_with(&corrective_suffix(FrameworkKind::ReAct)));
        assert_eq!(ok[0].diagnostics.len(), 1);

        let (memory, bad) = run(FrameworkKind::ReAct, &["junk", "more junk"], &["q"]);
        assert_eq!(bad[0].termination, Termination::SystemError);
        assert_eq!(bad[0].model_calls, 2);
        assert!(memory.history.pending().is_none());
    }

    #[test]
    fn backend_failure_is_a_system_error() {
        let (_, r) = run(
            FrameworkKind::Raise,
            &["Thought: a\nAction: House Information [1021111]"],
            &["q"],
        );
        assert_eq!(r[0].termination, Termination::SystemError);
        assert!(r[0]
            .diagnostics
            .iter()
            .any(|d| d.starts_with("script_error")));
    }

    #[test]
    fn thought_frameworks_require_a_leading_thought() {
        let (_, r) = run(
            FrameworkKind::ReAct,
            &["Action: Finish [x]", "Action: Finish [y]"],
            &["q"],
        );
        assert_eq!(r[0].termination, Termination::SystemError);
        let (_, r) = run(FrameworkKind::ActOnly, &["Action: Finish [x]"], &["q"]);
        assert_eq!(r[0].termination, Termination::Finish);
    }

    #[test]
    fn invalid_tool_calls_are_observations() {
        let (memory, r) = run(
            FrameworkKind::Raise,
            &[
                "Thought: t\nAction: Weather [city_id: 1]",
                "Thought: t\nAction: House Information []",
                "Thought: t\nAction: Finish [sorry]",
            ],
            &[HOUSE],
        );
        let r = &r[0];
        assert_eq!(r.termination, Termination::Finish);
        let obs: Vec<&str> = r
            .trajectory
            .steps
            .iter()
            .filter(|s| matches!(s, AgentStep::Observation { .. }))
            .map(AgentStep::text)
            .collect();
        assert_eq!(obs.len(), 2);
        assert!(obs.iter().all(|o| o.starts_with("Tool error:")));
        assert_eq!(memory.scratchpad.tool_notes.len(), 2);
    }

    #[test]
    fn replaying_ops_reproduces_memory() {
        let (memory, results) = run(
            FrameworkKind::Raise,
            &[
                "Thought: need data\nAction: House Information [house_id: 1021111]",
                "Thought: ok\nAction: Finish [Built in 2020.]",
                "Thought: in scratchpad\nAction: Finish [It has 2 bedrooms.]",
            ],
            &[HOUSE, "How many bedrooms?"],
        );
        let resources = Resources::canonical();
        let mut replayed = start_memory(
            &LoopConfig::new(FrameworkKind::Raise, Mode::Prompting),
            &resources.registry,
            &default_roles(),
            Utc.with_ymd_and_hms(2023, 11, 1, 10, 0, 0).unwrap(),
        )
        .unwrap();
        for r in &results {
            replayed.replay(&r.ops).unwrap();
        }
        assert_eq!(replayed, memory);
        assert_eq!(
            memory.scratchpad.entity.as_ref().unwrap().entity_id,
            "1021111"
        );
    }

    #[test]
    fn termination_decision_table() {
        let fin = AgentStep::finish("x");
        let obs = AgentStep::observation("o");
        assert_eq!(
            decide_termination(Some(&fin), 0, 5, false),
            Decision::Finish
        );
        assert_eq!(
            decide_termination(Some(&obs), 5, 5, false),
            Decision::LoopCap
        );
        assert_eq!(
            decide_termination(Some(&obs), 4, 5, false),
            Decision::Continue
        );
        assert_eq!(
            decide_termination(Some(&obs), 1, 5, true),
            Decision::SystemError
        );
    }

    #[test]
    fn rejects_bad_start_conditions() {
        let resources = Resources::canonical();
        let config = LoopConfig::default();
        let backend = ScriptedBackend::from_replies(["Thought: a\nAction: Finish [b]"]).unwrap();
        let mut memory =
            start_memory(&config, &resources.registry, &default_roles(), Utc::now()).unwrap();
        let c = Controller::new(&resources, &backend, &config);
        assert!(c.handle_query(&mut memory, "  ").is_err());
        assert!(c.run_dialogue(&mut memory, &[]).is_err());
        memory.history.append_query("dangling").unwrap();
        assert!(c.handle_query(&mut memory, "q").is_err());
        let zero = LoopConfig {
            max_loops: 0,
            ..LoopConfig::default()
        };
        assert!(zero.validate().is_err());
    }
}
