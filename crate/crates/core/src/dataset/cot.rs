//! Reasoning-chain completion and the manual review queue.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CompleteScene, FillLevel, OriginScene, SceneOrigin};
use crate::controller::Resources;
use crate::error::{Error, Result};
use crate::llm::{parse_agent_output, AgentStep, CompletionRequest, LanguageModel, SamplingParams};
use crate::memory::ConversationHistory;
use crate::prompt::FrameworkKind;
use crate::retrieval::normalize;
use crate::tools::execute;

const FEW_SHOT: &str = "Conversation History: User: {\"houseCode\": \"1021111\", \"houseName\": \"Huarun 24 City Mansion, good lighting and view, quiet\"}
Current Query: What year was the house constructed?
Reference Response: This house was built in 2020, making it a relatively new property. When are you available to view the house?
Thought: The client wants to know the year of construction of the house. I need to look up the property information to find this out.
Action: House Information [house_id: 1021111]
Observation: House ID: 1021111; Construction Year: 2020
Thought: The house was built in 2020, so I can answer and invite the client to a viewing.
Action: Finish [This house was built in 2020, making it a relatively new property. When are you available to view the house?]";

/// Builds reasoning chains for origin scenes with a model.
pub struct CotGenerator<'a> {
    pub backend: &'a dyn LanguageModel,
    pub resources: &'a Resources,
    /// Framework whose step grammar the chain follows.
    pub framework: FrameworkKind,
    pub sampling: SamplingParams,
    pub few_shot: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Pending,
    Approved,
    Rejected,
}

impl ReviewStatus {
    fn dir(self) -> &'static str {
        match self {
            ReviewStatus::Pending => "pending",
            ReviewStatus::Approved => "approved",
            ReviewStatus::Rejected => "rejected",
        }
    }
}

/// A scene whose generated chain needs a human decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub scene: OriginScene,
    pub framework: FrameworkKind,
    /// Raw model output; a reviewer may edit it before approving.
    pub reply: String,
    pub reasons: Vec<String>,
}

impl<'a> CotGenerator<'a> {
    pub fn new(
        backend: &'a dyn LanguageModel,
        resources: &'a Resources,
        framework: FrameworkKind,
    ) -> Self {
        Self {
            backend,
            resources,
            framework,
            sampling: SamplingParams::default(),
            few_shot: FEW_SHOT.to_string(),
        }
    }

    /// The generation prompt: profile, tools and a worked example, then the
    /// scene after a `Let's get started:` line.
    pub fn prompt(&self, scene: &OriginScene) -> String {
        let t = self.framework.template();
        let keywords: Vec<&str> = self
            .framework
            .step_keywords()
            .iter()
            .copied()
            .filter(|k| !matches!(*k, "Scratchpad" | "Examples"))
            .collect();
        let history = scene
            .history
            .iter()
            .map(|r| format!("User: {}\nAgent: {}", r.query, r.response))
            .collect::<Vec<_>>()
            .join("\n");
        format!(
            "{profile}\n\n\
             Write the reasoning chain that leads from the current query to the reference response, using the steps of {steps}. \
             Call a tool whenever the answer needs facts, and finish with Action: Finish [reference response] quoting the reference response exactly.\n\n\
             Each tool in the toolset is defined as follows:\n{tools}\n\n\
             Here is an example:\n{few_shot}\n\n\
             Let's get started:\n\
             Conversation History: {history}\n\
             Current Query: {query}\n\
             Reference Response: {response}",
            profile = t.profile,
            steps = keywords.join(", "),
            tools = self.resources.registry.render_tool_descriptions(),
            few_shot = self.few_shot,
            query = scene.query,
            response = scene.response,
        )
    }

    /// Validates a reply and rebuilds its chain with real tool output.
    /// `check_finish` requires the Finish payload to match the reference
    /// response.
    pub fn validate_reply(
        &self,
        scene: &OriginScene,
        reply: &str,
        check_finish: bool,
    ) -> std::result::Result<Vec<AgentStep>, Vec<String>> {
        let steps = parse_agent_output(reply, self.framework)
            .map_err(|e| vec![format!("{}: {e}", e.code())])?;
        let mut reasons = Vec::new();
        let mut history = ConversationHistory::default();
        for r in &scene.history {
            let _ = history.append_query(r.query.clone());
            let _ = history.commit_response(r.response.clone());
        }
        let _ = history.append_query(scene.query.clone());

        let mut cot = Vec::new();
        let mut finish = None;
        for step in steps {
            match step {
                AgentStep::Thought { .. } => cot.push(step),
                AgentStep::Observation { .. } => {}
                AgentStep::Finish { final_response } => finish = Some(final_response),
                AgentStep::Action {
                    ref call,
                    ref diagnostic,
                    ..
                } => {
                    let Some(call) = call else {
                        reasons.push(format!(
                            "malformed action: {}",
                            diagnostic.clone().unwrap_or_default()
                        ));
                        continue;
                    };
                    match self.resources.registry.validate_call(call) {
                        Ok(valid) => {
                            let obs = execute(&self.resources.store, &valid, Some(&history));
                            cot.push(AgentStep::action(valid));
                            cot.push(AgentStep::observation(obs.formatted_text));
                        }
                        Err(e) => reasons.push(format!("{}: {e}", e.code())),
                    }
                }
            }
        }
        match finish {
            None => reasons.push("reply has no Finish step".into()),
            Some(f) if check_finish && normalize(&f) != normalize(&scene.response) => {
                reasons.push("Finish does not match the reference response".into())
            }
            Some(_) => {}
        }
        if cot.is_empty() {
            reasons.push("reasoning chain is empty".into());
        }
        if reasons.is_empty() {
            Ok(cot)
        } else {
            Err(reasons)
        }
    }

    /// One scene. Errors are review items, not failures.
    pub fn complete_cot(
        &self,
        scene: &OriginScene,
    ) -> std::result::Result<CompleteScene, ReviewItem> {
        let request = CompletionRequest::with_params(self.prompt(scene), self.sampling.clone());
        let (reply, verdict) = match self.backend.complete(&request) {
            Ok(reply) => {
                let verdict = self.validate_reply(scene, &reply, true);
                (reply, verdict)
            }
            Err(e) => (String::new(), Err(vec![format!("{}: {e}", e.code())])),
        };
        match verdict {
            Ok(cot) => Ok(complete(scene.clone(), cot)),
            Err(reasons) => Err(ReviewItem {
                scene: scene.clone(),
                framework: self.framework,
                reply,
                reasons,
            }),
        }
    }

    /// All scenes, in order; flagged ones go to `queue`.
    pub fn complete_batch(
        &self,
        scenes: &[OriginScene],
        queue: &ReviewQueue,
    ) -> Result<(Vec<CompleteScene>, Vec<PathBuf>)> {
        let mut done = Vec::new();
        let mut queued = Vec::new();
        for s in scenes {
            match self.complete_cot(s) {
                Ok(c) => done.push(c),
                Err(item) => queued.push(queue.push(&item)?),
            }
        }
        Ok((done, queued))
    }

    /// Approved review items re-enter the flow. The reviewer vouches for
    /// the Finish text, so only the structure is checked.
    pub fn complete_approved(&self, item: &ReviewItem) -> Result<CompleteScene> {
        self.validate_reply(&item.scene, &item.reply, false)
            .map(|cot| complete(item.scene.clone(), cot))
            .map_err(|reasons| {
                Error::Validation(format!(
                    "approved item {} is still invalid: {}",
                    item.scene.scene_id,
                    reasons.join("; ")
                ))
            })
    }
}

fn complete(scene: OriginScene, cot: Vec<AgentStep>) -> CompleteScene {
    CompleteScene {
        scene,
        cot,
        scratchpad_fill: FillLevel::Empty,
        examples_fill: FillLevel::Empty,
        origin: SceneOrigin::Extracted,
    }
}

/// Directory of review items: `pending/`, `approved/` and `rejected/`, one
/// JSON file per item.
#[derive(Debug, Clone)]
pub struct ReviewQueue {
    root: PathBuf,
}

fn file_stem(scene_id: &str) -> String {
    scene_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

impl ReviewQueue {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for s in [
            ReviewStatus::Pending,
            ReviewStatus::Approved,
            ReviewStatus::Rejected,
        ] {
            let dir = root.join(s.dir());
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes a new pending file. Existing files are never overwritten.
    pub fn push(&self, item: &ReviewItem) -> Result<PathBuf> {
        let dir = self.root.join(ReviewStatus::Pending.dir());
        let stem = file_stem(&item.scene.scene_id);
        let body = serde_json::to_string_pretty(item).expect("review item serializes");
        for n in 1.. {
            let name = if n == 1 {
                format!("{stem}.json")
            } else {
                format!("{stem}-{n}.json")
            };
            let path = dir.join(name);
            match fs::OpenOptions::new()
                .write(true)
                .create_new(true)
                .open(&path)
            {
                Ok(mut f) => {
                    f.write_all(body.as_bytes())
                        .map_err(|e| Error::io(&path, e))?;
                    return Ok(path);
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(Error::io(&path, e)),
            }
        }
        unreachable!("unbounded name search")
    }

    /// File names with the given status, sorted.
    pub fn list(&self, status: ReviewStatus) -> Result<Vec<String>> {
        let dir = self.root.join(status.dir());
        let mut names: Vec<String> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".json"))
            .collect();
        names.sort();
        Ok(names)
    }

    pub fn load(&self, status: ReviewStatus, name: &str) -> Result<ReviewItem> {
        let path = self.root.join(status.dir()).join(name);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    fn decide(&self, name: &str, to: ReviewStatus) -> Result<PathBuf> {
        if name.contains(['/', '\\']) || name.starts_with('.') {
            return Err(Error::Validation(format!(
                "invalid review item name `{name}`"
            )));
        }
        let from = self.root.join(ReviewStatus::Pending.dir()).join(name);
        if !from.is_file() {
            return Err(Error::NotFound(format!("pending review item `{name}`")));
        }
        let dest = self.root.join(to.dir()).join(name);
        if dest.exists() {
            return Err(Error::Conflict(format!("`{name}` already decided")));
        }
        fs::rename(&from, &dest).map_err(|e| Error::io(&from, e))?;
        Ok(dest)
    }

    pub fn approve(&self, name: &str) -> Result<PathBuf> {
        self.decide(name, ReviewStatus::Approved)
    }

    pub fn reject(&self, name: &str) -> Result<PathBuf> {
        self.decide(name, ReviewStatus::Rejected)
    }

    pub fn approved_items(&self) -> Result<Vec<ReviewItem>> {
        self.list(ReviewStatus::Approved)?
            .iter()
            .map(|n| self.load(ReviewStatus::Approved, n))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedBackend;

    fn scene(query: &str, response: &str) -> OriginScene {
        OriginScene {
            scene_id: "c1#t1".into(),
            conversation_id: "c1".into(),
            history: vec![],
            query: query.into(),
            response: response.into(),
            t: 1,
            intent_label: None,
        }
    }

    #[test]
    fn valid_chain_gets_real_observations() {
        let resources = Resources::canonical();
        let backend = ScriptedBackend::from_replies([
            "Thought: I need the house record.\nAction: House Information [house_id: 1021111]\nObservation: made up\nAction: Finish [Built in 2020.]",
        ])
        .unwrap();
        let generator = CotGenerator::new(&backend, &resources, FrameworkKind::Raise);
        let done = generator
            .complete_cot(&scene("What year?", "Built in 2020."))
            .unwrap();
        assert_eq!(done.cot.len(), 3);
        assert!(done.cot[2].text().contains("Construction Year: 2020"));
    }

    #[test]
    fn flagged_replies_go_to_the_queue() {
        let resources = Resources::canonical();
        let dir = tempfile::tempdir().unwrap();
        let queue = ReviewQueue::open(dir.path()).unwrap();
        let backend = ScriptedBackend::from_replies([
            "Thought: t\nAction: Weather [city_id: 510100]\nAction: Finish [r]",
            "Thought: t\nAction: Finish [something else]",
            "no structure",
            "Thought: t\nAction: Finish [r]",
        ])
        .unwrap();
        let generator = CotGenerator::new(&backend, &resources, FrameworkKind::ReAct);
        let scenes: Vec<OriginScene> = (1..=4)
            .map(|i| OriginScene {
                scene_id: format!("c#t{i}"),
                ..scene("q", "r")
            })
            .collect();
        let (done, queued) = generator.complete_batch(&scenes, &queue).unwrap();
        assert_eq!(done.len(), 1);
        assert_eq!(queued.len(), 3);
        assert_eq!(queue.list(ReviewStatus::Pending).unwrap().len(), 3);

        let first = queue.load(ReviewStatus::Pending, "c_t1.json").unwrap();
        assert!(first.reasons[0].starts_with("unknown_tool"));
        queue.approve("c_t2.json").unwrap();
        queue.reject("c_t3.json").unwrap();
        assert!(queue.approve("c_t3.json").is_err());
        let approved = queue.approved_items().unwrap();
        assert_eq!(approved.len(), 1);
        let back = generator.complete_approved(&approved[0]).unwrap();
        assert_eq!(back.cot.len(), 1);
        // Same scene queued twice keeps both files.
        queue.push(&first).unwrap();
        assert_eq!(
            queue.list(ReviewStatus::Pending).unwrap(),
            ["c_t1-2.json", "c_t1.json"]
        );
    }
}
