//! Training samples and the train/eval export.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CompleteScene, FillLevel, Round, SceneOrigin};
use crate::controller::{default_roles, start_memory, LoopConfig, Resources};
use crate::error::{Error, Result};
use crate::llm::{parse_agent_output, render_steps, AgentStep};
use crate::memory::WorkingMemory;
use crate::prompt::{assemble, FrameworkKind, Mode};
use crate::retrieval::{normalize, RetrievedExample};
use crate::tools::{execute, names, ToolCall};

/// Fine-tuning settings recorded next to the data. Nothing here is executed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftConfig {
    pub precision: String,
    pub model_max_length: u32,
    pub epochs: u32,
    pub batch_size: u32,
    pub learning_rate: f64,
    pub warmup_ratio: f64,
    pub lr_scheduler_type: String,
}

impl Default for SftConfig {
    fn default() -> Self {
        Self {
            precision: "bfloat16".into(),
            model_max_length: 4096,
            epochs: 3,
            batch_size: 64,
            learning_rate: 5e-6,
            warmup_ratio: 0.03,
            lr_scheduler_type: "cosine".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub sample_id: String,
    pub framework: FrameworkKind,
    pub origin: SceneOrigin,
    pub scratchpad_fill: FillLevel,
    pub examples_fill: FillLevel,
    pub system_prompt: String,
    pub history: Vec<Round>,
    pub query: String,
    pub cot: Vec<AgentStep>,
    pub response: String,
    /// Model input: the finetuned-mode task prompt.
    pub prompt: String,
    /// Model target: the chain followed by the Finish step.
    pub completion: String,
}

impl TrainingSample {
    /// Five labeled blocks: system prompt, history, query, chain, response.
    pub fn blocks(&self) -> String {
        let history = self
            .history
            .iter()
            .map(|r| format!("User: {}\nAgent: {}", r.query, r.response))
            .collect::<Vec<_>>()
            .join("\n");
        format!(
            "System Prompt: {}\nHistory: {}\nQuery: {}\nCoT: {}\nResponse: {}",
            self.system_prompt,
            history,
            self.query,
            render_steps(&self.cot),
            self.response
        )
    }
}

/// Inputs shared by all samples of one export.
pub struct SampleContext<'a> {
    pub resources: &'a Resources,
    /// Clock written into the scratchpad session context.
    pub clock: DateTime<Utc>,
    /// Consultant whose card fills partial scratchpads.
    pub consultant_id: String,
}

impl<'a> SampleContext<'a> {
    pub fn new(resources: &'a Resources) -> Self {
        Self {
            resources,
            clock: Utc.with_ymd_and_hms(2023, 11, 1, 10, 0, 0).unwrap(),
            consultant_id: "900000001".into(),
        }
    }
}

fn scene_memory(
    scene: &CompleteScene,
    framework: FrameworkKind,
    ctx: &SampleContext,
) -> Result<WorkingMemory> {
    let config = LoopConfig::new(framework, Mode::Finetuned);
    let mut memory = start_memory(
        &config,
        &ctx.resources.registry,
        &default_roles(),
        ctx.clock,
    )?;
    let s = &scene.scene;
    for r in &s.history {
        memory.history.append_query(r.query.clone())?;
        memory.history.commit_response(r.response.clone())?;
    }
    memory.history.append_query(s.query.clone())?;

    if framework.has_scratchpad() && scene.scratchpad_fill != FillLevel::Empty {
        for q in s
            .history
            .iter()
            .map(|r| r.query.as_str())
            .chain([s.query.as_str()])
        {
            memory.scratchpad.update_entity_from_query(q);
        }
        let call = ToolCall::new(names::CONSULTANT_INFORMATION)
            .arg("agent_ucid", ctx.consultant_id.clone());
        let card = execute(&ctx.resources.store, &call, None);
        memory.scratchpad.record_tool_note(
            names::CONSULTANT_INFORMATION,
            card.formatted_text,
            s.t,
        )?;
        if scene.scratchpad_fill == FillLevel::Full {
            let mut tool = None;
            for step in &scene.cot {
                match step {
                    AgentStep::Action { call: Some(c), .. } => tool = Some(c.tool_name.clone()),
                    AgentStep::Observation { text } => {
                        let name = tool.take().unwrap_or_else(|| "Observation".into());
                        memory
                            .scratchpad
                            .record_tool_note(name, text.clone(), s.t)?;
                    }
                    _ => {}
                }
            }
        }
    }

    if framework.has_examples() {
        memory.recalled_examples = match scene.examples_fill {
            FillLevel::Empty => Vec::new(),
            FillLevel::Full => vec![RetrievedExample {
                example_id: format!("{}-self", s.scene_id),
                query: s.query.clone(),
                response: s.response.clone(),
                score: 1.0,
            }],
            FillLevel::Partial => {
                let target = normalize(&s.query);
                ctx.resources
                    .index
                    .recall_top_k(ctx.resources.embedder.as_ref(), "", &s.query, 2)?
                    .into_iter()
                    .filter(|e| normalize(&e.query) != target)
                    .take(1)
                    .collect()
            }
        };
    }
    Ok(memory)
}

/// One sample per scene for `framework`. Act-Only chains lose their
/// Thought steps; scratchpad and examples sections are filled at each
/// scene's fill level.
pub fn assemble_samples(
    scenes: &[CompleteScene],
    framework: FrameworkKind,
    ctx: &SampleContext,
) -> Result<Vec<TrainingSample>> {
    let mut out = Vec::with_capacity(scenes.len());
    for scene in scenes {
        let s = &scene.scene;
        if scene.cot.is_empty() {
            return Err(Error::Validation(format!(
                "scene {} has no reasoning chain",
                s.scene_id
            )));
        }
        let cot: Vec<AgentStep> = scene
            .cot
            .iter()
            .filter(|st| framework.has_thoughts() || !matches!(st, AgentStep::Thought { .. }))
            .cloned()
            .collect();
        let memory = scene_memory(scene, framework, ctx)?;
        let prompt = assemble(framework, Mode::Finetuned, &memory, &ctx.resources.registry)?;
        let mut steps = cot.clone();
        steps.push(AgentStep::finish(s.response.clone()));
        let completion = render_steps(&steps);
        let reparsed = parse_agent_output(&completion, framework).map_err(|e| {
            Error::Validation(format!("sample {} does not parse back: {e}", s.scene_id))
        })?;
        if reparsed.len() != steps.len() || !reparsed.last().is_some_and(AgentStep::is_finish) {
            return Err(Error::Validation(format!(
                "sample {} does not parse back to its own steps",
                s.scene_id
            )));
        }
        out.push(TrainingSample {
            sample_id: s.scene_id.clone(),
            framework,
            origin: scene.origin,
            scratchpad_fill: scene.scratchpad_fill,
            examples_fill: scene.examples_fill,
            system_prompt: format!(
                "{}\n{}",
                memory.system_prompt.profile, memory.system_prompt.instructions
            ),
            history: s.history.clone(),
            query: s.query.clone(),
            cot,
            response: s.response.clone(),
            prompt,
            completion,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub total: usize,
    pub train_count: usize,
    pub eval_count: usize,
    pub frameworks: Vec<FrameworkKind>,
    pub train_file: String,
    pub eval_file: String,
    pub train_sha256: String,
    pub eval_sha256: String,
    pub sft: SftConfig,
}

/// Seeded split into `train.jsonl` and `eval.jsonl` plus `manifest.json`.
/// Both files keep input order.
pub fn split_and_export(
    samples: &[TrainingSample],
    eval_count: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<Manifest> {
    if eval_count >= samples.len() {
        return Err(Error::Validation(format!(
            "eval_count {eval_count} must be smaller than the {} samples",
            samples.len()
        )));
    }
    let mut ids = BTreeSet::new();
    for s in samples {
        if !ids.insert((s.framework, s.sample_id.as_str())) {
            return Err(Error::Validation(format!(
                "duplicate sample id `{}`",
                s.sample_id
            )));
        }
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut eval_idx = order[..eval_count].to_vec();
    let mut train_idx = order[eval_count..].to_vec();
    eval_idx.sort_unstable();
    train_idx.sort_unstable();
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
    let train = crate::jsonl::to_string(&pick(&train_idx));
    let eval = crate::jsonl::to_string(&pick(&eval_idx));

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let write = |name: &str, text: &str| {
        let path = out_dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    write("train.jsonl", &train)?;
    write("eval.jsonl", &eval)?;
    let frameworks: BTreeSet<FrameworkKind> = samples.iter().map(|s| s.framework).collect();
    let manifest = Manifest {
        seed,
        total: samples.len(),
        train_count: train_idx.len(),
        eval_count,
        frameworks: frameworks.into_iter().collect(),
        train_file: "train.jsonl".into(),
        eval_file: "eval.jsonl".into(),
        train_sha256: hex::encode(Sha256::digest(train.as_bytes())),
        eval_sha256: hex::encode(Sha256::digest(eval.as_bytes())),
        sft: SftConfig::default(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write("manifest.json", &text)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::OriginScene;
    use crate::tools::ToolCall;

    fn scene(id: &str) -> CompleteScene {
        CompleteScene {
            scene: OriginScene {
                scene_id: id.into(),
                conversation_id: "c".into(),
                history: vec![Round {
                    query: r#"{"houseCode": "1021111", "houseName": "Huarun"}"#.into(),
                    response: "Hello! How can I help?".into(),
                }],
                query: "What year was the house constructed?".into(),
                response: "It was built in 2020.".into(),
                t: 2,
                intent_label: None,
            },
            cot: vec![
                AgentStep::thought("I need the house record."),
                AgentStep::action(ToolCall::new("House Information").arg("house_id", "1021111")),
                AgentStep::observation("House ID: 1021111; Construction Year: 2020"),
                AgentStep::thought("Built in 2020."),
            ],
            scratchpad_fill: FillLevel::Full,
            examples_fill: FillLevel::Partial,
            origin: SceneOrigin::Extracted,
        }
    }

    #[test]
    fn blocks_in_order() {
        let resources = Resources::canonical();
        let ctx = SampleContext::new(&resources);
        let s = &assemble_samples(&[scene("a")], FrameworkKind::Raise, &ctx).unwrap()[0];
        let text = s.blocks();
        let pos: Vec<usize> = [
            "System Prompt:",
            "\nHistory:",
            "\nQuery:",
            "\nCoT:",
            "\nResponse:",
        ]
        .iter()
        .map(|k| text.find(k).unwrap())
        .collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(s
            .completion
            .ends_with("Action: Finish [It was built in 2020.]"));
        assert!(s.prompt.contains("[House Information]: House ID: 1021111"));
        assert!(s.prompt.contains("[Current House]: House ID: 1021111"));
        assert!(!s.prompt.contains("Here is an example:"));
    }

    #[test]
    fn act_only_drops_thoughts() {
        let resources = Resources::canonical();
        let ctx = SampleContext::new(&resources);
        let s = &assemble_samples(&[scene("a")], FrameworkKind::ActOnly, &ctx).unwrap()[0];
        assert!(s
            .cot
            .iter()
            .all(|st| !matches!(st, AgentStep::Thought { .. })));
        assert!(!s.completion.contains("Thought:"));
        assert!(!s.prompt.contains("\nScratchpad:"));
    }

    #[test]
    fn missing_cot_is_rejected() {
        let resources = Resources::canonical();
        let mut bad = scene("a");
        bad.cot.clear();
        assert!(assemble_samples(
            &[bad],
            FrameworkKind::Raise,
            &SampleContext::new(&resources)
        )
        .is_err());
    }

    #[test]
    fn split_partitions_and_is_seeded() {
        let resources = Resources::canonical();
        let ctx = SampleContext::new(&resources);
        let scenes: Vec<_> = (0..10).map(|i| scene(&format!("s{i}"))).collect();
        let samples = assemble_samples(&scenes, FrameworkKind::ReAct, &ctx).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m1 = split_and_export(&samples, 3, 7, dir.path()).unwrap();
        assert_eq!((m1.train_count, m1.eval_count), (7, 3));
        let m2 = split_and_export(&samples, 3, 7, dir.path()).unwrap();
        assert_eq!(m1, m2);
        assert!(split_and_export(&samples, 10, 7, dir.path()).is_err());
        let train: Vec<TrainingSample> =
            crate::jsonl::read(&dir.path().join("train.jsonl")).unwrap();
        let eval: Vec<TrainingSample> = crate::jsonl::read(&dir.path().join("eval.jsonl")).unwrap();
        let a: BTreeSet<_> = train.iter().map(|s| s.sample_id.clone()).collect();
        let b: BTreeSet<_> = eval.iter().map(|s| s.sample_id.clone()).collect();
        assert!(a.is_disjoint(&b));
        assert_eq!(a.len() + b.len(), 10);
    }
}
