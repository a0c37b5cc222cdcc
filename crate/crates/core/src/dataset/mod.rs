//! Training-data construction.
//!
//! Stages, each a batch transform over the previous stage's output:
//!
//! 1. [`select_conversations`]: quality filters plus anonymization.
//! 2. [`extract_scenes`] and [`sample_scenes`]: one scene per dialogue round,
//!    then a stratified sample by turn depth and intent.
//! 3. [`CotGenerator`]: model-written reasoning chains, with tool
//!    observations replaced by real executions and doubtful items routed to
//!    a [`ReviewQueue`].
//! 4. [`augment_hallucination_scenes`]: role-boundary and knowledge-gap scenes.
//! 5. [`set_fill_levels`], [`assemble_samples`] and [`split_and_export`].

mod augment;
mod cot;
mod export;
mod fill;
mod scenes;
mod select;

use serde::{Deserialize, Serialize};

use crate::llm::AgentStep;

pub use augment::{augment_hallucination_scenes, AugmentConfig};
pub use cot::{CotGenerator, ReviewItem, ReviewQueue, ReviewStatus};
pub use export::{
    assemble_samples, split_and_export, Manifest, SampleContext, SftConfig, TrainingSample,
};
pub use fill::{largest_remainder, set_fill_levels, FillDistribution, FillTarget};
pub use scenes::{
    extract_scenes, sample_scenes, turn_bucket, IntentClassifier, IntentRule, SamplingStrategy,
};
pub use select::{anonymize, normalize_turns, select_conversations, SelectionCriteria};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    User,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawConversation {
    pub conversation_id: String,
    pub turns: Vec<Message>,
    #[serde(default)]
    pub quality_score: Option<f64>,
    #[serde(default)]
    pub anonymized: bool,
}

/// One user query and the agent's answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    pub query: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OriginScene {
    pub scene_id: String,
    pub conversation_id: String,
    /// Rounds before this one; length is `t - 1`.
    pub history: Vec<Round>,
    pub query: String,
    pub response: String,
    pub t: u32,
    #[serde(default)]
    pub intent_label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillLevel {
    #[default]
    Empty,
    Partial,
    Full,
}

impl FillLevel {
    pub const ALL: [FillLevel; 3] = [FillLevel::Empty, FillLevel::Partial, FillLevel::Full];
}

/// Where a complete scene came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneOrigin {
    #[default]
    Extracted,
    RoleBoundary,
    KnowledgeGap,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompleteScene {
    #[serde(flatten)]
    pub scene: OriginScene,
    /// Reasoning chain without the final Finish step.
    pub cot: Vec<AgentStep>,
    #[serde(default)]
    pub scratchpad_fill: FillLevel,
    #[serde(default)]
    pub examples_fill: FillLevel,
    #[serde(default)]
    pub origin: SceneOrigin,
}

pub fn load_corpus(path: &std::path::Path) -> crate::Result<Vec<RawConversation>> {
    crate::jsonl::read(path)
}
