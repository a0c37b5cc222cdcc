//! Synthetic scenes that teach the agent its limits.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CompleteScene, FillLevel, OriginScene, SceneOrigin};
use crate::llm::AgentStep;
use crate::tools::{execute, names, FixtureStore, ToolCall};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub role_boundary: usize,
    pub knowledge_gap: usize,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            role_boundary: 4,
            knowledge_gap: 4,
            seed: 7,
        }
    }
}

const OUT_OF_ROLE: &[(&str, &str)] = &[
    (
        "Can you write a Python script that sorts a list for me?",
        "programming",
    ),
    ("Do you have a good recipe for braised pork?", "cooking"),
    (
        "I have a headache, what medicine should I take?",
        "medical advice",
    ),
    ("Can you help me debug my JavaScript code?", "programming"),
    ("What should I cook for dinner tonight?", "cooking"),
    (
        "Is it safe to take two different cold medicines together?",
        "medical advice",
    ),
    ("Which stocks should I buy this year?", "investment advice"),
    (
        "Can you translate this paragraph into French?",
        "translation",
    ),
];

const REFUSAL: &str = "I'm sorry, that is outside what I can help with as a real estate consultant. If you have any questions about buying a home, I'd be glad to help.";

/// In-role questions whose subject id has no record.
const GAP_QUERIES: &[(&str, &str, &str)] = &[
    (
        names::HOUSE_INFORMATION,
        "house_id",
        "What year was house {id} built?",
    ),
    (
        names::HOUSE_PRICE_CHANGES,
        "house_id",
        "Has the price of house {id} changed recently?",
    ),
    (
        names::COMMUNITY_INFORMATION,
        "resblock_id",
        "Is there a subway near community {id}?",
    ),
    (
        names::COMMUNITY_TRANSACTIONS,
        "resblock_id",
        "What sold recently in community {id}?",
    ),
    (
        names::TAX_POLICY,
        "city_id",
        "What taxes apply when buying in city {id}?",
    ),
    (
        names::VALUE_REPORT,
        "house_id",
        "Can I get a value report for house {id}?",
    ),
];

const DECLINE: &str = "I couldn't find a record for that, so I don't want to guess. Could you send me the listing link again so I can check it for you?";

fn missing_id(store: &FixtureStore, param: &str, base: u64, seq: u64) -> String {
    let exists = |id: &str| match param {
        "house_id" => store.house(id).is_some(),
        "resblock_id" => store.community(id).is_some(),
        _ => store.city_ids().contains(id),
    };
    (seq..)
        .map(|n| (base + n * 7919).to_string())
        .find(|id| !exists(id))
        .expect("unbounded id search")
}

fn scene(
    id: String,
    query: String,
    response: &str,
    cot: Vec<AgentStep>,
    origin: SceneOrigin,
) -> CompleteScene {
    CompleteScene {
        scene: OriginScene {
            conversation_id: id.clone(),
            scene_id: id,
            history: Vec::new(),
            query,
            response: response.to_string(),
            t: 1,
            intent_label: Some(match origin {
                SceneOrigin::RoleBoundary => "out_of_role".into(),
                _ => "knowledge_gap".into(),
            }),
        },
        cot,
        scratchpad_fill: FillLevel::Empty,
        examples_fill: FillLevel::Empty,
        origin,
    }
}

/// Role-boundary scenes first, then knowledge-gap scenes.
pub fn augment_hallucination_scenes(
    config: &AugmentConfig,
    store: &FixtureStore,
) -> Vec<CompleteScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::with_capacity(config.role_boundary + config.knowledge_gap);
    for i in 0..config.role_boundary {
        let (query, topic) = *OUT_OF_ROLE.choose(&mut rng).expect("non-empty");
        let thought = format!(
            "The client is asking for {topic}, which is outside my role as a real estate consultant. I should decline politely and steer back to housing."
        );
        out.push(scene(
            format!("aug-role-{}", i + 1),
            query.to_string(),
            REFUSAL,
            vec![AgentStep::thought(thought)],
            SceneOrigin::RoleBoundary,
        ));
    }
    for i in 0..config.knowledge_gap {
        let (tool, param, template) = *GAP_QUERIES.choose(&mut rng).expect("non-empty");
        let base = match param {
            "house_id" => 1_090_000,
            "resblock_id" => 5_090_000,
            _ => 990_000,
        };
        let id = missing_id(store, param, base, i as u64);
        let call = ToolCall::new(tool).arg(param, id.clone());
        let observation = execute(store, &call, None);
        let cot = vec![
            AgentStep::thought(format!(
                "The client asks about {param} {id}. I need to look it up with {tool}."
            )),
            AgentStep::action(call),
            AgentStep::observation(observation.formatted_text),
            AgentStep::thought(
                "There is no record for it, so I must not make up an answer.".to_string(),
            ),
        ];
        out.push(scene(
            format!("aug-knowledge-{}", i + 1),
            template.replace("{id}", &id),
            DECLINE,
            cot,
            SceneOrigin::KnowledgeGap,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tools::NO_RECORD_FOUND;

    #[test]
    fn counts_and_tags() {
        let store = FixtureStore::canonical();
        let cfg = AugmentConfig {
            role_boundary: 2,
            knowledge_gap: 2,
            seed: 1,
        };
        let scenes = augment_hallucination_scenes(&cfg, &store);
        assert_eq!(scenes.len(), 4);
        assert_eq!(
            scenes
                .iter()
                .filter(|s| s.origin == SceneOrigin::RoleBoundary)
                .count(),
            2
        );
        for s in scenes
            .iter()
            .filter(|s| s.origin == SceneOrigin::KnowledgeGap)
        {
            assert!(s.cot.iter().any(
                |st| matches!(st, AgentStep::Observation { text } if text.contains(NO_RECORD_FOUND))
            ));
        }
        assert_eq!(scenes, augment_hallucination_scenes(&cfg, &store));
        let none = AugmentConfig {
            role_boundary: 0,
            knowledge_gap: 0,
            seed: 1,
        };
        assert!(augment_hallucination_scenes(&none, &store).is_empty());
    }
}
