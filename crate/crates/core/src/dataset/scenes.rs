//! Scene extraction and stratified sampling.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::select::rounds;
use super::{OriginScene, RawConversation};

/// Cuts a conversation at every round: scene `t` answers round `t` with the
/// earlier rounds as history.
pub fn extract_scenes(conversation: &RawConversation) -> Vec<OriginScene> {
    let rounds = rounds(&conversation.turns);
    (0..rounds.len())
        .map(|i| OriginScene {
            scene_id: format!("{}#t{}", conversation.conversation_id, i + 1),
            conversation_id: conversation.conversation_id.clone(),
            history: rounds[..i].to_vec(),
            query: rounds[i].query.clone(),
            response: rounds[i].response.clone(),
            t: i as u32 + 1,
            intent_label: None,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentRule {
    pub label: String,
    pub keywords: Vec<String>,
}

/// Keyword classifier: the rule with the most keyword hits wins, earlier
/// rules win ties, and queries with no hits get the fallback label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntentClassifier {
    pub rules: Vec<IntentRule>,
    pub fallback: String,
}

impl Default for IntentClassifier {
    fn default() -> Self {
        let rule = |label: &str, words: &[&str]| IntentRule {
            label: label.into(),
            keywords: words.iter().map(|w| w.to_string()).collect(),
        };
        Self {
            rules: vec![
                rule(
                    "price",
                    &[
                        "price",
                        "cost",
                        "million",
                        "budget",
                        "expensive",
                        "cheap",
                        "negotiable",
                        "value",
                    ],
                ),
                rule(
                    "layout",
                    &[
                        "layout",
                        "bedroom",
                        "bathroom",
                        "square",
                        "area",
                        "floor",
                        "orientation",
                        "facing",
                        "size",
                    ],
                ),
                rule(
                    "policy",
                    &[
                        "tax",
                        "loan",
                        "mortgage",
                        "down payment",
                        "policy",
                        "interest rate",
                        "purchase restriction",
                    ],
                ),
                rule(
                    "scheduling",
                    &[
                        "visit",
                        "viewing",
                        "appointment",
                        "weekend",
                        "tomorrow",
                        "available",
                        "schedule",
                        "come and see",
                    ],
                ),
            ],
            fallback: "small_talk".into(),
        }
    }
}

impl IntentClassifier {
    pub fn classify(&self, query: &str) -> String {
        let q = query.to_lowercase();
        let mut best: Option<(usize, &str)> = None;
        for r in &self.rules {
            let hits = r
                .keywords
                .iter()
                .filter(|k| q.contains(&k.to_lowercase()))
                .count();
            if hits > 0 && best.is_none_or(|(h, _)| hits > h) {
                best = Some((hits, &r.label));
            }
        }
        best.map_or_else(|| self.fallback.clone(), |(_, l)| l.to_string())
    }

    pub fn label(&self, scenes: &mut [OriginScene]) {
        for s in scenes {
            s.intent_label = Some(self.classify(&s.query));
        }
    }
}

/// Turn-depth bucket used for stratification.
pub fn turn_bucket(t: u32) -> &'static str {
    match t {
        0 | 1 => "1",
        2..=3 => "2-3",
        4..=6 => "4-6",
        _ => "7+",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingStrategy {
    /// Scenes kept per (bucket, intent) cell; `None` keeps everything.
    pub quota_per_cell: Option<usize>,
    pub seed: u64,
}

impl Default for SamplingStrategy {
    fn default() -> Self {
        Self {
            quota_per_cell: None,
            seed: 7,
        }
    }
}

/// Stratified sample. Within each cell a seeded shuffle picks the scenes; the
/// result keeps input order.
pub fn sample_scenes(scenes: &[OriginScene], strategy: &SamplingStrategy) -> Vec<OriginScene> {
    let Some(quota) = strategy.quota_per_cell else {
        return scenes.to_vec();
    };
    let mut cells: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for (i, s) in scenes.iter().enumerate() {
        let intent = s.intent_label.as_deref().unwrap_or("");
        cells.entry((turn_bucket(s.t), intent)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(strategy.seed);
    let mut chosen = Vec::new();
    for (_, mut members) in cells {
        members.shuffle(&mut rng);
        chosen.extend(members.into_iter().take(quota));
    }
    chosen.sort_unstable();
    chosen.into_iter().map(|i| scenes[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Message, Speaker};

    fn conversation(rounds: usize) -> RawConversation {
        let mut turns = Vec::new();
        for i in 0..rounds {
            turns.push(Message {
                speaker: Speaker::User,
                text: format!("q{i}"),
            });
            turns.push(Message {
                speaker: Speaker::Agent,
                text: format!("a{i}"),
            });
        }
        RawConversation {
            conversation_id: "c".into(),
            turns,
            quality_score: None,
            anonymized: true,
        }
    }

    #[test]
    fn one_scene_per_round() {
        let scenes = extract_scenes(&conversation(3));
        let lens: Vec<usize> = scenes.iter().map(|s| s.history.len()).collect();
        assert_eq!(lens, [0, 1, 2]);
        assert_eq!(scenes[2].scene_id, "c#t3");
        assert_eq!(extract_scenes(&conversation(1))[0].history.len(), 0);
        assert!(extract_scenes(&conversation(0)).is_empty());
    }

    #[test]
    fn classifier_labels() {
        let c = IntentClassifier::default();
        assert_eq!(c.classify("What is the price of this house?"), "price");
        assert_eq!(c.classify("How many bedrooms?"), "layout");
        assert_eq!(c.classify("What is the loan policy?"), "policy");
        assert_eq!(c.classify("Can I visit this weekend?"), "scheduling");
        assert_eq!(c.classify("hello"), "small_talk");
    }

    #[test]
    fn sampling_quota_and_determinism() {
        let mut scenes = extract_scenes(&conversation(8));
        IntentClassifier::default().label(&mut scenes);
        let all = sample_scenes(&scenes, &SamplingStrategy::default());
        assert_eq!(all, scenes);
        let one = SamplingStrategy {
            quota_per_cell: Some(1),
            seed: 3,
        };
        let picked = sample_scenes(&scenes, &one);
        assert_eq!(picked.len(), 4);
        assert_eq!(picked, sample_scenes(&scenes, &one));
        let ts: Vec<u32> = picked.iter().map(|s| s.t).collect();
        assert!(ts.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(sample_scenes(&scenes[..2], &one).len(), 2);
    }
}
