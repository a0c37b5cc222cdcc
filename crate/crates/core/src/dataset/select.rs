//! Conversation selection and anonymization.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Message, RawConversation, Round, Speaker};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionCriteria {
    /// Minimum number of user messages after normalization.
    pub min_turns: usize,
    pub min_quality: f64,
    /// Share of raw messages written by the user.
    pub min_user_message_ratio: f64,
    /// Require the last message to be the agent's.
    pub require_scene_completion: bool,
}

impl Default for SelectionCriteria {
    fn default() -> Self {
        Self {
            min_turns: 0,
            min_quality: 0.0,
            min_user_message_ratio: 0.0,
            require_scene_completion: false,
        }
    }
}

impl SelectionCriteria {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_user_message_ratio) {
            return Err(Error::Validation(
                "min_user_message_ratio must be in [0, 1]".into(),
            ));
        }
        if !self.min_quality.is_finite() {
            return Err(Error::Validation("min_quality must be finite".into()));
        }
        Ok(())
    }
}

/// Merges consecutive messages from the same speaker and drops agent
/// messages before the first user message.
pub fn normalize_turns(turns: &[Message]) -> Vec<Message> {
    let mut out: Vec<Message> = Vec::new();
    for m in turns {
        let text = m.text.trim();
        if text.is_empty() || (out.is_empty() && m.speaker == Speaker::Agent) {
            continue;
        }
        match out.last_mut() {
            Some(last) if last.speaker == m.speaker => {
                last.text.push('\n');
                last.text.push_str(text);
            }
            _ => out.push(Message {
                speaker: m.speaker,
                text: text.to_string(),
            }),
        }
    }
    out
}

/// Complete user/agent rounds of a normalized conversation.
pub(crate) fn rounds(turns: &[Message]) -> Vec<Round> {
    let normalized = normalize_turns(turns);
    normalized
        .chunks_exact(2)
        .map(|pair| Round {
            query: pair[0].text.clone(),
            response: pair[1].text.clone(),
        })
        .collect()
}

struct Rule {
    pattern: Regex,
    replacement: &'static str,
}

static RULES: LazyLock<Vec<Rule>> = LazyLock::new(|| {
    let rule = |p: &str, replacement| Rule {
        pattern: Regex::new(p).expect("anonymization pattern"),
        replacement,
    };
    vec![
        rule(r"[\w.+-]+@[\w-]+(?:\.[\w-]+)+", "[EMAIL]"),
        rule(r"\b\d{17}[\dXx]\b|\b\d{15}\b", "[ID_NUMBER]"),
        rule(
            r"(?:\+?86[- ]?)?\b1[3-9]\d[- ]?\d{4}[- ]?\d{4}\b",
            "[PHONE]",
        ),
        rule(
            r"(?i)\b(we ?chat(?: id)?\s*(?:is|:)?\s*)([A-Za-z][\w-]{4,19}|\d{5,12})\b",
            "${1}[WECHAT]",
        ),
        rule(
            r"\b((?:Mr|Mrs|Ms|Dr)\.?|Miss)\s+[A-Z][a-z]+(?:\s+[A-Z][a-z]+)?",
            "${1} [NAME]",
        ),
        rule(
            r"\b((?i:my name is))\s+[A-Z][a-z]+(?:\s+[A-Z][a-z]+)?",
            "${1} [NAME]",
        ),
    ]
});

/// Replaces e-mail addresses, ID numbers, phone numbers, WeChat ids and
/// personal names with placeholder tokens. Seven-digit listing ids survive.
pub fn anonymize(text: &str) -> String {
    RULES.iter().fold(text.to_string(), |acc, r| {
        r.pattern.replace_all(&acc, r.replacement).into_owned()
    })
}

fn keep(c: &RawConversation, criteria: &SelectionCriteria) -> bool {
    let normalized = normalize_turns(&c.turns);
    let user_turns = normalized
        .iter()
        .filter(|m| m.speaker == Speaker::User)
        .count();
    let raw_user = c
        .turns
        .iter()
        .filter(|m| m.speaker == Speaker::User)
        .count();
    let ratio = if c.turns.is_empty() {
        0.0
    } else {
        raw_user as f64 / c.turns.len() as f64
    };
    let quality_ok =
        criteria.min_quality <= 0.0 || c.quality_score.is_some_and(|q| q >= criteria.min_quality);
    let complete = normalized
        .last()
        .is_some_and(|m| m.speaker == Speaker::Agent);
    user_turns >= criteria.min_turns
        && quality_ok
        && ratio >= criteria.min_user_message_ratio
        && (!criteria.require_scene_completion || complete)
}

/// Keeps conversations meeting every criterion, normalized and anonymized,
/// in input order.
pub fn select_conversations(
    corpus: &[RawConversation],
    criteria: &SelectionCriteria,
) -> Result<Vec<RawConversation>> {
    criteria.validate()?;
    Ok(corpus
        .iter()
        .filter(|c| keep(c, criteria))
        .map(|c| RawConversation {
            conversation_id: c.conversation_id.clone(),
            turns: normalize_turns(&c.turns)
                .into_iter()
                .map(|m| Message {
                    speaker: m.speaker,
                    text: anonymize(&m.text),
                })
                .collect(),
            quality_score: c.quality_score,
            anonymized: true,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(speaker: Speaker, text: &str) -> Message {
        Message {
            speaker,
            text: text.into(),
        }
    }

    fn conv(id: &str, user_turns: usize) -> RawConversation {
        let mut turns = Vec::new();
        for i in 0..user_turns {
            turns.push(msg(Speaker::User, &format!("q{i}")));
            turns.push(msg(Speaker::Agent, &format!("a{i}")));
        }
        RawConversation {
            conversation_id: id.into(),
            turns,
            quality_score: Some(0.5),
            anonymized: false,
        }
    }

    #[test]
    fn normalization_merges_and_trims() {
        let turns = vec![
            msg(Speaker::Agent, "hello, how can I help?"),
            msg(Speaker::User, "hi"),
            msg(Speaker::User, "is it still for sale?"),
            msg(Speaker::Agent, "yes"),
            msg(Speaker::User, "ok"),
        ];
        let n = normalize_turns(&turns);
        assert_eq!(n.len(), 3);
        assert_eq!(n[0].text, "hi\nis it still for sale?");
        assert_eq!(rounds(&turns).len(), 1);
    }

    #[test]
    fn min_turns_filter() {
        let corpus: Vec<_> = (1..=10).map(|n| conv(&format!("c{n}"), n)).collect();
        let criteria = SelectionCriteria {
            min_turns: 4,
            ..Default::default()
        };
        let kept = select_conversations(&corpus, &criteria).unwrap();
        assert_eq!(kept.len(), 7);
        assert!(kept.iter().all(|c| c.turns.len() >= 8 && c.anonymized));
        let all = select_conversations(&corpus, &SelectionCriteria::default()).unwrap();
        assert_eq!(all.len(), 10);
    }

    #[test]
    fn quality_ratio_and_completion() {
        let mut c = conv("c", 2);
        c.turns.push(msg(Speaker::User, "unanswered"));
        let need_complete = SelectionCriteria {
            require_scene_completion: true,
            ..Default::default()
        };
        assert!(select_conversations(&[c.clone()], &need_complete)
            .unwrap()
            .is_empty());
        let high_quality = SelectionCriteria {
            min_quality: 0.9,
            ..Default::default()
        };
        assert!(select_conversations(&[c.clone()], &high_quality)
            .unwrap()
            .is_empty());
        let ratio = SelectionCriteria {
            min_user_message_ratio: 0.7,
            ..Default::default()
        };
        assert!(select_conversations(&[c], &ratio).unwrap().is_empty());
        assert!(SelectionCriteria {
            min_user_message_ratio: 1.5,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn anonymization_patterns() {
        let text = "My name is Wang Lei, call 138-1234-5678 or +86 13912345678, \
                    mail wl@example.com, WeChat: wanglei_88, id 110101199003071234. \
                    Is house 1021111 available? Mr. Chen said yes.";
        let out = anonymize(text);
        for pii in [
            "Wang Lei",
            "138-1234-5678",
            "13912345678",
            "wl@example.com",
            "wanglei_88",
            "110101199003071234",
            "Chen",
        ] {
            assert!(!out.contains(pii), "{pii} leaked: {out}");
        }
        assert!(out.contains("1021111"));
        assert!(out.contains("[PHONE]") && out.contains("[EMAIL]") && out.contains("[WECHAT]"));
        assert!(out.contains("[ID_NUMBER]") && out.contains("[NAME]"));
    }
}
