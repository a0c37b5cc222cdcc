//! Example recall by vector similarity.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::memory::{ConversationHistory, ExamplePool};

/// Maps text to a fixed-length vector. Must be deterministic.
pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

/// Lowercases and collapses whitespace runs to single spaces.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Hashed bag of words: each token adds ±1 to one of `dim` buckets, then the
/// vector is scaled to unit length.
#[derive(Debug, Clone)]
pub struct HashedBowEmbedder {
    dim: usize,
    id: String,
}

impl HashedBowEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dim must be positive");
        Self {
            dim,
            id: format!("hashed-bow-{dim}"),
        }
    }
}

impl Default for HashedBowEmbedder {
    fn default() -> Self {
        Self::new(256)
    }
}

fn tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
}

impl Embedder for HashedBowEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let norm = normalize(text);
        if norm.is_empty() {
            return Err(Error::Validation("cannot embed empty text".into()));
        }
        let mut v = vec![0.0; self.dim];
        let mut any = false;
        for tok in tokens(&norm) {
            any = true;
            let h = Sha256::digest(tok.as_bytes());
            let bucket =
                u64::from_le_bytes(h[..8].try_into().expect("8 bytes")) as usize % self.dim;
            v[bucket] += if h[8] & 1 == 0 { 1.0 } else { -1.0 };
        }
        if !any {
            // Punctuation-only text still gets a stable non-zero vector.
            let h = Sha256::digest(norm.as_bytes());
            v[h[0] as usize % self.dim] = 1.0;
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        } else {
            // Signed hits cancelled out exactly.
            v[0] = 1.0;
        }
        Ok(v)
    }
}

/// Cosine similarity clamped to [-1, 1]; zero vectors score 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub example_id: String,
    pub vector: Vec<f64>,
    pub query: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedExample {
    pub example_id: String,
    pub query: String,
    pub response: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleIndex {
    entries: Vec<IndexEntry>,
    embedder_id: String,
    dim: usize,
}

/// Descending score, then ascending id.
fn rank(a: &RetrievedExample, b: &RetrievedExample) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.example_id.cmp(&b.example_id))
}

impl ExampleIndex {
    /// Embeds each example's query.
    pub fn build(pool: &ExamplePool, embedder: &dyn Embedder) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::Validation("example pool is empty".into()));
        }
        // Pools built through ExamplePool::new are already unique; re-check
        // because the index may outlive the pool's guarantees.
        let mut seen = std::collections::BTreeSet::new();
        let mut entries = Vec::with_capacity(pool.len());
        for e in pool.examples() {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate example id `{}`",
                    e.id
                )));
            }
            entries.push(IndexEntry {
                example_id: e.id.clone(),
                vector: embedder.embed(&e.query)?,
                query: e.query.clone(),
                response: e.response.clone(),
            });
        }
        Ok(Self {
            entries,
            embedder_id: embedder.id().to_string(),
            dim: embedder.dim(),
        })
    }

    pub fn empty(embedder: &dyn Embedder) -> Self {
        Self {
            entries: Vec::new(),
            embedder_id: embedder.id().to_string(),
            dim: embedder.dim(),
        }
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Top `k` entries for a precomputed key vector.
    pub fn search(&self, key: &[f64], k: usize) -> Vec<RetrievedExample> {
        if k == 0 {
            return Vec::new();
        }
        let mut all: Vec<RetrievedExample> = self
            .entries
            .iter()
            .map(|e| RetrievedExample {
                example_id: e.example_id.clone(),
                query: e.query.clone(),
                response: e.response.clone(),
                score: cosine(key, &e.vector),
            })
            .collect();
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, rank);
            all.truncate(k);
        }
        all.sort_by(rank);
        all
    }

    /// Recalls examples for `history_tail` followed by `query`.
    pub fn recall_top_k(
        &self,
        embedder: &dyn Embedder,
        history_tail: &str,
        query: &str,
        k: usize,
    ) -> Result<Vec<RetrievedExample>> {
        if k == 0 || self.entries.is_empty() {
            return Ok(Vec::new());
        }
        if embedder.id() != self.embedder_id {
            return Err(Error::Validation(format!(
                "index built with `{}`, queried with `{}`",
                self.embedder_id,
                embedder.id()
            )));
        }
        let key_text = if history_tail.trim().is_empty() {
            query.to_string()
        } else {
            format!("{history_tail}\n{query}")
        };
        let key = embedder.embed(&key_text)?;
        Ok(self.search(&key, k))
    }
}

/// The text of the last `window` completed turns, used as retrieval context.
pub fn history_tail(history: &ConversationHistory, window: usize) -> String {
    let done: Vec<_> = history.completed().collect();
    let start = done.len().saturating_sub(window);
    done[start..]
        .iter()
        .map(|t| format!("{}\n{}", t.query, t.response.as_deref().unwrap_or_default()))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_examples(results: &[RetrievedExample]) -> String {
    results
        .iter()
        .map(|r| format!("User: {}\nAgent: {}", r.query, r.response))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::ExampleRecord;

    fn pool(items: &[(&str, &str)]) -> ExamplePool {
        ExamplePool::new(
            items
                .iter()
                .map(|(id, q)| ExampleRecord {
                    id: id.to_string(),
                    query: q.to_string(),
                    response: format!("answer to {q}"),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn embed_is_deterministic_and_normalized() {
        let e = HashedBowEmbedder::default();
        let a = e.embed("abc").unwrap();
        assert_eq!(a, e.embed("abc").unwrap());
        assert_eq!(a, e.embed("  ABC ").unwrap());
        assert_eq!(a.len(), 256);
        assert!((cosine(&a, &a) - 1.0).abs() < 1e-9);
        assert!(matches!(e.embed("   "), Err(Error::Validation(_))));
        assert!(e.embed("?!").is_ok());
    }

    #[test]
    fn build_index_cardinality_and_determinism() {
        let e = HashedBowEmbedder::default();
        let p = pool(&[("1", "a b"), ("2", "c"), ("3", "d"), ("4", "e"), ("5", "f")]);
        let idx = ExampleIndex::build(&p, &e).unwrap();
        assert_eq!(idx.len(), 5);
        assert_eq!(idx, ExampleIndex::build(&p, &e).unwrap());
    }

    #[test]
    fn self_match_ranks_first() {
        let e = HashedBowEmbedder::default();
        let p = pool(&[
            ("a", "In which year was this house constructed?"),
            ("b", "Is there a school district for this house?"),
            ("c", "What is the loan policy in this city?"),
        ]);
        let idx = ExampleIndex::build(&p, &e).unwrap();
        let got = idx
            .recall_top_k(&e, "", "Is there a school district for this house?", 3)
            .unwrap();
        assert_eq!(got[0].example_id, "b");
        assert!((got[0].score - 1.0).abs() < 1e-9);
        assert!(got.windows(2).all(|w| w[0].score >= w[1].score));
        assert!(idx.recall_top_k(&e, "", "x", 0).unwrap().is_empty());
    }

    #[test]
    fn ties_break_by_id() {
        let e = HashedBowEmbedder::default();
        let p = pool(&[("b", "same text"), ("a", "same text"), ("c", "same text")]);
        let idx = ExampleIndex::build(&p, &e).unwrap();
        let ids: Vec<String> = idx
            .recall_top_k(&e, "", "same text", 2)
            .unwrap()
            .into_iter()
            .map(|r| r.example_id)
            .collect();
        assert_eq!(ids, ["a", "b"]);
    }

    #[test]
    fn empty_index_recalls_nothing() {
        let e = HashedBowEmbedder::default();
        assert!(ExampleIndex::empty(&e)
            .recall_top_k(&e, "", "q", 3)
            .unwrap()
            .is_empty());
        assert!(ExampleIndex::build(&ExamplePool::default(), &e).is_err());
    }

    #[test]
    fn render_blocks() {
        let r = |id: &str, q: &str, a: &str, s: f64| RetrievedExample {
            example_id: id.into(),
            query: q.into(),
            response: a.into(),
            score: s,
        };
        assert_eq!(render_examples(&[]), "");
        let three = [
            r("1", "q1", "a1", 0.9),
            r("2", "q2", "a2", 0.5),
            r("3", "q3", "a3", 0.1),
        ];
        assert_eq!(
            render_examples(&three),
            "User: q1\nAgent: a1\nUser: q2\nAgent: a2\nUser: q3\nAgent: a3"
        );
    }

    #[test]
    fn history_tail_uses_last_completed_turns() {
        let mut h = ConversationHistory::default();
        for i in 1..=3 {
            h.append_query(format!("q{i}")).unwrap();
            h.commit_response(format!("a{i}")).unwrap();
        }
        h.append_query("pending").unwrap();
        assert_eq!(history_tail(&h, 2), "q2\na2\nq3\na3");
        assert_eq!(history_tail(&h, 0), "");
    }
}
