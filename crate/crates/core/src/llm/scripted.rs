//! Deterministic playback backend.
//!
//! A script is a JSON-lines file of `{"match": "<hex prefix>", "reply": "..."}`
//! records. Keyed records answer any prompt whose digest starts with `match`
//! and may answer repeatedly. Rule records carry a `when` list instead and
//! answer any prompt whose digested part contains every listed substring;
//! the first matching rule wins and is not consumed either. Records with an
//! empty or `"*"` match and no `when` are consumed in file order by prompts
//! nothing else claims.

use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, CompletionRequest, LanguageModel};

/// The digest covers the prompt text after the last occurrence of this line,
/// which is where the per-turn sections start.
pub const DIGEST_MARKER: &str = "Let's get started:";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, rename = "match")]
    pub match_digest: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub when: Vec<String>,
    pub reply: String,
}

impl ScriptEntry {
    pub fn positional(reply: impl Into<String>) -> Self {
        Self {
            match_digest: String::new(),
            when: Vec::new(),
            reply: reply.into(),
        }
    }

    /// Answers any prompt whose tail contains all of `needles`.
    pub fn rule<I, S>(needles: I, reply: impl Into<String>) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            match_digest: String::new(),
            when: needles.into_iter().map(Into::into).collect(),
            reply: reply.into(),
        }
    }

    fn is_wildcard(&self) -> bool {
        self.match_digest.is_empty() || self.match_digest == "*"
    }

    fn is_rule(&self) -> bool {
        !self.when.is_empty()
    }

    fn is_positional(&self) -> bool {
        self.is_wildcard() && !self.is_rule()
    }

    fn is_keyed(&self) -> bool {
        !self.is_wildcard()
    }
}

fn prompt_tail(prompt: &str) -> &str {
    match prompt.rfind(DIGEST_MARKER) {
        Some(at) => &prompt[at + DIGEST_MARKER.len()..],
        None => prompt,
    }
}

/// Hex sha256 of the variable part of a prompt.
pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt_tail(prompt).as_bytes()))
}

#[derive(Debug, Default)]
struct Cursor {
    next: usize,
    calls: usize,
}

#[derive(Debug)]
pub struct ScriptedBackend {
    entries: Arc<Vec<ScriptEntry>>,
    cursor: Mutex<Cursor>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScriptEntry>) -> Result<Self, BackendError> {
        if entries.is_empty() {
            return Err(BackendError::Configuration("script has no entries".into()));
        }
        for e in &entries {
            if e.is_keyed() && e.is_rule() {
                return Err(BackendError::Configuration(
                    "a script entry cannot have both `match` and `when`".into(),
                ));
            }
            if e.is_keyed() && !e.match_digest.chars().all(|c| c.is_ascii_hexdigit()) {
                return Err(BackendError::Configuration(format!(
                    "script match `{}` is not a hex digest prefix",
                    e.match_digest
                )));
            }
        }
        Ok(Self {
            entries: Arc::new(entries),
            cursor: Mutex::default(),
        })
    }

    /// A script of positional replies.
    pub fn from_replies<I, S>(replies: I) -> Result<Self, BackendError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(replies.into_iter().map(ScriptEntry::positional).collect())
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let entries = crate::jsonl::read::<ScriptEntry>(path)
            .map_err(|e| BackendError::Configuration(e.to_string()))?;
        Self::new(entries)
    }

    pub fn entries(&self) -> &[ScriptEntry] {
        &self.entries
    }

    /// Number of completions served so far by this handle.
    pub fn calls(&self) -> usize {
        self.cursor.lock().expect("cursor lock").calls
    }

    fn positional_remaining(&self, from: usize) -> Option<usize> {
        self.entries[from..]
            .iter()
            .position(ScriptEntry::is_positional)
            .map(|i| from + i)
    }
}

impl LanguageModel for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        request.validate()?;
        let digest = prompt_digest(&request.prompt);
        let mut cursor = self.cursor.lock().expect("cursor lock");
        if let Some(e) = self
            .entries
            .iter()
            .find(|e| e.is_keyed() && digest.starts_with(&e.match_digest.to_ascii_lowercase()))
        {
            cursor.calls += 1;
            return Ok(e.reply.clone());
        }
        let tail = prompt_tail(&request.prompt);
        if let Some(e) = self
            .entries
            .iter()
            .find(|e| e.is_rule() && e.when.iter().all(|w| tail.contains(w.as_str())))
        {
            cursor.calls += 1;
            return Ok(e.reply.clone());
        }
        match self.positional_remaining(cursor.next) {
            Some(i) => {
                cursor.next = i + 1;
                cursor.calls += 1;
                Ok(self.entries[i].reply.clone())
            }
            None => Err(BackendError::Script(format!(
                "no script entry for prompt digest {}",
                &digest[..12]
            ))),
        }
    }

    fn fork(&self) -> Arc<dyn LanguageModel> {
        Arc::new(Self {
            entries: Arc::clone(&self.entries),
            cursor: Mutex::default(),
        })
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(p: &str) -> CompletionRequest {
        CompletionRequest::new(p)
    }

    #[test]
    fn keyed_entry_answers_matching_prompt() {
        let prompt = "profile\nLet's get started:\nCurrent Query: q";
        let digest = prompt_digest(prompt);
        let b = ScriptedBackend::new(vec![ScriptEntry {
            match_digest: digest[..8].to_string(),
            when: Vec::new(),
            reply: "Action: Finish [hi]".into(),
        }])
        .unwrap();
        assert_eq!(b.complete(&req(prompt)).unwrap(), "Action: Finish [hi]");
        // Keyed entries are not consumed.
        assert_eq!(b.complete(&req(prompt)).unwrap(), "Action: Finish [hi]");
        let err = b
            .complete(&req("Let's get started:\nCurrent Query: other"))
            .unwrap_err();
        assert_eq!(err.code(), "script_error");
    }

    #[test]
    fn digest_ignores_text_before_marker() {
        let a = prompt_digest("template v1\nLet's get started:\nX");
        let b = prompt_digest("template v2, reworded\nLet's get started:\nX");
        assert_eq!(a, b);
        assert_ne!(a, prompt_digest("Let's get started:\nY"));
        assert_eq!(prompt_digest("abc").len(), 64);
    }

    #[test]
    fn rules_match_on_tail_substrings() {
        let b = ScriptedBackend::new(vec![
            ScriptEntry::rule(["Query: a", "fact"], "known"),
            ScriptEntry::rule(["Query: a"], "lookup"),
            ScriptEntry::positional("fallback"),
        ])
        .unwrap();
        assert_eq!(
            b.complete(&req("fact\nLet's get started:\nQuery: a"))
                .unwrap(),
            "lookup"
        );
        assert_eq!(
            b.complete(&req("Let's get started:\nfact\nQuery: a"))
                .unwrap(),
            "known"
        );
        assert_eq!(
            b.complete(&req("Let's get started:\nQuery: a")).unwrap(),
            "lookup"
        );
        assert_eq!(
            b.complete(&req("Let's get started:\nQuery: b")).unwrap(),
            "fallback"
        );
        let bad = ScriptEntry {
            match_digest: "ab".into(),
            ..ScriptEntry::rule(["x"], "y")
        };
        assert!(ScriptedBackend::new(vec![bad]).is_err());
    }

    #[test]
    fn positional_entries_in_order_then_exhausted() {
        let b = ScriptedBackend::from_replies(["a", "b", "c"]).unwrap();
        let got: Vec<String> = (0..3).map(|_| b.complete(&req("p")).unwrap()).collect();
        assert_eq!(got, ["a", "b", "c"]);
        assert!(matches!(
            b.complete(&req("p")),
            Err(BackendError::Script(_))
        ));
        assert_eq!(b.calls(), 3);
    }

    #[test]
    fn fork_restarts_the_cursor() {
        let b = ScriptedBackend::from_replies(["a", "b"]).unwrap();
        b.complete(&req("p")).unwrap();
        let f = b.fork();
        assert_eq!(f.complete(&req("p")).unwrap(), "a");
        assert_eq!(b.complete(&req("p")).unwrap(), "b");
    }

    #[test]
    fn empty_or_bad_script_is_configuration_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(matches!(
            ScriptedBackend::load(&path),
            Err(BackendError::Configuration(_))
        ));
        std::fs::write(&path, "{not json").unwrap();
        assert!(matches!(
            ScriptedBackend::load(&path),
            Err(BackendError::Configuration(_))
        ));
        std::fs::write(&path, "{\"match\": \"zz\", \"reply\": \"x\"}").unwrap();
        assert!(ScriptedBackend::load(&path).is_err());
        std::fs::write(
            &path,
            "{\"reply\": \"1\"}\n{\"match\": \"*\", \"reply\": \"2\"}\n{\"reply\": \"3\"}\n",
        )
        .unwrap();
        let b = ScriptedBackend::load(&path).unwrap();
        let got: Vec<String> = (0..3).map(|_| b.complete(&req("p")).unwrap()).collect();
        assert_eq!(got, ["1", "2", "3"]);
    }
}
