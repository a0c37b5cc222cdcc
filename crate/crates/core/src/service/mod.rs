//! Sessions over the controller, with append-only transcripts.
//!
//! Each session lives in `<data_dir>/sessions/<id>.jsonl`. The first line
//! records how the session was created; every later line is a committed turn
//! (with its memory operations) or a close marker. Opening a service replays
//! every file, so state survives restarts.
//!
//! Turns on one session are serialized: a second message while one is in
//! flight gets a conflict. A turn runs on a copy of the memory and is swapped
//! in only after its transcript line is on disk, so readers never see a half
//! finished turn.

pub mod http;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::controller::{
    default_roles, start_memory, Controller, LoopConfig, Resources, Termination, Timings,
    TraceEvent, TurnResult,
};
use crate::error::{Error, Result};
use crate::llm::LanguageModel;
use crate::memory::{MemoryOp, WorkingMemory};
use crate::prompt::{FrameworkKind, Mode};
use crate::retrieval::RetrievedExample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Closed,
}

impl std::str::FromStr for SessionStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "active" => Ok(Self::Active),
            "closed" => Ok(Self::Closed),
            _ => Err(Error::Validation(format!("unknown session status `{s}`"))),
        }
    }
}

/// Body of a create request. Unset fields take the service defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub framework: Option<String>,
    pub mode: Option<String>,
    pub max_loops: Option<u32>,
    pub k_examples: Option<usize>,
}

impl CreateSession {
    pub fn new(framework: FrameworkKind, mode: Mode) -> Self {
        Self {
            framework: Some(framework.slug().into()),
            mode: Some(mode.slug().into()),
            ..Self::default()
        }
    }

    fn resolve(&self, defaults: &LoopConfig) -> Result<LoopConfig> {
        let mut c = defaults.clone();
        if let Some(f) = &self.framework {
            c.framework = f.parse()?;
        }
        if let Some(m) = &self.mode {
            c.mode = m.parse()?;
        }
        if let Some(n) = self.max_loops {
            c.max_loops = n;
        }
        if let Some(k) = self.k_examples {
            c.k_examples = k;
        }
        c.validate()?;
        Ok(c)
    }
}

/// What the service reports about one turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnTrace {
    pub turn_index: u32,
    pub query: String,
    pub response: String,
    pub termination: Termination,
    pub steps: Vec<TraceEvent>,
    pub recalled_examples: Vec<RetrievedExample>,
    /// Scratchpad as rendered into the prompt after the turn.
    pub scratchpad: String,
    pub timings: Timings,
    pub model_calls: u32,
    pub tool_executions: u32,
    pub diagnostics: Vec<String>,
}

impl TurnTrace {
    fn from_turn(t: &TurnResult, memory: &WorkingMemory) -> Self {
        Self {
            turn_index: t.turn_index,
            query: t.query.clone(),
            response: t.response.clone(),
            termination: t.termination,
            steps: t.events.clone(),
            recalled_examples: memory.recalled_examples.clone(),
            scratchpad: memory.scratchpad.render(),
            timings: t.timings.clone(),
            model_calls: t.model_calls,
            tool_executions: t.tool_executions,
            diagnostics: t.diagnostics.clone(),
        }
    }
}

/// One transcript line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TranscriptEvent {
    Created {
        session_id: String,
        config: LoopConfig,
        roles: BTreeMap<String, String>,
        created_at: String,
    },
    Turn {
        at: String,
        trace: TurnTrace,
        ops: Vec<MemoryOp>,
    },
    Closed {
        at: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub framework: FrameworkKind,
    pub mode: Mode,
    pub turns: usize,
    pub status: SessionStatus,
    pub created_at: String,
    pub updated_at: String,
}

/// The `/state` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub status: SessionStatus,
    pub created_at: String,
    pub updated_at: String,
    pub config: LoopConfig,
    pub memory: serde_json::Value,
    pub turns: Vec<TurnTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageReply {
    pub response: String,
    pub trace: TurnTrace,
}

#[derive(Debug, Clone)]
struct Committed {
    status: SessionStatus,
    created_at: String,
    updated_at: String,
    memory: WorkingMemory,
    turns: Vec<TurnTrace>,
}

struct Session {
    id: String,
    config: LoopConfig,
    path: PathBuf,
    backend: Arc<dyn LanguageModel>,
    busy: AtomicBool,
    committed: RwLock<Committed>,
}

impl Session {
    fn summary(&self) -> SessionSummary {
        let c = self.committed.read().expect("session lock");
        SessionSummary {
            session_id: self.id.clone(),
            framework: self.config.framework,
            mode: self.config.mode,
            turns: c.turns.len(),
            status: c.status,
            created_at: c.created_at.clone(),
            updated_at: c.updated_at.clone(),
        }
    }
}

/// Clears the in-flight flag when a turn ends, including by panic.
struct BusyGuard<'a>(&'a AtomicBool);

impl Drop for BusyGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Micros, true)
}

pub struct SessionService {
    resources: Arc<Resources>,
    backend: Arc<dyn LanguageModel>,
    defaults: LoopConfig,
    dir: PathBuf,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

impl SessionService {
    /// Opens `data_dir`, replaying any transcripts already there. Each
    /// session talks to its own fork of `backend`.
    pub fn open(
        resources: Arc<Resources>,
        backend: Arc<dyn LanguageModel>,
        defaults: LoopConfig,
        data_dir: &Path,
    ) -> Result<Self> {
        defaults.validate()?;
        let dir = data_dir.join("sessions");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let service = Self {
            resources,
            backend,
            defaults,
            dir,
            sessions: RwLock::default(),
        };
        let mut files: Vec<PathBuf> = fs::read_dir(&service.dir)
            .map_err(|e| Error::io(&service.dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        files.sort();
        for path in files {
            let session = service.replay(&path)?;
            service
                .sessions
                .write()
                .expect("sessions lock")
                .insert(session.id.clone(), Arc::new(session));
        }
        Ok(service)
    }

    pub fn defaults(&self) -> &LoopConfig {
        &self.defaults
    }

    fn replay(&self, path: &Path) -> Result<Session> {
        let events: Vec<TranscriptEvent> = crate::jsonl::read(path)?;
        let mut events = events.into_iter();
        let Some(TranscriptEvent::Created {
            session_id,
            config,
            roles,
            created_at,
        }) = events.next()
        else {
            return Err(Error::Validation(format!(
                "{}: transcript does not start with a created event",
                path.display()
            )));
        };
        let clock = DateTime::parse_from_rfc3339(&created_at)
            .map_err(|e| Error::Validation(format!("{}: bad created_at: {e}", path.display())))?
            .with_timezone(&Utc);
        let mut memory = start_memory(&config, &self.resources.registry, &roles, clock)?;
        let mut status = SessionStatus::Active;
        let mut updated_at = created_at.clone();
        let mut turns = Vec::new();
        for event in events {
            match event {
                TranscriptEvent::Created { .. } => {
                    return Err(Error::Validation(format!(
                        "{}: duplicate created event",
                        path.display()
                    )))
                }
                TranscriptEvent::Turn { at, trace, ops } => {
                    memory.replay(&ops)?;
                    turns.push(trace);
                    updated_at = at;
                }
                TranscriptEvent::Closed { at } => {
                    status = SessionStatus::Closed;
                    updated_at = at;
                }
            }
        }
        let committed = Committed {
            status,
            created_at,
            updated_at,
            memory,
            turns,
        };
        Ok(Session {
            id: session_id,
            config,
            path: path.to_path_buf(),
            backend: self.backend.fork(),
            busy: AtomicBool::new(false),
            committed: RwLock::new(committed),
        })
    }

    fn session(&self, id: &str) -> Result<Arc<Session>> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("session `{id}`")))
    }

    pub fn create_session(&self, request: &CreateSession) -> Result<SessionSummary> {
        let config = request.resolve(&self.defaults)?;
        let roles = default_roles();
        let now = Utc::now();
        let created_at = timestamp(now);
        // The stored clock is what replay sees, so build memory from it too.
        let clock = DateTime::parse_from_rfc3339(&created_at)
            .expect("own timestamp parses")
            .with_timezone(&Utc);
        let memory = start_memory(&config, &self.resources.registry, &roles, clock)?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let path = self.dir.join(format!("{id}.jsonl"));
        crate::jsonl::append(
            &path,
            &TranscriptEvent::Created {
                session_id: id.clone(),
                config: config.clone(),
                roles,
                created_at: created_at.clone(),
            },
        )?;
        let session = Arc::new(Session {
            id: id.clone(),
            config,
            path,
            backend: self.backend.fork(),
            busy: AtomicBool::new(false),
            committed: RwLock::new(Committed {
                status: SessionStatus::Active,
                updated_at: created_at.clone(),
                created_at,
                memory,
                turns: Vec::new(),
            }),
        });
        let summary = session.summary();
        self.sessions
            .write()
            .expect("sessions lock")
            .insert(id, session);
        Ok(summary)
    }

    /// Runs one turn. Backend failures still commit a turn, with a
    /// `system_error` termination in its trace.
    pub fn post_message(&self, id: &str, text: &str) -> Result<MessageReply> {
        let session = self.session(id)?;
        if session
            .busy
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .is_err()
        {
            return Err(Error::Conflict(format!(
                "session `{id}` already has a turn in flight"
            )));
        }
        let _busy = BusyGuard(&session.busy);
        let mut memory = {
            let c = session.committed.read().expect("session lock");
            if c.status == SessionStatus::Closed {
                return Err(Error::Conflict(format!("session `{id}` is closed")));
            }
            c.memory.clone()
        };
        let controller =
            Controller::new(&self.resources, session.backend.as_ref(), &session.config);
        let turn = controller.handle_query(&mut memory, text)?;
        let trace = TurnTrace::from_turn(&turn, &memory);
        let at = timestamp(Utc::now());
        crate::jsonl::append(
            &session.path,
            &TranscriptEvent::Turn {
                at: at.clone(),
                trace: trace.clone(),
                ops: turn.ops,
            },
        )?;
        let mut c = session.committed.write().expect("session lock");
        c.memory = memory;
        c.turns.push(trace.clone());
        c.updated_at = at;
        Ok(MessageReply {
            response: turn.response,
            trace,
        })
    }

    pub fn get_state(&self, id: &str) -> Result<SessionState> {
        let session = self.session(id)?;
        let c = session.committed.read().expect("session lock");
        Ok(SessionState {
            session_id: session.id.clone(),
            status: c.status,
            created_at: c.created_at.clone(),
            updated_at: c.updated_at.clone(),
            config: session.config.clone(),
            memory: c.memory.snapshot(),
            turns: c.turns.clone(),
        })
    }

    /// Newest first, optionally only sessions in `status`.
    pub fn list_sessions(&self, status: Option<SessionStatus>) -> Vec<SessionSummary> {
        let mut out: Vec<SessionSummary> = self
            .sessions
            .read()
            .expect("sessions lock")
            .values()
            .map(|s| s.summary())
            .filter(|s| status.is_none_or(|want| s.status == want))
            .collect();
        out.sort_by(|a, b| {
            b.updated_at
                .cmp(&a.updated_at)
                .then_with(|| b.created_at.cmp(&a.created_at))
                .then_with(|| a.session_id.cmp(&b.session_id))
        });
        out
    }

    pub fn close_session(&self, id: &str) -> Result<SessionSummary> {
        let session = self.session(id)?;
        if session.busy.load(Ordering::Acquire) {
            return Err(Error::Conflict(format!(
                "session `{id}` has a turn in flight"
            )));
        }
        let mut c = session.committed.write().expect("session lock");
        if c.status == SessionStatus::Closed {
            return Err(Error::Conflict(format!("session `{id}` is already closed")));
        }
        let at = timestamp(Utc::now());
        crate::jsonl::append(&session.path, &TranscriptEvent::Closed { at: at.clone() })?;
        c.status = SessionStatus::Closed;
        c.updated_at = at;
        drop(c);
        Ok(session.summary())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedBackend;

    const REPLY: &str = "Thought: The user wants the year.\nAction: Finish [It was built in 2020.]";

    fn service(dir: &Path) -> SessionService {
        let backend: Arc<dyn LanguageModel> =
            Arc::new(ScriptedBackend::from_replies([REPLY; 4]).unwrap());
        SessionService::open(
            Arc::new(Resources::canonical()),
            backend,
            LoopConfig::default(),
            dir,
        )
        .unwrap()
    }

    #[test]
    fn create_post_close() {
        let dir = tempfile::tempdir().unwrap();
        let svc = service(dir.path());
        let s = svc
            .create_session(&CreateSession::new(FrameworkKind::Raise, Mode::Prompting))
            .unwrap();
        assert_eq!(svc.get_state(&s.session_id).unwrap().turns.len(), 0);
        let reply = svc
            .post_message(&s.session_id, "When was it built?")
            .unwrap();
        assert!(reply.response.contains("built in 2020"));
        svc.close_session(&s.session_id).unwrap();
        let err = svc.post_message(&s.session_id, "again").unwrap_err();
        assert!(matches!(err, Error::Conflict(_)));
        assert!(matches!(svc.get_state("nope"), Err(Error::NotFound(_))));
        assert_eq!(svc.list_sessions(Some(SessionStatus::Closed)).len(), 1);
        assert!(svc.list_sessions(Some(SessionStatus::Active)).is_empty());
    }

    #[test]
    fn bad_config_is_validation() {
        let dir = tempfile::tempdir().unwrap();
        let svc = service(dir.path());
        let req = CreateSession {
            framework: Some("X".into()),
            ..CreateSession::default()
        };
        assert!(svc.create_session(&req).unwrap_err().is_validation());
        let req = CreateSession {
            max_loops: Some(0),
            ..CreateSession::default()
        };
        assert!(svc.create_session(&req).unwrap_err().is_validation());
    }

    #[test]
    fn reopen_restores_state() {
        let dir = tempfile::tempdir().unwrap();
        let svc = service(dir.path());
        let s = svc.create_session(&CreateSession::default()).unwrap();
        svc.post_message(&s.session_id, "When was it built?")
            .unwrap();
        let before = serde_json::to_string(&svc.get_state(&s.session_id).unwrap()).unwrap();
        drop(svc);
        let svc = service(dir.path());
        let after = serde_json::to_string(&svc.get_state(&s.session_id).unwrap()).unwrap();
        assert_eq!(before, after);
    }
}
