//! TOML configuration shared by the CLI and the session service.
//!
//! Unknown keys are errors. `--set section.key=value` overrides are applied
//! to the parsed table before it is typed, so they obey the same rules.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::controller::{LoopConfig, Resources, DEFAULT_FALLBACK};
use crate::dataset::{AugmentConfig, FillDistribution, SelectionCriteria};
use crate::error::{Error, Result};
use crate::llm::BackendConfig;
use crate::memory::ExamplePool;
use crate::prompt::{FrameworkKind, Mode};
use crate::retrieval::HashedBowEmbedder;
use crate::tools::FixtureStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub framework: FrameworkKind,
    pub mode: Mode,
    pub max_loops: u32,
    pub k_examples: usize,
    pub history_window: usize,
    pub history_budget_chars: usize,
    pub fallback_response: String,
    pub abort_on_system_error: bool,
}

impl Default for AgentSection {
    fn default() -> Self {
        let l = LoopConfig::default();
        Self {
            framework: l.framework,
            mode: l.mode,
            max_loops: l.max_loops,
            k_examples: l.k_examples,
            history_window: l.history_window,
            history_budget_chars: l.history_budget_chars,
            fallback_response: DEFAULT_FALLBACK.into(),
            abort_on_system_error: l.abort_on_system_error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub host: String,
    pub port: u16,
    pub data_dir: PathBuf,
    /// Shared token required on API routes when set.
    pub token: Option<String>,
    /// Built console assets to serve.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceSection {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            data_dir: PathBuf::from("data"),
            token: None,
            static_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolsSection {
    /// Directory of fixture JSON files; the bundled store when unset.
    pub fixture_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    /// Example pool file; the bundled pool when unset.
    pub examples_path: Option<PathBuf>,
    pub dim: usize,
}

impl Default for RetrievalSection {
    fn default() -> Self {
        Self {
            examples_path: None,
            dim: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// Raw corpus; the bundled fixture corpus when unset.
    pub corpus: Option<PathBuf>,
    /// CoT generation script for the scripted backend; bundled when unset.
    pub cot_script: Option<PathBuf>,
    pub selection: SelectionCriteria,
    pub quota_per_cell: Option<usize>,
    pub scratchpad_fill: FillDistribution,
    pub examples_fill: FillDistribution,
    pub augment: AugmentConfig,
    pub frameworks: Vec<FrameworkKind>,
    pub eval_count: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            corpus: None,
            cot_script: None,
            selection: SelectionCriteria::default(),
            quota_per_cell: None,
            scratchpad_fill: FillDistribution::default(),
            examples_fill: FillDistribution::default(),
            augment: AugmentConfig::default(),
            frameworks: vec![FrameworkKind::Raise],
            eval_count: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Seed for every seeded operation.
    pub seed: u64,
    pub agent: AgentSection,
    pub backend: BackendConfig,
    pub service: ServiceSection,
    pub tools: ToolsSection,
    pub retrieval: RetrievalSection,
    pub dataset: DatasetSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 7,
            agent: AgentSection::default(),
            backend: BackendConfig::default(),
            service: ServiceSection::default(),
            tools: ToolsSection::default(),
            retrieval: RetrievalSection::default(),
            dataset: DatasetSection::default(),
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets `path` (dotted) in `table` to `raw`, parsed as a TOML value when
/// possible and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key `{key}` is malformed")));
    }
    let (last, parents) = parts.split_last().expect("at least one part");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{p}` in `{key}` is not a section")))?;
    }
    cur.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

impl Config {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path` when given; defaults otherwise. Overrides apply either way.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.loop_config().validate()?;
        self.backend
            .sampling
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.retrieval.dim == 0 {
            return Err(Error::Config("retrieval.dim must be positive".into()));
        }
        self.dataset.selection.validate()?;
        self.dataset.scratchpad_fill.validate()?;
        self.dataset.examples_fill.validate()?;
        Ok(())
    }

    pub fn loop_config(&self) -> LoopConfig {
        let a = &self.agent;
        LoopConfig {
            framework: a.framework,
            mode: a.mode,
            max_loops: a.max_loops,
            k_examples: a.k_examples,
            history_window: a.history_window,
            history_budget_chars: a.history_budget_chars,
            fallback_response: a.fallback_response.clone(),
            abort_on_system_error: a.abort_on_system_error,
            sampling: self.backend.sampling.clone(),
        }
    }

    /// Store, example index and embedder from the configured paths.
    pub fn resources(&self) -> Result<Resources> {
        let store = match &self.tools.fixture_dir {
            Some(dir) => FixtureStore::load_dir(dir)?,
            None => FixtureStore::canonical(),
        };
        let pool = match &self.retrieval.examples_path {
            Some(p) => ExamplePool::load(p)?,
            None => ExamplePool::canonical(),
        };
        Resources::new(
            store,
            &pool,
            Arc::new(HashedBowEmbedder::new(self.retrieval.dim)),
        )
    }
}
