//! The `raise` command line.
//!
//! Exit codes: 0 on success, 1 for bad input (flags, config, data), 2 for
//! runtime failures (I/O, backend).

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::controller::{default_roles, start_memory, Controller, Resources, TurnResult};
use crate::dataset::{
    assemble_samples, augment_hallucination_scenes, extract_scenes, sample_scenes,
    select_conversations, set_fill_levels, split_and_export, CompleteScene, CotGenerator,
    FillTarget, IntentClassifier, Manifest, OriginScene, RawConversation, ReviewQueue,
    ReviewStatus, SampleContext, SamplingStrategy, TrainingSample,
};
use crate::error::Error;
use crate::eval::{
    aggregate_report, load_annotations, load_scenarios, render_comparison, render_summary,
    run_scenarios, write_annotation_template, write_run, Axis, EvalRecord, QualityAnnotation,
    RUBRIC,
};
use crate::llm::{BackendKind, LanguageModel, ScriptEntry, ScriptedBackend};
use crate::prompt::{FrameworkKind, Mode};
use crate::service::{http, SessionService};

const BUNDLED_CORPUS: &str = include_str!("../fixtures/corpus.jsonl");
const BUNDLED_COT_SCRIPT: &str = include_str!("../fixtures/cot_script.jsonl");

#[derive(Debug, Parser)]
#[command(
    name = "raise",
    version,
    about = "Conversational agent with working memory: chat, serve, build datasets, evaluate"
)]
pub struct Cli {
    /// TOML config file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Config override, e.g. `--set agent.max_loops=3`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Seed for every seeded step; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Talk to the agent on the terminal.
    Chat(ChatArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
    /// Training-data pipeline stages.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Scenario runs and reports.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Debug, Args)]
pub struct AgentArgs {
    #[arg(long, value_parser = parse_framework)]
    pub framework: Option<FrameworkKind>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Script for the scripted backend.
    #[arg(long, value_name = "PATH")]
    pub script: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    #[command(flatten)]
    pub agent: AgentArgs,
    /// Read queries from a file instead of stdin.
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub agent: AgentArgs,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    /// Built console assets to serve.
    #[arg(long, value_name = "DIR")]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Filter and anonymize a raw corpus.
    Select {
        /// Raw corpus; the bundled fixture corpus when omitted.
        #[arg(long, value_name = "PATH")]
        corpus: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Cut conversations into scenes, label intents, sample.
    Extract {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Scenes per (turn bucket, intent) cell.
        #[arg(long)]
        quota: Option<usize>,
    },
    /// Generate reasoning chains; doubtful ones go to the review queue.
    Cot {
        #[arg(long, value_name = "PATH")]
        scenes: PathBuf,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        #[arg(long, value_name = "DIR")]
        queue: PathBuf,
        #[command(flatten)]
        agent: AgentArgs,
    },
    /// Inspect or resolve review items.
    Review {
        #[arg(long, value_name = "DIR")]
        queue: PathBuf,
        #[command(subcommand)]
        action: ReviewAction,
    },
    /// Role-boundary and knowledge-gap scenes.
    Augment {
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Assign fill levels and build training samples for one framework.
    Assemble {
        /// Complete-scene files.
        #[arg(long, value_name = "PATH", required = true, num_args = 1..)]
        scenes: Vec<PathBuf>,
        #[arg(long, value_parser = parse_framework)]
        framework: Option<FrameworkKind>,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Split samples into train/eval files. Without --samples, runs every
    /// stage on the configured corpus first.
    Export {
        #[arg(long, value_name = "PATH", num_args = 1..)]
        samples: Vec<PathBuf>,
        #[arg(long)]
        eval_count: Option<usize>,
        #[arg(long, value_name = "DIR", default_value = "out/dataset")]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum ReviewAction {
    List {
        #[arg(long, value_enum, default_value = "pending")]
        status: StatusArg,
    },
    Approve {
        name: String,
    },
    Reject {
        name: String,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum StatusArg {
    Pending,
    Approved,
    Rejected,
}

impl From<StatusArg> for ReviewStatus {
    fn from(s: StatusArg) -> Self {
        match s {
            StatusArg::Pending => ReviewStatus::Pending,
            StatusArg::Approved => ReviewStatus::Approved,
            StatusArg::Rejected => ReviewStatus::Rejected,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Run scenarios and write records, traces and a report.
    Run {
        #[command(flatten)]
        agent: AgentArgs,
        /// Scenario file or directory of scenario files.
        #[arg(long, value_name = "PATH")]
        scenarios: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, value_name = "PATH")]
        annotations: Option<PathBuf>,
    },
    /// Aggregate records with annotations into a comparison table.
    Report {
        #[arg(long, value_name = "PATH", required = true, num_args = 1..)]
        records: Vec<PathBuf>,
        #[arg(long, value_name = "PATH", num_args = 1..)]
        annotations: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "framework")]
        axis: Axis,
        /// Also write the table and a JSON copy next to this path.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Blank annotation sheet and rubric for a records file.
    Template {
        #[arg(long, value_name = "PATH")]
        records: PathBuf,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
}

fn parse_framework(s: &str) -> Result<FrameworkKind, String> {
    s.parse()
        .map_err(|e: crate::prompt::PromptError| e.to_string())
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
        .map_err(|e: crate::prompt::PromptError| e.to_string())
}

/// Parses `argv` and runs the command. Returns the exit code.
pub fn run<I, T>(
    argv: I,
    stdin: &mut dyn BufRead,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    0
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    1
                }
            };
        }
    };
    match execute(cli, stdin, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> i32 {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<Error>() {
            return if err.is_validation() { 1 } else { 2 };
        }
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
    }
    2
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn load_config(cli: &Cli) -> anyhow::Result<Config> {
    let mut config = Config::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

/// Flags win over the config file.
fn apply_agent_args(config: &mut Config, a: &AgentArgs) {
    if let Some(f) = a.framework {
        config.agent.framework = f;
    }
    if let Some(m) = a.mode {
        config.agent.mode = m;
    }
    if let Some(b) = a.backend {
        config.backend.kind = b;
    }
    if let Some(s) = &a.script {
        config.backend.script = Some(s.clone());
    }
}

fn execute(cli: Cli, stdin: &mut dyn BufRead, stdout: &mut dyn Write) -> anyhow::Result<()> {
    let mut config = load_config(&cli)?;
    match cli.command {
        Command::Chat(args) => {
            apply_agent_args(&mut config, &args.agent);
            chat(&config, args.input.as_deref(), stdin, stdout)
        }
        Command::Serve(args) => {
            apply_agent_args(&mut config, &args.agent);
            if let Some(h) = args.host {
                config.service.host = h;
            }
            if let Some(p) = args.port {
                config.service.port = p;
            }
            if let Some(d) = args.data_dir {
                config.service.data_dir = d;
            }
            if let Some(d) = args.static_dir {
                config.service.static_dir = Some(d);
            }
            serve(&config)
        }
        Command::Dataset(cmd) => dataset(&mut config, cmd, stdout),
        Command::Eval(cmd) => eval(&mut config, cmd, stdout),
    }
}

fn write_trace(out: &mut dyn Write, turn: &TurnResult) -> std::io::Result<()> {
    for step in &turn.trajectory.steps {
        if !step.is_finish() {
            writeln!(
                out,
                "{}",
                crate::llm::render_steps(std::slice::from_ref(step))
            )?;
        }
    }
    writeln!(out, "Agent: {}", turn.response)?;
    writeln!(
        out,
        "[{}; model calls {}; tools {}]",
        serde_json::to_value(turn.termination)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default(),
        turn.model_calls,
        turn.tool_executions
    )
}

fn chat(
    config: &Config,
    input: Option<&Path>,
    stdin: &mut dyn BufRead,
    out: &mut dyn Write,
) -> anyhow::Result<()> {
    let resources = config.resources()?;
    let backend = config.backend.build().map_err(Error::from)?;
    let loop_config = config.loop_config();
    let controller = Controller::new(&resources, backend.as_ref(), &loop_config);
    let mut memory = start_memory(
        &loop_config,
        &resources.registry,
        &default_roles(),
        chrono::Utc::now(),
    )?;
    let file_text;
    let mut file_lines;
    let lines: &mut dyn Iterator<Item = std::io::Result<String>> = match input {
        Some(p) => {
            file_text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            file_lines = file_text.lines().map(|l| Ok(l.to_string()));
            &mut file_lines
        }
        None => &mut stdin.lines(),
    };
    writeln!(
        out,
        "framework: {} ({})",
        loop_config.framework.display_name(),
        loop_config.mode
    )?;
    for line in lines {
        let line = line?;
        let query = line.trim();
        if query.is_empty() {
            continue;
        }
        if matches!(query, "/quit" | "/exit") {
            break;
        }
        writeln!(out, "User: {query}")?;
        let turn = controller.handle_query(&mut memory, query)?;
        write_trace(out, &turn)?;
    }
    Ok(())
}

fn serve(config: &Config) -> anyhow::Result<()> {
    let resources = Arc::new(config.resources()?);
    let backend = config.backend.build().map_err(Error::from)?;
    let service = Arc::new(SessionService::open(
        resources,
        backend,
        config.loop_config(),
        &config.service.data_dir,
    )?);
    let addr: SocketAddr = format!("{}:{}", config.service.host, config.service.port)
        .parse()
        .map_err(|e| Error::Config(format!("bad service address: {e}")))?;
    let runtime = tokio::runtime::Runtime::new().context("starting the async runtime")?;
    runtime
        .block_on(http::serve(
            service,
            addr,
            config.service.token.clone(),
            config.service.static_dir.clone(),
        ))
        .with_context(|| format!("serving on {addr}"))?;
    Ok(())
}

fn write_jsonl<T: serde::Serialize>(path: &Path, records: &[T]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    crate::jsonl::write(path, records)?;
    Ok(())
}

fn read_many<T: serde::de::DeserializeOwned>(paths: &[PathBuf]) -> anyhow::Result<Vec<T>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(crate::jsonl::read::<T>(p)?);
    }
    Ok(out)
}

fn bundled_corpus() -> crate::Result<Vec<RawConversation>> {
    crate::jsonl::parse_lines(BUNDLED_CORPUS, Path::new("bundled corpus"))
}

/// Backend for CoT generation: the configured one, or the bundled script
/// when the config names no script.
fn cot_backend(config: &Config) -> anyhow::Result<Arc<dyn LanguageModel>> {
    if config.backend.kind == BackendKind::Scripted && config.backend.script.is_none() {
        let entries: Vec<ScriptEntry> = match &config.dataset.cot_script {
            Some(p) => crate::jsonl::read(p)?,
            None => crate::jsonl::parse_lines(BUNDLED_COT_SCRIPT, Path::new("bundled cot script"))?,
        };
        return Ok(Arc::new(
            ScriptedBackend::new(entries).map_err(Error::from)?,
        ));
    }
    Ok(config.backend.build().map_err(Error::from)?)
}

fn extract_stage(config: &Config, selected: &[RawConversation]) -> Vec<OriginScene> {
    let mut scenes: Vec<OriginScene> = selected.iter().flat_map(extract_scenes).collect();
    IntentClassifier::default().label(&mut scenes);
    sample_scenes(
        &scenes,
        &SamplingStrategy {
            quota_per_cell: config.dataset.quota_per_cell,
            seed: config.seed,
        },
    )
}

fn assemble_stage(
    config: &Config,
    resources: &Resources,
    scenes: &[CompleteScene],
    framework: FrameworkKind,
) -> anyhow::Result<Vec<TrainingSample>> {
    let d = &config.dataset;
    let scenes = set_fill_levels(
        scenes,
        &d.scratchpad_fill,
        FillTarget::Scratchpad,
        config.seed,
    )?;
    let scenes = set_fill_levels(
        &scenes,
        &d.examples_fill,
        FillTarget::Examples,
        config.seed.wrapping_add(1),
    )?;
    Ok(assemble_samples(
        &scenes,
        framework,
        &SampleContext::new(resources),
    )?)
}

/// Every stage from the configured corpus to `out_dir`. Scenes the review
/// queue holds back are left out; approved ones from earlier runs are used.
pub fn run_pipeline(
    config: &Config,
    out_dir: &Path,
    eval_count: usize,
) -> anyhow::Result<Manifest> {
    let resources = config.resources()?;
    let corpus = match &config.dataset.corpus {
        Some(p) => crate::dataset::load_corpus(p)?,
        None => bundled_corpus()?,
    };
    let selected = select_conversations(&corpus, &config.dataset.selection)?;
    let scenes = extract_stage(config, &selected);
    let backend = cot_backend(config)?;
    let queue = ReviewQueue::open(out_dir.join("review"))?;
    let mut samples = Vec::new();
    for &framework in &config.dataset.frameworks {
        let generator = CotGenerator::new(backend.as_ref(), &resources, framework);
        let mut complete = Vec::new();
        let mut held = 0;
        for s in &scenes {
            match generator.complete_cot(s) {
                Ok(c) => complete.push(c),
                Err(item) => {
                    held += 1;
                    if !queue_has(&queue, &item.scene.scene_id, framework)? {
                        queue.push(&item)?;
                    }
                }
            }
        }
        for item in queue
            .approved_items()?
            .into_iter()
            .filter(|i| i.framework == framework)
        {
            complete.push(generator.complete_approved(&item)?);
        }
        complete.extend(augment_for(config, &resources));
        tracing::info!(%framework, scenes = complete.len(), held, "scenes ready");
        samples.extend(assemble_stage(config, &resources, &complete, framework)?);
    }
    Ok(split_and_export(
        &samples,
        eval_count,
        config.seed,
        out_dir,
    )?)
}

fn augment_for(config: &Config, resources: &Resources) -> Vec<CompleteScene> {
    let mut augment = config.dataset.augment.clone();
    augment.seed = config.seed;
    augment_hallucination_scenes(&augment, &resources.store)
}

fn queue_has(
    queue: &ReviewQueue,
    scene_id: &str,
    framework: FrameworkKind,
) -> anyhow::Result<bool> {
    for status in [
        ReviewStatus::Pending,
        ReviewStatus::Approved,
        ReviewStatus::Rejected,
    ] {
        for name in queue.list(status)? {
            let item = queue.load(status, &name)?;
            if item.scene.scene_id == scene_id && item.framework == framework {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

fn dataset(config: &mut Config, cmd: DatasetCommand, out: &mut dyn Write) -> anyhow::Result<()> {
    match cmd {
        DatasetCommand::Select { corpus, out: path } => {
            let corpus = match corpus.or_else(|| config.dataset.corpus.clone()) {
                Some(p) => crate::dataset::load_corpus(&p)?,
                None => bundled_corpus()?,
            };
            let selected = select_conversations(&corpus, &config.dataset.selection)?;
            write_jsonl(&path, &selected)?;
            writeln!(
                out,
                "selected {} of {} conversations",
                selected.len(),
                corpus.len()
            )?;
        }
        DatasetCommand::Extract {
            input,
            out: path,
            quota,
        } => {
            if quota.is_some() {
                config.dataset.quota_per_cell = quota;
            }
            let selected: Vec<RawConversation> = crate::jsonl::read(&input)?;
            let scenes = extract_stage(config, &selected);
            write_jsonl(&path, &scenes)?;
            writeln!(out, "{} scenes", scenes.len())?;
        }
        DatasetCommand::Cot {
            scenes,
            out: path,
            queue,
            agent,
        } => {
            apply_agent_args(config, &agent);
            let resources = config.resources()?;
            let backend = cot_backend(config)?;
            let scenes: Vec<OriginScene> = crate::jsonl::read(&scenes)?;
            let queue = ReviewQueue::open(queue)?;
            let generator = CotGenerator::new(backend.as_ref(), &resources, config.agent.framework);
            let (mut done, queued) = generator.complete_batch(&scenes, &queue)?;
            let approved = queue.approved_items()?;
            for item in approved
                .iter()
                .filter(|i| i.framework == config.agent.framework)
            {
                done.push(generator.complete_approved(item)?);
            }
            write_jsonl(&path, &done)?;
            writeln!(
                out,
                "{} complete, {} queued for review",
                done.len(),
                queued.len()
            )?;
        }
        DatasetCommand::Review { queue, action } => {
            let queue = ReviewQueue::open(queue)?;
            match action {
                ReviewAction::List { status } => {
                    let status = ReviewStatus::from(status);
                    for name in queue.list(status)? {
                        let item = queue.load(status, &name)?;
                        writeln!(
                            out,
                            "{name}\t{}\t{}",
                            item.scene.scene_id,
                            item.reasons.join("; ")
                        )?;
                    }
                }
                ReviewAction::Approve { name } => {
                    let p = queue.approve(&name)?;
                    writeln!(out, "approved {}", p.display())?;
                }
                ReviewAction::Reject { name } => {
                    let p = queue.reject(&name)?;
                    writeln!(out, "rejected {}", p.display())?;
                }
            }
        }
        DatasetCommand::Augment { out: path } => {
            let resources = config.resources()?;
            let scenes = augment_for(config, &resources);
            write_jsonl(&path, &scenes)?;
            writeln!(out, "{} augmentation scenes", scenes.len())?;
        }
        DatasetCommand::Assemble {
            scenes,
            framework,
            out: path,
        } => {
            let resources = config.resources()?;
            let scenes: Vec<CompleteScene> = read_many(&scenes)?;
            let framework = framework.unwrap_or(config.agent.framework);
            let samples = assemble_stage(config, &resources, &scenes, framework)?;
            write_jsonl(&path, &samples)?;
            writeln!(out, "{} samples for {framework}", samples.len())?;
        }
        DatasetCommand::Export {
            samples,
            eval_count,
            out: dir,
        } => {
            let eval_count = eval_count.unwrap_or(config.dataset.eval_count);
            let manifest = if samples.is_empty() {
                run_pipeline(config, &dir, eval_count)?
            } else {
                let samples: Vec<TrainingSample> = read_many(&samples)?;
                split_and_export(&samples, eval_count, config.seed, &dir)?
            };
            writeln!(
                out,
                "train {} / eval {} written to {}",
                manifest.train_count,
                manifest.eval_count,
                dir.display()
            )?;
        }
    }
    Ok(())
}

fn eval(config: &mut Config, cmd: EvalCommand, out: &mut dyn Write) -> anyhow::Result<()> {
    match cmd {
        EvalCommand::Run {
            agent,
            scenarios,
            out: dir,
            annotations,
        } => {
            apply_agent_args(config, &agent);
            let resources = config.resources()?;
            let scenarios = load_scenarios(&scenarios)?;
            // Scripted runs use each scenario's own script unless one is given.
            let backend = match (config.backend.kind, &config.backend.script) {
                (BackendKind::Scripted, None) => None,
                _ => Some(config.backend.build().map_err(Error::from)?),
            };
            let run = run_scenarios(
                &resources,
                &config.loop_config(),
                &scenarios,
                backend.as_ref(),
            )?;
            let annotations = match annotations {
                Some(p) => load_annotations(&p)?,
                None => Vec::new(),
            };
            let report = aggregate_report(&run.records, &annotations)?;
            write_run(&dir, &run, &report)?;
            write!(out, "{}", render_summary(&report))?;
        }
        EvalCommand::Report {
            records,
            annotations,
            axis,
            out: path,
        } => {
            let records: Vec<EvalRecord> = read_many(&records)?;
            let mut anns: Vec<QualityAnnotation> = Vec::new();
            for p in &annotations {
                anns.extend(load_annotations(p)?);
            }
            let mut groups: BTreeMap<(FrameworkKind, Mode, String), Vec<EvalRecord>> =
                BTreeMap::new();
            for r in records {
                groups
                    .entry((r.framework, r.mode, r.method.clone()))
                    .or_default()
                    .push(r);
            }
            let reports = groups
                .values()
                .map(|g| aggregate_report(g, &anns))
                .collect::<crate::Result<Vec<_>>>()?;
            let text = if reports.len() >= 2 {
                render_comparison(&reports, axis)?
            } else {
                render_summary(&reports[0])
            };
            write!(out, "{text}")?;
            if let Some(p) = path {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                }
                std::fs::write(&p, &text).map_err(|e| Error::io(&p, e))?;
                let json = p.with_extension("json");
                let body = serde_json::to_string_pretty(&reports)? + "\n";
                std::fs::write(&json, body).map_err(|e| Error::io(&json, e))?;
            }
        }
        EvalCommand::Template { records, out: path } => {
            let records: Vec<EvalRecord> = crate::jsonl::read(&records)?;
            if records.is_empty() {
                return Err(usage("records file is empty"));
            }
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            write_annotation_template(&records, &path)?;
            let rubric = path.with_file_name("rubric.md");
            std::fs::write(&rubric, RUBRIC).map_err(|e| Error::io(&rubric, e))?;
            writeln!(
                out,
                "template for {} records at {}",
                records.len(),
                path.display()
            )?;
        }
    }
    Ok(())
}

/// Entry point used by the binary.
pub fn main_exit_code() -> i32 {
    let stdin = std::io::stdin();
    let mut stdin = stdin.lock();
    let mut stdout = std::io::stdout();
    let mut stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdin, &mut stdout, &mut stderr)
}
