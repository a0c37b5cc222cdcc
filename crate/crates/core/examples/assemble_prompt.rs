//! Prints the task prompt each framework sends for a first question.
//!
//! `cargo run --example assemble_prompt -- raise finetuned`

use chrono::Utc;
use raise::controller::{default_roles, start_memory, LoopConfig, Resources};
use raise::memory::MemoryOp;
use raise::prompt::{assemble, FrameworkKind, Mode};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let framework: FrameworkKind = args.next().as_deref().unwrap_or("raise").parse()?;
    let mode: Mode = args.next().as_deref().unwrap_or("prompting").parse()?;

    let resources = Resources::canonical();
    let config = LoopConfig::new(framework, mode);
    let mut memory = start_memory(&config, &resources.registry, &default_roles(), Utc::now())?;
    let query = r#"{"houseCode": "1021111", "houseName": "Huarun 24 City Mansion"} What year was the house constructed?"#;
    memory.apply(&MemoryOp::BeginTurn)?;
    memory.apply(&MemoryOp::AppendQuery {
        query: query.into(),
    })?;
    memory.apply(&MemoryOp::UpdateEntity {
        query: query.into(),
    })?;
    if framework.has_examples() {
        let examples = resources.index.recall_top_k(
            resources.embedder.as_ref(),
            "",
            query,
            config.k_examples,
        )?;
        memory.apply(&MemoryOp::SetRecalled { examples })?;
    }
    println!(
        "{}",
        assemble(framework, mode, &memory, &resources.registry)?
    );
    Ok(())
}
