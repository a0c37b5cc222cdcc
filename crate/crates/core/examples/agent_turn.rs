//! Runs a two-turn scripted dialogue and prints each trajectory.
//!
//! `cargo run --example agent_turn -- react`

use chrono::Utc;
use raise::controller::{default_roles, start_memory, Controller, LoopConfig, Resources};
use raise::llm::{render_steps, ScriptedBackend};
use raise::prompt::{FrameworkKind, Mode};

fn main() -> anyhow::Result<()> {
    let framework: FrameworkKind = std::env::args()
        .nth(1)
        .as_deref()
        .unwrap_or("raise")
        .parse()?;
    let script = if framework.has_thoughts() {
        "demo.jsonl"
    } else {
        "demo_act_only.jsonl"
    };
    let backend = ScriptedBackend::load(
        &std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("fixtures/scripts")
            .join(script),
    )?;

    let resources = Resources::canonical();
    let config = LoopConfig::new(framework, Mode::Prompting);
    let controller = Controller::new(&resources, &backend, &config);
    let mut memory = start_memory(&config, &resources.registry, &default_roles(), Utc::now())?;
    let queries = [
        r#"{"houseCode": "1021111", "houseName": "Huarun 24 City Mansion, good lighting and view, quiet"} What year was the house constructed?"#,
        "How large is it?",
    ];
    for q in queries {
        let turn = controller.handle_query(&mut memory, q)?;
        println!("User: {q}");
        println!("{}", render_steps(&turn.trajectory.steps));
        println!(
            "[{:?}; {} model calls; {} tools]\n",
            turn.termination, turn.model_calls, turn.tool_executions
        );
    }
    println!(
        "Scratchpad after the dialogue:\n{}",
        memory.scratchpad.render()
    );
    Ok(())
}
