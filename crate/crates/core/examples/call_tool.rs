//! Parses an action line, validates it and runs it against the bundled
//! fixtures.
//!
//! `cargo run --example call_tool -- "Action: Community Information [5011001]"`

use raise::controller::Resources;
use raise::llm::parse_agent_output;
use raise::prompt::FrameworkKind;
use raise::tools::execute;

fn main() -> anyhow::Result<()> {
    let line = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "Action: House Information [house_id: 1021111]".into());
    let resources = Resources::canonical();
    let steps = parse_agent_output(&line, FrameworkKind::ReAct)?;
    let call = steps
        .first()
        .and_then(|s| s.tool_call())
        .ok_or_else(|| anyhow::anyhow!("`{line}` is not a tool call"))?;
    let call = resources.registry.validate_call(call)?;
    let obs = execute(&resources.store, &call, None);
    println!("{:?}: {}", obs.status, obs.formatted_text);
    Ok(())
}
