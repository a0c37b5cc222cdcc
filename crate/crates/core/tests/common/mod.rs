//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::path::PathBuf;

use chrono::{DateTime, TimeZone, Utc};
use raise::controller::{
    default_roles, start_memory, Controller, LoopConfig, Resources, TurnResult,
};
use raise::eval::{load_scenarios, Scenario};
use raise::prompt::{FrameworkKind, Mode};

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture(rel: &str) -> PathBuf {
    crate_dir().join("fixtures").join(rel)
}

pub fn golden_path(name: &str) -> PathBuf {
    crate_dir().join("tests/golden").join(name)
}

/// Set RAISE_BLESS=1 to rewrite goldens from the current output.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = golden_path(name);
    if std::env::var_os("RAISE_BLESS").is_some() {
        std::fs::write(&path, actual).map_err(|e| e.to_string())?;
        return Ok(());
    }
    let want = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if want == actual {
        Ok(())
    } else {
        let line = want
            .lines()
            .zip(actual.lines())
            .position(|(a, b)| a != b)
            .map_or_else(|| "length".to_string(), |i| format!("line {}", i + 1));
        Err(format!("{name} differs from golden at {line}"))
    }
}

pub fn fixed_clock() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2023, 11, 1, 10, 0, 0).unwrap()
}

pub fn scenarios() -> Vec<Scenario> {
    load_scenarios(&fixture("scenarios")).expect("bundled scenarios load")
}

pub fn scenario(id: &str) -> Scenario {
    scenarios()
        .into_iter()
        .find(|s| s.id == id)
        .unwrap_or_else(|| panic!("no scenario `{id}`"))
}

/// Runs a scenario on a fresh memory with the fixed clock.
pub fn run_scenario(
    resources: &Resources,
    id: &str,
    framework: FrameworkKind,
    mode: Mode,
) -> Vec<TurnResult> {
    let s = scenario(id);
    let config = LoopConfig::new(framework, mode);
    let backend = s.backend_for(framework).expect("scenario script");
    let controller = Controller::new(resources, &backend, &config);
    let mut memory = start_memory(
        &config,
        &resources.registry,
        &default_roles(),
        fixed_clock(),
    )
    .unwrap();
    controller.run_dialogue(&mut memory, &s.queries).unwrap()
}

pub fn golden_name(framework: FrameworkKind, mode: Mode) -> String {
    format!("prompt_{}_{}.txt", framework.slug(), mode.slug())
}

/// The first prompt of the follow-up turn in the two-turn fixture dialogue:
/// history, scratchpad notes and recalled examples are all populated.
pub fn canonical_prompt(resources: &Resources, framework: FrameworkKind, mode: Mode) -> String {
    let turns = run_scenario(resources, "scratchpad_followup", framework, mode);
    turns[1].prompts[0].clone()
}
