//! Runs the bundled scenarios under every framework and prints the
//! efficiency comparison.

use std::path::Path;

use raise::controller::{LoopConfig, Resources};
use raise::eval::{aggregate_report, load_scenarios, render_comparison, run_scenarios, Axis};
use raise::prompt::{FrameworkKind, Mode};

fn main() -> anyhow::Result<()> {
    let resources = Resources::canonical();
    let scenarios =
        load_scenarios(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/scenarios"))?;
    let mut reports = Vec::new();
    for framework in FrameworkKind::ALL {
        let config = LoopConfig::new(framework, Mode::Prompting);
        let run = run_scenarios(&resources, &config, &scenarios, None)?;
        reports.push(aggregate_report(&run.records, &[])?);
    }
    print!("{}", render_comparison(&reports, Axis::Framework)?);
    Ok(())
}
