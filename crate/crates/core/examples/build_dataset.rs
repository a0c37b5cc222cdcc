//! Runs the whole training-data pipeline on the bundled corpus.
//!
//! `cargo run --example build_dataset -- /tmp/dataset`

use raise::config::Config;

fn main() -> anyhow::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "out/example-dataset".into());
    let config = Config::default();
    let manifest = raise::cli::run_pipeline(&config, out.as_ref(), config.dataset.eval_count)?;
    println!(
        "{} samples: {} train, {} eval (seed {})",
        manifest.total, manifest.train_count, manifest.eval_count, manifest.seed
    );
    println!("written to {out}; doubtful scenes wait in {out}/review");
    Ok(())
}
