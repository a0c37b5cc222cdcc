//! Recalls the closest stored examples for a query.
//!
//! `cargo run --example retrieve_examples -- "is there a metro nearby"`

use raise::controller::Resources;

fn main() -> anyhow::Result<()> {
    let query = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "How big is the flat?".into());
    let resources = Resources::canonical();
    let hits = resources
        .index
        .recall_top_k(resources.embedder.as_ref(), "", &query, 3)?;
    println!("query: {query}");
    for h in hits {
        println!("{:.3}  {}  {}", h.score, h.example_id, h.query);
    }
    Ok(())
}
