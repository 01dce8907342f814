//! Writes a generated graph, its splits and a trained checkpoint to disk,
//! reads them back and confirms nothing changed.
//!
//!     cargo run --example dataset_roundtrip -- [dir]

use std::path::PathBuf;

use csna::checkpoint::Checkpoint;
use csna::csbm::{sample_csbm, CsbmParams};
use csna::dataset::{load_graph, save_graph};
use csna::model::{GraphContext, ModelConfig, ModelKind, Normalization};
use csna::splits::{generate_splits, SplitSet, DEFAULT_RATIOS};
use csna::trainer::{train, TrainHyper};

fn main() -> csna::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("csna-roundtrip"));
    let graph = sample_csbm(&CsbmParams { n: 200, p: 0.05, q: 0.1, ..CsbmParams::default() }, 5)?;
    save_graph(&graph, &dir)?;
    let loaded = load_graph(&dir)?;
    println!(
        "graph: {} nodes, {} edges, features identical: {}",
        loaded.num_nodes(),
        loaded.undirected_edge_count(),
        loaded.features() == graph.features()
    );

    let splits = generate_splits(graph.num_nodes(), DEFAULT_RATIOS, 3, 42)?;
    splits.save(dir.join("splits.json"))?;
    println!("splits identical: {}", SplitSet::load(dir.join("splits.json"))? == splits);

    let config = ModelConfig::new(ModelKind::Csna, graph.feature_dim(), 16, 2);
    let ctx = GraphContext::<f64>::new(&loaded, Normalization::PerSource)?;
    let hyper = TrainHyper { hidden: 16, max_epochs: 30, patience: 10, ..TrainHyper::default() };
    let out = train(&config, &ctx, &splits.splits[0], &hyper)?;
    out.checkpoint().save(dir.join("checkpoint.json"))?;
    let model = Checkpoint::load(dir.join("checkpoint.json"))?.to_model::<f64>()?;
    println!(
        "checkpoint logits identical: {}",
        model.logits(&ctx)? == out.best.logits(&ctx)?
    );
    println!("files in {}", dir.display());
    Ok(())
}
