//! Grid search on the first splits, then a ten-split benchmark with the
//! selected hyperparameters.
//!
//!     cargo run --release --example tune_and_benchmark -- [mlp|gcn|csna]

use csna::csbm::{sample_csbm, CsbmParams};
use csna::model::{GraphContext, ModelConfig, ModelKind};
use csna::splits::{generate_splits, DEFAULT_RATIOS, DEFAULT_SPLIT_COUNT, DEFAULT_SPLIT_SEED};
use csna::trainer::{run_benchmark, tune, TrainHyper, TuneGrid, TUNE_EPOCHS_LARGE, TUNE_SPLITS_LARGE};

fn main() -> csna::Result<()> {
    let kind = match std::env::args().nth(1).as_deref() {
        Some("mlp") => ModelKind::Mlp,
        Some("gcn") => ModelKind::Gcn,
        _ => ModelKind::Csna,
    };
    let params = CsbmParams { n: 500, p: 0.02, q: 0.06, mu: 1.5, ..CsbmParams::default() };
    let graph = sample_csbm(&params, 3)?;
    let splits = generate_splits(graph.num_nodes(), DEFAULT_RATIOS, DEFAULT_SPLIT_COUNT, DEFAULT_SPLIT_SEED)?;
    let config = ModelConfig::new(kind, params.dim, 64, 2);
    let ctx = GraphContext::<f64>::new(&graph, config.normalization)?;
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());

    let base = TrainHyper { max_epochs: TUNE_EPOCHS_LARGE, ..TrainHyper::default() };
    let tuned = tune(&config, &ctx, &splits.splits[..TUNE_SPLITS_LARGE], &TuneGrid::large(), &base, jobs)?;
    println!("{:>7} {:>6} {:>5} {:>8}", "lr", "hidden", "tau", "val");
    for cell in &tuned.cells {
        println!("{:>7} {:>6} {:>5} {:>8.3}", cell.hyper.lr, cell.hyper.hidden, cell.hyper.tau, cell.mean_val_acc);
    }
    let hyper = TrainHyper { max_epochs: TrainHyper::default().max_epochs, ..tuned.best };
    println!("selected lr {} hidden {} tau {}", hyper.lr, hyper.hidden, hyper.tau);

    let bench = run_benchmark(&config, &ctx, &splits.splits, &hyper, jobs)?;
    println!(
        "{} test accuracy {:.1} ± {:.1} over {} splits ({:.1}s)",
        kind.name(),
        100.0 * bench.mean,
        100.0 * bench.std,
        bench.test_accuracies.len(),
        bench.wall_clock_secs
    );
    Ok(())
}
