//! Trains MLP, GCN and both CSNA variants on a heterophilous contextual SBM
//! sample and prints test accuracy with the final gate averages.
//!
//!     cargo run --release --example train_csbm -- [p] [q]

use csna::csbm::{sample_csbm, CsbmParams};
use csna::diagnostics::gate_summary;
use csna::graph::edge_homophily;
use csna::model::{GraphContext, ModelConfig, ModelKind, Variant};
use csna::splits::{generate_splits, DEFAULT_RATIOS};
use csna::trainer::{train, TrainHyper};

fn main() -> csna::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<f64>().expect("numeric argument"));
    let params = CsbmParams {
        n: 800,
        p: args.next().unwrap_or(0.01),
        q: args.next().unwrap_or(0.04),
        mu: 1.5,
        ..CsbmParams::default()
    };
    let graph = sample_csbm(&params, 11)?;
    let split = &generate_splits(graph.num_nodes(), DEFAULT_RATIOS, 1, 11)?.splits[0];
    println!("n = {}, edge homophily {:.3}", graph.num_nodes(), edge_homophily(&graph));

    let hyper = TrainHyper { seed: 1, ..TrainHyper::default() };
    for (kind, variant) in [
        (ModelKind::Mlp, Variant::Lite),
        (ModelKind::Gcn, Variant::Lite),
        (ModelKind::Csna, Variant::Lite),
        (ModelKind::Csna, Variant::Extended),
    ] {
        let mut config = ModelConfig::new(kind, params.dim, hyper.hidden, 2);
        config.variant = variant;
        let ctx = GraphContext::<f64>::new(&graph, config.normalization)?;
        let out = train(&config, &ctx, split, &hyper)?;
        let r = &out.report;
        let gates = match out.best.routing(&ctx)?.last() {
            Some(layer) => {
                let g = gate_summary(&layer.gates);
                format!("gates con {:.2} dis {:.2} self {:.2}", g[0], g[1], g[2])
            }
            None => String::new(),
        };
        let name = if kind == ModelKind::Csna { format!("csna-{variant:?}") } else { kind.name().to_string() };
        println!(
            "{name:<14} test {:.3}  best val {:.3} @ epoch {:<4} {gates}",
            r.test_accuracy.unwrap_or(f64::NAN),
            r.best_val_acc,
            r.best_val_epoch
        );
    }
    Ok(())
}
