//! Effect of the calibration term on edge routing: trains lite CSNA on a
//! heterophilous CSBM sample with and without calibration and reports the
//! concordance AUC on edges that no training pair touches, plus gate means.
//!
//!     cargo run --release --example edge_diagnostics -- [seeds]

use csna::csbm::{sample_csbm, CsbmParams};
use csna::diagnostics::{concordance_auc, gate_summary};
use csna::model::{GraphContext, ModelConfig, ModelKind};
use csna::splits::{generate_splits, DEFAULT_RATIOS};
use csna::trainer::{train, TrainHyper};

fn main() -> csna::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let params = CsbmParams {
        n: 600,
        p: 0.05,
        q: 0.15,
        mu: 1.5,
        ..CsbmParams::default()
    };
    println!("{:>4} {:>8} {:>8} {:>8} {:>22}", "seed", "lambda", "test", "auc", "gates (con,dis,self)");
    for seed in 0..seeds {
        let graph = sample_csbm(&params, seed)?;
        let split = &generate_splits(graph.num_nodes(), DEFAULT_RATIOS, 1, seed)?.splits[0];
        let mut train_node = vec![false; graph.num_nodes()];
        split.train.iter().for_each(|&i| train_node[i] = true);
        for lambda in [0.1, 0.0] {
            let mut config = ModelConfig::new(ModelKind::Csna, params.dim, 64, 2);
            config.lambda_cal = lambda;
            let ctx = GraphContext::<f64>::new(&graph, config.normalization)?;
            let hyper = TrainHyper {
                seed,
                ..TrainHyper::default()
            };
            let out = train(&config, &ctx, split, &hyper)?;
            let routing = &out.best.routing(&ctx)?[0];
            let (mut scores, mut same) = (Vec::new(), Vec::new());
            for (&(i, j), &s) in routing.edges.iter().zip(&routing.concordance) {
                if i != j && !train_node[i] && !train_node[j] {
                    scores.push(s);
                    same.push(graph.labels()[i] == graph.labels()[j]);
                }
            }
            let g = gate_summary(&routing.gates);
            println!(
                "{seed:>4} {lambda:>8} {:>8.3} {:>8.3} {:>22}",
                out.report.test_accuracy.unwrap_or(f64::NAN),
                concordance_auc(&scores, &same).unwrap_or(f64::NAN),
                format!("({:.2},{:.2},{:.2})", g[0], g[1], g[2])
            );
        }
    }
    Ok(())
}
