//! One CSNA layer on a five-node graph: per-edge costs, concordance scores
//! and channel weights, and how temperature flattens them.
//!
//!     cargo run --example csna_layer_routing

use csna::autograd::Tape;
use csna::graph::Graph;
use csna::model::{csna_layer, CsnaLayerParams, GraphContext, Normalization};
use csna::tensor::Tensor;

fn main() -> csna::Result<()> {
    // Two tight groups joined by the edge 1-2.
    let features = Tensor::from_rows(&[
        vec![1.0, 0.0],
        vec![0.9, 0.1],
        vec![-1.0, 0.1],
        vec![-0.9, -0.1],
        vec![-1.1, 0.0],
    ])?;
    let graph = Graph::from_undirected("toy", features, vec![0, 0, 1, 1, 1], 2, &[(0, 1), (1, 2), (2, 3), (2, 4), (3, 4)])?;
    let ctx = GraphContext::<f64>::new(&graph, Normalization::PerSource)?;
    let eye = Tensor::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 0.0 });

    for tau in [0.25, 1.0, 100.0] {
        let tape = Tape::new();
        let params = CsnaLayerParams {
            w_g: tape.param(eye.clone()),
            w_con: tape.param(eye.clone()),
            w_dis: tape.param(eye.clone()),
            w_self: tape.param(eye.clone()),
            w_gate: tape.param(Tensor::zeros(6, 3)),
            b_gate: tape.param(Tensor::from_rows(&[vec![0.0, 0.0, 1.0]])?),
            a: None,
        };
        let out = csna_layer(tape.constant(ctx.features().clone()), ctx.edges(), &params, tau)?;
        let (cost, s) = (out.routing.cost.value(), out.routing.concordance.value());
        let (con, dis) = (out.routing.con_weights.value(), out.routing.dis_weights.value());
        println!("tau = {tau}");
        println!("  {:>7} {:>7} {:>7} {:>7} {:>7}", "edge", "cost", "s", "con", "dis");
        for (e, (i, j)) in ctx.edges().pairs().enumerate() {
            if i == 1 {
                println!(
                    "  {:>7} {:>7.3} {:>7.3} {:>7.3} {:>7.3}",
                    format!("{i}<-{j}"),
                    cost.get(e, 0),
                    s.get(e, 0),
                    con.get(e, 0),
                    dis.get(e, 0)
                );
            }
        }
    }
    Ok(())
}
