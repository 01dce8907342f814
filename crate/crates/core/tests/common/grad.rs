use std::sync::Arc;

use super::{max_grad_error, random_graph, random_tensor, rng};
use csna::autograd::{Segments, Tape, Var};
use csna::model::{
    calibration_loss, forward, GraphContext, Model, ModelConfig, ModelKind, Normalization, Variant,
};
use csna::tensor::Tensor;

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

/// Projects `out` onto fixed random weights so every entry matters.
fn reduce<'t>(tape: &'t Tape<f64>, out: Var<'t, f64>, seed: u64) -> Var<'t, f64> {
    let (r, c) = out.shape();
    let w = tape.constant(random_tensor(r, c, 1.0, &mut rng(seed)));
    out.mul(w).unwrap().sum().unwrap()
}

fn check<F>(errs: &mut Vec<(&'static str, f64)>, name: &'static str, inputs: &[Tensor<f64>], f: F)
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Var<'t, f64>,
{
    errs.push((name, max_grad_error(inputs, H, f)));
}

fn inputs(shapes: &[(usize, usize)], seed: u64) -> Vec<Tensor<f64>> {
    let mut r = rng(seed);
    shapes.iter().map(|&(a, b)| random_tensor(a, b, 1.0, &mut r)).collect()
}

/// Worst relative gradient error of every tape operation.
pub fn op_errors() -> Vec<(&'static str, f64)> {
    let mut errs = Vec::new();
    dense_ops(&mut errs);
    sparse_ops(&mut errs);
    errs
}

fn dense_ops(errs: &mut Vec<(&'static str, f64)>) {
    let ab = inputs(&[(4, 5), (5, 3)], 1);
    check(errs, "matmul", &ab, |t, v| reduce(t, v[0].matmul(v[1]).unwrap(), 9));
    let xy = inputs(&[(4, 3), (4, 3)], 2);
    check(errs, "add", &xy, |t, v| reduce(t, v[0].add(v[1]).unwrap(), 9));
    check(errs, "sub", &xy, |t, v| reduce(t, v[0].sub(v[1]).unwrap(), 9));
    check(errs, "mul", &xy, |t, v| reduce(t, v[0].mul(v[1]).unwrap(), 9));
    check(errs, "scale", &xy[..1], |t, v| reduce(t, v[0].scale(-1.7).unwrap(), 9));
    check(errs, "affine", &xy[..1], |t, v| reduce(t, v[0].affine(0.3, 2.0).unwrap(), 9));
    check(errs, "relu", &xy[..1], |t, v| reduce(t, v[0].relu().unwrap(), 9));
    check(errs, "sigmoid", &xy[..1], |t, v| reduce(t, v[0].sigmoid().unwrap(), 9));
    check(errs, "softplus", &xy[..1], |t, v| reduce(t, v[0].softplus().unwrap(), 9));
    check(errs, "square", &xy[..1], |t, v| reduce(t, v[0].square().unwrap(), 9));
    check(errs, "sum", &xy[..1], |_, v| v[0].square().unwrap().sum().unwrap());
    check(errs, "mean", &xy[..1], |_, v| v[0].square().unwrap().mean().unwrap());
    check(errs, "row_softmax", &xy[..1], |t, v| reduce(t, v[0].row_softmax().unwrap(), 9));
    check(errs, "slice_cols", &xy[..1], |t, v| reduce(t, v[0].slice_cols(1, 2).unwrap(), 9));
    check(errs, "concat_cols", &xy, |t, v| reduce(t, t.concat_cols(&[v[0], v[1], v[0]]).unwrap(), 9));
    check(errs, "gather_rows", &xy[..1], |t, v| reduce(t, v[0].gather_rows(vec![3, 0, 0, 2, 3]).unwrap(), 9));
    check(errs, "mask", &xy[..1], |t, v| {
        reduce(t, v[0].mask(vec![1.0, 0.0, 2.0, 1.0, 0.5, 0.0, 1.0, 1.0, 3.0, 0.0, 1.0, 1.0]).unwrap(), 9)
    });
    check(errs, "dropout", &xy[..1], |t, v| {
        reduce(t, v[0].dropout(0.4, &mut csna::rng::substream(3, "drop")).unwrap(), 9)
    });
    let rb = inputs(&[(4, 3), (1, 3), (4, 1)], 3);
    check(errs, "add_row", &rb[..2], |t, v| reduce(t, v[0].add_row(v[1]).unwrap(), 9));
    check(errs, "mul_col", &[rb[0].clone(), rb[2].clone()], |t, v| reduce(t, v[0].mul_col(v[1]).unwrap(), 9));
    let logits = inputs(&[(5, 4)], 4);
    check(errs, "cross_entropy", &logits, |_, v| {
        v[0].cross_entropy(vec![0, 2, 3, 4], vec![1, 0, 3, 3]).unwrap()
    });
}

fn sparse_ops(errs: &mut Vec<(&'static str, f64)>) {
    let segs = Segments::new(vec![0, 0, 1, 2, 2, 2, 4], 5).unwrap();
    let pts = inputs(&[(5, 3)], 5);
    let src: Arc<[usize]> = vec![0, 0, 1, 2, 2, 2, 4].into();
    let dst: Arc<[usize]> = vec![1, 3, 2, 0, 4, 3, 0].into();
    check(errs, "row_pair_distance", &pts, |t, v| {
        reduce(t, t.row_pair_distance(v[0], src.clone(), dst.clone()).unwrap(), 9)
    });
    let col = inputs(&[(7, 1)], 6);
    check(errs, "segment_softmax", &col, |t, v| reduce(t, t.segment_softmax(v[0], &segs).unwrap(), 9));
    let wm = inputs(&[(7, 1), (7, 3)], 7);
    check(errs, "segment_weighted_sum", &wm, |t, v| {
        reduce(t, t.segment_weighted_sum(v[0], v[1], &segs).unwrap(), 9)
    });
    let wv = inputs(&[(7, 1), (5, 3)], 8);
    check(errs, "segment_gather_sum", &wv, |t, v| {
        reduce(t, t.segment_gather_sum(v[0], v[1], dst.clone(), &segs).unwrap(), 9)
    });
}

/// Training objective of a two-layer model (cross-entropy plus the averaged
/// calibration term) as a function of every parameter tensor.
pub fn model_objective(kind: ModelKind, variant: Variant, side: Normalization, seed: u64) -> f64 {
    let graph = random_graph(6, 4, 2, 0.4, seed);
    let mut config = ModelConfig::new(kind, 4, 5, 2);
    config.variant = variant;
    config.dropout = 0.0;
    config.normalization = side;
    config.tau = 0.7;
    config.lambda_cal = 0.5;
    let ctx = GraphContext::<f64>::new(&graph, side).unwrap();
    let base = Model::<f64>::new(config, seed).unwrap();
    let mut r = rng(seed + 100);
    let tensors: Vec<Tensor<f64>> = base
        .params
        .named()
        .into_iter()
        .map(|(_, t)| random_tensor(t.rows(), t.cols(), 0.8, &mut r))
        .collect();
    let train_nodes = vec![0, 1, 2, 4];
    let is_train: Vec<bool> = (0..6).map(|i| train_nodes.contains(&i)).collect();
    let labels: Vec<usize> = train_nodes.iter().map(|&i| graph.labels()[i]).collect();
    max_grad_error(&tensors, H, |tape, vars| {
        let mut k = 0;
        let params = base.params.map(|_| {
            k += 1;
            vars[k - 1]
        });
        let mut unused = csna::rng::substream(0, "unused");
        let out = forward(&config, &params, &ctx, ctx.edges(), false, &mut unused).unwrap();
        let mut loss = out.logits.cross_entropy(train_nodes.clone(), labels.clone()).unwrap();
        for layer in out.layers.iter().filter_map(|l| l.csna) {
            let cal = calibration_loss(layer.routing.cost, ctx.edges(), graph.labels(), &is_train).unwrap();
            loss = loss.add(cal.scale(config.lambda_cal / 2.0).unwrap()).unwrap();
        }
        let _ = tape;
        loss
    })
}

