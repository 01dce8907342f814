#![allow(dead_code)]

pub mod cli;
pub mod grad;

use csna::autograd::{Tape, Var};
use csna::graph::Graph;
use csna::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

pub fn rng(seed: u64) -> Pcg64 {
    Pcg64::seed_from_u64(seed)
}

pub fn random_tensor(rows: usize, cols: usize, scale: f64, rng: &mut Pcg64) -> Tensor<f64> {
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

/// Random undirected graph on `n` nodes, every node with at least one edge
/// when `n > 1`, labels cycling through `classes`.
pub fn random_graph(n: usize, dim: usize, classes: usize, density: f64, seed: u64) -> Graph {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || r.random_bool(density) {
                edges.push((i, j));
            }
        }
    }
    let labels = (0..n).map(|i| i % classes).collect();
    let features = random_tensor(n, dim, 1.0, &mut r);
    Graph::from_undirected("random", features, labels, classes, &edges).unwrap()
}

/// Largest relative discrepancy between reverse-mode gradients and central
/// differences of the scalar `f` over every entry of every input.
pub fn max_grad_error<F>(inputs: &[Tensor<f64>], h: f64, f: F) -> f64
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Var<'t, f64>,
{
    let analytic: Vec<Tensor<f64>> = {
        let tape = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let loss = f(&tape, &vars);
        let grads = tape.backward(loss).unwrap();
        vars.iter().map(|&v| grads.get_or_zeros(v)).collect()
    };
    let eval = |xs: &[Tensor<f64>]| -> f64 {
        let tape = Tape::new();
        let vars: Vec<_> = xs.iter().map(|t| tape.param(t.clone())).collect();
        f(&tape, &vars).item().unwrap()
    };
    let mut worst = 0.0f64;
    let mut xs = inputs.to_vec();
    for k in 0..xs.len() {
        for e in 0..xs[k].len() {
            let x0 = xs[k].data()[e];
            xs[k].data_mut()[e] = x0 + h;
            let up = eval(&xs);
            xs[k].data_mut()[e] = x0 - h;
            let down = eval(&xs);
            xs[k].data_mut()[e] = x0;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[k].data()[e];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}

pub fn assert_close(a: &Tensor<f64>, b: &Tensor<f64>, tol: f64) {
    assert_eq!(a.shape(), b.shape());
    let d = a.max_abs_diff(b);
    assert!(d < tol, "max difference {d} exceeds {tol}");
}
