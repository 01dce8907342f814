//! Reverse-mode gradients of a tiny two-layer network checked against
//! central finite differences.
//!
//!     cargo run --example autograd_gradcheck

use csna::autograd::Tape;
use csna::tensor::Tensor;

fn loss(x: &Tensor<f64>, w1: &Tensor<f64>, w2: &Tensor<f64>) -> f64 {
    let tape = Tape::new();
    let out = forward(&tape, x, w1.clone(), w2.clone()).0;
    out.item().unwrap()
}

fn forward<'t>(
    tape: &'t Tape<f64>,
    x: &Tensor<f64>,
    w1: Tensor<f64>,
    w2: Tensor<f64>,
) -> (csna::autograd::Var<'t, f64>, [csna::autograd::Var<'t, f64>; 2]) {
    let (w1, w2) = (tape.param(w1), tape.param(w2));
    let h = tape.constant(x.clone()).matmul(w1).unwrap().softplus().unwrap();
    let logits = h.matmul(w2).unwrap();
    let l = logits.cross_entropy(vec![0, 1, 2], vec![1, 0, 1]).unwrap();
    (l, [w1, w2])
}

fn main() {
    let x = Tensor::from_fn(3, 4, |i, j| ((i * 4 + j) as f64 * 0.37).sin());
    let w1 = Tensor::from_fn(4, 5, |i, j| ((i * 5 + j) as f64 * 0.71).cos() * 0.5);
    let w2 = Tensor::from_fn(5, 2, |i, j| ((i * 2 + j) as f64 * 1.3).sin() * 0.5);

    let tape = Tape::new();
    let (l, [v1, _]) = forward(&tape, &x, w1.clone(), w2.clone());
    let grads = tape.backward(l).unwrap();
    let analytic = grads.get_or_zeros(v1);
    println!("loss = {:.6}", l.item().unwrap());

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    println!("{:>6} {:>14} {:>14}", "entry", "analytic", "numeric");
    for i in 0..w1.rows() {
        for j in 0..w1.cols() {
            let bump = |d: f64| {
                let mut w = w1.clone();
                w.set(i, j, w.get(i, j) + d);
                loss(&x, &w, &w2)
            };
            let numeric = (bump(h) - bump(-h)) / (2.0 * h);
            let a = analytic.get(i, j);
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
            if j == 0 {
                println!("{:>6} {a:>14.8} {numeric:>14.8}", format!("({i},{j})"));
            }
        }
    }
    println!("max relative error over W1: {worst:.2e}");
}
