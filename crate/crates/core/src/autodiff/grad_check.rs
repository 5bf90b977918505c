//! Central finite-difference gradient checker.

use super::{Tape, Tensor, Var};
use crate::error::Result;

/// Max-norm relative error between analytic and numeric gradients of every input.
///
/// `build` maps the recorded inputs to a scalar loss.
///
/// # Panics
/// If `build` or the backward pass fails.
pub fn check(
    inputs: &[Tensor<f64>],
    build: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
) -> f64 {
    let eval = |ins: &[Tensor<f64>]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ins.iter().map(|t| tape.leaf(t)).collect();
        let loss = build(&mut tape, &vars).unwrap();
        tape.scalar(loss)
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(&t.clone().with_grad())).collect();
    let loss = build(&mut tape, &vars).unwrap();
    tape.backward(loss).unwrap();

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = tape.grad(vars[k]).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; input.len()]);
        let mut numeric = vec![0.0; input.len()];
        for i in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= h;
            numeric[i] = (eval(&plus) - eval(&minus)) / (2.0 * h);
        }
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().chain(a).map(|v| v.abs()).fold(0.0, f64::max);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}
