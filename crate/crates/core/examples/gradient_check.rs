//! Check tape gradients of a small conv block against central finite differences.
//!
//! cargo run --release --example gradient_check

use gigan::autodiff::grad_check::check;
use gigan::autodiff::{Activation, Mode, NormSpec, Reduction, Tensor};
use rand::Rng;

pub fn main() -> gigan::Result<()> {
    let mut r = gigan::rng::rng(1);
    let mut randn = |dims: [usize; 4]| Tensor::<f64>::from_fn(dims, |_| r.gen_range(-1.0..1.0));
    let x = randn([2, 4, 8, 8]);
    let w = randn([8, 4, 4, 4]);
    let gamma = randn([1, 8, 1, 1]);
    let beta = randn([1, 8, 1, 1]);
    let target = randn([2, 8, 4, 4]);

    // conv s2 -> group norm -> leaky relu -> L1 against a fixed target
    let err = check(&[x, w, gamma, beta], |t, v| {
        let y = t.conv2d(v[0], v[1], None, 2, 1)?;
        let (y, _) = t.normalize(y, v[2], v[3], &NormSpec::group(2), Mode::Train, None)?;
        let y = t.activation(y, Activation::LEAKY)?;
        let tv = t.constant(&target);
        t.l1_loss(y, tv, Reduction::Mean)
    });
    println!("conv + group norm + leaky relu + L1: max relative gradient error {err:.2e}");
    assert!(err < 1e-4);
    Ok(())
}
