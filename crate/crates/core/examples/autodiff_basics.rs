//! Reverse-mode gradients on a small tape, checked against central
//! differences.
//!
//!     cargo run --example autodiff_basics

use pfl::autodiff::{Tape, Tensor, Var};

fn loss(x: &[f64]) -> pfl::Result<f64> {
    let tape = Tape::new();
    let v = tape.constant(Tensor::vector(x.to_vec()));
    Ok(value_of(v)?.item())
}

// sum(sin(x) * x) + log(1 + |x|^2)
fn value_of(x: Var<'_>) -> pfl::Result<Var<'_>> {
    let wave = x.sin().mul(x)?.sum();
    let norm = x.mul(x)?.sum().add_scalar(1.0).log()?;
    wave.add(norm)
}

fn main() -> pfl::Result<()> {
    let x = vec![0.3, -1.2, 2.0];
    let tape = Tape::new();
    let leaf = tape.param(Tensor::vector(x.clone()));
    let out = value_of(leaf)?;
    println!("f(x) = {:.6}", out.item());
    let grads = tape.backward(out)?;
    let analytic = grads.get(leaf.id()).expect("gradient for the leaf").data().to_vec();

    let h = 1e-6;
    for (i, g) in analytic.iter().enumerate() {
        let mut up = x.clone();
        let mut down = x.clone();
        up[i] += h;
        down[i] -= h;
        let numeric = (loss(&up)? - loss(&down)?) / (2.0 * h);
        println!("d/dx{i}: reverse {g:+.8}  central {numeric:+.8}");
    }
    Ok(())
}
