//! A hypernetwork that emits the weights of a two-task regressor, so one
//! preference picks one trade-off between the tasks.
//!
//!     cargo run --release --example mtl_lite -- [iterations]

use pfl::evaluate::mtl_front;
use pfl::metrics::hypervolume;
use pfl::prefs::{interior_rays, PreferenceVector};
use pfl::problems::make_mtl_lite;
use pfl::scalarize::ScalarKind;
use pfl::train::{train_mtl, RunConfig};

fn main() -> pfl::Result<()> {
    let iterations: usize = std::env::args()
        .nth(1)
        .map_or(20_000, |s| s.parse().expect("iteration count"));
    let mut config = RunConfig::mtl(ScalarKind::Ls);
    config.iterations = iterations;
    let data = make_mtl_lite(config.seed);
    let (model, history) = train_mtl(config, data.clone())?;
    println!(
        "final training loss {:.5}",
        history.losses().last().copied().unwrap_or(f64::NAN)
    );

    let rays = interior_rays(2, 11, 1e-3)?;
    let front = mtl_front(&model, &data, &rays)?;
    for (r, f) in rays.iter().zip(&front) {
        println!("r = {:.3?}  validation MSE = {:.4?}", r.as_slice(), f);
    }
    let middle = mtl_front(&model, &data, &[PreferenceVector::new(vec![0.5, 0.5])?])?;
    println!(
        "HV of the front {:.4}, of the equal-preference point {:.4}",
        hypervolume(&front, &[2.0, 2.0])?,
        hypervolume(&middle, &[2.0, 2.0])?
    );
    Ok(())
}
