//! Exact hypervolume in two and three objectives next to a Monte Carlo
//! estimate.
//!
//!     cargo run --release --example hypervolume

use pfl::metrics::{hypervolume, hypervolume_mc, pareto_filter};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> pfl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for m in [2, 3] {
        let points: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..m).map(|_| rng.random_range(0.0..1.2)).collect())
            .collect();
        let reference = vec![1.0; m];
        let exact = hypervolume(&points, &reference)?;
        let (estimate, stderr) = hypervolume_mc(&points, &reference, 1_000_000, &mut rng)?;
        println!(
            "m={m}: {} points, {} non-dominated, HV {exact:.5}, Monte Carlo {estimate:.5} ± {stderr:.5}",
            points.len(),
            pareto_filter(&points).len()
        );
    }
    Ok(())
}
