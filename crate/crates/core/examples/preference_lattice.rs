//! Simplex lattices, the coordinate filter used for evaluation, and
//! Dirichlet sampling used during training.
//!
//!     cargo run --example preference_lattice

use pfl::prefs::{binomial, das_dennis, filter_min_coord, interior_rays, sample_dirichlet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> pfl::Result<()> {
    let lattice = das_dennis(3, 10)?;
    println!(
        "das-dennis(3, 10): {} points, C(12, 10) = {}",
        lattice.len(),
        binomial(12, 10)
    );
    let kept = filter_min_coord(&lattice, 0.16);
    println!("every coordinate >= 0.16: {} points", kept.len());
    for r in &kept {
        println!("  {r:.2?}");
    }

    let rays = interior_rays(2, 5, 1e-3)?;
    println!("five interior rays for two objectives:");
    for r in &rays {
        println!("  {:.3?}", r.as_slice());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for alpha in [0.2, 0.6, 5.0] {
        let draws: Vec<_> = (0..3)
            .map(|_| sample_dirichlet(alpha, 3, &mut rng).map(|r| r.as_slice().to_vec()))
            .collect::<pfl::Result<_>>()?;
        println!("dirichlet({alpha}): {draws:.3?}");
    }
    Ok(())
}
