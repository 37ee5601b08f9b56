//! Linear scalarization collapses onto the ends of a concave front while
//! Chebyshev follows it.
//!
//!     cargo run --release --example nonconvex_zdt -- [iterations]

use pfl::evaluate::predict_all;
use pfl::prefs::interior_rays;
use pfl::problems::{ProblemId, ProblemSpec};
use pfl::scalarize::ScalarKind;
use pfl::train::{train_phn, RunConfig};

fn main() -> pfl::Result<()> {
    let iterations: usize = std::env::args()
        .nth(1)
        .map_or(20_000, |s| s.parse().expect("iteration count"));
    let problem = ProblemSpec::new(ProblemId::Zdt2)?;
    let rays = interior_rays(2, 9, 1e-3)?;
    for kind in [ScalarKind::Ls, ScalarKind::Cheby] {
        let mut config = RunConfig::phn(&problem, kind);
        config.iterations = iterations;
        let (model, _) = train_phn(config)?;
        println!("{}:", kind.name());
        for p in predict_all(&problem, &model, &rays)? {
            println!("  r = {:.3?} -> F = {:.3?}", p.ray, p.objectives);
        }
    }
    Ok(())
}
