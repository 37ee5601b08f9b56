//! Exact per-preference solutions by projected (sub)gradient descent, the
//! targets that trained models are scored against.
//!
//!     cargo run --release --example oracle_solve -- [ls|cheby|utility|...]

use pfl::oracle::{solve, OracleConfig};
use pfl::prefs::interior_rays;
use pfl::problems::{ProblemId, ProblemSpec};
use pfl::scalarize::{ScalarKind, ScalarizationSpec};

fn main() -> pfl::Result<()> {
    let kind: ScalarKind = std::env::args().nth(1).as_deref().unwrap_or("cheby").parse()?;
    let problem = ProblemSpec::new(ProblemId::Ex72)?;
    let spec = ScalarizationSpec::for_problem(kind, &problem);
    let cfg = OracleConfig::default();
    for r in interior_rays(2, 7, 1e-3)? {
        let sol = solve(&problem, &spec, &r, &cfg)?;
        println!(
            "r = {:.3?}  x = {:.4?}  F = {:.4?}  {} iterations, step {:.3}, converged {}",
            r.as_slice(),
            sol.x,
            sol.objectives,
            sol.iterations,
            sol.step,
            sol.converged
        );
    }
    Ok(())
}
