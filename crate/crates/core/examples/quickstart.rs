//! Train a hypernetwork on the 1-D convex problem and measure how close its
//! front is to the exact solutions.
//!
//!     cargo run --release --example quickstart -- [utility|ls|cheby|...] [iterations]

use pfl::evaluate::{default_hv_ref, evaluate_moo};
use pfl::oracle::OracleConfig;
use pfl::problems::{ProblemId, ProblemSpec};
use pfl::scalarize::ScalarKind;
use pfl::train::{train_phn, RunConfig};

fn main() -> pfl::Result<()> {
    let mut args = std::env::args().skip(1);
    let kind: ScalarKind = args.next().as_deref().unwrap_or("utility").parse()?;
    let problem_name = args.next().unwrap_or_else(|| "ex7.1".into());
    let iterations: usize = args.next().map_or(20_000, |s| s.parse().expect("iteration count"));

    let problem = ProblemSpec::new(problem_name.parse::<ProblemId>()?)?;
    let mut config = RunConfig::phn(&problem, kind);
    config.iterations = iterations;
    config.seed = 42;

    let started = std::time::Instant::now();
    let (model, history) = train_phn(config.clone())?;
    let train_time = started.elapsed();
    let last = history.records.last().map_or(f64::NAN, |r| r.loss);
    println!(
        "trained {} iterations in {:.1?}, final loss {last:.5}",
        iterations, train_time
    );

    let started = std::time::Instant::now();
    let report = evaluate_moo(
        &problem,
        &model,
        &config.scalarization,
        100,
        pfl::prefs::default_eps(problem.m),
        &default_hv_ref(problem.m),
        &OracleConfig::default(),
    )?;
    println!(
        "MED {:.5} ± {:.5} over {} rays, HV {:.4}, {} unconverged targets ({:.1?})",
        report.med_mean.unwrap_or(f64::NAN),
        report.med_std.unwrap_or(f64::NAN),
        report.rays,
        report.hv.unwrap_or(f64::NAN),
        report.not_converged,
        started.elapsed()
    );
    Ok(())
}
