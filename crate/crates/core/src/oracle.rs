//! Projected gradient descent on the scalarized problem for one preference,
//! used as a standalone solver and to produce ground-truth targets.
//!
//! Smooth scalarizations take plain projected gradient steps. For the
//! max-type kinds (Cheby, AC, MC) the step direction is the minimum-norm
//! element of the convex hull of the nearly-active piece gradients, with the
//! activity tolerance shrinking in stages. Every step is checked for
//! sufficient decrease and halved if needed; with a step inside the
//! Lipschitz range the first trial is always accepted.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::prefs::PreferenceVector;
use crate::problems::ProblemSpec;
use crate::scalarize::{max_pieces, scalarize, ScalarizationSpec};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepSize {
    /// `1 / L̂` with `L̂` sampled from gradient differences.
    Auto,
    Fixed {
        value: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StartPoint {
    CenterOfBox,
    FeasibleRandom { seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub step: StepSize,
    pub max_iterations: usize,
    pub stop_tol: f64,
    pub start: StartPoint,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            step: StepSize::Auto,
            max_iterations: 100_000,
            stop_tol: 1e-10,
            start: StartPoint::CenterOfBox,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub x: Vec<f64>,
    pub objectives: Vec<f64>,
    /// Scalarized value at every accepted iterate, starting with `x0`.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// The nominal step size used.
    pub step: f64,
}

const LIPSCHITZ_PAIRS: usize = 1000;
const SUFFICIENT_DECREASE: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
const FIRST_ACTIVITY_TOL: f64 = 1e-3;
const LAST_ACTIVITY_TOL: f64 = 1e-12;

/// Objective value and the gradients of its smooth pieces at one point.
struct Local {
    value: f64,
    /// One row for smooth kinds; piece values and gradients for max-type.
    pieces: Vec<(f64, Vec<f64>)>,
}

fn local(problem: &ProblemSpec, spec: &ScalarizationSpec, r: &PreferenceVector, x: &[f64]) -> Result<Local> {
    if spec.kind.is_max_type() {
        let m = problem.m;
        let mut pieces = Vec::with_capacity(m);
        for i in 0..m {
            let tape = Tape::new();
            let xv = tape.param(Tensor::vector(x.to_vec()));
            let all = max_pieces(spec, problem.evaluate(xv)?, r)?.expect("max-type kind");
            let piece = all.index(i)?;
            let value = piece.item();
            let grad = tape
                .backward(piece)?
                .get(xv.id())
                .expect("x is a parameter")
                .data()
                .to_vec();
            pieces.push((value, grad));
        }
        let value = pieces.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        Ok(Local { value, pieces })
    } else {
        let tape = Tape::new();
        let xv = tape.param(Tensor::vector(x.to_vec()));
        let s = scalarize(spec, problem.evaluate(xv)?, r)?;
        let value = s.item();
        let grad = tape
            .backward(s)?
            .get(xv.id())
            .expect("x is a parameter")
            .data()
            .to_vec();
        Ok(Local {
            value,
            pieces: vec![(value, grad)],
        })
    }
}

fn value_at(problem: &ProblemSpec, spec: &ScalarizationSpec, r: &PreferenceVector, x: &[f64]) -> Result<f64> {
    let tape = Tape::new();
    let f = problem.evaluate(tape.vector(x))?;
    Ok(scalarize(spec, f, r)?.item())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(u, v)| u - v).collect()
}

/// Minimum-norm point of the convex hull of `vectors`, by enumerating
/// supports and solving the small equality-constrained least squares on each.
pub fn min_norm_hull(vectors: &[Vec<f64>]) -> Vec<f64> {
    let k = vectors.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << k) {
        let support: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let s = support.len();
        let mut kkt = DMatrix::<f64>::zeros(s + 1, s + 1);
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                kkt[(a, b)] = vectors[i].iter().zip(&vectors[j]).map(|(u, v)| u * v).sum();
            }
            kkt[(a, s)] = 1.0;
            kkt[(s, a)] = 1.0;
        }
        let mut rhs = DVector::<f64>::zeros(s + 1);
        rhs[s] = 1.0;
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        if sol.iter().take(s).any(|w| !w.is_finite() || *w < -1e-12) {
            continue;
        }
        let mut point = vec![0.0; vectors[0].len()];
        for (a, &i) in support.iter().enumerate() {
            for (p, v) in point.iter_mut().zip(&vectors[i]) {
                *p += sol[a].max(0.0) * v;
            }
        }
        let n = norm(&point);
        if best.as_ref().is_none_or(|(bn, _)| n < *bn) {
            best = Some((n, point));
        }
    }
    best.expect("singleton supports always solve").1
}

fn direction(local: &Local, activity_tol: f64) -> Vec<f64> {
    if local.pieces.len() == 1 {
        return local.pieces[0].1.clone();
    }
    let cutoff = local.value - activity_tol * (1.0 + local.value.abs());
    let active: Vec<Vec<f64>> = local
        .pieces
        .iter()
        .filter(|p| p.0 >= cutoff)
        .map(|p| p.1.clone())
        .collect();
    min_norm_hull(&active)
}

/// Sampled Lipschitz constant of the scalarized gradient (of each smooth
/// piece, for max-type kinds) over random feasible pairs.
pub fn estimate_lipschitz(problem: &ProblemSpec, spec: &ScalarizationSpec, r: &PreferenceVector) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut best: f64 = 0.0;
    for _ in 0..LIPSCHITZ_PAIRS {
        let a = problem.random_feasible(&mut rng)?;
        let b = problem.random_feasible(&mut rng)?;
        let gap = norm(&diff(&a, &b));
        if gap < 1e-12 {
            continue;
        }
        let (la, lb) = match (local(problem, spec, r, &a), local(problem, spec, r, &b)) {
            (Ok(la), Ok(lb)) => (la, lb),
            // points outside a scalarization's domain are skipped
            _ => continue,
        };
        for (pa, pb) in la.pieces.iter().zip(&lb.pieces) {
            let ratio = norm(&diff(&pa.1, &pb.1)) / gap;
            if ratio.is_finite() {
                best = best.max(ratio);
            }
        }
    }
    Ok(best)
}

/// The nominal step for `cfg`, validated against the problem's Lipschitz hint.
pub fn resolve_step(
    problem: &ProblemSpec,
    spec: &ScalarizationSpec,
    r: &PreferenceVector,
    cfg: &OracleConfig,
) -> Result<f64> {
    match cfg.step {
        StepSize::Fixed { value } => {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Contract(format!("step must be positive, got {value}")));
            }
            if let Some(hint) = problem.lipschitz_hint {
                if value >= 2.0 / hint {
                    return Err(Error::Contract(format!(
                        "step {value} is outside (0, 2/L) = (0, {}) for {}",
                        2.0 / hint,
                        problem.name()
                    )));
                }
            }
            Ok(value)
        }
        StepSize::Auto => {
            let l = estimate_lipschitz(problem, spec, r)?;
            Ok(if l > 1e-12 { 1.0 / l } else { 1.0 })
        }
    }
}

fn start_point(problem: &ProblemSpec, cfg: &OracleConfig) -> Result<Vec<f64>> {
    match cfg.start {
        StartPoint::CenterOfBox => problem.center(),
        StartPoint::FeasibleRandom { seed } => problem.random_feasible(&mut ChaCha8Rng::seed_from_u64(seed)),
    }
}

/// Solves `min_x s(F(x), r)` over the feasible set.
pub fn solve(
    problem: &ProblemSpec,
    spec: &ScalarizationSpec,
    r: &PreferenceVector,
    cfg: &OracleConfig,
) -> Result<OracleSolution> {
    spec.validate()?;
    if r.dim() != problem.m {
        return Err(Error::Contract(format!(
            "preference has {} entries, {} has {} objectives",
            r.dim(),
            problem.name(),
            problem.m
        )));
    }
    if !(cfg.stop_tol > 0.0) || cfg.max_iterations == 0 {
        return Err(Error::Contract(
            "stop tolerance and iteration cap must be positive".into(),
        ));
    }
    let step = resolve_step(problem, spec, r, cfg)?;
    let max_type = spec.kind.is_max_type();
    let mut x = start_point(problem, cfg)?;
    let mut here = local(problem, spec, r, &x)?;
    let mut trace = vec![here.value];
    let mut best = (here.value, x.clone());
    let mut activity = if max_type { FIRST_ACTIVITY_TOL } else { 0.0 };
    let last_stage = |a: f64| !max_type || a <= LAST_ACTIVITY_TOL;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        let d = direction(&here, activity);
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                iteration: iterations,
                detail: format!("gradient at x = {x:?}"),
            });
        }
        let trial_at = |t: f64| -> Result<Vec<f64>> {
            let moved: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi - t * di).collect();
            problem.project(&moved)
        };
        let nominal = trial_at(step)?;
        if norm(&diff(&nominal, &x)) <= cfg.stop_tol {
            if last_stage(activity) {
                converged = true;
                break;
            }
            activity /= 10.0;
            continue;
        }

        let slack = 1e-14 * (1.0 + here.value.abs());
        let mut t = step;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let y = if t == step { nominal.clone() } else { trial_at(t)? };
            let moved = norm(&diff(&y, &x));
            // Leaving a scalarization's domain counts as a failed trial.
            if let Ok(fy) = value_at(problem, spec, r, &y) {
                if fy <= here.value - SUFFICIENT_DECREASE / t * moved * moved + slack {
                    accepted = Some((y, moved));
                    break;
                }
            }
            t /= 2.0;
        }

        iterations += 1;
        match accepted {
            Some((y, moved)) => {
                x = y;
                here = local(problem, spec, r, &x)?;
                trace.push(here.value);
                if here.value < best.0 {
                    best = (here.value, x.clone());
                }
                if moved <= cfg.stop_tol {
                    if last_stage(activity) {
                        converged = true;
                        break;
                    }
                    activity /= 10.0;
                }
            }
            None => {
                if last_stage(activity) {
                    // No representable decrease remains along the direction.
                    converged = true;
                    break;
                }
                activity /= 10.0;
            }
        }
    }

    let x = if converged { x } else { best.1 };
    let objectives = problem.evaluate_values(&x)?;
    Ok(OracleSolution {
        x,
        objectives,
        trace,
        iterations,
        converged,
        step,
    })
}

/// Oracle solutions for every ray, solved in parallel from the default start.
pub fn solve_all(
    problem: &ProblemSpec,
    spec: &ScalarizationSpec,
    rays: &[PreferenceVector],
    cfg: &OracleConfig,
) -> Result<Vec<OracleSolution>> {
    rays.par_iter().map(|r| solve(problem, spec, r, cfg)).collect()
}

/// Ground-truth objective vectors per ray; `None` where the solver did not
/// converge.
pub struct MedTargets {
    pub targets: Vec<Option<Vec<f64>>>,
    pub not_converged: usize,
}

pub fn med_targets(
    problem: &ProblemSpec,
    spec: &ScalarizationSpec,
    rays: &[PreferenceVector],
    cfg: &OracleConfig,
) -> Result<MedTargets> {
    let solutions = solve_all(problem, spec, rays, cfg)?;
    let not_converged = solutions.iter().filter(|s| !s.converged).count();
    if not_converged > 0 {
        log::warn!(
            "{not_converged} of {} oracle solves did not converge and are excluded",
            rays.len()
        );
    }
    Ok(MedTargets {
        targets: solutions
            .into_iter()
            .map(|s| s.converged.then_some(s.objectives))
            .collect(),
        not_converged,
    })
}
