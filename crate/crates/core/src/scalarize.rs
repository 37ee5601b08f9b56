//! Preference-based scalarization functions `s(F, r)`.
//!
//! Every function is built from autodiff primitives so it can be
//! differentiated back through `F` into whatever produced it.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::metrics::pareto_filter_indices;
use crate::prefs::PreferenceVector;
use crate::problems::ProblemSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarKind {
    /// Weighted sum.
    Ls,
    /// Weighted Chebyshev distance to `z*`.
    Cheby,
    /// Inverse Cobb–Douglas utility with upper bounds `u`.
    Utility,
    Kl,
    Cauchy,
    Cosine,
    Log,
    Prod,
    /// Augmented Chebyshev.
    Ac,
    /// Modified Chebyshev.
    Mc,
    /// Negative hypervolume plus a cosine penalty.
    Hvi,
}

impl ScalarKind {
    pub const ALL: [ScalarKind; 11] = [
        ScalarKind::Ls,
        ScalarKind::Cheby,
        ScalarKind::Utility,
        ScalarKind::Kl,
        ScalarKind::Cauchy,
        ScalarKind::Cosine,
        ScalarKind::Log,
        ScalarKind::Prod,
        ScalarKind::Ac,
        ScalarKind::Mc,
        ScalarKind::Hvi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScalarKind::Ls => "ls",
            ScalarKind::Cheby => "cheby",
            ScalarKind::Utility => "utility",
            ScalarKind::Kl => "kl",
            ScalarKind::Cauchy => "cauchy",
            ScalarKind::Cosine => "cosine",
            ScalarKind::Log => "log",
            ScalarKind::Prod => "prod",
            ScalarKind::Ac => "ac",
            ScalarKind::Mc => "mc",
            ScalarKind::Hvi => "hvi",
        }
    }

    /// Kinds built on a pointwise maximum, which are nonsmooth where two
    /// pieces tie.
    pub fn is_max_type(self) -> bool {
        matches!(self, ScalarKind::Cheby | ScalarKind::Ac | ScalarKind::Mc)
    }

    fn default_rho(self) -> f64 {
        match self {
            ScalarKind::Hvi => 100.0,
            _ => 1e-4,
        }
    }
}

impl fmt::Display for ScalarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScalarKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        ScalarKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| Error::Unknown {
                kind: "scalarization",
                name: s.to_string(),
            })
    }
}

pub const DEFAULT_UTILITY_BOUND: f64 = 2.01;
pub const DEFAULT_HV_REF: f64 = 2.0;

/// A scalarization kind together with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarizationSpec {
    pub kind: ScalarKind,
    /// Chebyshev reference point.
    pub z_star: Vec<f64>,
    /// Utility upper bounds.
    pub u: Vec<f64>,
    /// Mixing weight for AC, MC and HVI.
    pub rho: f64,
    /// Hypervolume reference point for HVI.
    pub hv_ref: Vec<f64>,
}

impl ScalarizationSpec {
    /// Defaults for normalized objectives: `z* = 0`, `u = 2.01`, `hv-ref = 2`.
    pub fn new(kind: ScalarKind, m: usize) -> Self {
        Self {
            kind,
            z_star: vec![0.0; m],
            u: vec![DEFAULT_UTILITY_BOUND; m],
            rho: kind.default_rho(),
            hv_ref: vec![DEFAULT_HV_REF; m],
        }
    }

    /// Defaults sized for `problem`: utility bounds sit 1.01 above each
    /// objective's known upper bound, which is 2.01 on normalized problems.
    pub fn for_problem(kind: ScalarKind, problem: &ProblemSpec) -> Self {
        let mut spec = Self::new(kind, problem.m);
        spec.u = problem.objective_upper.iter().map(|b| b + 1.01).collect();
        spec
    }

    pub fn m(&self) -> usize {
        self.z_star.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        if self.u.len() != m || self.hv_ref.len() != m {
            return Err(Error::Contract(format!(
                "scalarization parameter lengths differ: z* {}, u {}, hv-ref {}",
                m,
                self.u.len(),
                self.hv_ref.len()
            )));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::Contract(format!("rho must be non-negative, got {}", self.rho)));
        }
        if self
            .z_star
            .iter()
            .chain(&self.u)
            .chain(&self.hv_ref)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Contract("scalarization parameters must be finite".into()));
        }
        Ok(())
    }
}

fn check_dims(spec: &ScalarizationSpec, f: &Var<'_>, r: &PreferenceVector) -> Result<()> {
    if f.len() != r.dim() || f.len() != spec.m() {
        return Err(Error::Shape {
            op: "scalarize",
            lhs: vec![spec.m(), r.dim()],
            rhs: f.shape(),
        });
    }
    Ok(())
}

fn require_nonzero(f: &Var<'_>, kind: ScalarKind) -> Result<()> {
    if f.data().iter().all(|&v| v == 0.0) {
        return Err(Error::Domain {
            op: "scalarize",
            detail: format!("{kind} needs a non-zero objective vector"),
        });
    }
    Ok(())
}

/// `s(F, r)` for one objective vector `F` (rank 1, length m).
pub fn scalarize<'t>(spec: &ScalarizationSpec, f: Var<'t>, r: &PreferenceVector) -> Result<Var<'t>> {
    check_dims(spec, &f, r)?;
    let tape = f.tape();
    let rv = tape.vector(r.as_slice());
    match spec.kind {
        ScalarKind::Ls => rv.dot(f),
        ScalarKind::Cheby => {
            let gap = f.sub(tape.vector(&spec.z_star))?.abs();
            rv.mul(gap)?.max_axis(0)
        }
        ScalarKind::Utility => {
            let values = f.data();
            for (i, (&fi, &ui)) in values.iter().zip(&spec.u).enumerate() {
                if !(ui - fi > 0.0) {
                    return Err(Error::UtilityBound {
                        objective: i,
                        value: fi,
                        bound: ui,
                    });
                }
            }
            let slack = tape.vector(&spec.u).sub(f)?;
            Ok(rv.dot(slack.log()?)?.neg().exp())
        }
        ScalarKind::Kl => {
            let m = r.dim() as f64;
            let sigma = rv.mul(f)?.softmax()?;
            sigma.dot(sigma.log()?.add_scalar(m.ln()))
        }
        ScalarKind::Cauchy => {
            require_nonzero(&f, spec.kind)?;
            let inv: Vec<f64> = r.as_slice().iter().map(|v| 1.0 / v).collect();
            let inv_sq: f64 = inv.iter().map(|v| v * v).sum();
            let inner = f.dot(tape.vector(&inv))?;
            let fsq = f.dot(f)?;
            let ratio = inner.mul(inner)?.div(fsq.scale(inv_sq))?;
            Ok(ratio.neg().add_scalar(1.0))
        }
        ScalarKind::Cosine => {
            require_nonzero(&f, spec.kind)?;
            cosine(f, rv)
        }
        ScalarKind::Log => rv.dot(f.add_scalar(1.0).log()?),
        ScalarKind::Prod => Ok(rv.dot(f.add_scalar(1.0).log()?)?.exp()),
        ScalarKind::Ac => {
            let weighted = rv.mul(f)?;
            weighted.max_axis(0)?.add(weighted.sum().scale(spec.rho))
        }
        ScalarKind::Mc => {
            let weighted = rv.mul(f)?;
            weighted.add(weighted.sum().scale(spec.rho))?.max_axis(0)
        }
        ScalarKind::Hvi => {
            let fs = f.reshape(&[1, f.len()])?;
            scalarize_batch_hvi(spec, fs, std::slice::from_ref(r))
        }
    }
}

fn cosine<'t>(f: Var<'t>, rv: Var<'t>) -> Result<Var<'t>> {
    let denom = f.norm().mul(rv.norm())?;
    Ok(f.dot(rv)?.div(denom)?.neg())
}

/// The smooth pieces `φ_i` of a max-type scalarization, `s = max_i φ_i`.
/// Returns `None` for the other kinds.
pub fn max_pieces<'t>(spec: &ScalarizationSpec, f: Var<'t>, r: &PreferenceVector) -> Result<Option<Var<'t>>> {
    check_dims(spec, &f, r)?;
    let tape = f.tape();
    let rv = tape.vector(r.as_slice());
    Ok(match spec.kind {
        ScalarKind::Cheby => Some(rv.mul(f.sub(tape.vector(&spec.z_star))?.abs())?),
        ScalarKind::Ac | ScalarKind::Mc => {
            let weighted = rv.mul(f)?;
            Some(weighted.add(weighted.sum().scale(spec.rho))?)
        }
        _ => None,
    })
}

/// `−HV(Fs, hv-ref) + ρ · mean_j s_cosine(F_j, r_j)` for a `J × 2` batch.
///
/// The hypervolume is the sorted-sweep area. Which points count (strictly
/// inside the reference box and not dominated by another point) and their
/// order are fixed at forward time, so the gradient flows through the
/// surviving coordinates only.
pub fn scalarize_batch_hvi<'t>(spec: &ScalarizationSpec, fs: Var<'t>, rs: &[PreferenceVector]) -> Result<Var<'t>> {
    let shape = fs.shape();
    let (j, m) = match shape.as_slice() {
        [j, m] => (*j, *m),
        _ => {
            return Err(Error::Shape {
                op: "scalarize-batch-hvi",
                lhs: vec![rs.len(), 2],
                rhs: shape,
            })
        }
    };
    if m != 2 {
        return Err(Error::Unsupported(format!(
            "differentiable hypervolume needs m = 2, got m = {m}"
        )));
    }
    if j != rs.len() || j == 0 || spec.hv_ref.len() != 2 {
        return Err(Error::Shape {
            op: "scalarize-batch-hvi",
            lhs: vec![rs.len(), spec.hv_ref.len()],
            rhs: shape,
        });
    }
    let tape = fs.tape();
    let values = fs.data();
    let reference = [spec.hv_ref[0], spec.hv_ref[1]];

    let inside: Vec<usize> = (0..j)
        .filter(|&i| values[2 * i] < reference[0] && values[2 * i + 1] < reference[1])
        .collect();
    let points: Vec<Vec<f64>> = inside.iter().map(|&i| vec![values[2 * i], values[2 * i + 1]]).collect();
    let mut kept: Vec<usize> = pareto_filter_indices(&points).into_iter().map(|k| inside[k]).collect();
    kept.sort_by(|&a, &b| {
        values[2 * a]
            .total_cmp(&values[2 * b])
            .then(values[2 * a + 1].total_cmp(&values[2 * b + 1]))
    });

    let hv = if kept.is_empty() {
        tape.scalar(0.0)
    } else {
        let f1 = fs.gather(&kept.iter().map(|&i| 2 * i).collect::<Vec<_>>())?;
        let f2 = fs.gather(&kept.iter().map(|&i| 2 * i + 1).collect::<Vec<_>>())?;
        let width = f1.neg().add_scalar(reference[0]);
        let above = if kept.len() == 1 {
            tape.vector(&[reference[1]])
        } else {
            tape.concat(&[tape.scalar(reference[1]), f2.slice(0, kept.len() - 1)?])?
        };
        width.dot(above.sub(f2)?)?
    };

    let mut loss = hv.neg();
    if spec.rho != 0.0 {
        let mut terms = Vec::with_capacity(j);
        for (i, r) in rs.iter().enumerate() {
            let row = fs.slice(2 * i, 2)?;
            require_nonzero(&row, ScalarKind::Hvi)?;
            terms.push(cosine(row, tape.vector(r.as_slice()))?);
        }
        let mean = tape.concat(&terms)?.mean();
        loss = loss.add(mean.scale(spec.rho))?;
    }
    Ok(loss)
}

/// Plain-value evaluation of `s(F, r)`.
pub fn scalarize_values(spec: &ScalarizationSpec, f: &[f64], r: &PreferenceVector) -> Result<f64> {
    let tape = crate::autodiff::Tape::new();
    let fv = tape.vector(f);
    Ok(scalarize(spec, fv, r)?.item())
}
