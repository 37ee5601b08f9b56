//! Benchmark multi-objective problems and the synthetic multi-task dataset.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Every problem the registry knows by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProblemId {
    #[serde(rename = "ex7.1")]
    Ex71,
    #[serde(rename = "ex7.2")]
    Ex72,
    #[serde(rename = "ex7.3")]
    Ex73,
    #[serde(rename = "zdt1")]
    Zdt1,
    #[serde(rename = "zdt2")]
    Zdt2,
    #[serde(rename = "dtlz2")]
    Dtlz2,
    #[serde(rename = "indep2")]
    Indep2,
    #[serde(rename = "mtl-lite")]
    MtlLite,
}

impl ProblemId {
    pub const ALL: [ProblemId; 8] = [
        ProblemId::Ex71,
        ProblemId::Ex72,
        ProblemId::Ex73,
        ProblemId::Zdt1,
        ProblemId::Zdt2,
        ProblemId::Dtlz2,
        ProblemId::Indep2,
        ProblemId::MtlLite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemId::Ex71 => "ex7.1",
            ProblemId::Ex72 => "ex7.2",
            ProblemId::Ex73 => "ex7.3",
            ProblemId::Zdt1 => "zdt1",
            ProblemId::Zdt2 => "zdt2",
            ProblemId::Dtlz2 => "dtlz2",
            ProblemId::Indep2 => "indep2",
            ProblemId::MtlLite => "mtl-lite",
        }
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProblemId::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "problem",
                name: s.to_string(),
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeasibleSet {
    Box {
        lo: f64,
        hi: f64,
    },
    /// `{x ≥ 0, ‖x‖₂ = 1}`
    UnitSpherePositive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convexity {
    Convex,
    NonConvex,
}

/// A multi-objective problem `min F(x)` over a feasible set.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub id: ProblemId,
    /// Decision dimension.
    pub n: usize,
    /// Objective count.
    pub m: usize,
    pub feasible: FeasibleSet,
    /// Lipschitz constant of the objective gradients, where known in closed form.
    pub lipschitz_hint: Option<f64>,
    pub objectives: Convexity,
    pub front: Convexity,
    /// Upper bound of each objective over the feasible set.
    pub objective_upper: Vec<f64>,
}

impl ProblemSpec {
    pub fn new(id: ProblemId) -> Result<Self> {
        let unit_box = FeasibleSet::Box { lo: 0.0, hi: 1.0 };
        let spec = |n, m, feasible, hint, objectives, front, upper: Vec<f64>| ProblemSpec {
            id,
            n,
            m,
            feasible,
            lipschitz_hint: hint,
            objectives,
            front,
            objective_upper: upper,
        };
        use Convexity::*;
        Ok(match id {
            ProblemId::Ex71 => spec(1, 2, unit_box, Some(2.0), Convex, Convex, vec![1.0, 1.0]),
            ProblemId::Ex72 => spec(
                2,
                2,
                FeasibleSet::Box { lo: 0.0, hi: 5.0 },
                Some(2.0 / 50.0),
                Convex,
                Convex,
                vec![1.0, 1.0],
            ),
            ProblemId::Ex73 => spec(
                3,
                3,
                FeasibleSet::UnitSpherePositive,
                Some(2.0 / 14.0),
                Convex,
                Convex,
                vec![1.0, 1.0, 1.0],
            ),
            ProblemId::Zdt1 => spec(30, 2, unit_box, None, NonConvex, Convex, vec![1.0, 10.0]),
            ProblemId::Zdt2 => spec(30, 2, unit_box, None, NonConvex, NonConvex, vec![1.0, 10.0]),
            ProblemId::Dtlz2 => spec(10, 3, unit_box, None, NonConvex, NonConvex, vec![3.0; 3]),
            ProblemId::Indep2 => spec(2, 2, unit_box, None, Convex, Convex, vec![1.0, 1.0]),
            ProblemId::MtlLite => {
                return Err(Error::Unsupported(
                    "mtl-lite is a dataset, not a closed-form objective map".into(),
                ))
            }
        })
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Self::new(name.parse()?)
    }

    pub fn name(&self) -> &'static str {
        self.id.name()
    }

    /// `F(x)` recorded on the tape of `x`.
    pub fn evaluate<'t>(&self, x: Var<'t>) -> Result<Var<'t>> {
        if x.len() != self.n {
            return Err(Error::Shape {
                op: "evaluate",
                lhs: vec![self.n],
                rhs: x.shape(),
            });
        }
        let tape = x.tape();
        let x = x.reshape(&[self.n])?;
        match self.id {
            ProblemId::Ex71 => {
                let f2 = x.add_scalar(-1.0);
                tape.concat(&[x, f2.mul(f2)?])
            }
            ProblemId::Ex72 => {
                let f1 = x.mul(x)?.sum().scale(1.0 / 50.0);
                let d = x.add_scalar(-5.0);
                let f2 = d.mul(d)?.sum().scale(1.0 / 50.0);
                tape.concat(&[f1, f2])
            }
            ProblemId::Ex73 => {
                let sq = x.mul(x)?.sum();
                let rows: [([f64; 3], f64, f64); 3] = [
                    ([0.0, 1.0, -12.0], 12.0, 14.0),
                    ([8.0, -44.8, 8.0], 44.0, 57.0),
                    ([-44.8, 8.0, 8.0], 43.7, 56.0),
                ];
                let fs = rows
                    .iter()
                    .map(|(c, d, den)| Ok(sq.add(x.dot(tape.vector(c))?)?.add_scalar(*d).scale(1.0 / den)))
                    .collect::<Result<Vec<_>>>()?;
                tape.concat(&fs)
            }
            ProblemId::Zdt1 | ProblemId::Zdt2 => {
                let f1 = x.index(0)?;
                let tail = x.slice(1, self.n - 1)?.sum();
                let g = tail.scale(9.0 / (self.n - 1) as f64).add_scalar(1.0);
                let ratio = f1.div(g)?;
                let shape = if self.id == ProblemId::Zdt1 {
                    if ratio.item() > 0.0 {
                        ratio.sqrt()?
                    } else {
                        tape.scalar(0.0)
                    }
                } else {
                    ratio.mul(ratio)?
                };
                let f2 = g.mul(shape.neg().add_scalar(1.0))?;
                tape.concat(&[f1, f2])
            }
            ProblemId::Dtlz2 => {
                let tail = x.slice(2, self.n - 2)?.add_scalar(-0.5);
                let scale = tail.mul(tail)?.sum().add_scalar(1.0);
                let a = x.index(0)?.scale(FRAC_PI_2);
                let b = x.index(1)?.scale(FRAC_PI_2);
                let (ca, sa, cb, sb) = (a.cos(), a.sin(), b.cos(), b.sin());
                let f1 = scale.mul(ca)?.mul(cb)?;
                let f2 = scale.mul(ca)?.mul(sb)?;
                let f3 = scale.mul(sa)?;
                tape.concat(&[f1, f2, f3])
            }
            ProblemId::Indep2 => Ok(x),
            ProblemId::MtlLite => unreachable!("rejected in ProblemSpec::new"),
        }
    }

    /// `F(x)` as plain values.
    pub fn evaluate_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        let tape = Tape::new();
        let v = tape.constant(Tensor::vector(x.to_vec()));
        Ok(self.evaluate(v)?.data())
    }

    /// Like [`evaluate_values`](Self::evaluate_values) but rejects points whose
    /// constraint violation exceeds `tol`.
    pub fn evaluate_strict(&self, x: &[f64], tol: f64) -> Result<Vec<f64>> {
        let violation = self.violation(x);
        if violation > tol {
            return Err(Error::Infeasible { violation });
        }
        self.evaluate_values(x)
    }

    /// Distance-like measure of how far `x` lies outside the feasible set.
    pub fn violation(&self, x: &[f64]) -> f64 {
        match self.feasible {
            FeasibleSet::Box { lo, hi } => x.iter().map(|&v| (lo - v).max(0.0).max(v - hi)).fold(0.0, f64::max),
            FeasibleSet::UnitSpherePositive => {
                let neg = x.iter().map(|&v| (-v).max(0.0)).fold(0.0, f64::max);
                let sq: f64 = x.iter().map(|v| v * v).sum();
                neg.max((sq - 1.0).abs())
            }
        }
    }

    /// Euclidean projection onto the feasible set (normalization for the sphere).
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self.feasible {
            FeasibleSet::Box { lo, hi } => Ok(x.iter().map(|v| v.clamp(lo, hi)).collect()),
            FeasibleSet::UnitSpherePositive => project_sphere_positive(x),
        }
    }

    /// Box bounds of the decision space (the sphere sits inside `[0,1]^n`).
    pub fn bounds(&self) -> (f64, f64) {
        match self.feasible {
            FeasibleSet::Box { lo, hi } => (lo, hi),
            FeasibleSet::UnitSpherePositive => (0.0, 1.0),
        }
    }

    /// Center of the bounding box, projected.
    pub fn center(&self) -> Result<Vec<f64>> {
        let (lo, hi) = self.bounds();
        self.project(&vec![0.5 * (lo + hi); self.n])
    }

    /// A uniformly random feasible point.
    pub fn random_feasible<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        match self.feasible {
            FeasibleSet::Box { lo, hi } => Ok((0..self.n).map(|_| rng.random_range(lo..=hi)).collect()),
            FeasibleSet::UnitSpherePositive => {
                let normal = Normal::<f64>::new(0.0, 1.0).expect("unit normal");
                loop {
                    let z: Vec<f64> = (0..self.n).map(|_| normal.sample(rng).abs()).collect();
                    if z.iter().any(|&v| v > 0.0) {
                        return self.project(&z);
                    }
                }
            }
        }
    }

    /// Known Pareto front `f2 = φ(f1)` for the two-objective ZDT problems.
    pub fn analytic_front(&self, f1: f64) -> Option<f64> {
        let f1 = f1.clamp(0.0, 1.0);
        match self.id {
            ProblemId::Zdt1 => Some(1.0 - f1.sqrt()),
            ProblemId::Zdt2 => Some(1.0 - f1 * f1),
            _ => None,
        }
    }
}

fn project_sphere_positive(x: &[f64]) -> Result<Vec<f64>> {
    let mut y: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    if y.iter().all(|&v| v == 0.0) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::ProjectionUndefined(format!(
            "{x:?} has no positive part to scale onto the unit sphere"
        )));
    }
    // Renormalize until the computed norm is exactly one so that projecting
    // again is a no-op.
    for _ in 0..8 {
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 1.0 {
            break;
        }
        for v in y.iter_mut() {
            *v /= norm;
        }
    }
    Ok(y)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// Two-task synthetic regression used in place of image benchmarks.
#[derive(Clone, Debug, PartialEq)]
pub struct MtlLiteDataset {
    /// `N × d`, row-major.
    pub inputs: Vec<f64>,
    /// `N × m`, row-major; column `j` is task `j`.
    pub targets: Vec<f64>,
    pub split: Vec<Split>,
    pub n: usize,
    pub d: usize,
    pub m: usize,
}

pub const MTL_LITE_SAMPLES: usize = 2048;
pub const MTL_LITE_INPUT_DIM: usize = 5;
pub const MTL_LITE_NOISE: f64 = 0.05;
const MTL_LITE_VAL_FRACTION: f64 = 0.2;

/// Unit task directions 60° apart.
pub fn mtl_lite_directions() -> [[f64; MTL_LITE_INPUT_DIM]; 2] {
    let (s, c) = (60f64.to_radians().sin(), 60f64.to_radians().cos());
    [[1.0, 0.0, 0.0, 0.0, 0.0], [c, s, 0.0, 0.0, 0.0]]
}

/// `x ~ U[-1,1]^5`; `y1 = sin(π w1·x) + ε`, `y2 = (w2·x)² + ε`, `ε ~ N(0, 0.05²)`.
pub fn make_mtl_lite(seed: u64) -> MtlLiteDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, MTL_LITE_NOISE).expect("valid sigma");
    let [w1, w2] = mtl_lite_directions();
    let (n, d) = (MTL_LITE_SAMPLES, MTL_LITE_INPUT_DIM);
    let mut inputs = Vec::with_capacity(n * d);
    let mut targets = Vec::with_capacity(n * 2);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p1: f64 = x.iter().zip(&w1).map(|(a, b)| a * b).sum();
        let p2: f64 = x.iter().zip(&w2).map(|(a, b)| a * b).sum();
        targets.push((std::f64::consts::PI * p1).sin() + noise.sample(&mut rng));
        targets.push(p2 * p2 + noise.sample(&mut rng));
        inputs.extend(x);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = (n as f64 * MTL_LITE_VAL_FRACTION).round() as usize;
    let mut split = vec![Split::Train; n];
    for &i in &order[..n_val] {
        split[i] = Split::Val;
    }
    MtlLiteDataset {
        inputs,
        targets,
        split,
        n,
        d,
        m: 2,
    }
}

impl MtlLiteDataset {
    pub fn input_row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.d..(i + 1) * self.d]
    }

    pub fn target_row(&self, i: usize) -> &[f64] {
        &self.targets[i * self.m..(i + 1) * self.m]
    }

    pub fn indices(&self, which: Split) -> Vec<usize> {
        (0..self.n).filter(|&i| self.split[i] == which).collect()
    }

    /// Copy whose every task column equals column `task`.
    pub fn with_duplicated_task(&self, task: usize) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            let v = self.targets[i * self.m + task];
            for j in 0..self.m {
                out.targets[i * self.m + j] = v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn registry_round_trips_names() {
        for id in ProblemId::ALL {
            assert_eq!(id.name().parse::<ProblemId>().unwrap(), id);
        }
        assert!(matches!("zdt9".parse::<ProblemId>(), Err(Error::Unknown { .. })));
        assert!(ProblemSpec::new(ProblemId::MtlLite).is_err());
    }

    #[test]
    fn closed_form_values() {
        let ex72 = ProblemSpec::new(ProblemId::Ex72).unwrap();
        assert!(close(&ex72.evaluate_values(&[0.0, 0.0]).unwrap(), &[0.0, 1.0], 1e-15));
        let ex71 = ProblemSpec::new(ProblemId::Ex71).unwrap();
        assert!(close(&ex71.evaluate_values(&[1.0]).unwrap(), &[1.0, 0.0], 0.0));
    }

    /// Independent textbook ZDT/DTLZ code used as the cross-check.
    fn zdt_reference(x: &[f64], concave: bool) -> [f64; 2] {
        let n = x.len();
        let g = 1.0 + 9.0 * x[1..].iter().sum::<f64>() / (n as f64 - 1.0);
        let h = if concave {
            1.0 - (x[0] / g).powi(2)
        } else {
            1.0 - (x[0] / g).sqrt()
        };
        [x[0], g * h]
    }

    fn dtlz2_reference(x: &[f64]) -> [f64; 3] {
        let g: f64 = x[2..].iter().map(|v| (v - 0.5).powi(2)).sum();
        let (a, b) = (x[0] * FRAC_PI_2, x[1] * FRAC_PI_2);
        [
            (1.0 + g) * a.cos() * b.cos(),
            (1.0 + g) * a.cos() * b.sin(),
            (1.0 + g) * a.sin(),
        ]
    }

    #[test]
    fn zdt1_with_zero_tail() {
        let p = ProblemSpec::new(ProblemId::Zdt1).unwrap();
        let mut x = vec![0.0; 30];
        x[0] = 0.5;
        let f = p.evaluate_values(&x).unwrap();
        assert!(close(&f, &[0.5, 1.0 - 0.5f64.sqrt()], 1e-15));
        assert!(close(&f, &zdt_reference(&x, false), 1e-15));
        x[0] = 0.0;
        assert!(close(&p.evaluate_values(&x).unwrap(), &[0.0, 1.0], 0.0));
    }

    #[test]
    fn nonconvex_problems_match_reference_code() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z1 = ProblemSpec::new(ProblemId::Zdt1).unwrap();
        let z2 = ProblemSpec::new(ProblemId::Zdt2).unwrap();
        let d2 = ProblemSpec::new(ProblemId::Dtlz2).unwrap();
        for _ in 0..200 {
            let x = z1.random_feasible(&mut rng).unwrap();
            assert!(close(
                &z1.evaluate_values(&x).unwrap(),
                &zdt_reference(&x, false),
                1e-12
            ));
            assert!(close(&z2.evaluate_values(&x).unwrap(), &zdt_reference(&x, true), 1e-12));
            let y = d2.random_feasible(&mut rng).unwrap();
            assert!(close(&d2.evaluate_values(&y).unwrap(), &dtlz2_reference(&y), 1e-12));
        }
    }

    #[test]
    fn normalized_problems_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for id in [ProblemId::Ex71, ProblemId::Ex72, ProblemId::Ex73] {
            let p = ProblemSpec::new(id).unwrap();
            // ex7.3's third objective dips to -0.1/56 near x = (1, 0, 0).
            let lo = if id == ProblemId::Ex73 {
                -0.1 / 56.0 - 1e-12
            } else {
                0.0
            };
            for _ in 0..1000 {
                let x = p.random_feasible(&mut rng).unwrap();
                for f in p.evaluate_values(&x).unwrap() {
                    assert!((lo..=1.01).contains(&f), "{id}: f = {f} at {x:?}");
                }
            }
        }
    }

    #[test]
    fn projections() {
        let ex72 = ProblemSpec::new(ProblemId::Ex72).unwrap();
        assert_eq!(ex72.project(&[-1.0, 7.0]).unwrap(), vec![0.0, 5.0]);
        let ex73 = ProblemSpec::new(ProblemId::Ex73).unwrap();
        assert_eq!(ex73.project(&[2.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0]);
        let y = ex73.project(&[1.0, 1.0, 1.0]).unwrap();
        assert!(close(&y, &[1.0 / 3f64.sqrt(); 3], 1e-15));
        assert!(matches!(
            ex73.project(&[0.0, -1.0, 0.0]),
            Err(Error::ProjectionUndefined(_))
        ));
    }

    #[test]
    fn sphere_projection_is_nearest_point_on_a_grid() {
        // Brute force: the closest grid point on the positive unit sphere to
        // (1,1,1) lies within grid resolution of the projection.
        let ex73 = ProblemSpec::new(ProblemId::Ex73).unwrap();
        let target = [1.0, 1.0, 1.0];
        let steps = 200;
        let mut best = (f64::INFINITY, [0.0; 3]);
        for i in 0..=steps {
            for j in 0..=steps {
                let theta = FRAC_PI_2 * i as f64 / steps as f64;
                let phi = FRAC_PI_2 * j as f64 / steps as f64;
                let z = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
                let d: f64 = z.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum();
                if d < best.0 {
                    best = (d, z);
                }
            }
        }
        let y = ex73.project(&target).unwrap();
        assert!(close(&y, &best.1, 1e-2));
    }

    #[test]
    fn infeasible_strict_evaluation() {
        let ex71 = ProblemSpec::new(ProblemId::Ex71).unwrap();
        match ex71.evaluate_strict(&[1.5], 0.0) {
            Err(Error::Infeasible { violation }) => assert!((violation - 0.5).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        assert!(ex71.evaluate_strict(&[0.5], 0.0).is_ok());
    }

    #[test]
    fn mtl_lite_properties() {
        let a = make_mtl_lite(0);
        let b = make_mtl_lite(0);
        assert_eq!(a, b);
        assert_ne!(a, make_mtl_lite(1));
        assert_eq!(a.n, 2048);
        assert!(a.inputs.iter().chain(&a.targets).all(|v| v.is_finite()));
        for j in 0..a.d {
            let mean = (0..a.n).map(|i| a.input_row(i)[j]).sum::<f64>() / a.n as f64;
            assert!(mean.abs() <= 0.05, "column {j} mean {mean}");
        }
        let val = a.indices(Split::Val).len();
        assert!(val > 300 && val < 500);
        let dup = a.with_duplicated_task(0);
        assert!((0..dup.n).all(|i| dup.target_row(i)[0] == dup.target_row(i)[1]));
    }

    proptest::proptest! {
        #[test]
        fn projection_is_idempotent(x in proptest::collection::vec(-3.0f64..3.0, 3)) {
            let ex72 = ProblemSpec::new(ProblemId::Ex72).unwrap();
            let y = ex72.project(&x[..2]).unwrap();
            proptest::prop_assert_eq!(ex72.project(&y).unwrap(), y);
            let ex73 = ProblemSpec::new(ProblemId::Ex73).unwrap();
            if x.iter().any(|&v| v > 0.0) {
                let y = ex73.project(&x).unwrap();
                proptest::prop_assert_eq!(ex73.project(&y).unwrap(), y);
            }
        }
    }
}
