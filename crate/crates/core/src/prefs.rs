//! Preference vectors: Dirichlet draws for training and the Das–Dennis
//! simplex lattice for evaluation.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to every Dirichlet coordinate.
pub const DIRICHLET_FLOOR: f64 = 1e-6;

const SUM_TOL: f64 = 1e-12;

/// A point on the open probability simplex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PreferenceVector(Vec<f64>);

impl PreferenceVector {
    /// Validates `Σ r = 1` (within 1e-12) and `r > 0`.
    pub fn new(r: Vec<f64>) -> Result<Self> {
        if r.len() < 2 {
            return Err(Error::Simplex(format!("need at least 2 coordinates, got {}", r.len())));
        }
        if let Some((i, v)) = r.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Simplex(format!("coordinate {i} = {v} is not strictly positive")));
        }
        let s: f64 = r.iter().sum();
        if (s - 1.0).abs() > SUM_TOL {
            return Err(Error::Simplex(format!("coordinates sum to {s}, not 1")));
        }
        Ok(Self(r))
    }

    /// Scales a positive vector onto the simplex.
    pub fn normalized(r: &[f64]) -> Result<Self> {
        let s: f64 = r.iter().sum();
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::Simplex(format!("cannot normalize {r:?}")));
        }
        Self::new(renormalize(r.iter().map(|v| v / s).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl TryFrom<Vec<f64>> for PreferenceVector {
    type Error = Error;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<PreferenceVector> for Vec<f64> {
    fn from(value: PreferenceVector) -> Self {
        value.0
    }
}

/// Pushes the rounding residue of a normalized vector into its largest entry
/// so the sum is 1 to within a few ulps.
fn renormalize(mut r: Vec<f64>) -> Vec<f64> {
    let s: f64 = r.iter().sum();
    let big = r
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    r[big] += 1.0 - s;
    r
}

/// Clamps every coordinate up to `floor` and rescales the unclamped mass so
/// the total stays 1. Repeats until no coordinate falls under the floor.
pub(crate) fn clamp_to_floor(mut r: Vec<f64>, floor: f64) -> Vec<f64> {
    let m = r.len();
    let mut clamped = vec![false; m];
    loop {
        let mut changed = false;
        for (v, c) in r.iter_mut().zip(clamped.iter_mut()) {
            if !*c && *v < floor {
                *v = floor;
                *c = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let fixed = floor * clamped.iter().filter(|c| **c).count() as f64;
        let free: f64 = r.iter().zip(&clamped).filter(|(_, c)| !**c).map(|(v, _)| v).sum();
        if free <= 0.0 {
            break;
        }
        let scale = (1.0 - fixed) / free;
        for (v, c) in r.iter_mut().zip(&clamped) {
            if !*c {
                *v *= scale;
            }
        }
    }
    renormalize(r)
}

/// Symmetric Dirichlet(α, …, α) draw via normalized Gamma variates, with
/// every coordinate floored at [`DIRICHLET_FLOOR`].
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: f64, m: usize, rng: &mut R) -> Result<PreferenceVector> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Contract(format!(
            "Dirichlet alpha must be positive, got {alpha}"
        )));
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::Contract(e.to_string()))?;
    let g: Vec<f64> = (0..m).map(|_| gamma.sample(rng)).collect();
    let s: f64 = g.iter().sum();
    let raw = if s > 0.0 && s.is_finite() {
        g.into_iter().map(|v| v / s).collect()
    } else {
        vec![1.0 / m as f64; m]
    };
    PreferenceVector::new(clamp_to_floor(raw, DIRICHLET_FLOOR))
}

/// Every point `{i/k}` on the `m`-simplex, in lexicographic order.
///
/// Boundary points carry zero coordinates, so they are returned as raw
/// vectors rather than [`PreferenceVector`]s.
pub fn das_dennis(m: usize, k: usize) -> Result<Vec<Vec<f64>>> {
    if k == 0 {
        return Err(Error::Contract("das-dennis needs at least one partition".into()));
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(m);
    lattice(m, k, k, &mut current, &mut out);
    Ok(out)
}

fn lattice(m: usize, k: usize, left: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
    if current.len() == m - 1 {
        current.push(left);
        out.push(current.iter().map(|&i| i as f64 / k as f64).collect());
        current.pop();
        return;
    }
    for i in 0..=left {
        current.push(i);
        lattice(m, k, left - i, current, out);
        current.pop();
    }
}

/// Keeps the vectors whose every coordinate exceeds `eps`.
pub fn filter_min_coord(list: &[Vec<f64>], eps: f64) -> Vec<Vec<f64>> {
    list.iter().filter(|r| r.iter().all(|&v| v > eps)).cloned().collect()
}

/// Default coordinate filter for evaluation rays.
pub fn default_eps(m: usize) -> f64 {
    if m <= 2 {
        1e-3
    } else {
        0.16
    }
}

/// Exactly `count` evenly spread interior lattice rays.
///
/// For `m = 2` this is the lattice with `count + 1` partitions minus its two
/// endpoints. For larger `m` the smallest lattice holding at least `count`
/// rays after the `eps` filter is thinned to `count` evenly spaced entries.
pub fn interior_rays(m: usize, count: usize, eps: f64) -> Result<Vec<PreferenceVector>> {
    if count == 0 {
        return Err(Error::Contract("need at least one ray".into()));
    }
    if m < 2 {
        return Err(Error::Contract(format!("need at least 2 objectives, got {m}")));
    }
    if eps * m as f64 >= 1.0 {
        return Err(Error::Contract(format!(
            "eps {eps} leaves no interior rays for m = {m}"
        )));
    }
    let mut k = if m == 2 { count + 1 } else { m };
    let pool = loop {
        let pool = filter_min_coord(&das_dennis(m, k)?, eps);
        if pool.len() >= count {
            break pool;
        }
        k += 1;
    };
    let picked: Vec<&Vec<f64>> = if pool.len() == count {
        pool.iter().collect()
    } else {
        (0..count)
            .map(|i| &pool[(i * (pool.len() - 1)) / (count - 1).max(1)])
            .collect()
    };
    picked.into_iter().map(|r| PreferenceVector::normalized(r)).collect()
}

/// Binomial coefficient `C(n, k)`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dirichlet_draws_are_on_the_floored_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &alpha in &[0.05, 0.2, 0.6, 5.0] {
            for m in 2..5 {
                for _ in 0..2000 {
                    let r = sample_dirichlet(alpha, m, &mut rng).unwrap();
                    let s: f64 = r.as_slice().iter().sum();
                    assert!((s - 1.0).abs() <= 1e-12);
                    assert!(r.as_slice().iter().all(|&v| v >= DIRICHLET_FLOOR), "{r:?}");
                }
            }
        }
    }

    #[test]
    fn dirichlet_symmetric_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| sample_dirichlet(0.6, 2, &mut rng).unwrap().as_slice()[0])
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() <= 0.01, "mean {mean}");
    }

    #[test]
    fn dirichlet_is_deterministic_per_seed() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| sample_dirichlet(0.6, 3, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert_ne!(draw(9), draw(10));
    }

    #[test]
    fn das_dennis_small_cases() {
        assert_eq!(
            das_dennis(2, 4).unwrap(),
            vec![
                vec![0.0, 1.0],
                vec![0.25, 0.75],
                vec![0.5, 0.5],
                vec![0.75, 0.25],
                vec![1.0, 0.0]
            ]
        );
        assert_eq!(das_dennis(2, 1).unwrap(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(das_dennis(3, 10).unwrap().len(), 66);
        assert!(das_dennis(3, 0).is_err());
    }

    #[test]
    fn das_dennis_count_is_binomial() {
        for m in 2..=4 {
            for k in 1..=12 {
                let pts = das_dennis(m, k).unwrap();
                assert_eq!(pts.len(), binomial(m + k - 1, k), "m={m} k={k}");
                for p in &pts {
                    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
                let mut sorted = pts.clone();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                assert_eq!(sorted, pts);
            }
        }
    }

    #[test]
    fn filter_cases() {
        let lattice = das_dennis(3, 10).unwrap();
        // Every coordinate >= 0.2 on the 1/10 lattice: compositions of 4 into 3 parts.
        assert_eq!(filter_min_coord(&lattice, 0.16).len(), binomial(6, 2));
        let interior = filter_min_coord(&lattice, 0.0);
        assert_eq!(interior.len(), binomial(9, 2));
        assert!(interior.iter().all(|r| r.iter().all(|&v| v > 0.0)));
        assert!(filter_min_coord(&lattice, 1.0 / 3.0).is_empty());
        assert!(filter_min_coord(&das_dennis(2, 7).unwrap(), 0.5).is_empty());
    }

    #[test]
    fn interior_rays_counts() {
        for &n in &[1usize, 5, 10, 50, 100] {
            let rays = interior_rays(2, n, 1e-3).unwrap();
            assert_eq!(rays.len(), n);
        }
        let rays = interior_rays(2, 3, 1e-3).unwrap();
        assert_eq!(rays[1].as_slice(), &[0.5, 0.5]);
        assert_eq!(interior_rays(3, 10, 0.16).unwrap().len(), 10);
        let rays = interior_rays(3, 100, 0.16).unwrap();
        assert_eq!(rays.len(), 100);
        assert!(rays.iter().all(|r| r.as_slice().iter().all(|&v| v > 0.16)));
    }

    #[test]
    fn preference_vector_rejects_boundary() {
        assert!(matches!(PreferenceVector::new(vec![0.0, 1.0]), Err(Error::Simplex(_))));
        assert!(PreferenceVector::new(vec![0.5, 0.6]).is_err());
        assert!(PreferenceVector::new(vec![0.25, 0.75]).is_ok());
        let n = PreferenceVector::normalized(&[2.0, 2.0]).unwrap();
        assert_eq!(n.as_slice(), &[0.5, 0.5]);
    }
}
