//! Front quality metrics: mean Euclidean distance and hypervolume.

use rand::Rng;

use crate::error::{Error, Result};

/// True when `a` is no worse than `b` everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
}

/// Indices of the non-dominated points, in input order. Among exact
/// duplicates only the first is kept.
pub fn pareto_filter_indices(points: &[Vec<f64>]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| {
            let p = &points[i];
            points.iter().enumerate().all(|(j, q)| {
                if j == i {
                    return true;
                }
                if q == p {
                    return j > i;
                }
                !dominates(q, p)
            })
        })
        .collect()
}

pub fn pareto_filter(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    pareto_filter_indices(points)
        .into_iter()
        .map(|i| points[i].clone())
        .collect()
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Per-pair Euclidean distances between index-aligned fronts.
pub fn distances(predicted: &[Vec<f64>], target: &[Vec<f64>]) -> Result<Vec<f64>> {
    if predicted.len() != target.len() {
        return Err(Error::Shape {
            op: "med",
            lhs: vec![predicted.len()],
            rhs: vec![target.len()],
        });
    }
    predicted
        .iter()
        .zip(target)
        .map(|(p, t)| {
            if p.len() != t.len() {
                Err(Error::Shape {
                    op: "med",
                    lhs: vec![p.len()],
                    rhs: vec![t.len()],
                })
            } else {
                Ok(euclid(p, t))
            }
        })
        .collect()
}

/// Mean Euclidean distance between index-aligned fronts.
pub fn med(predicted: &[Vec<f64>], target: &[Vec<f64>]) -> Result<f64> {
    if predicted.is_empty() {
        return Err(Error::Contract("med of an empty front".into()));
    }
    let d = distances(predicted, target)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn check_points(points: &[Vec<f64>], reference: &[f64]) -> Result<()> {
    if let Some(bad) = points.iter().find(|p| p.len() != reference.len()) {
        return Err(Error::Shape {
            op: "hypervolume",
            lhs: vec![reference.len()],
            rhs: vec![bad.len()],
        });
    }
    if points.iter().flatten().chain(reference).any(|v| !v.is_finite()) {
        return Err(Error::Contract("hypervolume needs finite coordinates".into()));
    }
    Ok(())
}

fn strictly_inside(points: &[Vec<f64>], reference: &[f64]) -> Vec<Vec<f64>> {
    points
        .iter()
        .filter(|p| p.iter().zip(reference).all(|(x, r)| x < r))
        .cloned()
        .collect()
}

fn sweep_2d(points: &mut [[f64; 2]], reference: [f64; 2]) -> f64 {
    points.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut ceiling = reference[1];
    let mut area = 0.0;
    for p in points.iter() {
        if p[1] < ceiling {
            area += (reference[0] - p[0]) * (ceiling - p[1]);
            ceiling = p[1];
        }
    }
    area
}

/// Exact hypervolume dominated by `points` and bounded by `reference`,
/// for two or three objectives. Points not strictly better than the
/// reference in every coordinate contribute nothing.
pub fn hypervolume(points: &[Vec<f64>], reference: &[f64]) -> Result<f64> {
    check_points(points, reference)?;
    let inside = strictly_inside(points, reference);
    match reference.len() {
        2 => {
            let mut pts: Vec<[f64; 2]> = inside.iter().map(|p| [p[0], p[1]]).collect();
            Ok(sweep_2d(&mut pts, [reference[0], reference[1]]))
        }
        3 => {
            let mut pts = pareto_filter(&inside);
            pts.sort_by(|a, b| a[2].total_cmp(&b[2]));
            let mut volume = 0.0;
            for (k, p) in pts.iter().enumerate() {
                let top = pts.get(k + 1).map_or(reference[2], |q| q[2]);
                let depth = top - p[2];
                if depth <= 0.0 {
                    continue;
                }
                let mut slice: Vec<[f64; 2]> = pts[..=k].iter().map(|q| [q[0], q[1]]).collect();
                volume += depth * sweep_2d(&mut slice, [reference[0], reference[1]]);
            }
            Ok(volume)
        }
        m => Err(Error::Unsupported(format!(
            "exact hypervolume is implemented for 2 or 3 objectives, got {m}; use the Monte Carlo estimator"
        ))),
    }
}

/// Monte Carlo hypervolume estimate with its standard error, for any number
/// of objectives.
pub fn hypervolume_mc<R: Rng + ?Sized>(
    points: &[Vec<f64>],
    reference: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    check_points(points, reference)?;
    if samples == 0 {
        return Err(Error::Contract(
            "Monte Carlo hypervolume needs at least one sample".into(),
        ));
    }
    let inside = strictly_inside(points, reference);
    if inside.is_empty() {
        return Ok((0.0, 0.0));
    }
    let m = reference.len();
    let lower: Vec<f64> = (0..m)
        .map(|d| inside.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min))
        .collect();
    let box_volume: f64 = lower.iter().zip(reference).map(|(l, r)| r - l).product();
    let mut sample = vec![0.0; m];
    let mut hits = 0usize;
    for _ in 0..samples {
        for d in 0..m {
            sample[d] = lower[d] + rng.random::<f64>() * (reference[d] - lower[d]);
        }
        if inside.iter().any(|p| p.iter().zip(&sample).all(|(a, s)| a <= s)) {
            hits += 1;
        }
    }
    let frac = hits as f64 / samples as f64;
    let stderr = (frac * (1.0 - frac) / samples as f64).sqrt();
    Ok((frac * box_volume, stderr * box_volume))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn med_examples() {
        let a = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let b = vec![vec![3.0, 4.0], vec![1.0, 1.0]];
        assert_eq!(med(&a, &b).unwrap(), 2.5);
        assert_eq!(med(&a, &a).unwrap(), 0.0);
        assert!(matches!(med(&a, &b[..1]), Err(Error::Shape { .. })));
    }

    #[test]
    fn hypervolume_examples() {
        assert_eq!(hypervolume(&[vec![0.5, 0.5]], &[2.0, 2.0]).unwrap(), 2.25);
        let two = hypervolume(&[vec![0.2, 0.8], vec![0.8, 0.2]], &[1.0, 1.0]).unwrap();
        assert!((two - 0.28).abs() < 1e-15);
        let dup = hypervolume(
            &[vec![0.2, 0.8], vec![0.8, 0.2], vec![0.2, 0.8], vec![0.5, 0.9]],
            &[1.0, 1.0],
        )
        .unwrap();
        assert_eq!(dup, two);
        assert_eq!(hypervolume(&[vec![1.0, 0.5]], &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(hypervolume(&[], &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(hypervolume(&[vec![1.0, 1.0, 1.0]], &[2.0, 2.0, 2.0]).unwrap(), 1.0);
        let l = hypervolume(&[vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 0.0]], &[2.0, 2.0, 2.0]).unwrap();
        // 2*1*1 + 1*2*2 - overlap 1*1*1
        assert!((l - 5.0).abs() < 1e-15, "{l}");
    }

    #[test]
    fn four_objectives_are_unsupported_exactly() {
        let err = hypervolume(&[vec![0.5; 4]], &[1.0; 4]).unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (est, se) = hypervolume_mc(&[vec![0.5; 4]], &[1.0; 4], 1000, &mut rng).unwrap();
        assert_eq!(est, 0.0625);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn pareto_filter_keeps_first_duplicate() {
        let pts = vec![
            vec![0.5, 0.5],
            vec![0.2, 0.9],
            vec![0.5, 0.5],
            vec![0.6, 0.6],
            vec![0.9, 0.1],
        ];
        assert_eq!(pareto_filter_indices(&pts), vec![0, 1, 4]);
    }

    #[test]
    fn exact_hypervolume_agrees_with_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        for case in 0..50 {
            let m = 2 + case % 2;
            let n = rng.random_range(1..12);
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..m).map(|_| rng.random_range(0.0..1.2)).collect())
                .collect();
            let reference = vec![1.0; m];
            let exact = hypervolume(&pts, &reference).unwrap();
            let (est, se) = hypervolume_mc(&pts, &reference, 20_000, &mut rng).unwrap();
            assert!(
                (exact - est).abs() <= 3.0 * se + 1e-12,
                "case {case}: exact {exact}, mc {est} ± {se}"
            );
        }
    }

    proptest::proptest! {
        #[test]
        fn adding_a_point_never_shrinks_hypervolume(
            pts in proptest::collection::vec(proptest::collection::vec(0.0f64..1.5, 3), 0..10),
            extra in proptest::collection::vec(0.0f64..1.5, 3),
        ) {
            let reference = [1.0, 1.0, 1.0];
            let before = hypervolume(&pts, &reference).unwrap();
            let mut more = pts.clone();
            more.push(extra);
            let after = hypervolume(&more, &reference).unwrap();
            proptest::prop_assert!(after >= before - 1e-12);
        }

        #[test]
        fn pareto_filter_output_is_mutually_non_dominated(
            pts in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 2), 0..20),
        ) {
            let kept = pareto_filter(&pts);
            for a in &kept {
                for b in &kept {
                    proptest::prop_assert!(!dominates(a, b));
                }
            }
        }
    }

    /// Exact volume of the union of boxes `[p, reference]` by summing the
    /// cells of the grid spanned by every point coordinate.
    fn cell_volume(points: &[Vec<f64>], reference: &[f64]) -> f64 {
        let m = reference.len();
        let axes: Vec<Vec<f64>> = (0..m)
            .map(|d| {
                let mut v: Vec<f64> = points.iter().map(|p| p[d]).filter(|&x| x < reference[d]).collect();
                v.push(reference[d]);
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            })
            .collect();
        let mut total = 0.0;
        let mut idx = vec![0usize; m];
        loop {
            if idx.iter().zip(&axes).all(|(&i, a)| i + 1 < a.len()) {
                let corner: Vec<f64> = idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect();
                let covered = points
                    .iter()
                    .any(|p| p.iter().zip(&corner).zip(reference).all(|((x, c), r)| x <= c && x < r));
                if covered {
                    total += idx.iter().zip(&axes).map(|(&i, a)| a[i + 1] - a[i]).product::<f64>();
                }
            }
            let mut d = 0;
            while d < m {
                idx[d] += 1;
                if idx[d] < axes[d].len() {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == m {
                return total;
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn sweep_matches_cell_decomposition(
            pts in proptest::collection::vec(proptest::collection::vec(0.0f64..1.2, 3), 0..12),
            two_d in proptest::bool::ANY,
        ) {
            let pts: Vec<Vec<f64>> = if two_d { pts.iter().map(|p| p[..2].to_vec()).collect() } else { pts };
            let reference = if two_d { vec![1.0; 2] } else { vec![1.0; 3] };
            let exact = hypervolume(&pts, &reference).unwrap();
            proptest::prop_assert!((exact - cell_volume(&pts, &reference)).abs() <= 1e-12);
        }
    }
}
