//! Principal-component projection checked against a dense symmetric eigensolver.

use docclust::cluster_eval::{principal_components, project_2d};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sample(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    // axis scales with clear gaps, then a random orthogonal rotation
    let scales: Vec<f64> = (0..d).map(|k| 3.0 / (1.0 + k as f64)).collect();
    let raw = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    let q = raw.qr().q();
    let offset: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect();
    (0..n)
        .map(|_| {
            let x: Vec<f64> = scales
                .iter()
                .map(|s| s * rng.gen_range(-1.0..1.0))
                .collect();
            (0..d)
                .map(|i| offset[i] + (0..d).map(|j| q[(i, j)] * x[j]).sum::<f64>())
                .collect()
        })
        .collect()
}

fn oracle(points: &[Vec<f64>]) -> (Vec<(f64, Vec<f64>)>, Vec<f64>) {
    let n = points.len();
    let d = points[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n as f64)
        .collect();
    let x = DMatrix::from_fn(n, d, |i, j| points[i][j] - mean[j]);
    let cov = (x.transpose() * &x) / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..d)
        .map(|k| {
            (
                eig.eigenvalues[k],
                eig.eigenvectors.column(k).iter().copied().collect(),
            )
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    (pairs, mean)
}

#[test]
fn matches_eigendecomposition() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..20 {
        let d = 2 + trial % 6;
        let points = sample(&mut rng, 200, d);
        let ([v1, v2], [l1, l2], _) = principal_components(&points).unwrap();
        let (pairs, mean) = oracle(&points);
        assert!(
            (l1 - pairs[0].0).abs() < 1e-6 * pairs[0].0.max(1.0),
            "trial {trial}"
        );
        assert!(
            (l2 - pairs[1].0).abs() < 1e-6 * pairs[0].0.max(1.0),
            "trial {trial}"
        );
        let coords = project_2d(&points).unwrap();
        for (axis, v) in [&v1, &v2].into_iter().enumerate() {
            let u = &pairs[axis].1;
            let dot: f64 = u.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            assert!(
                (dot.abs() - 1.0).abs() < 1e-6,
                "trial {trial} axis {axis}: {dot}"
            );
            let sign = dot.signum();
            for (p, c) in points.iter().zip(&coords) {
                let want: f64 = p
                    .iter()
                    .zip(&mean)
                    .zip(u)
                    .map(|((x, m), e)| (x - m) * e)
                    .sum::<f64>()
                    * sign;
                assert!((c[axis] - want).abs() < 1e-6, "trial {trial} axis {axis}");
            }
        }
    }
}

#[test]
fn leading_loading_is_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let points = sample(&mut rng, 100, 4);
    let ([v1, v2], _, _) = principal_components(&points).unwrap();
    for v in [v1, v2] {
        let lead = v
            .iter()
            .copied()
            .fold(0.0f64, |b, x| if x.abs() > b.abs() { x } else { b });
        assert!(lead > 0.0);
    }
}
