//! Clustering of learned representations and its evaluation against true classes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            tol: 1e-6,
            max_iter: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// Cluster of each input point, in input order.
    pub clusters: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squared distances of the final assignment.
    pub wcss: f64,
    /// WCSS after each assignment step of the winning run.
    pub history: Vec<f64>,
}

impl ClusterAssignment {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid (lowest index on ties) and the squared distance.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn kmeans_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.gen_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            // floating-point leftovers: fall back to the last point with positive weight
            if d2[pick] == 0.0 {
                pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        let c = points[next].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>, f64) {
    let mut clusters = Vec::with_capacity(points.len());
    let mut dists = Vec::with_capacity(points.len());
    for p in points {
        let (k, d) = nearest(p, centroids);
        clusters.push(k);
        dists.push(d);
    }
    let wcss = dists.iter().sum();
    (clusters, dists, wcss)
}

fn lloyd(
    points: &[Vec<f64>],
    k: usize,
    cfg: &KMeansConfig,
    rng: &mut impl Rng,
) -> ClusterAssignment {
    let dim = points[0].len();
    let mut centroids = kmeans_plus_plus(points, k, rng);
    let mut history = Vec::new();
    for _ in 0..cfg.max_iter {
        let (clusters, dists, wcss) = assign(points, &centroids);
        history.push(wcss);

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&clusters) {
            counts[c] += 1;
            sums[c].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        let mut next: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .zip(&centroids)
            .map(|((s, &n), old)| {
                if n == 0 {
                    old.clone()
                } else {
                    s.into_iter().map(|x| x / n as f64).collect()
                }
            })
            .collect();

        // Empty clusters take the points farthest from their current centroid.
        let mut taken = vec![false; points.len()];
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let far = dists.iter().enumerate().filter(|&(i, _)| !taken[i]).fold(
                None,
                |best: Option<(usize, f64)>, (i, &d)| match best {
                    Some((_, bd)) if bd >= d => best,
                    _ => Some((i, d)),
                },
            );
            if let Some((i, _)) = far {
                taken[i] = true;
                next[c] = points[i].clone();
            }
        }

        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift < cfg.tol {
            break;
        }
    }
    let (clusters, _, wcss) = assign(points, &centroids);
    ClusterAssignment {
        clusters,
        centroids,
        wcss,
        history,
    }
}

/// k-means++ seeding followed by Lloyd iterations; the run with the lowest WCSS among
/// `restarts` wins, earlier restarts winning ties.
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    cfg: &KMeansConfig,
) -> Result<ClusterAssignment> {
    if k == 0 {
        return Err(Error::Cluster("k must be >= 1".into()));
    }
    if points.len() < k {
        return Err(Error::Cluster(format!(
            "{} points for k = {k}",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::ShapeMismatch("points differ in dimension".into()));
    }
    let mut best: Option<ClusterAssignment> = None;
    for restart in 0..cfg.restarts.max(1) {
        let mut rng = seeding::stream(seed, "kmeans", restart as u64);
        let run = lloyd(points, k, cfg, &mut rng);
        if best.as_ref().is_none_or(|b| run.wcss < b.wcss) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// `counts[k][c]`: documents in cluster `k` whose true class is `c`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn column_sums(&self) -> Vec<u64> {
        let cols = self.counts.first().map_or(0, Vec::len);
        (0..cols)
            .map(|c| self.counts.iter().map(|r| r[c]).sum())
            .collect()
    }
}

pub fn confusion_matrix(
    clusters: &[usize],
    k: usize,
    labels: &[Option<usize>],
    classes: usize,
) -> Result<ConfusionMatrix> {
    if clusters.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} assignments vs {} labels",
            clusters.len(),
            labels.len()
        )));
    }
    let mut counts = vec![vec![0u64; classes]; k];
    for (i, (&cl, label)) in clusters.iter().zip(labels).enumerate() {
        let c = label.ok_or_else(|| Error::MissingLabel(format!("#{i}")))?;
        if cl >= k || c >= classes {
            return Err(Error::Cluster(format!(
                "document #{i}: cluster {cl} / class {c} out of range"
            )));
        }
        counts[cl][c] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Maximum-weight one-to-one matching of rows to columns (Hungarian algorithm on the
/// zero-padded square matrix). Returns, per row, the matched column (None when matched
/// to padding) and the matched total.
pub fn hungarian_max_matching(matrix: &[Vec<u64>]) -> (Vec<Option<usize>>, u64) {
    let rows = matrix.len();
    let cols = matrix.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    if n == 0 {
        return (vec![], 0);
    }
    let value = |r: usize, c: usize| -> i64 {
        if r < rows && c < cols {
            matrix[r][c] as i64
        } else {
            0
        }
    };
    let max = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .map(|(r, c)| value(r, c))
        .max()
        .unwrap_or(0);
    let cost = |r: usize, c: usize| max - value(r, c);

    // Shortest augmenting path with potentials; 1-based with a virtual column 0.
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for r in 1..=n {
        row_of[0] = r;
        let mut col = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col] = true;
            let r0 = row_of[col];
            let mut delta = i64::MAX;
            let mut next = 0;
            for c in 1..=n {
                if used[c] {
                    continue;
                }
                let cur = cost(r0 - 1, c - 1) - u[r0] - v[c];
                if cur < minv[c] {
                    minv[c] = cur;
                    way[c] = col;
                }
                if minv[c] < delta {
                    delta = minv[c];
                    next = c;
                }
            }
            for c in 0..=n {
                if used[c] {
                    u[row_of[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            col = next;
            if row_of[col] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col];
            row_of[col] = row_of[prev];
            col = prev;
            if col == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![None; rows];
    let mut matched = 0u64;
    for c in 1..=n {
        let r = row_of[c] - 1;
        if r < rows && c - 1 < cols {
            assignment[r] = Some(c - 1);
            matched += matrix[r][c - 1];
        }
    }
    (assignment, matched)
}

/// Accuracy under the optimal cluster ↔ class matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub matching: Vec<Option<usize>>,
    pub matched: u64,
    pub total: u64,
}

pub fn metrics_from_confusion(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Cluster("no documents to score".into()));
    }
    let (matching, matched) = hungarian_max_matching(&cm.counts);
    Ok(Metrics {
        accuracy: matched as f64 / total as f64,
        matching,
        matched,
        total,
    })
}

pub fn clustering_accuracy(
    clusters: &[usize],
    k: usize,
    labels: &[Option<usize>],
    classes: usize,
) -> Result<f64> {
    let cm = confusion_matrix(clusters, k, labels, classes)?;
    Ok(metrics_from_confusion(&cm)?.accuracy)
}

const POWER_TOL: f64 = 1e-9;
const POWER_MAX_ITER: usize = 100_000;

fn mat_vec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn normalize(x: &mut [f64]) -> f64 {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
    n
}

/// Leading eigenpair of a symmetric positive semi-definite matrix.
fn power_iteration(m: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let d = m.len();
    // start from the column with the largest norm: it lies in the range of m
    let mut x = (0..d)
        .map(|j| m.iter().map(|r| r[j]).collect::<Vec<f64>>())
        .max_by(|a, b| {
            let na: f64 = a.iter().map(|v| v * v).sum();
            let nb: f64 = b.iter().map(|v| v * v).sum();
            na.total_cmp(&nb)
        })
        .unwrap_or_default();
    if normalize(&mut x) == 0.0 {
        return (0.0, x);
    }
    for _ in 0..POWER_MAX_ITER {
        let mut y = mat_vec(m, &x);
        if normalize(&mut y) == 0.0 {
            return (0.0, x);
        }
        let delta = y
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        x = y;
        if delta < POWER_TOL {
            break;
        }
    }
    let lambda = x.iter().zip(mat_vec(m, &x)).map(|(a, b)| a * b).sum();
    (lambda, x)
}

fn fix_sign(v: &mut [f64]) {
    let lead = v.iter().copied().fold(
        0.0f64,
        |best, x| if x.abs() > best.abs() { x } else { best },
    );
    if lead < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// `([v1, v2], [λ1, λ2], mean)`.
pub type PrincipalComponents = ([Vec<f64>; 2], [f64; 2], Vec<f64>);

/// Top two principal directions of the centered data, by power iteration with deflation.
pub fn principal_components(points: &[Vec<f64>]) -> Result<PrincipalComponents> {
    if points.len() < 2 {
        return Err(Error::Cluster("projection needs at least 2 points".into()));
    }
    let d = points[0].len();
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(Error::ShapeMismatch("inconsistent point dimensions".into()));
    }
    let n = points.len() as f64;
    let mut mean = vec![0.0; d];
    for p in points {
        mean.iter_mut().zip(p).for_each(|(m, x)| *m += x / n);
    }
    let mut cov = vec![vec![0.0; d]; d];
    for p in points {
        let c: Vec<f64> = p.iter().zip(&mean).map(|(x, m)| x - m).collect();
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += c[i] * c[j] / n;
            }
        }
    }

    let (l1, mut v1) = power_iteration(&cov);
    if l1.is_nan() || l1 <= 1e-300 {
        return Err(Error::Cluster("data has rank 0".into()));
    }
    fix_sign(&mut v1);
    for i in 0..d {
        for j in 0..d {
            cov[i][j] -= l1 * v1[i] * v1[j];
        }
    }
    let (mut l2, mut v2) = power_iteration(&cov);
    // remove leftover overlap with the first direction
    let overlap: f64 = v2.iter().zip(&v1).map(|(a, b)| a * b).sum();
    v2.iter_mut().zip(&v1).for_each(|(a, b)| *a -= overlap * b);
    if normalize(&mut v2) < 1e-12 {
        // rank-1 data: any unit vector orthogonal to v1
        v2 = (0..d)
            .map(|k| {
                let mut e: Vec<f64> = (0..d).map(|i| if i == k { 1.0 } else { 0.0 }).collect();
                let o = v1[k];
                e.iter_mut().zip(&v1).for_each(|(a, b)| *a -= o * b);
                e
            })
            .max_by(|a, b| {
                let na: f64 = a.iter().map(|v| v * v).sum();
                let nb: f64 = b.iter().map(|v| v * v).sum();
                na.total_cmp(&nb)
            })
            .unwrap_or_default();
        normalize(&mut v2);
        l2 = 0.0;
    }
    fix_sign(&mut v2);
    Ok(([v1, v2], [l1, l2.max(0.0)], mean))
}

/// Mean-centered coordinates on the top two principal directions.
pub fn project_2d(points: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    let ([v1, v2], _, mean) = principal_components(points)?;
    Ok(points
        .iter()
        .map(|p| {
            let c: Vec<f64> = p.iter().zip(&mean).map(|(x, m)| x - m).collect();
            [
                c.iter().zip(&v1).map(|(a, b)| a * b).sum(),
                c.iter().zip(&v2).map(|(a, b)| a * b).sum(),
            ]
        })
        .collect())
}
