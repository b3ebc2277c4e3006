//! k-means over feature vectors: k-means++ seeding, Lloyd iterations,
//! best-of-restarts by inertia, and elbow-based choice of k.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, MctError, Result};
use crate::rng::{derive_seed, stage, SplitMix64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub n_init: usize,
    pub max_iter: usize,
    /// Convergence threshold on the summed squared centroid shift, relative
    /// to the mean per-dimension variance of the data.
    pub tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            n_init: 10,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid and its squared distance; ties go to the lower index.
fn nearest(centroids: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(centroid, p);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

pub fn kmeans_assign(model: &ClusterModel, point: &[f64]) -> Result<usize> {
    let dim = model.centroids.first().map_or(0, Vec::len);
    check_len("k-means query point", dim, point.len())?;
    Ok(nearest(&model.centroids, point).0)
}

pub fn kmeans_assign_all(model: &ClusterModel, points: &[Vec<f64>]) -> Result<Vec<usize>> {
    points.iter().map(|p| kmeans_assign(model, p)).collect()
}

/// Sum of squared distances to the nearest centroid.
pub fn inertia(centroids: &[Vec<f64>], points: &[Vec<f64>]) -> f64 {
    points.iter().map(|p| nearest(centroids, p).1).sum()
}

fn validate_points(points: &[Vec<f64>], k: usize) -> Result<usize> {
    if k == 0 {
        return Err(MctError::param("k must be at least 1"));
    }
    if points.len() < k {
        return Err(MctError::param(format!(
            "need at least k={k} points, got {}",
            points.len()
        )));
    }
    let dim = points[0].len();
    for p in points {
        check_len("k-means point", dim, p.len())?;
    }
    Ok(dim)
}

fn mean_variance(points: &[Vec<f64>]) -> f64 {
    let n = points.len() as f64;
    let dim = points[0].len();
    if dim == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for d in 0..dim {
        let mean = points.iter().map(|p| p[d]).sum::<f64>() / n;
        total += points.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>() / n;
    }
    total / dim as f64
}

/// k-means++: first centre uniform, then each next centre drawn with
/// probability proportional to the squared distance to the chosen ones.
pub fn kmeans_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut SplitMix64) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.below(points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut chosen = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.below(points.len())
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Result of Lloyd iterations from a fixed starting set of centroids.
#[derive(Debug, Clone)]
pub struct LloydRun {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia of each assignment step, in order.
    pub history: Vec<f64>,
}

/// Lloyd iterations. An empty cluster is moved onto the point farthest
/// from its current centroid (points already used this way are skipped).
pub fn lloyd(points: &[Vec<f64>], init: Vec<Vec<f64>>, max_iter: usize, tol: f64) -> Result<LloydRun> {
    let k = init.len();
    let dim = validate_points(points, k)?;
    for c in &init {
        check_len("initial centroid", dim, c.len())?;
    }
    let tol_abs = tol * mean_variance(points);
    let mut centroids = init;
    let mut labels = vec![0usize; points.len()];
    let mut dists = vec![0.0f64; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iter.max(1) {
        iterations += 1;
        for (i, p) in points.iter().enumerate() {
            (labels[i], dists[i]) = nearest(&centroids, p);
        }
        history.push(dists.iter().sum());

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut taken = vec![false; points.len()];
        let mut shift = 0.0;
        for c in 0..k {
            let new = if counts[c] > 0 {
                sums[c].iter().map(|s| s / counts[c] as f64).collect::<Vec<_>>()
            } else {
                let far = (0..points.len())
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("at least k points");
                taken[far] = true;
                dists[far] = 0.0;
                points[far].clone()
            };
            shift += sq_dist(&new, &centroids[c]);
            centroids[c] = new;
        }
        if shift <= tol_abs {
            break;
        }
    }
    for (i, p) in points.iter().enumerate() {
        (labels[i], dists[i]) = nearest(&centroids, p);
    }
    let inertia = dists.iter().sum();
    history.push(inertia);
    Ok(LloydRun {
        centroids,
        labels,
        inertia,
        iterations,
        history,
    })
}

/// Best of `n_init` k-means++ restarts, ranked by `(inertia, restart)`.
pub fn kmeans_fit(points: &[Vec<f64>], k: usize, seed: u64, opts: KMeansOptions) -> Result<ClusterModel> {
    validate_points(points, k)?;
    if opts.n_init == 0 {
        return Err(MctError::param("n_init must be at least 1"));
    }
    let runs = (0..opts.n_init)
        .into_par_iter()
        .map(|r| {
            let mut rng = SplitMix64::new(derive_seed(seed, stage::KMEANS, r as u64));
            let init = kmeans_plus_plus(points, k, &mut rng);
            lloyd(points, init, opts.max_iter, opts.tol)
        })
        .collect::<Result<Vec<_>>>()?;
    let best = runs
        .into_iter()
        .enumerate()
        .min_by(|(ra, a), (rb, b)| a.inertia.total_cmp(&b.inertia).then(ra.cmp(rb)))
        .map(|(_, run)| run)
        .expect("n_init >= 1");
    Ok(ClusterModel {
        k,
        centroids: best.centroids,
        inertia: best.inertia,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowCurve {
    pub ks: Vec<usize>,
    pub inertia: Vec<f64>,
    pub best_k: usize,
}

/// `k*` maximizing the discrete second difference
/// `I(k-1) - 2 I(k) + I(k+1)` over interior k; ties go to the smaller k.
pub fn elbow_k(ks: &[usize], inertia: &[f64]) -> Result<usize> {
    if ks.len() != inertia.len() || ks.len() < 3 {
        return Err(MctError::param("elbow needs at least three k values"));
    }
    let mut best = (ks[1], f64::NEG_INFINITY);
    for i in 1..ks.len() - 1 {
        let d2 = inertia[i - 1] - 2.0 * inertia[i] + inertia[i + 1];
        if d2 > best.1 {
            best = (ks[i], d2);
        }
    }
    Ok(best.0)
}

pub fn elbow_scan(
    points: &[Vec<f64>],
    k_min: usize,
    k_max: usize,
    seed: u64,
    opts: KMeansOptions,
) -> Result<ElbowCurve> {
    if k_min == 0 || k_max < k_min + 2 {
        return Err(MctError::param(format!(
            "elbow range needs 1 <= k_min and k_max >= k_min + 2, got {k_min}..={k_max}"
        )));
    }
    if points.len() < k_max {
        return Err(MctError::param(format!(
            "need at least k_max={k_max} points, got {}",
            points.len()
        )));
    }
    let ks: Vec<usize> = (k_min..=k_max).collect();
    let inertia = ks
        .iter()
        .map(|&k| kmeans_fit(points, k, seed, opts).map(|m| m.inertia))
        .collect::<Result<Vec<_>>>()?;
    let best_k = elbow_k(&ks, &inertia)?;
    Ok(ElbowCurve { ks, inertia, best_k })
}

/// Averages elbow curves after dividing each by its first value, so
/// members with different feature dimensions weigh equally.
pub fn average_elbow(curves: &[ElbowCurve]) -> Result<ElbowCurve> {
    let first = curves
        .first()
        .ok_or_else(|| MctError::param("no elbow curves to average"))?;
    let mut mean = vec![0.0; first.ks.len()];
    for c in curves {
        if c.ks != first.ks {
            return Err(MctError::param("elbow curves cover different k ranges"));
        }
        let norm = if c.inertia[0] > 0.0 { c.inertia[0] } else { 1.0 };
        for (m, v) in mean.iter_mut().zip(&c.inertia) {
            *m += v / norm / curves.len() as f64;
        }
    }
    let best_k = elbow_k(&first.ks, &mean)?;
    Ok(ElbowCurve {
        ks: first.ks.clone(),
        inertia: mean,
        best_k,
    })
}
