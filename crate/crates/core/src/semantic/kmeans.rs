//! Seeded k-means++ / Lloyd clustering.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansConfig {
    pub max_iters: usize,
    /// Stop once no centroid moves farther than this (Euclidean).
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// Cluster id of each input point, in input order.
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Within-cluster sum of squared distances.
    pub sse: f64,
}

impl ClusterAssignment {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }
}

fn sq_dist(a: &[f32], c: &[f64]) -> f64 {
    a.iter().zip(c).map(|(x, y)| (*x as f64 - y).powi(2)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
fn nearest(p: &[f32], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign<P: AsRef<[f32]> + Sync>(points: &[P], centroids: &[Vec<f64>]) -> Vec<(usize, f64)> {
    points.par_iter().map(|p| nearest(p.as_ref(), centroids)).collect()
}

fn plus_plus_init<P: AsRef<[f32]>>(points: &[P], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let to_f64 = |p: &P| p.as_ref().iter().map(|&x| x as f64).collect::<Vec<f64>>();
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![to_f64(&points[first])];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p.as_ref(), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().enumerate().filter(|(i, _)| !chosen[*i]).map(|(_, d)| d).sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, d) in d2.iter().enumerate() {
                if chosen[i] || *d <= 0.0 {
                    continue;
                }
                pick = Some(i);
                if target < *d {
                    break;
                }
                target -= d;
            }
            pick.expect("positive mass")
        } else {
            // Every remaining point coincides with a centroid.
            let remaining: Vec<usize> = (0..n).filter(|i| !chosen[*i]).collect();
            remaining[rng.random_range(0..remaining.len())]
        };
        chosen[pick] = true;
        let c = to_f64(&points[pick]);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p.as_ref(), &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Clusters `points` into `k` groups.
///
/// k-means++ seeding from `seed`, then Lloyd iterations until the largest
/// centroid shift drops below `cfg.tol` or `cfg.max_iters` is reached. A
/// centroid left empty is moved onto the point farthest from its own
/// centroid. Deterministic for a fixed seed and independent of thread count.
pub fn kmeans_cluster<P: AsRef<[f32]> + Sync>(
    points: &[P],
    k: usize,
    seed: u64,
    cfg: &KMeansConfig,
) -> Result<ClusterAssignment> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::config(format!("k-means needs 1 <= k <= N, got k={k}, N={n}")));
    }
    let dim = points[0].as_ref().len();
    if points.iter().any(|p| p.as_ref().len() != dim) {
        return Err(Error::config("k-means points must share one dimension"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut iterations = 0;
    let mut assigned = assign(points, &centroids);

    while iterations < cfg.max_iters {
        iterations += 1;
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, (j, _)) in points.iter().zip(&assigned) {
            counts[*j] += 1;
            for (s, x) in sums[*j].iter_mut().zip(p.as_ref()) {
                *s += *x as f64;
            }
        }
        let mut next: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &c)| if c == 0 { s } else { s.into_iter().map(|v| v / c as f64).collect() })
            .collect();

        let mut dist: Vec<f64> = assigned.iter().map(|(_, d)| *d).collect();
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let far = (0..n)
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if dist[b] >= dist[i] => Some(b),
                    _ => Some(i),
                })
                .expect("non-empty input");
            next[j] = points[far].as_ref().iter().map(|&x| x as f64).collect();
            dist[far] = 0.0;
        }

        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
            .fold(0.0f64, f64::max);
        centroids = next;
        assigned = assign(points, &centroids);
        if shift < cfg.tol {
            break;
        }
    }

    let sse = assigned.iter().map(|(_, d)| d).sum();
    Ok(ClusterAssignment {
        labels: assigned.into_iter().map(|(j, _)| j).collect(),
        centroids,
        iterations,
        sse,
    })
}

/// Default cluster count: one cluster per ~1000 documents.
pub fn default_k(n: usize) -> usize {
    n.div_ceil(1000).max(1)
}
