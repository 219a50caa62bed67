//! Lloyd's k-means with k-means++ seeding and best-of-n restarts.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::rng::{derive_stream, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    pub n_init: usize,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iter: 300,
            n_init: 10,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub assignments: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
    /// Inertia after every assignment step of the winning restart.
    pub inertia_trace: Vec<f64>,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Number of distinct rows, stopping once `cap` is reached.
fn distinct_rows_at_least(points: ArrayView2<'_, f64>, cap: usize) -> usize {
    let mut rows: Vec<ArrayView1<'_, f64>> = points.rows().into_iter().collect();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut distinct = rows.len().min(1);
    for w in rows.windows(2) {
        if w[0] != w[1] {
            distinct += 1;
            if distinct >= cap {
                break;
            }
        }
    }
    distinct
}

fn check_input(points: ArrayView2<'_, f64>, cfg: &KMeansConfig) -> Result<()> {
    let n = points.nrows();
    if cfg.k == 0 || cfg.n_init == 0 {
        return Err(Error::Cluster("k and n_init must be at least 1".into()));
    }
    if n < cfg.k {
        return Err(Error::Cluster(format!(
            "{n} points cannot form {} clusters",
            cfg.k
        )));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::Cluster("points contain non-finite values".into()));
    }
    if cfg.k > 1 {
        let distinct = distinct_rows_at_least(points, cfg.k);
        if distinct == 1 {
            return Err(Error::Cluster(format!(
                "degenerate input: all {n} points are identical, cannot form {} clusters",
                cfg.k
            )));
        }
        if distinct < cfg.k {
            return Err(Error::Cluster(format!(
                "degenerate input: {distinct} distinct points, cannot form {} clusters",
                cfg.k
            )));
        }
    }
    Ok(())
}

/// k-means++: first centre uniform, each next one drawn with probability
/// proportional to squared distance from the nearest chosen centre.
fn seed_centroids(points: ArrayView2<'_, f64>, k: usize, rng: &mut impl Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut centroids = Array2::zeros((k, points.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut d2: Vec<f64> = points
        .rows()
        .into_iter()
        .map(|p| sq_dist(p, points.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut chosen = None;
        for (i, &w) in d2.iter().enumerate() {
            if w > 0.0 {
                chosen = Some(i);
                if target < w {
                    break;
                }
                target -= w;
            }
        }
        let chosen = chosen.expect("at least k distinct points");
        centroids.row_mut(c).assign(&points.row(chosen));
        for (i, p) in points.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, points.row(chosen)));
        }
    }
    centroids
}

/// Nearest centroid per point (ties to the lowest index) and total inertia.
fn assign(points: ArrayView2<'_, f64>, centroids: &Array2<f64>) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let assignments = points
        .rows()
        .into_iter()
        .map(|p| {
            let mut best = (0, f64::INFINITY);
            for (j, c) in centroids.rows().into_iter().enumerate() {
                let d = sq_dist(p, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            inertia += best.1;
            best.0
        })
        .collect();
    (assignments, inertia)
}

/// Cluster means. An empty cluster takes over the point farthest from its
/// own centroid (among clusters with more than one member).
fn update(points: ArrayView2<'_, f64>, assignments: &mut [usize], k: usize) -> Array2<f64> {
    let mut sums = Array2::<f64>::zeros((k, points.ncols()));
    let mut counts = vec![0usize; k];
    for (p, &a) in points.rows().into_iter().zip(assignments.iter()) {
        sums.row_mut(a).scaled_add(1.0, &p);
        counts[a] += 1;
    }
    for (mut row, &c) in sums.axis_iter_mut(Axis(0)).zip(&counts) {
        if c > 0 {
            row.mapv_inplace(|v| v / c as f64);
        }
    }
    let mut centroids = sums;
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let (far, _) = points
            .rows()
            .into_iter()
            .enumerate()
            .filter(|&(i, _)| counts[assignments[i]] > 1)
            .map(|(i, p)| (i, sq_dist(p, centroids.row(assignments[i]))))
            .fold((usize::MAX, f64::NEG_INFINITY), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            });
        counts[assignments[far]] -= 1;
        assignments[far] = empty;
        counts[empty] = 1;
        centroids.row_mut(empty).assign(&points.row(far));
    }
    centroids
}

/// One Lloyd run from k-means++ seeding.
pub fn lloyd(
    points: ArrayView2<'_, f64>,
    k: usize,
    max_iter: usize,
    rng: &mut impl Rng,
) -> KMeansFit {
    let mut centroids = seed_centroids(points, k, rng);
    let (mut assignments, mut inertia) = assign(points, &centroids);
    let mut trace = vec![inertia];
    for _ in 0..max_iter {
        centroids = update(points, &mut assignments, k);
        let (next, next_inertia) = assign(points, &centroids);
        trace.push(next_inertia);
        inertia = next_inertia;
        let converged = next == assignments;
        assignments = next;
        if converged {
            break;
        }
    }
    KMeansFit {
        assignments,
        centroids,
        inertia,
        inertia_trace: trace,
    }
}

/// Best of `cfg.n_init` Lloyd runs by inertia (ties to the earliest run).
/// Restart `r` uses the seed stream `(cfg.seed, r)`, so the result does not
/// depend on how restarts are scheduled across threads.
pub fn kmeans(points: ArrayView2<'_, f64>, cfg: &KMeansConfig) -> Result<KMeansFit> {
    check_input(points, cfg)?;
    let fits: Vec<KMeansFit> = (0..cfg.n_init as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(derive_stream(cfg.seed, r));
            lloyd(points, cfg.k, cfg.max_iter, &mut rng)
        })
        .collect();
    let best = fits
        .into_iter()
        .reduce(|best, fit| {
            if fit.inertia < best.inertia {
                fit
            } else {
                best
            }
        })
        .expect("n_init >= 1");
    Ok(best)
}
