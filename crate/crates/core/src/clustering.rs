//! K-means with silhouette-based model selection.
//!
//! Used on one-hot day vectors (triplet preparation), 2D projected points
//! (latent states) and fingerprint vectors (participant clustering).

use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashutil::Fnv1a;
use crate::matrix::{sq_dist, Matrix};

pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-6;

/// A fitted k-means model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    #[serde(skip)]
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub seed: u64,
}

fn restart_seed(seed: u64, restart: usize) -> u64 {
    let mut h = Fnv1a::new();
    h.update_u64(seed).update_u64(restart as u64);
    h.finish()
}

/// Lloyd's algorithm with k-means++ seeding, best of `restarts` by inertia.
pub fn kmeans_fit(
    data: &Matrix,
    k: usize,
    seed: u64,
    restarts: usize,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterModel> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if data.rows < k {
        return Err(Error::InvalidArgument(format!(
            "n = {} < k = {}",
            data.rows, k
        )));
    }
    let mut best: Option<ClusterModel> = None;
    for r in 0..restarts.max(1) {
        let model = kmeans_once(data, k, restart_seed(seed, r), max_iter, tol)?;
        if best.as_ref().map(|b| model.inertia < b.inertia).unwrap_or(true) {
            best = Some(model);
        }
    }
    let mut model = best.unwrap();
    model.seed = seed;
    Ok(model)
}

fn kmeans_once(
    data: &Matrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<ClusterModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_seeds(data, k, &mut rng);
    let mut labels = vec![0usize; data.rows];
    let mut prev_inertia = f64::INFINITY;

    for _iter in 0..max_iter {
        // assignment
        let mut inertia = 0.0;
        for i in 0..data.rows {
            let (label, d2) = nearest_centroid(data.row(i), &centroids);
            labels[i] = label;
            inertia += d2;
        }
        debug_assert!(
            inertia <= prev_inertia * (1.0 + 1e-9) + 1e-12,
            "inertia increased: {prev_inertia} -> {inertia}"
        );

        // update
        let mut counts = vec![0usize; k];
        let mut sums = Matrix::zeros(k, data.cols);
        for i in 0..data.rows {
            counts[labels[i]] += 1;
            let row = data.row(i);
            let acc = sums.row_mut(labels[i]);
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed the empty centroid at the point farthest from its
                // current centroid
                let far = (0..data.rows)
                    .max_by(|&a, &b| {
                        let da = sq_dist(data.row(a), &centroids[labels[a]]);
                        let db = sq_dist(data.row(b), &centroids[labels[b]]);
                        da.partial_cmp(&db).unwrap()
                    })
                    .unwrap();
                centroids[c] = data.row(far).to_vec();
                labels[far] = c;
            } else {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centroids[c].iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            }
        }

        let rel_change = if prev_inertia.is_finite() {
            (prev_inertia - inertia).abs() / prev_inertia.max(f64::MIN_POSITIVE)
        } else {
            f64::INFINITY
        };
        prev_inertia = inertia;
        if rel_change < tol {
            break;
        }
    }

    // final assignment consistent with returned centroids
    let mut inertia = 0.0;
    for i in 0..data.rows {
        let (label, d2) = nearest_centroid(data.row(i), &centroids);
        labels[i] = label;
        inertia += d2;
    }
    Ok(ClusterModel {
        k,
        centroids,
        labels,
        inertia,
        seed,
    })
}

fn nearest_centroid(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    (best, best_d)
}

fn plus_plus_seeds(data: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(data.row(rng.gen_range(0..data.rows)).to_vec());
    let mut d2 = vec![0.0f64; data.rows];
    while centroids.len() < k {
        let mut total = 0.0;
        for i in 0..data.rows {
            d2[i] = nearest_centroid(data.row(i), &centroids).1;
            total += d2[i];
        }
        if total == 0.0 {
            // all points coincide with existing centroids; duplicate one
            centroids.push(centroids[0].clone());
            continue;
        }
        let mut target = rng.gen::<f64>() * total;
        let mut chosen = data.rows - 1;
        for (i, &w) in d2.iter().enumerate() {
            target -= w;
            if target <= 0.0 {
                chosen = i;
                break;
            }
        }
        centroids.push(data.row(chosen).to_vec());
    }
    centroids
}

/// Mean silhouette score with Euclidean distance; singleton-cluster samples
/// score 0.
pub fn silhouette(data: &Matrix, labels: &[usize]) -> Result<f64> {
    let n = data.rows;
    if n != labels.len() {
        return Err(Error::InvalidArgument("labels length mismatch".into()));
    }
    let k = labels.iter().copied().max().map(|m| m + 1).unwrap_or(0);
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::InvalidArgument(
            "silhouette requires at least 2 nonempty clusters".into(),
        ));
    }
    // per-sample sums of distances to each cluster, one O(n^2) pairwise pass
    let mut sums = Matrix::zeros(n, k);
    for i in 0..n {
        let ri = data.row(i);
        for j in (i + 1)..n {
            let d = sq_dist(ri, data.row(j)).sqrt();
            sums.row_mut(i)[labels[j]] += d;
            sums.row_mut(j)[labels[i]] += d;
        }
    }
    let mut total = 0.0;
    let mut any_defined = false;
    for i in 0..n {
        let ci = labels[i];
        if counts[ci] <= 1 {
            continue; // scores 0
        }
        let a = sums.row(i)[ci] / (counts[ci] - 1) as f64;
        let mut b = f64::INFINITY;
        for c in 0..k {
            if c != ci && counts[c] > 0 {
                b = b.min(sums.row(i)[c] / counts[c] as f64);
            }
        }
        let denom = a.max(b);
        if denom > 0.0 {
            any_defined = true;
            total += (b - a) / denom;
        }
    }
    if !any_defined {
        return Err(Error::InvalidArgument(
            "silhouette undefined: all points coincide (single effective cluster)".into(),
        ));
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct KSelection {
    pub best_k: usize,
    /// (k, silhouette) in ascending k order.
    pub scores: Vec<(usize, f64)>,
}

/// Fits every k in the range and returns the silhouette argmax, ties broken
/// toward smaller k.
pub fn select_k(data: &Matrix, k_range: &[usize], seed: u64) -> Result<KSelection> {
    if k_range.is_empty() {
        return Err(Error::InvalidArgument("empty k range".into()));
    }
    let mut scores = Vec::with_capacity(k_range.len());
    for &k in k_range {
        let model = kmeans_fit(data, k, seed, DEFAULT_RESTARTS, DEFAULT_MAX_ITER, DEFAULT_TOL)?;
        scores.push((k, silhouette(data, &model.labels)?));
    }
    scores.sort_by_key(|&(k, _)| k);
    let best_k = scores
        .iter()
        .fold(None::<(usize, f64)>, |best, &(k, s)| match best {
            Some((_, bs)) if s <= bs => best,
            _ => Some((k, s)),
        })
        .unwrap()
        .0;
    Ok(KSelection { best_k, scores })
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let ka = a.iter().max().map(|m| m + 1).unwrap_or(0);
    let kb = b.iter().max().map(|m| m + 1).unwrap_or(0);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let comb2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let sum_ij: f64 = table.iter().flatten().map(|&v| comb2(v)).sum();
    let sum_a: f64 = table
        .iter()
        .map(|row| comb2(row.iter().sum::<u64>()))
        .sum();
    let sum_b: f64 = (0..kb)
        .map(|j| comb2(table.iter().map(|row| row[j]).sum::<u64>()))
        .sum();
    let expected = sum_a * sum_b / comb2(n as u64);
    let max_index = (sum_a + sum_b) / 2.0;
    if (max_index - expected).abs() < f64::EPSILON {
        return 1.0;
    }
    (sum_ij - expected) / (max_index - expected)
}

pub fn write_model(path: &Path, model: &ClusterModel) -> Result<()> {
    let json = serde_json::to_string_pretty(model).map_err(|e| Error::io(path, e.into()))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}
