//! Exact t-SNE projection into 2D.
//!
//! O(n^2) gradient with symmetrized conditional affinities; per-point
//! bandwidths found by binary search on the conditional entropy. Exactness
//! keeps the implementation directly checkable against small oracles; the
//! target scale (~10^4 points) stays feasible.

use std::path::Path;

use chrono::NaiveDate;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    /// Iterations during which affinities are multiplied by
    /// `early_exaggeration`.
    pub exaggeration_iters: usize,
    /// Iteration at which momentum switches from initial to final.
    pub momentum_switch_iter: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub seed: u64,
    /// Record the KL objective each iteration (costs an extra O(n^2) pass).
    pub track_kl: bool,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            momentum_switch_iter: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            seed: 0,
            track_kl: false,
        }
    }
}

/// One projected participant-day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub participant_id: String,
    pub date: NaiveDate,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug)]
pub struct TsneResult {
    /// Coordinates in input order.
    pub points: Vec<[f64; 2]>,
    /// Achieved conditional entropy per row, in bits.
    pub row_entropy_bits: Vec<f64>,
    /// KL objective per iteration when `track_kl` is set.
    pub kl_history: Vec<f64>,
}

#[inline]
fn tri_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Fits t-SNE on raw row vectors.
pub fn tsne_fit(data: &Matrix, config: &TsneConfig) -> Result<TsneResult> {
    let n = data.rows;
    if n < 2 {
        return Err(Error::InvalidArgument("t-SNE needs at least 2 points".into()));
    }
    if 3.0 * config.perplexity >= (n - 1) as f64 {
        return Err(Error::InvalidArgument(format!(
            "perplexity {} too large for n = {} (requires perplexity < (n-1)/3)",
            config.perplexity, n
        )));
    }

    let (p_tri, row_entropy_bits) = symmetrized_affinities(data, config.perplexity);
    let init = initial_layout(n, config.seed);
    gradient_descent(n, &p_tri, init, config, row_entropy_bits)
}

/// Fits t-SNE from a caller-provided initial layout (used by the
/// relabeling-equivariance tests).
pub fn tsne_fit_with_init(
    data: &Matrix,
    config: &TsneConfig,
    init: Vec<[f64; 2]>,
) -> Result<TsneResult> {
    let n = data.rows;
    if init.len() != n {
        return Err(Error::InvalidArgument("init length mismatch".into()));
    }
    let (p_tri, row_entropy_bits) = symmetrized_affinities(data, config.perplexity);
    gradient_descent(n, &p_tri, init, config, row_entropy_bits)
}

/// Gaussian(0, 1e-4) layout from the seeded generator, drawn per index.
pub fn initial_layout(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut normal = || {
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen();
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            };
            [normal() * 1e-4, normal() * 1e-4]
        })
        .collect()
}

/// Symmetrized affinity matrix as an upper triangle (f32), scaled so the
/// full matrix sums to 1, plus the achieved per-row entropies in bits.
fn symmetrized_affinities(data: &Matrix, perplexity: f64) -> (Vec<f32>, Vec<f64>) {
    let n = data.rows;
    // f32 copy of the input for the distance pass; t-SNE is insensitive to
    // distance precision at this level and the pass dominates setup time
    let x32: Vec<f32> = data.data.iter().map(|&v| v as f32).collect();
    let d = data.cols;
    let target_entropy = perplexity.ln();

    let mut cond = vec![0.0f32; n * n]; // conditional p_{j|i}, row-major
    let mut entropies = vec![0.0f64; n];
    let mut d2_row = vec![0.0f64; n];
    let mut p_row = vec![0.0f64; n];

    for i in 0..n {
        let xi = &x32[i * d..(i + 1) * d];
        for j in 0..n {
            let xj = &x32[j * d..(j + 1) * d];
            let mut acc = 0.0f32;
            for k in 0..d {
                let diff = xi[k] - xj[k];
                acc += diff * diff;
            }
            d2_row[j] = acc as f64;
        }
        let entropy = binary_search_row(&d2_row, i, target_entropy, &mut p_row);
        entropies[i] = entropy / std::f64::consts::LN_2;
        for j in 0..n {
            cond[i * n + j] = p_row[j] as f32;
        }
    }

    // symmetrize and normalize to sum 1 over the full matrix
    let mut tri = vec![0.0f32; n * (n - 1) / 2];
    let scale = 1.0 / (2.0 * n as f64);
    for i in 0..n {
        for j in (i + 1)..n {
            let p = (cond[i * n + j] as f64 + cond[j * n + i] as f64) * scale;
            tri[tri_index(n, i, j)] = p.max(1e-12) as f32;
        }
    }
    (tri, entropies)
}

/// Binary search for the bandwidth beta that matches the target entropy on
/// one distance row; writes the conditional probabilities into `p_row` and
/// returns the achieved entropy (nats).
fn binary_search_row(d2_row: &[f64], i: usize, target_entropy: f64, p_row: &mut [f64]) -> f64 {
    let n = d2_row.len();
    let mut beta = 1.0f64;
    let mut beta_min = f64::NEG_INFINITY;
    let mut beta_max = f64::INFINITY;
    let mut entropy = 0.0;

    for _ in 0..64 {
        let mut sum_p = 0.0;
        let mut sum_dp = 0.0;
        for j in 0..n {
            if j == i {
                p_row[j] = 0.0;
                continue;
            }
            let p = (-beta * d2_row[j]).exp();
            p_row[j] = p;
            sum_p += p;
            sum_dp += d2_row[j] * p;
        }
        if sum_p <= 0.0 {
            // beta blew up past all distances; back off
            beta_max = beta;
            beta = if beta_min.is_finite() { (beta + beta_min) / 2.0 } else { beta / 2.0 };
            continue;
        }
        entropy = sum_p.ln() + beta * sum_dp / sum_p;
        let diff = entropy - target_entropy;
        if diff.abs() < 1e-7 {
            break;
        }
        if diff > 0.0 {
            beta_min = beta;
            beta = if beta_max.is_finite() { (beta + beta_max) / 2.0 } else { beta * 2.0 };
        } else {
            beta_max = beta;
            beta = if beta_min.is_finite() { (beta + beta_min) / 2.0 } else { beta / 2.0 };
        }
    }

    let sum_p: f64 = p_row.iter().sum();
    if sum_p > 0.0 {
        for p in p_row.iter_mut() {
            *p /= sum_p;
        }
    } else {
        // degenerate row (e.g. all points coincide): uniform conditionals
        let uniform = 1.0 / (n - 1) as f64;
        for (j, p) in p_row.iter_mut().enumerate() {
            *p = if j == i { 0.0 } else { uniform };
        }
        entropy = ((n - 1) as f64).ln();
    }
    entropy
}

fn gradient_descent(
    n: usize,
    p_tri: &[f32],
    mut y: Vec<[f64; 2]>,
    config: &TsneConfig,
    row_entropy_bits: Vec<f64>,
) -> Result<TsneResult> {
    let mut inc = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut grad = vec![[0.0f64; 2]; n];
    let mut qnum = vec![0.0f32; n * (n - 1) / 2];
    let mut kl_history = Vec::new();

    for iter in 0..config.iterations {
        let exaggeration = if iter < config.exaggeration_iters {
            config.early_exaggeration
        } else {
            1.0
        };
        let momentum = if iter < config.momentum_switch_iter {
            config.initial_momentum
        } else {
            config.final_momentum
        };

        // pass 1: student-t numerators and their total
        let mut z = 0.0f64;
        let mut idx = 0usize;
        for i in 0..n {
            let yi = y[i];
            let mut row_sum = 0.0f64;
            for yj in y.iter().skip(i + 1) {
                let dx = yi[0] - yj[0];
                let dy = yi[1] - yj[1];
                let q = 1.0 / (1.0 + dx * dx + dy * dy);
                qnum[idx] = q as f32;
                row_sum += q;
                idx += 1;
            }
            z += row_sum;
        }
        let z = (2.0 * z).max(f64::MIN_POSITIVE);
        let inv_z = 1.0 / z;

        // pass 2: gradient
        for g in grad.iter_mut() {
            *g = [0.0, 0.0];
        }
        let mut idx = 0usize;
        for i in 0..n {
            let yi = y[i];
            let mut gi = [0.0f64; 2];
            for j in (i + 1)..n {
                let q = qnum[idx] as f64;
                let p = p_tri[idx] as f64 * exaggeration;
                let mult = (p - q * inv_z) * q;
                let dx = (yi[0] - y[j][0]) * mult;
                let dy = (yi[1] - y[j][1]) * mult;
                gi[0] += dx;
                gi[1] += dy;
                grad[j][0] -= dx;
                grad[j][1] -= dy;
                idx += 1;
            }
            grad[i][0] += gi[0];
            grad[i][1] += gi[1];
        }

        // update with gains and momentum
        let mut mean = [0.0f64; 2];
        for i in 0..n {
            for dim in 0..2 {
                let g = 4.0 * grad[i][dim];
                gains[i][dim] = if (g > 0.0) != (inc[i][dim] > 0.0) {
                    gains[i][dim] + 0.2
                } else {
                    (gains[i][dim] * 0.8).max(0.01)
                };
                inc[i][dim] = momentum * inc[i][dim] - config.learning_rate * gains[i][dim] * g;
                y[i][dim] += inc[i][dim];
                mean[dim] += y[i][dim];
            }
        }
        mean[0] /= n as f64;
        mean[1] /= n as f64;
        for yi in y.iter_mut() {
            yi[0] -= mean[0];
            yi[1] -= mean[1];
            if !yi[0].is_finite() || !yi[1].is_finite() {
                return Err(Error::NonFinite {
                    iteration: iter,
                    context: "t-SNE coordinates".into(),
                });
            }
        }

        if config.track_kl {
            let mut kl = 0.0f64;
            let mut idx = 0usize;
            for i in 0..n {
                for _j in (i + 1)..n {
                    let p = p_tri[idx] as f64;
                    let q = (qnum[idx] as f64 * inv_z).max(1e-12);
                    kl += 2.0 * p * (p / q).ln();
                    idx += 1;
                }
            }
            kl_history.push(kl);
        }
    }

    Ok(TsneResult {
        points: y,
        row_entropy_bits,
        kl_history,
    })
}

/// Projects an embedding set, carrying keys through in input order.
pub fn project_embeddings(set: &EmbeddingSet, config: &TsneConfig) -> Result<Vec<Point2D>> {
    let mut data = Matrix::zeros(set.len(), set.dim);
    for (i, emb) in set.records.iter().enumerate() {
        data.row_mut(i).copy_from_slice(&emb.vector);
    }
    let result = tsne_fit(&data, config)?;
    Ok(set
        .records
        .iter()
        .zip(result.points)
        .map(|(emb, p)| Point2D {
            participant_id: emb.participant_id.clone(),
            date: emb.date,
            x: p[0],
            y: p[1],
        })
        .collect())
}

pub fn write_points(path: &Path, points: &[Point2D]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    for p in points {
        wtr.serialize(p)
            .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_points(path: &Path) -> Result<Vec<Point2D>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    rdr.deserialize()
        .map(|row| row.map_err(|e| Error::io(path, std::io::Error::other(e.to_string()))))
        .collect()
}
