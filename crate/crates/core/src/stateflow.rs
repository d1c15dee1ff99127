//! Per-participant transition matrices over latent states and their
//! PageRank state vectors (the behavioral fingerprint).
//!
//! The transition matrix is proximity-based: entry (i, j) counts ordered
//! point pairs across clusters i and j lying within a distance threshold in
//! the 2D projection, row-normalized. A temporal-succession variant (counts
//! of consecutive-day label pairs) exists behind an explicit flag.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::Point2D;

pub const DEFAULT_ALPHA: f64 = 0.85;
pub const DEFAULT_MAX_ITER: usize = 1000;
pub const DEFAULT_TOL: f64 = 1e-10;

/// Row-stochastic k x k transition matrix for one participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub participant_id: String,
    pub k: usize,
    /// Row-major k*k, every row summing to 1.
    pub rows: Vec<f64>,
    pub threshold: f64,
}

/// PageRank vector over latent states for one participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub participant_id: String,
    pub values: Vec<f64>,
    pub alpha: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl StateVector {
    /// Shannon entropy of the state distribution, in nats. Reported for
    /// inspection; nothing downstream consumes it.
    pub fn entropy(&self) -> f64 {
        self.values
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| -v * v.ln())
            .sum()
    }
}

/// How raw pair counts are produced before row normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionMode {
    /// Distance-based: pairs within the threshold, the default.
    Proximity,
    /// Consecutive-day label pairs. Documented extension, never the default.
    TemporalSuccession,
}

/// Raw proximity counts: ordered pairs (a in C_i, b in C_j) with
/// d(a, b) <= threshold, a != b when i == j. Exposed for oracle testing.
pub fn proximity_counts(
    points: &[[f64; 2]],
    labels: &[usize],
    k: usize,
    threshold: f64,
) -> Vec<u64> {
    let mut counts = vec![0u64; k * k];
    let t2 = threshold * threshold;
    for (a, pa) in points.iter().enumerate() {
        for (b, pb) in points.iter().enumerate() {
            if a == b {
                continue;
            }
            let dx = pa[0] - pb[0];
            let dy = pa[1] - pb[1];
            if dx * dx + dy * dy <= t2 {
                counts[labels[a] * k + labels[b]] += 1;
            }
        }
    }
    counts
}

/// Builds the row-normalized transition matrix for one participant's points.
/// Rows with zero total count become uniform.
pub fn build_transition_matrix(
    participant_id: &str,
    points: &[[f64; 2]],
    labels: &[usize],
    k: usize,
    threshold: f64,
    mode: TransitionMode,
) -> Result<TransitionMatrix> {
    if points.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "participant {participant_id} has no points"
        )));
    }
    if points.len() != labels.len() {
        return Err(Error::InvalidArgument("labels length mismatch".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range [0,{k})")));
    }
    if threshold <= 0.0 && mode == TransitionMode::Proximity {
        return Err(Error::InvalidArgument("threshold must be > 0".into()));
    }

    let counts = match mode {
        TransitionMode::Proximity => proximity_counts(points, labels, k, threshold),
        TransitionMode::TemporalSuccession => {
            let mut counts = vec![0u64; k * k];
            for w in labels.windows(2) {
                counts[w[0] * k + w[1]] += 1;
            }
            counts
        }
    };

    let mut rows = vec![0.0f64; k * k];
    for i in 0..k {
        let row = &counts[i * k..(i + 1) * k];
        let total: u64 = row.iter().sum();
        if total == 0 {
            for j in 0..k {
                rows[i * k + j] = 1.0 / k as f64;
            }
        } else {
            for j in 0..k {
                rows[i * k + j] = row[j] as f64 / total as f64;
            }
        }
    }
    Ok(TransitionMatrix {
        participant_id: participant_id.to_string(),
        k,
        rows,
        threshold,
    })
}

/// Median pairwise Euclidean distance among a participant's points; the
/// default per-participant threshold. `None` with fewer than 2 points.
pub fn median_pairwise_distance(points: &[[f64; 2]]) -> Option<f64> {
    let n = points.len();
    if n < 2 {
        return None;
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = points[i][0] - points[j][0];
            let dy = points[i][1] - points[j][1];
            dists.push((dx * dx + dy * dy).sqrt());
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = dists.len();
    Some(if m % 2 == 1 {
        dists[m / 2]
    } else {
        (dists[m / 2 - 1] + dists[m / 2]) / 2.0
    })
}

/// Power iteration p <- (1-alpha)/k + alpha T'p from a uniform start.
pub fn pagerank(
    t: &TransitionMatrix,
    alpha: f64,
    max_iter: usize,
    tol: f64,
) -> Result<StateVector> {
    let k = t.k;
    for i in 0..k {
        let sum: f64 = t.rows[i * k..(i + 1) * k].iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "transition matrix row {i} sums to {sum}, not row-stochastic"
            )));
        }
    }
    let teleport = (1.0 - alpha) / k as f64;
    let mut p = vec![1.0 / k as f64; k];
    let mut next = vec![0.0f64; k];
    let mut iterations = 0;
    let mut converged = false;
    for iter in 1..=max_iter {
        iterations = iter;
        for item in next.iter_mut() {
            *item = teleport;
        }
        for i in 0..k {
            let pi = alpha * p[i];
            for j in 0..k {
                next[j] += t.rows[i * k + j] * pi;
            }
        }
        let residual: f64 = p.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut p, &mut next);
        if residual < tol {
            converged = true;
            break;
        }
    }
    Ok(StateVector {
        participant_id: t.participant_id.clone(),
        values: p,
        alpha,
        iterations,
        converged,
    })
}

/// Composition transition matrix -> PageRank: the participant's (1,k) deep
/// state vector.
pub fn fingerprint(
    participant_id: &str,
    points: &[[f64; 2]],
    labels: &[usize],
    k: usize,
    threshold: f64,
    alpha: f64,
) -> Result<(TransitionMatrix, StateVector)> {
    let t = build_transition_matrix(
        participant_id,
        points,
        labels,
        k,
        threshold,
        TransitionMode::Proximity,
    )?;
    let v = pagerank(&t, alpha, DEFAULT_MAX_ITER, DEFAULT_TOL)?;
    Ok((t, v))
}

/// One row of the fingerprint CSV contract.
#[derive(Debug, Serialize, Deserialize)]
pub struct FingerprintRow {
    pub participant_id: String,
    pub values: Vec<f64>,
    pub alpha: f64,
    pub threshold: f64,
    pub converged: bool,
}

pub fn write_fingerprints(path: &Path, rows: &[FingerprintRow]) -> Result<()> {
    let k = rows.first().map(|r| r.values.len()).unwrap_or(0);
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header = vec!["participant_id".to_string()];
    header.extend((1..=k).map(|i| format!("v{i}")));
    header.extend(["alpha".into(), "threshold".into(), "converged".into()]);
    w.write_record(&header)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    for r in rows {
        let mut rec = vec![r.participant_id.clone()];
        rec.extend(r.values.iter().map(|v| format!("{v}")));
        rec.push(format!("{}", r.alpha));
        rec.push(format!("{}", r.threshold));
        rec.push(format!("{}", r.converged));
        w.write_record(&rec)
            .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_fingerprints(path: &Path) -> Result<Vec<FingerprintRow>> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?
        .clone();
    let k = headers.iter().filter(|h| h.starts_with('v') && h[1..].parse::<usize>().is_ok()).count();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))
        };
        let values: Vec<f64> = (1..=k).map(|i| parse(&rec[i])).collect::<Result<_>>()?;
        out.push(FingerprintRow {
            participant_id: rec[0].to_string(),
            values,
            alpha: parse(&rec[k + 1])?,
            threshold: parse(&rec[k + 2])?,
            converged: rec[k + 3].parse().unwrap_or(false),
        });
    }
    Ok(out)
}

/// Groups projected points per participant, preserving date order within
/// each, and pairs them with the matching global cluster labels.
pub fn group_by_participant<'a>(
    points: &'a [Point2D],
    labels: &'a [usize],
) -> Vec<(String, Vec<[f64; 2]>, Vec<usize>)> {
    let mut order: Vec<String> = Vec::new();
    let mut grouped: std::collections::BTreeMap<&str, (Vec<[f64; 2]>, Vec<usize>)> =
        std::collections::BTreeMap::new();
    for (p, &l) in points.iter().zip(labels) {
        if !grouped.contains_key(p.participant_id.as_str()) {
            order.push(p.participant_id.clone());
        }
        let entry = grouped.entry(&p.participant_id).or_default();
        entry.0.push([p.x, p.y]);
        entry.1.push(l);
    }
    order
        .into_iter()
        .map(|id| {
            let (pts, ls) = grouped.remove(id.as_str()).unwrap();
            (id, pts, ls)
        })
        .collect()
}
