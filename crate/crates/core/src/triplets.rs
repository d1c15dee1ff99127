//! Cluster-based contrastive triplet selection over participant-days.
//!
//! A positive for an anchor day must come from the same participant, lie
//! within a day window of the anchor date, and share the anchor's one-hot
//! cluster. A negative is any other day violating at least one of those
//! criteria.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use chrono::NaiveDate;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::preprocess::{vocabulary, DayString};

/// Identifies one participant-day.
pub type DayKey = (String, NaiveDate);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: DayKey,
    pub positive: DayKey,
    pub negative: DayKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletSet {
    pub triplets: Vec<Triplet>,
    pub seed: u64,
    pub window_days: i64,
}

pub const DEFAULT_WINDOW_DAYS: i64 = 30;

/// One-hot encoding of a day collection over a shared vocabulary.
/// Row dimension is `slots * |vocab|` with exactly `slots` ones per row.
pub struct OneHotSet {
    pub vocab: Vec<String>,
    pub keys: Vec<DayKey>,
    pub rows: Matrix,
}

pub fn one_hot_encode(days: &[DayString]) -> OneHotSet {
    let vocab = vocabulary(days);
    let index: BTreeMap<&str, usize> = vocab
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let slots = days.first().map(|d| d.tokens.len()).unwrap_or(0);
    let mut rows = Matrix::zeros(days.len(), slots * vocab.len());
    let mut keys = Vec::with_capacity(days.len());
    for (r, day) in days.iter().enumerate() {
        assert_eq!(day.tokens.len(), slots, "inconsistent slot counts");
        let row = rows.row_mut(r);
        for (s, tok) in day.tokens.iter().enumerate() {
            row[s * vocab.len() + index[tok.as_str()]] = 1.0;
        }
        keys.push((day.participant_id.clone(), day.date));
    }
    OneHotSet { vocab, keys, rows }
}

/// The three positive-eligibility criteria for `candidate` w.r.t. `anchor`.
/// The anchor day itself is never eligible.
fn is_positive(
    keys: &[DayKey],
    labels: &[usize],
    anchor: usize,
    candidate: usize,
    window_days: i64,
) -> bool {
    if anchor == candidate {
        return false;
    }
    let (aid, adate) = &keys[anchor];
    let (cid, cdate) = &keys[candidate];
    aid == cid
        && (*cdate - *adate).num_days().abs() <= window_days
        && labels[anchor] == labels[candidate]
}

/// Draws `n` triplets from seeded uniform sampling.
///
/// Anchors are drawn uniformly over all days; anchors with no eligible
/// positive are skipped and redrawn. Fails only when no anchor in the whole
/// dataset has an eligible positive.
pub fn select_triplets(
    keys: &[DayKey],
    labels: &[usize],
    n: usize,
    window_days: i64,
    seed: u64,
) -> Result<TripletSet> {
    if keys.len() != labels.len() {
        return Err(Error::InvalidArgument(
            "labels length does not match day count".into(),
        ));
    }
    if keys.len() < 2 {
        return Err(Error::TripletExhausted);
    }
    // Eligible positives per day, precomputed by scanning each participant's
    // date-sorted days within the window.
    let mut by_participant: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, (id, _)) in keys.iter().enumerate() {
        by_participant.entry(id).or_default().push(i);
    }
    let mut positives: Vec<Vec<usize>> = vec![Vec::new(); keys.len()];
    for days in by_participant.values() {
        let mut sorted = days.clone();
        sorted.sort_by_key(|&i| keys[i].1);
        for (pos, &i) in sorted.iter().enumerate() {
            for &j in sorted[pos + 1..].iter() {
                if (keys[j].1 - keys[i].1).num_days() > window_days {
                    break;
                }
                if labels[i] == labels[j] {
                    positives[i].push(j);
                    positives[j].push(i);
                }
            }
        }
    }
    if positives.iter().all(|p| p.is_empty()) {
        return Err(Error::TripletExhausted);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triplets = Vec::with_capacity(n);
    while triplets.len() < n {
        let anchor = rng.gen_range(0..keys.len());
        if positives[anchor].is_empty() {
            continue;
        }
        let positive = positives[anchor][rng.gen_range(0..positives[anchor].len())];
        // Rejection-sample a negative: any day failing >=1 criterion. The
        // positive pool is tiny relative to the dataset, so this terminates
        // quickly; a full scan fallback guards the pathological case.
        let mut negative = None;
        for _ in 0..64 {
            let cand = rng.gen_range(0..keys.len());
            if cand != anchor && !is_positive(keys, labels, anchor, cand, window_days) {
                negative = Some(cand);
                break;
            }
        }
        let negative = match negative {
            Some(neg) => neg,
            None => {
                let pool: Vec<usize> = (0..keys.len())
                    .filter(|&c| {
                        c != anchor && !is_positive(keys, labels, anchor, c, window_days)
                    })
                    .collect();
                if pool.is_empty() {
                    return Err(Error::TripletExhausted);
                }
                pool[rng.gen_range(0..pool.len())]
            }
        };
        triplets.push(Triplet {
            anchor: keys[anchor].clone(),
            positive: keys[positive].clone(),
            negative: keys[negative].clone(),
        });
    }
    Ok(TripletSet {
        triplets,
        seed,
        window_days,
    })
}

/// Independent re-check of a triplet set against the selection criteria.
/// Deliberately re-derives everything from the raw keys and labels instead
/// of reusing the generator's candidate pools.
pub fn validate_triplets(
    keys: &[DayKey],
    labels: &[usize],
    set: &TripletSet,
) -> Result<()> {
    let index: BTreeMap<&DayKey, usize> = keys.iter().enumerate().map(|(i, k)| (k, i)).collect();
    let find = |key: &DayKey| {
        index
            .get(key)
            .copied()
            .ok_or_else(|| Error::MissingKey(format!("({}, {})", key.0, key.1)))
    };
    for (i, t) in set.triplets.iter().enumerate() {
        let a = find(&t.anchor)?;
        let p = find(&t.positive)?;
        let n = find(&t.negative)?;
        let criteria = |x: usize| {
            (
                keys[a].0 == keys[x].0,
                (keys[x].1 - keys[a].1).num_days().abs() <= set.window_days,
                labels[a] == labels[x],
            )
        };
        let (sp, wp, cp) = criteria(p);
        if p == a || !(sp && wp && cp) {
            return Err(Error::Contract(format!(
                "triplet {i}: positive violates criteria (same_participant={sp}, in_window={wp}, same_cluster={cp})"
            )));
        }
        let (sn, wn, cn) = criteria(n);
        if sn && wn && cn && n != a {
            return Err(Error::Contract(format!(
                "triplet {i}: negative satisfies all criteria"
            )));
        }
        if a == p && p == n {
            return Err(Error::Contract(format!("triplet {i}: degenerate")));
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct TripletHeader {
    seed: u64,
    window_days: i64,
}

/// JSONL export: a header line with the generation parameters, then one
/// triplet per line.
pub fn write_triplets(path: &Path, set: &TripletSet) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let header = TripletHeader {
        seed: set.seed,
        window_days: set.window_days,
    };
    serde_json::to_writer(&mut w, &header).map_err(|e| Error::io(path, e.into()))?;
    writeln!(w).map_err(|e| Error::io(path, e))?;
    for t in &set.triplets {
        serde_json::to_writer(&mut w, t).map_err(|e| Error::io(path, e.into()))?;
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_triplets(path: &Path) -> Result<TripletSet> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = std::io::BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: "empty triplet file".into(),
        })?
        .map_err(|e| Error::io(path, e))?;
    let header: TripletHeader = serde_json::from_str(&header_line).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let mut triplets = Vec::new();
    for (idx, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        triplets.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 2,
            message: e.to_string(),
        })?);
    }
    Ok(TripletSet {
        triplets,
        seed: header.seed,
        window_days: header.window_days,
    })
}
