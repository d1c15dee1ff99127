//! Python bindings over the core pipeline operations.
//!
//! Everything is exposed as plain functions taking lists of floats so the
//! module works with or without numpy.

use chrono::NaiveDate;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use homestate::clustering;
use homestate::cohort;
use homestate::embedding;
use homestate::matrix::Matrix;
use homestate::pipeline;
use homestate::preprocess::DayString;
use homestate::projection::{self, TsneConfig};
use homestate::stateflow::{self, TransitionMode};

fn err(e: homestate::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix_from(data: Vec<Vec<f64>>) -> PyResult<Matrix> {
    if data.is_empty() {
        return Err(PyValueError::new_err("empty data"));
    }
    let cols = data[0].len();
    if data.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("ragged rows"));
    }
    Ok(Matrix::from_rows(&data))
}

/// Hash-sign embedding of one 72-token day string.
#[pyfunction]
#[pyo3(signature = (participant_id, date, tokens, dim = 384, seed = 0))]
fn hash_embed(
    participant_id: &str,
    date: &str,
    tokens: Vec<String>,
    dim: usize,
    seed: u64,
) -> PyResult<Vec<f64>> {
    let date: NaiveDate = date
        .parse()
        .map_err(|e| PyValueError::new_err(format!("bad date: {e}")))?;
    let day = DayString {
        participant_id: participant_id.to_string(),
        date,
        tokens,
    };
    embedding::hash_embed(&day, dim, seed)
        .map(|e| e.vector)
        .map_err(err)
}

/// Exact t-SNE projection to 2D.
#[pyfunction]
#[pyo3(signature = (data, perplexity = 30.0, iterations = 1000, seed = 0))]
fn tsne(
    data: Vec<Vec<f64>>,
    perplexity: f64,
    iterations: usize,
    seed: u64,
) -> PyResult<Vec<(f64, f64)>> {
    let m = matrix_from(data)?;
    let config = TsneConfig {
        perplexity,
        iterations,
        seed,
        ..TsneConfig::default()
    };
    let result = projection::tsne_fit(&m, &config).map_err(err)?;
    Ok(result.points.iter().map(|p| (p[0], p[1])).collect())
}

/// K-means with k-means++ restarts; returns (labels, centroids, inertia).
#[pyfunction]
#[pyo3(signature = (data, k, seed = 0))]
fn kmeans(
    data: Vec<Vec<f64>>,
    k: usize,
    seed: u64,
) -> PyResult<(Vec<usize>, Vec<Vec<f64>>, f64)> {
    let m = matrix_from(data)?;
    let model = clustering::kmeans_fit(
        &m,
        k,
        seed,
        clustering::DEFAULT_RESTARTS,
        clustering::DEFAULT_MAX_ITER,
        clustering::DEFAULT_TOL,
    )
    .map_err(err)?;
    Ok((model.labels, model.centroids, model.inertia))
}

/// Mean silhouette score for a labeling.
#[pyfunction]
fn silhouette(data: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<f64> {
    let m = matrix_from(data)?;
    clustering::silhouette(&m, &labels).map_err(err)
}

/// Silhouette sweep; returns (best_k, [(k, score)]).
#[pyfunction]
#[pyo3(signature = (data, ks, seed = 0))]
fn select_k(data: Vec<Vec<f64>>, ks: Vec<usize>, seed: u64) -> PyResult<(usize, Vec<(usize, f64)>)> {
    let m = matrix_from(data)?;
    let sel = clustering::select_k(&m, &ks, seed).map_err(err)?;
    Ok((sel.best_k, sel.scores))
}

/// Proximity transition matrix (row-stochastic, k x k, row-major nested).
#[pyfunction]
fn transition_matrix(
    points: Vec<(f64, f64)>,
    labels: Vec<usize>,
    k: usize,
    threshold: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let pts: Vec<[f64; 2]> = points.iter().map(|&(x, y)| [x, y]).collect();
    let t = stateflow::build_transition_matrix(
        "py",
        &pts,
        &labels,
        k,
        threshold,
        TransitionMode::Proximity,
    )
    .map_err(err)?;
    Ok((0..k).map(|i| t.rows[i * k..(i + 1) * k].to_vec()).collect())
}

/// PageRank over a row-stochastic matrix given as nested rows.
#[pyfunction]
#[pyo3(signature = (rows, alpha = 0.85, tol = 1e-10))]
fn pagerank(rows: Vec<Vec<f64>>, alpha: f64, tol: f64) -> PyResult<Vec<f64>> {
    let k = rows.len();
    if rows.iter().any(|r| r.len() != k) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    let t = stateflow::TransitionMatrix {
        participant_id: "py".into(),
        k,
        rows: rows.into_iter().flatten().collect(),
        threshold: 1.0,
    };
    let v = stateflow::pagerank(&t, alpha, stateflow::DEFAULT_MAX_ITER, tol).map_err(err)?;
    Ok(v.values)
}

/// Transition matrix + PageRank in one call; threshold defaults to the
/// median pairwise distance of the points.
#[pyfunction]
#[pyo3(signature = (points, labels, k, threshold = None, alpha = 0.85))]
fn fingerprint(
    points: Vec<(f64, f64)>,
    labels: Vec<usize>,
    k: usize,
    threshold: Option<f64>,
    alpha: f64,
) -> PyResult<Vec<f64>> {
    let pts: Vec<[f64; 2]> = points.iter().map(|&(x, y)| [x, y]).collect();
    let threshold = match threshold {
        Some(t) => t,
        None => stateflow::median_pairwise_distance(&pts)
            .ok_or_else(|| PyValueError::new_err("need >= 2 points for median threshold"))?,
    };
    let (_t, v) = stateflow::fingerprint("py", &pts, &labels, k, threshold, alpha).map_err(err)?;
    Ok(v.values)
}

/// Paired two-sided t-test; returns (t, df, p_value, cohens_d).
#[pyfunction]
fn paired_t_test(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64, f64, f64)> {
    let r = cohort::paired_t_test(&x, &y).map_err(err)?;
    Ok((r.t, r.df, r.p_value, r.cohens_d))
}

/// Annualized change score (current - prior) / years elapsed; dates are
/// ISO strings.
#[pyfunction]
fn delta_score(current: f64, prior: f64, assessment_date: &str, prior_date: &str) -> PyResult<f64> {
    let parse = |s: &str| -> PyResult<NaiveDate> {
        s.parse()
            .map_err(|e| PyValueError::new_err(format!("bad date: {e}")))
    };
    cohort::delta_score(current, prior, parse(assessment_date)?, parse(prior_date)?).map_err(err)
}

/// Run pipeline stages from a config JSON string. `stages` may name a
/// subset (e.g. ["synth", "preprocess"]); default runs everything.
#[pyfunction]
#[pyo3(signature = (config_json, stages = None))]
fn run_pipeline(config_json: &str, stages: Option<Vec<String>>) -> PyResult<()> {
    let config: pipeline::PipelineConfig = serde_json::from_str(config_json)
        .map_err(|e| PyValueError::new_err(format!("bad config: {e}")))?;
    let selected: Vec<pipeline::Stage> = match stages {
        None => pipeline::ALL_STAGES.to_vec(),
        Some(names) => names
            .iter()
            .map(|n| {
                pipeline::ALL_STAGES
                    .into_iter()
                    .find(|s| s.name() == n)
                    .ok_or_else(|| PyValueError::new_err(format!("unknown stage: {n}")))
            })
            .collect::<PyResult<_>>()?,
    };
    for stage in selected {
        pipeline::run_stage(&config, stage).map_err(err)?;
    }
    Ok(())
}

#[pymodule]
fn homestate_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(hash_embed, m)?)?;
    m.add_function(wrap_pyfunction!(tsne, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(silhouette, m)?)?;
    m.add_function(wrap_pyfunction!(select_k, m)?)?;
    m.add_function(wrap_pyfunction!(transition_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(pagerank, m)?)?;
    m.add_function(wrap_pyfunction!(fingerprint, m)?)?;
    m.add_function(wrap_pyfunction!(paired_t_test, m)?)?;
    m.add_function(wrap_pyfunction!(delta_score, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
