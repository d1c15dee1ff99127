//! Stage orchestration: each stage reads its declared input artifacts from
//! the output directory, writes its outputs plus a manifest (input/output
//! hashes, config hash, seed), and fails fast when an upstream artifact is
//! missing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{FixedOffset, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::cohort::{self, Metric, Side};
use crate::clustering;
use crate::data_model::{self, ParticipantProfile};
use crate::embedding::{self, EmbeddingSet};
use crate::error::{Error, Result};
use crate::hashutil::Fnv1a;
use crate::preprocess::{self, DayString};
use crate::projection::{self, Point2D, TsneConfig};
use crate::stateflow::{self, FingerprintRow, TransitionMode};
use crate::svg::ScatterPlot;
use crate::synthgen;
use crate::triplets;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "value")]
pub enum ThresholdPolicy {
    /// Median pairwise distance among the participant's own points.
    Median,
    Fixed(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TripletParams {
    pub n: usize,
    pub window_days: i64,
    pub margin: f64,
    /// k for the one-hot K-means that defines triplet clusters.
    pub onehot_k: usize,
}

impl Default for TripletParams {
    fn default() -> Self {
        TripletParams {
            n: 50_000,
            window_days: 30,
            margin: 1.0,
            onehot_k: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub participants_per_archetype: usize,
    pub days: u32,
    pub start_date: NaiveDate,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            participants_per_archetype: 10,
            days: 180,
            start_date: NaiveDate::from_ymd_opt(2023, 8, 1).unwrap(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub out_dir: PathBuf,
    /// Events/profiles inputs; default to the synth outputs in `out_dir`.
    pub events_path: Option<PathBuf>,
    pub profiles_path: Option<PathBuf>,
    /// External embedding TSV; when unset the hash baseline embedder runs.
    pub embeddings_path: Option<PathBuf>,
    pub window_minutes: u32,
    /// Day-boundary offset from UTC, minutes.
    pub day_offset_minutes: i32,
    pub embed_dim: usize,
    /// Latent state count used for labels and fingerprints.
    pub k_latent: usize,
    /// Swept and reported by the cluster stage.
    pub k_range: Vec<usize>,
    pub tsne: TsneConfig,
    pub threshold: ThresholdPolicy,
    pub alpha: f64,
    pub metric: Metric,
    pub transition_mode: TransitionMode,
    pub seed: u64,
    pub triplets: TripletParams,
    pub synth: SynthParams,
    /// k sweep for participant clustering over fingerprints.
    pub participant_k_range: Vec<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            out_dir: PathBuf::from("out"),
            events_path: None,
            profiles_path: None,
            embeddings_path: None,
            window_minutes: preprocess::DEFAULT_WINDOW_MINUTES,
            day_offset_minutes: 0,
            embed_dim: embedding::DEFAULT_DIM,
            k_latent: 5,
            k_range: vec![4, 5, 6, 7],
            tsne: TsneConfig::default(),
            threshold: ThresholdPolicy::Median,
            alpha: stateflow::DEFAULT_ALPHA,
            metric: Metric::L1,
            transition_mode: TransitionMode::Proximity,
            seed: 0,
            triplets: TripletParams::default(),
            synth: SynthParams::default(),
            participant_k_range: vec![2, 3, 4, 5, 6, 7, 8],
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: PipelineConfig = serde_json::from_str(&text).map_err(|e| Error::Config {
            field: "<config file>".into(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, message: String| {
            Err(Error::Config {
                field: field.into(),
                message,
            })
        };
        if self.window_minutes == 0 || 1440 % self.window_minutes != 0 {
            return fail(
                "window_minutes",
                format!("{} does not divide 1440", self.window_minutes),
            );
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return fail("alpha", format!("{} not in [0,1)", self.alpha));
        }
        if self.k_latent == 0 {
            return fail("k_latent", "must be >= 1".into());
        }
        if self.embed_dim < 16 {
            return fail("embed_dim", format!("{} < 16", self.embed_dim));
        }
        if self.tsne.perplexity <= 0.0 {
            return fail("tsne.perplexity", "must be > 0".into());
        }
        if let ThresholdPolicy::Fixed(v) = self.threshold {
            if v <= 0.0 {
                return fail("threshold", format!("fixed value {v} must be > 0"));
            }
        }
        Ok(())
    }

    /// Hash of the config with `out_dir` blanked: the same logical run into
    /// two directories carries the same identity.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        format!("{:016x}", crate::hashutil::hash_bytes(json.as_bytes()))
    }

    pub fn day_offset(&self) -> FixedOffset {
        FixedOffset::east_opt(self.day_offset_minutes * 60).expect("valid offset")
    }

    pub fn events_path(&self) -> PathBuf {
        self.events_path
            .clone()
            .unwrap_or_else(|| self.out_dir.join("events.jsonl"))
    }

    pub fn profiles_path(&self) -> PathBuf {
        self.profiles_path
            .clone()
            .unwrap_or_else(|| self.out_dir.join("profiles.csv"))
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Synth,
    Preprocess,
    Embed,
    Triplets,
    Tsne,
    Cluster,
    Fingerprint,
    Similar,
    Cohort,
    Report,
}

pub const ALL_STAGES: [Stage; 10] = [
    Stage::Synth,
    Stage::Preprocess,
    Stage::Embed,
    Stage::Triplets,
    Stage::Tsne,
    Stage::Cluster,
    Stage::Fingerprint,
    Stage::Similar,
    Stage::Cohort,
    Stage::Report,
];

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Preprocess => "preprocess",
            Stage::Embed => "embed",
            Stage::Triplets => "triplets",
            Stage::Tsne => "tsne",
            Stage::Cluster => "cluster",
            Stage::Fingerprint => "fingerprint",
            Stage::Similar => "similar",
            Stage::Cohort => "cohort",
            Stage::Report => "report",
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    stage: &'a str,
    config_hash: String,
    seed: u64,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut h = Fnv1a::new();
    h.update(&bytes);
    Ok(format!("{:016x}", h.finish()))
}

/// Keys are paths relative to `base` when possible, so manifests do not
/// depend on where the output directory lives.
fn dir_hashes(base: &Path, paths: &[PathBuf]) -> Result<BTreeMap<String, String>> {
    paths
        .iter()
        .map(|p| {
            let key = p.strip_prefix(base).unwrap_or(p).display().to_string();
            Ok((key, file_hash(p)?))
        })
        .collect()
}

fn write_manifest(
    config: &PipelineConfig,
    stage: Stage,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
) -> Result<()> {
    let manifest = Manifest {
        stage: stage.name(),
        config_hash: config.config_hash(),
        seed: config.seed,
        inputs: dir_hashes(&config.out_dir, inputs)?,
        outputs: dir_hashes(&config.out_dir, outputs)?,
    };
    let path = config.artifact(&format!("manifest_{}.json", stage.name()));
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::io(&path, e.into()))?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

fn require(stage: Stage, path: &Path) -> Result<()> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            stage: stage.name().into(),
            path: path.to_path_buf(),
        });
    }
    Ok(())
}

/// Runs one stage. Artifacts land in `config.out_dir`.
pub fn run_stage(config: &PipelineConfig, stage: Stage) -> Result<()> {
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir).map_err(|e| Error::io(&config.out_dir, e))?;
    match stage {
        Stage::Synth => run_synth(config),
        Stage::Preprocess => run_preprocess(config),
        Stage::Embed => run_embed(config),
        Stage::Triplets => run_triplets(config),
        Stage::Tsne => run_tsne(config),
        Stage::Cluster => run_cluster(config),
        Stage::Fingerprint => run_fingerprint(config),
        Stage::Similar => run_similar(config),
        Stage::Cohort => run_cohort(config),
        Stage::Report => run_report(config),
    }
}

/// Runs every stage in order.
pub fn run_pipeline(config: &PipelineConfig) -> Result<()> {
    for stage in ALL_STAGES {
        run_stage(config, stage)?;
    }
    Ok(())
}

fn run_synth(config: &PipelineConfig) -> Result<()> {
    let archetypes = synthgen::default_archetypes();
    let cohort = synthgen::generate_cohort(
        &archetypes,
        config.synth.participants_per_archetype,
        config.synth.days,
        config.synth.start_date,
        config.seed,
    )?;
    let events_path = config.artifact("events.jsonl");
    let file = std::fs::File::create(&events_path).map_err(|e| Error::io(&events_path, e))?;
    data_model::write_events(std::io::BufWriter::new(file), &cohort.events)?;
    let profiles_path = config.artifact("profiles.csv");
    data_model::write_profiles(&profiles_path, &cohort.profiles)?;
    let truth_path = config.artifact("ground_truth.csv");
    synthgen::write_ground_truth(&truth_path, &cohort.ground_truth)?;
    write_manifest(
        config,
        Stage::Synth,
        &[],
        &[events_path, profiles_path, truth_path],
    )
}

fn run_preprocess(config: &PipelineConfig) -> Result<()> {
    let events_path = config.events_path();
    require(Stage::Preprocess, &events_path)?;
    let records = data_model::load_events_strict(&events_path)?;
    let offset = config.day_offset();
    let mut by_participant: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for rec in records {
        by_participant
            .entry(rec.participant_id.clone())
            .or_default()
            .push(rec);
    }
    let mut days = Vec::new();
    for (id, mut events) in by_participant {
        events.sort_by_key(|e| e.timestamp);
        days.extend(preprocess::events_to_day_strings(
            &id,
            &events,
            offset,
            config.window_minutes,
        )?);
    }
    let days_path = config.artifact("days.csv");
    preprocess::write_day_strings(&days_path, &days)?;
    write_manifest(config, Stage::Preprocess, &[events_path], &[days_path])
}

fn load_days(config: &PipelineConfig, stage: Stage) -> Result<Vec<DayString>> {
    let days_path = config.artifact("days.csv");
    require(stage, &days_path)?;
    preprocess::load_day_strings(&days_path)
}

fn run_embed(config: &PipelineConfig) -> Result<()> {
    let days_path = config.artifact("days.csv");
    let out_path = config.artifact("embeddings.tsv");
    let mut inputs = vec![];
    let set = match &config.embeddings_path {
        Some(external) => {
            require(Stage::Embed, external)?;
            inputs.push(external.clone());
            embedding::load_embeddings(external)?
        }
        None => {
            let days = load_days(config, Stage::Embed)?;
            inputs.push(days_path);
            embedding::hash_embed_all(&days, config.embed_dim, config.seed)?
        }
    };
    embedding::write_embeddings(&out_path, &set)?;
    write_manifest(config, Stage::Embed, &inputs, &[out_path])
}

fn run_triplets(config: &PipelineConfig) -> Result<()> {
    let days = load_days(config, Stage::Triplets)?;
    let onehot = triplets::one_hot_encode(&days);
    let model = clustering::kmeans_fit(
        &onehot.rows,
        config.triplets.onehot_k,
        config.seed,
        clustering::DEFAULT_RESTARTS,
        clustering::DEFAULT_MAX_ITER,
        clustering::DEFAULT_TOL,
    )?;
    let set = triplets::select_triplets(
        &onehot.keys,
        &model.labels,
        config.triplets.n,
        config.triplets.window_days,
        config.seed,
    )?;
    triplets::validate_triplets(&onehot.keys, &model.labels, &set)?;
    let out_path = config.artifact("triplets.jsonl");
    triplets::write_triplets(&out_path, &set)?;
    write_manifest(
        config,
        Stage::Triplets,
        &[config.artifact("days.csv")],
        &[out_path],
    )
}

fn load_embedding_set(config: &PipelineConfig, stage: Stage) -> Result<EmbeddingSet> {
    let path = config.artifact("embeddings.tsv");
    require(stage, &path)?;
    embedding::load_embeddings(&path)
}

fn run_tsne(config: &PipelineConfig) -> Result<()> {
    let set = load_embedding_set(config, Stage::Tsne)?;
    let mut tsne_config = config.tsne.clone();
    tsne_config.seed = config.seed;
    let points = projection::project_embeddings(&set, &tsne_config)?;
    let out_path = config.artifact("points.csv");
    projection::write_points(&out_path, &points)?;
    write_manifest(
        config,
        Stage::Tsne,
        &[config.artifact("embeddings.tsv")],
        &[out_path],
    )
}

fn load_points(config: &PipelineConfig, stage: Stage) -> Result<Vec<Point2D>> {
    let path = config.artifact("points.csv");
    require(stage, &path)?;
    projection::load_points(&path)
}

fn points_matrix(points: &[Point2D]) -> crate::matrix::Matrix {
    let rows: Vec<Vec<f64>> = points.iter().map(|p| vec![p.x, p.y]).collect();
    crate::matrix::Matrix::from_rows(&rows)
}

fn run_cluster(config: &PipelineConfig) -> Result<()> {
    let points = load_points(config, Stage::Cluster)?;
    let data = points_matrix(&points);
    let selection = clustering::select_k(&data, &config.k_range, config.seed)?;
    let model = clustering::kmeans_fit(
        &data,
        config.k_latent,
        config.seed,
        clustering::DEFAULT_RESTARTS,
        clustering::DEFAULT_MAX_ITER,
        clustering::DEFAULT_TOL,
    )?;

    let labels_path = config.artifact("latent_labels.csv");
    write_labels(&labels_path, &points, &model.labels)?;
    let model_path = config.artifact("latent_model.json");
    clustering::write_model(&model_path, &model)?;
    let sel_path = config.artifact("k_selection.json");
    let json = serde_json::to_string_pretty(&selection).map_err(|e| Error::io(&sel_path, e.into()))?;
    std::fs::write(&sel_path, json).map_err(|e| Error::io(&sel_path, e))?;
    write_manifest(
        config,
        Stage::Cluster,
        &[config.artifact("points.csv")],
        &[labels_path, model_path, sel_path],
    )
}

#[derive(Serialize, Deserialize)]
struct LabelRow {
    participant_id: String,
    date: NaiveDate,
    label: usize,
}

fn write_labels(path: &Path, points: &[Point2D], labels: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    for (p, &label) in points.iter().zip(labels) {
        w.serialize(LabelRow {
            participant_id: p.participant_id.clone(),
            date: p.date,
            label,
        })
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn load_labels(config: &PipelineConfig, stage: Stage) -> Result<Vec<usize>> {
    let path = config.artifact("latent_labels.csv");
    require(stage, &path)?;
    let mut rdr = csv::Reader::from_path(&path)
        .map_err(|e| Error::io(&path, std::io::Error::other(e.to_string())))?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: LabelRow =
            row.map_err(|e| Error::io(&path, std::io::Error::other(e.to_string())))?;
        out.push(row.label);
    }
    Ok(out)
}

fn run_fingerprint(config: &PipelineConfig) -> Result<()> {
    let points = load_points(config, Stage::Fingerprint)?;
    let labels = load_labels(config, Stage::Fingerprint)?;
    let mut rows = Vec::new();
    for (id, pts, lbls) in stateflow::group_by_participant(&points, &labels) {
        let threshold = match config.threshold {
            ThresholdPolicy::Fixed(v) => v,
            ThresholdPolicy::Median => {
                stateflow::median_pairwise_distance(&pts).unwrap_or(1.0).max(1e-12)
            }
        };
        let t = stateflow::build_transition_matrix(
            &id,
            &pts,
            &lbls,
            config.k_latent,
            threshold,
            config.transition_mode,
        )?;
        let v = stateflow::pagerank(
            &t,
            config.alpha,
            stateflow::DEFAULT_MAX_ITER,
            stateflow::DEFAULT_TOL,
        )?;
        rows.push(FingerprintRow {
            participant_id: id,
            values: v.values,
            alpha: v.alpha,
            threshold,
            converged: v.converged,
        });
    }
    let out_path = config.artifact("fingerprints.csv");
    stateflow::write_fingerprints(&out_path, &rows)?;
    write_manifest(
        config,
        Stage::Fingerprint,
        &[config.artifact("points.csv"), config.artifact("latent_labels.csv")],
        &[out_path],
    )
}

fn load_fingerprint_map(
    config: &PipelineConfig,
    stage: Stage,
) -> Result<BTreeMap<String, Vec<f64>>> {
    let path = config.artifact("fingerprints.csv");
    require(stage, &path)?;
    Ok(stateflow::load_fingerprints(&path)?
        .into_iter()
        .map(|r| (r.participant_id, r.values))
        .collect())
}

fn run_similar(config: &PipelineConfig) -> Result<()> {
    let fingerprints = load_fingerprint_map(config, Stage::Similar)?;
    let results: Vec<_> = fingerprints
        .keys()
        .map(|id| cohort::rank_similar(&fingerprints, id, config.metric))
        .collect::<Result<_>>()?;
    let json_path = config.artifact("similarity.json");
    let json = serde_json::to_string_pretty(&results).map_err(|e| Error::io(&json_path, e.into()))?;
    std::fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;

    let csv_path = config.artifact("similarity.csv");
    let mut w = csv::Writer::from_path(&csv_path)
        .map_err(|e| Error::io(&csv_path, std::io::Error::other(e.to_string())))?;
    w.write_record(["query", "side", "rank", "participant_id", "distance"])
        .map_err(|e| Error::io(&csv_path, std::io::Error::other(e.to_string())))?;
    for res in &results {
        for (side, list) in [("most", &res.most_similar), ("least", &res.least_similar)] {
            for (rank, (id, dist)) in list.iter().enumerate() {
                w.write_record([
                    res.query.as_str(),
                    side,
                    &(rank + 1).to_string(),
                    id,
                    &format!("{dist}"),
                ])
                .map_err(|e| Error::io(&csv_path, std::io::Error::other(e.to_string())))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    write_manifest(
        config,
        Stage::Similar,
        &[config.artifact("fingerprints.csv")],
        &[json_path, csv_path],
    )
}

fn load_profiles_for(
    config: &PipelineConfig,
    stage: Stage,
) -> Result<BTreeMap<String, ParticipantProfile>> {
    let path = config.profiles_path();
    require(stage, &path)?;
    data_model::load_profiles(&path)
}

fn run_cohort(config: &PipelineConfig) -> Result<()> {
    let fingerprints = load_fingerprint_map(config, Stage::Cohort)?;
    let profiles = load_profiles_for(config, Stage::Cohort)?;
    let sim_path = config.artifact("similarity.json");
    require(Stage::Cohort, &sim_path)?;
    let text = std::fs::read_to_string(&sim_path).map_err(|e| Error::io(&sim_path, e))?;
    let similarity: Vec<cohort::SimilarityResult> =
        serde_json::from_str(&text).map_err(|e| Error::io(&sim_path, e.into()))?;

    let most = cohort::compare_groups(&profiles, &similarity, Side::Most)?;
    let least = cohort::compare_groups(&profiles, &similarity, Side::Least)?;
    let (ids, model, selection) =
        cohort::cluster_participants(&fingerprints, &config.participant_k_range, config.seed)?;

    #[derive(Serialize)]
    struct CohortReport<'a> {
        most_similar: &'a cohort::ComparisonReport,
        least_similar: &'a cohort::ComparisonReport,
        participant_k_selection: &'a clustering::KSelection,
        participant_cluster_k: usize,
    }
    let report_path = config.artifact("cohort_report.json");
    let json = serde_json::to_string_pretty(&CohortReport {
        most_similar: &most,
        least_similar: &least,
        participant_k_selection: &selection,
        participant_cluster_k: model.k,
    })
    .map_err(|e| Error::io(&report_path, e.into()))?;
    std::fs::write(&report_path, json).map_err(|e| Error::io(&report_path, e))?;

    let clusters_path = config.artifact("participant_clusters.csv");
    let mut w = csv::Writer::from_path(&clusters_path)
        .map_err(|e| Error::io(&clusters_path, std::io::Error::other(e.to_string())))?;
    w.write_record(["participant_id", "cluster"])
        .map_err(|e| Error::io(&clusters_path, std::io::Error::other(e.to_string())))?;
    for (id, &label) in ids.iter().zip(&model.labels) {
        w.write_record([id.as_str(), &label.to_string()])
            .map_err(|e| Error::io(&clusters_path, std::io::Error::other(e.to_string())))?;
    }
    w.flush().map_err(|e| Error::io(&clusters_path, e))?;
    write_manifest(
        config,
        Stage::Cohort,
        &[
            config.artifact("fingerprints.csv"),
            config.profiles_path(),
            sim_path,
        ],
        &[report_path, clusters_path],
    )
}

fn run_report(config: &PipelineConfig) -> Result<()> {
    let points = load_points(config, Stage::Report)?;
    let labels = load_labels(config, Stage::Report)?;
    let profiles = load_profiles_for(config, Stage::Report)?;
    let clusters_path = config.artifact("participant_clusters.csv");
    require(Stage::Report, &clusters_path)?;
    let mut rdr = csv::Reader::from_path(&clusters_path)
        .map_err(|e| Error::io(&clusters_path, std::io::Error::other(e.to_string())))?;
    let mut participant_clusters: BTreeMap<String, usize> = BTreeMap::new();
    for rec in rdr.records() {
        let rec =
            rec.map_err(|e| Error::io(&clusters_path, std::io::Error::other(e.to_string())))?;
        participant_clusters.insert(rec[0].to_string(), rec[1].parse().unwrap_or(0));
    }

    let mut outputs = Vec::new();

    // joint map colored by latent state
    let mut map = ScatterPlot::new("Projected participant-days by latent state", "x", "y");
    for (p, &l) in points.iter().zip(&labels) {
        map.push(p.x, p.y, l);
    }
    let map_path = config.artifact("tsne_map.svg");
    map.save(&map_path)?;
    outputs.push(map_path);

    // per-participant trajectories, points connected in date order
    let traj_dir = config.artifact("trajectories");
    std::fs::create_dir_all(&traj_dir).map_err(|e| Error::io(&traj_dir, e))?;
    for (id, pts, lbls) in stateflow::group_by_participant(&points, &labels) {
        let mut plot =
            ScatterPlot::new(&format!("Trajectory {id}"), "x", "y").connect_points();
        for (p, &l) in pts.iter().zip(&lbls) {
            plot.push(p[0], p[1], l);
        }
        let path = traj_dir.join(format!("{id}.svg"));
        plot.save(&path)?;
        outputs.push(path);
    }

    // MMSE vs ADAS-Cog colored by participant cluster
    let mut scatter = ScatterPlot::new(
        "MMSE vs ADAS-Cog by fingerprint cluster",
        "MMSE",
        "ADAS-Cog",
    );
    for (id, profile) in &profiles {
        let cluster = participant_clusters.get(id).copied().unwrap_or(0);
        scatter.push(profile.mmse, profile.adas_cog, cluster);
    }
    let scatter_path = config.artifact("mmse_adas.svg");
    scatter.save(&scatter_path)?;
    outputs.push(scatter_path);

    write_manifest(
        config,
        Stage::Report,
        &[
            config.artifact("points.csv"),
            config.artifact("latent_labels.csv"),
            clusters_path,
            config.profiles_path(),
        ],
        &outputs,
    )
}
