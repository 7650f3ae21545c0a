//! Subcommand implementations. Each returns a one-line human summary; all
//! machine-readable output goes to files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use reid_core::appearance::manage_appearances;
use reid_core::cim::{run_cim_batch, PathRecord};
use reid_core::data::{camera_paths, write_detection_log, AppearanceSet, CameraId, LogFormat, ObjectId};
use reid_core::evaluation::{lab_set_retrieval, MetricsReport, PathEval, Protocol};
use reid_core::fusion::{sample_training_pairs, train, weight_table, write_model, write_weight_table, TrainingMetadata};
use reid_core::similarity::{AppearanceScorer, FusedScorer, PairScorer};
use reid_core::simulator::{generate_scenario, ScenarioSpec};
use reid_core::topology::{build_adjacency, estimate_topology, transitive_reduce, Topology};
use serde::Serialize;

use crate::artifacts::{
    check_model, check_topology, load_model, load_similarity, load_topology, load_truth, read_file, require,
    to_json_bytes, write_file, write_json, Dataset, ModelProvenance, TopologyProvenance,
};
use crate::config::PipelineConfig;
use crate::digest::{sha256_bytes, TOOL_NAME, TOOL_VERSION};
use crate::error::{CliError, CliResult};

/// Files written by `simulate`, in manifest order.
pub const SIMULATION_FILES: [&str; 4] = ["detections.csv", "embeddings.csv", "embeddings.json", "truth.jsonl"];

#[derive(Serialize)]
struct SimulationManifest {
    tool: &'static str,
    tool_version: &'static str,
    spec_sha256: String,
    spec: ScenarioSpec,
    first_phantom_id: u64,
    n_detections: usize,
    n_identities: usize,
    files: BTreeMap<&'static str, String>,
}

pub fn simulate(spec_path: &Path, out: &Path, seed: Option<u64>) -> CliResult<String> {
    let bytes = read_file(spec_path, "scenario spec")?;
    let mut spec: ScenarioSpec = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Validation(format!("{}: {e}", spec_path.display())))?;
    if let Some(seed) = seed {
        spec.scenario.seed = seed;
    }
    let scenario = generate_scenario(&spec.network, &spec.scenario).map_err(|e| match e {
        reid_core::Error::Generation(m) => CliError::Validation(m),
        other => other.into(),
    })?;

    let mut log = Vec::new();
    write_detection_log(&mut log, &scenario.detections, LogFormat::Csv)?;
    let mut emb = Vec::new();
    scenario.embeddings.write_csv(&mut emb)?;
    let sidecar = to_json_bytes(&scenario.embeddings.sidecar());
    let mut truth = Vec::new();
    for t in &scenario.truth {
        serde_json::to_writer(&mut truth, t).expect("serializable truth");
        truth.push(b'\n');
    }

    let mut files = BTreeMap::new();
    for (name, data) in SIMULATION_FILES.into_iter().zip([&log, &emb, &sidecar, &truth]) {
        write_file(&out.join(name), data)?;
        files.insert(name, sha256_bytes(data));
    }
    let manifest = SimulationManifest {
        tool: TOOL_NAME,
        tool_version: TOOL_VERSION,
        spec_sha256: sha256_bytes(&bytes),
        spec,
        first_phantom_id: scenario.first_phantom_id,
        n_detections: scenario.detections.len(),
        n_identities: scenario.truth.len(),
        files,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(format!(
        "simulated {} identities, {} detections, {} embeddings into {}",
        manifest.n_identities,
        manifest.n_detections,
        scenario.embeddings.len(),
        out.display()
    ))
}

pub fn estimate(cfg: &PipelineConfig, out: &Path) -> CliResult<String> {
    let data = Dataset::load(cfg)?;
    let n_cameras = data.n_cameras(cfg);
    let params = cfg.topology.params();
    let (topology, train_ids) = if data.identities().is_empty() {
        eprintln!("warning: detection log is empty; writing an all-zero topology");
        (estimate_topology(n_cameras, &[], None, params)?, 0)
    } else {
        let split = data.split(&cfg.split)?;
        let train_ids = split.train_ids();
        let tracks = data.tracks_of(&train_ids);
        let topology = estimate_topology(n_cameras, &tracks, Some(&train_ids), params)?;
        let paths: Vec<Vec<CameraId>> = camera_paths(&tracks).into_values().collect();
        let mut adjacency = build_adjacency(&paths, n_cameras, cfg.topology.vote_threshold)?;
        if cfg.topology.transitive_reduction {
            adjacency = transitive_reduce(&adjacency);
        }
        (topology.with_adjacency(adjacency)?, train_ids.len())
    };
    let mut doc = topology.to_document();
    doc.provenance = Some(serde_json::to_value(TopologyProvenance::new(cfg, &data.log_sha256)).expect("serializable"));
    write_json(out, &doc)?;
    let connected = topology.pdfs().iter().filter(|p| p.is_connected()).count();
    Ok(format!(
        "estimated {} distributions ({} with transitions) for {} cameras from {} training identities; {} adjacent pairs",
        topology.pdfs().len(),
        connected,
        n_cameras,
        train_ids,
        topology.adjacency.edge_count()
    ))
}

/// Default loss-curve path next to a model file.
pub fn default_loss_path(model: &Path) -> PathBuf {
    let stem = model.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    model.with_file_name(format!("{stem}_loss.csv"))
}

pub fn train_fusion(cfg: &PipelineConfig, out: &Path, loss_csv: &Path) -> CliResult<String> {
    let data = Dataset::load(cfg)?;
    let (provider, similarity_sha256) = load_similarity(cfg)?;
    let topo_path = require(&cfg.paths.topology, "--topology")?;
    let topo = load_topology(topo_path)?;
    check_topology(&topo, cfg, &data.log_sha256)?;

    let split = data.split(&cfg.split)?;
    let tracks = data.tracks_of(&split.fusion_train_ids);
    let window = cfg.fusion.window;
    let pairs = sample_training_pairs(
        &tracks,
        &split.fusion_train_ids,
        &topo.topology,
        window,
        &cfg.fusion.sampling(),
        |a, b| provider.similarity(a, b),
    )?;
    let outcome = train(&pairs, window, &cfg.fusion.train)?;

    let provenance = ModelProvenance {
        tool: TOOL_NAME.into(),
        tool_version: TOOL_VERSION.into(),
        config_digest: cfg.digest(),
        log_sha256: data.log_sha256.clone(),
        topology_sha256: topo.sha256.clone(),
        similarity_sha256,
        split: cfg.split,
        reentry_gap: cfg.topology.reentry_gap,
    };
    let metadata = TrainingMetadata {
        seed: cfg.fusion.train.seed,
        config: Some(cfg.fusion.train),
        best_epoch: Some(outcome.best_epoch),
        curve: outcome.curve.clone(),
        provenance: Some(serde_json::to_value(provenance).expect("serializable")),
    };
    let mut bytes = Vec::new();
    write_model(&mut bytes, &outcome.model, metadata)?;
    bytes.push(b'\n');
    write_file(out, &bytes)?;

    let mut csv = String::from("epoch,train_loss,val_loss\n");
    for r in &outcome.curve {
        csv.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, r.val_loss));
    }
    write_file(loss_csv, csv.as_bytes())?;

    let first = outcome.curve.first().map(|r| r.train_loss).unwrap_or(f64::NAN);
    let last = outcome.curve.last().map(|r| r.train_loss).unwrap_or(f64::NAN);
    Ok(format!(
        "trained W={} (input dim {}, hidden {}) on {} pairs; train loss {first:.4} -> {last:.4}; best epoch {}",
        window,
        outcome.model.input_dim,
        outcome.model.hidden_size,
        pairs.len(),
        outcome.best_epoch
    ))
}

/// Everything `evaluate` and `run-cim` need, with the artifact chain checked.
struct Pipeline {
    cfg: PipelineConfig,
    data: Dataset,
    provider: reid_core::similarity::SimilarityProvider,
    topology: Topology,
    model: reid_core::fusion::FusionModel,
    test_ids: BTreeSet<ObjectId>,
}

impl Pipeline {
    fn load(cfg: &PipelineConfig) -> CliResult<Self> {
        let data = Dataset::load(cfg)?;
        let (provider, similarity_sha256) = load_similarity(cfg)?;
        let topo = load_topology(require(&cfg.paths.topology, "--topology")?)?;
        check_topology(&topo, cfg, &data.log_sha256)?;
        let model = load_model(require(&cfg.paths.model, "--model")?)?;
        check_model(&model, cfg, &data.log_sha256, &topo.sha256, &similarity_sha256)?;
        let split = data.split(&cfg.split)?;
        Ok(Pipeline {
            cfg: cfg.clone(),
            data,
            provider,
            topology: topo.topology,
            model: model.model,
            test_ids: split.test_ids,
        })
    }

    fn scorer(&self, allow_self_pairs: bool) -> FusedScorer<'_> {
        FusedScorer {
            topology: &self.topology,
            model: &self.model,
            provider: &self.provider,
            allow_self_pairs,
        }
    }

    /// Test-identity appearance sets pruned to their reliable appearances.
    fn managed_test_tracks(&self) -> CliResult<Vec<AppearanceSet>> {
        let tracks = self.data.tracks_of(&self.test_ids);
        Ok(manage_appearances(
            &tracks,
            &self.data.detections,
            self.cfg.matching.app_ratio,
            self.cfg.matching.y_reference,
        )?)
    }

    /// The earliest managed set of each listed identity.
    fn first_sets(managed: &[AppearanceSet], ids: &BTreeSet<ObjectId>) -> Vec<AppearanceSet> {
        let mut first: BTreeMap<ObjectId, &AppearanceSet> = BTreeMap::new();
        for t in managed.iter().filter(|t| ids.contains(&t.object_id)) {
            let slot = first.entry(t.object_id).or_insert(t);
            if (t.entry_frame, t.camera) < (slot.entry_frame, slot.camera) {
                *slot = t;
            }
        }
        first.into_values().cloned().collect()
    }
}

/// Which pair scorer `evaluate` uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scoring {
    Fused,
    AppearanceOnly,
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    #[serde(flatten)]
    report: &'a MetricsReport,
    tool: &'static str,
    tool_version: &'static str,
}

pub fn evaluate(cfg: &PipelineConfig, out: &Path, per_query: Option<&Path>, scoring: Scoring) -> CliResult<String> {
    let p = Pipeline::load(cfg)?;
    let managed = p.managed_test_tracks()?;
    let strategy = cfg.matching.strategy()?;
    let digest = cfg.digest();
    let (report, per_query_ap) = match cfg.protocol {
        Protocol::Lab => {
            let fused = p.scorer(false);
            let appearance = AppearanceScorer { provider: &p.provider };
            let scorer: &dyn PairScorer = match scoring {
                Scoring::Fused => &fused,
                Scoring::AppearanceOnly => &appearance,
            };
            let results = lab_set_retrieval(&managed, &managed, scorer, strategy, cfg.matching.seed)?;
            let aps: Vec<(u64, f64)> = results
                .iter()
                .filter(|r| r.has_positive())
                .map(|r| (managed[r.query_id as usize].object_id.0, r.average_precision()))
                .collect();
            (MetricsReport::lab(&results, digest)?, aps)
        }
        Protocol::RealWorld => {
            if scoring == Scoring::AppearanceOnly {
                return Err(CliError::Usage("appearance-only scoring applies to the lab protocol".into()));
            }
            let truth = load_truth(require(&cfg.paths.truth, "--truth")?)?;
            let truth: BTreeMap<ObjectId, Vec<CameraId>> = truth
                .into_iter()
                .filter(|t| p.test_ids.contains(&t.object_id))
                .map(|t| (t.object_id, t.cameras))
                .collect();
            let ids: BTreeSet<ObjectId> = truth.keys().copied().collect();
            let queries = Pipeline::first_sets(&managed, &ids);
            let scorer = p.scorer(true);
            let states = run_cim_batch(&queries, &p.topology, &managed, &scorer, &cfg.matching.cim()?)?;
            let evals: Vec<PathEval> = states
                .iter()
                .map(|s| {
                    let cams = &truth[&s.query_id];
                    let from = cams.iter().position(|&c| c == s.start_camera).unwrap_or(cams.len());
                    PathEval::new(s.query_id, s.start_camera, &s.path, &cams[from..])
                })
                .collect();
            let comparisons = states.iter().map(|s| s.comparisons).sum();
            let aps = evals.iter().map(|e| (e.query_id.0, e.average_precision())).collect();
            (MetricsReport::real_world(&evals, comparisons, digest)?, aps)
        }
    };
    write_json(
        out,
        &MetricsFile {
            report: &report,
            tool: TOOL_NAME,
            tool_version: TOOL_VERSION,
        },
    )?;
    if let Some(path) = per_query {
        let mut csv = String::from("query_id,ap\n");
        for (q, ap) in per_query_ap {
            csv.push_str(&format!("{q},{ap}\n"));
        }
        write_file(path, csv.as_bytes())?;
    }
    Ok(summarize(&report))
}

fn summarize(r: &MetricsReport) -> String {
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
    match r.protocol {
        Protocol::Lab => format!(
            "lab: rank-1 {} rank-5 {} mAP {:.4} over {} queries",
            opt(r.rank1),
            opt(r.rank5),
            r.map,
            r.n_queries
        ),
        Protocol::RealWorld => format!(
            "real_world: precision {} recall {} F1 {} mAP {:.4} over {} queries, {} comparisons",
            opt(r.precision),
            opt(r.recall),
            opt(r.f1),
            r.map,
            r.n_queries,
            r.comparisons.unwrap_or(0)
        ),
    }
}

#[derive(Serialize)]
struct PathLine<'a> {
    config_digest: &'a str,
    tool_version: &'static str,
    #[serde(flatten)]
    record: PathRecord,
}

/// Runs CIM from the first appearance set of each query identity; all
/// test identities when `queries` is empty.
pub fn run_cim(cfg: &PipelineConfig, out: &Path, queries: &[u64]) -> CliResult<String> {
    let p = Pipeline::load(cfg)?;
    let managed = p.managed_test_tracks()?;
    let ids: BTreeSet<ObjectId> = if queries.is_empty() {
        p.test_ids.clone()
    } else {
        let ids: BTreeSet<ObjectId> = queries.iter().map(|&q| ObjectId(q)).collect();
        if let Some(missing) = ids.iter().find(|id| !p.test_ids.contains(id)) {
            return Err(CliError::Validation(format!("query {missing} is not a test identity")));
        }
        ids
    };
    let query_sets = Pipeline::first_sets(&managed, &ids);
    let scorer = p.scorer(true);
    let states = run_cim_batch(&query_sets, &p.topology, &managed, &scorer, &cfg.matching.cim()?)?;
    let digest = cfg.digest();
    let mut bytes = Vec::new();
    let mut matches = 0;
    for s in &states {
        matches += s.path.len();
        let line = PathLine {
            config_digest: &digest,
            tool_version: TOOL_VERSION,
            record: s.report(),
        };
        serde_json::to_writer(&mut bytes, &line).expect("serializable record");
        bytes.push(b'\n');
    }
    write_file(out, &bytes)?;
    Ok(format!("followed {} queries; {} matches emitted", states.len(), matches))
}

#[derive(Serialize)]
struct WeightsMetadata {
    tool: &'static str,
    tool_version: &'static str,
    model_sha256: String,
    config_digest: Option<String>,
    #[serde(rename = "W")]
    window: usize,
    input_dim: usize,
    hidden_size: usize,
    n_rows: usize,
}

pub fn export_weights(model_path: &Path, out: &Path, metadata_path: &Path) -> CliResult<String> {
    let m = load_model(model_path)?;
    let mut csv = Vec::new();
    write_weight_table(&mut csv, &m.model)?;
    write_file(out, &csv)?;
    let meta = WeightsMetadata {
        tool: TOOL_NAME,
        tool_version: TOOL_VERSION,
        model_sha256: m.sha256,
        config_digest: m.provenance.map(|p| p.config_digest),
        window: m.model.window,
        input_dim: m.model.input_dim,
        hidden_size: m.model.hidden_size,
        n_rows: weight_table(&m.model).len(),
    };
    write_json(metadata_path, &meta)?;
    Ok(format!(
        "exported {} weights ({} x {} hidden layer) to {}",
        meta.n_rows,
        meta.hidden_size,
        meta.input_dim,
        out.display()
    ))
}
