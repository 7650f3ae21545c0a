//! Reading and writing pipeline artifacts, and the provenance records that
//! tie them together.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use reid_core::data::{
    group_tracks, parse_detection_log, split_identities, AppearanceSet, DatasetSplit, Detection, EmbeddingSidecar,
    EmbeddingTable, LogFormat, ObjectId,
};
use reid_core::fusion::{read_model, FusionModel, TrainingMetadata};
use reid_core::similarity::{PrecomputedMatrix, SimilarityProvider};
use reid_core::simulator::TruthPath;
use reid_core::topology::{Topology, TopologyDocument};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, SplitConfig};
use crate::digest::{sha256_bytes, TOOL_NAME, TOOL_VERSION};
use crate::error::{CliError, CliResult};

pub fn read_file(path: &Path, what: &str) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Runtime(format!("cannot read {what} {}: {e}", path.display())))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable value");
    out.push(b'\n');
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_file(path, &to_json_bytes(value))
}

fn parse_json<T: DeserializeOwned>(bytes: &[u8], path: &Path) -> CliResult<T> {
    serde_json::from_slice(bytes).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    path.as_deref()
        .ok_or_else(|| CliError::Usage(format!("missing input: pass {flag} or set it in the config file")))
}

/// Sidecar describing an embedding CSV: same stem, `.json` extension.
pub fn sidecar_path(embeddings: &Path) -> PathBuf {
    embeddings.with_extension("json")
}

/// A parsed detection log grouped into appearance sets.
pub struct Dataset {
    pub detections: Vec<Detection>,
    pub tracks: Vec<AppearanceSet>,
    pub log_sha256: String,
}

impl Dataset {
    pub fn load(cfg: &PipelineConfig) -> CliResult<Self> {
        let path = require(&cfg.paths.log, "--log")?;
        let bytes = read_file(path, "detection log")?;
        let detections = parse_detection_log(bytes.as_slice(), LogFormat::from_path(path), cfg.topology.n_cameras)
            .map_err(|e| CliError::from(e).context(path.display()))?;
        let tracks = group_tracks(&detections, cfg.topology.reentry_gap);
        Ok(Dataset {
            detections,
            tracks,
            log_sha256: sha256_bytes(&bytes),
        })
    }

    pub fn identities(&self) -> BTreeSet<ObjectId> {
        self.tracks.iter().map(|t| t.object_id).collect()
    }

    pub fn n_cameras(&self, cfg: &PipelineConfig) -> usize {
        cfg.topology.n_cameras.unwrap_or_else(|| {
            self.detections
                .iter()
                .map(|d| d.camera.index() + 1)
                .max()
                .unwrap_or(0)
        })
    }

    pub fn split(&self, split: &SplitConfig) -> CliResult<DatasetSplit> {
        Ok(split_identities(&self.identities(), split.seed, split.ratios())?)
    }

    pub fn tracks_of(&self, ids: &BTreeSet<ObjectId>) -> Vec<AppearanceSet> {
        self.tracks.iter().filter(|t| ids.contains(&t.object_id)).cloned().collect()
    }
}

/// Appearance similarity source plus the hash of the files it came from.
pub fn load_similarity(cfg: &PipelineConfig) -> CliResult<(SimilarityProvider, String)> {
    if let Some(path) = &cfg.paths.similarity_matrix {
        let bytes = read_file(path, "similarity matrix")?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| CliError::Validation(format!("{} is not UTF-8", path.display())))?;
        let matrix = PrecomputedMatrix::from_json(&text).map_err(|e| CliError::from(e).context(path.display()))?;
        return Ok((SimilarityProvider::Precomputed(matrix), sha256_bytes(&bytes)));
    }
    let path = require(&cfg.paths.embeddings, "--embeddings or --similarity-matrix")?;
    let side_path = sidecar_path(path);
    let side_bytes = read_file(&side_path, "embedding sidecar")?;
    let sidecar: EmbeddingSidecar = parse_json(&side_bytes, &side_path)?;
    let bytes = read_file(path, "embeddings")?;
    let table = EmbeddingTable::read_csv(bytes.as_slice(), &sidecar).map_err(|e| CliError::from(e).context(path.display()))?;
    let mut joined = bytes;
    joined.extend_from_slice(&side_bytes);
    Ok((SimilarityProvider::EmbeddingCosine(table), sha256_bytes(&joined)))
}

/// Recorded in every topology file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyProvenance {
    pub tool: String,
    pub tool_version: String,
    pub config_digest: String,
    pub log_sha256: String,
    pub split: SplitConfig,
    pub reentry_gap: u64,
}

/// Recorded in every model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProvenance {
    pub tool: String,
    pub tool_version: String,
    pub config_digest: String,
    pub log_sha256: String,
    pub topology_sha256: String,
    pub similarity_sha256: String,
    pub split: SplitConfig,
    pub reentry_gap: u64,
}

impl TopologyProvenance {
    pub fn new(cfg: &PipelineConfig, log_sha256: &str) -> Self {
        TopologyProvenance {
            tool: TOOL_NAME.into(),
            tool_version: TOOL_VERSION.into(),
            config_digest: cfg.digest(),
            log_sha256: log_sha256.into(),
            split: cfg.split,
            reentry_gap: cfg.topology.reentry_gap,
        }
    }
}

pub struct LoadedTopology {
    pub topology: Topology,
    pub provenance: Option<TopologyProvenance>,
    pub sha256: String,
}

pub fn load_topology(path: &Path) -> CliResult<LoadedTopology> {
    let bytes = read_file(path, "topology")?;
    let doc: TopologyDocument = parse_json(&bytes, path)?;
    let topology = Topology::from_document(&doc).map_err(|e| CliError::from(e).context(path.display()))?;
    let provenance = doc
        .provenance
        .map(serde_json::from_value)
        .transpose()
        .map_err(|e| CliError::Validation(format!("{}: unreadable provenance: {e}", path.display())))?;
    Ok(LoadedTopology {
        topology,
        provenance,
        sha256: sha256_bytes(&bytes),
    })
}

pub struct LoadedModel {
    pub model: FusionModel,
    pub metadata: TrainingMetadata,
    pub provenance: Option<ModelProvenance>,
    pub sha256: String,
}

pub fn load_model(path: &Path) -> CliResult<LoadedModel> {
    let bytes = read_file(path, "model")?;
    let (model, metadata) = read_model(bytes.as_slice()).map_err(|e| CliError::from(e).context(path.display()))?;
    let provenance = metadata
        .provenance
        .clone()
        .map(serde_json::from_value)
        .transpose()
        .map_err(|e| CliError::Validation(format!("{}: unreadable provenance: {e}", path.display())))?;
    Ok(LoadedModel {
        model,
        metadata,
        provenance,
        sha256: sha256_bytes(&bytes),
    })
}

pub fn load_truth(path: &Path) -> CliResult<Vec<TruthPath>> {
    let bytes = read_file(path, "truth paths")?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::Validation(format!("{} is not UTF-8", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Validation(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn mismatch(what: &str, recorded: impl std::fmt::Display, current: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!(
        "artifact chain mismatch: {what} was recorded as {recorded} but the current input gives {current}"
    ))
}

/// Checks that a topology was estimated from this log with this split.
pub fn check_topology(t: &LoadedTopology, cfg: &PipelineConfig, log_sha256: &str) -> CliResult<()> {
    let p = t
        .provenance
        .as_ref()
        .ok_or_else(|| CliError::Validation("topology carries no provenance; re-run estimate-topology".into()))?;
    if p.log_sha256 != log_sha256 {
        return Err(mismatch("topology log digest", &p.log_sha256, log_sha256));
    }
    if p.split != cfg.split {
        return Err(mismatch("topology split", format!("{:?}", p.split), format!("{:?}", cfg.split)));
    }
    if p.reentry_gap != cfg.topology.reentry_gap {
        return Err(mismatch("topology reentry gap", p.reentry_gap, cfg.topology.reentry_gap));
    }
    Ok(())
}

/// Checks that a model was trained on this log, topology file, similarity
/// source and split.
pub fn check_model(
    m: &LoadedModel,
    cfg: &PipelineConfig,
    log_sha256: &str,
    topology_sha256: &str,
    similarity_sha256: &str,
) -> CliResult<()> {
    let p = m
        .provenance
        .as_ref()
        .ok_or_else(|| CliError::Validation("model carries no provenance; re-run train-fusion".into()))?;
    if p.log_sha256 != log_sha256 {
        return Err(mismatch("model log digest", &p.log_sha256, log_sha256));
    }
    if p.topology_sha256 != topology_sha256 {
        return Err(mismatch("model topology digest", &p.topology_sha256, topology_sha256));
    }
    if p.similarity_sha256 != similarity_sha256 {
        return Err(mismatch("model similarity digest", &p.similarity_sha256, similarity_sha256));
    }
    if p.split != cfg.split {
        return Err(mismatch("model split", format!("{:?}", p.split), format!("{:?}", cfg.split)));
    }
    if p.reentry_gap != cfg.topology.reentry_gap {
        return Err(mismatch("model reentry gap", p.reentry_gap, cfg.topology.reentry_gap));
    }
    Ok(())
}
