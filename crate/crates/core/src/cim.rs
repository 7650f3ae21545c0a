//! Causal identity matching: follow a query forward through the camera
//! network, drawing each gallery only from adjacent cameras at plausible
//! transition times and merging every match back into the query.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{AppearanceSet, CameraId, Detection, ObjectId, TrackKey};
use crate::error::{Error, Result};
use crate::similarity::{PairScorer, Strategy};
use crate::topology::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CimConfig {
    pub strategy: Strategy,
    /// A rank-1 match must score strictly above this.
    pub theta_c: f64,
    /// Transition densities at or below this count as impossible.
    pub epsilon: f64,
    pub max_hops: usize,
    /// Drives the single-shot strategy's draws.
    pub seed: u64,
}

impl Default for CimConfig {
    fn default() -> Self {
        CimConfig {
            strategy: Strategy::default(),
            theta_c: 0.6,
            epsilon: 1e-12,
            max_hops: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    NoCandidates,
    BelowThreshold,
    MaxHops,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Running,
    Terminated(TerminationReason),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub camera: CameraId,
    pub matched_object: ObjectId,
    #[serde(skip)]
    pub track: Option<TrackKey>,
    pub score: f64,
    pub delta_frames: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub query_id: ObjectId,
    pub start_camera: CameraId,
    /// The query set followed by every absorbed set, in match order.
    pub merged: Vec<AppearanceSet>,
    pub current_camera: CameraId,
    pub current_exit_frame: u64,
    pub path: Vec<PathStep>,
    pub status: Status,
    /// Pairwise scores evaluated so far.
    pub comparisons: u64,
}

impl TrackState {
    pub fn new(query: AppearanceSet) -> Result<Self> {
        if query.is_empty() {
            return Err(Error::Contract("query has no appearances".into()));
        }
        Ok(TrackState {
            query_id: query.object_id,
            start_camera: query.camera,
            current_camera: query.camera,
            current_exit_frame: query.exit_frame,
            merged: vec![query],
            path: Vec::new(),
            status: Status::Running,
            comparisons: 0,
        })
    }

    pub fn is_terminated(&self) -> bool {
        self.status != Status::Running
    }

    pub fn truncated(&self) -> bool {
        self.status == Status::Terminated(TerminationReason::MaxHops)
    }

    /// Number of appearances in the merged query pool.
    pub fn pool_size(&self) -> usize {
        self.merged.iter().map(|s| s.len()).sum()
    }

    fn pool(&self) -> Vec<&Detection> {
        self.merged.iter().flat_map(|s| s.appearances.iter()).collect()
    }

    fn absorbed(&self) -> BTreeSet<TrackKey> {
        self.merged.iter().map(|s| s.key()).collect()
    }

    pub fn report(&self) -> PathRecord {
        PathRecord {
            query_id: self.query_id,
            start_camera: self.start_camera,
            path: self.path.clone(),
            terminated_reason: match self.status {
                Status::Terminated(r) => Some(r),
                Status::Running => None,
            },
            comparisons: self.comparisons,
        }
    }
}

/// One line of the path report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub query_id: ObjectId,
    pub start_camera: CameraId,
    pub path: Vec<PathStep>,
    pub terminated_reason: Option<TerminationReason>,
    pub comparisons: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalleryCandidate<'a> {
    pub set: &'a AppearanceSet,
    pub camera: CameraId,
    pub delta_frames: u64,
    pub tau: u64,
    pub pdf_value: f64,
}

/// Tracks grouped per camera and sorted by entry frame.
pub struct TrackIndex<'a> {
    by_camera: BTreeMap<CameraId, Vec<&'a AppearanceSet>>,
}

impl<'a> TrackIndex<'a> {
    pub fn new(tracks: &'a [AppearanceSet]) -> Self {
        let mut by_camera: BTreeMap<CameraId, Vec<&'a AppearanceSet>> = BTreeMap::new();
        for t in tracks.iter().filter(|t| !t.is_empty()) {
            by_camera.entry(t.camera).or_default().push(t);
        }
        for v in by_camera.values_mut() {
            v.sort_by_key(|t| (t.entry_frame, t.object_id));
        }
        TrackIndex { by_camera }
    }

    /// Sets in `camera` entering within `[from, until)`.
    fn entering(&self, camera: CameraId, from: u64, until: u64) -> &[&'a AppearanceSet] {
        let Some(v) = self.by_camera.get(&camera) else {
            return &[];
        };
        let lo = v.partition_point(|t| t.entry_frame < from);
        let hi = v.partition_point(|t| t.entry_frame < until);
        &v[lo..hi]
    }
}

/// Candidates in cameras adjacent to the current one whose entry follows the
/// current exit at a time the transition distribution allows.
pub fn build_gallery<'a>(
    state: &TrackState,
    topology: &Topology,
    index: &TrackIndex<'a>,
    epsilon: f64,
) -> Vec<GalleryCandidate<'a>> {
    let absorbed = state.absorbed();
    let params = &topology.params;
    let horizon = state
        .current_exit_frame
        .saturating_add(params.bin_width.saturating_mul(params.n_bins as u64));
    let mut out = Vec::new();
    for cam in topology.adjacency.successors(state.current_camera) {
        let pdf = topology.pdf(state.current_camera, cam);
        for set in index.entering(cam, state.current_exit_frame, horizon) {
            if absorbed.contains(&set.key()) {
                continue;
            }
            let delta_frames = set.entry_frame - state.current_exit_frame;
            let tau = params.bin_of(delta_frames);
            let pdf_value = pdf.value_at(tau as i64);
            if pdf_value > epsilon {
                out.push(GalleryCandidate {
                    set,
                    camera: cam,
                    delta_frames,
                    tau,
                    pdf_value,
                });
            }
        }
    }
    out
}

/// Scores every candidate against the merged query and absorbs the best one
/// if it clears `theta_c`; otherwise the state terminates.
pub fn cim_step(
    mut state: TrackState,
    gallery: &[GalleryCandidate<'_>],
    scorer: &dyn PairScorer,
    strategy: Strategy,
    theta_c: f64,
    seed: u64,
) -> Result<TrackState> {
    if state.is_terminated() {
        return Ok(state);
    }
    if gallery.is_empty() {
        state.status = Status::Terminated(TerminationReason::NoCandidates);
        return Ok(state);
    }
    let pool = state.pool();
    let mut best: Option<(usize, f64)> = None;
    let mut comparisons = 0;
    for (i, cand) in gallery.iter().enumerate() {
        let gallery_refs: Vec<&Detection> = cand.set.appearances.iter().collect();
        let draw = seed ^ ((state.path.len() as u64) << 32 | i as u64);
        let (s, n) = strategy.score_pool(&pool, &gallery_refs, scorer, draw)?;
        comparisons += n as u64;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    state.comparisons += comparisons;
    let (i, score) = best.expect("non-empty gallery");
    if score > theta_c {
        let cand = &gallery[i];
        state.path.push(PathStep {
            camera: cand.camera,
            matched_object: cand.set.object_id,
            track: Some(cand.set.key()),
            score,
            delta_frames: cand.delta_frames,
        });
        state.current_camera = cand.camera;
        state.current_exit_frame = cand.set.exit_frame;
        state.merged.push(cand.set.clone());
    } else {
        state.status = Status::Terminated(TerminationReason::BelowThreshold);
    }
    Ok(state)
}

/// Follows `query` forward until no candidate clears the threshold or
/// `max_hops` matches have been made.
pub fn run_cim(
    query: &AppearanceSet,
    topology: &Topology,
    index: &TrackIndex<'_>,
    scorer: &dyn PairScorer,
    cfg: &CimConfig,
) -> Result<TrackState> {
    if query.camera.index() >= topology.n_cameras {
        return Err(Error::Contract(format!("query camera {} is not in the network", query.camera)));
    }
    let mut state = TrackState::new(query.clone())?;
    while !state.is_terminated() {
        if state.path.len() >= cfg.max_hops {
            state.status = Status::Terminated(TerminationReason::MaxHops);
            break;
        }
        let gallery = build_gallery(&state, topology, index, cfg.epsilon);
        state = cim_step(state, &gallery, scorer, cfg.strategy, cfg.theta_c, cfg.seed ^ query.object_id.0.rotate_left(17))?;
    }
    Ok(state)
}

/// Runs every query independently, in parallel; results follow query order.
pub fn run_cim_batch(
    queries: &[AppearanceSet],
    topology: &Topology,
    tracks: &[AppearanceSet],
    scorer: &dyn PairScorer,
    cfg: &CimConfig,
) -> Result<Vec<TrackState>> {
    let index = TrackIndex::new(tracks);
    queries
        .par_iter()
        .map(|q| run_cim(q, topology, &index, scorer, cfg))
        .collect()
}
