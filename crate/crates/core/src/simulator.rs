//! Seeded synthetic camera networks with ground truth.
//!
//! Identities follow weighted routes through the network, spending a few
//! dozen frames in each camera and travelling between cameras according to
//! per-edge mixtures of truncated Gaussians. Identities in one confuser group
//! share a base embedding. A share of detections is partly covered by a
//! phantom object drawn in front of it, which also bleeds into the occluded
//! detection's embedding.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as NormalCdf};

use crate::data::{BBox, CameraId, Detection, EmbeddingTable, ObjectId};
use crate::error::{Error, Result};
use crate::topology::{AdjacencyMatrix, Topology, TopologyParams, TransitionPdf};

/// Components are cut off this many standard deviations from their mean.
pub const TRUNCATION_SIGMAS: f64 = 3.0;

const FRAME_WIDTH: f64 = 1920.0;
const FRAME_HEIGHT: f64 = 1080.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub mean: f64,
    pub std: f64,
    pub weight: f64,
}

impl GaussianComponent {
    /// Support `[lo, hi]` of the truncated component, in frames.
    pub fn support(&self) -> (f64, f64) {
        (
            (self.mean - TRUNCATION_SIGMAS * self.std).max(0.0),
            self.mean + TRUNCATION_SIGMAS * self.std,
        )
    }

    /// Probability of the truncated component falling in `[a, b)`.
    fn mass(&self, a: f64, b: f64) -> f64 {
        let (lo, hi) = self.support();
        let (a, b) = (a.max(lo), b.min(hi));
        if b <= a {
            return 0.0;
        }
        let n = NormalCdf::new(self.mean, self.std).expect("validated std");
        (n.cdf(b) - n.cdf(a)) / (n.cdf(hi) - n.cdf(lo))
    }
}

/// Transition-time law of one directed edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeLaw {
    pub from: u32,
    pub to: u32,
    pub components: Vec<GaussianComponent>,
}

impl EdgeLaw {
    pub fn gaussian(from: u32, to: u32, mean: f64, std: f64) -> Self {
        EdgeLaw {
            from,
            to,
            components: vec![GaussianComponent { mean, std, weight: 1.0 }],
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        let mut pick: f64 = rng.random();
        let mut comp = self.components[self.components.len() - 1];
        for c in &self.components {
            if pick < c.weight {
                comp = *c;
                break;
            }
            pick -= c.weight;
        }
        let (lo, hi) = comp.support();
        let normal = Normal::new(comp.mean, comp.std).expect("validated std");
        loop {
            let t = normal.sample(rng);
            if t >= lo && t <= hi {
                return t.floor() as u64;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub cameras: Vec<u32>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub n_cameras: usize,
    pub edges: Vec<EdgeLaw>,
    pub routes: Vec<Route>,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            let label = format!("edge {}->{}", e.from, e.to);
            if e.from as usize >= self.n_cameras || e.to as usize >= self.n_cameras || e.from == e.to {
                return Err(Error::Generation(format!("{label} is not between two distinct cameras")));
            }
            if !seen.insert((e.from, e.to)) {
                return Err(Error::Generation(format!("{label} is listed twice")));
            }
            if e.components.is_empty() {
                return Err(Error::Generation(format!("{label} has no components")));
            }
            if e.components.iter().any(|c| !(c.mean > 0.0 && c.std > 0.0 && c.weight >= 0.0)) {
                return Err(Error::Generation(format!("{label} needs positive means and stds")));
            }
            let total: f64 = e.components.iter().map(|c| c.weight).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Generation(format!("{label} weights sum to {total}, not 1")));
            }
        }
        if self.routes.is_empty() || self.routes.iter().all(|r| r.weight <= 0.0) {
            return Err(Error::Generation("no route with positive weight".into()));
        }
        for r in &self.routes {
            if r.cameras.is_empty() || r.weight < 0.0 {
                return Err(Error::Generation("routes need cameras and non-negative weight".into()));
            }
            if let Some(c) = r.cameras.iter().find(|&&c| c as usize >= self.n_cameras) {
                return Err(Error::Generation(format!("route visits unknown camera {c}")));
            }
            for w in r.cameras.windows(2) {
                if !seen.contains(&(w[0], w[1])) {
                    return Err(Error::Generation(format!(
                        "route {:?} uses {}->{} which is not an edge",
                        r.cameras, w[0], w[1]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn edge(&self, from: u32, to: u32) -> Option<&EdgeLaw> {
        self.edges.iter().find(|e| e.from == from && e.to == to)
    }

    /// Four cameras: `c0 -> c1 -> c2 -> c3` plus `c3 -> c1`.
    pub fn four_camera_loop() -> Self {
        NetworkSpec {
            n_cameras: 4,
            edges: vec![
                EdgeLaw::gaussian(0, 1, 1500.0, 100.0),
                EdgeLaw::gaussian(1, 2, 900.0, 80.0),
                EdgeLaw::gaussian(2, 3, 2200.0, 150.0),
                EdgeLaw {
                    from: 3,
                    to: 1,
                    components: vec![
                        GaussianComponent { mean: 800.0, std: 60.0, weight: 0.5 },
                        GaussianComponent { mean: 1700.0, std: 60.0, weight: 0.5 },
                    ],
                },
            ],
            routes: vec![
                Route { cameras: vec![0, 1, 2, 3], weight: 0.4 },
                Route { cameras: vec![0, 1, 2], weight: 0.2 },
                Route { cameras: vec![1, 2, 3], weight: 0.2 },
                Route { cameras: vec![2, 3, 1], weight: 0.2 },
            ],
        }
    }

    fn pick_route(&self, rng: &mut ChaCha8Rng) -> &Route {
        let total: f64 = self.routes.iter().map(|r| r.weight).sum();
        let mut pick = rng.random::<f64>() * total;
        for r in &self.routes {
            if pick < r.weight {
                return r;
            }
            pick -= r.weight;
        }
        self.routes.iter().rev().find(|r| r.weight > 0.0).expect("validated")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub n_identities: usize,
    /// Consecutive identities sharing one base embedding.
    pub confuser_group_size: usize,
    pub embedding_dim: usize,
    pub embedding_noise_std: f64,
    /// Inclusive range of detections per camera visit.
    pub frames_per_visit: (u64, u64),
    /// Share of detections drawn with an occluder in front.
    pub occlusion_rate: f64,
    /// Weight of the occluder's appearance in an occluded embedding.
    pub occlusion_mix: f64,
    /// Identities start their routes uniformly within `[0, horizon)`.
    pub horizon: u64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_identities: 200,
            confuser_group_size: 1,
            embedding_dim: 32,
            embedding_noise_std: 0.05,
            frames_per_visit: (30, 50),
            occlusion_rate: 0.0,
            occlusion_mix: 0.5,
            horizon: 60_000,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_identities > 0
            && self.confuser_group_size >= 1
            && self.embedding_dim > 0
            && self.embedding_noise_std >= 0.0
            && self.frames_per_visit.0 >= 1
            && self.frames_per_visit.0 <= self.frames_per_visit.1
            && (0.0..=1.0).contains(&self.occlusion_rate)
            && (0.0..=1.0).contains(&self.occlusion_mix)
            && self.horizon > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Generation(format!("invalid scenario configuration {self:?}")))
        }
    }
}

/// Spec file contents: the network and the scenario drawn on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub network: NetworkSpec,
    #[serde(default)]
    pub scenario: ScenarioConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visit {
    pub camera: CameraId,
    pub entry_frame: u64,
    pub exit_frame: u64,
}

/// One line of the ground-truth paths file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthPath {
    pub object_id: ObjectId,
    pub cameras: Vec<CameraId>,
    pub visits: Vec<Visit>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    /// Sorted by camera, frame, object.
    pub detections: Vec<Detection>,
    pub embeddings: EmbeddingTable,
    pub truth: Vec<TruthPath>,
    /// Ids at or above this belong to phantom occluders.
    pub first_phantom_id: u64,
}

const STREAM_IDENTITY: u64 = 1 << 48;
const STREAM_BASE: u64 = 2 << 48;
const STREAM_PHANTOM: u64 = 3 << 48;

fn stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose | index);
    rng
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

struct RawDetection {
    det: Detection,
    embedding: Vec<f64>,
}

fn simulate_identity(
    spec: &NetworkSpec,
    cfg: &ScenarioConfig,
    idx: usize,
    phantom_base: u64,
    max_route: usize,
) -> (TruthPath, Vec<RawDetection>) {
    let mut rng = stream(cfg.seed, STREAM_IDENTITY, idx as u64);
    let group = (idx / cfg.confuser_group_size) as u64;
    let base = random_unit(&mut stream(cfg.seed, STREAM_BASE, group), cfg.embedding_dim);
    let object_id = ObjectId(idx as u64);
    let route = spec.pick_route(&mut rng).cameras.clone();
    let mut frame = rng.random_range(0..cfg.horizon);
    let mut visits = Vec::with_capacity(route.len());
    let mut out = Vec::new();

    for (v, &cam) in route.iter().enumerate() {
        if v > 0 {
            let law = spec.edge(route[v - 1], cam).expect("validated route");
            frame += law.sample(&mut rng);
        }
        let n = rng.random_range(cfg.frames_per_visit.0..=cfg.frames_per_visit.1);
        let w = rng.random_range(60.0..160.0);
        let h = rng.random_range(60.0..160.0);
        let mut x = rng.random_range(0.0..FRAME_WIDTH - w - 200.0);
        let mut y = rng.random_range(0.0..FRAME_HEIGHT - h - 200.0);
        let (dx, dy) = (rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
        // one phantom occluder per visit, shown only on occluded frames
        let phantom_id = phantom_base + (idx * max_route + v) as u64;
        let phantom_emb = random_unit(&mut stream(cfg.seed, STREAM_PHANTOM, phantom_id), cfg.embedding_dim);
        let camera = CameraId(cam);
        let entry = frame;

        for f in 0..n {
            let noise: Vec<f64> = (0..cfg.embedding_dim)
                .map(|_| { let z: f64 = StandardNormal.sample(&mut rng); cfg.embedding_noise_std * z })
                .collect();
            let bbox = BBox::new(x, y, w, h);
            let occluded = cfg.occlusion_rate > 0.0 && rng.random::<f64>() < cfg.occlusion_rate;
            let own: Vec<f64> = if occluded {
                base.iter()
                    .zip(&phantom_emb)
                    .map(|(b, p)| (1.0 - cfg.occlusion_mix) * b + cfg.occlusion_mix * p)
                    .collect()
            } else {
                base.clone()
            };
            out.push(RawDetection {
                det: Detection {
                    camera,
                    object_id,
                    frame: frame + f,
                    bbox,
                    embedding_ref: None,
                },
                embedding: own.iter().zip(&noise).map(|(a, b)| a + b).collect(),
            });
            if occluded {
                let shift_y = h * rng.random_range(0.2..0.6);
                let shift_x = w * rng.random_range(-0.2..0.2);
                out.push(RawDetection {
                    det: Detection {
                        camera,
                        object_id: ObjectId(phantom_id),
                        frame: frame + f,
                        bbox: BBox::new((x + shift_x).max(0.0), y + shift_y, w, h),
                        embedding_ref: None,
                    },
                    embedding: phantom_emb.clone(),
                });
            }
            x = (x + dx).clamp(0.0, FRAME_WIDTH - w);
            y = (y + dy).clamp(0.0, FRAME_HEIGHT - h - 200.0);
        }
        frame += n - 1;
        visits.push(Visit {
            camera,
            entry_frame: entry,
            exit_frame: frame,
        });
    }
    let truth = TruthPath {
        object_id,
        cameras: route.iter().map(|&c| CameraId(c)).collect(),
        visits,
    };
    (truth, out)
}

/// Generates a full scenario. Identical inputs give identical output.
pub fn generate_scenario(spec: &NetworkSpec, cfg: &ScenarioConfig) -> Result<Scenario> {
    spec.validate()?;
    cfg.validate()?;
    let max_route = spec.routes.iter().map(|r| r.cameras.len()).max().unwrap_or(0);
    let first_phantom_id = cfg.n_identities as u64;
    let per_identity: Vec<(TruthPath, Vec<RawDetection>)> = (0..cfg.n_identities)
        .into_par_iter()
        .map(|i| simulate_identity(spec, cfg, i, first_phantom_id, max_route))
        .collect();

    let mut truth = Vec::with_capacity(per_identity.len());
    let mut raw = Vec::new();
    for (t, dets) in per_identity {
        truth.push(t);
        raw.extend(dets);
    }
    raw.sort_by(|a, b| {
        (a.det.camera, a.det.frame, a.det.object_id).cmp(&(b.det.camera, b.det.frame, b.det.object_id))
    });
    let mut embeddings = EmbeddingTable::new(cfg.embedding_dim);
    let mut detections = Vec::with_capacity(raw.len());
    for mut r in raw {
        r.det.embedding_ref = Some(embeddings.push(&r.embedding)?);
        detections.push(r.det);
    }
    Ok(Scenario {
        detections,
        embeddings,
        truth,
        first_phantom_id,
    })
}

/// Analytic transition distributions of `spec` on the bins of `params`; the
/// adjacency holds exactly the spec's edges.
pub fn oracle_topology(spec: &NetworkSpec, params: TopologyParams) -> Result<Topology> {
    spec.validate()?;
    params.validate()?;
    let n = spec.n_cameras;
    let bw = params.bin_width as f64;
    let mut rows = vec![vec![0u8; n]; n];
    let pdfs = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            let law = spec.edge(i as u32, j as u32);
            let density = match law {
                Some(law) => {
                    rows[i][j] = 1;
                    (0..params.n_bins)
                        .map(|b| {
                            let (a, z) = (b as f64 * bw, (b + 1) as f64 * bw);
                            law.components.iter().map(|c| c.weight * c.mass(a, z)).sum()
                        })
                        .collect()
                }
                None => vec![0.0; params.n_bins],
            };
            TransitionPdf {
                from: CameraId(i as u32),
                to: CameraId(j as u32),
                density,
                sigma: 0.0,
                n_pairs: 0,
            }
        })
        .collect();
    Topology::from_parts(n, params, pdfs, AdjacencyMatrix::from_rows(&rows)?)
}
