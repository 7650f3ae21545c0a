//! Appearance similarity, fused pair scores and set-to-set aggregation.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{AppearanceSet, CameraId, Detection, DetectionKey, EmbeddingTable, ObjectId};
use crate::error::{Error, Result};
use crate::fusion::{detection_pair_input, FusionModel};
use crate::topology::Topology;

pub const DEFAULT_TOP_K: usize = 5;

/// Dense similarity matrix over an explicit detection ordering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecomputedMatrix {
    /// `[camera, object_id, frame]` per row/column.
    pub keys: Vec<(u32, u64, u64)>,
    /// Row-major `keys.len()^2` values.
    pub values: Vec<f64>,
    #[serde(skip)]
    index: HashMap<DetectionKey, usize>,
}

impl PrecomputedMatrix {
    pub fn new(keys: Vec<DetectionKey>, values: Vec<f64>) -> Result<Self> {
        let raw = keys.iter().map(|k| (k.camera.0, k.object_id.0, k.frame)).collect();
        let mut m = PrecomputedMatrix {
            keys: raw,
            values,
            index: HashMap::new(),
        };
        m.finish()?;
        Ok(m)
    }

    fn finish(&mut self) -> Result<()> {
        let n = self.keys.len();
        if self.values.len() != n * n {
            return Err(Error::Shape {
                expected: n * n,
                actual: self.values.len(),
            });
        }
        if let Some(v) = self.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::validation(None, format!("similarity {v} outside [0, 1]")));
        }
        for i in 0..n {
            for j in i + 1..n {
                if self.values[i * n + j] != self.values[j * n + i] {
                    return Err(Error::validation(None, format!("similarity matrix not symmetric at ({i},{j})")));
                }
            }
        }
        self.index.clear();
        for (i, &(c, o, f)) in self.keys.iter().enumerate() {
            let key = DetectionKey {
                camera: CameraId(c),
                object_id: ObjectId(o),
                frame: f,
            };
            if self.index.insert(key, i).is_some() {
                return Err(Error::validation(None, format!("duplicate matrix key {key:?}")));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut m: PrecomputedMatrix = serde_json::from_str(text)?;
        m.finish()?;
        Ok(m)
    }

    fn lookup(&self, k: &DetectionKey) -> Result<usize> {
        self.index
            .get(k)
            .copied()
            .ok_or_else(|| Error::Lookup(format!("no matrix entry for {k:?}")))
    }
}

/// Source of appearance similarity `S_A`.
#[derive(Debug, Clone)]
pub enum SimilarityProvider {
    /// Cosine of the detections' embeddings mapped to `[0, 1]`.
    EmbeddingCosine(EmbeddingTable),
    Precomputed(PrecomputedMatrix),
}

impl SimilarityProvider {
    pub fn similarity(&self, a: &Detection, b: &Detection) -> Result<f64> {
        match self {
            SimilarityProvider::EmbeddingCosine(table) => {
                let ea = embedding_of(table, a)?;
                let eb = embedding_of(table, b)?;
                cosine_similarity(ea, eb)
            }
            SimilarityProvider::Precomputed(m) => {
                let n = m.keys.len();
                Ok(m.values[m.lookup(&a.key())? * n + m.lookup(&b.key())?])
            }
        }
    }
}

fn embedding_of<'t>(table: &'t EmbeddingTable, d: &Detection) -> Result<&'t [f64]> {
    d.embedding_ref
        .and_then(|r| table.row(r))
        .ok_or_else(|| Error::Lookup(format!("no embedding for {:?}", d.key())))
}

/// `(cos(a, b) + 1) / 2`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Contract("cosine similarity of a zero embedding".into()));
    }
    Ok(((dot / (na * nb)).clamp(-1.0, 1.0) + 1.0) / 2.0)
}

/// Scores one pair of detections.
pub trait PairScorer: Sync {
    fn score(&self, a: &Detection, b: &Detection) -> Result<f64>;
}

/// Appearance similarity alone.
pub struct AppearanceScorer<'a> {
    pub provider: &'a SimilarityProvider,
}

impl PairScorer for AppearanceScorer<'_> {
    fn score(&self, a: &Detection, b: &Detection) -> Result<f64> {
        self.provider.similarity(a, b)
    }
}

/// Appearance similarity fused with transition-time evidence.
pub struct FusedScorer<'a> {
    pub topology: &'a Topology,
    pub model: &'a FusionModel,
    pub provider: &'a SimilarityProvider,
    /// Allow both detections to come from one camera.
    pub allow_self_pairs: bool,
}

impl PairScorer for FusedScorer<'_> {
    fn score(&self, a: &Detection, b: &Detection) -> Result<f64> {
        if a.camera == b.camera && !self.allow_self_pairs {
            return Err(Error::Contract(format!(
                "same-camera pair {:?} / {:?} with self-pairs disabled",
                a.key(),
                b.key()
            )));
        }
        let s_a = self.provider.similarity(a, b)?;
        let x = detection_pair_input(a, b, s_a, self.topology, self.model.window)?;
        self.model.forward(&x)
    }
}

/// All `N_A * N_B` scores between two appearance sets, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseScores {
    scores: Vec<f64>,
    sorted: Vec<f64>,
}

impl PairwiseScores {
    pub fn compute(a: &AppearanceSet, b: &AppearanceSet, scorer: &dyn PairScorer) -> Result<Self> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::Contract("cannot compare an empty appearance set".into()));
        }
        let mut scores = Vec::with_capacity(a.len() * b.len());
        for da in &a.appearances {
            for db in &b.appearances {
                scores.push(scorer.score(da, db)?);
            }
        }
        Ok(PairwiseScores::from_scores(scores))
    }

    /// Pool form used when one side is the union of several sets.
    pub fn compute_pool(a: &[&Detection], b: &[&Detection], scorer: &dyn PairScorer) -> Result<Self> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::Contract("cannot compare an empty appearance set".into()));
        }
        let mut scores = Vec::with_capacity(a.len() * b.len());
        for da in a {
            for db in b {
                scores.push(scorer.score(da, db)?);
            }
        }
        Ok(PairwiseScores::from_scores(scores))
    }

    pub fn from_scores(scores: Vec<f64>) -> Self {
        let mut sorted = scores.clone();
        sorted.sort_by(|x, y| y.total_cmp(x));
        PairwiseScores { scores, sorted }
    }

    /// Number of pairwise comparisons made.
    pub fn count(&self) -> usize {
        self.scores.len()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Mean of the `k` largest scores; `k` is clamped to the number of pairs.
    pub fn topk(&self, k: usize) -> Result<f64> {
        if k == 0 {
            return Err(Error::Contract("top-k needs k >= 1".into()));
        }
        if self.sorted.is_empty() {
            return Err(Error::Contract("no scores".into()));
        }
        let k = k.min(self.sorted.len());
        Ok(self.sorted[..k].iter().sum::<f64>() / k as f64)
    }

    pub fn max(&self) -> Result<f64> {
        self.topk(1)
    }

    pub fn avg(&self) -> Result<f64> {
        self.topk(self.count())
    }
}

/// Mean of the `k` best pairwise scores between `a` and `b`.
pub fn topk_score(a: &AppearanceSet, b: &AppearanceSet, k: usize, scorer: &dyn PairScorer) -> Result<f64> {
    PairwiseScores::compute(a, b, scorer)?.topk(k)
}

/// Set-to-set matching strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// One randomly drawn appearance per set.
    SingleShot,
    Max,
    Avg,
    TopK(usize),
}

impl Default for Strategy {
    fn default() -> Self {
        Strategy::TopK(DEFAULT_TOP_K)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::SingleShot => write!(f, "single_shot"),
            Strategy::Max => write!(f, "max"),
            Strategy::Avg => write!(f, "avg"),
            Strategy::TopK(k) => write!(f, "topk:{k}"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_shot" | "single" => Ok(Strategy::SingleShot),
            "max" => Ok(Strategy::Max),
            "avg" | "mean" => Ok(Strategy::Avg),
            "topk" => Ok(Strategy::TopK(DEFAULT_TOP_K)),
            _ => {
                let k = s
                    .strip_prefix("topk:")
                    .or_else(|| s.strip_prefix("top"))
                    .and_then(|k| k.parse::<usize>().ok())
                    .filter(|&k| k >= 1)
                    .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))?;
                Ok(Strategy::TopK(k))
            }
        }
    }
}

impl Strategy {
    /// Scores `a` against `b`; `seed` drives the single-shot draw.
    pub fn score(self, a: &AppearanceSet, b: &AppearanceSet, scorer: &dyn PairScorer, seed: u64) -> Result<f64> {
        let a: Vec<&Detection> = a.appearances.iter().collect();
        let b: Vec<&Detection> = b.appearances.iter().collect();
        Ok(self.score_pool(&a, &b, scorer, seed)?.0)
    }

    /// Pool form of [`Strategy::score`]; also returns the number of pairwise
    /// scores evaluated.
    pub fn score_pool(
        self,
        a: &[&Detection],
        b: &[&Detection],
        scorer: &dyn PairScorer,
        seed: u64,
    ) -> Result<(f64, usize)> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::Contract("cannot compare an empty appearance set".into()));
        }
        if self == Strategy::SingleShot {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let da = a[rng.random_range(0..a.len())];
            let db = b[rng.random_range(0..b.len())];
            return Ok((scorer.score(da, db)?, 1));
        }
        let scores = PairwiseScores::compute_pool(a, b, scorer)?;
        let k = match self {
            Strategy::Max => 1,
            Strategy::Avg => scores.count(),
            Strategy::TopK(k) => k,
            Strategy::SingleShot => unreachable!(),
        };
        Ok((scores.topk(k)?, scores.count()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::BBox;
    use crate::fusion::{build_input, FusionInput};
    use crate::topology::{estimate_topology, TopologyParams};
    use proptest::prelude::{any, prop, prop_assert, prop_assert_eq, prop_assume, proptest};

    struct Table(Vec<f64>, usize);

    impl PairScorer for Table {
        fn score(&self, a: &Detection, b: &Detection) -> Result<f64> {
            Ok(self.0[a.frame as usize * self.1 + b.frame as usize])
        }
    }

    fn det(cam: u32, obj: u64, frame: u64, emb: Option<usize>) -> Detection {
        Detection {
            camera: CameraId(cam),
            object_id: ObjectId(obj),
            frame,
            bbox: BBox::new(0.0, 0.0, 2.0, 2.0),
            embedding_ref: emb,
        }
    }

    fn set(cam: u32, obj: u64, n: u64) -> AppearanceSet {
        AppearanceSet::from_detections((0..n).map(|f| det(cam, obj, f, None)).collect()).unwrap()
    }

    #[test]
    fn cosine_cases() {
        let table = EmbeddingTable::from_rows(2, vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let p = SimilarityProvider::EmbeddingCosine(table);
        let (a, anti, orth) = (det(0, 1, 0, Some(0)), det(1, 2, 0, Some(1)), det(1, 3, 0, Some(2)));
        assert_eq!(p.similarity(&a, &a).unwrap(), 1.0);
        assert_eq!(p.similarity(&a, &anti).unwrap(), 0.0);
        assert_eq!(p.similarity(&a, &orth).unwrap(), 0.5);
        assert!(matches!(p.similarity(&a, &det(0, 4, 0, None)), Err(Error::Lookup(_))));
        assert!(matches!(p.similarity(&a, &det(0, 4, 0, Some(9))), Err(Error::Lookup(_))));
    }

    #[test]
    fn precomputed_lookup() {
        let (a, b) = (det(0, 1, 0, None), det(1, 2, 5, None));
        let m = PrecomputedMatrix::new(vec![a.key(), b.key()], vec![1.0, 0.3, 0.3, 1.0]).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let p = SimilarityProvider::Precomputed(PrecomputedMatrix::from_json(&text).unwrap());
        assert_eq!(p.similarity(&a, &b).unwrap(), 0.3);
        assert!(p.similarity(&a, &det(2, 2, 5, None)).is_err());
        assert!(PrecomputedMatrix::new(vec![a.key(), b.key()], vec![1.0, 0.3, 0.4, 1.0]).is_err());
        assert!(PrecomputedMatrix::new(vec![a.key()], vec![1.5]).is_err());
    }

    #[test]
    fn topk_examples() {
        let s = PairwiseScores::from_scores(vec![0.7, 0.9, 0.6, 0.8]);
        assert!((s.topk(2).unwrap() - 0.85).abs() < 1e-15);
        assert_eq!(s.topk(1).unwrap(), 0.9);
        assert!((s.topk(4).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(s.topk(100).unwrap(), s.avg().unwrap());
        assert!(s.topk(0).is_err());
    }

    #[test]
    fn empty_set_is_a_contract_error() {
        let empty = AppearanceSet {
            object_id: ObjectId(1),
            camera: CameraId(0),
            appearances: vec![],
            entry_frame: 0,
            exit_frame: 0,
        };
        let t = Table(vec![0.5], 1);
        assert!(matches!(topk_score(&empty, &set(1, 2, 1), 1, &t), Err(Error::Contract(_))));
    }

    #[test]
    fn singleton_sets_agree_across_strategies() {
        let t = Table(vec![0.42], 1);
        let (a, b) = (set(0, 1, 1), set(1, 2, 1));
        for s in [Strategy::SingleShot, Strategy::Max, Strategy::Avg, Strategy::TopK(5)] {
            assert_eq!(s.score(&a, &b, &t, 3).unwrap(), 0.42);
        }
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in [Strategy::SingleShot, Strategy::Max, Strategy::Avg, Strategy::TopK(7)] {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!("top5".parse::<Strategy>().unwrap(), Strategy::TopK(5));
        assert!("topk:0".parse::<Strategy>().is_err());
    }

    #[test]
    fn fused_score_matches_direct_evaluation() {
        let mut dets = Vec::new();
        for o in 0..20u64 {
            dets.push(det(0, o, o * 3000, Some(0)));
            dets.push(det(1, o, o * 3000 + 700, Some(1)));
        }
        let tracks = crate::data::group_tracks(&dets, 300);
        let topo = estimate_topology(2, &tracks, None, TopologyParams::default()).unwrap();
        let table = EmbeddingTable::from_rows(2, vec![vec![1.0, 0.2], vec![0.8, 0.5]]).unwrap();
        let provider = SimilarityProvider::EmbeddingCosine(table.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = FusionModel::init(3, &mut rng);
        let scorer = FusedScorer {
            topology: &topo,
            model: &model,
            provider: &provider,
            allow_self_pairs: false,
        };
        let (a, b) = (&dets[0], &dets[1]);
        let s_a = cosine_similarity(table.row(0).unwrap(), table.row(1).unwrap()).unwrap();
        let x: FusionInput = build_input(s_a, topo.pdf(CameraId(0), CameraId(1)), 7, 3).unwrap();
        assert_eq!(scorer.score(a, b).unwrap(), model.forward(&x).unwrap());
        // order of the arguments does not matter
        assert_eq!(scorer.score(b, a).unwrap(), scorer.score(a, b).unwrap());
        assert!(matches!(scorer.score(a, a), Err(Error::Contract(_))));
        // reverse direction has no transitions, so the window is empty
        let back = detection_pair_input(&dets[1], &det(0, 9, 1400, Some(0)), 0.5, &topo, 3).unwrap();
        assert!(back.s_t.iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn degenerate_k(scores in prop::collection::vec(0.0..=1.0f64, 1..60)) {
            let n = scores.len();
            let max = scores.iter().cloned().fold(f64::MIN, f64::max);
            let mean = scores.iter().sum::<f64>() / n as f64;
            let s = PairwiseScores::from_scores(scores);
            prop_assert!((s.topk(1).unwrap() - max).abs() < 1e-12);
            prop_assert!((s.topk(n).unwrap() - mean).abs() < 1e-12);
            let mut last = f64::INFINITY;
            for k in 1..=n {
                let v = s.topk(k).unwrap();
                prop_assert!(v <= last + 1e-15);
                last = v;
            }
        }

        #[test]
        fn comparison_count_is_the_product(na in 1u64..8, nb in 1u64..8) {
            let t = Table(vec![0.5; 64], 8);
            let s = PairwiseScores::compute(&set(0, 1, na), &set(1, 2, nb), &t).unwrap();
            prop_assert_eq!(s.count() as u64, na * nb);
        }

        #[test]
        fn cosine_symmetric_and_bounded(
            a in prop::collection::vec(-5.0..5.0f64, 4),
            b in prop::collection::vec(-5.0..5.0f64, 4),
        ) {
            prop_assume!(a.iter().any(|v| v.abs() > 1e-3) && b.iter().any(|v| v.abs() > 1e-3));
            let ab = cosine_similarity(&a, &b).unwrap();
            prop_assert_eq!(ab, cosine_similarity(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn single_shot_is_seeded(seed in any::<u64>()) {
            let t = Table((0..16).map(|v| v as f64 / 16.0).collect(), 4);
            let (a, b) = (set(0, 1, 4), set(1, 2, 4));
            prop_assert_eq!(
                Strategy::SingleShot.score(&a, &b, &t, seed).unwrap(),
                Strategy::SingleShot.score(&a, &b, &t, seed).unwrap()
            );
            let max = Strategy::Max.score(&a, &b, &t, 0).unwrap();
            let avg = Strategy::Avg.score(&a, &b, &t, 0).unwrap();
            let top = Strategy::TopK(3).score(&a, &b, &t, 0).unwrap();
            prop_assert!(max >= top && top >= avg);
        }
    }
}
