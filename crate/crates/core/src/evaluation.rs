//! Retrieval metrics for the laboratory protocol and path metrics for the
//! real-world protocol.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cim::PathStep;
use crate::data::{AppearanceSet, CameraId, Detection, ObjectId};
use crate::error::{Error, Result};
use crate::similarity::{PairScorer, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub gallery_id: u64,
    pub score: f64,
    pub relevant: bool,
}

/// A query's gallery sorted by score, highest first, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query_id: u64,
    pub ranked: Vec<RankedEntry>,
}

impl RetrievalResult {
    pub fn new(query_id: u64, mut entries: Vec<RankedEntry>) -> Self {
        entries.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.gallery_id.cmp(&b.gallery_id)));
        RetrievalResult {
            query_id,
            ranked: entries,
        }
    }

    pub fn has_positive(&self) -> bool {
        self.ranked.iter().any(|e| e.relevant)
    }

    /// Whether a relevant entry appears within the first `k`.
    pub fn hit_at(&self, k: usize) -> bool {
        self.ranked.iter().take(k).any(|e| e.relevant)
    }

    pub fn average_precision(&self) -> f64 {
        let mut hits = 0usize;
        let mut total = 0.0;
        for (i, e) in self.ranked.iter().enumerate() {
            if e.relevant {
                hits += 1;
                total += hits as f64 / (i + 1) as f64;
            }
        }
        if hits == 0 {
            0.0
        } else {
            total / hits as f64
        }
    }
}

fn scored(results: &[RetrievalResult]) -> Result<Vec<&RetrievalResult>> {
    if results.is_empty() {
        return Err(Error::Evaluation("no retrieval results".into()));
    }
    let usable: Vec<_> = results.iter().filter(|r| r.has_positive()).collect();
    if usable.is_empty() {
        return Err(Error::Evaluation("no query has a relevant gallery entry".into()));
    }
    Ok(usable)
}

/// Fraction of queries (with at least one positive) hit within the top `k`.
pub fn rank_k(results: &[RetrievalResult], k: usize) -> Result<f64> {
    let usable = scored(results)?;
    Ok(usable.iter().filter(|r| r.hit_at(k)).count() as f64 / usable.len() as f64)
}

pub fn mean_ap(results: &[RetrievalResult]) -> Result<f64> {
    let usable = scored(results)?;
    Ok(usable.iter().map(|r| r.average_precision()).sum::<f64>() / usable.len() as f64)
}

/// One-to-all retrieval: every query detection against every gallery
/// detection in another camera. Gallery ids are positions in `gallery`;
/// an entry is relevant when it shows the query's object.
pub fn lab_retrieval(queries: &[Detection], gallery: &[Detection], scorer: &dyn PairScorer) -> Result<Vec<RetrievalResult>> {
    queries
        .par_iter()
        .enumerate()
        .map(|(qi, q)| {
            let entries = gallery
                .iter()
                .enumerate()
                .filter(|(_, g)| g.camera != q.camera)
                .map(|(gi, g)| {
                    Ok(RankedEntry {
                        gallery_id: gi as u64,
                        score: scorer.score(q, g)?,
                        relevant: g.object_id == q.object_id,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(RetrievalResult::new(qi as u64, entries))
        })
        .collect()
}

/// Set-to-set retrieval: every query set against every gallery set in
/// another camera, scored with `strategy`. Ids are positions as in
/// [`lab_retrieval`].
pub fn lab_set_retrieval(
    queries: &[AppearanceSet],
    gallery: &[AppearanceSet],
    scorer: &dyn PairScorer,
    strategy: Strategy,
    seed: u64,
) -> Result<Vec<RetrievalResult>> {
    queries
        .par_iter()
        .enumerate()
        .map(|(qi, q)| {
            let entries = gallery
                .iter()
                .enumerate()
                .filter(|(_, g)| g.camera != q.camera)
                .map(|(gi, g)| {
                    let draw = seed ^ ((qi as u64) << 32 | gi as u64);
                    Ok(RankedEntry {
                        gallery_id: gi as u64,
                        score: strategy.score(q, g, scorer, draw)?,
                        relevant: g.object_id == q.object_id,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(RetrievalResult::new(qi as u64, entries))
        })
        .collect()
}

/// A camera transition attributed to a query: `from -> to` matched to
/// `matched_object`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PathEdge {
    pub query_id: ObjectId,
    pub from: CameraId,
    pub to: CameraId,
    pub matched_object: ObjectId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathEval {
    pub query_id: ObjectId,
    /// Emitted edges in emission order.
    pub emitted: Vec<PathEdge>,
    pub predicted_edges: BTreeSet<PathEdge>,
    pub truth_edges: BTreeSet<PathEdge>,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl PathEval {
    /// Compares a predicted path starting at `start_camera` with the true
    /// camera sequence of `query_id` from that camera on.
    pub fn new(query_id: ObjectId, start_camera: CameraId, predicted: &[PathStep], truth_cameras: &[CameraId]) -> Self {
        let mut emitted = Vec::with_capacity(predicted.len());
        let mut from = start_camera;
        for step in predicted {
            emitted.push(PathEdge {
                query_id,
                from,
                to: step.camera,
                matched_object: step.matched_object,
            });
            from = step.camera;
        }
        let truth_edges: BTreeSet<PathEdge> = truth_cameras
            .windows(2)
            .map(|w| PathEdge {
                query_id,
                from: w[0],
                to: w[1],
                matched_object: query_id,
            })
            .collect();
        Self::from_edges(query_id, emitted, truth_edges)
    }

    pub fn from_edges(query_id: ObjectId, emitted: Vec<PathEdge>, truth_edges: BTreeSet<PathEdge>) -> Self {
        let predicted_edges: BTreeSet<PathEdge> = emitted.iter().copied().collect();
        let tp = predicted_edges.intersection(&truth_edges).count();
        PathEval {
            query_id,
            fp: predicted_edges.len() - tp,
            fn_: truth_edges.len() - tp,
            tp,
            emitted,
            predicted_edges,
            truth_edges,
        }
    }

    /// Average precision over the emission sequence. Each true edge counts
    /// once; no emissions score zero.
    pub fn average_precision(&self) -> f64 {
        let mut seen = BTreeSet::new();
        let mut hits = 0usize;
        let mut total = 0.0;
        for (i, e) in self.emitted.iter().enumerate() {
            if self.truth_edges.contains(e) && seen.insert(*e) {
                hits += 1;
                total += hits as f64 / (i + 1) as f64;
            }
        }
        if hits == 0 {
            0.0
        } else {
            total / hits as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn require_truth(evals: &[PathEval]) -> Result<()> {
    if evals.iter().all(|e| e.truth_edges.is_empty()) {
        return Err(Error::Evaluation("no ground-truth path edges".into()));
    }
    Ok(())
}

/// Micro-averaged precision, recall and F1 over all path edges. Undefined
/// ratios are reported as 0.
pub fn path_f1(evals: &[PathEval]) -> Result<PathScores> {
    require_truth(evals)?;
    let tp: usize = evals.iter().map(|e| e.tp).sum();
    let fp: usize = evals.iter().map(|e| e.fp).sum();
    let fn_: usize = evals.iter().map(|e| e.fn_).sum();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(PathScores {
        precision,
        recall,
        f1,
    })
}

/// Mean per-query path AP over queries that have true edges or emitted
/// something.
pub fn path_map(evals: &[PathEval]) -> Result<f64> {
    require_truth(evals)?;
    let counted: Vec<f64> = evals
        .iter()
        .filter(|e| !e.truth_edges.is_empty() || !e.emitted.is_empty())
        .map(|e| e.average_precision())
        .collect();
    Ok(counted.iter().sum::<f64>() / counted.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Lab,
    RealWorld,
}

/// Metrics report; fields that do not apply to a protocol are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub protocol: Protocol,
    pub rank1: Option<f64>,
    pub rank5: Option<f64>,
    pub map: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub n_queries: usize,
    pub config_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparisons: Option<u64>,
}

impl MetricsReport {
    pub fn lab(results: &[RetrievalResult], config_digest: String) -> Result<Self> {
        Ok(MetricsReport {
            protocol: Protocol::Lab,
            rank1: Some(rank_k(results, 1)?),
            rank5: Some(rank_k(results, 5)?),
            map: mean_ap(results)?,
            precision: None,
            recall: None,
            f1: None,
            n_queries: results.iter().filter(|r| r.has_positive()).count(),
            config_digest,
            comparisons: None,
        })
    }

    pub fn real_world(evals: &[PathEval], comparisons: u64, config_digest: String) -> Result<Self> {
        let s = path_f1(evals)?;
        Ok(MetricsReport {
            protocol: Protocol::RealWorld,
            rank1: None,
            rank5: None,
            map: path_map(evals)?,
            precision: Some(s.precision),
            recall: Some(s.recall),
            f1: Some(s.f1),
            n_queries: evals.len(),
            config_digest,
            comparisons: Some(comparisons),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use proptest::strategy::Strategy;

    fn result(scores_rel: &[(f64, bool)]) -> RetrievalResult {
        RetrievalResult::new(
            0,
            scores_rel
                .iter()
                .enumerate()
                .map(|(i, &(score, relevant))| RankedEntry {
                    gallery_id: i as u64,
                    score,
                    relevant,
                })
                .collect(),
        )
    }

    fn step(cam: u32, obj: u64) -> PathStep {
        PathStep {
            camera: CameraId(cam),
            matched_object: ObjectId(obj),
            track: None,
            score: 0.9,
            delta_frames: 0,
        }
    }

    fn cams(c: &[u32]) -> Vec<CameraId> {
        c.iter().map(|&c| CameraId(c)).collect()
    }

    #[test]
    fn rank_examples() {
        let first = result(&[(0.9, true), (0.5, false)]);
        assert_eq!(rank_k(&[first], 1).unwrap(), 1.0);
        let third = result(&[(0.9, false), (0.8, false), (0.7, true), (0.1, false)]);
        assert_eq!(rank_k(std::slice::from_ref(&third), 1).unwrap(), 0.0);
        assert_eq!(rank_k(&[third], 5).unwrap(), 1.0);
        assert!(rank_k(&[], 1).is_err());
    }

    #[test]
    fn ties_break_by_gallery_id() {
        let r = result(&[(0.5, false), (0.5, true)]);
        assert_eq!(r.ranked[0].gallery_id, 0);
        assert_eq!(rank_k(&[r], 1).unwrap(), 0.0);
    }

    #[test]
    fn ap_examples() {
        let top = result(&[(0.9, true), (0.8, true), (0.1, false)]);
        assert_eq!(mean_ap(&[top]).unwrap(), 1.0);
        let r = result(&[(0.9, true), (0.8, false), (0.7, true), (0.1, false)]);
        assert!((r.average_precision() - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        let r2 = result(&[(0.9, true), (0.8, false), (0.7, true), (0.2, false), (0.3, false)]);
        assert_eq!(r.average_precision(), r2.average_precision());
    }

    #[test]
    fn queries_without_positives_are_skipped() {
        let none = result(&[(0.9, false)]);
        let hit = result(&[(0.9, true)]);
        assert_eq!(rank_k(&[none.clone(), hit], 1).unwrap(), 1.0);
        assert!(mean_ap(&[none]).is_err());
    }

    #[test]
    fn path_f1_examples() {
        let q = ObjectId(1);
        let exact = PathEval::new(q, CameraId(0), &[step(1, 1), step(2, 1)], &cams(&[0, 1, 2]));
        assert_eq!(path_f1(std::slice::from_ref(&exact)).unwrap().f1, 1.0);
        assert_eq!(path_map(&[exact]).unwrap(), 1.0);

        let short = PathEval::new(q, CameraId(0), &[step(1, 1)], &cams(&[0, 1, 2]));
        let s = path_f1(&[short]).unwrap();
        assert_eq!((s.precision, s.recall), (1.0, 0.5));
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);

        let none = PathEval::new(q, CameraId(0), &[], &cams(&[0, 1, 2]));
        assert_eq!(path_f1(std::slice::from_ref(&none)).unwrap(), PathScores { precision: 0.0, recall: 0.0, f1: 0.0 });
        assert_eq!(path_map(&[none]).unwrap(), 0.0);

        let empty = PathEval::new(q, CameraId(0), &[step(1, 2)], &cams(&[0]));
        assert!(path_f1(&[empty]).is_err());
    }

    #[test]
    fn path_ap_in_emission_order() {
        let q = ObjectId(1);
        // correct, wrong object, correct
        let e = PathEval::new(q, CameraId(0), &[step(1, 1), step(2, 9), step(3, 1)], &cams(&[0, 1, 2, 3]));
        // c2 -> c3 was attributed to object 9 and then c3 comes from c2
        assert_eq!(e.tp, 2);
        assert!((e.average_precision() - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(e.tp + e.fp, e.predicted_edges.len());
        assert_eq!(e.tp + e.fn_, e.truth_edges.len());
    }

    /// Rank of every entry without sorting: entries strictly ahead of it.
    fn position(entries: &[(u64, f64, bool)], i: usize) -> usize {
        let (id, s, _) = entries[i];
        entries.iter().filter(|&&(oid, os, _)| os > s || (os == s && oid < id)).count()
    }

    fn oracle_rank_k(queries: &[Vec<(u64, f64, bool)>], k: usize) -> f64 {
        let usable: Vec<_> = queries.iter().filter(|q| q.iter().any(|e| e.2)).collect();
        let hits = usable
            .iter()
            .filter(|q| (0..q.len()).any(|i| q[i].2 && position(q, i) < k))
            .count();
        hits as f64 / usable.len() as f64
    }

    fn oracle_map(queries: &[Vec<(u64, f64, bool)>]) -> f64 {
        let usable: Vec<_> = queries.iter().filter(|q| q.iter().any(|e| e.2)).collect();
        let aps = usable.iter().map(|q| {
            let rel: Vec<usize> = (0..q.len()).filter(|&i| q[i].2).map(|i| position(q, i)).collect();
            rel.iter()
                .map(|&p| rel.iter().filter(|&&o| o <= p).count() as f64 / (p + 1) as f64)
                .sum::<f64>()
                / rel.len() as f64
        });
        aps.sum::<f64>() / usable.len() as f64
    }

    fn arb_queries() -> impl Strategy<Value = Vec<Vec<(u64, f64, bool)>>> {
        prop::collection::vec(
            prop::collection::vec((0u8..5, any::<bool>()), 1..=20).prop_map(|v| {
                v.into_iter()
                    .enumerate()
                    .map(|(i, (s, r))| (i as u64, s as f64 / 4.0, r))
                    .collect::<Vec<_>>()
            }),
            1..=10,
        )
    }

    proptest! {
        #[test]
        fn metrics_match_oracles(queries in arb_queries()) {
            prop_assume!(queries.iter().any(|q| q.iter().any(|e| e.2)));
            let results: Vec<RetrievalResult> = queries
                .iter()
                .map(|q| RetrievalResult::new(0, q.iter().map(|&(gallery_id, score, relevant)| RankedEntry { gallery_id, score, relevant }).collect()))
                .collect();
            for k in [1, 5] {
                prop_assert_eq!(rank_k(&results, k).unwrap(), oracle_rank_k(&queries, k));
            }
            let m = mean_ap(&results).unwrap();
            prop_assert!((m - oracle_map(&queries)).abs() < 1e-12);
            prop_assert!(m <= rank_k(&results, 20).unwrap());
            let mut last = 0.0;
            for k in 1..=20 {
                let r = rank_k(&results, k).unwrap();
                prop_assert!(r >= last);
                last = r;
            }
            prop_assert_eq!(last, 1.0);
        }
    }
}
