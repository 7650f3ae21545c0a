//! Appearance management: scoring how unreliable each appearance is and
//! pruning appearance sets down to their most reliable members.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{AppearanceSet, BBox, CameraId, Detection, DetectionKey};
use crate::error::{Error, Result};

/// Which box edge decides who is in front when two boxes overlap.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YReference {
    /// The `y` field of the box.
    #[default]
    Top,
    /// `y + h`.
    Bottom,
}

impl YReference {
    fn of(self, b: &BBox) -> f64 {
        match self {
            YReference::Top => b.y,
            YReference::Bottom => b.bottom(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnreliabilityScore {
    pub detection: DetectionKey,
    pub occ: f64,
    pub self_overlap: f64,
    pub u: f64,
}

fn check_box(b: &BBox) -> Result<()> {
    if b.is_valid() {
        Ok(())
    } else {
        Err(Error::validation(None, format!("degenerate box {b:?}")))
    }
}

/// Intersection over union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> Result<f64> {
    check_box(a)?;
    check_box(b)?;
    if a == b {
        return Ok(1.0);
    }
    let iw = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let ih = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return Ok(0.0);
    }
    Ok((inter / (a.area() + b.area() - inter)).clamp(0.0, 1.0))
}

/// Largest IoU between `m` and any co-temporal box lying in front of it.
/// `others` must not contain `m`.
pub fn occlusion_ratio(m: &Detection, others: &[&Detection], y_ref: YReference) -> Result<f64> {
    let ym = y_ref.of(&m.bbox);
    let mut best = 0.0_f64;
    for n in others {
        if ym < y_ref.of(&n.bbox) {
            best = best.max(iou(&m.bbox, &n.bbox)?);
        }
    }
    Ok(best)
}

/// Occlusion times overlap with the previous appearance of the same track.
/// The first appearance of a track (`last = None`) scores zero.
pub fn unreliability(
    m: &Detection,
    others: &[&Detection],
    last: Option<&Detection>,
    y_ref: YReference,
) -> Result<UnreliabilityScore> {
    let occ = occlusion_ratio(m, others, y_ref)?;
    let self_overlap = match last {
        Some(prev) => iou(&m.bbox, &prev.bbox)?,
        None => 0.0,
    };
    Ok(UnreliabilityScore {
        detection: m.key(),
        occ,
        self_overlap,
        u: occ * self_overlap,
    })
}

/// Keeps the `ceil(ratio * N)` appearances with the lowest unreliability
/// (earlier frames win ties, at least one is kept), in frame order.
/// `scores[i]` belongs to `set.appearances[i]`.
pub fn select_reliable(set: &AppearanceSet, ratio: f64, scores: &[UnreliabilityScore]) -> Result<AppearanceSet> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config(format!("appearance ratio must lie in (0, 1], got {ratio}")));
    }
    if scores.len() != set.len() {
        return Err(Error::Shape {
            expected: set.len(),
            actual: scores.len(),
        });
    }
    let n = set.len();
    let keep = ((ratio * n as f64).ceil() as usize).clamp(1, n.max(1));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .u
            .total_cmp(&scores[b].u)
            .then(set.appearances[a].frame.cmp(&set.appearances[b].frame))
    });
    let mut kept: Vec<usize> = order.into_iter().take(keep).collect();
    kept.sort_unstable();
    let appearances = kept.iter().map(|&i| set.appearances[i].clone()).collect();
    Ok(AppearanceSet::from_detections(appearances).unwrap_or_else(|| set.clone()))
}

/// Detections grouped by `(camera, frame)` for co-temporal lookups.
pub struct CoTemporalIndex<'a> {
    by_frame: HashMap<(CameraId, u64), Vec<&'a Detection>>,
}

impl<'a> CoTemporalIndex<'a> {
    pub fn new(detections: &'a [Detection]) -> Self {
        let mut by_frame: HashMap<(CameraId, u64), Vec<&'a Detection>> = HashMap::new();
        for d in detections {
            by_frame.entry((d.camera, d.frame)).or_default().push(d);
        }
        CoTemporalIndex { by_frame }
    }

    /// Detections sharing `m`'s camera and frame, excluding `m`'s object.
    pub fn others(&self, m: &Detection) -> Vec<&'a Detection> {
        self.by_frame
            .get(&(m.camera, m.frame))
            .map(|v| v.iter().copied().filter(|d| d.object_id != m.object_id).collect())
            .unwrap_or_default()
    }
}

/// Scores every appearance of `set` in frame order.
pub fn score_set(set: &AppearanceSet, index: &CoTemporalIndex<'_>, y_ref: YReference) -> Result<Vec<UnreliabilityScore>> {
    let mut out = Vec::with_capacity(set.len());
    let mut last: Option<&Detection> = None;
    for m in &set.appearances {
        out.push(unreliability(m, &index.others(m), last, y_ref)?);
        last = Some(m);
    }
    Ok(out)
}

/// Scores and prunes every set. `detections` supplies the co-temporal
/// objects and normally holds the whole log, including objects outside
/// `tracks`.
pub fn manage_appearances(
    tracks: &[AppearanceSet],
    detections: &[Detection],
    ratio: f64,
    y_ref: YReference,
) -> Result<Vec<AppearanceSet>> {
    let index = CoTemporalIndex::new(detections);
    tracks
        .par_iter()
        .map(|set| {
            let scores = score_set(set, &index, y_ref)?;
            select_reliable(set, ratio, &scores)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ObjectId;
    use proptest::prelude::*;

    fn det(obj: u64, frame: u64, b: BBox) -> Detection {
        Detection {
            camera: CameraId(0),
            object_id: ObjectId(obj),
            frame,
            bbox: b,
            embedding_ref: None,
        }
    }

    fn score(frame: u64, u: f64) -> UnreliabilityScore {
        UnreliabilityScore {
            detection: det(1, frame, BBox::new(0.0, 0.0, 1.0, 1.0)).key(),
            occ: u,
            self_overlap: 1.0,
            u,
        }
    }

    fn set_of(n: u64) -> AppearanceSet {
        AppearanceSet::from_detections((0..n).map(|f| det(1, f, BBox::new(0.0, 0.0, 1.0, 1.0))).collect()).unwrap()
    }

    #[test]
    fn iou_cases() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &BBox::new(20.0, 20.0, 5.0, 5.0)).unwrap(), 0.0);
        assert!((iou(&a, &BBox::new(0.0, 5.0, 10.0, 10.0)).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(iou(&a, &BBox::new(0.0, 0.0, 0.0, 3.0)).is_err());
    }

    #[test]
    fn occlusion_cases() {
        let m = det(1, 0, BBox::new(0.0, 0.0, 10.0, 10.0));
        let n = det(2, 0, BBox::new(0.0, 5.0, 10.0, 10.0));
        assert_eq!(occlusion_ratio(&m, &[], YReference::Top).unwrap(), 0.0);
        assert!((occlusion_ratio(&m, &[&n], YReference::Top).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        // m in front of n
        assert_eq!(occlusion_ratio(&n, &[&m], YReference::Top).unwrap(), 0.0);
        assert!(occlusion_ratio(&m, &[&n], YReference::Bottom).unwrap() > 0.0);
    }

    #[test]
    fn unreliability_cases() {
        let m = det(1, 3, BBox::new(0.0, 0.0, 10.0, 10.0));
        let n = det(2, 3, BBox::new(0.0, 5.0, 10.0, 10.0));
        assert_eq!(unreliability(&m, &[&n], None, YReference::Top).unwrap().u, 0.0);
        let still = det(1, 2, BBox::new(0.0, 0.0, 10.0, 10.0));
        let unoccluded = unreliability(&m, &[], Some(&still), YReference::Top).unwrap();
        assert_eq!((unoccluded.self_overlap, unoccluded.u), (1.0, 0.0));
        // self overlap 0.6: shift by 2.5 gives 75/125
        let prev = det(1, 2, BBox::new(2.5, 0.0, 10.0, 10.0));
        let s = unreliability(&m, &[&n], Some(&prev), YReference::Top).unwrap();
        assert!((s.self_overlap - 0.6).abs() < 1e-15);
        assert!((s.u - 0.2).abs() < 1e-15);
        assert_eq!(s.u, s.occ * s.self_overlap);
    }

    #[test]
    fn selection_cases() {
        let set = set_of(40);
        let flat: Vec<_> = (0..40).map(|f| score(f, 0.3)).collect();
        assert_eq!(select_reliable(&set, 1.0, &flat).unwrap(), set);
        assert_eq!(select_reliable(&set, 0.05, &flat).unwrap().len(), 2);
        let half = select_reliable(&set, 0.5, &flat).unwrap();
        assert_eq!(half.appearances.iter().map(|d| d.frame).collect::<Vec<_>>(), (0..20).collect::<Vec<_>>());
        assert!(select_reliable(&set, 0.0, &flat).is_err());
    }

    #[test]
    fn selection_prefers_low_scores_and_keeps_frame_order() {
        let set = set_of(5);
        let scores: Vec<_> = [0.9, 0.1, 0.5, 0.0, 0.7].iter().enumerate().map(|(f, &u)| score(f as u64, u)).collect();
        let kept = select_reliable(&set, 0.4, &scores).unwrap();
        assert_eq!(kept.appearances.iter().map(|d| d.frame).collect::<Vec<_>>(), vec![1, 3]);
    }

    #[test]
    fn manage_uses_objects_outside_the_tracks() {
        let a: Vec<Detection> = (0..4).map(|f| det(1, f, BBox::new(0.0, 0.0, 10.0, 10.0))).collect();
        // an occluder on frames 2 and 3 only
        let occluders: Vec<Detection> = (2..4).map(|f| det(9, f, BBox::new(0.0, 4.0, 10.0, 10.0))).collect();
        let mut all = a.clone();
        all.extend(occluders);
        let set = AppearanceSet::from_detections(a).unwrap();
        let kept = manage_appearances(&[set], &all, 0.5, YReference::Top).unwrap();
        assert_eq!(kept[0].appearances.iter().map(|d| d.frame).collect::<Vec<_>>(), vec![0, 1]);
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (-20.0..20.0f64, -20.0..20.0f64, 0.5..15.0f64, 0.5..15.0f64).prop_map(|(x, y, w, h)| BBox::new(x, y, w, h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b).unwrap();
            prop_assert_eq!(ab, iou(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(iou(&a, &a).unwrap(), 1.0);
        }

        #[test]
        fn front_box_is_never_occluded(m in arb_box(), others in prop::collection::vec(arb_box(), 0..6)) {
            let md = det(1, 0, m);
            let behind: Vec<Detection> = others
                .into_iter()
                .map(|b| det(2, 0, BBox { y: b.y.min(m.y), ..b }))
                .collect();
            let refs: Vec<&Detection> = behind.iter().collect();
            prop_assert_eq!(occlusion_ratio(&md, &refs, YReference::Top).unwrap(), 0.0);
        }

        #[test]
        fn selection_size(n in 1u64..60, ratio in 0.001..=1.0f64, us in prop::collection::vec(0.0..1.0f64, 60)) {
            let set = set_of(n);
            let scores: Vec<_> = (0..n).map(|f| score(f, us[f as usize])).collect();
            let kept = select_reliable(&set, ratio, &scores).unwrap();
            let want = ((ratio * n as f64).ceil() as usize).max(1);
            prop_assert_eq!(kept.len(), want);
            prop_assert!(kept.appearances.iter().all(|d| set.appearances.contains(d)));
        }
    }
}
