use std::collections::BTreeMap;

use super::types::{AppearanceSet, CameraId, Detection, ObjectId};

/// Frames of absence after which a re-appearance in the same camera opens a
/// new appearance set.
pub const DEFAULT_REENTRY_GAP: u64 = 300;

/// Groups detections into per-(object, camera) appearance sets, splitting a
/// group wherever consecutive frames are more than `reentry_gap` apart.
///
/// Output is ordered by object, camera, entry frame.
pub fn group_tracks(detections: &[Detection], reentry_gap: u64) -> Vec<AppearanceSet> {
    let mut by_key: BTreeMap<(ObjectId, CameraId), Vec<Detection>> = BTreeMap::new();
    for d in detections {
        by_key.entry((d.object_id, d.camera)).or_default().push(d.clone());
    }

    let mut sets = Vec::new();
    for (_, mut dets) in by_key {
        dets.sort_by_key(|d| d.frame);
        let mut current: Vec<Detection> = Vec::new();
        for d in dets {
            if let Some(last) = current.last() {
                if d.frame - last.frame > reentry_gap {
                    sets.extend(AppearanceSet::from_detections(std::mem::take(&mut current)));
                }
            }
            current.push(d);
        }
        sets.extend(AppearanceSet::from_detections(current));
    }
    sets
}

/// Camera sequence visited by each object, ordered by entry frame.
pub fn camera_paths(tracks: &[AppearanceSet]) -> BTreeMap<ObjectId, Vec<CameraId>> {
    let mut visits: BTreeMap<ObjectId, Vec<(u64, CameraId)>> = BTreeMap::new();
    for t in tracks {
        visits.entry(t.object_id).or_default().push((t.entry_frame, t.camera));
    }
    visits
        .into_iter()
        .map(|(id, mut v)| {
            v.sort();
            (id, v.into_iter().map(|(_, c)| c).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::types::BBox;
    use proptest::prelude::*;

    fn det(cam: u32, obj: u64, frame: u64) -> Detection {
        Detection {
            camera: CameraId(cam),
            object_id: ObjectId(obj),
            frame,
            bbox: BBox::new(0.0, 0.0, 10.0, 10.0),
            embedding_ref: None,
        }
    }

    #[test]
    fn consecutive_frames_form_one_set() {
        let sets = group_tracks(&[det(2, 5, 10), det(2, 5, 11), det(2, 5, 12)], DEFAULT_REENTRY_GAP);
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].len(), 3);
        assert_eq!((sets[0].entry_frame, sets[0].exit_frame), (10, 12));
    }

    #[test]
    fn cameras_are_grouped_separately() {
        let sets = group_tracks(&[det(2, 5, 10), det(3, 5, 500)], DEFAULT_REENTRY_GAP);
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].camera, CameraId(2));
        assert_eq!(sets[1].camera, CameraId(3));
    }

    #[test]
    fn gap_above_threshold_opens_new_set() {
        // 400 - 10 = 390 > 300
        let sets = group_tracks(&[det(2, 5, 10), det(2, 5, 400)], DEFAULT_REENTRY_GAP);
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].exit_frame, 10);
        assert_eq!(sets[1].entry_frame, 400);
        // exactly at the gap stays together
        let sets = group_tracks(&[det(2, 5, 10), det(2, 5, 310)], DEFAULT_REENTRY_GAP);
        assert_eq!(sets.len(), 1);
    }

    #[test]
    fn empty_input() {
        assert!(group_tracks(&[], DEFAULT_REENTRY_GAP).is_empty());
    }

    #[test]
    fn camera_paths_follow_entry_order() {
        let sets = group_tracks(&[det(1, 1, 900), det(0, 1, 10), det(2, 1, 2000), det(0, 2, 5)], 300);
        let paths = camera_paths(&sets);
        assert_eq!(paths[&ObjectId(1)], vec![CameraId(0), CameraId(1), CameraId(2)]);
        assert_eq!(paths[&ObjectId(2)], vec![CameraId(0)]);
    }

    proptest! {
        #[test]
        fn grouping_neither_loses_nor_duplicates(
            raw in proptest::collection::vec((0u32..3, 0u64..4, 0u64..2000), 0..80),
            gap in 1u64..500,
        ) {
            let dets: Vec<Detection> = raw.iter().map(|&(c, o, f)| det(c, o, f)).collect();
            let sets = group_tracks(&dets, gap);
            let mut seen: Vec<(u64, u32, u64)> = sets
                .iter()
                .flat_map(|s| s.appearances.iter().map(|d| (d.object_id.0, d.camera.0, d.frame)))
                .collect();
            let mut expected: Vec<(u64, u32, u64)> = raw.iter().map(|&(c, o, f)| (o, c, f)).collect();
            seen.sort();
            expected.sort();
            prop_assert_eq!(seen, expected);
            for s in &sets {
                prop_assert!(!s.is_empty());
                prop_assert!(s.entry_frame <= s.exit_frame);
                prop_assert!(s.appearances.windows(2).all(|w| w[0].frame <= w[1].frame && w[1].frame - w[0].frame <= gap));
                prop_assert!(s.appearances.iter().all(|d| d.object_id == s.object_id && d.camera == s.camera));
            }
        }
    }
}
