use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::{AppearanceSet, CameraId, ObjectId};

/// Counts of observed transition times for one ordered camera pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionHistogram {
    pub from: CameraId,
    pub to: CameraId,
    pub bins: Vec<u64>,
    pub bin_width: u64,
    /// Transitions at or beyond `bins.len() * bin_width` frames.
    pub overflow: u64,
}

impl TransitionHistogram {
    pub fn new(from: CameraId, to: CameraId, bin_width: u64, n_bins: usize) -> Self {
        assert!(bin_width > 0, "bin width must be positive");
        TransitionHistogram {
            from,
            to,
            bins: vec![0; n_bins],
            bin_width,
            overflow: 0,
        }
    }

    pub fn add_delta(&mut self, delta_frames: u64) {
        let bin = delta_frames / self.bin_width;
        match self.bins.get_mut(bin as usize) {
            Some(count) => *count += 1,
            None => self.overflow += 1,
        }
    }

    /// Number of positive pairs that landed inside the histogram (N_ij).
    pub fn n_pairs(&self) -> u64 {
        self.bins.iter().sum()
    }
}

/// A same-identity move from one appearance set to a later one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub object_id: ObjectId,
    pub from: CameraId,
    pub to: CameraId,
    pub delta_frames: u64,
}

/// Frames from the end of `source` to the start of `dest`, if non-negative.
pub fn transition_delta(source: &AppearanceSet, dest: &AppearanceSet) -> Option<u64> {
    dest.entry_frame.checked_sub(source.exit_frame)
}

/// Builds the histogram of one ordered camera pair from positive pairs
/// `(source in from, destination in to)`. Pairs whose destination starts
/// before the source ends are skipped.
pub fn build_transition_histogram(
    from: CameraId,
    to: CameraId,
    pairs: &[(&AppearanceSet, &AppearanceSet)],
    bin_width: u64,
    n_bins: usize,
) -> TransitionHistogram {
    let mut hist = TransitionHistogram::new(from, to, bin_width, n_bins);
    for (src, dst) in pairs {
        debug_assert_eq!(src.object_id, dst.object_id, "positive pairs share an identity");
        if let Some(dt) = transition_delta(src, dst) {
            hist.add_delta(dt);
        }
    }
    hist
}

/// Every positive pair of appearance sets, oriented so the transition time is
/// non-negative. Sets that overlap in time are not paired. When `ids` is
/// given only those identities contribute.
pub fn positive_transitions(tracks: &[AppearanceSet], ids: Option<&BTreeSet<ObjectId>>) -> Vec<Transition> {
    let mut by_object: std::collections::BTreeMap<ObjectId, Vec<&AppearanceSet>> = Default::default();
    for t in tracks {
        if ids.is_none_or(|ids| ids.contains(&t.object_id)) {
            by_object.entry(t.object_id).or_default().push(t);
        }
    }
    let mut out = Vec::new();
    for (object_id, sets) in by_object {
        for (a_idx, a) in sets.iter().enumerate() {
            for b in &sets[a_idx + 1..] {
                let oriented = match (transition_delta(a, b), transition_delta(b, a)) {
                    (Some(dt), _) => Some((a.camera, b.camera, dt)),
                    (None, Some(dt)) => Some((b.camera, a.camera, dt)),
                    (None, None) => None,
                };
                if let Some((from, to, delta_frames)) = oriented {
                    out.push(Transition {
                        object_id,
                        from,
                        to,
                        delta_frames,
                    });
                }
            }
        }
    }
    out
}
