use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::input::build_input;
use super::train::LabeledPair;
use crate::data::{AppearanceSet, Detection, ObjectId};
use crate::error::{Error, Result};
use crate::topology::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairSampling {
    /// Detection pairs drawn from each same-identity pair of sets.
    pub pairs_per_track_pair: usize,
    pub negative_ratio: f64,
    pub seed: u64,
}

impl Default for PairSampling {
    fn default() -> Self {
        PairSampling {
            pairs_per_track_pair: 8,
            negative_ratio: 1.0,
            seed: 0,
        }
    }
}

/// Builds the fusion input for two detections in different cameras. The
/// earlier detection is treated as the source; its camera selects the
/// transition distribution and the frame gap selects the bin.
pub fn detection_pair_input(
    a: &Detection,
    b: &Detection,
    s_a: f64,
    topology: &Topology,
    window: usize,
) -> Result<super::FusionInput> {
    let (src, dst) = if a.frame <= b.frame { (a, b) } else { (b, a) };
    let tau = topology.params.bin_of(dst.frame - src.frame) as i64;
    build_input(s_a, topology.pdf(src.camera, dst.camera), tau, window)
}

/// Labeled pairs for fusion training drawn from the identities in `ids`.
///
/// Positives pair detections of one identity seen in two cameras. Negatives
/// are detections of different identities in different cameras, drawn
/// uniformly at `negative_ratio` per positive.
pub fn sample_training_pairs<F>(
    tracks: &[AppearanceSet],
    ids: &BTreeSet<ObjectId>,
    topology: &Topology,
    window: usize,
    sampling: &PairSampling,
    mut similarity: F,
) -> Result<Vec<LabeledPair>>
where
    F: FnMut(&Detection, &Detection) -> Result<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let sets: Vec<&AppearanceSet> = tracks.iter().filter(|t| ids.contains(&t.object_id) && !t.is_empty()).collect();
    let mut pairs = Vec::new();

    for (i, a) in sets.iter().enumerate() {
        for b in &sets[i + 1..] {
            if a.object_id != b.object_id || a.camera == b.camera {
                continue;
            }
            for _ in 0..sampling.pairs_per_track_pair {
                let da = a.appearances.choose(&mut rng).expect("non-empty set");
                let db = b.appearances.choose(&mut rng).expect("non-empty set");
                let s = similarity(da, db)?;
                pairs.push(LabeledPair {
                    input: detection_pair_input(da, db, s, topology, window)?,
                    label: 1.0,
                });
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::Training("no cross-camera positive pairs among the fusion identities".into()));
    }

    let distinct_ids: BTreeSet<ObjectId> = sets.iter().map(|s| s.object_id).collect();
    let distinct_cams: BTreeSet<_> = sets.iter().map(|s| s.camera).collect();
    if distinct_ids.len() < 2 || distinct_cams.len() < 2 {
        return Err(Error::Training("negatives need two identities in two cameras".into()));
    }
    let n_neg = (pairs.len() as f64 * sampling.negative_ratio).round() as usize;
    let mut made = 0;
    let mut attempts = 0usize;
    while made < n_neg {
        attempts += 1;
        if attempts > 1000 * (n_neg + 1) {
            return Err(Error::Training("could not sample enough negative pairs".into()));
        }
        let a = sets[rng.random_range(0..sets.len())];
        let b = sets[rng.random_range(0..sets.len())];
        if a.object_id == b.object_id || a.camera == b.camera {
            continue;
        }
        let da = a.appearances.choose(&mut rng).expect("non-empty set");
        let db = b.appearances.choose(&mut rng).expect("non-empty set");
        let s = similarity(da, db)?;
        pairs.push(LabeledPair {
            input: detection_pair_input(da, db, s, topology, window)?,
            label: 0.0,
        });
        made += 1;
    }
    Ok(pairs)
}
