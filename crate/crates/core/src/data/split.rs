use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::types::ObjectId;
use crate::error::{Error, Result};

/// Identity-disjoint partition used to keep appearance training, fusion
/// training and testing apart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub appearance_train_ids: BTreeSet<ObjectId>,
    pub fusion_train_ids: BTreeSet<ObjectId>,
    pub test_ids: BTreeSet<ObjectId>,
}

impl DatasetSplit {
    /// Identities available for topology estimation (both training pools).
    pub fn train_ids(&self) -> BTreeSet<ObjectId> {
        self.appearance_train_ids.union(&self.fusion_train_ids).copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    /// Fraction of all identities held out for testing.
    pub test_fraction: f64,
    /// Fraction of the remaining training pool for appearance training.
    pub appearance: f64,
    /// Fraction of the remaining training pool for fusion training.
    pub fusion: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            test_fraction: 0.0,
            appearance: 0.9,
            fusion: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(self.appearance) || !in_unit(self.fusion) || !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::Config(format!("split ratios out of range: {self:?}")));
        }
        if self.appearance + self.fusion > 1.0 + 1e-9 {
            return Err(Error::Config(format!(
                "appearance + fusion ratios exceed 1 ({} + {})",
                self.appearance, self.fusion
            )));
        }
        Ok(())
    }
}

/// Deterministically partitions `ids`. Training-pool members not claimed by
/// the appearance or fusion ratios fall into the test set.
pub fn split_identities(ids: &BTreeSet<ObjectId>, seed: u64, ratios: SplitRatios) -> Result<DatasetSplit> {
    ratios.validate()?;
    if ids.len() < 3 {
        return Err(Error::Split(format!("need at least 3 identities, got {}", ids.len())));
    }
    let mut order: Vec<ObjectId> = ids.iter().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let n = order.len();
    let n_test = ((ratios.test_fraction * n as f64).round() as usize).min(n - 2);
    let pool = n - n_test;
    let mut n_app = (ratios.appearance * pool as f64).round() as usize;
    let mut n_fus = (ratios.fusion * pool as f64).round() as usize;
    if ratios.fusion > 0.0 && n_fus == 0 {
        n_fus = 1;
    }
    if ratios.appearance > 0.0 && n_app == 0 {
        n_app = 1;
    }
    n_app = n_app.min(pool);
    n_fus = n_fus.min(pool - n_app);
    if ratios.fusion > 0.0 && n_fus == 0 && n_app > 1 {
        n_app -= 1;
        n_fus = 1;
    }

    let test_ids: BTreeSet<ObjectId> = order[..n_test]
        .iter()
        .chain(&order[n_test + n_app + n_fus..])
        .copied()
        .collect();
    Ok(DatasetSplit {
        appearance_train_ids: order[n_test..n_test + n_app].iter().copied().collect(),
        fusion_train_ids: order[n_test + n_app..n_test + n_app + n_fus].iter().copied().collect(),
        test_ids,
    })
}
