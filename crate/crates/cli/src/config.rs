//! Pipeline configuration file.
//!
//! Every section has defaults, so an empty JSON object is a valid config.
//! Command-line flags are applied on top of the loaded file.

use std::path::{Path, PathBuf};

use reid_core::appearance::YReference;
use reid_core::cim::CimConfig;
use reid_core::data::SplitRatios;
use reid_core::evaluation::Protocol;
use reid_core::fusion::{PairSampling, TrainConfig};
use reid_core::similarity::Strategy;
use reid_core::topology::TopologyParams;
use serde::{Deserialize, Serialize};

use crate::digest::sha256_json;
use crate::error::CliError;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "REID_CONFIG";

/// Largest accepted spatial-temporal window.
pub const MAX_WINDOW: usize = 64;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub log: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub similarity_matrix: Option<PathBuf>,
    pub topology: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub seed: u64,
    pub test_fraction: f64,
    pub appearance: f64,
    pub fusion: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            seed: 0,
            test_fraction: 0.5,
            appearance: 0.9,
            fusion: 0.1,
        }
    }
}

impl SplitConfig {
    pub fn ratios(&self) -> SplitRatios {
        SplitRatios {
            test_fraction: self.test_fraction,
            appearance: self.appearance,
            fusion: self.fusion,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    /// Inferred from the log when absent.
    pub n_cameras: Option<usize>,
    pub bin_width: u64,
    #[serde(rename = "B")]
    pub n_bins: usize,
    pub alpha: f64,
    pub beta: f64,
    pub vote_threshold: u32,
    pub transitive_reduction: bool,
    /// Frame gap that splits one identity's detections in a camera into
    /// separate appearance sets.
    pub reentry_gap: u64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        let p = TopologyParams::vehicle();
        TopologyConfig {
            n_cameras: None,
            bin_width: p.bin_width,
            n_bins: p.n_bins,
            alpha: p.alpha,
            beta: p.beta,
            vote_threshold: 2,
            transitive_reduction: true,
            reentry_gap: reid_core::data::DEFAULT_REENTRY_GAP,
        }
    }
}

impl TopologyConfig {
    pub fn params(&self) -> TopologyParams {
        TopologyParams {
            bin_width: self.bin_width,
            n_bins: self.n_bins,
            alpha: self.alpha,
            beta: self.beta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    #[serde(rename = "W")]
    pub window: usize,
    pub pairs_per_track_pair: usize,
    pub train: TrainConfig,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            window: 10,
            pairs_per_track_pair: 32,
            train: TrainConfig::default(),
        }
    }
}

impl FusionConfig {
    pub fn sampling(&self) -> PairSampling {
        PairSampling {
            pairs_per_track_pair: self.pairs_per_track_pair,
            negative_ratio: self.train.negative_ratio,
            seed: self.train.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchingConfig {
    /// `topk`, `max`, `avg` or `single_shot`.
    pub strategy: String,
    pub k: usize,
    pub theta_c: f64,
    pub epsilon: f64,
    pub max_hops: usize,
    pub app_ratio: f64,
    pub y_reference: YReference,
    pub seed: u64,
}

impl Default for MatchingConfig {
    fn default() -> Self {
        let cim = CimConfig::default();
        MatchingConfig {
            strategy: "topk".into(),
            k: reid_core::similarity::DEFAULT_TOP_K,
            theta_c: cim.theta_c,
            epsilon: cim.epsilon,
            max_hops: cim.max_hops,
            app_ratio: 0.05,
            y_reference: YReference::Top,
            seed: 0,
        }
    }
}

impl MatchingConfig {
    pub fn strategy(&self) -> Result<Strategy, CliError> {
        if self.strategy == "topk" {
            return Ok(Strategy::TopK(self.k));
        }
        self.strategy
            .parse()
            .map_err(|e: reid_core::Error| CliError::Validation(e.to_string()))
    }

    pub fn cim(&self) -> Result<CimConfig, CliError> {
        Ok(CimConfig {
            strategy: self.strategy()?,
            theta_c: self.theta_c,
            epsilon: self.epsilon,
            max_hops: self.max_hops,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub split: SplitConfig,
    pub topology: TopologyConfig,
    pub fusion: FusionConfig,
    pub matching: MatchingConfig,
    pub protocol: Protocol,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            paths: Paths::default(),
            split: SplitConfig::default(),
            topology: TopologyConfig::default(),
            fusion: FusionConfig::default(),
            matching: MatchingConfig::default(),
            protocol: Protocol::Lab,
        }
    }
}

impl PipelineConfig {
    /// Loads `path`, or the file named by [`CONFIG_ENV`], or the defaults.
    /// Relative paths inside the file resolve against the file's directory.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(PipelineConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Runtime(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            cfg.paths.resolve_against(base);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        let core = |r: reid_core::Result<()>| r.map_err(|e| CliError::Validation(e.to_string()));
        core(self.split.ratios().validate())?;
        core(self.topology.params().validate())?;
        core(self.fusion.train.validate())?;
        if self.topology.vote_threshold == 0 {
            return bad("vote_threshold must be at least 1".into());
        }
        if self.topology.n_cameras == Some(0) {
            return bad("n_cameras must be positive".into());
        }
        if self.fusion.window > MAX_WINDOW {
            return bad(format!("W must be at most {MAX_WINDOW}, got {}", self.fusion.window));
        }
        if self.fusion.pairs_per_track_pair == 0 {
            return bad("pairs_per_track_pair must be positive".into());
        }
        let m = &self.matching;
        if m.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&m.theta_c) {
            return bad(format!("theta_c must lie in [0, 1], got {}", m.theta_c));
        }
        if !(m.epsilon >= 0.0 && m.epsilon.is_finite()) {
            return bad(format!("epsilon must be non-negative, got {}", m.epsilon));
        }
        if m.max_hops == 0 {
            return bad("max_hops must be at least 1".into());
        }
        if !(m.app_ratio > 0.0 && m.app_ratio <= 1.0) {
            return bad(format!("app_ratio must lie in (0, 1], got {}", m.app_ratio));
        }
        m.strategy()?;
        Ok(())
    }

    /// Content hash of every setting except file locations.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.paths = Paths::default();
        sha256_json(&c)
    }
}

impl Paths {
    fn resolve_against(&mut self, base: &Path) {
        for p in [
            &mut self.log,
            &mut self.embeddings,
            &mut self.similarity_matrix,
            &mut self.topology,
            &mut self.model,
            &mut self.truth,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}
