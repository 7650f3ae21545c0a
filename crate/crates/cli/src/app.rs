//! Argument parsing and dispatch for the `reid` binary.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use reid_core::appearance::YReference;
use reid_core::evaluation::Protocol;

use crate::commands::{self, Scoring};
use crate::config::{PipelineConfig, CONFIG_ENV};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "reid", version, about = "Spatial-temporal multi-camera re-identification pipelines")]
pub struct Cli {
    /// Pipeline config file (JSON). Flags override its values.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic camera-network scenario.
    Simulate {
        /// Scenario spec (JSON with `network` and `scenario`).
        #[arg(long)]
        spec: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate transition distributions and camera adjacency.
    EstimateTopology {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        topology: TopologyArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the fusion network on the fusion split.
    TrainFusion {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss CSV; defaults to `<model stem>_loss.csv`.
        #[arg(long)]
        loss_csv: Option<PathBuf>,
    },
    /// Compute metrics under the lab or real-world protocol.
    Evaluate {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        matching: MatchingArgs,
        #[arg(long, value_enum)]
        protocol: Option<ProtocolArg>,
        /// Rank with appearance similarity alone (lab protocol only).
        #[arg(long)]
        appearance_only: bool,
        /// Metrics JSON to write.
        #[arg(long)]
        out: PathBuf,
        /// Optional per-query AP CSV.
        #[arg(long)]
        per_query: Option<PathBuf>,
    },
    /// Follow queries through the network and write their paths.
    RunCim {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        split: SplitArgs,
        #[command(flatten)]
        matching: MatchingArgs,
        /// Query identities; all test identities when omitted.
        #[arg(long = "query")]
        queries: Vec<u64>,
        /// Path report (JSONL) to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump fusion-network weights as a long-format CSV.
    ExportWeights {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Metadata JSON; defaults to the CSV path with a `.json` extension.
        #[arg(long)]
        metadata: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct Inputs {
    /// Detection log (CSV or JSONL).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Embedding CSV; its sidecar is the same path with `.json`.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Precomputed similarity matrix (JSON), used instead of embeddings.
    #[arg(long)]
    similarity_matrix: Option<PathBuf>,
    #[arg(long)]
    topology: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Ground-truth paths (JSONL).
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    split_seed: Option<u64>,
    /// Share of identities held out for testing.
    #[arg(long)]
    test_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TopologyArgs {
    #[arg(long)]
    n_cameras: Option<usize>,
    #[arg(long)]
    bin_width: Option<u64>,
    /// Bins per distribution.
    #[arg(long = "bins")]
    n_bins: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    vote_threshold: Option<u32>,
    /// Keep composite camera links.
    #[arg(long)]
    no_reduction: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Spatial-temporal window half-width.
    #[arg(long = "w")]
    window: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct MatchingArgs {
    /// topk, max, avg or single_shot.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    theta_c: Option<f64>,
    #[arg(long)]
    app_ratio: Option<f64>,
    #[arg(long)]
    max_hops: Option<usize>,
    #[arg(long, value_enum)]
    y_reference: Option<YReferenceArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProtocolArg {
    Lab,
    #[value(alias = "real_world")]
    RealWorld,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum YReferenceArg {
    Top,
    Bottom,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, v: Option<PathBuf>) {
    if v.is_some() {
        *slot = v;
    }
}

impl Inputs {
    fn apply(self, cfg: &mut PipelineConfig) {
        let p = &mut cfg.paths;
        set_path(&mut p.log, self.log);
        set_path(&mut p.embeddings, self.embeddings);
        set_path(&mut p.similarity_matrix, self.similarity_matrix);
        set_path(&mut p.topology, self.topology);
        set_path(&mut p.model, self.model);
        set_path(&mut p.truth, self.truth);
    }
}

impl SplitArgs {
    fn apply(self, cfg: &mut PipelineConfig) {
        set(&mut cfg.split.seed, self.split_seed);
        set(&mut cfg.split.test_fraction, self.test_fraction);
    }
}

impl TopologyArgs {
    fn apply(self, cfg: &mut PipelineConfig) {
        let t = &mut cfg.topology;
        if self.n_cameras.is_some() {
            t.n_cameras = self.n_cameras;
        }
        set(&mut t.bin_width, self.bin_width);
        set(&mut t.n_bins, self.n_bins);
        set(&mut t.alpha, self.alpha);
        set(&mut t.beta, self.beta);
        set(&mut t.vote_threshold, self.vote_threshold);
        if self.no_reduction {
            t.transitive_reduction = false;
        }
    }
}

impl TrainArgs {
    fn apply(self, cfg: &mut PipelineConfig) {
        let f = &mut cfg.fusion;
        set(&mut f.window, self.window);
        set(&mut f.train.epochs, self.epochs);
        set(&mut f.train.batch_size, self.batch_size);
        set(&mut f.train.learning_rate, self.lr);
        set(&mut f.train.seed, self.seed);
    }
}

impl MatchingArgs {
    fn apply(self, cfg: &mut PipelineConfig) {
        let m = &mut cfg.matching;
        set(&mut m.strategy, self.strategy);
        set(&mut m.k, self.k);
        set(&mut m.theta_c, self.theta_c);
        set(&mut m.app_ratio, self.app_ratio);
        set(&mut m.max_hops, self.max_hops);
        set(
            &mut m.y_reference,
            self.y_reference.map(|y| match y {
                YReferenceArg::Top => YReference::Top,
                YReferenceArg::Bottom => YReference::Bottom,
            }),
        );
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the human summary printed on success.
pub fn run<I, T>(args: I) -> CliResult<String>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    execute(cli)
}

pub fn execute(cli: Cli) -> CliResult<String> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate { spec, out, seed } => commands::simulate(&spec, &out, seed),
        Command::EstimateTopology {
            inputs,
            split,
            topology,
            out,
        } => {
            inputs.apply(&mut cfg);
            split.apply(&mut cfg);
            topology.apply(&mut cfg);
            cfg.validate()?;
            commands::estimate(&cfg, &out)
        }
        Command::TrainFusion {
            inputs,
            split,
            train,
            out,
            loss_csv,
        } => {
            inputs.apply(&mut cfg);
            split.apply(&mut cfg);
            train.apply(&mut cfg);
            cfg.validate()?;
            let loss_csv = loss_csv.unwrap_or_else(|| commands::default_loss_path(&out));
            commands::train_fusion(&cfg, &out, &loss_csv)
        }
        Command::Evaluate {
            inputs,
            split,
            matching,
            protocol,
            appearance_only,
            out,
            per_query,
        } => {
            inputs.apply(&mut cfg);
            split.apply(&mut cfg);
            matching.apply(&mut cfg);
            if let Some(p) = protocol {
                cfg.protocol = match p {
                    ProtocolArg::Lab => Protocol::Lab,
                    ProtocolArg::RealWorld => Protocol::RealWorld,
                };
            }
            cfg.validate()?;
            let scoring = if appearance_only { Scoring::AppearanceOnly } else { Scoring::Fused };
            commands::evaluate(&cfg, &out, per_query.as_deref(), scoring)
        }
        Command::RunCim {
            inputs,
            split,
            matching,
            queries,
            out,
        } => {
            inputs.apply(&mut cfg);
            split.apply(&mut cfg);
            matching.apply(&mut cfg);
            cfg.validate()?;
            commands::run_cim(&cfg, &out, &queries)
        }
        Command::ExportWeights { model, out, metadata } => {
            set_path(&mut cfg.paths.model, model);
            let model = crate::artifacts::require(&cfg.paths.model, "--model")?;
            let metadata = metadata.unwrap_or_else(|| out.with_extension("json"));
            commands::export_weights(model, &out, &metadata)
        }
    }
}
