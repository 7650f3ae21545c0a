//! The fusion network: a one-hidden-layer perceptron that maps appearance
//! similarity and a window of transition probabilities to a single match
//! score.

mod input;
mod io;
mod model;
mod pairs;
mod train;

pub use input::{build_input, build_input_from_density, hidden_size, input_dim, window_from_signed, FusionInput};
pub use io::{
    read_model, read_weight_table, weight_table, write_model, write_weight_table, ModelDocument, TrainingMetadata,
    WeightRow, MODEL_MAGIC, MODEL_VERSION,
};
pub use model::{bce, loss, sigmoid, FusionModel, Gradients, BCE_CLAMP};
pub use pairs::{detection_pair_input, sample_training_pairs, PairSampling};
pub use train::{grad_check, grad_check_detail, train, EpochRecord, LabeledPair, TrainConfig, TrainOutcome};
