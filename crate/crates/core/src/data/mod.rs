//! Domain types, detection-log IO, track grouping and identity splits.

mod embeddings;
mod log;
mod split;
mod tracks;
mod types;

pub use embeddings::{EmbeddingSidecar, EmbeddingTable};
pub use log::{parse_detection_log, write_detection_log, LogFormat, CSV_HEADER};
pub use split::{split_identities, DatasetSplit, SplitRatios};
pub use tracks::{camera_paths, group_tracks, DEFAULT_REENTRY_GAP};
pub use types::{AppearanceSet, BBox, CameraId, Detection, DetectionKey, ObjectId, TrackKey};
