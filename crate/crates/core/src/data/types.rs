use serde::{Deserialize, Serialize};
use std::fmt;

/// Index of a camera within a network of `n_cameras` cameras.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CameraId(pub u32);

impl CameraId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for CameraId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// Identity label of a tracked object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u64);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Axis-aligned box in pixels: top-left corner, width, height. `y` grows
/// downward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0
            && self.h > 0.0
            && self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }
}

/// One observation of one object in one camera at one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub camera: CameraId,
    pub object_id: ObjectId,
    pub frame: u64,
    pub bbox: BBox,
    /// Row of the embedding table holding this detection's feature.
    pub embedding_ref: Option<usize>,
}

impl Detection {
    pub fn key(&self) -> DetectionKey {
        DetectionKey {
            camera: self.camera,
            object_id: self.object_id,
            frame: self.frame,
        }
    }
}

/// Identifies a detection without reference to any embedding table. One
/// object is observed at most once per camera and frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DetectionKey {
    pub camera: CameraId,
    pub object_id: ObjectId,
    pub frame: u64,
}

/// Identifies an appearance set: one visit of one object to one camera.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrackKey {
    pub object_id: ObjectId,
    pub camera: CameraId,
    pub entry_frame: u64,
}

/// The appearances of one object during one visit to one camera, ordered by
/// frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AppearanceSet {
    pub object_id: ObjectId,
    pub camera: CameraId,
    pub appearances: Vec<Detection>,
    pub entry_frame: u64,
    pub exit_frame: u64,
}

impl AppearanceSet {
    /// Builds a set from detections of a single object in a single camera.
    /// Returns `None` when `appearances` is empty or mixes objects/cameras.
    pub fn from_detections(mut appearances: Vec<Detection>) -> Option<Self> {
        let first = appearances.first()?;
        let (object_id, camera) = (first.object_id, first.camera);
        if appearances
            .iter()
            .any(|d| d.object_id != object_id || d.camera != camera)
        {
            return None;
        }
        appearances.sort_by_key(|d| d.frame);
        let entry_frame = appearances[0].frame;
        let exit_frame = appearances[appearances.len() - 1].frame;
        Some(AppearanceSet {
            object_id,
            camera,
            appearances,
            entry_frame,
            exit_frame,
        })
    }

    pub fn key(&self) -> TrackKey {
        TrackKey {
            object_id: self.object_id,
            camera: self.camera,
            entry_frame: self.entry_frame,
        }
    }

    pub fn len(&self) -> usize {
        self.appearances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.appearances.is_empty()
    }
}
