//! Camera-network topology: per-pair transition-time distributions and the
//! directed adjacency between cameras.

mod adjacency;
mod histogram;
mod parzen;
mod reduction;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use adjacency::{build_adjacency, AdjacencyMatrix};
pub use histogram::{
    build_transition_histogram, positive_transitions, transition_delta, Transition, TransitionHistogram,
};
pub use parzen::{
    adaptive_sigma, estimate_transition_pdf, gaussian_kernel, parzen_smooth, TransitionPdf, KERNEL_TRUNCATION_SIGMAS,
};
pub use reduction::{reachability, transitive_reduce};

use crate::data::{AppearanceSet, CameraId, ObjectId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologyParams {
    /// Frames per histogram bin.
    pub bin_width: u64,
    /// Number of bins per distribution.
    pub n_bins: usize,
    /// Largest kernel bandwidth, in bins.
    pub alpha: f64,
    /// Pair count at which the bandwidth has shrunk by a factor of e.
    pub beta: f64,
}

impl Default for TopologyParams {
    fn default() -> Self {
        TopologyParams::vehicle()
    }
}

impl TopologyParams {
    pub fn vehicle() -> Self {
        TopologyParams {
            bin_width: 100,
            n_bins: 300,
            alpha: 6.0,
            beta: 25.0,
        }
    }

    pub fn person() -> Self {
        TopologyParams {
            alpha: 4.0,
            beta: 120.0,
            ..TopologyParams::vehicle()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bin_width == 0 || self.n_bins == 0 {
            return Err(Error::Config("bin_width and n_bins must be positive".into()));
        }
        adaptive_sigma(0, self.alpha, self.beta).map(|_| ())
    }

    pub fn bin_of(&self, delta_frames: u64) -> u64 {
        delta_frames / self.bin_width
    }
}

/// Transition distributions for every ordered camera pair (including
/// self-pairs) plus the camera adjacency used to build galleries.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub n_cameras: usize,
    pub params: TopologyParams,
    pdfs: Vec<TransitionPdf>,
    pub adjacency: AdjacencyMatrix,
}

impl Topology {
    /// Assembles a topology from `n_cameras^2` distributions in row-major
    /// (from, to) order.
    pub fn from_parts(
        n_cameras: usize,
        params: TopologyParams,
        pdfs: Vec<TransitionPdf>,
        adjacency: AdjacencyMatrix,
    ) -> Result<Self> {
        if pdfs.len() != n_cameras * n_cameras {
            return Err(Error::Shape {
                expected: n_cameras * n_cameras,
                actual: pdfs.len(),
            });
        }
        if adjacency.n_cameras() != n_cameras {
            return Err(Error::Shape {
                expected: n_cameras,
                actual: adjacency.n_cameras(),
            });
        }
        for (idx, pdf) in pdfs.iter().enumerate() {
            let (i, j) = (idx / n_cameras, idx % n_cameras);
            if pdf.from.index() != i || pdf.to.index() != j {
                return Err(Error::validation(None, format!("distribution {idx} is not for pair ({i},{j})")));
            }
            if pdf.density.len() != params.n_bins {
                return Err(Error::Shape {
                    expected: params.n_bins,
                    actual: pdf.density.len(),
                });
            }
        }
        Ok(Topology {
            n_cameras,
            params,
            pdfs,
            adjacency,
        })
    }

    pub fn pdf(&self, from: CameraId, to: CameraId) -> &TransitionPdf {
        &self.pdfs[from.index() * self.n_cameras + to.index()]
    }

    pub fn pdfs(&self) -> &[TransitionPdf] {
        &self.pdfs
    }

    pub fn with_adjacency(mut self, adjacency: AdjacencyMatrix) -> Result<Self> {
        if adjacency.n_cameras() != self.n_cameras {
            return Err(Error::Shape {
                expected: self.n_cameras,
                actual: adjacency.n_cameras(),
            });
        }
        self.adjacency = adjacency;
        Ok(self)
    }

    pub fn to_document(&self) -> TopologyDocument {
        TopologyDocument {
            n_cameras: self.n_cameras,
            bin_width: self.params.bin_width,
            n_bins: self.params.n_bins,
            alpha: self.params.alpha,
            beta: self.params.beta,
            pdfs: self
                .pdfs
                .iter()
                .map(|p| PdfEntry {
                    i: p.from.0,
                    j: p.to.0,
                    sigma: p.sigma,
                    n_pairs: p.n_pairs,
                    density: p.density.clone(),
                })
                .collect(),
            adjacency: self.adjacency.rows(),
            adjacency_votes: self.adjacency.vote_rows(),
            provenance: None,
        }
    }

    pub fn from_document(doc: &TopologyDocument) -> Result<Self> {
        let params = TopologyParams {
            bin_width: doc.bin_width,
            n_bins: doc.n_bins,
            alpha: doc.alpha,
            beta: doc.beta,
        };
        params.validate()?;
        let pdfs = doc
            .pdfs
            .iter()
            .map(|e| TransitionPdf {
                from: CameraId(e.i),
                to: CameraId(e.j),
                density: e.density.clone(),
                sigma: e.sigma,
                n_pairs: e.n_pairs,
            })
            .collect();
        let adjacency = AdjacencyMatrix::from_rows(&doc.adjacency)?;
        Topology::from_parts(doc.n_cameras, params, pdfs, adjacency)
    }
}

/// Serialized form of a [`Topology`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyDocument {
    pub n_cameras: usize,
    pub bin_width: u64,
    #[serde(rename = "B")]
    pub n_bins: usize,
    pub alpha: f64,
    pub beta: f64,
    pub pdfs: Vec<PdfEntry>,
    pub adjacency: Vec<Vec<u8>>,
    #[serde(default)]
    pub adjacency_votes: Vec<Vec<u32>>,
    /// Free-form metadata supplied by the producing tool.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdfEntry {
    pub i: u32,
    pub j: u32,
    pub sigma: f64,
    #[serde(rename = "N_ij")]
    pub n_pairs: u64,
    pub density: Vec<f64>,
}

/// Histograms for all `n_cameras^2` ordered pairs from the positive pairs of
/// `ids` (all identities when `None`).
pub fn build_histograms(
    n_cameras: usize,
    tracks: &[AppearanceSet],
    ids: Option<&BTreeSet<ObjectId>>,
    params: &TopologyParams,
) -> Result<Vec<TransitionHistogram>> {
    params.validate()?;
    let mut hists: Vec<TransitionHistogram> = (0..n_cameras * n_cameras)
        .map(|idx| {
            TransitionHistogram::new(
                CameraId((idx / n_cameras) as u32),
                CameraId((idx % n_cameras) as u32),
                params.bin_width,
                params.n_bins,
            )
        })
        .collect();
    for t in positive_transitions(tracks, ids) {
        if t.from.index() >= n_cameras || t.to.index() >= n_cameras {
            return Err(Error::validation(
                None,
                format!("transition {} -> {} outside a {n_cameras}-camera network", t.from, t.to),
            ));
        }
        hists[t.from.index() * n_cameras + t.to.index()].add_delta(t.delta_frames);
    }
    Ok(hists)
}

/// Estimates every transition distribution with the adaptive Parzen window.
/// The returned topology has an empty adjacency; see [`build_adjacency`].
pub fn estimate_topology(
    n_cameras: usize,
    tracks: &[AppearanceSet],
    ids: Option<&BTreeSet<ObjectId>>,
    params: TopologyParams,
) -> Result<Topology> {
    let hists = build_histograms(n_cameras, tracks, ids, &params)?;
    let pdfs = hists
        .iter()
        .map(|h| estimate_transition_pdf(h, params.alpha, params.beta))
        .collect::<Result<Vec<_>>>()?;
    Topology::from_parts(n_cameras, params, pdfs, AdjacencyMatrix::empty(n_cameras))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{group_tracks, BBox, Detection};

    fn det(cam: u32, obj: u64, frame: u64) -> Detection {
        Detection {
            camera: CameraId(cam),
            object_id: ObjectId(obj),
            frame,
            bbox: BBox::new(0.0, 0.0, 4.0, 4.0),
            embedding_ref: None,
        }
    }

    #[test]
    fn estimates_every_ordered_pair() {
        let mut dets = Vec::new();
        for obj in 0..30u64 {
            let start = obj * 5000;
            dets.push(det(0, obj, start));
            dets.push(det(1, obj, start + 1500 + (obj % 3) * 10));
        }
        let tracks = group_tracks(&dets, 300);
        let topo = estimate_topology(3, &tracks, None, TopologyParams::default()).unwrap();
        assert_eq!(topo.pdfs().len(), 9);
        let p01 = topo.pdf(CameraId(0), CameraId(1));
        assert_eq!(p01.n_pairs, 30);
        assert!((p01.density.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let argmax = p01.density.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax, 15);
        assert!(p01.sigma < 6.0 && p01.sigma >= 1.0);
        assert!(!topo.pdf(CameraId(1), CameraId(0)).is_connected());
        assert!(topo.pdf(CameraId(2), CameraId(2)).density.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn document_round_trip() {
        let tracks = group_tracks(&[det(0, 1, 0), det(1, 1, 420)], 300);
        let topo = estimate_topology(2, &tracks, None, TopologyParams::default())
            .unwrap()
            .with_adjacency(AdjacencyMatrix::from_rows(&[vec![0, 1], vec![0, 0]]).unwrap())
            .unwrap();
        let text = serde_json::to_string(&topo.to_document()).unwrap();
        assert!(text.contains("\"N_ij\":1") && text.contains("\"B\":300"));
        let back = Topology::from_document(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.pdfs(), topo.pdfs());
        assert_eq!(back.adjacency.rows(), topo.adjacency.rows());
    }

    #[test]
    fn wrong_pdf_count_is_rejected() {
        let err = Topology::from_parts(2, TopologyParams::default(), vec![], AdjacencyMatrix::empty(2));
        assert!(matches!(err, Err(Error::Shape { expected: 4, actual: 0 })));
    }
}
