use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::CameraId;
use crate::error::{Error, Result};

/// Directed camera adjacency `c_ij` with the number of training paths that
/// voted for each transition. The diagonal is always zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjacencyMatrix {
    n: usize,
    flags: Vec<bool>,
    votes: Vec<u32>,
}

impl AdjacencyMatrix {
    pub fn empty(n: usize) -> Self {
        AdjacencyMatrix {
            n,
            flags: vec![false; n * n],
            votes: vec![0; n * n],
        }
    }

    /// Builds a matrix from 0/1 rows. Diagonal entries are ignored.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        let mut adj = AdjacencyMatrix::empty(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Shape {
                    expected: n,
                    actual: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if v > 1 {
                    return Err(Error::validation(None, format!("adjacency entry ({i},{j}) is {v}, not 0/1")));
                }
                if i != j && v == 1 {
                    adj.flags[i * n + j] = true;
                }
            }
        }
        Ok(adj)
    }

    pub fn n_cameras(&self) -> usize {
        self.n
    }

    pub fn is_adjacent(&self, from: CameraId, to: CameraId) -> bool {
        let (i, j) = (from.index(), to.index());
        i < self.n && j < self.n && self.flags[i * self.n + j]
    }

    pub fn votes(&self, from: CameraId, to: CameraId) -> u32 {
        self.votes[from.index() * self.n + to.index()]
    }

    /// Cameras reachable in one hop from `from`, in index order.
    pub fn successors(&self, from: CameraId) -> impl Iterator<Item = CameraId> + '_ {
        let i = from.index();
        (0..self.n)
            .filter(move |&j| i < self.n && self.flags[i * self.n + j])
            .map(|j| CameraId(j as u32))
    }

    pub fn edge_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.flags.chunks(self.n.max(1)).take(self.n).map(|r| r.iter().map(|&f| f as u8).collect()).collect()
    }

    pub fn vote_rows(&self) -> Vec<Vec<u32>> {
        self.votes.chunks(self.n.max(1)).take(self.n).map(|r| r.to_vec()).collect()
    }

    pub(crate) fn flag(&self, i: usize, j: usize) -> bool {
        self.flags[i * self.n + j]
    }

    pub(crate) fn set_flag(&mut self, i: usize, j: usize, on: bool) {
        if i != j {
            self.flags[i * self.n + j] = on;
        }
    }
}

/// Marks `i -> j` adjacent when at least `vote_threshold` paths contain that
/// consecutive transition. A path counts once per transition however often it
/// repeats it; self-transitions are ignored.
pub fn build_adjacency(paths: &[Vec<CameraId>], n_cameras: usize, vote_threshold: u32) -> Result<AdjacencyMatrix> {
    let mut adj = AdjacencyMatrix::empty(n_cameras);
    for (p, path) in paths.iter().enumerate() {
        if let Some(bad) = path.iter().find(|c| c.index() >= n_cameras) {
            return Err(Error::validation(
                None,
                format!("path {p} visits camera {} outside a {n_cameras}-camera network", bad.0),
            ));
        }
        let steps: BTreeSet<(usize, usize)> = path
            .windows(2)
            .map(|w| (w[0].index(), w[1].index()))
            .filter(|(i, j)| i != j)
            .collect();
        for (i, j) in steps {
            adj.votes[i * n_cameras + j] += 1;
        }
    }
    for idx in 0..n_cameras * n_cameras {
        let (i, j) = (idx / n_cameras, idx % n_cameras);
        adj.flags[idx] = i != j && adj.votes[idx] >= vote_threshold.max(1);
    }
    Ok(adj)
}
