//! Transitive reduction of camera adjacency.
//!
//! An edge `i -> j` is dropped when `j` is also reachable from `i` through a
//! third strongly connected component. On acyclic graphs every component is a
//! single camera, so this is the usual reduction: an edge goes when some
//! intermediate camera lies on another route from `i` to `j`. Edges inside a
//! component are never removed, so cycles such as `c2 <-> c4` survive.

use super::adjacency::AdjacencyMatrix;

/// `reach[i][j]` is true when a directed path of length >= 1 leads from `i`
/// to `j`.
pub fn reachability(adj: &AdjacencyMatrix) -> Vec<Vec<bool>> {
    let n = adj.n_cameras();
    let mut reach: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| adj.flag(i, j)).collect()).collect();
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    reach
}

/// Removes edges implied by longer routes while preserving reachability.
pub fn transitive_reduce(adj: &AdjacencyMatrix) -> AdjacencyMatrix {
    let n = adj.n_cameras();
    let reach = reachability(adj);
    let same_component = |a: usize, b: usize| a == b || (reach[a][b] && reach[b][a]);

    let mut out = adj.clone();
    for i in 0..n {
        for j in 0..n {
            if !adj.flag(i, j) || same_component(i, j) {
                continue;
            }
            let implied = (0..n).any(|k| {
                !same_component(k, i) && !same_component(k, j) && reach[i][k] && reach[k][j]
            });
            if implied {
                out.set_flag(i, j, false);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CameraId;

    fn graph(n: usize, edges: &[(usize, usize)]) -> AdjacencyMatrix {
        let mut rows = vec![vec![0u8; n]; n];
        for &(i, j) in edges {
            rows[i][j] = 1;
        }
        AdjacencyMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn drops_the_shortcut_of_a_triangle() {
        let reduced = transitive_reduce(&graph(3, &[(0, 1), (1, 2), (0, 2)]));
        assert_eq!(reduced, graph(3, &[(0, 1), (1, 2)]));
    }

    #[test]
    fn reduced_chain_is_a_fixed_point() {
        let chain = graph(3, &[(0, 1), (1, 2)]);
        assert_eq!(transitive_reduce(&chain), chain);
    }

    #[test]
    fn cycles_are_kept_and_cross_component_shortcuts_removed() {
        // 0 -> 1 <-> 3, 1 -> 2, 0 -> 2 is implied through component {1, 3}
        let g = graph(4, &[(0, 1), (1, 3), (3, 1), (1, 2), (0, 2)]);
        let reduced = transitive_reduce(&g);
        assert_eq!(reduced, graph(4, &[(0, 1), (1, 3), (3, 1), (1, 2)]));
        assert!(reduced.is_adjacent(CameraId(3), CameraId(1)));
    }

    #[test]
    fn parallel_edges_into_a_component_survive() {
        // both 0 -> 1 and 0 -> 2 enter the cycle {1, 2}; neither is implied by
        // a third component
        let g = graph(3, &[(0, 1), (0, 2), (1, 2), (2, 1)]);
        assert_eq!(transitive_reduce(&g), g);
    }
}
