//! Sparse graphs over dense node indices `0..n`.

mod generate;
mod io;
mod stats;

pub use generate::{gen_block_graph, gen_geometric, BlockMode};
pub use io::{load_edge_list, parse_edge_list, write_edge_list, write_node_map, LoadedGraph};
pub use stats::{graph_stats, GraphStats};

use crate::error::{Error, Result};

/// Immutable adjacency in compressed sparse row form.
///
/// Targets of every source are sorted and unique. Undirected graphs store
/// both orientations of each edge, so `(i, j)` is present iff `(j, i)` is.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseGraph {
    n: usize,
    directed: bool,
    include_self_loops: bool,
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl SparseGraph {
    /// Builds a graph from ordered pairs. Duplicates are merged, undirected
    /// input is symmetrized and self-loops are dropped unless
    /// `include_self_loops` is set.
    pub fn from_edges<I>(n: usize, edges: I, directed: bool, include_self_loops: bool) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n == 0 {
            return Err(Error::InvalidGraph("graph must have at least one node".into()));
        }
        let mut pairs = Vec::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) out of range for {n} nodes"
                )));
            }
            if i == j && !include_self_loops {
                continue;
            }
            pairs.push((i, j));
            if !directed && i != j {
                pairs.push((j, i));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();

        let mut offsets = vec![0usize; n + 1];
        for &(i, _) in &pairs {
            offsets[i + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let targets = pairs.into_iter().map(|(_, j)| j).collect();
        Ok(Self {
            n,
            directed,
            include_self_loops,
            offsets,
            targets,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Whether diagonal dyads `(i, i)` are part of the modelled dyad set.
    pub fn include_self_loops(&self) -> bool {
        self.include_self_loops
    }

    /// Sorted out-neighbours of `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Number of stored ordered pairs (both orientations for undirected edges).
    pub fn num_links(&self) -> usize {
        self.targets.len()
    }

    pub fn has_link(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&j).is_ok()
    }

    /// Shifted adjacency entry: +1 for a link, -1 otherwise.
    pub fn label(&self, i: usize, j: usize) -> i8 {
        if self.has_link(i, j) {
            1
        } else {
            -1
        }
    }

    /// Number of modelled ordered dyads.
    pub fn num_dyads(&self) -> usize {
        if self.include_self_loops {
            self.n * self.n
        } else {
            self.n * (self.n - 1)
        }
    }

    /// Whether the ordered dyad `(i, j)` is modelled.
    #[inline]
    pub fn is_dyad(&self, i: usize, j: usize) -> bool {
        i != j || self.include_self_loops
    }

    /// All stored ordered pairs in `(source, target)` order.
    pub fn links(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| self.neighbors(i).iter().map(move |&j| (i, j)))
    }

    /// Same graph with every node linked to itself and the diagonal modelled.
    pub fn with_self_loops(&self) -> Self {
        let edges = self.links().chain((0..self.n).map(|i| (i, i)));
        Self::from_edges(self.n, edges, self.directed, true).expect("indices already validated")
    }

    /// Symmetrized copy without self-loops, used for structural statistics.
    pub fn undirected_view(&self) -> Self {
        Self::from_edges(self.n, self.links(), false, false).expect("indices already validated")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn undirected_input_is_symmetrized() {
        let g = SparseGraph::from_edges(3, [(0, 1), (1, 2)], false, false).unwrap();
        let links: Vec<_> = g.links().collect();
        assert_eq!(links, vec![(0, 1), (1, 0), (1, 2), (2, 1)]);
        assert_eq!(g.num_dyads(), 6);
    }

    #[test]
    fn duplicates_and_loops_removed() {
        let g = SparseGraph::from_edges(2, [(0, 1), (0, 1), (0, 0)], true, false).unwrap();
        assert_eq!(g.links().collect::<Vec<_>>(), vec![(0, 1)]);
        let g = SparseGraph::from_edges(2, [(0, 0), (0, 1)], true, true).unwrap();
        assert!(g.has_link(0, 0));
        assert_eq!(g.num_dyads(), 4);
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(SparseGraph::from_edges(2, [(0, 2)], true, false).is_err());
        assert!(SparseGraph::from_edges(0, [], true, false).is_err());
    }

    #[test]
    fn full_diagonal() {
        let g = SparseGraph::from_edges(3, [(0, 1)], false, false).unwrap();
        let s = g.with_self_loops();
        assert!((0..3).all(|i| s.has_link(i, i)));
        assert_eq!(s.num_links(), 5);
    }
}
