use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::SparseGraph;

/// Structural summary of a graph. Self-loops are ignored throughout;
/// triangles, components and paths use the undirected view.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStats {
    pub n: usize,
    /// Ordered links per node (`2|E|/n` for undirected graphs).
    pub avg_degree: f64,
    /// `|E|/(n(n-1))` directed, `|E|/(n(n-1)/2)` undirected.
    pub density: f64,
    pub max_degree: usize,
    pub triangles: u64,
    pub components: usize,
    /// Mean BFS distance from sampled sources within the largest component.
    pub avg_shortest_path: f64,
}

impl GraphStats {
    pub const CSV_HEADER: &'static str =
        "n,avg_degree,density,max_degree,triangles,components,avg_shortest_path";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.n,
            self.avg_degree,
            self.density,
            self.max_degree,
            self.triangles,
            self.components,
            self.avg_shortest_path
        )
    }
}

pub fn graph_stats(g: &SparseGraph, path_sample: usize, seed: u64) -> GraphStats {
    let n = g.n();
    let ordered = g.links().filter(|(i, j)| i != j).count();
    let density = if n > 1 {
        ordered as f64 / (n as f64 * (n as f64 - 1.0))
    } else {
        0.0
    };
    let und = g.undirected_view();
    let max_degree = (0..n).map(|i| und.out_degree(i)).max().unwrap_or(0);

    let (component_of, sizes) = components(&und);
    let largest = (0..sizes.len()).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c)));
    let avg_shortest_path = match largest {
        Some(c) if sizes[c] > 1 => {
            let members: Vec<usize> = (0..n).filter(|&v| component_of[v] == c).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let picks = path_sample.min(members.len());
            let sources: Vec<usize> = if picks == members.len() {
                members.clone()
            } else {
                sample(&mut rng, members.len(), picks).into_iter().map(|k| members[k]).collect()
            };
            let mut total = 0u64;
            let mut count = 0u64;
            for s in sources {
                let (sum, reached) = bfs_distance_sum(&und, s);
                total += sum;
                count += reached;
            }
            if count == 0 {
                0.0
            } else {
                total as f64 / count as f64
            }
        }
        _ => 0.0,
    };

    GraphStats {
        n,
        avg_degree: ordered as f64 / n as f64,
        density,
        max_degree,
        triangles: count_triangles(&und),
        components: sizes.len(),
        avg_shortest_path,
    }
}

fn components(und: &SparseGraph) -> (Vec<usize>, Vec<usize>) {
    let n = und.n();
    let mut comp = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        comp[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(v) = queue.pop_front() {
            size += 1;
            for &w in und.neighbors(v) {
                if comp[w] == usize::MAX {
                    comp[w] = id;
                    queue.push_back(w);
                }
            }
        }
        sizes.push(size);
    }
    (comp, sizes)
}

/// Sum of hop distances from `s` to every other reachable node, and how many there are.
fn bfs_distance_sum(und: &SparseGraph, s: usize) -> (u64, u64) {
    let mut dist = vec![u32::MAX; und.n()];
    dist[s] = 0;
    let mut queue = VecDeque::from([s]);
    let (mut sum, mut reached) = (0u64, 0u64);
    while let Some(v) = queue.pop_front() {
        for &w in und.neighbors(v) {
            if dist[w] == u32::MAX {
                dist[w] = dist[v] + 1;
                sum += dist[w] as u64;
                reached += 1;
                queue.push_back(w);
            }
        }
    }
    (sum, reached)
}

/// Each triangle `u < v < w` counted once via sorted-list intersection.
fn count_triangles(und: &SparseGraph) -> u64 {
    let mut total = 0u64;
    for u in 0..und.n() {
        let nu = und.neighbors(u);
        for &v in nu.iter().filter(|&&v| v > u) {
            let nv = und.neighbors(v);
            let (mut a, mut b) = (0, 0);
            while a < nu.len() && b < nv.len() {
                match nu[a].cmp(&nv[b]) {
                    std::cmp::Ordering::Less => a += 1,
                    std::cmp::Ordering::Greater => b += 1,
                    std::cmp::Ordering::Equal => {
                        if nu[a] > v {
                            total += 1;
                        }
                        a += 1;
                        b += 1;
                    }
                }
            }
        }
    }
    total
}
