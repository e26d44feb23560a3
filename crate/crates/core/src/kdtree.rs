//! Static KD-tree for closed-ball radius queries.

use crate::numeric::sq_dist;

const DEFAULT_LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// KD-tree over the rows of an `M x D` point matrix. Splits at the median of
/// the coordinate with the widest spread.
#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    points: Vec<f64>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    /// `points` is row-major with `dim` columns.
    pub fn build(points: &[f64], dim: usize) -> Self {
        Self::with_leaf_size(points, dim, DEFAULT_LEAF_SIZE)
    }

    pub fn with_leaf_size(points: &[f64], dim: usize, leaf_size: usize) -> Self {
        assert!(dim >= 1, "points need at least one coordinate");
        assert_eq!(points.len() % dim, 0, "point buffer is not a multiple of dim");
        let m = points.len() / dim;
        let mut tree = Self {
            dim,
            points: points.to_vec(),
            order: (0..m).collect(),
            nodes: Vec::with_capacity(2 * m / leaf_size.max(1) + 1),
        };
        if m > 0 {
            tree.build_node(0, m, leaf_size.max(1));
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    fn build_node(&mut self, start: usize, end: usize, leaf_size: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        if end - start <= leaf_size {
            return id;
        }
        let (axis, spread) = (0..self.dim)
            .map(|a| {
                let (lo, hi) = self.order[start..end].iter().fold(
                    (f64::INFINITY, f64::NEG_INFINITY),
                    |(lo, hi), &k| {
                        let v = self.points[k * self.dim + a];
                        (lo.min(v), hi.max(v))
                    },
                );
                (a, hi - lo)
            })
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        if spread <= 0.0 {
            return id;
        }
        let mid = start + (end - start) / 2;
        let (dim, points) = (self.dim, &self.points);
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a * dim + axis].total_cmp(&points[b * dim + axis])
        });
        let value = self.points[self.order[mid] * self.dim + axis];
        let left = self.build_node(start, mid, leaf_size);
        let right = self.build_node(mid, end, leaf_size);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// Indices of all points `p` with `|q - p| <= radius`, in no particular order.
    pub fn radius_query(&self, q: &[f64], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.radius_query_into(q, radius, &mut out);
        out
    }

    /// Appends matches to `out` and returns the number of tree nodes visited.
    pub fn radius_query_into(&self, q: &[f64], radius: f64, out: &mut Vec<usize>) -> usize {
        assert_eq!(q.len(), self.dim, "query dimension mismatch");
        if self.nodes.is_empty() || radius < 0.0 {
            return 0;
        }
        // Slightly widened pruning bound so rounding never drops a boundary point.
        let prune = radius * (1.0 + 1e-12) + f64::MIN_POSITIVE;
        let mut visits = 0;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            visits += 1;
            match self.nodes[id] {
                Node::Leaf { start, end } => {
                    for &k in &self.order[start..end] {
                        if sq_dist(q, self.point(k)).sqrt() <= radius {
                            out.push(k);
                        }
                    }
                }
                Node::Split { axis, value, left, right } => {
                    let diff = q[axis] - value;
                    if diff <= prune {
                        stack.push(left);
                    }
                    if -diff <= prune {
                        stack.push(right);
                    }
                }
            }
        }
        visits
    }
}
