//! Exact nearest-neighbour search over a fixed point set.
//!
//! Results are identical to a linear scan, including ties: among points at
//! the same squared distance the one with the lowest index wins.

use super::{GeomError, PointCloud, Vec3};

/// Below this many points the index does a plain linear scan.
pub const BRUTE_FORCE_BELOW: usize = 64;

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Immutable spatial index; safe to share across threads for reads.
#[derive(Debug, Clone)]
pub struct NnIndex {
    points: Vec<Vec3>,
    // Point indices permuted so every leaf owns a contiguous range.
    order: Vec<usize>,
    nodes: Vec<Node>,
    root: Option<usize>,
}

/// Result of a nearest-neighbour query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub point: Vec3,
    pub distance: f64,
}

#[inline]
fn better(d2: f64, idx: usize, best_d2: f64, best_idx: usize) -> bool {
    d2 < best_d2 || (d2 == best_d2 && idx < best_idx)
}

impl NnIndex {
    pub fn new(cloud: &PointCloud) -> Self {
        Self::from_points(cloud.points.clone())
    }

    pub fn from_points(points: Vec<Vec3>) -> Self {
        let mut index = NnIndex {
            order: (0..points.len()).collect(),
            points,
            nodes: Vec::new(),
            root: None,
        };
        if index.points.len() >= BRUTE_FORCE_BELOW {
            let n = index.points.len();
            index.root = Some(index.build(0, n));
        }
        index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return self.nodes.len() - 1;
        }
        // Split on the axis of largest extent.
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let value = self.points[self.order[mid]][axis];
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[slot] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        slot
    }

    /// Nearest indexed point to `q`; ties resolve to the lowest point index.
    pub fn nearest(&self, q: &Vec3) -> Result<Neighbor, GeomError> {
        if self.points.is_empty() {
            return Err(GeomError::EmptyCloud);
        }
        let (idx, d2) = match self.root {
            None => brute_force(&self.points, q),
            Some(root) => {
                let mut best = (usize::MAX, f64::INFINITY);
                self.search(root, q, &mut best);
                best
            }
        };
        Ok(Neighbor {
            index: idx,
            point: self.points[idx],
            distance: d2.sqrt(),
        })
    }

    fn search(&self, node: usize, q: &Vec3, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d2 = (self.points[i] - q).norm_squared();
                    if better(d2, i, best.1, best.0) {
                        *best = (i, d2);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                // Equality must still be explored: a tie may carry a lower index.
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

/// Linear scan returning `(index, squared distance)`.
pub fn brute_force(points: &[Vec3], q: &Vec3) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, p) in points.iter().enumerate() {
        let d2 = (p - q).norm_squared();
        if better(d2, i, best.1, best.0) {
            best = (i, d2);
        }
    }
    best
}
