use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::Point;
use crate::error::{Error, Result};

const LEAF_SIZE: usize = 12;

/// Static kd-tree over a point set.
///
/// Results are exact and ordered by `(distance, index)`, so they agree with a
/// brute-force scan including tie order.
#[derive(Clone, Debug)]
pub struct SpatialIndex {
    points: Vec<Point>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Clone, Debug)]
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

#[derive(Clone, Copy, Debug)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.index.cmp(&other.index))
    }
}

impl SpatialIndex {
    pub fn new(points: &[Point]) -> Self {
        let mut index = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            index.build(0, points.len());
        }
        index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let axis = self.widest_axis(start, end);
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    fn widest_axis(&self, start: usize, end: usize) -> usize {
        let mut lo = Point::repeat(f64::INFINITY);
        let mut hi = Point::repeat(f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        (hi - lo).imax()
    }

    /// The `k` closest indexed points, ascending by distance, ties by lower index.
    pub fn nearest_neighbors(&self, query: &Point, k: usize) -> Result<(Vec<usize>, Vec<f64>)> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if k > self.len() {
            return Err(Error::param(format!(
                "requested {k} neighbors from an index of {} points",
                self.len()
            )));
        }
        if k == 0 {
            return Ok((Vec::new(), Vec::new()));
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_recurse(0, query, k, &mut heap);
        let sorted = heap.into_sorted_vec();
        Ok((
            sorted.iter().map(|c| c.index).collect(),
            sorted.iter().map(|c| c.dist2.sqrt()).collect(),
        ))
    }

    /// Closest indexed point and its distance.
    pub fn nearest(&self, query: &Point) -> Result<(usize, f64)> {
        let (idx, dist) = self.nearest_neighbors(query, 1)?;
        Ok((idx[0], dist[0]))
    }

    fn knn_recurse(&self, node: usize, query: &Point, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &index in &self.order[start..end] {
                    let cand = Candidate {
                        dist2: (self.points[index] - query).norm_squared(),
                        index,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_recurse(near, query, k, heap);
                // Equal distances must still be visited: a tie may carry a lower index.
                if heap.len() < k || diff * diff <= heap.peek().expect("heap is full").dist2 {
                    self.knn_recurse(far, query, k, heap);
                }
            }
        }
    }

    /// All points within `radius` (inclusive), ordered by `(distance, index)`.
    pub fn within_radius(&self, query: &Point, radius: f64) -> Result<(Vec<usize>, Vec<f64>)> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let r2 = radius * radius;
        let mut found = Vec::new();
        self.radius_recurse(0, query, r2, &mut found);
        found.sort_unstable();
        Ok((
            found.iter().map(|c| c.index).collect(),
            found.iter().map(|c| c.dist2.sqrt()).collect(),
        ))
    }

    fn radius_recurse(&self, node: usize, query: &Point, r2: f64, found: &mut Vec<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &index in &self.order[start..end] {
                    let dist2 = (self.points[index] - query).norm_squared();
                    if dist2 <= r2 {
                        found.push(Candidate { dist2, index });
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.radius_recurse(near, query, r2, found);
                if diff * diff <= r2 {
                    self.radius_recurse(far, query, r2, found);
                }
            }
        }
    }
}
