//! Brute-force oracles and a bucketed k-d tree.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::point::{distance, Bounds, Dataset, KnnQuery, Point, RangeQuery};
use crate::query::{KnnResult, Neighbor};

/// Every point inside the closed window, in dataset order.
pub fn brute_range(dataset: &Dataset, q: &RangeQuery) -> Vec<Point> {
    dataset
        .points()
        .iter()
        .filter(|p| q.contains(p))
        .copied()
        .collect()
}

/// The k nearest points by full scan; ties broken by ascending id.
pub fn brute_knn(dataset: &Dataset, q: &KnnQuery) -> Result<KnnResult> {
    let points = dataset.points();
    let k = q.k;
    if k == 0 || k > points.len() {
        return Err(Error::KOutOfRange {
            k,
            len: points.len(),
        });
    }
    let mut all: Vec<Neighbor> = points
        .iter()
        .map(|p| Neighbor {
            point: *p,
            dist: distance(p, &q.point),
        })
        .collect();
    let order =
        |a: &Neighbor, b: &Neighbor| a.dist.total_cmp(&b.dist).then(a.point.id.cmp(&b.point.id));
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, order);
        all.truncate(k);
    }
    all.sort_unstable_by(order);
    Ok(KnnResult { neighbors: all })
}

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq)]
struct KdNode {
    split: f64,
    /// Points of this subtree occupy `start..end` of the tree's point array.
    start: u32,
    end: u32,
    left: u32,
    right: u32,
    axis: u8,
}

impl KdNode {
    fn is_leaf(&self) -> bool {
        self.left == NONE
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Rect {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Rect {
    fn split(self, axis: u8, at: f64) -> (Rect, Rect) {
        if axis == 0 {
            (Rect { x1: at, ..self }, Rect { x0: at, ..self })
        } else {
            (Rect { y1: at, ..self }, Rect { y0: at, ..self })
        }
    }

    fn min_distance(&self, q: &Point) -> f64 {
        distance(
            q,
            &Point::at(q.x.clamp(self.x0, self.x1), q.y.clamp(self.y0, self.y1)),
        )
    }

    fn inside(&self, q: &RangeQuery) -> bool {
        q.lo.x <= self.x0 && self.x1 <= q.hi.x && q.lo.y <= self.y0 && self.y1 <= q.hi.y
    }
}

/// Median-split k-d tree with alternating split axis and bucketed leaves.
#[derive(Clone, Debug)]
pub struct KdTree {
    nodes: Vec<KdNode>,
    points: Vec<Point>,
    leaf_capacity: usize,
    bounds: Bounds,
}

impl KdTree {
    pub fn build(dataset: &Dataset, leaf_capacity: usize) -> Result<Self> {
        if leaf_capacity == 0 {
            return Err(Error::InvalidArgument(
                "leaf capacity must be at least 1".into(),
            ));
        }
        if dataset.len() >= NONE as usize {
            return Err(Error::InvalidArgument(
                "too many points for a k-d tree".into(),
            ));
        }
        let mut tree = KdTree {
            nodes: Vec::with_capacity(2 * dataset.len() / leaf_capacity + 1),
            points: dataset.points().to_vec(),
            leaf_capacity,
            bounds: dataset.bounds(),
        };
        let mut points = std::mem::take(&mut tree.points);
        tree.build_node(&mut points, 0, 0);
        tree.points = points;
        Ok(tree)
    }

    fn build_node(&mut self, points: &mut [Point], offset: usize, depth: usize) -> u32 {
        let idx = self.nodes.len() as u32;
        let axis = (depth % 2) as u8;
        self.nodes.push(KdNode {
            split: 0.0,
            start: offset as u32,
            end: (offset + points.len()) as u32,
            left: NONE,
            right: NONE,
            axis,
        });
        if points.len() <= self.leaf_capacity {
            return idx;
        }
        let mid = points.len() / 2;
        let key = |p: &Point| if axis == 0 { p.x } else { p.y };
        points.select_nth_unstable_by(mid, |a, b| key(a).total_cmp(&key(b)));
        let split = key(&points[mid]);
        let (lo, hi) = points.split_at_mut(mid);
        let left = self.build_node(lo, offset, depth + 1);
        let right = self.build_node(hi, offset + mid, depth + 1);
        let node = &mut self.nodes[idx as usize];
        node.split = split;
        node.left = left;
        node.right = right;
        idx
    }

    pub fn leaf_capacity(&self) -> usize {
        self.leaf_capacity
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn internal_node_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.is_leaf()).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[KdNode], i: u32) -> usize {
            let n = &nodes[i as usize];
            if n.is_leaf() {
                1
            } else {
                1 + walk(nodes, n.left).max(walk(nodes, n.right))
            }
        }
        walk(&self.nodes, 0)
    }

    /// Node count times node size; the points themselves are excluded.
    pub fn storage_bytes(&self) -> usize {
        self.nodes.len() * std::mem::size_of::<KdNode>()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn root_rect(&self) -> Rect {
        let b = self.bounds;
        Rect {
            x0: b.x_min,
            x1: b.x_max,
            y0: b.y_min,
            y1: b.y_max,
        }
    }

    fn slice(&self, node: &KdNode) -> &[Point] {
        &self.points[node.start as usize..node.end as usize]
    }

    pub fn range_query(&self, q: &RangeQuery) -> Vec<Point> {
        let mut out = Vec::new();
        self.range_query_into(q, &mut out);
        out
    }

    /// Appends matches to `out` and returns the number of points tested.
    pub fn range_query_into(&self, q: &RangeQuery, out: &mut Vec<Point>) -> usize {
        let mut scanned = 0;
        let mut stack = vec![(0u32, self.root_rect())];
        while let Some((i, rect)) = stack.pop() {
            let node = &self.nodes[i as usize];
            if rect.inside(q) {
                out.extend_from_slice(self.slice(node));
                continue;
            }
            if node.is_leaf() {
                let pts = self.slice(node);
                scanned += pts.len();
                out.extend(pts.iter().filter(|p| q.contains(p)));
                continue;
            }
            let (lo, hi) = if node.axis == 0 {
                (q.lo.x, q.hi.x)
            } else {
                (q.lo.y, q.hi.y)
            };
            let (lr, rr) = rect.split(node.axis, node.split);
            if lo <= node.split {
                stack.push((node.left, lr));
            }
            if hi >= node.split {
                stack.push((node.right, rr));
            }
        }
        scanned
    }

    pub fn range_count(&self, q: &RangeQuery) -> usize {
        let mut count = 0;
        let mut stack = vec![(0u32, self.root_rect())];
        while let Some((i, rect)) = stack.pop() {
            let node = &self.nodes[i as usize];
            if rect.inside(q) {
                count += (node.end - node.start) as usize;
            } else if node.is_leaf() {
                count += self.slice(node).iter().filter(|p| q.contains(p)).count();
            } else {
                let (lo, hi) = if node.axis == 0 {
                    (q.lo.x, q.hi.x)
                } else {
                    (q.lo.y, q.hi.y)
                };
                let (lr, rr) = rect.split(node.axis, node.split);
                if lo <= node.split {
                    stack.push((node.left, lr));
                }
                if hi >= node.split {
                    stack.push((node.right, rr));
                }
            }
        }
        count
    }

    /// Best-first kNN: nodes are expanded in order of their region's
    /// distance to the query until that distance exceeds the k-th best.
    pub fn knn_query(&self, q: &KnnQuery) -> Result<KnnResult> {
        let k = q.k;
        if k == 0 || k > self.points.len() {
            return Err(Error::KOutOfRange {
                k,
                len: self.points.len(),
            });
        }
        let qp = q.point;
        let mut frontier = BinaryHeap::new();
        frontier.push(Pending {
            dist: self.root_rect().min_distance(&qp),
            node: 0,
            rect: self.root_rect(),
        });
        let mut best: BinaryHeap<Best> = BinaryHeap::with_capacity(k + 1);
        let kth = |best: &BinaryHeap<Best>| {
            if best.len() < k {
                f64::INFINITY
            } else {
                best.peek().map_or(f64::INFINITY, |b| b.dist)
            }
        };
        while let Some(Pending { dist, node, rect }) = frontier.pop() {
            if dist > kth(&best) {
                break;
            }
            let n = &self.nodes[node as usize];
            if n.is_leaf() {
                for (off, p) in self.slice(n).iter().enumerate() {
                    let d = distance(p, &qp);
                    if best.len() < k {
                        best.push(Best {
                            dist: d,
                            index: n.start as usize + off,
                        });
                    } else if d < kth(&best) {
                        best.pop();
                        best.push(Best {
                            dist: d,
                            index: n.start as usize + off,
                        });
                    }
                }
                continue;
            }
            let (lr, rr) = rect.split(n.axis, n.split);
            for (child, r) in [(n.left, lr), (n.right, rr)] {
                let d = r.min_distance(&qp);
                if d <= kth(&best) {
                    frontier.push(Pending {
                        dist: d,
                        node: child,
                        rect: r,
                    });
                }
            }
        }
        let neighbors = best
            .into_sorted_vec()
            .into_iter()
            .map(|b| Neighbor {
                point: self.points[b.index],
                dist: b.dist,
            })
            .collect();
        Ok(KnnResult { neighbors })
    }
}

/// Min-heap entry of the best-first frontier.
struct Pending {
    dist: f64,
    node: u32,
    rect: Rect,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then(other.node.cmp(&self.node))
    }
}

/// Max-heap entry of the current k best.
#[derive(PartialEq)]
struct Best {
    dist: f64,
    index: usize,
}

impl Eq for Best {}

impl PartialOrd for Best {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Best {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.index.cmp(&other.index))
    }
}
