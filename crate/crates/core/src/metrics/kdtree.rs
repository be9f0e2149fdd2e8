//! Exact 3-D kd-tree for nearest-neighbor queries.
//!
//! Matches the brute-force scan bit for bit: squared distances use the same
//! accumulation order, and equidistant candidates resolve to the lowest
//! original index.

use super::dist2;

const LEAF_SIZE: usize = 8;

enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f32, left: usize, right: usize },
}

pub struct KdTree {
    nodes: Vec<Node>,
    items: Vec<(u32, [f32; 3])>,
    root: usize,
}

impl KdTree {
    pub fn build(points: &[[f32; 3]]) -> Self {
        assert!(!points.is_empty(), "kd-tree needs at least one point");
        let mut items: Vec<(u32, [f32; 3])> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (i as u32, *p))
            .collect();
        let mut nodes = Vec::new();
        let n = items.len();
        let root = build_rec(&mut items, 0, n, &mut nodes);
        KdTree { nodes, items, root }
    }

    /// Index into the original slice and squared distance of the nearest
    /// point to `q`.
    pub fn nearest(&self, q: [f32; 3]) -> (usize, f64) {
        let mut best_d2 = f64::INFINITY;
        let mut best_idx = u32::MAX;
        self.search(self.root, q, &mut best_d2, &mut best_idx);
        (best_idx as usize, best_d2)
    }

    fn search(&self, node: usize, q: [f32; 3], best_d2: &mut f64, best_idx: &mut u32) {
        match &self.nodes[node] {
            Node::Leaf { start, end } => {
                for &(idx, p) in &self.items[*start..*end] {
                    let d2 = dist2(q, p);
                    if d2 < *best_d2 || (d2 == *best_d2 && idx < *best_idx) {
                        *best_d2 = d2;
                        *best_idx = idx;
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let dq = q[*axis] as f64 - *value as f64;
                let (near, far) = if q[*axis] < *value { (*left, *right) } else { (*right, *left) };
                self.search(near, q, best_d2, best_idx);
                // `<=` keeps equidistant candidates reachable so the
                // lowest-index tie rule can apply.
                if dq * dq <= *best_d2 {
                    self.search(far, q, best_d2, best_idx);
                }
            }
        }
    }
}

fn build_rec(items: &mut [(u32, [f32; 3])], lo: usize, hi: usize, nodes: &mut Vec<Node>) -> usize {
    if hi - lo <= LEAF_SIZE {
        nodes.push(Node::Leaf { start: lo, end: hi });
        return nodes.len() - 1;
    }
    // Split the widest extent.
    let mut min = [f32::INFINITY; 3];
    let mut max = [f32::NEG_INFINITY; 3];
    for &(_, p) in &items[lo..hi] {
        for a in 0..3 {
            min[a] = min[a].min(p[a]);
            max[a] = max[a].max(p[a]);
        }
    }
    let mut axis = 0;
    for a in 1..3 {
        if max[a] - min[a] > max[axis] - min[axis] {
            axis = a;
        }
    }
    let mid = (lo + hi) / 2;
    items[lo..hi].select_nth_unstable_by(mid - lo, |a, b| {
        a.1[axis].partial_cmp(&b.1[axis]).expect("finite coordinates")
    });
    let value = items[mid].1[axis];
    let left = build_rec(items, lo, mid, nodes);
    let right = build_rec(items, mid, hi, nodes);
    nodes.push(Node::Split { axis, value, left, right });
    nodes.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(points: &[[f32; 3]], q: [f32; 3]) -> (usize, f64) {
        let mut best = (0usize, f64::INFINITY);
        for (i, &p) in points.iter().enumerate() {
            let d2 = dist2(q, p);
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        best
    }

    #[test]
    fn matches_brute_force_on_random_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let points: Vec<[f32; 3]> = (0..300)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let tree = KdTree::build(&points);
        for _ in 0..200 {
            let q = [rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2)];
            let (bi, bd) = brute(&points, q);
            let (ti, td) = tree.nearest(q);
            assert_eq!(bi, ti);
            assert_eq!(bd, td);
        }
    }

    #[test]
    fn duplicate_points_resolve_to_lowest_index() {
        let points = vec![[1.0, 0.0, 0.0], [0.5, 0.5, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        let tree = KdTree::build(&points);
        let (idx, d2) = tree.nearest([1.0, 0.0, 0.0]);
        assert_eq!(idx, 0);
        assert_eq!(d2, 0.0);
    }
}
