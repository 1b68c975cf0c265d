use crate::{CoreError, Result, Vec3};

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone, Copy)]
enum Node {
    Leaf {
        start: u32,
        end: u32,
    },
    Split {
        axis: u8,
        value: f64,
        left: u32,
        right: u32,
    },
}

/// Immutable k-nearest-neighbor index over a point snapshot.
///
/// Queries return exactly `min(k, n)` hits ordered by nondecreasing distance,
/// ties broken by ascending point index, so results match a brute-force scan
/// bit for bit.
#[derive(Debug, Clone)]
pub struct KnnIndex {
    points: Vec<Vec3>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

/// Builds the spatial index. Errors with "empty point set" on empty input.
pub fn build_knn_index(points: &[Vec3]) -> Result<KnnIndex> {
    KnnIndex::build(points.to_vec())
}

impl KnnIndex {
    pub fn build(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(CoreError::EmptyPointSet);
        }
        if let Some(p) = points.iter().find(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(CoreError::InvalidInput(format!(
                "non-finite point in index: {p:?}"
            )));
        }
        let mut index = Self {
            order: (0..points.len() as u32).collect(),
            points,
            nodes: Vec::new(),
        };
        let n = index.order.len();
        index.build_node(0, n);
        Ok(index)
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

    fn build_node(&mut self, start: usize, end: usize) -> u32 {
        let id = self.nodes.len() as u32;
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf {
                start: start as u32,
                end: end as u32,
            });
            return id;
        }

        let mut min = self.points[self.order[start] as usize];
        let mut max = min;
        for &i in &self.order[start..end] {
            let p = &self.points[i as usize];
            min = min.inf(p);
            max = max.sup(p);
        }
        let ext = max - min;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };

        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            let va = points[a as usize][axis];
            let vb = points[b as usize][axis];
            va.total_cmp(&vb).then(a.cmp(&b))
        });
        let value = self.points[self.order[mid] as usize][axis];

        self.nodes.push(Node::Leaf { start: 0, end: 0 }); // placeholder
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id as usize] = Node::Split {
            axis: axis as u8,
            value,
            left,
            right,
        };
        id
    }

    /// Single nearest neighbor: `(index, distance)`.
    pub fn nearest(&self, query: &Vec3) -> (usize, f64) {
        let hits = self.knn(query, 1);
        hits[0]
    }

    /// The `min(k, n)` nearest neighbors as `(index, distance)` pairs.
    pub fn knn(&self, query: &Vec3, k: usize) -> Vec<(usize, f64)> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        // Best-so-far kept as (squared distance, index), worst last.
        let mut best: Vec<(f64, u32)> = Vec::with_capacity(k + 1);
        self.search(0, query, k, &mut best);
        best.into_iter()
            .map(|(d2, i)| (i as usize, d2.sqrt()))
            .collect()
    }

    fn search(&self, node: u32, query: &Vec3, k: usize, best: &mut Vec<(f64, u32)>) {
        match self.nodes[node as usize] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    let d2 = (self.points[i as usize] - query).norm_squared();
                    let cand = (d2, i);
                    if best.len() == k {
                        let worst = *best.last().unwrap();
                        if cmp(cand, worst) == std::cmp::Ordering::Less {
                            best.pop();
                        } else {
                            continue;
                        }
                    }
                    let pos = best.partition_point(|&b| cmp(b, cand) == std::cmp::Ordering::Less);
                    best.insert(pos, cand);
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let q = query[axis as usize];
                let (near, far) = if q < value { (left, right) } else { (right, left) };
                self.search(near, query, k, best);
                let plane_d2 = (q - value) * (q - value);
                // The far side can still hold an equal-distance lower-index
                // point, so descend on <= rather than <.
                if best.len() < k || plane_d2 <= best.last().unwrap().0 {
                    self.search(far, query, k, best);
                }
            }
        }
    }
}

fn cmp(a: (f64, u32), b: (f64, u32)) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force oracle: full scan sorted by (distance, index).
    fn brute_knn(points: &[Vec3], query: &Vec3, k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| ((p - query).norm_squared(), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.truncate(k.min(points.len()));
        all.into_iter().map(|(d2, i)| (i, d2.sqrt())).collect()
    }

    #[test]
    fn empty_input_is_an_error() {
        let err = build_knn_index(&[]).unwrap_err();
        assert_eq!(err.to_string(), "empty point set");
    }

    #[test]
    fn single_point_caps_k() {
        let idx = build_knn_index(&[Vec3::new(1.0, 2.0, 3.0)]).unwrap();
        let hits = idx.knn(&Vec3::new(9.0, 9.0, 9.0), 3);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].0, 0);
    }

    #[test]
    fn cube_corners_tie_break_by_index() {
        let mut corners = Vec::new();
        for z in [-1.0, 1.0] {
            for y in [-1.0, 1.0] {
                for x in [-1.0, 1.0] {
                    corners.push(Vec3::new(x, y, z));
                }
            }
        }
        let idx = build_knn_index(&corners).unwrap();
        let hits = idx.knn(&Vec3::zeros(), 8);
        assert_eq!(hits.len(), 8);
        let d = hits[0].1;
        for (rank, (i, dist)) in hits.iter().enumerate() {
            assert_eq!(*i, rank, "equal distances must come back in index order");
            assert!((dist - d).abs() < 1e-12);
        }
        assert_eq!(hits, brute_knn(&corners, &Vec3::zeros(), 8));
    }

    #[test]
    fn random_queries_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let points: Vec<Vec3> = (0..1000)
            .map(|_| Vec3::new(rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()))
            .collect();
        let idx = build_knn_index(&points).unwrap();
        for _ in 0..100 {
            let q = Vec3::new(
                rng.gen_range(-0.2..1.2),
                rng.gen_range(-0.2..1.2),
                rng.gen_range(-0.2..1.2),
            );
            for k in [1, 3, 17] {
                assert_eq!(idx.knn(&q, k), brute_knn(&points, &q, k));
            }
        }
    }

    #[test]
    fn duplicate_points_are_all_reported() {
        let points = vec![Vec3::zeros(), Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)];
        let idx = build_knn_index(&points).unwrap();
        let hits = idx.knn(&Vec3::zeros(), 3);
        assert_eq!(
            hits.iter().map(|h| h.0).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
    }
}
