//! Bounding-volume hierarchy for nearest-point and closest-triangle queries.

use nalgebra::Vector3;

use crate::scalar::Real;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf { start: usize, end: usize },
    Inner { left: usize, right: usize },
}

#[derive(Debug, Clone)]
struct Node<T: Real> {
    lo: Vector3<T>,
    hi: Vector3<T>,
    kind: NodeKind,
}

/// Median-split BVH over axis-aligned boxes. Queries return the primitive
/// with the smallest distance, preferring the lower index on ties.
#[derive(Debug, Clone)]
pub struct Bvh<T: Real> {
    nodes: Vec<Node<T>>,
    order: Vec<usize>,
}

fn box_dist2<T: Real>(lo: &Vector3<T>, hi: &Vector3<T>, p: &Vector3<T>) -> T {
    let mut d = T::zero();
    for k in 0..3 {
        let e = if p[k] < lo[k] {
            lo[k] - p[k]
        } else if p[k] > hi[k] {
            p[k] - hi[k]
        } else {
            T::zero()
        };
        d += e * e;
    }
    d
}

impl<T: Real> Bvh<T> {
    pub fn build(boxes: &[(Vector3<T>, Vector3<T>)]) -> Self {
        let mut bvh = Self {
            nodes: Vec::with_capacity(2 * boxes.len() / LEAF_SIZE + 1),
            order: (0..boxes.len()).collect(),
        };
        if !boxes.is_empty() {
            bvh.build_node(boxes, 0, boxes.len());
        }
        bvh
    }

    fn build_node(&mut self, boxes: &[(Vector3<T>, Vector3<T>)], start: usize, end: usize) -> usize {
        let mut lo = boxes[self.order[start]].0;
        let mut hi = boxes[self.order[start]].1;
        let mut clo = (boxes[self.order[start]].0 + boxes[self.order[start]].1) * T::lit(0.5);
        let mut chi = clo;
        for &i in &self.order[start..end] {
            lo = lo.inf(&boxes[i].0);
            hi = hi.sup(&boxes[i].1);
            let c = (boxes[i].0 + boxes[i].1) * T::lit(0.5);
            clo = clo.inf(&c);
            chi = chi.sup(&c);
        }
        let id = self.nodes.len();
        self.nodes.push(Node { lo, hi, kind: NodeKind::Leaf { start, end } });
        if end - start <= LEAF_SIZE {
            return id;
        }
        let ext = chi - clo;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = (start + end) / 2;
        let key = |i: &usize| ((boxes[*i].0[axis] + boxes[*i].1[axis]), *i);
        self.order[start..end].select_nth_unstable_by(mid - start, |a, b| {
            let (ka, kb) = (key(a), key(b));
            ka.0.partial_cmp(&kb.0).unwrap_or(std::cmp::Ordering::Equal).then(ka.1.cmp(&kb.1))
        });
        let left = self.build_node(boxes, start, mid);
        let right = self.build_node(boxes, mid, end);
        self.nodes[id].kind = NodeKind::Inner { left, right };
        id
    }

    /// Primitive minimizing `dist2(i)`, where `dist2` must be bounded below
    /// by the squared distance from `query` to the primitive's box.
    pub fn nearest(&self, query: &Vector3<T>, mut dist2: impl FnMut(usize) -> T) -> Option<(usize, T)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(usize, T)> = None;
        let mut stack = vec![(0usize, box_dist2(&self.nodes[0].lo, &self.nodes[0].hi, query))];
        while let Some((id, bound)) = stack.pop() {
            if let Some((_, bd)) = best {
                if bound > bd {
                    continue;
                }
            }
            match self.nodes[id].kind {
                NodeKind::Leaf { start, end } => {
                    for &i in &self.order[start..end] {
                        let d = dist2(i);
                        let better = match best {
                            None => true,
                            Some((bi, bd)) => d < bd || (d == bd && i < bi),
                        };
                        if better {
                            best = Some((i, d));
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let dl = box_dist2(&self.nodes[left].lo, &self.nodes[left].hi, query);
                    let dr = box_dist2(&self.nodes[right].lo, &self.nodes[right].hi, query);
                    // nearer child popped first
                    if dl <= dr {
                        stack.push((right, dr));
                        stack.push((left, dl));
                    } else {
                        stack.push((left, dl));
                        stack.push((right, dr));
                    }
                }
            }
        }
        best
    }
}

/// Nearest-neighbour index over a point set.
#[derive(Debug, Clone)]
pub struct PointIndex<T: Real> {
    points: Vec<Vector3<T>>,
    bvh: Bvh<T>,
}

impl<T: Real> PointIndex<T> {
    pub fn new(points: &[Vector3<T>]) -> Self {
        let boxes: Vec<_> = points.iter().map(|p| (*p, *p)).collect();
        Self { points: points.to_vec(), bvh: Bvh::build(&boxes) }
    }

    pub fn points(&self) -> &[Vector3<T>] {
        &self.points
    }

    /// `(index, squared distance)` of the nearest point.
    pub fn nearest(&self, q: &Vector3<T>) -> Option<(usize, T)> {
        self.bvh.nearest(q, |i| (self.points[i] - q).norm_squared())
    }
}

/// Closest point on triangle `abc` to `p` as barycentric weights of `(a, b, c)`.
pub fn closest_point_on_triangle<T: Real>(p: &Vector3<T>, a: &Vector3<T>, b: &Vector3<T>, c: &Vector3<T>) -> [T; 3] {
    let (zero, one) = (T::zero(), T::one());
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= zero && d2 <= zero {
        return [one, zero, zero];
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= zero && d4 <= d3 {
        return [zero, one, zero];
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= zero && d1 >= zero && d3 <= zero {
        let v = d1 / (d1 - d3);
        return [one - v, v, zero];
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= zero && d5 <= d6 {
        return [zero, zero, one];
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= zero && d2 >= zero && d6 <= zero {
        let w = d2 / (d2 - d6);
        return [one - w, zero, w];
    }
    let va = d3 * d6 - d5 * d4;
    if va <= zero && (d4 - d3) >= zero && (d5 - d6) >= zero {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return [zero, one - w, w];
    }
    let denom = one / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    [one - v - w, v, w]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleHit<T: Real> {
    pub face: usize,
    pub bary: [T; 3],
    pub point: Vector3<T>,
    pub dist2: T,
}

/// Closest-point queries against a triangle soup.
#[derive(Debug, Clone)]
pub struct TriangleIndex<T: Real> {
    vertices: Vec<Vector3<T>>,
    faces: Vec<[usize; 3]>,
    bvh: Bvh<T>,
}

impl<T: Real> TriangleIndex<T> {
    pub fn new(vertices: &[Vector3<T>], faces: &[[usize; 3]]) -> Self {
        let boxes: Vec<_> = faces
            .iter()
            .map(|f| {
                let (a, b, c) = (vertices[f[0]], vertices[f[1]], vertices[f[2]]);
                (a.inf(&b).inf(&c), a.sup(&b).sup(&c))
            })
            .collect();
        Self {
            vertices: vertices.to_vec(),
            faces: faces.to_vec(),
            bvh: Bvh::build(&boxes),
        }
    }

    pub fn hit_face(&self, q: &Vector3<T>, fi: usize) -> TriangleHit<T> {
        let f = self.faces[fi];
        let (a, b, c) = (&self.vertices[f[0]], &self.vertices[f[1]], &self.vertices[f[2]]);
        let bary = closest_point_on_triangle(q, a, b, c);
        let point = a * bary[0] + b * bary[1] + c * bary[2];
        TriangleHit { face: fi, bary, point, dist2: (point - q).norm_squared() }
    }

    pub fn closest(&self, q: &Vector3<T>) -> Option<TriangleHit<T>> {
        let (face, _) = self.bvh.nearest(q, |fi| self.hit_face(q, fi).dist2)?;
        Some(self.hit_face(q, face))
    }

    /// Exhaustive search over all faces.
    pub fn closest_brute_force(&self, q: &Vector3<T>) -> Option<TriangleHit<T>> {
        (0..self.faces.len()).map(|fi| self.hit_face(q, fi)).fold(None, |best, h| match best {
            Some(b) if b.dist2 <= h.dist2 => Some(b),
            _ => Some(h),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, s: f64) -> Vector3<f64> {
        Vector3::from_fn(|_, _| rng.random_range(-s..s))
    }

    #[test]
    fn point_index_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<_> = (0..300).map(|_| rand_vec(&mut rng, 1.0)).collect();
        let idx = PointIndex::new(&pts);
        for _ in 0..200 {
            let q = rand_vec(&mut rng, 1.5);
            let brute = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (i, (p - q).norm_squared()))
                .fold((usize::MAX, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
            assert_eq!(idx.nearest(&q).unwrap(), brute);
        }
    }

    #[test]
    fn duplicate_points_prefer_lower_index() {
        let pts = vec![Vector3::new(1.0, 0.0, 0.0); 9];
        let idx = PointIndex::new(&pts);
        assert_eq!(idx.nearest(&Vector3::zeros()).unwrap().0, 0);
    }

    #[test]
    fn centroid_projection() {
        let m = shapes::equilateral_triangle::<f64>();
        let idx = TriangleIndex::new(m.vertices(), m.faces());
        let c = m.vertices().iter().sum::<Vector3<f64>>() / 3.0;
        let hit = idx.closest(&(c + Vector3::new(0.0, 0.0, 0.7))).unwrap();
        for b in hit.bary {
            assert!((b - 1.0 / 3.0).abs() < 1e-9);
        }
        assert!((hit.dist2 - 0.49).abs() < 1e-12);
    }

    #[test]
    fn vertex_query_gives_corner() {
        let m = shapes::icosphere::<f64>(2);
        let idx = TriangleIndex::new(m.vertices(), m.faces());
        for (v, p) in m.vertices().iter().enumerate() {
            let hit = idx.closest(p).unwrap();
            let f = m.faces()[hit.face];
            let k = f.iter().position(|&x| x == v).expect("incident face");
            assert!((hit.bary[k] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn triangle_index_matches_brute_force() {
        let m = shapes::icosphere::<f64>(3);
        let idx = TriangleIndex::new(m.vertices(), m.faces());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let q = rand_vec(&mut rng, 1.4);
            let (a, b) = (idx.closest(&q).unwrap(), idx.closest_brute_force(&q).unwrap());
            assert_eq!(a.face, b.face);
            assert_eq!(a.dist2, b.dist2);
            assert!(((a.point - q).norm_squared() - a.dist2).abs() < 1e-9);
            assert!(a.bary.iter().all(|&x| x >= -1e-6));
            assert!((a.bary.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}
