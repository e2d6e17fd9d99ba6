use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::Serialize;

use super::{CorrespondenceMap, EvalError};
use crate::mesh::TriMesh;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Frontier {
    dist: f64,
    vertex: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    // reversed for a min-heap; equal distances pop the lower vertex first
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Edge graph of a target mesh with Euclidean edge lengths.
#[derive(Debug, Clone)]
pub struct GeodesicIndex {
    adjacency: Vec<Vec<(usize, f64)>>,
    sqrt_area: f64,
}

impl GeodesicIndex {
    pub fn new<T: Real>(mesh: &TriMesh<T>) -> Result<Self, EvalError> {
        let components = mesh.connected_components();
        if components != 1 {
            return Err(EvalError::Disconnected { components });
        }
        let v = mesh.vertices();
        let mut adjacency = vec![Vec::new(); mesh.vertex_count()];
        for (a, b) in mesh.edges() {
            let len = (v[a] - v[b]).norm().as_f64();
            adjacency[a].push((b, len));
            adjacency[b].push((a, len));
        }
        Ok(Self { adjacency, sqrt_area: mesh.total_surface_area().as_f64().sqrt() })
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn sqrt_area(&self) -> f64 {
        self.sqrt_area
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    /// Shortest edge-path lengths from `source` to every vertex.
    pub fn distances_from(&self, source: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.adjacency.len()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Frontier { dist: 0.0, vertex: source });
        while let Some(Frontier { dist: d, vertex: u }) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(w, len) in &self.adjacency[u] {
                let nd = d + len;
                if nd < dist[w] {
                    dist[w] = nd;
                    heap.push(Frontier { dist: nd, vertex: w });
                }
            }
        }
        dist
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        self.distances_from(a)[b]
    }
}

/// Per-entry errors normalized by the square root of the surface area, and
/// their mean and deciles scaled by 100.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeodesicReport {
    pub per_vertex: Vec<f64>,
    pub mean_x100: f64,
    /// Error ×100 at the 10th, 20th, …, 100th percentile (nearest rank).
    pub deciles_x100: Vec<f64>,
}

fn snapped(map: &CorrespondenceMap, faces: &[[usize; 3]]) -> Vec<usize> {
    map.entries
        .iter()
        .map(|e| faces[e.face as usize][e.dominant_corner()])
        .collect()
}

/// Snaps both maps to vertices by largest barycentric weight and measures
/// edge-graph distances between them.
pub fn geodesic_error<T: Real>(
    pred: &CorrespondenceMap,
    gt: &CorrespondenceMap,
    target: &TriMesh<T>,
    index: &GeodesicIndex,
) -> Result<GeodesicReport, EvalError> {
    if let (Some(p), Some(g)) = (&pred.target_hash, &gt.target_hash) {
        if p != g {
            return Err(EvalError::TargetMismatch { pred: p.clone(), gt: g.clone() });
        }
    }
    if pred.len() != gt.len() {
        return Err(EvalError::LengthMismatch { pred: pred.len(), gt: gt.len() });
    }
    pred.validate(target.face_count())?;
    gt.validate(target.face_count())?;
    let p = snapped(pred, target.faces());
    let g = snapped(gt, target.faces());

    let mut sources: Vec<usize> = p.clone();
    sources.sort_unstable();
    sources.dedup();
    let tables: Vec<Vec<f64>> = sources.par_iter().map(|&s| index.distances_from(s)).collect();
    let per_vertex: Vec<f64> = p
        .iter()
        .zip(&g)
        .map(|(&a, &b)| {
            let row = sources.binary_search(&a).expect("source present");
            tables[row][b] / index.sqrt_area()
        })
        .collect();

    let n = per_vertex.len();
    let mean_x100 = if n == 0 { 0.0 } else { 100.0 * per_vertex.iter().sum::<f64>() / n as f64 };
    let mut sorted = per_vertex.clone();
    sorted.sort_by(f64::total_cmp);
    let deciles_x100 = if n == 0 {
        Vec::new()
    } else {
        (1..=10).map(|d| 100.0 * sorted[(d * n).div_ceil(10) - 1]).collect()
    };
    Ok(GeodesicReport { per_vertex, mean_x100, deciles_x100 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspondence::CorrespondenceEntry;
    use crate::mesh::shapes;

    fn all_pairs(index: &GeodesicIndex) -> Vec<Vec<f64>> {
        let n = index.vertex_count();
        let mut d = vec![vec![f64::INFINITY; n]; n];
        for (u, row) in d.iter_mut().enumerate() {
            row[u] = 0.0;
            for &(w, len) in index.neighbors(u) {
                row[w] = len;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = d[i][k] + d[k][j];
                    if via < d[i][j] {
                        d[i][j] = via;
                    }
                }
            }
        }
        d
    }

    fn vertex_map(mesh: &TriMesh<f64>, targets: &[usize]) -> CorrespondenceMap {
        let id = CorrespondenceMap::identity(mesh, "");
        CorrespondenceMap {
            entries: targets.iter().map(|&v| id.entries[v]).collect(),
            ..id
        }
    }

    #[test]
    fn dijkstra_equals_all_pairs() {
        for mesh in [shapes::icosahedron::<f64>(), shapes::icosphere(1)] {
            let index = GeodesicIndex::new(&mesh).unwrap();
            let dense = all_pairs(&index);
            for s in 0..index.vertex_count() {
                let d = index.distances_from(s);
                for t in 0..index.vertex_count() {
                    assert!((d[t] - dense[s][t]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_edge_error() {
        let m = shapes::icosahedron::<f64>();
        let index = GeodesicIndex::new(&m).unwrap();
        let (a, b) = m.edges()[0];
        let len = (m.vertices()[a] - m.vertices()[b]).norm();
        let n = m.vertex_count();
        let mut p: Vec<usize> = (0..n).collect();
        p[a] = b;
        let pred = vertex_map(&m, &p);
        let gt = vertex_map(&m, &(0..n).collect::<Vec<_>>());
        let r = geodesic_error(&pred, &gt, &m, &index).unwrap();
        let expected = len / m.total_surface_area().sqrt();
        assert_eq!(r.per_vertex[a], expected);
        assert!((r.mean_x100 - 100.0 * expected / n as f64).abs() < 1e-12);
    }

    #[test]
    fn identity_scores_zero() {
        let m = shapes::icosphere::<f64>(2);
        let index = GeodesicIndex::new(&m).unwrap();
        let id = CorrespondenceMap::identity(&m, "");
        let r = geodesic_error(&id, &id, &m, &index).unwrap();
        assert_eq!(r.mean_x100, 0.0);
        assert!(r.deciles_x100.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn symmetric_and_triangle_inequality() {
        let m = shapes::icosphere::<f64>(1);
        let index = GeodesicIndex::new(&m).unwrap();
        let n = m.vertex_count();
        let a: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
        let b: Vec<usize> = (0..n).map(|i| (i * 11 + 5) % n).collect();
        let c: Vec<usize> = (0..n).map(|i| (i * 13 + 1) % n).collect();
        let (ma, mb, mc) = (vertex_map(&m, &a), vertex_map(&m, &b), vertex_map(&m, &c));
        let ab = geodesic_error(&ma, &mb, &m, &index).unwrap();
        let ba = geodesic_error(&mb, &ma, &m, &index).unwrap();
        let bc = geodesic_error(&mb, &mc, &m, &index).unwrap();
        let ac = geodesic_error(&ma, &mc, &m, &index).unwrap();
        for i in 0..n {
            assert!((ab.per_vertex[i] - ba.per_vertex[i]).abs() < 1e-12);
            assert!(ac.per_vertex[i] <= ab.per_vertex[i] + bc.per_vertex[i] + 1e-12);
        }
    }

    #[test]
    fn hash_mismatch_refused() {
        let m = shapes::octahedron::<f64>();
        let index = GeodesicIndex::new(&m).unwrap();
        let mut a = CorrespondenceMap::identity(&m, "");
        let mut b = a.clone();
        a.target_hash = Some("aa".into());
        b.target_hash = Some("bb".into());
        assert!(matches!(geodesic_error(&a, &b, &m, &index), Err(EvalError::TargetMismatch { .. })));
    }

    #[test]
    fn snapping_uses_largest_weight() {
        let e = CorrespondenceEntry { face: 0, bary: [0.2, 0.5, 0.3] };
        assert_eq!(e.dominant_corner(), 1);
        let tie = CorrespondenceEntry { face: 0, bary: [0.4, 0.4, 0.2] };
        assert_eq!(tie.dominant_corner(), 0);
    }

    #[test]
    fn disconnected_target_rejected() {
        let a = shapes::equilateral_triangle::<f64>();
        let two = a.concat(&a.with_vertices(a.vertices().iter().map(|v| v.add_scalar(5.0)).collect()).unwrap()).unwrap();
        assert!(matches!(GeodesicIndex::new(&two), Err(EvalError::Disconnected { components: 2 })));
    }
}
