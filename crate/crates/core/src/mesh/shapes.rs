//! Procedural test and fixture meshes.

use std::collections::HashMap;

use nalgebra::Vector3;

use super::TriMesh;
use crate::scalar::Real;

fn build<T: Real>(vertices: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> TriMesh<T> {
    let vertices = vertices
        .into_iter()
        .map(|p| Vector3::new(T::lit(p[0]), T::lit(p[1]), T::lit(p[2])))
        .collect();
    TriMesh::new(vertices, faces).expect("procedural mesh is valid")
}

/// Unit-edge equilateral triangle in the z = 0 plane.
pub fn equilateral_triangle<T: Real>() -> TriMesh<T> {
    build(
        vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 3f64.sqrt() / 2.0, 0.0]],
        vec![[0, 1, 2]],
    )
}

/// Right isoceles triangle with the right angle at vertex 0.
pub fn right_triangle<T: Real>() -> TriMesh<T> {
    build(
        vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        vec![[0, 1, 2]],
    )
}

/// Unit square split into two triangles along the (0,0)-(1,1) diagonal.
pub fn quad_fan<T: Real>() -> TriMesh<T> {
    build(
        vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]],
        vec![[0, 1, 2], [0, 2, 3]],
    )
}

pub fn octahedron<T: Real>() -> TriMesh<T> {
    build(
        vec![
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
        ],
        vec![
            [0, 2, 4],
            [2, 1, 4],
            [1, 3, 4],
            [3, 0, 4],
            [2, 0, 5],
            [1, 2, 5],
            [3, 1, 5],
            [0, 3, 5],
        ],
    )
}

fn icosahedron_raw() -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let r = (1.0 + t * t).sqrt();
    let vertices = raw.iter().map(|p| [p[0] / r, p[1] / r, p[2] / r]).collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (vertices, faces)
}

/// Regular icosahedron inscribed in the unit sphere.
pub fn icosahedron<T: Real>() -> TriMesh<T> {
    let (v, f) = icosahedron_raw();
    build(v, f)
}

/// Unit icosphere after `subdivisions` rounds of 1-to-4 midpoint splitting.
///
/// Vertex counts: 12, 42, 162, 642, 2562 for 0..=4 subdivisions.
pub fn icosphere<T: Real>(subdivisions: usize) -> TriMesh<T> {
    let (mut vertices, mut faces) = icosahedron_raw();
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<[f64; 3]>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let (p, q) = (vertices[a], vertices[b]);
                let m = [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0, (p[2] + q[2]) / 2.0];
                let n = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
                vertices.push([m[0] / n, m[1] / n, m[2] / n]);
                vertices.len() - 1
            })
        };
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    build(vertices, faces)
}

/// Regular-grid sheet `[0, 1]²` in the z = 0 plane with `n × n` quads.
pub fn grid<T: Real>(n: usize) -> TriMesh<T> {
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 / n as f64, j as f64 / n as f64, 0.0]);
        }
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut faces = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    build(vertices, faces)
}
