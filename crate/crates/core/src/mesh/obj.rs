use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::{MeshError, TriMesh};
use crate::scalar::Real;

/// Loads an ASCII OBJ file. Polygons are fan-triangulated around their first
/// corner; texture, normal, and material records are ignored.
pub fn load_obj<T: Real>(path: impl AsRef<Path>) -> Result<TriMesh<T>, MeshError> {
    let text = std::fs::read_to_string(path)?;
    parse_obj(&text)
}

pub fn parse_obj<T: Real>(text: &str) -> Result<TriMesh<T>, MeshError> {
    let mut vertices: Vec<Vector3<T>> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = content.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut xyz = [T::zero(); 3];
                for c in &mut xyz {
                    let tok = tokens.next().ok_or_else(|| MeshError::Parse {
                        line,
                        message: "vertex needs three coordinates".into(),
                    })?;
                    let val: f64 = tok.parse().map_err(|_| MeshError::Parse {
                        line,
                        message: format!("invalid coordinate `{tok}`"),
                    })?;
                    *c = T::lit(val);
                }
                vertices.push(Vector3::new(xyz[0], xyz[1], xyz[2]));
            }
            Some("f") => {
                let corners = tokens
                    .map(|tok| parse_corner(tok, vertices.len(), line))
                    .collect::<Result<Vec<_>, _>>()?;
                if corners.len() < 3 {
                    return Err(MeshError::Parse {
                        line,
                        message: format!("face has {} corners, need at least 3", corners.len()),
                    });
                }
                for k in 1..corners.len() - 1 {
                    faces.push([corners[0], corners[k], corners[k + 1]]);
                }
            }
            _ => {}
        }
    }
    let mesh = TriMesh::new(vertices, faces)?;
    mesh.check_connected()?;
    Ok(mesh.with_recomputed_normals())
}

/// Resolves one `f` corner token (`i`, `i/t`, `i//n`, `i/t/n`, negative
/// indices relative to the current vertex count) to a zero-based index.
/// Out-of-range positive indices pass through so the mesh constructor can
/// report them against the final vertex count.
fn parse_corner(tok: &str, seen: usize, line: usize) -> Result<usize, MeshError> {
    let head = tok.split('/').next().unwrap_or("");
    let idx: i64 = head.parse().map_err(|_| MeshError::Parse {
        line,
        message: format!("invalid face index `{tok}`"),
    })?;
    match idx {
        0 => Err(MeshError::Parse {
            line,
            message: "face index 0 is not valid in OBJ".into(),
        }),
        i if i > 0 => Ok((i - 1) as usize),
        i => {
            let back = (-i) as usize;
            if back > seen {
                Err(MeshError::Parse {
                    line,
                    message: format!("relative index {i} precedes the first vertex"),
                })
            } else {
                Ok(seen - back)
            }
        }
    }
}

pub fn write_obj_string<T: Real>(vertices: &[Vector3<T>], faces: &[[usize; 3]]) -> String {
    let mut out = String::with_capacity(vertices.len() * 40 + faces.len() * 20);
    for v in vertices {
        let _ = writeln!(out, "v {} {} {}", v.x.as_f64(), v.y.as_f64(), v.z.as_f64());
    }
    for f in faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

pub fn write_obj<T: Real>(
    path: impl AsRef<Path>,
    vertices: &[Vector3<T>],
    faces: &[[usize; 3]],
) -> std::io::Result<()> {
    std::fs::write(path, write_obj_string(vertices, faces))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_triangle() {
        let m: TriMesh<f64> = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        assert_eq!(m.vertex_count(), 3);
        assert_eq!(m.face_count(), 1);
        assert!((m.total_surface_area() - 0.5).abs() < 1e-15);
        assert!(m.normals().is_some());
    }

    #[test]
    fn quad_is_fan_triangulated() {
        let m: TriMesh<f64> =
            parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3 4/4/4\n").unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn out_of_range_index() {
        let err = parse_obj::<f64>("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n").unwrap_err();
        assert!(matches!(err, MeshError::IndexOutOfRange { index: 8, vertex_count: 3, .. }));
    }

    #[test]
    fn negative_indices_and_comments() {
        let src = "# tri\nvt 0 0\nv 0 0 0\nv 1 0 0\nv 0 1 0 # third\nusemtl foo\nf -3 -2 -1\n";
        let m: TriMesh<f64> = parse_obj(src).unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn error_kinds_are_distinct() {
        assert!(matches!(parse_obj::<f64>("v 0 0 x\n"), Err(MeshError::Parse { line: 1, .. })));
        assert!(matches!(parse_obj::<f64>(""), Err(MeshError::Empty)));
        assert!(matches!(
            parse_obj::<f64>("v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n"),
            Err(MeshError::DegenerateFace { .. })
        ));
        let two = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 5 0 0\nv 6 0 0\nv 5 1 0\nf 1 2 3\nf 4 5 6\n";
        assert!(matches!(parse_obj::<f64>(two), Err(MeshError::Disconnected { components: 2 })));
    }

    #[test]
    fn write_then_parse() {
        let m = crate::mesh::shapes::icosphere::<f64>(1);
        let back: TriMesh<f64> = parse_obj(&write_obj_string(m.vertices(), m.faces())).unwrap();
        assert_eq!(back.faces(), m.faces());
        for (a, b) in back.vertices().iter().zip(m.vertices()) {
            assert_eq!(a, b);
        }
    }
}
