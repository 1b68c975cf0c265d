use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::{CoreError, Result, TriMesh, Vec3};

/// Writes an ASCII OBJ (positions and triangular faces only).
pub fn save_mesh_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    for v in &mesh.vertices {
        writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for f in &mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    w.flush()?;
    Ok(())
}

/// Loads an ASCII OBJ. Faces must be triangles; `v/vt/vn` index syntax is
/// accepted (only the vertex index is used).
pub fn load_mesh_obj(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    let mut offset = 0u64;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line_len = line.len() as u64 + 1;
        let err = |msg: String| CoreError::Parse {
            path: path.to_path_buf(),
            offset,
            msg: format!("line {}: {msg}", lineno + 1),
        };
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let mut coords = [0.0f64; 3];
                for c in &mut coords {
                    *c = tok
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| err("bad vertex coordinate".into()))?;
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<&str> = tok.collect();
                if idx.len() != 3 {
                    return Err(err("non-triangular face".into()));
                }
                let mut f = [0u32; 3];
                for (slot, t) in f.iter_mut().zip(&idx) {
                    let first = t.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|_| err(format!("bad face index '{t}'")))?;
                    let resolved = if i < 0 {
                        vertices.len() as i64 + i
                    } else {
                        i - 1
                    };
                    if resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(err(format!("face index {i} out of range")));
                    }
                    *slot = resolved as u32;
                }
                faces.push(f);
            }
            // Ignore normals, texcoords, groups, materials, comments.
            Some(_) | None => {}
        }
        offset += line_len;
    }
    let mesh = TriMesh {
        vertices,
        faces,
        colors: None,
        normals: None,
    };
    mesh.validate()?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obj_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.obj");
        let mesh = TriMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        save_mesh_obj(&mesh, &path).unwrap();
        let back = load_mesh_obj(&path).unwrap();
        assert_eq!(back.vertices, mesh.vertices);
        assert_eq!(back.faces, mesh.faces);
    }

    #[test]
    fn quad_face_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("quad.obj");
        std::fs::write(
            &path,
            "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n",
        )
        .unwrap();
        let err = load_mesh_obj(&path).unwrap_err();
        assert!(
            err.to_string().contains("non-triangular face"),
            "got: {err}"
        );
    }

    #[test]
    fn slash_indices_are_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.obj");
        std::fs::write(&path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3\n").unwrap();
        let mesh = load_mesh_obj(&path).unwrap();
        assert_eq!(mesh.faces, vec![[0, 1, 2]]);
    }
}
