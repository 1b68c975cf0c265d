use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::{CoreError, PointCloud, Result, TriMesh, Vec3};

fn parse_err(path: &Path, offset: u64, msg: impl Into<String>) -> CoreError {
    CoreError::Parse {
        path: path.to_path_buf(),
        offset,
        msg: msg.into(),
    }
}

fn write_header<W: Write>(
    w: &mut W,
    vertex_count: usize,
    has_normals: bool,
    has_colors: bool,
    face_count: Option<usize>,
) -> Result<()> {
    write!(w, "ply\nformat binary_little_endian 1.0\n")?;
    write!(w, "element vertex {vertex_count}\n")?;
    write!(w, "property float x\nproperty float y\nproperty float z\n")?;
    if has_normals {
        write!(w, "property float nx\nproperty float ny\nproperty float nz\n")?;
    }
    if has_colors {
        write!(w, "property uchar red\nproperty uchar green\nproperty uchar blue\n")?;
    }
    if let Some(fc) = face_count {
        write!(w, "element face {fc}\n")?;
        write!(w, "property list uchar int vertex_indices\n")?;
    }
    write!(w, "end_header\n")?;
    Ok(())
}

fn write_vertices<W: Write>(
    w: &mut W,
    points: &[Vec3],
    normals: Option<&[Vec3]>,
    colors: Option<&[[f32; 3]]>,
) -> Result<()> {
    for (i, p) in points.iter().enumerate() {
        w.write_f32::<LittleEndian>(p.x as f32)?;
        w.write_f32::<LittleEndian>(p.y as f32)?;
        w.write_f32::<LittleEndian>(p.z as f32)?;
        if let Some(ns) = normals {
            let n = ns[i];
            w.write_f32::<LittleEndian>(n.x as f32)?;
            w.write_f32::<LittleEndian>(n.y as f32)?;
            w.write_f32::<LittleEndian>(n.z as f32)?;
        }
        if let Some(cs) = colors {
            for ch in cs[i] {
                w.write_u8((ch.clamp(0.0, 1.0) * 255.0).round() as u8)?;
            }
        }
    }
    Ok(())
}

/// Writes a triangle mesh (with optional normals and colors).
pub fn save_mesh_ply(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    write_header(
        &mut w,
        mesh.vertices.len(),
        mesh.normals.is_some(),
        mesh.colors.is_some(),
        Some(mesh.faces.len()),
    )?;
    write_vertices(
        &mut w,
        &mesh.vertices,
        mesh.normals.as_deref(),
        mesh.colors.as_deref(),
    )?;
    for f in &mesh.faces {
        w.write_u8(3)?;
        for &i in f {
            w.write_i32::<LittleEndian>(i as i32)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes an oriented point cloud (normals always present, colors optional).
pub fn save_cloud_ply(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    write_header(&mut w, cloud.points.len(), true, cloud.colors.is_some(), None)?;
    write_vertices(
        &mut w,
        &cloud.points,
        Some(&cloud.normals),
        cloud.colors.as_deref(),
    )?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Prop {
    X,
    Y,
    Z,
    Nx,
    Ny,
    Nz,
    Red,
    Green,
    Blue,
    SkipF32,
    SkipU8,
}

struct Header {
    vertex_count: usize,
    face_count: usize,
    props: Vec<Prop>,
    has_faces: bool,
    body_offset: u64,
}

fn parse_header(path: &Path, r: &mut impl Read) -> Result<Header> {
    // Read the header byte by byte so the binary body stays untouched.
    let mut lines: Vec<String> = Vec::new();
    let mut line = Vec::new();
    let mut offset = 0u64;
    loop {
        let mut byte = [0u8; 1];
        if r.read(&mut byte)? == 0 {
            return Err(parse_err(path, offset, "unexpected EOF in header"));
        }
        offset += 1;
        if byte[0] == b'\n' {
            let text = String::from_utf8_lossy(&line).trim().to_string();
            let done = text == "end_header";
            lines.push(text);
            line.clear();
            if done {
                break;
            }
            if offset > 65536 {
                return Err(parse_err(path, offset, "header too large"));
            }
        } else {
            line.push(byte[0]);
        }
    }

    if lines.first().map(String::as_str) != Some("ply") {
        return Err(parse_err(path, 0, "missing 'ply' magic"));
    }
    let mut vertex_count = 0usize;
    let mut face_count = 0usize;
    let mut props = Vec::new();
    let mut has_faces = false;
    let mut current = "";
    let mut format_seen = false;
    for raw in &lines[1..] {
        let mut tok = raw.split_whitespace();
        match tok.next() {
            Some("format") => {
                let fmt = tok.next().unwrap_or("");
                if fmt != "binary_little_endian" {
                    return Err(parse_err(path, 0, format!("unsupported format '{fmt}'")));
                }
                format_seen = true;
            }
            Some("comment") | Some("obj_info") => {}
            Some("element") => {
                let kind = tok.next().unwrap_or("");
                let count: usize = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| parse_err(path, 0, "bad element count"))?;
                match kind {
                    "vertex" => {
                        vertex_count = count;
                        current = "vertex";
                    }
                    "face" => {
                        face_count = count;
                        has_faces = true;
                        current = "face";
                    }
                    other => {
                        return Err(parse_err(path, 0, format!("unsupported element '{other}'")))
                    }
                }
            }
            Some("property") => {
                let ty = tok.next().unwrap_or("");
                if current == "vertex" {
                    let name = tok.next().unwrap_or("");
                    let prop = match (ty, name) {
                        ("float", "x") => Prop::X,
                        ("float", "y") => Prop::Y,
                        ("float", "z") => Prop::Z,
                        ("float", "nx") => Prop::Nx,
                        ("float", "ny") => Prop::Ny,
                        ("float", "nz") => Prop::Nz,
                        ("uchar", "red") => Prop::Red,
                        ("uchar", "green") => Prop::Green,
                        ("uchar", "blue") => Prop::Blue,
                        ("float", _) => Prop::SkipF32,
                        ("uchar", _) => Prop::SkipU8,
                        (other, name) => {
                            return Err(parse_err(
                                path,
                                0,
                                format!("unsupported vertex property '{other} {name}'"),
                            ))
                        }
                    };
                    props.push(prop);
                } else if current == "face" {
                    // Only "list uchar int vertex_indices" is accepted.
                    let rest: Vec<&str> = std::iter::once(ty).chain(tok).collect();
                    if rest != ["list", "uchar", "int", "vertex_indices"]
                        && rest != ["list", "uchar", "uint", "vertex_indices"]
                    {
                        return Err(parse_err(
                            path,
                            0,
                            format!("unsupported face property '{}'", rest.join(" ")),
                        ));
                    }
                } else {
                    return Err(parse_err(path, 0, "property before element"));
                }
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(parse_err(path, 0, format!("unknown header line '{other}'")))
            }
            None => {}
        }
    }
    if !format_seen {
        return Err(parse_err(path, 0, "missing format line"));
    }
    if !props.contains(&Prop::X) || !props.contains(&Prop::Y) || !props.contains(&Prop::Z) {
        return Err(parse_err(path, 0, "vertex element lacks x/y/z"));
    }
    Ok(Header {
        vertex_count,
        face_count,
        props,
        has_faces,
        body_offset: offset,
    })
}

struct PlyBody {
    points: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
    colors: Option<Vec<[f32; 3]>>,
    faces: Vec<[u32; 3]>,
}

fn read_body(path: &Path, r: &mut impl Read, header: &Header) -> Result<PlyBody> {
    let mut offset = header.body_offset;
    let has_normals = header.props.contains(&Prop::Nx);
    let has_colors = header.props.contains(&Prop::Red);

    let mut points = Vec::with_capacity(header.vertex_count);
    let mut normals = has_normals.then(|| Vec::with_capacity(header.vertex_count));
    let mut colors = has_colors.then(|| Vec::with_capacity(header.vertex_count));

    let fail = |offset: u64| parse_err(path, offset, "unexpected EOF in vertex data");

    for _ in 0..header.vertex_count {
        let mut p = Vec3::zeros();
        let mut n = Vec3::zeros();
        let mut c = [0f32; 3];
        for prop in &header.props {
            match prop {
                Prop::X | Prop::Y | Prop::Z | Prop::Nx | Prop::Ny | Prop::Nz | Prop::SkipF32 => {
                    let v = r.read_f32::<LittleEndian>().map_err(|_| fail(offset))? as f64;
                    offset += 4;
                    match prop {
                        Prop::X => p.x = v,
                        Prop::Y => p.y = v,
                        Prop::Z => p.z = v,
                        Prop::Nx => n.x = v,
                        Prop::Ny => n.y = v,
                        Prop::Nz => n.z = v,
                        _ => {}
                    }
                }
                Prop::Red | Prop::Green | Prop::Blue | Prop::SkipU8 => {
                    let v = r.read_u8().map_err(|_| fail(offset))? as f32 / 255.0;
                    offset += 1;
                    match prop {
                        Prop::Red => c[0] = v,
                        Prop::Green => c[1] = v,
                        Prop::Blue => c[2] = v,
                        _ => {}
                    }
                }
            }
        }
        points.push(p);
        if let Some(ns) = &mut normals {
            ns.push(n);
        }
        if let Some(cs) = &mut colors {
            cs.push(c);
        }
    }

    let mut faces = Vec::with_capacity(header.face_count);
    if header.has_faces {
        for _ in 0..header.face_count {
            let n = r
                .read_u8()
                .map_err(|_| parse_err(path, offset, "unexpected EOF in face data"))?;
            offset += 1;
            if n != 3 {
                return Err(parse_err(path, offset, "non-triangular face"));
            }
            let mut f = [0u32; 3];
            for slot in &mut f {
                let idx = r
                    .read_i32::<LittleEndian>()
                    .map_err(|_| parse_err(path, offset, "unexpected EOF in face data"))?;
                offset += 4;
                if idx < 0 {
                    return Err(parse_err(path, offset, "negative vertex index"));
                }
                *slot = idx as u32;
            }
            faces.push(f);
        }
    }
    Ok(PlyBody {
        points,
        normals,
        colors,
        faces,
    })
}

pub fn load_mesh_ply(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    let header = parse_header(path, &mut r)?;
    let body = read_body(path, &mut r, &header)?;
    let mesh = TriMesh {
        vertices: body.points,
        faces: body.faces,
        colors: body.colors,
        normals: body.normals,
    };
    mesh.validate()?;
    Ok(mesh)
}

pub fn load_cloud_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    let header = parse_header(path, &mut r)?;
    let body = read_body(path, &mut r, &header)?;
    let normals = body
        .normals
        .ok_or_else(|| parse_err(path, header.body_offset, "point cloud lacks nx/ny/nz"))?;
    let cloud = PointCloud {
        points: body.points,
        normals,
        colors: body.colors,
    };
    cloud.validate()?;
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn f32_grid(v: f64) -> f64 {
        v as f32 as f64
    }

    fn random_mesh(seed: u64) -> TriMesh {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vertices: Vec<Vec3> = (0..50)
            .map(|_| {
                Vec3::new(
                    f32_grid(rng.gen_range(-1.0..1.0)),
                    f32_grid(rng.gen_range(-1.0..1.0)),
                    f32_grid(rng.gen_range(-1.0..1.0)),
                )
            })
            .collect();
        let faces: Vec<[u32; 3]> = (0..40)
            .map(|_| {
                loop {
                    let f = [
                        rng.gen_range(0..50u32),
                        rng.gen_range(0..50u32),
                        rng.gen_range(0..50u32),
                    ];
                    if f[0] != f[1] && f[1] != f[2] && f[0] != f[2] {
                        return f;
                    }
                }
            })
            .collect();
        let colors = (0..50)
            .map(|_| {
                [
                    rng.gen_range(0..=255u8) as f32 / 255.0,
                    rng.gen_range(0..=255u8) as f32 / 255.0,
                    rng.gen_range(0..=255u8) as f32 / 255.0,
                ]
            })
            .collect();
        TriMesh {
            vertices,
            faces,
            colors: Some(colors),
            normals: None,
        }
    }

    #[test]
    fn mesh_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ply");
        let mesh = random_mesh(1);
        save_mesh_ply(&mesh, &path).unwrap();
        let back = load_mesh_ply(&path).unwrap();
        assert_eq!(back.vertices, mesh.vertices);
        assert_eq!(back.faces, mesh.faces);
        assert_eq!(back.colors, mesh.colors);
    }

    #[test]
    fn cloud_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let points: Vec<Vec3> = (0..64)
            .map(|_| {
                Vec3::new(
                    f32_grid(rng.gen_range(-1.0..1.0)),
                    f32_grid(rng.gen_range(-1.0..1.0)),
                    f32_grid(rng.gen_range(-1.0..1.0)),
                )
            })
            .collect();
        let normals: Vec<Vec3> = (0..64)
            .map(|_| {
                let v = Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                )
                .normalize();
                // Normals survive the f32 cast only if stored on the grid.
                Vec3::new(f32_grid(v.x), f32_grid(v.y), f32_grid(v.z)).normalize()
            })
            .map(|v| Vec3::new(f32_grid(v.x), f32_grid(v.y), f32_grid(v.z)))
            .collect();
        // Renormalize drift is below validation tolerance for f32-grid data.
        let cloud = PointCloud {
            points,
            normals,
            colors: None,
        };
        save_cloud_ply(&cloud, &path).unwrap();
        let back = load_cloud_ply(&path).unwrap();
        assert_eq!(back.points, cloud.points);
        assert_eq!(back.normals, cloud.normals);
    }

    #[test]
    fn golden_bytes_for_two_point_cloud() {
        // Hand-assembled reference file: two vertices with normals, no color.
        let mut expected: Vec<u8> = Vec::new();
        expected.extend_from_slice(
            b"ply\nformat binary_little_endian 1.0\nelement vertex 2\n\
              property float x\nproperty float y\nproperty float z\n\
              property float nx\nproperty float ny\nproperty float nz\n\
              end_header\n",
        );
        for v in [1.0f32, 2.0, 3.0, 0.0, 0.0, 1.0, -1.0, 0.5, 0.25, 1.0, 0.0, 0.0] {
            expected.extend_from_slice(&v.to_le_bytes());
        }

        let cloud = PointCloud {
            points: vec![Vec3::new(1.0, 2.0, 3.0), Vec3::new(-1.0, 0.5, 0.25)],
            normals: vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 0.0, 0.0)],
            colors: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("golden.ply");
        save_cloud_ply(&cloud, &path).unwrap();
        let written = std::fs::read(&path).unwrap();
        assert_eq!(written, expected, "writer output must match golden bytes");
    }

    #[test]
    fn truncated_file_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ply");
        let mesh = random_mesh(3);
        save_mesh_ply(&mesh, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        let err = load_mesh_ply(&path).unwrap_err();
        match err {
            CoreError::Parse { offset, .. } => assert!(offset > 0),
            other => panic!("expected parse error, got {other}"),
        }
    }
}
