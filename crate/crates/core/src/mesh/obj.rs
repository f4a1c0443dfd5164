use std::fmt::Write as _;
use std::path::Path;

use super::TriMesh;
use crate::error::{Error, Result};
use crate::geom::{Vec2, Vec3};

/// Reads a Wavefront OBJ subset (`v`, `vt`, triangular `f`). Vertex order is
/// preserved. Positions are not rescaled.
pub fn load_obj(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text)
}

pub fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut positions: Vec<Vec3> = Vec::new();
    let mut texcoords: Vec<Vec2> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut face_lines: Vec<usize> = Vec::new();
    let mut face_uv: Vec<[Option<usize>; 3]> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut tok = content.split_whitespace();
        let Some(tag) = tok.next() else { continue };
        match tag {
            "v" => {
                let xyz = parse_floats(tok, 3, line)?;
                positions.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
            "vt" => {
                let uv = parse_floats(tok, 2, line)?;
                texcoords.push(Vec2::new(uv[0], uv[1]));
            }
            "f" => {
                let refs: Vec<&str> = tok.collect();
                if refs.len() != 3 {
                    return Err(Error::Parse {
                        line,
                        message: format!("expected a triangle, found {} corners", refs.len()),
                    });
                }
                let mut f = [0usize; 3];
                let mut fuv = [None; 3];
                for (k, r) in refs.iter().enumerate() {
                    let mut parts = r.split('/');
                    let v = parse_index(parts.next().unwrap_or(""), positions.len(), line)?;
                    f[k] = v;
                    if let Some(t) = parts.next().filter(|t| !t.is_empty()) {
                        fuv[k] = Some(parse_index(t, texcoords.len(), line)?);
                    }
                }
                faces.push(f);
                face_uv.push(fuv);
                face_lines.push(line);
            }
            "vn" | "o" | "g" | "s" | "usemtl" | "mtllib" | "l" => {}
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unsupported record `{other}`"),
                })
            }
        }
    }

    let uv = if face_uv.iter().any(|f| f.iter().any(Option::is_some)) {
        // Per-vertex UVs: the first texture coordinate seen for a vertex wins.
        let mut per_vertex: Vec<Option<Vec2>> = vec![None; positions.len()];
        for (f, fuv) in faces.iter().zip(&face_uv) {
            for k in 0..3 {
                if let (Some(t), slot @ None) = (fuv[k], &mut per_vertex[f[k]]) {
                    *slot = Some(texcoords[t]);
                }
            }
        }
        Some(per_vertex.into_iter().map(|t| t.unwrap_or_else(Vec2::zeros)).collect())
    } else {
        None
    };

    TriMesh::new(positions, faces, uv).map_err(|e| match e {
        Error::NonManifold { a, b, face } => Error::Parse {
            line: face_lines[face],
            message: format!("non-manifold edge ({}, {})", a + 1, b + 1),
        },
        other => other,
    })
}

fn parse_floats<'a>(tok: impl Iterator<Item = &'a str>, n: usize, line: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = tok
        .take(n)
        .map(|t| {
            t.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("bad number `{t}`"),
            })
        })
        .collect::<Result<_>>()?;
    if vals.len() < n {
        return Err(Error::Parse {
            line,
            message: format!("expected {n} numbers"),
        });
    }
    Ok(vals)
}

/// OBJ indices are 1-based; negative values count back from the end.
fn parse_index(t: &str, count: usize, line: usize) -> Result<usize> {
    let raw: i64 = t.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad index `{t}`"),
    })?;
    let idx = if raw < 0 { count as i64 + raw } else { raw - 1 };
    if raw == 0 || idx < 0 || idx >= count as i64 {
        return Err(Error::OutOfRange {
            line,
            index: raw,
            count,
        });
    }
    Ok(idx as usize)
}

/// Serializes with 9 significant digits per coordinate. Faces reference
/// the per-vertex UV when one exists.
pub fn to_obj_string(mesh: &TriMesh) -> String {
    let mut s = String::with_capacity(mesh.vertex_count() * 48 + mesh.face_count() * 24);
    for v in &mesh.vertices {
        let _ = writeln!(s, "v {:e} {:e} {:e}", v.x, v.y, v.z);
    }
    if let Some(uv) = &mesh.uv {
        for t in uv {
            let _ = writeln!(s, "vt {:e} {:e}", t.x, t.y);
        }
        for f in mesh.faces() {
            let _ = writeln!(
                s,
                "f {a}/{a} {b}/{b} {c}/{c}",
                a = f[0] + 1,
                b = f[1] + 1,
                c = f[2] + 1
            );
        }
    } else {
        for f in mesh.faces() {
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
    }
    s
}

pub fn write_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_obj_string(mesh)).map_err(|e| Error::io(path, e))
}
