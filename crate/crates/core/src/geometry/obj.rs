//! ASCII Wavefront OBJ: `v` and `f` records only.

use std::io::Write;
use std::path::Path;

use super::mesh::TriMesh;
use crate::error::{CoreError, Result};
use crate::io;

pub fn parse_obj(text: &str, origin: &str) -> Result<TriMesh> {
    let err = |line: usize, msg: String| CoreError::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut mesh = TriMesh::default();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let coords: Vec<f64> = parts
                    .map(str::parse::<f64>)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| err(ln, format!("bad vertex coordinate: {e}")))?;
                if coords.len() < 3 || coords.len() > 4 {
                    return Err(err(ln, format!("vertex needs 3 coordinates, found {}", coords.len())));
                }
                if coords.iter().any(|c| !c.is_finite()) {
                    return Err(err(ln, "non-finite vertex coordinate".into()));
                }
                mesh.vertices.push([coords[0], coords[1], coords[2]]);
            }
            Some("f") => {
                let nv = mesh.vertices.len() as i64;
                let idx = parts
                    .map(|tok| {
                        let head = tok.split('/').next().unwrap_or("");
                        let v: i64 = head
                            .parse()
                            .map_err(|_| err(ln, format!("bad face index `{tok}`")))?;
                        let resolved = if v > 0 { v - 1 } else { nv + v };
                        if v == 0 || resolved < 0 || resolved >= nv {
                            return Err(err(ln, format!("face index {v} out of range (1..={nv})")));
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<Result<Vec<usize>>>()?;
                if idx.len() < 3 {
                    return Err(err(ln, format!("face needs at least 3 vertices, found {}", idx.len())));
                }
                for k in 1..idx.len() - 1 {
                    let f = [idx[0], idx[k], idx[k + 1]];
                    if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                        return Err(err(ln, format!("degenerate face {:?}", f.map(|v| v + 1))));
                    }
                    mesh.faces.push(f);
                }
            }
            _ => {}
        }
    }
    Ok(mesh)
}

pub fn load_obj(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    parse_obj(&text, &path.display().to_string())
}

pub fn write_obj(mesh: &TriMesh, mut w: impl Write) -> std::io::Result<()> {
    for v in &mesh.vertices {
        writeln!(w, "v {:.9} {:.9} {:.9}", v[0], v[1], v[2])?;
    }
    for f in &mesh.faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

pub fn save_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = io::create(path)?;
    write_obj(mesh, &mut w).map_err(|e| CoreError::io(path, e))?;
    io::flush(w, path)
}
