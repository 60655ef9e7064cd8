//! STL input and OBJ/STL output.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::{TriangleMesh, Vec3};

#[derive(Debug, Error)]
pub enum StlError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("truncated binary STL: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("malformed ASCII STL at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

pub fn read_stl(path: impl AsRef<Path>) -> Result<TriangleMesh, StlError> {
    let bytes = std::fs::read(path)?;
    read_stl_bytes(&bytes)
}

/// Parses binary or ASCII STL, welding vertices with identical coordinates.
pub fn read_stl_bytes(bytes: &[u8]) -> Result<TriangleMesh, StlError> {
    let triangles = if looks_ascii(bytes) { parse_ascii(bytes)? } else { parse_binary(bytes)? };
    Ok(weld(&triangles))
}

fn looks_ascii(bytes: &[u8]) -> bool {
    // Some binary exporters also start the header with "solid", so check
    // whether the binary length field is consistent first.
    if bytes.len() >= 84 {
        let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
        if 84 + n * 50 == bytes.len() {
            return false;
        }
    }
    let head = &bytes[..bytes.len().min(512)];
    std::str::from_utf8(head).map(|s| s.trim_start().starts_with("solid")).unwrap_or(false)
}

fn parse_binary(bytes: &[u8]) -> Result<Vec<[Vec3; 3]>, StlError> {
    if bytes.len() < 84 {
        return Err(StlError::Truncated { expected: 84, found: bytes.len() });
    }
    let n = u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]) as usize;
    let expected = 84 + n * 50;
    if bytes.len() < expected {
        return Err(StlError::Truncated { expected, found: bytes.len() });
    }
    let f = |o: usize| f32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as f64;
    Ok((0..n)
        .map(|t| {
            let base = 84 + t * 50 + 12;
            [0, 1, 2].map(|k| {
                let o = base + k * 12;
                Vec3::new(f(o), f(o + 4), f(o + 8))
            })
        })
        .collect())
}

fn parse_ascii(bytes: &[u8]) -> Result<Vec<[Vec3; 3]>, StlError> {
    let text = String::from_utf8_lossy(bytes);
    let mut tris = Vec::new();
    let mut current: Vec<Vec3> = Vec::with_capacity(3);
    for (no, line) in text.lines().enumerate() {
        let mut words = line.split_whitespace();
        match words.next() {
            Some("vertex") => {
                let coords: Vec<f64> = words
                    .map(|w| w.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| StlError::Malformed { line: no + 1, reason: e.to_string() })?;
                if coords.len() != 3 {
                    return Err(StlError::Malformed { line: no + 1, reason: "vertex needs 3 coordinates".into() });
                }
                current.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("endloop") => {
                if current.len() != 3 {
                    return Err(StlError::Malformed { line: no + 1, reason: format!("facet has {} vertices", current.len()) });
                }
                tris.push([current[0], current[1], current[2]]);
                current.clear();
            }
            _ => {}
        }
    }
    Ok(tris)
}

fn weld(triangles: &[[Vec3; 3]]) -> TriangleMesh {
    let mut index: HashMap<[u64; 3], u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut faces = Vec::with_capacity(triangles.len());
    for tri in triangles {
        let face = tri.map(|p| {
            // -0.0 and 0.0 must weld together.
            let key = [p.x + 0.0, p.y + 0.0, p.z + 0.0].map(f64::to_bits);
            *index.entry(key).or_insert_with(|| {
                vertices.push(p);
                (vertices.len() - 1) as u32
            })
        });
        if face[0] != face[1] && face[1] != face[2] && face[0] != face[2] {
            faces.push(face);
        }
    }
    TriangleMesh { vertices, faces }
}

pub fn write_obj(mesh: &TriangleMesh, name: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "o {name}");
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for f in &mesh.faces {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

pub fn write_stl_ascii(mesh: &TriangleMesh, name: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "solid {name}");
    for face in 0..mesh.faces.len() {
        let [a, b, c] = mesh.triangle(face);
        let n = (b - a).cross(c - a);
        let n = if n.norm() > 0.0 { n.normalized() } else { n };
        let _ = writeln!(out, "  facet normal {} {} {}", n.x, n.y, n.z);
        let _ = writeln!(out, "    outer loop");
        for p in [a, b, c] {
            let _ = writeln!(out, "      vertex {} {} {}", p.x, p.y, p.z);
        }
        let _ = writeln!(out, "    endloop");
        let _ = writeln!(out, "  endfacet");
    }
    let _ = writeln!(out, "endsolid {name}");
    out
}
