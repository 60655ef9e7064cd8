//! Extrusion paths: a G-code subset parser, a minimal slicer and the
//! extruder-tip to UAV-body transform.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bsp::ChunkId;
use crate::geometry::{section_loops, GeometryError, Plane, TriangleMesh, Vec3};

pub const DEFAULT_LAYER_HEIGHT: f64 = 0.05;
pub const DEFAULT_LINE_SPACING: f64 = 0.05;

const MM: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlicerConfig {
    pub layer_height: f64,
    pub line_spacing: f64,
}

impl Default for SlicerConfig {
    fn default() -> Self {
        Self { layer_height: DEFAULT_LAYER_HEIGHT, line_spacing: DEFAULT_LINE_SPACING }
    }
}

impl SlicerConfig {
    pub fn validate(&self) -> Result<(), ToolpathError> {
        if !(self.layer_height.is_finite() && self.layer_height > 0.0) {
            return Err(ToolpathError::InvalidParameter("slicer.layer_height must be positive"));
        }
        if !(self.line_spacing.is_finite() && self.line_spacing > 0.0) {
            return Err(ToolpathError::InvalidParameter("slicer.line_spacing must be positive"));
        }
        Ok(())
    }

    /// Slices a chunk for printing. A chunk thinner than one layer is
    /// printed as a single layer of its own height.
    pub fn slice(&self, mesh: &TriangleMesh) -> Result<PrintPath, ToolpathError> {
        match slice_chunk(mesh, self.layer_height, self.line_spacing) {
            Err(ToolpathError::EmptySlice { height, .. }) if height > 0.0 => slice_chunk(mesh, height, self.line_spacing),
            other => other,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ToolpathError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: unsupported command {command}")]
    UnsupportedCommand { line: usize, command: String },
    #[error("mesh height {height} m is below the layer height {layer_height} m")]
    EmptySlice { height: f64, layer_height: f64 },
    #[error("path has no waypoints")]
    EmptyPath,
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    ExtruderTip,
    UavBody,
}

/// Target position; `extrude` marks the move that ends here as printing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Vec3,
    pub extrude: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feed: Option<f64>,
}

impl Waypoint {
    pub fn travel(position: Vec3) -> Self {
        Self { position, extrude: false, feed: None }
    }

    pub fn print(position: Vec3) -> Self {
        Self { position, extrude: true, feed: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrintPath {
    pub waypoints: Vec<Waypoint>,
    pub frame: Frame,
    pub chunk_id: ChunkId,
}

impl PrintPath {
    /// Total length of the moves, optionally only the extruding ones.
    pub fn length(&self, extruding_only: bool) -> f64 {
        self.waypoints
            .windows(2)
            .filter(|w| !extruding_only || w[1].extrude)
            .map(|w| (w[1].position - w[0].position).norm())
            .sum()
    }

    pub fn extruding_count(&self) -> usize {
        self.waypoints.iter().filter(|w| w.extrude).count()
    }

    /// CSV with header `x,y,z,extrude`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,z,extrude\n");
        for w in &self.waypoints {
            let p = w.position;
            writeln!(out, "{},{},{},{}", p.x, p.y, p.z, u8::from(w.extrude)).unwrap();
        }
        out
    }
}

/// Translates every waypoint up by the extruder length.
pub fn extruder_to_uav(path: &PrintPath, l_ex: f64) -> PrintPath {
    let offset = Vec3::new(0.0, 0.0, l_ex);
    PrintPath {
        waypoints: path.waypoints.iter().map(|w| Waypoint { position: w.position + offset, ..*w }).collect(),
        frame: Frame::UavBody,
        chunk_id: path.chunk_id,
    }
}

/// Parses G0/G1 moves (millimetres, absolute positioning, absolute E).
/// Moves start from the origin; missing axis words keep their last value.
pub fn parse_gcode(text: &str) -> Result<PrintPath, ToolpathError> {
    let mut pos = [0.0f64; 3];
    let mut e = 0.0f64;
    let mut feed: Option<f64> = None;
    let mut waypoints = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let code = raw.split(';').next().unwrap_or("").trim();
        if code.is_empty() {
            continue;
        }
        let mut words = code.split_whitespace();
        let command = words.next().unwrap().to_ascii_uppercase();
        let mut fields: Vec<(char, f64)> = Vec::new();
        for w in words {
            let mut chars = w.chars();
            let letter = chars.next().unwrap().to_ascii_uppercase();
            let value = chars.as_str().parse::<f64>().ok().filter(|v| v.is_finite());
            match value {
                Some(v) => fields.push((letter, v)),
                None if command.starts_with('M') => {}
                None => return Err(ToolpathError::Parse { line, reason: format!("malformed word '{w}'") }),
            }
        }
        let word = |c: char| fields.iter().rev().find(|(l, _)| *l == c).map(|&(_, v)| v);

        let normalized = normalize(&command);
        match normalized.as_str() {
            "G0" | "G1" => {
                for (axis, c) in ['X', 'Y', 'Z'].into_iter().enumerate() {
                    if let Some(v) = word(c) {
                        pos[axis] = v * MM;
                    }
                }
                if let Some(f) = word('F') {
                    if f <= 0.0 {
                        return Err(ToolpathError::Parse { line, reason: format!("feed rate {f} must be positive") });
                    }
                    feed = Some(f / 60_000.0);
                }
                let mut extrude = false;
                if let Some(new_e) = word('E') {
                    extrude = normalized == "G1" && new_e > e;
                    e = new_e;
                }
                waypoints.push(Waypoint { position: Vec3::new(pos[0], pos[1], pos[2]), extrude, feed });
            }
            "G92" => {
                if let Some(v) = word('E') {
                    e = v;
                }
            }
            "G2" | "G3" | "G5" | "G91" | "G20" => {
                return Err(ToolpathError::UnsupportedCommand { line, command });
            }
            c if c.starts_with('G') || c.starts_with('M') || c.starts_with('T') => {}
            _ => return Err(ToolpathError::Parse { line, reason: format!("unknown command '{command}'") }),
        }
    }
    if waypoints.is_empty() {
        return Err(ToolpathError::EmptyPath);
    }
    Ok(PrintPath { waypoints, frame: Frame::ExtruderTip, chunk_id: 0 })
}

/// `G01` and `G1` are the same command.
fn normalize(command: &str) -> String {
    match command.strip_prefix('G') {
        Some(num) => match num.parse::<u32>() {
            Ok(n) => format!("G{n}"),
            Err(_) => command.to_string(),
        },
        None => command.to_string(),
    }
}

/// Writes `path` as G-code that [`parse_gcode`] reads back. Extrusion is
/// accumulated in absolute E proportional to the move length.
pub fn serialize_gcode(path: &PrintPath) -> String {
    let mut out = String::from("; toolpath\nG21\nG90\nG92 E0\n");
    let mut e = 0.0;
    let mut prev = Vec3::ZERO;
    for w in &path.waypoints {
        let p = w.position / MM;
        let cmd = if w.extrude { "G1" } else { "G0" };
        write!(out, "{cmd} X{:.6} Y{:.6} Z{:.6}", p.x, p.y, p.z).unwrap();
        if w.extrude {
            e += 0.01 + 0.05 * (w.position - prev).norm() / MM;
            write!(out, " E{e:.5}").unwrap();
        }
        if let Some(f) = w.feed {
            write!(out, " F{:.6}", f * 60_000.0).unwrap();
        }
        out.push('\n');
        prev = w.position;
    }
    out
}

/// Slices `mesh` into horizontal layers: each cross-section loop as a
/// perimeter, then a zigzag infill whose direction alternates by layer.
pub fn slice_chunk(mesh: &TriangleMesh, layer_height: f64, line_spacing: f64) -> Result<PrintPath, ToolpathError> {
    SlicerConfig { layer_height, line_spacing }.validate()?;
    let (lo, hi) = mesh.bounds().ok_or(ToolpathError::EmptySlice { height: 0.0, layer_height })?;
    let height = hi.z - lo.z;
    if height < layer_height {
        return Err(ToolpathError::EmptySlice { height, layer_height });
    }

    let mut waypoints = Vec::new();
    let mut k = 0;
    loop {
        let z = lo.z + (k as f64 + 0.5) * layer_height;
        if z >= hi.z {
            break;
        }
        let plane = Plane::new(Vec3::new(lo.x, lo.y, z), Vec3::Z)?;
        let loops: Vec<Vec<[f64; 2]>> = section_loops(mesh, &plane)?
            .iter()
            .map(|l| drop_collinear(&l.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>()))
            .filter(|l| l.len() >= 3)
            .collect();
        for l in &loops {
            let start = (0..l.len()).min_by(|&a, &b| l[a].partial_cmp(&l[b]).unwrap()).unwrap();
            let at = |i: usize| Vec3::new(l[i][0], l[i][1], z);
            waypoints.push(Waypoint::travel(at(start)));
            for s in 1..=l.len() {
                waypoints.push(Waypoint::print(at((start + s) % l.len())));
            }
        }
        for [a, b] in infill(&loops, line_spacing, k % 2 == 1) {
            waypoints.push(Waypoint::travel(Vec3::new(a[0], a[1], z)));
            waypoints.push(Waypoint::print(Vec3::new(b[0], b[1], z)));
        }
        k += 1;
    }
    if waypoints.is_empty() {
        return Err(ToolpathError::EmptySlice { height, layer_height });
    }
    Ok(PrintPath { waypoints, frame: Frame::ExtruderTip, chunk_id: 0 })
}

fn drop_collinear(ring: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = ring.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b, c) = (ring[(i + n - 1) % n], ring[i], ring[(i + 1) % n]);
        let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
        let scale = ((b[0] - a[0]).hypot(b[1] - a[1])) * ((c[0] - b[0]).hypot(c[1] - b[1]));
        if cross.abs() > 1e-12 * scale.max(1e-300) {
            out.push(b);
        }
    }
    out
}

/// Scanline segments inside the even-odd region of `loops`, alternating
/// direction from line to line. Lines run along x, or along y if `along_y`.
fn infill(loops: &[Vec<[f64; 2]>], spacing: f64, along_y: bool) -> Vec<[[f64; 2]; 2]> {
    // Work in (u, v) with scanlines at constant v.
    let (ui, vi) = if along_y { (1, 0) } else { (0, 1) };
    let pts = loops.iter().flatten();
    let v_min = pts.clone().map(|p| p[vi]).fold(f64::INFINITY, f64::min);
    let v_max = pts.map(|p| p[vi]).fold(f64::NEG_INFINITY, f64::max);
    let mut segments = Vec::new();
    let mut j = 0;
    let mut forward = true;
    loop {
        let v = v_min + (j as f64 + 0.5) * spacing;
        if v >= v_max {
            break;
        }
        let mut hits = Vec::new();
        for l in loops {
            for i in 0..l.len() {
                let (a, b) = (l[i], l[(i + 1) % l.len()]);
                if (a[vi] <= v) != (b[vi] <= v) {
                    let t = (v - a[vi]) / (b[vi] - a[vi]);
                    hits.push(a[ui] + t * (b[ui] - a[ui]));
                }
            }
        }
        hits.sort_by(f64::total_cmp);
        let mut line: Vec<[f64; 2]> = hits
            .chunks_exact(2)
            .filter(|c| c[1] - c[0] > 1e-9)
            .map(|c| [c[0], c[1]])
            .collect();
        if !forward {
            line.reverse();
            line.iter_mut().for_each(|s| s.swap(0, 1));
        }
        for [u0, u1] in line {
            let point = |u: f64| if along_y { [v, u] } else { [u, v] };
            segments.push([point(u0), point(u1)]);
        }
        forward = !forward;
        j += 1;
    }
    segments
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Vec3, b: Vec3) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn g1_in_millimetres() {
        let p = parse_gcode("G1 X1000 Y0 Z200 E1.5").unwrap();
        assert_eq!(p.waypoints.len(), 1);
        assert!(close(p.waypoints[0].position, Vec3::new(1.0, 0.0, 0.2)));
        assert!(p.waypoints[0].extrude);
        assert_eq!(p.frame, Frame::ExtruderTip);
    }

    #[test]
    fn g0_is_travel() {
        let p = parse_gcode("G0 X10 Y10").unwrap();
        assert!(!p.waypoints[0].extrude);
        assert!(close(p.waypoints[0].position, Vec3::new(0.01, 0.01, 0.0)));
    }

    #[test]
    fn arcs_are_unsupported() {
        assert_eq!(
            parse_gcode("G2 X5 Y5 I2 J0"),
            Err(ToolpathError::UnsupportedCommand { line: 1, command: "G2".into() })
        );
        assert!(matches!(parse_gcode("G91\nG1 X1"), Err(ToolpathError::UnsupportedCommand { line: 1, .. })));
    }

    #[test]
    fn modal_words_comments_and_resets() {
        let text = "; header\nM104 S200\nG28\nG90\nG1 X10 Y20 Z5 E1 F1200 ; first\nG1 X30 E1\nG92 E0\nG1 Y40 E0.5\nG1 Z6\n";
        let p = parse_gcode(text).unwrap();
        let w = &p.waypoints;
        assert_eq!(w.len(), 4);
        assert!(close(w[1].position, Vec3::new(0.03, 0.02, 0.005)));
        assert!(w[0].extrude);
        assert!(!w[1].extrude, "E unchanged");
        assert!(w[2].extrude, "E increases after reset");
        assert!(!w[3].extrude);
        assert!((w[3].feed.unwrap() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn malformed_words() {
        assert!(matches!(parse_gcode("G1 X1\nG1 Xabc"), Err(ToolpathError::Parse { line: 2, .. })));
        assert!(matches!(parse_gcode("G1 X1 F-5"), Err(ToolpathError::Parse { line: 1, .. })));
        assert_eq!(parse_gcode("; nothing\nM84\n"), Err(ToolpathError::EmptyPath));
    }

    #[test]
    fn uav_offset() {
        let path = PrintPath { waypoints: vec![Waypoint::print(Vec3::new(1.0, 1.0, 0.0))], frame: Frame::ExtruderTip, chunk_id: 3 };
        let up = extruder_to_uav(&path, 0.5);
        assert!(close(up.waypoints[0].position, Vec3::new(1.0, 1.0, 0.5)));
        assert_eq!(up.frame, Frame::UavBody);
        assert_eq!(up.chunk_id, 3);
        let tiny = extruder_to_uav(&path, 1e-9);
        assert!((tiny.waypoints[0].position - path.waypoints[0].position).norm() <= 1e-9);
    }

    #[test]
    fn thin_mesh_has_no_layers() {
        let m = TriangleMesh::cuboid(Vec3::ZERO, Vec3::new(1.0, 1.0, 0.01));
        assert!(matches!(slice_chunk(&m, 0.05, 0.05), Err(ToolpathError::EmptySlice { .. })));
        assert!(matches!(slice_chunk(&m, 0.0, 0.05), Err(ToolpathError::InvalidParameter(_))));
        // printing falls back to one layer at mid-height
        let p = SlicerConfig::default().slice(&m).unwrap();
        assert!(p.waypoints.iter().all(|w| (w.position.z - 0.005).abs() < 1e-12));
    }

    #[test]
    fn slab_layers() {
        let m = TriangleMesh::cuboid(Vec3::ZERO, Vec3::new(1.0, 1.0, 0.1));
        let p = slice_chunk(&m, 0.05, 0.5).unwrap();
        let zs: Vec<f64> = p.waypoints.iter().map(|w| w.position.z).collect();
        let mut layers = zs.clone();
        layers.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        assert_eq!(layers.len(), 2);
        assert!((layers[0] - 0.025).abs() < 1e-12 && (layers[1] - 0.075).abs() < 1e-12);
        // per layer: travel + 4 perimeter moves, then 2 infill lines (travel + print each)
        assert_eq!(p.waypoints.len(), 2 * (5 + 4));
        let first = &p.waypoints[..9];
        assert!(!first[0].extrude && close(first[0].position, Vec3::new(0.0, 0.0, 0.025)));
        assert!(first[1..5].iter().all(|w| w.extrude));
        assert!(close(first[4].position, first[0].position));
        // first layer infill runs along x, the second along y
        assert!((first[5].position.y - first[6].position.y).abs() < 1e-12);
        let second = &p.waypoints[9..];
        assert!((second[5].position.x - second[6].position.x).abs() < 1e-12);
    }

    #[test]
    fn csv_and_length() {
        let path = PrintPath {
            waypoints: vec![Waypoint::travel(Vec3::ZERO), Waypoint::print(Vec3::new(3.0, 4.0, 0.0)), Waypoint::travel(Vec3::new(3.0, 4.0, 1.0))],
            frame: Frame::ExtruderTip,
            chunk_id: 0,
        };
        assert_eq!(path.length(true), 5.0);
        assert_eq!(path.length(false), 6.0);
        assert_eq!(path.to_csv(), "x,y,z,extrude\n0,0,0,0\n3,4,0,1\n3,4,1,0\n");
    }
}
