//! Triangle meshes, planes and the mesh/plane operations the chunk search
//! is built on.

mod io;
mod primitives;
mod sampling;
mod split;
mod triangulate;

use std::collections::HashMap;
use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{read_stl, read_stl_bytes, write_obj, write_stl_ascii, StlError};
pub use sampling::{plane_family, sample_normals};
pub use split::{section_loops, split_mesh};
pub use triangulate::triangulate_polygon_with_holes;

/// Vertices closer than this to a plane are snapped onto it.
pub const PLANE_SNAP_EPS: f64 = 1e-9;

/// Split outputs with less volume than this are treated as empty.
pub const VOLUME_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("mesh is not watertight: edge ({0}, {1}) is used by {2} faces")]
    NonWatertight(u32, u32, usize),
    #[error("mesh is inverted or inconsistently oriented (signed volume {0})")]
    BadOrientation(f64),
    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: u32, count: usize },
    #[error("cut produced a sliver chunk with volume {0:e} m^3")]
    DegenerateCut(f64),
    #[error("invalid angle {0} rad")]
    InvalidAngle(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("polygon triangulation failed: {0}")]
    Triangulation(&'static str),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self / self.norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn lerp(self, o: Vec3, t: f64) -> Vec3 {
        self + (o - self) * t
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Two unit vectors spanning the plane orthogonal to `self`, ordered so
    /// that `u × v = self`.
    pub fn orthonormal_basis(self) -> (Vec3, Vec3) {
        let n = self.normalized();
        let helper = if n.x.abs() < 0.9 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(0.0, 1.0, 0.0) };
        let u = helper.cross(n).normalized();
        let v = n.cross(u);
        (u, v)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

/// An oriented cutting plane. The positive half-space lies along `normal`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub origin: Vec3,
    pub normal: Vec3,
}

impl Plane {
    /// Builds a plane, normalizing `normal`.
    pub fn new(origin: Vec3, normal: Vec3) -> Result<Self, GeometryError> {
        let len = normal.norm();
        if !(len.is_finite() && len > 1e-12) || !origin.is_finite() {
            return Err(GeometryError::InvalidParameter("plane normal must be finite and non-zero"));
        }
        Ok(Self { origin, normal: normal / len })
    }

    pub fn signed_distance(&self, point: Vec3) -> f64 {
        signed_distance(self, point)
    }
}

/// `(point - origin) · normal`; negative on the side opposite the normal.
pub fn signed_distance(plane: &Plane, point: Vec3) -> f64 {
    (point - plane.origin).dot(plane.normal)
}

/// Indexed triangle surface in meters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self, GeometryError> {
        let mesh = Self { vertices, faces };
        mesh.check_indices()?;
        Ok(mesh)
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    fn check_indices(&self) -> Result<(), GeometryError> {
        let count = self.vertices.len();
        for (face, tri) in self.faces.iter().enumerate() {
            for &index in tri {
                if index as usize >= count {
                    return Err(GeometryError::IndexOutOfRange { face, index, count });
                }
            }
        }
        Ok(())
    }

    /// Every undirected edge must be used by exactly two faces, once in each
    /// direction.
    pub fn check_watertight(&self) -> Result<(), GeometryError> {
        self.check_indices()?;
        let mut directed: HashMap<(u32, u32), usize> = HashMap::with_capacity(self.faces.len() * 3);
        for tri in &self.faces {
            for k in 0..3 {
                *directed.entry((tri[k], tri[(k + 1) % 3])).or_default() += 1;
            }
        }
        for (&(a, b), &count) in &directed {
            let back = directed.get(&(b, a)).copied().unwrap_or(0);
            if count != 1 || back != 1 {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                return Err(GeometryError::NonWatertight(lo, hi, count + back));
            }
        }
        Ok(())
    }

    /// Signed-tetrahedron volume sum without any validity check.
    pub fn signed_volume(&self) -> f64 {
        // Relative to the first vertex keeps the sum well conditioned far
        // from the world origin.
        let Some(&anchor) = self.vertices.first() else {
            return 0.0;
        };
        self.faces
            .iter()
            .map(|&[a, b, c]| {
                let p0 = self.vertices[a as usize] - anchor;
                let p1 = self.vertices[b as usize] - anchor;
                let p2 = self.vertices[c as usize] - anchor;
                p0.dot(p1.cross(p2))
            })
            .sum::<f64>()
            / 6.0
    }

    /// Volume-weighted centroid of the enclosed solid.
    pub fn centroid(&self) -> Vec3 {
        let Some(&anchor) = self.vertices.first() else {
            return Vec3::ZERO;
        };
        let mut acc = Vec3::ZERO;
        let mut vol = 0.0;
        for &[a, b, c] in &self.faces {
            let p0 = self.vertices[a as usize] - anchor;
            let p1 = self.vertices[b as usize] - anchor;
            let p2 = self.vertices[c as usize] - anchor;
            let v = p0.dot(p1.cross(p2)) / 6.0;
            acc += (p0 + p1 + p2) * (v / 4.0);
            vol += v;
        }
        if vol.abs() < 1e-300 {
            let sum = self.vertices.iter().fold(Vec3::ZERO, |s, &p| s + p);
            return sum / self.vertices.len() as f64;
        }
        anchor + acc / vol
    }

    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), p| {
            (
                Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z)),
                Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z)),
            )
        }))
    }

    pub fn translated(&self, offset: Vec3) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|&p| p + offset).collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn scaled(&self, factor: f64) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|&p| p * factor).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Drops vertices no face references and renumbers the rest.
    pub fn compacted(&self) -> TriangleMesh {
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let faces = self
            .faces
            .iter()
            .map(|tri| {
                tri.map(|i| {
                    let slot = &mut remap[i as usize];
                    if *slot == u32::MAX {
                        *slot = vertices.len() as u32;
                        vertices.push(self.vertices[i as usize]);
                    }
                    *slot
                })
            })
            .collect();
        TriangleMesh { vertices, faces }
    }
}

/// Enclosed volume of a watertight, outward-oriented mesh.
pub fn mesh_volume(mesh: &TriangleMesh) -> Result<f64, GeometryError> {
    mesh.check_watertight()?;
    let volume = mesh.signed_volume();
    if volume <= 0.0 {
        return Err(GeometryError::BadOrientation(volume));
    }
    Ok(volume)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cube() -> TriangleMesh {
        TriangleMesh::cuboid(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0))
    }

    #[test]
    fn signed_distance_examples() {
        let p = Plane::new(Vec3::new(0.0, 0.0, 1.0), Vec3::Z).unwrap();
        assert_eq!(signed_distance(&p, Vec3::ZERO), -1.0);
        let p = Plane::new(Vec3::ZERO, Vec3::Z).unwrap();
        assert_eq!(signed_distance(&p, Vec3::new(5.0, 7.0, 0.0)), 0.0);
        let p = Plane::new(Vec3::new(1.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(signed_distance(&p, Vec3::new(3.0, 2.0, 2.0)), 2.0);
    }

    #[test]
    fn plane_origin_is_on_plane() {
        let p = Plane::new(Vec3::new(0.3, -2.0, 7.1), Vec3::new(0.2, 0.5, 0.9)).unwrap();
        assert_eq!(signed_distance(&p, p.origin), 0.0);
        assert!((p.normal.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cube_volume() {
        let v = mesh_volume(&unit_cube()).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hollow_rectangle_volume() {
        let mesh = TriangleMesh::hollow_rectangle(2.0, 2.0, 0.5, 0.1);
        let v = mesh_volume(&mesh).unwrap();
        assert!((v - (4.0 - 3.24) * 0.5).abs() < 1e-6, "{v}");
    }

    #[test]
    fn flipped_face_is_rejected() {
        let mut cube = unit_cube();
        cube.faces[0].swap(1, 2);
        assert!(matches!(mesh_volume(&cube), Err(GeometryError::NonWatertight(..))));
    }

    #[test]
    fn inverted_mesh_is_rejected() {
        let mut cube = unit_cube();
        for f in &mut cube.faces {
            f.swap(1, 2);
        }
        assert!(matches!(mesh_volume(&cube), Err(GeometryError::BadOrientation(_))));
    }

    #[test]
    fn open_mesh_is_rejected() {
        let mut cube = unit_cube();
        cube.faces.pop();
        assert!(mesh_volume(&cube).is_err());
    }

    #[test]
    fn bad_index_is_rejected() {
        let err = TriangleMesh::new(vec![Vec3::ZERO], vec![[0, 1, 2]]).unwrap_err();
        assert!(matches!(err, GeometryError::IndexOutOfRange { .. }));
    }

    #[test]
    fn volume_is_translation_invariant() {
        let mesh = TriangleMesh::hollow_rectangle(2.0, 2.0, 0.5, 0.1);
        let v0 = mesh_volume(&mesh).unwrap();
        let v1 = mesh_volume(&mesh.translated(Vec3::new(1e3, -2e3, 5e2))).unwrap();
        assert!(((v0 - v1) / v0).abs() < 1e-9);
    }

    #[test]
    fn centroid_of_cube() {
        let c = unit_cube().centroid();
        assert!((c - Vec3::new(0.5, 0.5, 0.5)).norm() < 1e-12);
    }

    #[test]
    fn basis_is_right_handed() {
        for n in [Vec3::Z, Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.3, -0.4, 0.8).normalized()] {
            let (u, v) = n.orthonormal_basis();
            assert!((u.cross(v) - n).norm() < 1e-12);
            assert!(u.dot(n).abs() < 1e-12);
        }
    }
}
