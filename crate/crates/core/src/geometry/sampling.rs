use std::f64::consts::{FRAC_PI_2, TAU};

use super::{GeometryError, Plane, TriangleMesh, Vec3};

/// Candidate cut normals on the upper unit hemisphere: the vertical plus
/// `n_polar` rings of `n_azimuth` normals at polar angles
/// `k * phi_max / n_polar`.
///
/// `phi_max == 0` (or `n_polar == 0`) collapses the cap to the vertical only.
pub fn sample_normals(phi_max: f64, n_polar: usize, n_azimuth: usize) -> Result<Vec<Vec3>, GeometryError> {
    if !phi_max.is_finite() || !(0.0..=FRAC_PI_2 + 1e-12).contains(&phi_max) {
        return Err(GeometryError::InvalidAngle(phi_max));
    }
    let mut normals = vec![Vec3::Z];
    if phi_max == 0.0 || n_polar == 0 {
        return Ok(normals);
    }
    if n_azimuth == 0 {
        return Err(GeometryError::InvalidParameter("n_azimuth must be at least 1"));
    }
    for k in 1..=n_polar {
        let polar = phi_max * k as f64 / n_polar as f64;
        let (sp, cp) = polar.sin_cos();
        for m in 0..n_azimuth {
            let (sa, ca) = (TAU * m as f64 / n_azimuth as f64).sin_cos();
            normals.push(Vec3::new(sp * ca, sp * sa, cp));
        }
    }
    Ok(normals)
}

/// Interior planes perpendicular to `normal`, spaced `delta` apart starting
/// from the lowest vertex projection. Origins lie on the normal axis through
/// the mesh centroid.
pub fn plane_family(normal: Vec3, mesh: &TriangleMesh, delta: f64) -> Result<Vec<Plane>, GeometryError> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(GeometryError::InvalidParameter("plane spacing must be positive"));
    }
    let normal = normal.normalized();
    if mesh.vertices.is_empty() || !normal.is_finite() {
        return Ok(Vec::new());
    }
    let (d_min, d_max) = mesh
        .vertices
        .iter()
        .map(|&p| p.dot(normal))
        .fold((f64::MAX, f64::MIN), |(lo, hi), d| (lo.min(d), hi.max(d)));
    let centroid = mesh.centroid();
    let axis_offset = centroid.dot(normal);
    // Planes within this distance of the far extreme would only shave
    // numerical dust off the mesh.
    let tol = 1e-9 * (d_max - d_min).abs().max(1.0);
    let mut planes = Vec::new();
    for k in 1.. {
        let d = d_min + k as f64 * delta;
        if d >= d_max - tol {
            break;
        }
        planes.push(Plane { origin: centroid + normal * (d - axis_offset), normal });
    }
    Ok(planes)
}
