use std::cmp::Ordering;
use std::collections::HashMap;

use super::triangulate::triangulate_polygon_with_holes;
use super::{signed_distance, GeometryError, Plane, TriangleMesh, Vec3, PLANE_SNAP_EPS, VOLUME_EPS};

/// Shared vertex pool for both halves of a split. Intersection vertices are
/// keyed by the (sorted) edge they were created on so that neighbouring
/// triangles reuse the same vertex.
struct Pool {
    points: Vec<Vec3>,
    on_edge: HashMap<(u32, u32), u32>,
}

impl Pool {
    fn edge_point(&mut self, a: u32, b: u32, da: f64, db: f64) -> u32 {
        let (lo, hi, dlo, dhi) = if a < b { (a, b, da, db) } else { (b, a, db, da) };
        if let Some(&id) = self.on_edge.get(&(lo, hi)) {
            return id;
        }
        let t = dlo / (dlo - dhi);
        let p = self.points[lo as usize].lerp(self.points[hi as usize], t);
        let id = self.points.len() as u32;
        self.points.push(p);
        self.on_edge.insert((lo, hi), id);
        id
    }
}

struct Halves {
    pool: Pool,
    negative: Vec<[u32; 3]>,
    positive: Vec<[u32; 3]>,
}

fn classify(mesh: &TriangleMesh, plane: &Plane) -> Halves {
    let dist: Vec<f64> = mesh
        .vertices
        .iter()
        .map(|&p| {
            let d = signed_distance(plane, p);
            if d.abs() < PLANE_SNAP_EPS {
                0.0
            } else {
                d
            }
        })
        .collect();
    let mut pool = Pool { points: mesh.vertices.clone(), on_edge: HashMap::new() };
    // Snapped vertices are moved onto the plane so the caps are exactly planar.
    for (p, &d) in pool.points.iter_mut().zip(&dist) {
        if d == 0.0 {
            let off = signed_distance(plane, *p);
            *p = *p - plane.normal * off;
        }
    }

    let mut negative = Vec::new();
    let mut positive = Vec::new();
    for tri in &mesh.faces {
        let d = tri.map(|i| dist[i as usize]);
        let has_neg = d.iter().any(|&x| x < 0.0);
        let has_pos = d.iter().any(|&x| x > 0.0);
        match (has_neg, has_pos) {
            (true, false) => negative.push(*tri),
            (false, true) => positive.push(*tri),
            (false, false) => {
                // Lies in the plane: it bounds material on the side its
                // normal points away from.
                let [a, b, c] = tri.map(|i| mesh.vertices[i as usize]);
                if (b - a).cross(c - a).dot(plane.normal) > 0.0 {
                    negative.push(*tri);
                } else {
                    positive.push(*tri);
                }
            }
            (true, true) => {
                let mut neg_poly = Vec::with_capacity(4);
                let mut pos_poly = Vec::with_capacity(4);
                for k in 0..3 {
                    let (i, j) = (tri[k], tri[(k + 1) % 3]);
                    let (di, dj) = (d[k], d[(k + 1) % 3]);
                    if di <= 0.0 {
                        neg_poly.push(i);
                    }
                    if di >= 0.0 {
                        pos_poly.push(i);
                    }
                    if di * dj < 0.0 {
                        let x = pool.edge_point(i, j, di, dj);
                        neg_poly.push(x);
                        pos_poly.push(x);
                    }
                }
                fan(&neg_poly, &mut negative);
                fan(&pos_poly, &mut positive);
            }
        }
    }
    Halves { pool, negative, positive }
}

fn fan(poly: &[u32], out: &mut Vec<[u32; 3]>) {
    for k in 1..poly.len().saturating_sub(1) {
        out.push([poly[0], poly[k], poly[k + 1]]);
    }
}

/// Directed edges of `faces` whose twin is missing, reversed. For a surface
/// that was closed before being cut these are the oriented boundary edges of
/// the cap that closes it again.
fn cap_edges(faces: &[[u32; 3]]) -> Vec<(u32, u32)> {
    let mut count: HashMap<(u32, u32), i32> = HashMap::with_capacity(faces.len() * 3);
    for tri in faces {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            if let Some(c) = count.get_mut(&(b, a)) {
                if *c > 0 {
                    *c -= 1;
                    continue;
                }
            }
            *count.entry((a, b)).or_default() += 1;
        }
    }
    let mut edges: Vec<(u32, u32)> = count
        .into_iter()
        .flat_map(|((a, b), c)| std::iter::repeat_n((b, a), c.max(0) as usize))
        .collect();
    edges.sort_unstable();
    edges
}

fn project(p: Vec3, origin: Vec3, u: Vec3, v: Vec3) -> [f64; 2] {
    let d = p - origin;
    [d.dot(u), d.dot(v)]
}

/// Chains directed edges into closed loops. At a vertex with several unused
/// outgoing edges the one turning furthest left is taken, which keeps loops
/// that merely touch at a vertex separate.
fn chain_loops(edges: &[(u32, u32)], pts2: &HashMap<u32, [f64; 2]>) -> Vec<Vec<u32>> {
    let mut outgoing: HashMap<u32, Vec<usize>> = HashMap::new();
    for (k, &(a, _)) in edges.iter().enumerate() {
        outgoing.entry(a).or_default().push(k);
    }
    let mut used = vec![false; edges.len()];
    let mut loops = Vec::new();
    for start in 0..edges.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let first = edges[start].0;
        let mut lp = vec![first];
        let (mut prev, mut cur) = edges[start];
        while cur != first {
            lp.push(cur);
            let Some(cands) = outgoing.get(&cur) else { break };
            let pick = cands
                .iter()
                .copied()
                .filter(|&k| !used[k])
                .max_by(|&x, &y| {
                    let tx = turn(pts2[&prev], pts2[&cur], pts2[&edges[x].1]);
                    let ty = turn(pts2[&prev], pts2[&cur], pts2[&edges[y].1]);
                    tx.partial_cmp(&ty).unwrap_or(Ordering::Equal).then(y.cmp(&x))
                });
            let Some(k) = pick else { break };
            used[k] = true;
            prev = cur;
            cur = edges[k].1;
        }
        if lp.len() >= 3 {
            loops.push(lp);
        }
    }
    loops
}

/// Signed turning angle from direction (a→b) to (b→c), in (-π, π].
fn turn(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let d1 = [b[0] - a[0], b[1] - a[1]];
    let d2 = [c[0] - b[0], c[1] - b[1]];
    let cross = d1[0] * d2[1] - d1[1] * d2[0];
    let dot = d1[0] * d2[0] + d1[1] * d2[1];
    cross.atan2(dot)
}

fn signed_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - a[1] * b[0]
        })
        .sum::<f64>()
        / 2.0
}

fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Loops oriented counter-clockwise around material when viewed against
/// `facing` (outer boundaries CCW, holes CW), grouped as (outer, holes).
struct CapRegions {
    u: Vec3,
    v: Vec3,
    origin: Vec3,
    regions: Vec<(Vec<u32>, Vec<Vec<u32>>)>,
}

fn cap_regions(
    points: &[Vec3],
    edges: &[(u32, u32)],
    origin: Vec3,
    facing: Vec3,
) -> Result<CapRegions, GeometryError> {
    let (u, v) = facing.orthonormal_basis();
    let mut pts2 = HashMap::new();
    for &(a, b) in edges {
        for i in [a, b] {
            pts2.entry(i).or_insert_with(|| project(points[i as usize], origin, u, v));
        }
    }
    let loops = chain_loops(edges, &pts2);
    let mut outers: Vec<(Vec<u32>, f64)> = Vec::new();
    let mut holes: Vec<Vec<u32>> = Vec::new();
    for lp in loops {
        let poly: Vec<[f64; 2]> = lp.iter().map(|i| pts2[i]).collect();
        let area = signed_area(&poly);
        if area >= 0.0 {
            outers.push((lp, area));
        } else {
            holes.push(lp);
        }
    }
    let mut regions: Vec<(Vec<u32>, Vec<Vec<u32>>)> =
        outers.iter().map(|(lp, _)| (lp.clone(), Vec::new())).collect();
    for hole in holes {
        let hole_pts: Vec<[f64; 2]> = hole.iter().map(|i| pts2[i]).collect();
        let probe = interior_probe(&hole_pts);
        let owner = outers
            .iter()
            .enumerate()
            .filter(|(_, (lp, _))| {
                let poly: Vec<[f64; 2]> = lp.iter().map(|i| pts2[i]).collect();
                point_in_polygon(probe, &poly)
            })
            .min_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap_or(Ordering::Equal))
            .map(|(k, _)| k)
            .ok_or(GeometryError::Triangulation("cap hole without enclosing boundary"))?;
        regions[owner].1.push(hole);
    }
    Ok(CapRegions { u, v, origin, regions })
}

/// A point just outside a clockwise hole loop, i.e. inside the material
/// around it: offset from the midpoint of the longest edge towards its left.
fn interior_probe(hole: &[[f64; 2]]) -> [f64; 2] {
    let n = hole.len();
    let (i, len) = (0..n)
        .map(|i| {
            let (a, b) = (hole[i], hole[(i + 1) % n]);
            (i, ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt())
        })
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal))
        .unwrap_or((0, 0.0));
    let (a, b) = (hole[i], hole[(i + 1) % n]);
    let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
    if len == 0.0 {
        return mid;
    }
    let left = [-(b[1] - a[1]) / len, (b[0] - a[0]) / len];
    let eps = len * 1e-6;
    [mid[0] + left[0] * eps, mid[1] + left[1] * eps]
}

fn triangulate_cap(
    points: &[Vec3],
    edges: &[(u32, u32)],
    plane: &Plane,
    facing: Vec3,
    out: &mut Vec<[u32; 3]>,
) -> Result<(), GeometryError> {
    if edges.is_empty() {
        return Ok(());
    }
    let caps = cap_regions(points, edges, plane.origin, facing)?;
    for (outer, holes) in &caps.regions {
        let to2 = |i: &u32| project(points[*i as usize], caps.origin, caps.u, caps.v);
        let outer2: Vec<[f64; 2]> = outer.iter().map(to2).collect();
        let holes2: Vec<Vec<[f64; 2]>> = holes.iter().map(|h| h.iter().map(to2).collect()).collect();
        let ids: Vec<u32> = outer.iter().chain(holes.iter().flatten()).copied().collect();
        for tri in triangulate_polygon_with_holes(&outer2, &holes2)? {
            out.push(tri.map(|k| ids[k]));
        }
    }
    Ok(())
}

fn assemble(points: &[Vec3], faces: Vec<[u32; 3]>) -> TriangleMesh {
    TriangleMesh { vertices: points.to_vec(), faces }.compacted()
}

/// Cuts a watertight mesh with `plane`, closing both halves with planar caps.
///
/// Returns `(negative, positive)`; the positive half lies along the plane
/// normal. A half the plane does not reach is returned with no faces.
pub fn split_mesh(mesh: &TriangleMesh, plane: &Plane) -> Result<(TriangleMesh, TriangleMesh), GeometryError> {
    let Halves { pool, mut negative, mut positive } = classify(mesh, plane);
    if negative.is_empty() || positive.is_empty() {
        let whole = assemble(&pool.points, if negative.is_empty() { positive } else { negative });
        return Ok(if whole.faces.is_empty() || negative_is_whole(&whole, plane) {
            (whole, TriangleMesh::default())
        } else {
            (TriangleMesh::default(), whole)
        });
    }
    let neg_cap = cap_edges(&negative);
    let pos_cap = cap_edges(&positive);
    triangulate_cap(&pool.points, &neg_cap, plane, plane.normal, &mut negative)?;
    triangulate_cap(&pool.points, &pos_cap, plane, -plane.normal, &mut positive)?;

    let neg = assemble(&pool.points, negative);
    let pos = assemble(&pool.points, positive);
    for half in [&neg, &pos] {
        if !half.faces.is_empty() {
            let vol = half.signed_volume();
            if vol < VOLUME_EPS {
                return Err(GeometryError::DegenerateCut(vol));
            }
        }
    }
    Ok((neg, pos))
}

fn negative_is_whole(mesh: &TriangleMesh, plane: &Plane) -> bool {
    mesh.vertices.iter().all(|&p| signed_distance(plane, p) <= PLANE_SNAP_EPS)
}

/// Closed cross-section loops of `mesh` in `plane`. Outer boundaries run
/// counter-clockwise when viewed from the positive side, holes clockwise.
pub fn section_loops(mesh: &TriangleMesh, plane: &Plane) -> Result<Vec<Vec<Vec3>>, GeometryError> {
    let Halves { pool, negative, positive } = classify(mesh, plane);
    if negative.is_empty() || positive.is_empty() {
        return Ok(Vec::new());
    }
    let edges = cap_edges(&negative);
    let caps = cap_regions(&pool.points, &edges, plane.origin, plane.normal)?;
    let mut loops = Vec::new();
    for (outer, holes) in caps.regions {
        loops.push(outer.iter().map(|&i| pool.points[i as usize]).collect());
        for h in holes {
            loops.push(h.iter().map(|&i| pool.points[i as usize]).collect());
        }
    }
    Ok(loops)
}
