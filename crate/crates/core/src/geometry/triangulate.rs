//! Ear clipping for planar polygons with holes.
//!
//! Holes are first bridged into the outer boundary so the whole region is a
//! single weakly-simple polygon. Every input vertex, including collinear
//! ones, ends up in the output so that caps stay edge-compatible with the
//! clipped side walls.

use super::GeometryError;

type P2 = [f64; 2];

fn orient(a: P2, b: P2, c: P2) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn area2(poly: &[P2]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| poly[i][0] * poly[(i + 1) % n][1] - poly[(i + 1) % n][0] * poly[i][1]).sum()
}

fn same(a: P2, b: P2) -> bool {
    a[0] == b[0] && a[1] == b[1]
}

/// Proper or touching intersection of segments p1p2 and q1q2, ignoring
/// contacts at shared endpoint positions.
fn segments_conflict(p1: P2, p2: P2, q1: P2, q2: P2, eps: f64) -> bool {
    let shares = |x: P2| same(x, p1) || same(x, p2);
    if shares(q1) && shares(q2) {
        return !(same(q1, p1) && same(q2, p2) || same(q1, p2) && same(q2, p1));
    }
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > eps && d2 < -eps) || (d1 < -eps && d2 > eps)) && ((d3 > eps && d4 < -eps) || (d3 < -eps && d4 > eps)) {
        return true;
    }
    // A vertex of one segment lying on the other, other than a shared endpoint.
    let on_seg = |a: P2, b: P2, p: P2| {
        orient(a, b, p).abs() <= eps
            && p[0] >= a[0].min(b[0]) - 1e-15
            && p[0] <= a[0].max(b[0]) + 1e-15
            && p[1] >= a[1].min(b[1]) - 1e-15
            && p[1] <= a[1].max(b[1]) + 1e-15
    };
    (!shares(q1) && on_seg(p1, p2, q1))
        || (!shares(q2) && on_seg(p1, p2, q2))
        || (!same(p1, q1) && !same(p1, q2) && on_seg(q1, q2, p1))
        || (!same(p2, q1) && !same(p2, q2) && on_seg(q1, q2, p2))
}

/// Whether the direction from `cur` towards `target` points into the
/// interior (left side) of a boundary with neighbours `prev` and `next`.
fn in_cone(prev: P2, cur: P2, next: P2, target: P2) -> bool {
    if orient(prev, cur, next) >= 0.0 {
        orient(cur, next, target) > 0.0 && orient(prev, cur, target) > 0.0
    } else {
        orient(cur, next, target) > 0.0 || orient(prev, cur, target) > 0.0
    }
}

fn point_in_ring(p: P2, poly: &[P2]) -> bool {
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

/// Triangulates `outer` (counter-clockwise) with `holes` (clockwise).
/// Returned indices address the concatenation `outer ++ holes[0] ++ ...`.
/// Orientation of the inputs is corrected if needed.
pub fn triangulate_polygon_with_holes(outer: &[P2], holes: &[Vec<P2>]) -> Result<Vec<[usize; 3]>, GeometryError> {
    if outer.len() < 3 {
        return Err(GeometryError::Triangulation("outer boundary has fewer than 3 vertices"));
    }
    let pts: Vec<P2> = outer.iter().chain(holes.iter().flatten()).copied().collect();
    let (lo, hi) = pts.iter().fold(([f64::MAX; 2], [f64::MIN; 2]), |(lo, hi), p| {
        ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])
    });
    let scale = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-300);
    let eps = scale * scale * 1e-14;

    let mut ring: Vec<usize> = (0..outer.len()).collect();
    if area2(outer) < 0.0 {
        ring.reverse();
    }
    let mut hole_rings: Vec<Vec<usize>> = Vec::with_capacity(holes.len());
    let mut offset = outer.len();
    for h in holes {
        let mut idx: Vec<usize> = (offset..offset + h.len()).collect();
        offset += h.len();
        if h.len() < 3 {
            continue;
        }
        if area2(h) > 0.0 {
            idx.reverse();
        }
        hole_rings.push(idx);
    }
    // Rightmost holes first, as in the classic bridging construction.
    let max_x = |r: &Vec<usize>| r.iter().map(|&i| pts[i][0]).fold(f64::MIN, f64::max);
    hole_rings.sort_by(|a, b| max_x(b).total_cmp(&max_x(a)));

    for (h, hole) in hole_rings.iter().enumerate() {
        ring = bridge(&pts, ring, hole, &hole_rings[h + 1..], eps)?;
    }
    Ok(ear_clip(&pts, ring, eps))
}

fn bridge(pts: &[P2], ring: Vec<usize>, hole: &[usize], pending: &[Vec<usize>], eps: f64) -> Result<Vec<usize>, GeometryError> {
    let n = ring.len();
    let mut hole_order: Vec<usize> = (0..hole.len()).collect();
    hole_order.sort_by(|&a, &b| pts[hole[b]][0].total_cmp(&pts[hole[a]][0]).then(a.cmp(&b)));

    let edges_of = |r: &[usize]| -> Vec<(P2, P2)> { (0..r.len()).map(|i| (pts[r[i]], pts[r[(i + 1) % r.len()]])).collect() };
    let mut obstacles = edges_of(&ring);
    obstacles.extend(edges_of(hole));
    for p in pending {
        obstacles.extend(edges_of(p));
    }
    let ring_pts: Vec<P2> = ring.iter().map(|&i| pts[i]).collect();

    for &hk in &hole_order {
        let hp = pts[hole[hk]];
        let mut cands: Vec<usize> = (0..n).collect();
        cands.sort_by(|&a, &b| {
            let da = (pts[ring[a]][0] - hp[0]).powi(2) + (pts[ring[a]][1] - hp[1]).powi(2);
            let db = (pts[ring[b]][0] - hp[0]).powi(2) + (pts[ring[b]][1] - hp[1]).powi(2);
            da.total_cmp(&db).then(a.cmp(&b))
        });
        for rk in cands {
            let rp = pts[ring[rk]];
            if same(rp, hp) {
                continue;
            }
            let prev = pts[ring[(rk + n - 1) % n]];
            let next = pts[ring[(rk + 1) % n]];
            if !in_cone(prev, rp, next, hp) {
                continue;
            }
            // The hole runs clockwise, so material is on its left as well.
            let hn = hole.len();
            let hprev = pts[hole[(hk + hn - 1) % hn]];
            let hnext = pts[hole[(hk + 1) % hn]];
            if !in_cone(hprev, hp, hnext, rp) {
                continue;
            }
            if obstacles.iter().any(|&(a, b)| segments_conflict(rp, hp, a, b, eps)) {
                continue;
            }
            let mid = [(rp[0] + hp[0]) / 2.0, (rp[1] + hp[1]) / 2.0];
            if !point_in_ring(mid, &ring_pts) || pending.iter().any(|p| point_in_ring(mid, &p.iter().map(|&i| pts[i]).collect::<Vec<_>>())) {
                continue;
            }
            let mut merged = Vec::with_capacity(n + hole.len() + 2);
            merged.extend_from_slice(&ring[..=rk]);
            for s in 0..=hn {
                merged.push(hole[(hk + s) % hn]);
            }
            merged.extend_from_slice(&ring[rk..]);
            return Ok(merged);
        }
    }
    Err(GeometryError::Triangulation("no visible bridge from hole to boundary"))
}

fn ear_clip(pts: &[P2], mut ring: Vec<usize>, eps: f64) -> Vec<[usize; 3]> {
    let mut tris = Vec::with_capacity(ring.len().saturating_sub(2));
    while ring.len() > 3 {
        let n = ring.len();
        let mut ear = None;
        let mut fallback: Option<(usize, f64)> = None;
        for i in 0..n {
            let (a, b, c) = (ring[(i + n - 1) % n], ring[i], ring[(i + 1) % n]);
            let (pa, pb, pc) = (pts[a], pts[b], pts[c]);
            let area = orient(pa, pb, pc);
            if fallback.is_none_or(|(_, best)| area > best) {
                fallback = Some((i, area));
            }
            if area <= eps {
                continue;
            }
            let blocked = ring.iter().any(|&k| {
                let p = pts[k];
                if same(p, pa) || same(p, pb) || same(p, pc) {
                    return false;
                }
                orient(pa, pb, p) >= -eps && orient(pb, pc, p) >= -eps && orient(pc, pa, p) >= -eps
            });
            if !blocked {
                ear = Some(i);
                break;
            }
        }
        // Without a clean ear, clip the most convex corner; when only
        // straight corners remain this emits zero-area triangles.
        let i = ear.or(fallback.map(|(i, _)| i)).unwrap_or(0);
        let n = ring.len();
        tris.push([ring[(i + n - 1) % n], ring[i], ring[(i + 1) % n]]);
        ring.remove(i);
    }
    if ring.len() == 3 {
        tris.push([ring[0], ring[1], ring[2]]);
    }
    tris
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn total_area(pts: &[P2], tris: &[[usize; 3]]) -> f64 {
        tris.iter().map(|t| orient(pts[t[0]], pts[t[1]], pts[t[2]]) / 2.0).sum()
    }

    #[test]
    fn square_with_collinear_points() {
        let outer = [[0.0, 0.0], [0.5, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.0, 0.5]];
        let tris = triangulate_polygon_with_holes(&outer, &[]).unwrap();
        assert_eq!(tris.len(), 4);
        assert!((total_area(&outer, &tris) - 1.0).abs() < 1e-12);
        let mut used: Vec<usize> = tris.iter().flatten().copied().collect();
        used.sort();
        used.dedup();
        assert_eq!(used.len(), outer.len());
    }

    #[test]
    fn frame() {
        let outer = [[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]];
        let hole = vec![[0.1, 0.1], [0.1, 1.9], [1.9, 1.9], [1.9, 0.1]];
        let tris = triangulate_polygon_with_holes(&outer, &[hole.clone()]).unwrap();
        let pts: Vec<P2> = outer.iter().chain(hole.iter()).copied().collect();
        assert!((total_area(&pts, &tris) - (4.0 - 3.24)).abs() < 1e-12);
        assert!(tris.iter().all(|t| orient(pts[t[0]], pts[t[1]], pts[t[2]]) >= 0.0));
    }

    #[test]
    fn two_holes() {
        let outer = [[0.0, 0.0], [3.0, 0.0], [3.0, 1.0], [0.0, 1.0]];
        let h1 = vec![[0.5, 0.25], [0.5, 0.75], [1.0, 0.75], [1.0, 0.25]];
        let h2 = vec![[2.0, 0.25], [2.0, 0.75], [2.5, 0.75], [2.5, 0.25]];
        let tris = triangulate_polygon_with_holes(&outer, &[h1.clone(), h2.clone()]).unwrap();
        let pts: Vec<P2> = outer.iter().chain(h1.iter()).chain(h2.iter()).copied().collect();
        assert!((total_area(&pts, &tris) - 2.5).abs() < 1e-12);
    }

    proptest! {
        // Star-shaped polygons around the origin with jittered radii.
        #[test]
        fn star_polygons_keep_area(radii in proptest::collection::vec(0.3f64..1.0, 3..40)) {
            let n = radii.len();
            let outer: Vec<P2> = radii
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let a = std::f64::consts::TAU * i as f64 / n as f64;
                    [r * a.cos(), r * a.sin()]
                })
                .collect();
            let hole: Vec<P2> = (0..6)
                .rev()
                .map(|i| {
                    let a = std::f64::consts::TAU * i as f64 / 6.0;
                    [0.1 * a.cos(), 0.1 * a.sin()]
                })
                .collect();
            let tris = triangulate_polygon_with_holes(&outer, &[hole.clone()]).unwrap();
            let pts: Vec<P2> = outer.iter().chain(hole.iter()).copied().collect();
            let expect = area2(&outer) / 2.0 + area2(&hole) / 2.0;
            prop_assert!((total_area(&pts, &tris) - expect).abs() < 1e-9);
            prop_assert_eq!(tris.len(), outer.len() + hole.len());
        }
    }
}
