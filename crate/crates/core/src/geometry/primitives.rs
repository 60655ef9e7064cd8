use super::{TriangleMesh, Vec3};

impl TriangleMesh {
    /// Axis-aligned box between `min` and `max`, outward oriented.
    pub fn cuboid(min: Vec3, max: Vec3) -> TriangleMesh {
        let vertices = (0..8)
            .map(|i| {
                Vec3::new(
                    if i & 1 == 0 { min.x } else { max.x },
                    if i & 2 == 0 { min.y } else { max.y },
                    if i & 4 == 0 { min.z } else { max.z },
                )
            })
            .collect();
        let faces = vec![
            [0, 2, 3], [0, 3, 1], // z-
            [4, 5, 7], [4, 7, 6], // z+
            [0, 1, 5], [0, 5, 4], // y-
            [2, 6, 7], [2, 7, 3], // y+
            [0, 4, 6], [0, 6, 2], // x-
            [1, 3, 7], [1, 7, 5], // x+
        ];
        TriangleMesh { vertices, faces }
    }

    /// Rectangular frame standing on z = 0: outer footprint
    /// `[0, width] x [0, length]`, walls `wall` thick, `height` tall.
    pub fn hollow_rectangle(width: f64, length: f64, height: f64, wall: f64) -> TriangleMesh {
        assert!(wall > 0.0 && 2.0 * wall < width.min(length) && height > 0.0);
        let outer = [(0.0, 0.0), (width, 0.0), (width, length), (0.0, length)];
        let inner = [
            (wall, wall),
            (width - wall, wall),
            (width - wall, length - wall),
            (wall, length - wall),
        ];
        // 0..4 outer bottom, 4..8 outer top, 8..12 inner bottom, 12..16 inner top
        let mut vertices = Vec::with_capacity(16);
        for ring in [&outer, &inner] {
            for z in [0.0, height] {
                vertices.extend(ring.iter().map(|&(x, y)| Vec3::new(x, y, z)));
            }
        }
        let (ob, ot, ib, it) = (0u32, 4u32, 8u32, 12u32);
        let mut faces = Vec::with_capacity(32);
        for k in 0..4u32 {
            let n = (k + 1) % 4;
            // outer wall, normal points away from the frame centre
            faces.push([ob + k, ob + n, ot + n]);
            faces.push([ob + k, ot + n, ot + k]);
            // inner wall, normal points into the void
            faces.push([ib + k, it + n, ib + n]);
            faces.push([ib + k, it + k, it + n]);
            // top ring
            faces.push([ot + k, ot + n, it + n]);
            faces.push([ot + k, it + n, it + k]);
            // bottom ring
            faces.push([ob + k, ib + n, ob + n]);
            faces.push([ob + k, ib + k, ib + n]);
        }
        TriangleMesh { vertices, faces }
    }
}
