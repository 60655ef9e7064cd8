//! Binary space partitioning tree over planar cuts.
//!
//! Internal nodes hold cutting planes, leaves hold chunks. The negative half
//! of a cut is always the left child. Trees are persistent values: cutting
//! returns a new tree that shares untouched subtrees and meshes with the old
//! one, so the search can branch freely.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{signed_distance, split_mesh, GeometryError, Plane, TriangleMesh, PLANE_SNAP_EPS};

pub type PlaneId = u32;
pub type ChunkId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BspError {
    #[error("plane does not cut any chunk")]
    NoEffect,
    #[error("unknown plane id {0}")]
    UnknownPlane(PlaneId),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Negative,
    Positive,
}

/// A face of a chunk created by a cut, and which side of the plane the
/// chunk lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CutFace {
    pub plane_id: PlaneId,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkRecord {
    pub id: ChunkId,
    pub mesh: Arc<TriangleMesh>,
    /// Cut planes the chunk still has a co-planar face on.
    pub cut_faces: Vec<CutFace>,
    pub volume: f64,
}

impl ChunkRecord {
    /// Whether the chunk has a face lying in `plane`.
    pub fn has_face_on(&self, plane: &Plane) -> bool {
        has_face_on(&self.mesh, plane)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Cut { plane: PlaneId, negative: Arc<Node>, positive: Arc<Node> },
    Leaf(ChunkRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BspTree {
    root: Arc<Node>,
    root_mesh: Arc<TriangleMesh>,
    planes: Arc<Vec<Plane>>,
    next_chunk: ChunkId,
}

/// Whether `mesh` has at least one face lying in `plane`.
fn has_face_on(mesh: &TriangleMesh, plane: &Plane) -> bool {
    mesh.faces.iter().any(|f| f.iter().all(|&i| signed_distance(plane, mesh.vertices[i as usize]).abs() <= PLANE_SNAP_EPS))
}

impl BspTree {
    /// A single-leaf tree holding `mesh` as chunk 0.
    pub fn new(mesh: TriangleMesh) -> Result<Self, GeometryError> {
        let volume = crate::geometry::mesh_volume(&mesh)?;
        let mesh = Arc::new(mesh);
        Ok(Self {
            root: Arc::new(Node::Leaf(ChunkRecord { id: 0, mesh: mesh.clone(), cut_faces: Vec::new(), volume })),
            root_mesh: mesh,
            planes: Arc::new(Vec::new()),
            next_chunk: 1,
        })
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn root_mesh(&self) -> &TriangleMesh {
        &self.root_mesh
    }

    /// Registered planes, indexed by id.
    pub fn planes(&self) -> &[Plane] {
        &self.planes
    }

    pub fn plane(&self, id: PlaneId) -> Result<&Plane, BspError> {
        self.planes.get(id as usize).ok_or(BspError::UnknownPlane(id))
    }

    /// Leaves in in-order (negative subtree first).
    pub fn leaves(&self) -> Vec<&ChunkRecord> {
        fn walk<'a>(node: &'a Node, out: &mut Vec<&'a ChunkRecord>) {
            match node {
                Node::Leaf(c) => out.push(c),
                Node::Cut { negative, positive, .. } => {
                    walk(negative, out);
                    walk(positive, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    pub fn leaf_count(&self) -> usize {
        fn count(node: &Node) -> usize {
            match node {
                Node::Leaf(_) => 1,
                Node::Cut { negative, positive, .. } => count(negative) + count(positive),
            }
        }
        count(&self.root)
    }

    /// Plane ids at internal nodes, each listed once, in first-visit
    /// pre-order.
    pub fn used_planes(&self) -> Vec<PlaneId> {
        fn walk(node: &Node, out: &mut Vec<PlaneId>) {
            if let Node::Cut { plane, negative, positive } = node {
                if !out.contains(plane) {
                    out.push(*plane);
                }
                walk(negative, out);
                walk(positive, out);
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    pub fn chunk(&self, id: ChunkId) -> Option<&ChunkRecord> {
        self.leaves().into_iter().find(|c| c.id == id)
    }

    /// Registers `plane` and splits every leaf it passes through.
    pub fn apply_cut(&self, plane: Plane) -> Result<BspTree, BspError> {
        let mut planes = (*self.planes).clone();
        let id = planes.len() as PlaneId;
        planes.push(plane);
        let registered = BspTree { planes: Arc::new(planes), ..self.clone() };
        registered.apply_registered(id)
    }

    /// Splits every leaf crossed by the already registered plane `id`.
    pub fn apply_registered(&self, id: PlaneId) -> Result<BspTree, BspError> {
        self.plane(id)?;
        let mut next_chunk = self.next_chunk;
        let root = cut_node(&self.root, id, &self.planes, &mut next_chunk)?.ok_or(BspError::NoEffect)?;
        Ok(BspTree { root, root_mesh: self.root_mesh.clone(), planes: self.planes.clone(), next_chunk })
    }

    /// Re-applies all cuts of this tree to the original mesh in ascending
    /// order of plane-origin height (ties by plane id). Chunk ids of the
    /// result follow the in-order traversal, so the print order is
    /// `0, 1, 2, ...`.
    pub fn rebuild_sorted(&self) -> BspTree {
        let mut ids = self.used_planes();
        ids.sort_by(|&a, &b| {
            let (za, zb) = (self.planes[a as usize].origin.z, self.planes[b as usize].origin.z);
            za.total_cmp(&zb).then(a.cmp(&b))
        });
        let mut tree = BspTree {
            root: Arc::new(Node::Leaf(ChunkRecord {
                id: 0,
                mesh: self.root_mesh.clone(),
                cut_faces: Vec::new(),
                volume: self.root_mesh.signed_volume(),
            })),
            root_mesh: self.root_mesh.clone(),
            planes: self.planes.clone(),
            next_chunk: 1,
        };
        for id in ids {
            // A plane that no longer reaches any chunk is dropped.
            if let Ok(next) = tree.apply_registered(id) {
                tree = next;
            }
        }
        tree.renumbered()
    }

    fn renumbered(&self) -> BspTree {
        fn walk(node: &Node, next: &mut ChunkId) -> Arc<Node> {
            match node {
                Node::Leaf(c) => {
                    let id = *next;
                    *next += 1;
                    Arc::new(Node::Leaf(ChunkRecord { id, ..c.clone() }))
                }
                Node::Cut { plane, negative, positive } => {
                    let negative = walk(negative, next);
                    let positive = walk(positive, next);
                    Arc::new(Node::Cut { plane: *plane, negative, positive })
                }
            }
        }
        let mut next = 0;
        let root = walk(&self.root, &mut next);
        BspTree { root, root_mesh: self.root_mesh.clone(), planes: self.planes.clone(), next_chunk: next }
    }

    /// Chunk ids in in-order traversal: the feasible print sequence.
    pub fn in_order_priority(&self) -> Vec<ChunkId> {
        self.leaves().iter().map(|c| c.id).collect()
    }

    pub fn report(&self) -> TreeReport {
        fn walk(node: &Node) -> NodeReport {
            match node {
                Node::Leaf(c) => NodeReport::Chunk {
                    id: c.id,
                    volume: c.volume,
                    cut_faces: c.cut_faces.clone(),
                    faces: c.mesh.faces.len(),
                },
                Node::Cut { plane, negative, positive } => NodeReport::Cut {
                    plane: *plane,
                    negative: Box::new(walk(negative)),
                    positive: Box::new(walk(positive)),
                },
            }
        }
        let used = self.used_planes();
        TreeReport {
            planes: used.iter().map(|&id| PlaneReport { id, plane: self.planes[id as usize] }).collect(),
            root: walk(&self.root),
            order: self.in_order_priority(),
            total_volume: self.leaves().iter().map(|c| c.volume).sum(),
        }
    }
}

fn cut_node(node: &Arc<Node>, id: PlaneId, planes: &[Plane], next_chunk: &mut ChunkId) -> Result<Option<Arc<Node>>, BspError> {
    match node.as_ref() {
        Node::Cut { plane: p, negative, positive } => {
            let neg = cut_node(negative, id, planes, next_chunk)?;
            let pos = cut_node(positive, id, planes, next_chunk)?;
            if neg.is_none() && pos.is_none() {
                return Ok(None);
            }
            Ok(Some(Arc::new(Node::Cut {
                plane: *p,
                negative: neg.unwrap_or_else(|| negative.clone()),
                positive: pos.unwrap_or_else(|| positive.clone()),
            })))
        }
        Node::Leaf(chunk) => {
            let plane = &planes[id as usize];
            let (neg, pos) = match split_mesh(&chunk.mesh, plane) {
                Ok(halves) => halves,
                // Sliver halves count as "not cut".
                Err(GeometryError::DegenerateCut(_)) => return Ok(None),
                Err(e) => return Err(e.into()),
            };
            if neg.is_empty() || pos.is_empty() {
                return Ok(None);
            }
            let mut child = |mesh: TriangleMesh, side: Side| -> Result<Arc<Node>, BspError> {
                let volume = crate::geometry::mesh_volume(&mesh)?;
                let mut cut_faces: Vec<CutFace> = Vec::with_capacity(chunk.cut_faces.len() + 1);
                for cf in &chunk.cut_faces {
                    let earlier = planes.get(cf.plane_id as usize).ok_or(BspError::UnknownPlane(cf.plane_id))?;
                    if cf.plane_id != id && has_face_on(&mesh, earlier) {
                        cut_faces.push(*cf);
                    }
                }
                cut_faces.push(CutFace { plane_id: id, side });
                let record = ChunkRecord { id: *next_chunk, mesh: Arc::new(mesh), cut_faces, volume };
                *next_chunk += 1;
                Ok(Arc::new(Node::Leaf(record)))
            };
            let negative = child(neg, Side::Negative)?;
            let positive = child(pos, Side::Positive)?;
            Ok(Some(Arc::new(Node::Cut { plane: id, negative, positive })))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneReport {
    pub id: PlaneId,
    #[serde(flatten)]
    pub plane: Plane,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NodeReport {
    Cut { plane: PlaneId, negative: Box<NodeReport>, positive: Box<NodeReport> },
    Chunk { id: ChunkId, volume: f64, cut_faces: Vec<CutFace>, faces: usize },
}

/// JSON view of a tree: planes, node structure and print order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeReport {
    pub planes: Vec<PlaneReport>,
    pub root: NodeReport,
    pub order: Vec<ChunkId>,
    pub total_volume: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn cube_tree() -> BspTree {
        BspTree::new(TriangleMesh::cuboid(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0))).unwrap()
    }

    fn horizontal(z: f64) -> Plane {
        Plane::new(Vec3::new(0.5, 0.5, z), Vec3::Z).unwrap()
    }

    fn volumes(t: &BspTree) -> Vec<f64> {
        t.leaves().iter().map(|c| c.volume).collect()
    }

    #[test]
    fn single_cut() {
        let tree = cube_tree();
        let cut = tree.apply_cut(horizontal(0.5)).unwrap();
        let leaves = cut.leaves();
        assert_eq!(leaves.len(), 2);
        assert!((leaves[0].volume - 0.5).abs() < 1e-12);
        assert!((leaves[1].volume - 0.5).abs() < 1e-12);
        // negative (lower) chunk first
        assert!(leaves[0].mesh.vertices.iter().all(|p| p.z <= 0.5));
        assert_eq!(leaves[0].cut_faces, vec![CutFace { plane_id: 0, side: Side::Negative }]);
        assert_eq!(leaves[1].cut_faces, vec![CutFace { plane_id: 0, side: Side::Positive }]);
        // input untouched
        assert_eq!(tree.leaf_count(), 1);
    }

    #[test]
    fn missing_plane_has_no_effect() {
        assert_eq!(cube_tree().apply_cut(horizontal(2.0)), Err(BspError::NoEffect));
    }

    #[test]
    fn second_cut_reaches_both_leaves() {
        let t = cube_tree().apply_cut(horizontal(0.5)).unwrap();
        let t = t.apply_cut(Plane::new(Vec3::new(0.5, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)).unwrap()).unwrap();
        let v = volumes(&t);
        assert_eq!(v.len(), 4);
        for x in &v {
            assert!((x - 0.25).abs() < 1e-12);
        }
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        // The x-cut is the second registered plane and sits under the first.
        assert_eq!(t.used_planes(), vec![0, 1]);
    }

    #[test]
    fn cut_faces_drop_planes_the_chunk_left() {
        // z = 0.5 then z = 0.75: the top slab no longer touches z = 0.5.
        let t = cube_tree().apply_cut(horizontal(0.5)).unwrap().apply_cut(horizontal(0.75)).unwrap();
        let leaves = t.leaves();
        assert_eq!(leaves.len(), 3);
        assert_eq!(leaves[2].cut_faces, vec![CutFace { plane_id: 1, side: Side::Positive }]);
        assert_eq!(
            leaves[1].cut_faces,
            vec![CutFace { plane_id: 0, side: Side::Positive }, CutFace { plane_id: 1, side: Side::Negative }]
        );
    }

    #[test]
    fn rebuild_sorts_by_height() {
        let t = cube_tree().apply_cut(horizontal(0.4)).unwrap().apply_cut(horizontal(0.1)).unwrap();
        let r = t.rebuild_sorted();
        match r.root() {
            Node::Cut { plane, .. } => assert_eq!(*plane, 1, "z = 0.1 must be applied first"),
            Node::Leaf(_) => panic!("expected a cut at the root"),
        }
        assert_eq!(r.in_order_priority(), vec![0, 1, 2]);
        let v = volumes(&r);
        assert!((v[0] - 0.1).abs() < 1e-12 && (v[1] - 0.3).abs() < 1e-12 && (v[2] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn rebuild_of_single_cut_is_identical() {
        let t = cube_tree().apply_cut(horizontal(0.5)).unwrap();
        let r = t.rebuild_sorted();
        assert_eq!(r.used_planes(), t.used_planes());
        assert_eq!(volumes(&r), volumes(&t));
        let faces = |t: &BspTree| t.leaves().iter().map(|c| c.cut_faces.clone()).collect::<Vec<_>>();
        assert_eq!(faces(&r), faces(&t));
    }

    #[test]
    fn rebuild_is_insertion_order_independent() {
        let tilted = Plane::new(Vec3::new(0.5, 0.5, 0.6), Vec3::new(0.3, 0.0, 1.0)).unwrap();
        let flat = horizontal(0.3);
        let a = cube_tree().apply_cut(tilted).unwrap().apply_cut(flat).unwrap().rebuild_sorted();
        let b = cube_tree().apply_cut(flat).unwrap().apply_cut(tilted).unwrap().rebuild_sorted();
        let key = |t: &BspTree| -> Vec<(i64, i64)> {
            t.leaves()
                .iter()
                .map(|c| ((c.volume * 1e9).round() as i64, (c.mesh.centroid().z * 1e9).round() as i64))
                .collect()
        };
        assert_eq!(key(&a), key(&b));
    }

    #[test]
    fn report_serializes() {
        let t = cube_tree().apply_cut(horizontal(0.5)).unwrap();
        let json = serde_json::to_string(&t.report()).unwrap();
        let back: TreeReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.order, vec![1, 2]);
        assert_eq!(back.planes.len(), 1);
    }
}
