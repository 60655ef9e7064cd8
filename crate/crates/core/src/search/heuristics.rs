//! Tree scoring: volume dispersion, seed chunks and positive faces, and
//! the capacity-based terminal condition.

use crate::bsp::{BspTree, ChunkRecord};
use crate::geometry::{signed_distance, Plane, PLANE_SNAP_EPS};

use super::{SearchConfig, SearchError};

/// `σ / μ` with `σ` the mean squared deviation of the volumes (or its square
/// root when `sqrt` is set).
pub fn volume_dispersion(volumes: &[f64], sqrt: bool) -> Result<f64, SearchError> {
    if volumes.is_empty() {
        return Err(SearchError::EmptyInput);
    }
    let n = volumes.len() as f64;
    let mean = volumes.iter().sum::<f64>() / n;
    let sigma = volumes.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sigma = if sqrt { sigma.sqrt() } else { sigma };
    Ok(sigma / mean)
}

/// A chunk is a seed when it lies on the negative side of every cut plane
/// it has a face on. Uncut chunks are seeds.
pub fn is_seed(chunk: &ChunkRecord, planes: &[Plane]) -> Result<bool, SearchError> {
    for cf in &chunk.cut_faces {
        let plane = planes.get(cf.plane_id as usize).ok_or(SearchError::UnknownPlane(cf.plane_id))?;
        if chunk.mesh.vertices.iter().any(|&v| signed_distance(plane, v) > PLANE_SNAP_EPS) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Number of distinct cut planes a seed chunk rests on with a co-planar
/// face; zero for non-seeds.
pub fn positive_face_count(chunk: &ChunkRecord, planes: &[Plane]) -> Result<u32, SearchError> {
    if !is_seed(chunk, planes)? {
        return Ok(0);
    }
    let mut ids: Vec<u32> = chunk
        .cut_faces
        .iter()
        .filter(|cf| chunk.has_face_on(&planes[cf.plane_id as usize]))
        .map(|cf| cf.plane_id)
        .collect();
    ids.sort_unstable();
    ids.dedup();
    Ok(ids.len() as u32)
}

/// `G_part · s + G_faces · p_faces` for one chunk.
pub fn chunk_reward(chunk: &ChunkRecord, planes: &[Plane], config: &SearchConfig) -> Result<f64, SearchError> {
    let seed = if is_seed(chunk, planes)? { 1.0 } else { 0.0 };
    let faces = positive_face_count(chunk, planes)? as f64;
    Ok(config.g_part * seed + config.g_faces * faces)
}

/// `G_disp · c_v − Σ g(C_k)` over the leaves of `tree`. Lower is better.
pub fn tree_heuristic(tree: &BspTree, config: &SearchConfig) -> f64 {
    leaves_heuristic(&tree.leaves(), tree.planes(), config).expect("cut faces reference the tree's own planes")
}

/// The tree heuristic evaluated on an explicit set of chunks.
pub fn leaves_heuristic(leaves: &[&ChunkRecord], planes: &[Plane], config: &SearchConfig) -> Result<f64, SearchError> {
    let volumes: Vec<f64> = leaves.iter().map(|c| c.volume).collect();
    let dispersion = volume_dispersion(&volumes, config.dispersion_sqrt)?;
    let mut reward = 0.0;
    for c in leaves {
        reward += chunk_reward(c, planes, config)?;
    }
    Ok(config.g_disp * dispersion - reward)
}

/// Every chunk fits into at least one UAV's material load. Loads are
/// refilled between chunks, so only the largest one matters.
pub fn is_terminated(leaf_volumes: &[f64], capacities: &[f64]) -> bool {
    let largest = capacities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    leaf_volumes.iter().all(|&v| v < largest)
}

pub fn tree_is_terminated(tree: &BspTree, capacities: &[f64]) -> bool {
    let volumes: Vec<f64> = tree.leaves().iter().map(|c| c.volume).collect();
    is_terminated(&volumes, capacities)
}
