//! Beam search over planar cuts.

mod config;
mod heuristics;

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bsp::{BspError, BspTree, PlaneId};
use crate::geometry::{plane_family, sample_normals, GeometryError, Plane, TriangleMesh};

pub use config::{max_polar_angle, AngleCombinator, SearchConfig};
pub use heuristics::{
    chunk_reward, is_seed, is_terminated, leaves_heuristic, positive_face_count, tree_heuristic, tree_is_terminated,
    volume_dispersion,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("no volumes to evaluate")]
    EmptyInput,
    #[error("unknown plane id {0}")]
    UnknownPlane(PlaneId),
    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
    #[error("search exhausted after {} iterations without satisfying the capacity condition (largest chunk {:.6} m^3)", .0.iterations_used, .0.largest_chunk())]
    Exhausted(Box<SearchResult>),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Bsp(#[from] BspError),
}

/// Candidate tree identity in the beam log: the candidate planes applied, in
/// application order, with the tree's score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamEntry {
    pub cuts: Vec<usize>,
    pub h: f64,
    pub leaves: usize,
    pub terminated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub evaluated: usize,
    pub beam: Vec<BeamEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    /// Best tree, rebuilt with its cuts in ascending height order.
    pub tree: BspTree,
    pub heuristic: f64,
    pub terminated: bool,
    pub iterations_used: usize,
    /// The full candidate plane set, indexed as in the beam log.
    pub candidates: Vec<Plane>,
    pub log: Vec<IterationLog>,
}

impl SearchResult {
    pub fn largest_chunk(&self) -> f64 {
        self.tree.leaves().iter().map(|c| c.volume).fold(0.0, f64::max)
    }
}

/// All candidate cuts: plane families along every admissible normal.
pub fn candidate_planes(mesh: &TriangleMesh, config: &SearchConfig) -> Result<Vec<Plane>, SearchError> {
    let normals = sample_normals(max_polar_angle(config), config.n_polar, config.n_azimuth)?;
    let mut planes = Vec::new();
    for n in normals {
        planes.extend(plane_family(n, mesh, config.delta)?);
    }
    Ok(planes)
}

#[derive(Clone)]
struct Beam {
    tree: BspTree,
    cuts: Vec<usize>,
    h: f64,
    leaves: usize,
    /// (parent rank, candidate index) of the expansion that produced it.
    generation: (usize, usize),
}

impl Beam {
    fn order(&self, other: &Beam) -> Ordering {
        self.h.total_cmp(&other.h).then(self.leaves.cmp(&other.leaves)).then(self.generation.cmp(&other.generation))
    }

    fn entry(&self, capacities: &[f64]) -> BeamEntry {
        BeamEntry {
            cuts: self.cuts.clone(),
            h: self.h,
            leaves: self.leaves,
            terminated: tree_is_terminated(&self.tree, capacities),
        }
    }

    fn cut_set(&self) -> Vec<usize> {
        let mut s = self.cuts.clone();
        s.sort_unstable();
        s
    }
}

/// Decomposes `mesh` by beam search over the candidate cuts.
///
/// Each surviving tree is expanded with every unused candidate plane; the
/// best `w_inner` children of each parent are pooled and the best `w_outer`
/// of the pool form the next beam. The search stops as soon as the best tree
/// of a beam has every chunk below the largest UAV capacity. If that never
/// happens within `max_iterations`, the best tree seen is returned inside
/// [`SearchError::Exhausted`].
pub fn beam_search(mesh: &TriangleMesh, config: &SearchConfig) -> Result<SearchResult, SearchError> {
    config.validate()?;
    let candidates = candidate_planes(mesh, config)?;
    let root = BspTree::new(mesh.clone())?;
    let start = Beam { h: tree_heuristic(&root, config), leaves: 1, tree: root, cuts: Vec::new(), generation: (0, 0) };

    let finish = |best: &Beam, terminated: bool, iterations: usize, log: Vec<IterationLog>| {
        let tree = best.tree.rebuild_sorted();
        SearchResult {
            heuristic: tree_heuristic(&tree, config),
            tree,
            terminated,
            iterations_used: iterations,
            candidates: candidates.clone(),
            log,
        }
    };

    let mut log = vec![IterationLog { iteration: 0, evaluated: 1, beam: vec![start.entry(&config.capacities)] }];
    if tree_is_terminated(&start.tree, &config.capacities) {
        return Ok(finish(&start, true, 0, log));
    }
    let mut best_seen = start.clone();
    let mut beam = vec![start];
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;
        let mut evaluated = 0;
        let mut pool: Vec<Beam> = Vec::new();
        for (rank, parent) in beam.iter().enumerate() {
            let unused: Vec<usize> = (0..candidates.len()).filter(|c| !parent.cuts.contains(c)).collect();
            let mut children: Vec<Beam> = unused
                .par_iter()
                .filter_map(|&c| {
                    // No-effect cuts and cuts that only shave slivers are pruned.
                    let tree = parent.tree.apply_cut(candidates[c]).ok()?;
                    let mut cuts = parent.cuts.clone();
                    cuts.push(c);
                    Some(Beam { h: tree_heuristic(&tree, config), leaves: tree.leaf_count(), tree, cuts, generation: (rank, c) })
                })
                .collect();
            evaluated += unused.len();
            children.sort_by(Beam::order);
            children.truncate(config.w_inner);
            pool.extend(children);
        }
        pool.sort_by(Beam::order);
        // The same set of cuts reached in a different order is the same
        // decomposition.
        let mut seen = std::collections::HashSet::new();
        pool.retain(|b| seen.insert(b.cut_set()));
        pool.truncate(config.w_outer);
        if pool.is_empty() {
            break;
        }
        beam = pool;
        if beam[0].order(&best_seen) == Ordering::Less {
            best_seen = beam[0].clone();
        }
        log.push(IterationLog {
            iteration: iterations,
            evaluated,
            beam: beam.iter().map(|b| b.entry(&config.capacities)).collect(),
        });
        if tree_is_terminated(&beam[0].tree, &config.capacities) {
            return Ok(finish(&beam[0], true, iterations, log));
        }
    }
    Err(SearchError::Exhausted(Box::new(finish(&best_seen, false, iterations, log))))
}
