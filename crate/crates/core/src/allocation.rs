//! Chunk print queue and reactive assignment of chunks to UAVs.
//!
//! Only one UAV prints at a time. Chunks leave the queue strictly in BSP
//! in-order priority, so every chunk is printed after the chunks it rests on.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bsp::{BspTree, ChunkId};

pub type AgentId = u32;

pub const DEFAULT_BATTERY_THRESHOLD: f64 = 0.15;
/// Battery fraction used per metre of flown path.
pub const DEFAULT_DRAIN_PER_METRE: f64 = 0.002;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocationError {
    #[error("chunk {chunk} ({volume} m^3) exceeds the capacity of every active UAV")]
    NoCapableAgent { chunk: ChunkId, volume: f64 },
    #[error("agent {agent} is not printing chunk {chunk}")]
    NotActive { agent: AgentId, chunk: ChunkId },
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("no volume known for chunk {0}")]
    UnknownChunk(ChunkId),
    #[error("invalid agent {agent}: {reason}")]
    InvalidAgent { agent: AgentId, reason: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentStatus {
    Idle,
    Printing,
    Inactive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UavAgent {
    pub id: AgentId,
    /// Material carried per sortie (m^3).
    pub capacity: f64,
    /// Remaining battery fraction.
    pub battery: f64,
    pub status: AgentStatus,
}

impl UavAgent {
    pub fn new(id: AgentId, capacity: f64, battery: f64) -> Self {
        Self { id, capacity, battery, status: AgentStatus::Idle }
    }

    pub fn validate(&self) -> Result<(), AllocationError> {
        let bad = |reason| Err(AllocationError::InvalidAgent { agent: self.id, reason });
        if !(self.capacity.is_finite() && self.capacity > 0.0) {
            return bad("capacity must be positive");
        }
        if !(0.0..=1.0).contains(&self.battery) {
            return bad("battery must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ScheduleEvent {
    Assigned { t: f64, agent: AgentId, chunk: ChunkId },
    Completed { t: f64, agent: AgentId, chunk: ChunkId, battery: f64 },
    Deactivated { t: f64, agent: AgentId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrintSchedule {
    pub queue: VecDeque<ChunkId>,
    /// Completed chunks in completion order.
    pub completed: Vec<ChunkId>,
    pub active: Option<(AgentId, ChunkId)>,
    pub log: Vec<ScheduleEvent>,
}

impl PrintSchedule {
    pub fn from_order(order: impl IntoIterator<Item = ChunkId>) -> Self {
        Self { queue: order.into_iter().collect(), completed: Vec::new(), active: None, log: Vec::new() }
    }

    pub fn is_finished(&self) -> bool {
        self.queue.is_empty() && self.active.is_none()
    }
}

/// Queue in the tree's in-order leaf priority.
pub fn build_schedule(tree: &BspTree) -> PrintSchedule {
    PrintSchedule::from_order(tree.in_order_priority())
}

/// Hands the head of the queue to the idle agent with the smallest
/// sufficient capacity (lowest id on ties), unless a UAV is already printing.
pub fn assign_next(
    schedule: &mut PrintSchedule,
    agents: &mut [UavAgent],
    volumes: &BTreeMap<ChunkId, f64>,
    t: f64,
) -> Result<Option<(AgentId, ChunkId)>, AllocationError> {
    if schedule.active.is_some() {
        return Ok(None);
    }
    let Some(&chunk) = schedule.queue.front() else {
        return Ok(None);
    };
    let volume = *volumes.get(&chunk).ok_or(AllocationError::UnknownChunk(chunk))?;
    let pick = agents
        .iter()
        .enumerate()
        .filter(|(_, a)| a.status == AgentStatus::Idle && a.capacity > volume)
        .min_by(|(_, a), (_, b)| a.capacity.total_cmp(&b.capacity).then(a.id.cmp(&b.id)))
        .map(|(i, _)| i);
    let Some(i) = pick else {
        return Err(AllocationError::NoCapableAgent { chunk, volume });
    };
    let agent = &mut agents[i];
    agent.status = AgentStatus::Printing;
    schedule.queue.pop_front();
    schedule.active = Some((agent.id, chunk));
    schedule.log.push(ScheduleEvent::Assigned { t, agent: agent.id, chunk });
    Ok(Some((agent.id, chunk)))
}

/// Finishes the active assignment and charges the battery drain. The agent
/// retires when its battery falls below `threshold`.
pub fn complete(
    schedule: &mut PrintSchedule,
    agents: &mut [UavAgent],
    agent: AgentId,
    chunk: ChunkId,
    battery_drain: f64,
    threshold: f64,
    t: f64,
) -> Result<AgentStatus, AllocationError> {
    if schedule.active != Some((agent, chunk)) {
        return Err(AllocationError::NotActive { agent, chunk });
    }
    let a = agents.iter_mut().find(|a| a.id == agent).ok_or(AllocationError::UnknownAgent(agent))?;
    a.battery = (a.battery - battery_drain).max(0.0);
    schedule.active = None;
    schedule.completed.push(chunk);
    schedule.log.push(ScheduleEvent::Completed { t, agent, chunk, battery: a.battery });
    if a.battery < threshold {
        a.status = AgentStatus::Inactive;
        schedule.log.push(ScheduleEvent::Deactivated { t, agent });
    } else {
        a.status = AgentStatus::Idle;
    }
    Ok(a.status)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedChunk {
    pub id: ChunkId,
    pub volume: f64,
}

/// Chunks, their print order and the fleet, as exchanged with other tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionPlan {
    pub chunks: Vec<PlannedChunk>,
    pub order: Vec<ChunkId>,
    pub agents: Vec<UavAgent>,
}

impl MissionPlan {
    pub fn new(tree: &BspTree, agents: Vec<UavAgent>) -> Self {
        Self {
            chunks: tree.leaves().iter().map(|c| PlannedChunk { id: c.id, volume: c.volume }).collect(),
            order: tree.in_order_priority(),
            agents,
        }
    }

    pub fn volumes(&self) -> BTreeMap<ChunkId, f64> {
        self.chunks.iter().map(|c| (c.id, c.volume)).collect()
    }

    pub fn schedule(&self) -> PrintSchedule {
        PrintSchedule::from_order(self.order.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Plane, TriangleMesh, Vec3};

    fn volumes(v: &[(ChunkId, f64)]) -> BTreeMap<ChunkId, f64> {
        v.iter().copied().collect()
    }

    #[test]
    fn two_leaf_queue() {
        let tree = BspTree::new(TriangleMesh::cuboid(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0))).unwrap();
        let tree = tree.apply_cut(Plane::new(Vec3::new(0.5, 0.5, 0.5), Vec3::Z).unwrap()).unwrap().rebuild_sorted();
        let s = build_schedule(&tree);
        let leaves = tree.leaves();
        assert_eq!(s.queue, [leaves[0].id, leaves[1].id]);
        assert!(leaves[0].mesh.centroid().z < 0.5);
        assert!(s.active.is_none() && s.completed.is_empty());
    }

    #[test]
    fn single_idle_agent_gets_the_head() {
        let mut s = PrintSchedule::from_order([4, 2]);
        let mut agents = vec![UavAgent::new(0, 0.5, 1.0)];
        let got = assign_next(&mut s, &mut agents, &volumes(&[(4, 0.3), (2, 0.1)]), 0.0).unwrap();
        assert_eq!(got, Some((0, 4)));
        assert_eq!(agents[0].status, AgentStatus::Printing);
        assert_eq!(s.queue, [2]);
    }

    #[test]
    fn mutual_exclusion() {
        let mut s = PrintSchedule::from_order([0, 1]);
        let mut agents = vec![UavAgent::new(0, 0.5, 1.0), UavAgent::new(1, 0.5, 1.0)];
        let v = volumes(&[(0, 0.1), (1, 0.1)]);
        assert!(assign_next(&mut s, &mut agents, &v, 0.0).unwrap().is_some());
        assert_eq!(assign_next(&mut s, &mut agents, &v, 0.0).unwrap(), None);
        assert_eq!(agents[1].status, AgentStatus::Idle);
    }

    #[test]
    fn oversize_chunk_deadlocks() {
        let mut s = PrintSchedule::from_order([0]);
        let mut agents = vec![UavAgent::new(0, 0.5, 1.0), UavAgent::new(1, 0.5, 1.0)];
        assert_eq!(
            assign_next(&mut s, &mut agents, &volumes(&[(0, 0.6)]), 0.0),
            Err(AllocationError::NoCapableAgent { chunk: 0, volume: 0.6 })
        );
        assert_eq!(s.queue, [0]);
    }

    #[test]
    fn best_fit_then_lowest_id() {
        let mut s = PrintSchedule::from_order([0]);
        let mut agents = vec![UavAgent::new(5, 1.0, 1.0), UavAgent::new(3, 0.4, 1.0), UavAgent::new(2, 0.4, 1.0), UavAgent::new(1, 0.1, 1.0)];
        assert_eq!(assign_next(&mut s, &mut agents, &volumes(&[(0, 0.2)]), 0.0).unwrap(), Some((2, 0)));
    }

    #[test]
    fn battery_bookkeeping() {
        let mut s = PrintSchedule::from_order([0, 1]);
        let mut agents = vec![UavAgent::new(0, 1.0, 0.5), UavAgent::new(1, 1.0, 0.2)];
        let v = volumes(&[(0, 0.1), (1, 0.1)]);
        assign_next(&mut s, &mut agents, &v, 0.0).unwrap();
        assert_eq!(complete(&mut s, &mut agents, 0, 0, 0.2, 0.15, 1.0).unwrap(), AgentStatus::Idle);
        assert!((agents[0].battery - 0.3).abs() < 1e-12);

        agents[0].status = AgentStatus::Inactive;
        assert_eq!(assign_next(&mut s, &mut agents, &v, 1.0).unwrap(), Some((1, 1)));
        assert_eq!(complete(&mut s, &mut agents, 1, 1, 0.1, 0.15, 2.0).unwrap(), AgentStatus::Inactive);
        assert!((agents[1].battery - 0.1).abs() < 1e-12);
        assert!(s.is_finished());
        assert_eq!(s.completed, [0, 1]);
        assert!(matches!(s.log.last(), Some(ScheduleEvent::Deactivated { agent: 1, .. })));
    }

    #[test]
    fn completing_the_wrong_chunk() {
        let mut s = PrintSchedule::from_order([0, 1]);
        let mut agents = vec![UavAgent::new(0, 1.0, 1.0)];
        assert_eq!(complete(&mut s, &mut agents, 0, 0, 0.0, 0.15, 0.0), Err(AllocationError::NotActive { agent: 0, chunk: 0 }));
        assign_next(&mut s, &mut agents, &volumes(&[(0, 0.1), (1, 0.1)]), 0.0).unwrap();
        assert_eq!(complete(&mut s, &mut agents, 0, 1, 0.0, 0.15, 0.0), Err(AllocationError::NotActive { agent: 0, chunk: 1 }));
    }

    #[test]
    fn plan_round_trips_through_json() {
        let tree = BspTree::new(TriangleMesh::cuboid(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0))).unwrap();
        let plan = MissionPlan::new(&tree, vec![UavAgent::new(0, 2.0, 1.0)]);
        let back: MissionPlan = serde_json::from_str(&serde_json::to_string(&plan).unwrap()).unwrap();
        assert_eq!(back, plan);
        assert_eq!(back.schedule().queue, [0]);
    }
}
