//! Closed-loop emulation of a printing mission.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocation::{
    assign_next, build_schedule, complete, AgentId, AllocationError, ScheduleEvent, UavAgent,
    DEFAULT_BATTERY_THRESHOLD, DEFAULT_DRAIN_PER_METRE,
};
use crate::bsp::ChunkId;
use crate::control::{step_euler, ControlError, ControlInput, ModelParams, NmpcConfig, NmpcSolver, PathFollower, UavState};
use crate::geometry::{TriangleMesh, Vec3};
use crate::search::{beam_search, SearchConfig, SearchError, SearchResult};
use crate::toolpath::{extruder_to_uav, PrintPath, SlicerConfig, ToolpathError};

#[derive(Debug, Error)]
pub enum MissionError {
    #[error("chunk search: {0}")]
    Search(#[from] SearchError),
    #[error("allocation: {0}")]
    Allocation(#[from] AllocationError),
    #[error("control: {0}")]
    Control(#[from] ControlError),
    #[error("slicing chunk {chunk}: {source}")]
    Toolpath { chunk: ChunkId, source: ToolpathError },
    #[error("chunk {chunk} not finished after {seconds} s of flight")]
    Stalled { chunk: ChunkId, seconds: f64 },
    #[error("invalid mission configuration: {0}")]
    InvalidConfig(String),
    #[error("log has no samples")]
    EmptyLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub seed: u64,
    /// Standard deviation of the position disturbance per step (m).
    pub position_sigma: f64,
    /// Standard deviation of the velocity disturbance per step (m/s).
    pub velocity_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionConfig {
    /// Extruder length below the UAV body (m).
    pub l_ex: f64,
    pub marker_radius: f64,
    /// Markers sit this far below the extruder tip (m).
    pub marker_offset: f64,
    /// Time after a waypoint switch excluded from steady-state errors (s).
    pub transient_window: f64,
    pub battery_threshold: f64,
    pub drain_per_metre: f64,
    /// Flight time allowed per chunk before the mission is declared stalled (s).
    pub max_chunk_time: f64,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            l_ex: 0.5,
            marker_radius: 0.003,
            marker_offset: 0.1,
            transient_window: 1.0,
            battery_threshold: DEFAULT_BATTERY_THRESHOLD,
            drain_per_metre: DEFAULT_DRAIN_PER_METRE,
            max_chunk_time: 20_000.0,
        }
    }
}

impl MissionConfig {
    pub fn validate(&self) -> Result<(), MissionError> {
        let bad = |m: &str| Err(MissionError::InvalidConfig(m.to_string()));
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.l_ex) {
            return bad("mission.l_ex must be positive");
        }
        if !positive(self.marker_radius) {
            return bad("mission.marker_radius must be positive");
        }
        if !(self.marker_offset.is_finite() && self.transient_window.is_finite() && self.transient_window >= 0.0) {
            return bad("mission.marker_offset and mission.transient_window must be finite");
        }
        if !(0.0..=1.0).contains(&self.battery_threshold) || !(self.drain_per_metre >= 0.0) {
            return bad("mission battery parameters out of range");
        }
        if !positive(self.max_chunk_time) {
            return bad("mission.max_chunk_time must be positive");
        }
        Ok(())
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), MissionError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.position_sigma) && ok(self.velocity_sigma)) {
            return Err(MissionError::InvalidConfig("noise sigmas must be non-negative".into()));
        }
        Ok(())
    }
}

/// Everything needed to fly a decomposed mesh.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MissionSetup {
    pub agents: Vec<AgentSetup>,
    pub slicer: SlicerConfig,
    pub mission: MissionConfig,
    pub control: NmpcConfig,
    pub model: ModelParams,
    /// Additive state noise on the simulated plant; none by default.
    pub noise: Option<NoiseConfig>,
}

impl MissionSetup {
    pub fn validate(&self) -> Result<(), MissionError> {
        if self.agents.is_empty() {
            return Err(MissionError::InvalidConfig("at least one agent is required".into()));
        }
        self.slicer.validate().map_err(|e| MissionError::InvalidConfig(e.to_string()))?;
        self.mission.validate()?;
        self.control.validate()?;
        self.model.validate()?;
        if let Some(n) = &self.noise {
            n.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSetup {
    pub capacity: f64,
    #[serde(default = "full_battery")]
    pub battery: f64,
    /// Initial UAV position; defaults to a pad beside the build area.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home: Option<Vec3>,
}

fn full_battery() -> f64 {
    1.0
}

/// Default pad for agent `i`: in a row at y = −0.5, extruder tip on the ground.
pub fn default_home(i: usize, l_ex: f64) -> Vec3 {
    Vec3::new(-0.5 - 0.5 * i as f64, -0.5, l_ex)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepositedMarker {
    pub center: Vec3,
    pub radius: f64,
    pub chunk_id: ChunkId,
    pub t: f64,
}

/// One control step: the state the input was computed from and the input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub agent: AgentId,
    pub chunk: ChunkId,
    pub state: UavState,
    pub reference: Vec3,
    pub extruder: Vec3,
    pub extrude: bool,
    /// A new waypoint (or a new chunk) became the target on this step.
    pub switched: bool,
    pub input: ControlInput,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmulationLog {
    pub samples: Vec<Sample>,
    pub markers: Vec<DepositedMarker>,
    pub events: Vec<ScheduleEvent>,
    pub completed: Vec<ChunkId>,
    pub order: Vec<ChunkId>,
}

const CSV_HEADER: &str = "t,agent,chunk,px,py,pz,vx,vy,vz,phi,theta,ref_x,ref_y,ref_z,ex_x,ex_y,ex_z,extrude,switched,thrust,phi_ref,theta_ref,cost";

impl EmulationLog {
    pub fn trace_csv(&self) -> String {
        let mut out = String::with_capacity(self.samples.len() * 200);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            let x = s.state.to_array();
            write!(out, "{},{},{}", s.t, s.agent, s.chunk).unwrap();
            for v in x.iter().chain(&s.reference.to_array()).chain(&s.extruder.to_array()) {
                write!(out, ",{v}").unwrap();
            }
            let u = s.input.to_array();
            writeln!(out, ",{},{},{},{},{},{}", u8::from(s.extrude), u8::from(s.switched), u[0], u[1], u[2], s.cost).unwrap();
        }
        out
    }
}

/// Reads samples back from [`EmulationLog::trace_csv`] output.
pub fn parse_trace_csv(text: &str) -> Result<Vec<Sample>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        _ => return Err("unexpected trace header".into()),
    }
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 23 {
            return Err(format!("line {}: expected 23 fields, found {}", i + 2, f.len()));
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|e| format!("line {}: field {}: {e}", i + 2, k + 1));
        let int = |k: usize| f[k].parse::<u32>().map_err(|e| format!("line {}: field {}: {e}", i + 2, k + 1));
        let mut x = [0.0; 8];
        for (k, v) in x.iter_mut().enumerate() {
            *v = num(3 + k)?;
        }
        samples.push(Sample {
            t: num(0)?,
            agent: int(1)?,
            chunk: int(2)?,
            state: UavState::from_array(&x),
            reference: Vec3::new(num(11)?, num(12)?, num(13)?),
            extruder: Vec3::new(num(14)?, num(15)?, num(16)?),
            extrude: int(17)? != 0,
            switched: int(18)? != 0,
            input: ControlInput { thrust: num(19)?, phi_ref: num(20)?, theta_ref: num(21)? },
            cost: num(22)?,
        });
    }
    Ok(samples)
}

#[derive(Debug)]
pub struct MissionOutput {
    pub search: SearchResult,
    pub paths: BTreeMap<ChunkId, PrintPath>,
    pub log: EmulationLog,
    pub agents: Vec<UavAgent>,
}

/// Chunks the mesh, then prints every chunk in order with the fleet.
pub fn run_mission(mesh: &TriangleMesh, search: &SearchConfig, setup: &MissionSetup) -> Result<MissionOutput, MissionError> {
    setup.validate()?;
    let result = beam_search(mesh, search)?;
    fly_tree(result, setup)
}

/// Prints the chunks of an already decomposed mesh.
pub fn fly_tree(search: SearchResult, setup: &MissionSetup) -> Result<MissionOutput, MissionError> {
    setup.validate()?;
    let MissionSetup { agents, slicer, mission, control, model: params, noise } = setup;
    let tree = &search.tree;
    let leaves = tree.leaves();
    let paths: BTreeMap<ChunkId, PrintPath> = leaves
        .par_iter()
        .map(|c| {
            let mut p = slicer.slice(&c.mesh).map_err(|source| MissionError::Toolpath { chunk: c.id, source })?;
            p.chunk_id = c.id;
            Ok((c.id, extruder_to_uav(&p, mission.l_ex)))
        })
        .collect::<Result<_, MissionError>>()?;
    let volumes: BTreeMap<ChunkId, f64> = leaves.iter().map(|c| (c.id, c.volume)).collect();

    let mut fleet: Vec<UavAgent> = agents.iter().enumerate().map(|(i, a)| UavAgent::new(i as AgentId, a.capacity, a.battery)).collect();
    for a in &fleet {
        a.validate()?;
    }
    let mut states: Vec<UavState> = agents
        .iter()
        .enumerate()
        .map(|(i, a)| UavState::at_rest(a.home.unwrap_or_else(|| default_home(i, mission.l_ex))))
        .collect();
    let mut inputs = vec![ControlInput::hover(params.g); agents.len()];
    let mut solvers: Vec<NmpcSolver> =
        (0..agents.len()).map(|_| NmpcSolver::new(control.clone(), params.clone())).collect::<Result<_, _>>()?;

    let mut noise = noise.as_ref().map(|n| {
        let pos = Normal::new(0.0, n.position_sigma).expect("validated sigma");
        let vel = Normal::new(0.0, n.velocity_sigma).expect("validated sigma");
        (ChaCha8Rng::seed_from_u64(n.seed), pos, vel)
    });

    let mut schedule = build_schedule(tree);
    let mut log = EmulationLog { order: schedule.queue.iter().copied().collect(), ..Default::default() };
    let down = Vec3::new(0.0, 0.0, mission.l_ex);
    let mut step_index: u64 = 0;
    let time = |k: u64| k as f64 * control.dt;

    while let Some((agent, chunk)) = assign_next(&mut schedule, &mut fleet, &volumes, time(step_index))? {
        let a = agent as usize;
        let path = &paths[&chunk];
        let mut follower = PathFollower::new(path, states[a].p, control.ref_speed, control.accept_radius);
        let started = step_index;
        let mut first = true;
        loop {
            let state = states[a];
            let r = match follower.step(state.p, control, params.g) {
                Ok(r) => r,
                Err(ControlError::PathComplete) => break,
                Err(e) => return Err(e.into()),
            };
            let sol = solvers[a].solve(&state, &r.reference, &inputs[a])?;
            let extruder = state.p - down;
            let t = time(step_index);
            log.samples.push(Sample {
                t,
                agent,
                chunk,
                state,
                reference: r.target,
                extruder,
                extrude: r.extrude,
                switched: r.switched || first,
                input: sol.input,
                cost: sol.cost,
            });
            if r.extrude {
                log.markers.push(DepositedMarker {
                    center: extruder - Vec3::new(0.0, 0.0, mission.marker_offset),
                    radius: mission.marker_radius,
                    chunk_id: chunk,
                    t,
                });
            }
            let mut next = step_euler(&state, &sol.input, params, control.dt);
            if let Some((rng, pos, vel)) = noise.as_mut() {
                next.p = next.p + Vec3::new(pos.sample(rng), pos.sample(rng), pos.sample(rng));
                next.v = next.v + Vec3::new(vel.sample(rng), vel.sample(rng), vel.sample(rng));
            }
            if !next.is_finite() {
                return Err(ControlError::NonFinite.into());
            }
            states[a] = next;
            inputs[a] = sol.input;
            first = false;
            step_index += 1;
            if time(step_index - started) > mission.max_chunk_time {
                return Err(MissionError::Stalled { chunk, seconds: mission.max_chunk_time });
            }
        }
        let drain = path.length(false) * mission.drain_per_metre;
        complete(&mut schedule, &mut fleet, agent, chunk, drain, mission.battery_threshold, time(step_index))?;
        solvers[a].reset();
    }
    if !schedule.is_finished() {
        let chunk = schedule.queue[0];
        return Err(AllocationError::NoCapableAgent { chunk, volume: volumes[&chunk] }.into());
    }
    log.events = schedule.log;
    log.completed = schedule.completed;
    Ok(MissionOutput { search, paths, log, agents: fleet })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisStats {
    pub max: [f64; 3],
    pub mean: [f64; 3],
    pub samples: usize,
}

impl AxisStats {
    fn from_errors<'a>(errors: impl Iterator<Item = &'a [f64; 3]>) -> Self {
        let mut max = [0.0f64; 3];
        let mut sum = [0.0; 3];
        let mut n = 0;
        for e in errors {
            for i in 0..3 {
                max[i] = max[i].max(e[i]);
                sum[i] += e[i];
            }
            n += 1;
        }
        let mean = if n == 0 { [0.0; 3] } else { sum.map(|s| s / n as f64) };
        Self { max, mean, samples: n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkStats {
    pub chunk: ChunkId,
    pub agent: AgentId,
    pub duration: f64,
    pub steady_uav: AxisStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingStats {
    pub duration: f64,
    pub uav: AxisStats,
    pub extruder: AxisStats,
    /// Errors outside the transient window after each waypoint switch.
    pub steady_uav: AxisStats,
    pub steady_extruder: AxisStats,
    pub chunks: Vec<ChunkStats>,
}

/// Per-axis absolute errors between measured and reference positions. The
/// extruder reference is the UAV reference lowered by `l_ex`.
pub fn tracking_stats(samples: &[Sample], l_ex: f64, transient_window: f64) -> Result<TrackingStats, MissionError> {
    if samples.is_empty() {
        return Err(MissionError::EmptyLog);
    }
    let down = Vec3::new(0.0, 0.0, l_ex);
    let abs = |a: Vec3, b: Vec3| {
        let d = a - b;
        [d.x.abs(), d.y.abs(), d.z.abs()]
    };
    let uav: Vec<[f64; 3]> = samples.iter().map(|s| abs(s.state.p, s.reference)).collect();
    let ext: Vec<[f64; 3]> = samples.iter().map(|s| abs(s.extruder, s.reference - down)).collect();
    let mut steady = Vec::with_capacity(samples.len());
    let mut last_switch = f64::NEG_INFINITY;
    for s in samples {
        if s.switched {
            last_switch = s.t;
        }
        steady.push(s.t - last_switch >= transient_window - 1e-9);
    }
    let pick = |errs: &[[f64; 3]], from: usize, to: usize| {
        AxisStats::from_errors(errs[from..to].iter().zip(&steady[from..to]).filter(|(_, &k)| k).map(|(e, _)| e))
    };

    let mut chunks = Vec::new();
    let mut start = 0;
    for i in 1..=samples.len() {
        let boundary = i == samples.len() || samples[i].chunk != samples[start].chunk || samples[i].agent != samples[start].agent;
        if boundary {
            chunks.push(ChunkStats {
                chunk: samples[start].chunk,
                agent: samples[start].agent,
                duration: samples[i - 1].t - samples[start].t,
                steady_uav: pick(&uav, start, i),
            });
            start = i;
        }
    }
    Ok(TrackingStats {
        duration: samples.last().unwrap().t - samples[0].t,
        uav: AxisStats::from_errors(uav.iter()),
        extruder: AxisStats::from_errors(ext.iter()),
        steady_uav: pick(&uav, 0, samples.len()),
        steady_extruder: pick(&ext, 0, samples.len()),
        chunks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64, p: Vec3, r: Vec3, switched: bool) -> Sample {
        Sample {
            t,
            agent: 0,
            chunk: 0,
            state: UavState::at_rest(p),
            reference: r,
            extruder: p - Vec3::new(0.0, 0.0, 0.5),
            extrude: true,
            switched,
            input: ControlInput::hover(9.81),
            cost: 0.0,
        }
    }

    #[test]
    fn perfect_tracking() {
        let s: Vec<Sample> = (0..10).map(|k| sample(k as f64 * 0.05, Vec3::new(1.0, 2.0, 3.0), Vec3::new(1.0, 2.0, 3.0), k == 0)).collect();
        let st = tracking_stats(&s, 0.5, 0.1).unwrap();
        assert_eq!(st.uav.max, [0.0; 3]);
        assert_eq!(st.extruder.max, [0.0; 3]);
        assert_eq!(st.steady_uav.samples, 8);
    }

    #[test]
    fn constant_offset() {
        let s: Vec<Sample> = (0..10).map(|k| sample(k as f64 * 0.05, Vec3::new(1.05, 0.0, 1.0), Vec3::new(1.0, 0.0, 1.0), false)).collect();
        let st = tracking_stats(&s, 0.5, 1.0).unwrap();
        assert!((st.uav.max[0] - 0.05).abs() < 1e-12);
        assert!((st.extruder.mean[0] - 0.05).abs() < 1e-12);
        assert_eq!(st.uav.max[1], 0.0);
        assert!(matches!(tracking_stats(&[], 0.5, 1.0), Err(MissionError::EmptyLog)));
    }

    #[test]
    fn transient_window_is_excluded() {
        let mut s: Vec<Sample> = (0..40).map(|k| sample(k as f64 * 0.05, Vec3::ZERO, Vec3::ZERO, false)).collect();
        s[10].switched = true;
        s[10].state.p = Vec3::new(0.5, 0.0, 0.0);
        s[30].state.p = Vec3::new(0.0, 0.2, 0.0);
        let st = tracking_stats(&s, 0.5, 1.0).unwrap();
        assert_eq!(st.uav.max[0], 0.5);
        assert_eq!(st.steady_uav.max[0], 0.0);
        assert_eq!(st.steady_uav.max[1], 0.2);
        assert_eq!(st.steady_uav.samples, 40 - 20);
    }

    #[test]
    fn csv_round_trip() {
        let mut s = sample(0.1, Vec3::new(0.1, 0.2, 0.30000000000000004), Vec3::new(1.0, 2.0, 3.0), true);
        s.cost = 1.0 / 3.0;
        s.agent = 2;
        s.chunk = 7;
        let log = EmulationLog { samples: vec![s], ..Default::default() };
        assert_eq!(parse_trace_csv(&log.trace_csv()).unwrap(), vec![s]);
        assert!(parse_trace_csv("nope\n").is_err());
    }
}
