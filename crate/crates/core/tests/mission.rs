use aerochunk::allocation::AllocationError;
use aerochunk::geometry::{TriangleMesh, Vec3};
use aerochunk::mission::{run_mission, tracking_stats, AgentSetup, MissionError, MissionSetup, NoiseConfig};
use aerochunk::toolpath::SlicerConfig;
use aerochunk::search::SearchConfig;

fn small_box() -> TriangleMesh {
    TriangleMesh::cuboid(Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.2, 0.2, 0.1))
}

fn setup(agents: &[AgentSetup]) -> MissionSetup {
    MissionSetup {
        agents: agents.to_vec(),
        slicer: SlicerConfig { line_spacing: 0.1, ..Default::default() },
        ..Default::default()
    }
}

fn agent(capacity: f64) -> AgentSetup {
    AgentSetup { capacity, battery: 1.0, home: Some(Vec3::new(0.0, 0.0, 0.5)) }
}

#[test]
fn printable_mesh_is_flown_as_one_chunk() {
    let search = SearchConfig { capacities: vec![1.0], ..Default::default() };
    let out = run_mission(&small_box(), &search, &setup(&[agent(1.0)])).unwrap();
    let log = &out.log;
    assert_eq!(out.search.tree.leaf_count(), 1);
    assert_eq!(log.completed, [0]);

    let extruding = log.samples.iter().filter(|s| s.extrude).count();
    assert!(extruding > 0);
    assert_eq!(log.markers.len(), extruding);
    for (m, s) in log.markers.iter().zip(log.samples.iter().filter(|s| s.extrude)) {
        assert_eq!(m.t, s.t);
        assert!((s.extruder.z - m.center.z - 0.1).abs() < 1e-12);
        assert_eq!((m.center.x, m.center.y), (s.extruder.x, s.extruder.y));
        assert_eq!(m.radius, 0.003);
    }
    for s in &log.samples {
        assert!((s.state.p.z - s.extruder.z - 0.5).abs() < 1e-12);
    }
    // timestamps advance by exactly one control period
    for (k, s) in log.samples.iter().enumerate() {
        assert!((s.t - k as f64 * 0.05).abs() < 1e-9);
    }
    let stats = tracking_stats(&log.samples, 0.5, 1.0).unwrap();
    assert!(stats.steady_uav.max.iter().all(|&e| e <= 0.06), "{:?}", stats.steady_uav);
    assert_eq!(stats.chunks.len(), 1);
}

#[test]
fn chunks_complete_in_priority_order_across_agents() {
    let search = SearchConfig { capacities: vec![0.003], n_polar: 0, delta: 0.05, ..Default::default() };
    // the first agent retires after its first chunk and the spare takes over
    let agents = [AgentSetup { battery: 0.151, ..agent(0.003) }, AgentSetup { capacity: 0.01, battery: 0.2, home: Some(Vec3::new(0.5, 0.0, 0.5)) }];
    let out = run_mission(&small_box(), &search, &setup(&agents)).unwrap();
    assert!(out.search.tree.leaf_count() >= 2);
    assert_eq!(out.log.completed, out.log.order);
    assert_eq!(out.log.completed, out.search.tree.in_order_priority());
    // one printer at a time: chunk blocks in the trace never interleave
    let mut blocks: Vec<u32> = out.log.samples.iter().map(|s| s.chunk).collect();
    blocks.dedup();
    assert_eq!(blocks, out.log.order);
    assert!(out.log.samples.iter().any(|s| s.agent == 0) && out.log.samples.iter().any(|s| s.agent == 1));
    assert_eq!(out.agents[0].status, aerochunk::allocation::AgentStatus::Inactive);
}

#[test]
fn oversized_chunk_is_reported() {
    let search = SearchConfig { capacities: vec![1.0], ..Default::default() };
    let err = run_mission(&small_box(), &search, &setup(&[agent(0.001)])).unwrap_err();
    assert!(matches!(err, MissionError::Allocation(AllocationError::NoCapableAgent { chunk: 0, .. })), "{err}");
}

#[test]
fn seeded_noise_is_reproducible() {
    let search = SearchConfig { capacities: vec![1.0], ..Default::default() };
    let noisy = |seed| MissionSetup {
        noise: Some(NoiseConfig { seed, position_sigma: 0.001, velocity_sigma: 0.002 }),
        ..setup(&[agent(1.0)])
    };
    let run = |s: &MissionSetup| run_mission(&small_box(), &search, s).unwrap().log;
    let a = run(&noisy(3));
    let b = run(&noisy(3));
    let c = run(&noisy(4));
    assert_eq!(a.trace_csv(), b.trace_csv());
    assert_ne!(a.trace_csv(), c.trace_csv());
}
