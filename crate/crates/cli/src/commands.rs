use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use aerochunk::allocation::MissionPlan;
use aerochunk::bsp::ChunkId;
use aerochunk::geometry::write_obj;
use aerochunk::mission::{fly_tree, parse_trace_csv, tracking_stats, AxisStats, TrackingStats};
use aerochunk::search::{beam_search, IterationLog, SearchError, SearchResult};
use aerochunk::toolpath::{parse_gcode, serialize_gcode, PrintPath};
use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::config::RunConfig;

#[derive(Debug, Serialize)]
struct SearchReport<'a> {
    heuristic: f64,
    terminated: bool,
    iterations_used: usize,
    candidates: usize,
    chunks: usize,
    planes: usize,
    log: &'a [IterationLog],
}

#[derive(Debug, Serialize)]
pub struct SimulationStats {
    pub chunks: usize,
    pub completed: Vec<ChunkId>,
    pub mission_duration: f64,
    pub markers: usize,
    pub tracking: TrackingStats,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn dry_run(cfg: &RunConfig, needs_mesh: bool) -> Result<()> {
    cfg.validate()?;
    if needs_mesh {
        let path = cfg.mesh_path()?;
        if !path.exists() {
            bail!("mesh not found: {}", path.display());
        }
    }
    println!("configuration ok");
    Ok(())
}

/// Runs the search; an exhausted search still yields its best tree.
fn search(cfg: &RunConfig) -> Result<(SearchResult, bool)> {
    cfg.validate()?;
    let mesh = cfg.load_mesh()?;
    match beam_search(&mesh, &cfg.search) {
        Ok(r) => Ok((r, true)),
        Err(SearchError::Exhausted(r)) => Ok((*r, false)),
        Err(e) => Err(e).context("chunk search"),
    }
}

fn write_tree(cfg: &RunConfig, result: &SearchResult) -> Result<()> {
    let out = &cfg.out;
    write_json(&out.join("tree.json"), &result.tree.report())?;
    write_json(&out.join("order.json"), &result.tree.in_order_priority())?;
    write(&out.join("config.json"), &cfg.to_json())
}

fn exhausted(result: &SearchResult) -> anyhow::Error {
    anyhow::anyhow!(
        "chunk search exhausted after {} iterations: the largest chunk ({:.6} m^3) exceeds every UAV capacity; best tree written",
        result.iterations_used,
        result.largest_chunk()
    )
}

pub fn chunk(cfg: &RunConfig, dry: bool) -> Result<()> {
    if dry {
        return dry_run(cfg, true);
    }
    let (result, terminated) = search(cfg)?;
    write_tree(cfg, &result)?;
    let dir = cfg.out.join("chunks");
    for c in result.tree.leaves() {
        let name = format!("chunk_{:03}", c.id);
        write(&dir.join(format!("{name}.obj")), &write_obj(&c.mesh, &name))?;
    }
    write_json(
        &cfg.out.join("search.json"),
        &SearchReport {
            heuristic: result.heuristic,
            terminated: result.terminated,
            iterations_used: result.iterations_used,
            candidates: result.candidates.len(),
            chunks: result.tree.leaf_count(),
            planes: result.tree.used_planes().len(),
            log: &result.log,
        },
    )?;
    println!(
        "{} chunks from {} cuts, h = {:.4}, {} iterations",
        result.tree.leaf_count(),
        result.tree.used_planes().len(),
        result.heuristic,
        result.iterations_used
    );
    if !terminated {
        return Err(exhausted(&result));
    }
    Ok(())
}

fn write_path(dir: &Path, name: &str, path: &PrintPath) -> Result<()> {
    write(&dir.join(format!("{name}.csv")), &path.to_csv())?;
    write_json(&dir.join(format!("{name}.json")), path)
}

pub fn slice(cfg: &RunConfig, gcode: Option<&PathBuf>, dry: bool) -> Result<()> {
    let dir = cfg.out.join("paths");
    if let Some(file) = gcode {
        if dry {
            cfg.validate()?;
            println!("configuration ok");
            return Ok(());
        }
        let text = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
        let path = parse_gcode(&text).with_context(|| format!("parsing {}", file.display()))?;
        let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or("gcode");
        write_path(&dir, stem, &path)?;
        println!("{} waypoints, {:.3} m extruded", path.waypoints.len(), path.length(true));
        return Ok(());
    }
    if dry {
        return dry_run(cfg, true);
    }
    let (result, terminated) = search(cfg)?;
    write_tree(cfg, &result)?;
    let mut total = 0.0;
    for c in result.tree.leaves() {
        let mut path = cfg.slicer.slice(&c.mesh).with_context(|| format!("slicing chunk {}", c.id))?;
        path.chunk_id = c.id;
        let name = format!("chunk_{:03}", c.id);
        write_path(&dir, &name, &path)?;
        write(&dir.join(format!("{name}.gcode")), &serialize_gcode(&path))?;
        total += path.length(true);
    }
    println!("{} chunks sliced, {:.3} m extruded", result.tree.leaf_count(), total);
    if !terminated {
        return Err(exhausted(&result));
    }
    Ok(())
}

pub fn plan(cfg: &RunConfig, dry: bool) -> Result<()> {
    if dry {
        return dry_run(cfg, true);
    }
    let (result, terminated) = search(cfg)?;
    if !terminated {
        write_tree(cfg, &result)?;
        return Err(exhausted(&result));
    }
    write_tree(cfg, &result)?;
    let agents = cfg
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| aerochunk::allocation::UavAgent::new(i as u32, a.capacity, a.battery))
        .collect();
    let plan = MissionPlan::new(&result.tree, agents);
    write_json(&cfg.out.join("plan.json"), &plan)?;
    println!("print order: {:?}", plan.order);
    Ok(())
}

pub fn simulate(cfg: &RunConfig, dry: bool) -> Result<()> {
    if dry {
        return dry_run(cfg, true);
    }
    let (result, terminated) = search(cfg)?;
    write_tree(cfg, &result)?;
    if !terminated {
        return Err(exhausted(&result));
    }
    let chunks = result.tree.leaf_count();
    let out = fly_tree(result, &cfg.setup()).context("mission")?;
    let log = &out.log;
    let out_dir = &cfg.out;
    write(&out_dir.join("trace.csv"), &log.trace_csv())?;
    write_json(&out_dir.join("markers.json"), &log.markers)?;
    write_json(&out_dir.join("events.json"), &log.events)?;
    let tracking = tracking_stats(&log.samples, cfg.mission.l_ex, cfg.mission.transient_window)?;
    let stats = SimulationStats {
        chunks,
        completed: log.completed.clone(),
        mission_duration: tracking.duration,
        markers: log.markers.len(),
        tracking,
    };
    write_json(&out_dir.join("stats.json"), &stats)?;
    print_summary(&stats.tracking, Some((chunks, stats.markers)));
    Ok(())
}

pub fn report(cfg: &RunConfig, trace: Option<&PathBuf>, dry: bool) -> Result<()> {
    let path = trace.cloned().unwrap_or_else(|| cfg.out.join("trace.csv"));
    if dry {
        cfg.validate()?;
        if !path.exists() {
            bail!("trace not found: {}", path.display());
        }
        println!("configuration ok");
        return Ok(());
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let samples = parse_trace_csv(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
    let stats = tracking_stats(&samples, cfg.mission.l_ex, cfg.mission.transient_window)?;
    write_json(&cfg.out.join("report.json"), &stats)?;
    let chunks: BTreeMap<ChunkId, ()> = samples.iter().map(|s| (s.chunk, ())).collect();
    print_summary(&stats, Some((chunks.len(), samples.iter().filter(|s| s.extrude).count())));
    Ok(())
}

fn print_summary(stats: &TrackingStats, counts: Option<(usize, usize)>) {
    if let Some((chunks, markers)) = counts {
        println!("chunks             {chunks}");
        println!("markers            {markers}");
    }
    println!("mission duration   {:.2} s", stats.duration);
    println!("{:<18} {:>9} {:>9} {:>9}", "error (m)", "x", "y", "z");
    let row = |name: &str, v: [f64; 3]| println!("{name:<18} {:>9.4} {:>9.4} {:>9.4}", v[0], v[1], v[2]);
    let both = |name: &str, s: &AxisStats| {
        row(&format!("{name} max"), s.max);
        row(&format!("{name} mean"), s.mean);
    };
    both("steady", &stats.steady_uav);
    both("overall", &stats.uav);
}
