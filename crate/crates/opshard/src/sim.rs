//! Discrete-event simulator of a small cluster with shared network and
//! disk bandwidth. It reproduces the effects a single-process run cannot
//! show: Map/Reduce shuffle contention under Hadoop-style overlap versus
//! deferred copying, and pipelined versus sequential Reduce stages.
//!
//! Bandwidth follows a processor-sharing model: every device splits evenly
//! among its active flows, and a flow's rate is the minimum share across
//! the devices it touches.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{KeyDist, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapMode {
    /// Reduce copying starts as soon as each Map wave's output is on disk.
    HadoopOverlap,
    /// Reduce copying starts only after the last Map task finishes.
    Os4mDeferred,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineMode {
    Sequential,
    Pipelined,
}

/// Cluster and workload description for one simulation.
#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Node count (also the tracker count t).
    pub nodes: usize,
    pub map_slots_per_node: usize,
    pub reduce_slots_per_node: usize,
    /// Per-flow peak network bandwidth, MB/s.
    pub net_bw: f64,
    /// Per-flow peak disk read bandwidth, MB/s.
    pub disk_read_bw: f64,
    /// Per-flow peak disk write bandwidth, MB/s.
    pub disk_write_bw: f64,
    /// Pure compute seconds per Map task.
    pub map_task_work: f64,
    /// Bytes each Map task writes (its shuffle contribution).
    pub map_output_bytes: u64,
    /// Map waves; the job runs `waves * nodes * map_slots_per_node` tasks.
    pub waves: usize,
    pub overlap_mode: OverlapMode,
    pub pipeline_mode: PipelineMode,
    pub dist: KeyDist,
    pub schedule: Schedule,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 || self.map_slots_per_node == 0 || self.reduce_slots_per_node == 0 {
            return Err(Error::InvalidInput(
                "node and slot counts must be at least 1".into(),
            ));
        }
        if self.waves == 0 {
            return Err(Error::InvalidInput("waves must be at least 1".into()));
        }
        if !(self.net_bw > 0.0 && self.disk_read_bw > 0.0 && self.disk_write_bw > 0.0) {
            return Err(Error::InvalidInput(
                "bandwidths must be strictly positive".into(),
            ));
        }
        if self.dist.n() != self.schedule.n() {
            return Err(Error::DimensionMismatch(format!(
                "distribution has {} clusters, schedule has {}",
                self.dist.n(),
                self.schedule.n()
            )));
        }
        if !(self.map_task_work >= 0.0) {
            return Err(Error::InvalidInput("map_task_work must be finite".into()));
        }
        Ok(())
    }

    /// The paper-grade defaults: 4 nodes, measured disk/network bandwidths.
    pub fn default_cluster(dist: KeyDist, schedule: Schedule) -> SimConfig {
        SimConfig {
            nodes: 4,
            map_slots_per_node: 2,
            reduce_slots_per_node: 2,
            net_bw: 37.0,
            disk_read_bw: 203.0,
            disk_write_bw: 121.0,
            map_task_work: 1.0,
            map_output_bytes: 64 * 1024 * 1024,
            waves: 3,
            overlap_mode: OverlapMode::Os4mDeferred,
            pipeline_mode: PipelineMode::Pipelined,
            dist,
            schedule,
        }
    }
}

/// One timeline entry: something finished at `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent {
    pub t: f64,
    pub what: String,
}

/// Simulation results: progress samples, wave boundaries, phase spans.
#[derive(Debug, Clone)]
pub struct SimTrace {
    /// `(t, map_fraction, reduce_fraction)`, one sample per event.
    pub progress: Vec<(f64, f64, f64)>,
    pub wave_durations: Vec<f64>,
    pub map_done: f64,
    /// Start of the first Reduce-side flow; equals `map_done` when deferred.
    pub reduce_start: f64,
    pub reduce_done: f64,
    pub total: f64,
    pub events: Vec<SimEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum FlowKind {
    MapCompute { wave: usize },
    MapWrite { wave: usize },
    Copy,
    Sort,
    Run,
}

impl FlowKind {
    fn is_reduce(self) -> bool {
        matches!(self, FlowKind::Copy | FlowKind::Sort | FlowKind::Run)
    }
}

#[derive(Debug, Clone)]
struct Flow {
    kind: FlowKind,
    label: String,
    /// Bytes for I/O flows, seconds for compute flows.
    amount: f64,
    /// `(device id, peak rate in amount-units per second)`.
    devices: Vec<(usize, f64)>,
    deps: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
struct FlowOutcome {
    start: f64,
    done: f64,
}

const EPS: f64 = 1e-9;

/// Run the flow graph to completion under processor sharing; returns each
/// flow's start and completion time. Deterministic: ties resolve by flow
/// index.
fn run_flows(flows: &[Flow]) -> Result<Vec<FlowOutcome>> {
    let n = flows.len();
    let mut remaining: Vec<f64> = flows.iter().map(|f| f.amount).collect();
    let mut pending_deps: Vec<usize> = flows.iter().map(|f| f.deps.len()).collect();
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, f) in flows.iter().enumerate() {
        for &d in &f.deps {
            dependents[d].push(i);
        }
    }
    let mut outcome = vec![
        FlowOutcome {
            start: f64::NAN,
            done: f64::NAN
        };
        n
    ];
    let mut active: Vec<usize> = Vec::new();
    let mut finished = 0usize;
    let mut t = 0.0f64;
    for i in 0..n {
        if pending_deps[i] == 0 {
            active.push(i);
            outcome[i].start = t;
        }
    }
    let device_count = flows
        .iter()
        .flat_map(|f| f.devices.iter().map(|&(d, _)| d + 1))
        .max()
        .unwrap_or(0);
    let mut load = vec![0usize; device_count];

    while finished < n {
        if active.is_empty() {
            return Err(Error::InvalidInput(
                "flow graph has a dependency cycle".into(),
            ));
        }
        for l in load.iter_mut() {
            *l = 0;
        }
        for &i in &active {
            for &(d, _) in &flows[i].devices {
                load[d] += 1;
            }
        }
        // Each flow's rate is the minimum equal share across its devices.
        let rates: Vec<f64> = active
            .iter()
            .map(|&i| {
                flows[i]
                    .devices
                    .iter()
                    .map(|&(d, peak)| peak / load[d] as f64)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let mut dt = f64::INFINITY;
        for (k, &i) in active.iter().enumerate() {
            let need = if rates[k].is_infinite() {
                0.0
            } else {
                remaining[i] / rates[k]
            };
            dt = dt.min(need);
        }
        t += dt;
        let mut still = Vec::with_capacity(active.len());
        let mut completed = Vec::new();
        for (k, &i) in active.iter().enumerate() {
            if !rates[k].is_infinite() {
                remaining[i] -= rates[k] * dt;
            }
            if remaining[i] <= EPS || rates[k].is_infinite() {
                completed.push(i);
            } else {
                still.push(i);
            }
        }
        active = still;
        completed.sort_unstable();
        for i in completed {
            outcome[i].done = t;
            finished += 1;
            for &j in &dependents[i] {
                pending_deps[j] -= 1;
                if pending_deps[j] == 0 {
                    outcome[j].start = t;
                    active.push(j);
                }
            }
        }
        active.sort_unstable();
    }
    Ok(outcome)
}

/// Build the flow graph for one configuration.
fn build_flows(cfg: &SimConfig) -> Vec<Flow> {
    let nodes = cfg.nodes;
    let map_slots = nodes * cfg.map_slots_per_node;
    let m_tasks = cfg.waves * map_slots;
    let disk = |node: usize| node;
    let nic = |node: usize| nodes + node;
    let map_cpu = |slot: usize| 2 * nodes + slot;
    let run_cpu = |slot: usize| 2 * nodes + map_slots + slot;
    let mb = 1.0e6; // bandwidths are MB/s, amounts are bytes

    let mut flows: Vec<Flow> = Vec::new();

    // Map side: each global map slot runs its tasks back to back; a task is
    // a compute flow followed by a shuffle-output disk write.
    let mut write_ids: Vec<usize> = Vec::with_capacity(m_tasks);
    let mut last_on_slot: Vec<Option<usize>> = vec![None; map_slots];
    for task in 0..m_tasks {
        let slot = task % map_slots;
        let node = slot % nodes;
        let wave = task / map_slots;
        let compute = flows.len();
        flows.push(Flow {
            kind: FlowKind::MapCompute { wave },
            label: format!("map-compute task={task}"),
            amount: cfg.map_task_work,
            devices: vec![(map_cpu(slot), 1.0)],
            deps: last_on_slot[slot].into_iter().collect(),
        });
        let write = flows.len();
        flows.push(Flow {
            kind: FlowKind::MapWrite { wave },
            label: format!("map-write task={task}"),
            amount: cfg.map_output_bytes as f64,
            devices: vec![(disk(node), cfg.disk_write_bw * mb)],
            deps: vec![compute],
        });
        write_ids.push(write);
        last_on_slot[slot] = Some(write);
    }

    // Reduce side.
    let total_load: u64 = cfg.dist.loads().iter().sum();
    let total_shuffle = m_tasks as f64 * cfg.map_output_bytes as f64;
    let share = |pairs: u64| {
        if total_load == 0 {
            0.0
        } else {
            pairs as f64 / total_load as f64
        }
    };
    for slot in cfg.schedule.slots() {
        let slot_idx = slot.index();
        let dest = slot_idx % nodes;
        let mut owned = cfg.schedule.owned_clusters(slot);
        owned.retain(|c| cfg.dist.load(*c) > 0);
        owned.sort_by_key(|c| (cfg.dist.load(*c), *c));
        let slot_bytes = share(
            owned.iter().map(|c| cfg.dist.load(*c)).sum::<u64>(),
        ) * total_shuffle;

        // One copy flow per wave: reads a source disk, lands on the
        // destination NIC. Under overlap it starts as soon as its wave's
        // output is on disk, so slow copies from earlier waves pile up on
        // top of later ones; deferred waits for the whole Map phase.
        let mut copy_ids: Vec<usize> = Vec::with_capacity(cfg.waves);
        for wave in 0..cfg.waves {
            let src = (slot_idx + wave) % nodes;
            let deps: Vec<usize> = match cfg.overlap_mode {
                OverlapMode::HadoopOverlap => write_ids
                    .iter()
                    .enumerate()
                    .filter(|(task, _)| task / map_slots == wave)
                    .map(|(_, &w)| w)
                    .collect(),
                OverlapMode::Os4mDeferred => write_ids.clone(),
            };
            let id = flows.len();
            flows.push(Flow {
                kind: FlowKind::Copy,
                label: format!("copy slot={slot} wave={wave}"),
                amount: slot_bytes / cfg.waves as f64,
                devices: vec![
                    (disk(src), cfg.disk_read_bw * mb),
                    (nic(dest), cfg.net_bw * mb),
                ],
                deps,
            });
            copy_ids.push(id);
        }

        // Per-item sort (destination disk I/O) and run (compute) stages.
        let mut sort_ids: Vec<usize> = Vec::with_capacity(owned.len());
        let mut prev_run: Option<usize> = None;
        for (i, cluster) in owned.iter().enumerate() {
            let item_bytes = share(cfg.dist.load(*cluster)) * total_shuffle;
            let mut deps = copy_ids.clone();
            if let Some(&prev) = sort_ids.last() {
                deps.push(prev);
            }
            let sort_id = flows.len();
            flows.push(Flow {
                kind: FlowKind::Sort,
                label: format!("sort slot={slot} item={i}"),
                amount: item_bytes,
                devices: vec![(disk(dest), cfg.disk_read_bw * mb)],
                deps,
            });
            sort_ids.push(sort_id);
        }
        for (i, cluster) in owned.iter().enumerate() {
            // Total Reduce compute matches total Map compute, spread by load.
            let work = cfg.map_task_work * m_tasks as f64 * share(cfg.dist.load(*cluster));
            let mut deps = match cfg.pipeline_mode {
                PipelineMode::Pipelined => vec![sort_ids[i]],
                PipelineMode::Sequential => vec![*sort_ids.last().unwrap()],
            };
            deps.extend(prev_run);
            let id = flows.len();
            flows.push(Flow {
                kind: FlowKind::Run,
                label: format!("run slot={slot} item={i}"),
                amount: work,
                devices: vec![(run_cpu(slot_idx), 1.0)],
                deps,
            });
            prev_run = Some(id);
        }
    }
    flows
}

/// Run one simulation.
pub fn simulate(cfg: &SimConfig) -> Result<SimTrace> {
    cfg.validate()?;
    let flows = build_flows(cfg);
    let outcomes = run_flows(&flows)?;

    let map_slots = cfg.nodes * cfg.map_slots_per_node;
    let m_tasks = cfg.waves * map_slots;
    let mut wave_end = vec![0.0f64; cfg.waves];
    let mut map_done = 0.0f64;
    let mut reduce_start = f64::INFINITY;
    let mut reduce_done = 0.0f64;
    let mut reduce_total = 0usize;
    for (f, o) in flows.iter().zip(&outcomes) {
        match f.kind {
            FlowKind::MapWrite { wave } => {
                wave_end[wave] = wave_end[wave].max(o.done);
                map_done = map_done.max(o.done);
            }
            FlowKind::MapCompute { .. } => {}
            _ => {
                reduce_start = reduce_start.min(o.start);
                reduce_done = reduce_done.max(o.done);
                reduce_total += 1;
            }
        }
    }
    if reduce_total == 0 {
        reduce_start = map_done;
        reduce_done = map_done;
    }
    let mut wave_durations = Vec::with_capacity(cfg.waves);
    let mut prev = 0.0;
    for end in &wave_end {
        wave_durations.push(end - prev);
        prev = *end;
    }

    // Progress samples at every completion, in time order.
    let mut completions: Vec<(f64, usize)> = outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| (o.done, i))
        .collect();
    completions.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut progress = vec![(0.0, 0.0, 0.0)];
    let mut events = Vec::new();
    let mut maps_done = 0usize;
    let mut reduces_done = 0usize;
    for (t, i) in completions {
        match flows[i].kind {
            FlowKind::MapWrite { .. } => maps_done += 1,
            k if k.is_reduce() => reduces_done += 1,
            _ => {}
        }
        let map_fraction = if m_tasks == 0 {
            1.0
        } else {
            maps_done as f64 / m_tasks as f64
        };
        let reduce_fraction = if reduce_total == 0 {
            0.0
        } else {
            reduces_done as f64 / reduce_total as f64
        };
        progress.push((t, map_fraction, reduce_fraction));
        events.push(SimEvent {
            t,
            what: flows[i].label.clone(),
        });
    }

    Ok(SimTrace {
        progress,
        wave_durations,
        map_done,
        reduce_start,
        reduce_done,
        total: reduce_done.max(map_done),
        events,
    })
}

/// Side-by-side run of the two overlap modes on the same workload.
#[derive(Debug, Clone)]
pub struct ModeComparison {
    pub hadoop: SimTrace,
    pub deferred: SimTrace,
}

pub fn compare_modes(cfg: &SimConfig) -> Result<ModeComparison> {
    let mut hadoop_cfg = cfg.clone();
    hadoop_cfg.overlap_mode = OverlapMode::HadoopOverlap;
    let mut deferred_cfg = cfg.clone();
    deferred_cfg.overlap_mode = OverlapMode::Os4mDeferred;
    Ok(ModeComparison {
        hadoop: simulate(&hadoop_cfg)?,
        deferred: simulate(&deferred_cfg)?,
    })
}

/// Makespan of a single slot's item sequence, stage times
/// `[copy, sort, run]` per item, with one executor per stage.
///
/// Sequential runs each stage over all items before the next stage starts;
/// pipelined lets item `i+1` occupy a stage as soon as item `i` leaves it.
pub fn pipeline_makespan(items: &[[f64; 3]], mode: PipelineMode) -> f64 {
    match mode {
        PipelineMode::Sequential => items.iter().flatten().sum(),
        PipelineMode::Pipelined => {
            let mut done = [0.0f64; 3];
            for item in items {
                let mut ready = 0.0f64;
                for (k, &t) in item.iter().enumerate() {
                    let start = ready.max(done[k]);
                    done[k] = start + t;
                    ready = done[k];
                }
            }
            done[2]
        }
    }
}

/// Write `t,map_fraction,reduce_fraction,event` progress rows.
pub fn write_progress_csv(trace: &SimTrace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "map_fraction", "reduce_fraction", "event"])?;
    w.write_record(["0", "0", "0", "start"])?;
    for (sample, event) in trace.progress.iter().skip(1).zip(&trace.events) {
        w.write_record([
            sample.0.to_string(),
            sample.1.to_string(),
            sample.2.to_string(),
            event.what.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Write one row per wave: `wave,duration_s`.
pub fn write_wave_csv(trace: &SimTrace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["wave", "duration_s"])?;
    for (i, d) in trace.wave_durations.iter().enumerate() {
        w.write_record([(i + 1).to_string(), d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
