//! The Reduce-slot execution pipeline: per-cluster copy -> sort -> run
//! stages running concurrently, items ordered by increasing load.
//!
//! Each stage is one executor thread; handoff uses bounded single-slot
//! buffers, so a stage blocks while its successor is occupied and at most
//! one item occupies each stage at any instant. Stage transitions are
//! appended to an event trace with lines of the form
//! `event=phase_enter slot=<i> cluster=<j> stage=copy t=<monotonic-micros>`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::sync_channel;
use std::sync::Mutex;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::model::{ClusterId, KeyDist, SlotId};

/// Raw key-value pairs of one cluster, in fetch order.
pub type Pairs = Vec<(Vec<u8>, Vec<u8>)>;

/// Key-grouped, key-sorted pairs of one cluster.
pub type Groups = Vec<(Vec<u8>, Vec<Vec<u8>>)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ItemState {
    Pending,
    Copying,
    Copied,
    Sorting,
    Sorted,
    Running,
    Done,
}

/// One operation cluster travelling through the pipeline.
#[derive(Debug, Clone)]
pub struct PipelineItem {
    pub cluster: ClusterId,
    pub load: u64,
    /// Filled in by the copy stage; 0 until then.
    pub copy_bytes: u64,
    pub state: ItemState,
}

impl PipelineItem {
    /// States only move forward.
    pub fn advance(&mut self, next: ItemState) {
        assert!(
            next > self.state,
            "pipeline item {} moved backwards: {:?} -> {:?}",
            self.cluster,
            self.state,
            next
        );
        self.state = next;
    }
}

/// Ordered work list for one Reduce slot.
#[derive(Debug, Clone)]
pub struct PipelinePlan {
    pub slot: SlotId,
    pub items: Vec<PipelineItem>,
    pub memory_sort_threshold: u64,
}

pub const DEFAULT_MEMORY_SORT_THRESHOLD: u64 = 64 * 1024 * 1024;

/// Owned clusters sorted by load ascending, ties by cluster id ascending.
pub fn plan(
    owned: &[ClusterId],
    dist: &KeyDist,
    slot: SlotId,
    memory_sort_threshold: u64,
) -> PipelinePlan {
    let mut items: Vec<PipelineItem> = owned
        .iter()
        .map(|&cluster| PipelineItem {
            cluster,
            load: dist.load(cluster),
            copy_bytes: 0,
            state: ItemState::Pending,
        })
        .collect();
    items.sort_by_key(|item| (item.load, item.cluster));
    PipelinePlan {
        slot,
        items,
        memory_sort_threshold,
    }
}

/// Monotonic microsecond clock shared by every slot of a job, so trace
/// timestamps are comparable across threads.
#[derive(Debug)]
pub struct TraceClock {
    epoch: Instant,
}

impl TraceClock {
    pub fn new() -> TraceClock {
        TraceClock {
            epoch: Instant::now(),
        }
    }

    pub fn micros(&self) -> u64 {
        self.epoch.elapsed().as_micros() as u64
    }
}

impl Default for TraceClock {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Copy,
    Sort,
    Run,
}

impl Stage {
    fn name(self) -> &'static str {
        match self {
            Stage::Copy => "copy",
            Stage::Sort => "sort",
            Stage::Run => "run",
        }
    }
}

fn trace_line(event: &str, slot: SlotId, cluster: ClusterId, stage: Stage, t: u64) -> String {
    format!(
        "event={event} slot={slot} cluster={cluster} stage={} t={t}",
        stage.name()
    )
}

/// Anchor line marking the Map-phase barrier in a slot's trace.
pub fn map_done_line(slot: SlotId, t: u64) -> String {
    format!("event=map_done slot={slot} t={t}")
}

/// Reduce output of one cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterOutput {
    pub cluster: ClusterId,
    pub pairs: Pairs,
}

/// Sort and run delays of one slot, in microseconds of the shared clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelayReport {
    pub map_done_at: u64,
    pub first_sort_at: u64,
    pub first_run_at: u64,
    pub sort_delay: u64,
    pub run_delay: u64,
}

struct TraceSink<'a> {
    slot: SlotId,
    clock: &'a TraceClock,
    lines: Mutex<Vec<String>>,
}

impl TraceSink<'_> {
    fn record(&self, event: &str, cluster: ClusterId, stage: Stage) {
        let line = trace_line(event, self.slot, cluster, stage, self.clock.micros());
        self.lines.lock().unwrap().push(line);
    }
}

/// Run one slot's plan through the three concurrent stage executors.
///
/// `map_done_at` is the barrier timestamp (same clock) anchoring the delay
/// measurements. A fetch failure is retried once; a second failure or a
/// sort/reduce error fails the slot with the cluster attached.
pub fn execute<F, S, R>(
    plan: &PipelinePlan,
    map_done_at: u64,
    clock: &TraceClock,
    fetch: F,
    sort: S,
    reduce: R,
) -> Result<(Vec<ClusterOutput>, DelayReport, Vec<String>)>
where
    F: Fn(ClusterId) -> Result<(Pairs, u64)> + Send,
    S: Fn(ClusterId, Pairs, u64) -> Result<Groups> + Send,
    R: Fn(ClusterId, Groups) -> Result<Pairs> + Send,
{
    let slot = plan.slot;
    let sink = TraceSink {
        slot,
        clock,
        lines: Mutex::new(vec![map_done_line(slot, map_done_at)]),
    };

    // An empty plan is legal: nothing to do, zero delays.
    if plan.items.is_empty() {
        return Ok((
            Vec::new(),
            DelayReport {
                map_done_at,
                first_sort_at: map_done_at,
                first_run_at: map_done_at,
                sort_delay: 0,
                run_delay: 0,
            },
            vec![map_done_line(slot, map_done_at)],
        ));
    }

    // Captures only the Copy slot id, so each stage thread gets its own copy.
    let fail = move |cluster: ClusterId, message: String| Error::SlotFailure {
        slot: slot.0 as usize,
        cluster: Some(cluster),
        message,
    };

    let (copied_tx, copied_rx) = sync_channel::<(PipelineItem, Pairs)>(1);
    let (sorted_tx, sorted_rx) = sync_channel::<(PipelineItem, Groups)>(1);

    let sink = &sink;
    let items = &plan.items;
    let outputs = std::thread::scope(|scope| -> Result<Vec<ClusterOutput>> {
        let copier = scope.spawn(move || -> Result<()> {
            for item in items {
                let mut item = item.clone();
                let cluster = item.cluster;
                item.advance(ItemState::Copying);
                sink.record("phase_enter", cluster, Stage::Copy);
                let fetched = match fetch(cluster) {
                    Ok(ok) => ok,
                    // One retry, then the slot fails.
                    Err(first) => fetch(cluster)
                        .map_err(|e| fail(cluster, format!("fetch failed twice: {first}; {e}")))?,
                };
                item.copy_bytes = fetched.1;
                item.advance(ItemState::Copied);
                sink.record("phase_exit", cluster, Stage::Copy);
                if copied_tx.send((item, fetched.0)).is_err() {
                    break; // downstream failed; its error wins
                }
            }
            Ok(())
        });

        let sorter = scope.spawn(move || -> Result<()> {
            while let Ok((mut item, pairs)) = copied_rx.recv() {
                let cluster = item.cluster;
                item.advance(ItemState::Sorting);
                sink.record("phase_enter", cluster, Stage::Sort);
                let groups = sort(cluster, pairs, item.copy_bytes)
                    .map_err(|e| fail(cluster, format!("sort failed: {e}")))?;
                item.advance(ItemState::Sorted);
                sink.record("phase_exit", cluster, Stage::Sort);
                if sorted_tx.send((item, groups)).is_err() {
                    break;
                }
            }
            Ok(())
        });

        let runner = scope.spawn(move || -> Result<Vec<ClusterOutput>> {
            let mut outputs = Vec::new();
            while let Ok((mut item, groups)) = sorted_rx.recv() {
                let cluster = item.cluster;
                item.advance(ItemState::Running);
                sink.record("phase_enter", cluster, Stage::Run);
                let pairs = reduce(cluster, groups)
                    .map_err(|e| fail(cluster, format!("reduce failed: {e}")))?;
                item.advance(ItemState::Done);
                sink.record("phase_exit", cluster, Stage::Run);
                outputs.push(ClusterOutput { cluster, pairs });
            }
            Ok(outputs)
        });

        let copy_res = copier.join().expect("copy stage panicked");
        let sort_res = sorter.join().expect("sort stage panicked");
        let run_res = runner.join().expect("run stage panicked");

        copy_res?;
        sort_res?;
        run_res
    })?;

    let mut lines = std::mem::take(&mut *sink.lines.lock().unwrap());
    lines.sort_by_key(|line| parse_field(line, "t=").unwrap_or(0));
    let report = measure_delays(&lines)?;
    Ok((outputs, report, lines))
}

/// Fully sequential execution of the same plan: copy everything, then sort
/// everything, then run everything. Used as the correctness and timing
/// baseline.
pub fn execute_sequential<F, S, R>(
    plan: &PipelinePlan,
    map_done_at: u64,
    clock: &TraceClock,
    fetch: F,
    sort: S,
    reduce: R,
) -> Result<(Vec<ClusterOutput>, DelayReport, Vec<String>)>
where
    F: Fn(ClusterId) -> Result<(Pairs, u64)>,
    S: Fn(ClusterId, Pairs, u64) -> Result<Groups>,
    R: Fn(ClusterId, Groups) -> Result<Pairs>,
{
    let slot = plan.slot;
    let mut lines = vec![map_done_line(slot, map_done_at)];
    let fail = |cluster: ClusterId, message: String| Error::SlotFailure {
        slot: slot.0 as usize,
        cluster: Some(cluster),
        message,
    };

    let mut copied = Vec::new();
    for item in &plan.items {
        let cluster = item.cluster;
        lines.push(trace_line("phase_enter", slot, cluster, Stage::Copy, clock.micros()));
        let fetched = match fetch(cluster) {
            Ok(ok) => ok,
            Err(first) => fetch(cluster)
                .map_err(|e| fail(cluster, format!("fetch failed twice: {first}; {e}")))?,
        };
        lines.push(trace_line("phase_exit", slot, cluster, Stage::Copy, clock.micros()));
        copied.push((cluster, fetched));
    }
    let mut sorted = Vec::new();
    for (cluster, (pairs, bytes)) in copied {
        lines.push(trace_line("phase_enter", slot, cluster, Stage::Sort, clock.micros()));
        let groups =
            sort(cluster, pairs, bytes).map_err(|e| fail(cluster, format!("sort failed: {e}")))?;
        lines.push(trace_line("phase_exit", slot, cluster, Stage::Sort, clock.micros()));
        sorted.push((cluster, groups));
    }
    let mut outputs = Vec::new();
    for (cluster, groups) in sorted {
        lines.push(trace_line("phase_enter", slot, cluster, Stage::Run, clock.micros()));
        let pairs =
            reduce(cluster, groups).map_err(|e| fail(cluster, format!("reduce failed: {e}")))?;
        lines.push(trace_line("phase_exit", slot, cluster, Stage::Run, clock.micros()));
        outputs.push(ClusterOutput { cluster, pairs });
    }
    let report = if plan.items.is_empty() {
        DelayReport {
            map_done_at,
            first_sort_at: map_done_at,
            first_run_at: map_done_at,
            sort_delay: 0,
            run_delay: 0,
        }
    } else {
        measure_delays(&lines)?
    };
    Ok((outputs, report, lines))
}

fn parse_field(line: &str, prefix: &str) -> Option<u64> {
    line.split_whitespace()
        .find_map(|tok| tok.strip_prefix(prefix))
        .and_then(|v| v.parse().ok())
}

/// Compute the delay report from an event trace: sort delay is the time
/// from the Map barrier to the first sort entry, run delay likewise for
/// the first run entry.
pub fn measure_delays(lines: &[String]) -> Result<DelayReport> {
    let map_done_at = lines
        .iter()
        .find(|l| l.contains("event=map_done"))
        .and_then(|l| parse_field(l, "t="))
        .ok_or_else(|| Error::IncompleteTrace("map_done".into()))?;
    let first_entry = |stage: &str| -> Result<u64> {
        lines
            .iter()
            .filter(|l| l.contains("event=phase_enter") && l.contains(&format!("stage={stage}")))
            .filter_map(|l| parse_field(l, "t="))
            .min()
            .ok_or_else(|| Error::IncompleteTrace(format!("phase_enter stage={stage}")))
    };
    let first_sort_at = first_entry("sort")?;
    let first_run_at = first_entry("run")?;
    Ok(DelayReport {
        map_done_at,
        first_sort_at,
        first_run_at,
        sort_delay: first_sort_at.saturating_sub(map_done_at),
        run_delay: first_run_at.saturating_sub(map_done_at),
    })
}

/// Sort one cluster's pairs by key and group equal keys. In-memory when the
/// copied size fits the threshold, otherwise an external merge sort over
/// spill files in `spill_dir`. Both paths produce identical output.
pub fn sort_cluster(
    pairs: Pairs,
    copy_bytes: u64,
    memory_sort_threshold: u64,
    spill_dir: &Path,
) -> Result<Groups> {
    if copy_bytes <= memory_sort_threshold {
        let mut pairs = pairs;
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        return Ok(group_sorted(pairs));
    }
    external_sort(pairs, memory_sort_threshold, spill_dir)
}

fn group_sorted(pairs: Pairs) -> Groups {
    let mut groups: Groups = Vec::new();
    for (key, value) in pairs {
        match groups.last_mut() {
            Some((k, values)) if *k == key => values.push(value),
            _ => groups.push((key, vec![value])),
        }
    }
    groups
}

fn external_sort(pairs: Pairs, memory_sort_threshold: u64, spill_dir: &Path) -> Result<Groups> {
    std::fs::create_dir_all(spill_dir)?;
    // Cut the input into runs of at most a quarter threshold, stable-sort
    // each, and spill it.
    let run_budget = (memory_sort_threshold / 4).max(4096);
    let mut spills: Vec<PathBuf> = Vec::new();
    let mut run: Pairs = Vec::new();
    let mut run_bytes = 0u64;
    for pair in pairs {
        run_bytes += (pair.0.len() + pair.1.len() + 8) as u64;
        run.push(pair);
        if run_bytes >= run_budget {
            spills.push(spill_run(std::mem::take(&mut run), spill_dir, spills.len())?);
            run_bytes = 0;
        }
    }
    if !run.is_empty() {
        spills.push(spill_run(run, spill_dir, spills.len())?);
    }

    // K-way merge; ties between runs resolve to the earlier run so the
    // merged order equals the stable in-memory sort.
    let mut readers: Vec<SpillReader> = spills
        .iter()
        .map(|p| SpillReader::open(p))
        .collect::<Result<_>>()?;
    let mut heads: Vec<Option<(Vec<u8>, Vec<u8>)>> = readers
        .iter_mut()
        .map(|r| r.next_record())
        .collect::<Result<_>>()?;
    let mut merged: Pairs = Vec::new();
    loop {
        let next = heads
            .iter()
            .enumerate()
            .filter_map(|(i, h)| h.as_ref().map(|(k, _)| (k.clone(), i)))
            .min();
        let Some((_, idx)) = next else { break };
        let record = heads[idx].take().unwrap();
        heads[idx] = readers[idx].next_record()?;
        merged.push(record);
    }
    for path in &spills {
        let _ = std::fs::remove_file(path);
    }
    Ok(group_sorted(merged))
}

fn spill_run(mut run: Pairs, dir: &Path, seq: usize) -> Result<PathBuf> {
    run.sort_by(|a, b| a.0.cmp(&b.0));
    let path = dir.join(format!("spill-{seq:05}.run"));
    let mut w = BufWriter::new(File::create(&path)?);
    for (key, value) in &run {
        w.write_all(&(key.len() as u32).to_be_bytes())?;
        w.write_all(key)?;
        w.write_all(&(value.len() as u32).to_be_bytes())?;
        w.write_all(value)?;
    }
    w.flush()?;
    Ok(path)
}

struct SpillReader {
    reader: BufReader<File>,
}

impl SpillReader {
    fn open(path: &Path) -> Result<SpillReader> {
        Ok(SpillReader {
            reader: BufReader::new(File::open(path)?),
        })
    }

    fn next_record(&mut self) -> Result<Option<(Vec<u8>, Vec<u8>)>> {
        let mut len = [0u8; 4];
        match self.reader.read_exact(&mut len) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(e.into()),
        }
        let mut key = vec![0u8; u32::from_be_bytes(len) as usize];
        self.reader.read_exact(&mut key)?;
        self.reader.read_exact(&mut len)?;
        let mut value = vec![0u8; u32::from_be_bytes(len) as usize];
        self.reader.read_exact(&mut value)?;
        Ok(Some((key, value)))
    }
}
