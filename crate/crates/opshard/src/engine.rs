//! The single-process MapReduce runtime: wave-structured Map execution,
//! per-cluster bucket files, the statistics protocol, scheduling, and the
//! per-slot Reduce pipelines — with a strict barrier between the phases.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cluster::Clusterer;
use crate::comm::{
    self, broadcast_schedule, collect_statistics, ByteMeter, StatsMessage, StatsRegistry, Tracker,
};
use crate::error::{Error, Result};
use crate::metrics::MetricsBundle;
use crate::model::{self, ClusterId, JobConfig, KeyDist, Schedule, SlotId};
use crate::pipeline::{self, ClusterOutput, Pairs, TraceClock, DEFAULT_MEMORY_SORT_THRESHOLD};
use crate::sched;

/// One key-value record, both sides raw bytes.
pub type Record = (Vec<u8>, Vec<u8>);

/// User Map function: one input record in, intermediate pairs out.
pub type MapFn = Arc<dyn Fn(&[u8], &[u8]) -> Result<Vec<Record>> + Send + Sync>;

/// User Reduce function: one key and all its values in, output records out.
pub type ReduceFn = Arc<dyn Fn(&[u8], &[Vec<u8>]) -> Result<Vec<Record>> + Send + Sync>;

/// A complete job: user functions, input records, and configuration.
#[derive(Clone)]
pub struct JobSpec {
    pub map_fn: MapFn,
    pub reduce_fn: ReduceFn,
    pub input: Vec<Record>,
    pub config: JobConfig,
    pub clusterer: Clusterer,
    pub memory_sort_threshold: u64,
}

impl JobSpec {
    pub fn new(
        map_fn: MapFn,
        reduce_fn: ReduceFn,
        input: Vec<Record>,
        config: JobConfig,
    ) -> Result<JobSpec> {
        config.validate()?;
        let clusterer = Clusterer::default_hash(config.n_target)?;
        Ok(JobSpec {
            map_fn,
            reduce_fn,
            input,
            config,
            clusterer,
            memory_sort_threshold: DEFAULT_MEMORY_SORT_THRESHOLD,
        })
    }
}

pub const BUCKET_MAGIC: &[u8; 4] = b"OSB1";
pub const REDUCE_MAGIC: &[u8; 4] = b"OSR1";

/// A written bucket file: one Map task's records for one cluster.
#[derive(Debug, Clone)]
pub struct BucketFile {
    pub path: PathBuf,
    pub map_task_id: u32,
    pub cluster: ClusterId,
    pub record_count: u64,
}

fn write_records<W: Write>(w: &mut W, records: &[Record]) -> Result<()> {
    for (key, value) in records {
        w.write_all(&(key.len() as u32).to_be_bytes())?;
        w.write_all(key)?;
        w.write_all(&(value.len() as u32).to_be_bytes())?;
        w.write_all(value)?;
    }
    Ok(())
}

/// Write one bucket file: header `[OSB1][map_task_id][cluster_id][record_count]`
/// then length-prefixed records, all big-endian.
pub fn write_bucket(
    dir: &Path,
    map_task_id: u32,
    cluster: ClusterId,
    records: &[Record],
) -> Result<BucketFile> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("bucket-{map_task_id:05}-{:05}.osb", cluster.0));
    let mut w = BufWriter::new(File::create(&path)?);
    w.write_all(BUCKET_MAGIC)?;
    w.write_all(&map_task_id.to_be_bytes())?;
    w.write_all(&cluster.0.to_be_bytes())?;
    w.write_all(&(records.len() as u64).to_be_bytes())?;
    write_records(&mut w, records)?;
    w.flush()?;
    Ok(BucketFile {
        path,
        map_task_id,
        cluster,
        record_count: records.len() as u64,
    })
}

fn malformed(path: &Path, message: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn read_exact_or(path: &Path, r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| malformed(path, format!("truncated {what}")))
}

/// Read a bucket file back, validating magic and record count.
pub fn read_bucket(path: &Path) -> Result<(u32, ClusterId, Vec<Record>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact_or(path, &mut r, &mut magic, "header")?;
    if &magic != BUCKET_MAGIC {
        return Err(malformed(path, "bad magic, expected OSB1"));
    }
    let mut four = [0u8; 4];
    read_exact_or(path, &mut r, &mut four, "header")?;
    let map_task_id = u32::from_be_bytes(four);
    read_exact_or(path, &mut r, &mut four, "header")?;
    let cluster = ClusterId(u32::from_be_bytes(four));
    let mut eight = [0u8; 8];
    read_exact_or(path, &mut r, &mut eight, "header")?;
    let count = u64::from_be_bytes(eight);
    let mut records = Vec::with_capacity(count as usize);
    for _ in 0..count {
        read_exact_or(path, &mut r, &mut four, "record")?;
        let mut key = vec![0u8; u32::from_be_bytes(four) as usize];
        read_exact_or(path, &mut r, &mut key, "record")?;
        read_exact_or(path, &mut r, &mut four, "record")?;
        let mut value = vec![0u8; u32::from_be_bytes(four) as usize];
        read_exact_or(path, &mut r, &mut value, "record")?;
        records.push((key, value));
    }
    Ok((map_task_id, cluster, records))
}

/// Write one cluster's Reduce output: header
/// `[OSR1][slot_id][cluster_id][record_count]` then the same record format.
pub fn write_reduce_output(
    dir: &Path,
    slot: SlotId,
    cluster: ClusterId,
    records: &[Record],
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("cluster-{:05}.osr", cluster.0));
    let mut w = BufWriter::new(File::create(&path)?);
    w.write_all(REDUCE_MAGIC)?;
    w.write_all(&slot.0.to_be_bytes())?;
    w.write_all(&cluster.0.to_be_bytes())?;
    w.write_all(&(records.len() as u64).to_be_bytes())?;
    write_records(&mut w, records)?;
    w.flush()?;
    Ok(path)
}

/// Split input records into `M = w * map_slots` task inputs, sizes equal
/// within one record.
pub fn split_input(input: &[Record], map_slots: usize, w: usize) -> Result<Vec<Vec<Record>>> {
    if map_slots == 0 || w == 0 {
        return Err(Error::InvalidInput(
            "map_slots and w must be at least 1".into(),
        ));
    }
    let m_tasks = map_slots * w;
    let base = input.len() / m_tasks;
    let extra = input.len() % m_tasks;
    let mut tasks = Vec::with_capacity(m_tasks);
    let mut cursor = 0;
    for i in 0..m_tasks {
        let size = base + usize::from(i < extra);
        tasks.push(input[cursor..cursor + size].to_vec());
        cursor += size;
    }
    Ok(tasks)
}

/// Map-wave sizes: full waves of `map_slots` tasks, the remainder last.
pub fn wave_sizes(m_tasks: usize, map_slots: usize) -> Vec<usize> {
    let mut sizes = vec![map_slots; m_tasks / map_slots];
    if m_tasks % map_slots != 0 {
        sizes.push(m_tasks % map_slots);
    }
    sizes
}

/// Run one Map attempt: apply the map function to every record, bucket the
/// pairs by cluster, write one bucket file per non-empty cluster, and tally
/// the statistics message. Nothing is written if any record fails.
pub fn run_map_task(
    task_id: u32,
    attempt_id: u32,
    records: &[Record],
    map_fn: &MapFn,
    clusterer: &Clusterer,
    dir: &Path,
) -> Result<(Vec<BucketFile>, StatsMessage)> {
    let mut buckets: BTreeMap<ClusterId, Vec<Record>> = BTreeMap::new();
    for (key, value) in records {
        for pair in map_fn(key, value)? {
            let cluster = clusterer.cluster_of(&pair.0);
            buckets.entry(cluster).or_default().push(pair);
        }
    }
    let mut files = Vec::with_capacity(buckets.len());
    let mut counts = vec![0u64; clusterer.n_target()];
    for (cluster, records) in &buckets {
        counts[cluster.index()] += records.len() as u64;
        files.push(write_bucket(dir, task_id, *cluster, records)?);
    }
    let stats = StatsMessage {
        map_task_id: task_id,
        attempt_id,
        success: true,
        counts,
    };
    Ok((files, stats))
}

/// Everything a finished job returns.
pub struct JobOutput {
    /// Reduce results, one entry per non-empty cluster, ordered by cluster.
    pub outputs: Vec<ClusterOutput>,
    pub metrics: MetricsBundle,
    /// Merged per-slot event traces.
    pub trace: Vec<String>,
    /// Paths of the written Reduce output files.
    pub output_files: Vec<PathBuf>,
    /// Aggregated per-cluster distribution the scheduler saw.
    pub dist: KeyDist,
    /// The schedule the job ran under.
    pub schedule: Schedule,
}

struct MapPhase {
    attempts: Vec<StatsMessage>,
    buckets: Vec<BucketFile>,
    durations: Vec<f64>,
}

/// Map phase: a pool of `map_slots` workers drains the task queue. A failed
/// attempt reports failure statistics and retries once; a second failure
/// aborts the job.
fn run_map_phase(spec: &JobSpec, tasks: Vec<Vec<Record>>, out_dir: &Path) -> Result<MapPhase> {
    let m_tasks = tasks.len();
    let queue = Mutex::new(tasks.into_iter().enumerate().collect::<Vec<_>>());
    type TaskResult = (Vec<StatsMessage>, Vec<BucketFile>, f64);
    let done: Mutex<Vec<Option<Result<TaskResult>>>> = Mutex::new((0..m_tasks).map(|_| None).collect());

    std::thread::scope(|scope| {
        for _ in 0..spec.config.map_slots.min(m_tasks.max(1)) {
            scope.spawn(|| loop {
                let Some((task_id, records)) = queue.lock().unwrap().pop() else {
                    break;
                };
                let dir = out_dir.join(format!("map/task-{task_id:05}"));
                let started = Instant::now();
                let mut attempts = Vec::new();
                let result = (|| {
                    match run_map_task(
                        task_id as u32,
                        1,
                        &records,
                        &spec.map_fn,
                        &spec.clusterer,
                        &dir,
                    ) {
                        Ok((files, stats)) => {
                            attempts.push(stats);
                            Ok(files)
                        }
                        Err(first) => {
                            attempts.push(StatsMessage {
                                map_task_id: task_id as u32,
                                attempt_id: 1,
                                success: false,
                                counts: vec![0; spec.clusterer.n_target()],
                            });
                            log::warn!("map task {task_id} attempt 1 failed: {first}; retrying");
                            match run_map_task(
                                task_id as u32,
                                2,
                                &records,
                                &spec.map_fn,
                                &spec.clusterer,
                                &dir,
                            ) {
                                Ok((files, stats)) => {
                                    attempts.push(stats);
                                    Ok(files)
                                }
                                Err(second) => Err(Error::MapTaskFailed {
                                    task: task_id,
                                    message: format!("{first}; then {second}"),
                                }),
                            }
                        }
                    }
                })();
                let elapsed = started.elapsed().as_secs_f64();
                done.lock().unwrap()[task_id] =
                    Some(result.map(|files| (attempts, files, elapsed)));
            });
        }
    });

    let mut attempts = Vec::new();
    let mut buckets = Vec::new();
    let mut durations = Vec::with_capacity(m_tasks);
    for slot in done.into_inner().unwrap() {
        let (task_attempts, files, elapsed) = slot.expect("map task never ran")?;
        attempts.extend(task_attempts);
        buckets.extend(files);
        durations.push(elapsed);
    }
    Ok(MapPhase {
        attempts,
        buckets,
        durations,
    })
}

/// Run a job end to end. Phase order is strict: every Map task finishes,
/// statistics aggregate, the scheduler runs and its schedule is broadcast,
/// and only then do the Reduce slot pipelines start.
pub fn run_job(spec: &JobSpec, out_dir: &Path) -> Result<JobOutput> {
    spec.config.validate()?;
    let cfg = &spec.config;
    std::fs::create_dir_all(out_dir)?;
    let clock = TraceClock::new();

    let tasks = split_input(&spec.input, cfg.map_slots, cfg.w)?;
    let m_tasks = tasks.len();
    let map_phase = run_map_phase(spec, tasks, out_dir)?;
    let map_done_at = clock.micros();

    // Steps 2-3: attempts flow through the (single local) tracker to the
    // master's registry, which aggregates the global distribution.
    let slots: Vec<SlotId> = (1..=cfg.m as u32).map(SlotId).collect();
    let mut trackers = vec![Tracker::new(0, slots)];
    let mut registry = StatsRegistry::new(m_tasks, cfg.n_target);
    let mut meter = ByteMeter::default();
    collect_statistics(
        std::slice::from_ref(&map_phase.attempts),
        &mut trackers,
        &mut registry,
        &mut meter,
    )?;
    let dist = registry.aggregate()?;

    // Steps 4-6: solve and broadcast.
    let solved = sched::schedule_with(cfg.scheduler, &dist, cfg.m, cfg.eta)?;
    let views = broadcast_schedule(&solved.schedule, &trackers, &mut meter)?;

    // Index bucket files by cluster; paths sorted by task so fetch order
    // is deterministic.
    let mut by_cluster: BTreeMap<ClusterId, Vec<PathBuf>> = BTreeMap::new();
    for b in &map_phase.buckets {
        by_cluster.entry(b.cluster).or_default().push(b.path.clone());
    }
    for paths in by_cluster.values_mut() {
        paths.sort();
    }

    // Reduce phase: one independent pipeline per slot.
    type SlotResult = (Vec<ClusterOutput>, pipeline::DelayReport, Vec<String>, f64);
    let results: Vec<Result<SlotResult>> = std::thread::scope(|scope| {
        let handles: Vec<_> = views
            .iter()
            .map(|view| {
                let by_cluster = &by_cluster;
                let dist = &dist;
                let clock = &clock;
                let reduce_fn = &spec.reduce_fn;
                let slot = view.slot;
                let mut owned = view.owned.clone();
                owned.retain(|c| dist.load(*c) > 0);
                let spill_dir = out_dir.join(format!("spill/slot-{slot}"));
                let threshold = spec.memory_sort_threshold;
                scope.spawn(move || -> Result<SlotResult> {
                    let started = Instant::now();
                    let plan = pipeline::plan(&owned, dist, slot, threshold);
                    let fetch = |cluster: ClusterId| -> Result<(Pairs, u64)> {
                        let mut pairs: Pairs = Vec::new();
                        let mut bytes = 0u64;
                        for path in by_cluster.get(&cluster).map_or(&[][..], |v| v) {
                            let (_, file_cluster, records) = read_bucket(path)?;
                            if file_cluster != cluster {
                                return Err(malformed(path, "bucket for the wrong cluster"));
                            }
                            for (k, v) in records {
                                bytes += (k.len() + v.len() + 8) as u64;
                                pairs.push((k, v));
                            }
                        }
                        Ok((pairs, bytes))
                    };
                    let sort = |_: ClusterId, pairs: Pairs, bytes: u64| {
                        pipeline::sort_cluster(pairs, bytes, threshold, &spill_dir)
                    };
                    let reduce = |_: ClusterId, groups: pipeline::Groups| {
                        let mut out = Vec::new();
                        for (key, values) in groups {
                            out.extend(reduce_fn(&key, &values)?);
                        }
                        Ok(out)
                    };
                    let (outputs, report, trace) =
                        pipeline::execute(&plan, map_done_at, clock, fetch, sort, reduce)?;
                    Ok((outputs, report, trace, started.elapsed().as_secs_f64()))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("reduce slot panicked"))
            .collect()
    });

    let mut outputs: Vec<ClusterOutput> = Vec::new();
    let mut trace: Vec<String> = Vec::new();
    let mut sort_delays = Vec::new();
    let mut run_delays = Vec::new();
    let mut reduce_durations = Vec::new();
    for result in results {
        let (slot_outputs, report, slot_trace, elapsed) = result?;
        outputs.extend(slot_outputs);
        trace.extend(slot_trace);
        sort_delays.push(report.sort_delay as f64 / 1e6);
        run_delays.push(report.run_delay as f64 / 1e6);
        reduce_durations.push(elapsed);
    }
    outputs.sort_by_key(|o| o.cluster);

    let reduce_dir = out_dir.join("reduce");
    let mut output_files = Vec::with_capacity(outputs.len());
    for out in &outputs {
        let slot = solved.schedule.slot_of(out.cluster);
        output_files.push(write_reduce_output(&reduce_dir, slot, out.cluster, &out.pairs)?);
    }

    let loads = model::slot_loads(&dist, &solved.schedule)?;
    let bound = comm::network_cost_estimate(
        m_tasks as u64,
        cfg.n_target as u64,
        trackers.len() as u64,
        cfg.m as u64,
    );
    let metrics = MetricsBundle {
        scheduler: cfg.scheduler,
        slot_loads: loads.loads().to_vec(),
        max_load: solved.max_load,
        ideal: solved.ideal,
        ratio: solved.ratio,
        map_durations: map_phase.durations,
        reduce_durations,
        sort_delays,
        run_delays,
        solver_time: solved.solver_time.as_secs_f64(),
        collect_bytes: meter.collect_payload,
        broadcast_bytes: meter.broadcast_payload,
        collect_bound: bound.collect_bound,
        broadcast_bound: bound.broadcast_bound,
    };
    trace.sort_by_key(|line| {
        line.split_whitespace()
            .find_map(|tok| tok.strip_prefix("t="))
            .and_then(|v| v.parse::<u64>().ok())
            .unwrap_or(0)
    });
    Ok(JobOutput {
        outputs,
        metrics,
        trace,
        output_files,
        dist,
        schedule: solved.schedule,
    })
}

/// Word-count Map function: split the value on ASCII whitespace, emit
/// `(word, "1")` per occurrence.
pub fn wordcount_map() -> MapFn {
    Arc::new(|_key, value| {
        let text = String::from_utf8_lossy(value);
        Ok(text
            .split_ascii_whitespace()
            .map(|w| (w.as_bytes().to_vec(), b"1".to_vec()))
            .collect())
    })
}

/// Word-count Reduce function: emit `(word, decimal count)`.
pub fn wordcount_reduce() -> ReduceFn {
    Arc::new(|key, values| {
        Ok(vec![(
            key.to_vec(),
            values.len().to_string().into_bytes(),
        )])
    })
}

/// Identity Map function: pass the input pair through.
pub fn identity_map() -> MapFn {
    Arc::new(|key, value| Ok(vec![(key.to_vec(), value.to_vec())]))
}

/// Counting Reduce function: `(key, number of values)`.
pub fn count_reduce() -> ReduceFn {
    wordcount_reduce()
}

/// Inverted-index Map function: treat the input key as a document id and
/// the value as its text, emit `(word, doc_id)` per occurrence.
pub fn inverted_index_map() -> MapFn {
    Arc::new(|key, value| {
        let text = String::from_utf8_lossy(value);
        Ok(text
            .split_ascii_whitespace()
            .map(|w| (w.as_bytes().to_vec(), key.to_vec()))
            .collect())
    })
}

/// Inverted-index Reduce function: emit `(word, sorted deduplicated
/// comma-joined doc ids)`.
pub fn inverted_index_reduce() -> ReduceFn {
    Arc::new(|key, values| {
        let mut docs: Vec<&[u8]> = values.iter().map(Vec::as_slice).collect();
        docs.sort_unstable();
        docs.dedup();
        let joined = docs.join(&b","[..]);
        Ok(vec![(key.to_vec(), joined)])
    })
}

/// Synthetic input generators; deterministic given the seed.
#[derive(Debug, Clone)]
pub struct WorkloadGen {
    pub kind: WorkloadKind,
    /// Total records to generate.
    pub pairs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub enum WorkloadKind {
    /// Key ranks drawn with probability proportional to `rank^-s`.
    Zipf { s: f64, keys: usize },
    /// Key ranks drawn uniformly.
    Uniform { keys: usize },
    /// Lines of pseudo-words for word-count style jobs.
    WordCorpus { words_per_line: usize },
}

fn key_bytes(rank: usize) -> Vec<u8> {
    format!("k{rank:08}").into_bytes()
}

/// Generate input records. Byte-identical for equal generators.
pub fn gen_workload(g: &WorkloadGen) -> Result<Vec<Record>> {
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    match &g.kind {
        WorkloadKind::Zipf { s, keys } => {
            if !(*s > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "zipf exponent must be positive, got {s}"
                )));
            }
            if *keys == 0 {
                return Err(Error::InvalidInput("zipf needs at least one key".into()));
            }
            // Inverse-CDF sampling over the cumulative rank weights.
            let mut cumulative = Vec::with_capacity(*keys);
            let mut total = 0.0f64;
            for rank in 1..=*keys {
                total += (rank as f64).powf(-s);
                cumulative.push(total);
            }
            let records = (0..g.pairs)
                .map(|_| {
                    let u: f64 = rng.gen_range(0.0..total);
                    let idx = cumulative.partition_point(|&c| c <= u);
                    (key_bytes(idx + 1), b"1".to_vec())
                })
                .collect();
            Ok(records)
        }
        WorkloadKind::Uniform { keys } => {
            if *keys == 0 {
                return Err(Error::InvalidInput("uniform needs at least one key".into()));
            }
            Ok((0..g.pairs)
                .map(|_| (key_bytes(rng.gen_range(1..=*keys)), b"1".to_vec()))
                .collect())
        }
        WorkloadKind::WordCorpus { words_per_line } => {
            if *words_per_line == 0 {
                return Err(Error::InvalidInput(
                    "word corpus needs at least one word per line".into(),
                ));
            }
            const ONSETS: [&str; 8] = ["b", "d", "f", "k", "l", "m", "s", "t"];
            const VOWELS: [&str; 4] = ["a", "e", "i", "o"];
            let vocab: Vec<String> = ONSETS
                .iter()
                .flat_map(|a| {
                    VOWELS.iter().flat_map(move |v| {
                        ONSETS.iter().map(move |b| format!("{a}{v}{b}a"))
                    })
                })
                .collect();
            let mut records = Vec::new();
            let mut written = 0usize;
            let mut line_no = 0usize;
            while written < g.pairs {
                let count = (*words_per_line).min(g.pairs - written);
                let line: Vec<&str> = (0..count)
                    .map(|_| vocab[rng.gen_range(0..vocab.len())].as_str())
                    .collect();
                records.push((
                    format!("line-{line_no:06}").into_bytes(),
                    line.join(" ").into_bytes(),
                ));
                written += count;
                line_no += 1;
            }
            Ok(records)
        }
    }
}
