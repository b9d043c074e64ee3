//! Statistics collection and schedule broadcast.
//!
//! Map workers emit one per-task count vector to their tracker, trackers
//! batch and forward to the master, the master aggregates into the key
//! distribution and broadcasts the schedule back through the trackers to
//! every Reduce slot. Transport is in-process: messages move as encoded
//! byte frames through a byte-counting meter, not real sockets.
//!
//! Wire format (big-endian):
//! `StatsMessage  = [task_id: 4][attempt: 4][success: 1][n: 4][n x 8-byte counts]`
//! `ScheduleBroadcast = [n: 4][n x 4-byte slot ids]`
//!
//! The meter's "payload" figures count the statistics vectors (8 bytes per
//! count) and schedule vectors (4 bytes per entry) per hop, which is the
//! quantity the `4n(4M+t+r)` analytic bound describes. Frame headers are
//! accumulated separately.

use std::collections::BTreeMap;

use crate::cluster::Clusterer;
use crate::error::{Error, Result};
use crate::model::{ClusterId, KeyDist, Schedule, SlotId};

/// One Map task attempt's per-cluster pair counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatsMessage {
    /// Map task id in `1..=M`.
    pub map_task_id: u32,
    pub attempt_id: u32,
    pub success: bool,
    /// `counts[j]` = pairs this attempt produced for cluster `j+1`.
    pub counts: Vec<u64>,
}

impl StatsMessage {
    pub fn n(&self) -> usize {
        self.counts.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(13 + 8 * self.counts.len());
        buf.extend_from_slice(&self.map_task_id.to_be_bytes());
        buf.extend_from_slice(&self.attempt_id.to_be_bytes());
        buf.push(self.success as u8);
        buf.extend_from_slice(&(self.counts.len() as u32).to_be_bytes());
        for c in &self.counts {
            buf.extend_from_slice(&c.to_be_bytes());
        }
        buf
    }

    pub fn decode(buf: &[u8]) -> Result<StatsMessage> {
        let err = |msg: &str| Error::Protocol(format!("stats frame: {msg}"));
        if buf.len() < 13 {
            return Err(err("truncated header"));
        }
        let map_task_id = u32::from_be_bytes(buf[0..4].try_into().unwrap());
        let attempt_id = u32::from_be_bytes(buf[4..8].try_into().unwrap());
        let success = match buf[8] {
            0 => false,
            1 => true,
            b => return Err(err(&format!("bad success byte {b}"))),
        };
        let n = u32::from_be_bytes(buf[9..13].try_into().unwrap()) as usize;
        if buf.len() != 13 + 8 * n {
            return Err(err("length does not match count"));
        }
        let counts = buf[13..]
            .chunks_exact(8)
            .map(|c| u64::from_be_bytes(c.try_into().unwrap()))
            .collect();
        Ok(StatsMessage {
            map_task_id,
            attempt_id,
            success,
            counts,
        })
    }

    /// Payload bytes of the count vector: 8 bytes per cluster.
    pub fn payload_bytes(&self) -> u64 {
        8 * self.counts.len() as u64
    }

    pub fn frame_bytes(&self) -> u64 {
        13 + self.payload_bytes()
    }
}

/// Tally one Map attempt's emitted pairs into a stats message.
///
/// Each element of `emitted_keys` is one intermediate pair's key; the vector
/// entry for its cluster is incremented.
pub fn emit_stats<'a, I>(
    map_task_id: u32,
    attempt_id: u32,
    success: bool,
    emitted_keys: I,
    clusterer: &Clusterer,
) -> StatsMessage
where
    I: IntoIterator<Item = &'a [u8]>,
{
    let mut counts = vec![0u64; clusterer.n_target()];
    for key in emitted_keys {
        counts[clusterer.cluster_of(key).index()] += 1;
    }
    StatsMessage {
        map_task_id,
        attempt_id,
        success,
        counts,
    }
}

/// Same tally when the caller already knows each pair's cluster.
pub fn emit_stats_from_clusters<I>(
    map_task_id: u32,
    attempt_id: u32,
    success: bool,
    clusters: I,
    n: usize,
) -> StatsMessage
where
    I: IntoIterator<Item = ClusterId>,
{
    let mut counts = vec![0u64; n];
    for c in clusters {
        counts[c.index()] += 1;
    }
    StatsMessage {
        map_task_id,
        attempt_id,
        success,
        counts,
    }
}

/// Byte accounting for one protocol run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ByteMeter {
    /// Count-vector bytes moved while collecting statistics (both hops).
    pub collect_payload: u64,
    /// Schedule-vector bytes moved while broadcasting (both hops).
    pub broadcast_payload: u64,
    /// Frame header bytes, all hops.
    pub frame_overhead: u64,
}

impl ByteMeter {
    pub fn total_payload(&self) -> u64 {
        self.collect_payload + self.broadcast_payload
    }
}

/// Analytic upper bounds on the protocol's network flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkCost {
    pub collect_bound: u64,
    pub broadcast_bound: u64,
    pub total_bound: u64,
}

/// Bounds for `M` Map tasks, `n` clusters, `t` trackers and `r` Reduce
/// tasks: collect <= 16Mn, broadcast = 4n(t+r), total <= 4n(4M+t+r).
pub fn network_cost_estimate(m_tasks: u64, n: u64, t: u64, r: u64) -> NetworkCost {
    NetworkCost {
        collect_bound: 16 * m_tasks * n,
        broadcast_bound: 4 * n * (t + r),
        total_bound: 4 * n * (4 * m_tasks + t + r),
    }
}

/// What a tracker does with one attempt's statistics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForwardDecision {
    Buffered,
    Discarded,
}

/// Per-node coordinator: buffers successful attempts' statistics and
/// forwards them to the master in one combined transmission per flush.
#[derive(Debug)]
pub struct Tracker {
    pub node: usize,
    /// Reduce slots hosted on this node.
    pub reduce_slots: Vec<SlotId>,
    /// Test hook: an unreachable tracker aborts the broadcast.
    pub reachable: bool,
    buffer: Vec<Vec<u8>>,
}

impl Tracker {
    pub fn new(node: usize, reduce_slots: Vec<SlotId>) -> Tracker {
        Tracker {
            node,
            reduce_slots,
            reachable: true,
            buffer: Vec::new(),
        }
    }

    /// Step 2 of the protocol plus the dedup rule: failed attempts are
    /// discarded here and never reach the master.
    pub fn forward(&mut self, msg: &StatsMessage, meter: &mut ByteMeter) -> ForwardDecision {
        // The worker -> tracker hop happens regardless of outcome.
        let frame = msg.encode();
        meter.collect_payload += msg.payload_bytes();
        meter.frame_overhead += frame.len() as u64 - msg.payload_bytes();
        if !msg.success {
            return ForwardDecision::Discarded;
        }
        self.buffer.push(frame);
        ForwardDecision::Buffered
    }

    /// One combined tracker -> master transmission of everything buffered.
    pub fn flush(&mut self) -> Vec<Vec<u8>> {
        std::mem::take(&mut self.buffer)
    }
}

/// The master's per-task statistics store, keyed by Map task id.
#[derive(Debug, Clone)]
pub struct StatsRegistry {
    by_task: BTreeMap<u32, Vec<u64>>,
    expected: usize,
    n: usize,
}

impl StatsRegistry {
    pub fn new(expected_tasks: usize, n: usize) -> StatsRegistry {
        StatsRegistry {
            by_task: BTreeMap::new(),
            expected: expected_tasks,
            n,
        }
    }

    pub fn len(&self) -> usize {
        self.by_task.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_task.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.by_task.len() == self.expected
    }

    pub fn expected(&self) -> usize {
        self.expected
    }

    /// Ingest one successful attempt. A second successful attempt of the
    /// same task replaces the entry; two successful attempts that disagree
    /// are a consistency error since Map is deterministic.
    pub fn ingest(&mut self, msg: &StatsMessage) -> Result<()> {
        if !msg.success {
            return Err(Error::Protocol(format!(
                "master received failed attempt of task {}",
                msg.map_task_id
            )));
        }
        if msg.counts.len() != self.n {
            return Err(Error::Protocol(format!(
                "task {} sent {} counts, expected {}",
                msg.map_task_id,
                msg.counts.len(),
                self.n
            )));
        }
        if let Some(existing) = self.by_task.get(&msg.map_task_id) {
            if *existing != msg.counts {
                return Err(Error::Protocol(format!(
                    "task {} attempts disagree on statistics",
                    msg.map_task_id
                )));
            }
        }
        self.by_task.insert(msg.map_task_id, msg.counts.clone());
        Ok(())
    }

    /// `K = sum over tasks of K^(i)`, element-wise. Requires completeness.
    pub fn aggregate(&self) -> Result<KeyDist> {
        if !self.is_complete() {
            return Err(Error::NotReady {
                have: self.by_task.len(),
                expected: self.expected,
            });
        }
        let mut total = vec![0u64; self.n];
        for counts in self.by_task.values() {
            for (acc, &c) in total.iter_mut().zip(counts) {
                *acc = acc.checked_add(c).ok_or(Error::CountOverflow)?;
            }
        }
        Ok(KeyDist::new(total))
    }
}

/// Encode a schedule for broadcast: `[n: 4][n x 4-byte slot ids]`.
pub fn encode_schedule(sched: &Schedule) -> Vec<u8> {
    let mut buf = Vec::with_capacity(4 + 4 * sched.n());
    buf.extend_from_slice(&(sched.n() as u32).to_be_bytes());
    for s in sched.assignment() {
        buf.extend_from_slice(&(s.0 as i32).to_be_bytes());
    }
    buf
}

pub fn decode_schedule(buf: &[u8], m: usize) -> Result<Schedule> {
    let err = |msg: &str| Error::Protocol(format!("schedule frame: {msg}"));
    if buf.len() < 4 {
        return Err(err("truncated header"));
    }
    let n = u32::from_be_bytes(buf[0..4].try_into().unwrap()) as usize;
    if buf.len() != 4 + 4 * n {
        return Err(err("length does not match count"));
    }
    let mut assignment = Vec::with_capacity(n);
    for chunk in buf[4..].chunks_exact(4) {
        let v = i32::from_be_bytes(chunk.try_into().unwrap());
        if v < 1 {
            return Err(err(&format!("slot id {v} out of range")));
        }
        assignment.push(SlotId(v as u32));
    }
    Schedule::new(assignment, m)
}

/// What one Reduce slot sees after the broadcast.
#[derive(Debug, Clone)]
pub struct SlotView {
    pub slot: SlotId,
    pub schedule: Schedule,
    pub owned: Vec<ClusterId>,
}

/// Steps 4-6: master -> every tracker -> every hosted Reduce slot. Any
/// unreachable tracker aborts before a single slot is served, so the Reduce
/// phase never starts partially.
pub fn broadcast_schedule(
    sched: &Schedule,
    trackers: &[Tracker],
    meter: &mut ByteMeter,
) -> Result<Vec<SlotView>> {
    if let Some(t) = trackers.iter().find(|t| !t.reachable) {
        return Err(Error::Undeliverable(t.node));
    }
    let frame = encode_schedule(sched);
    let payload = 4 * sched.n() as u64;
    let mut views = Vec::new();
    for tracker in trackers {
        // master -> tracker
        meter.broadcast_payload += payload;
        meter.frame_overhead += frame.len() as u64 - payload;
        for &slot in &tracker.reduce_slots {
            // tracker -> reduce task
            meter.broadcast_payload += payload;
            meter.frame_overhead += frame.len() as u64 - payload;
            let observed = decode_schedule(&frame, sched.m())?;
            let owned = observed.owned_clusters(slot);
            views.push(SlotView {
                slot,
                schedule: observed,
                owned,
            });
        }
    }
    Ok(views)
}

/// Full collect-and-aggregate pass: every attempt goes through its tracker,
/// trackers flush combined batches to the master, the master aggregates.
///
/// `attempts_by_node[i]` are the attempts produced on tracker `i`'s node.
pub fn collect_statistics(
    attempts_by_node: &[Vec<StatsMessage>],
    trackers: &mut [Tracker],
    registry: &mut StatsRegistry,
    meter: &mut ByteMeter,
) -> Result<()> {
    assert_eq!(attempts_by_node.len(), trackers.len());
    for (tracker, attempts) in trackers.iter_mut().zip(attempts_by_node) {
        for msg in attempts {
            tracker.forward(msg, meter);
        }
        for frame in tracker.flush() {
            let msg = StatsMessage::decode(&frame)?;
            meter.collect_payload += msg.payload_bytes();
            meter.frame_overhead += frame.len() as u64 - msg.payload_bytes();
            registry.ingest(&msg)?;
        }
    }
    Ok(())
}
