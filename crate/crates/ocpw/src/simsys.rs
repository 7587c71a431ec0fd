//! Discrete-event simulation of the four write methods over predicted (or
//! supplied) per-task times. Scales to thousands of ranks in memory, and
//! doubles as the exact oracle for the scheduler's pipeline recurrence:
//! for a single rank under method 3 the event-driven makespan equals
//! `time_of_queue` bit for bit.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use crate::error::{Error, Result};
use crate::scheduler::{optimize_order, FieldTask};
use crate::Method;

/// Task times for the simulator. `raw_write_time` is what writing the
/// partition uncompressed would cost; it only matters for method 1 and
/// defaults to `write_time` when a workload file does not carry it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimTask {
    pub field_index: usize,
    pub compress_time: f64,
    pub write_time: f64,
    pub raw_write_time: f64,
}

impl SimTask {
    pub fn new(field_index: usize, compress_time: f64, write_time: f64, raw_write_time: f64) -> Result<Self> {
        for (name, v) in [("P_c", compress_time), ("P_w", write_time), ("P_w_raw", raw_write_time)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(SimTask { field_index, compress_time, write_time, raw_write_time })
    }

    fn as_field_task(&self) -> FieldTask {
        FieldTask {
            field_index: self.field_index,
            compress_time: self.compress_time,
            write_time: self.write_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimWorkload {
    /// One task list per rank.
    pub ranks: Vec<Vec<SimTask>>,
    /// Constant charged per collective event (barrier or gather).
    pub sync_cost: f64,
}

impl SimWorkload {
    pub fn new(ranks: Vec<Vec<SimTask>>, sync_cost: f64) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::invalid("workload needs at least one rank"));
        }
        if !(sync_cost >= 0.0 && sync_cost.is_finite()) {
            return Err(Error::invalid(format!("sync cost must be non-negative, got {sync_cost}")));
        }
        Ok(SimWorkload { ranks, sync_cost })
    }

    pub fn rank_count(&self) -> usize {
        self.ranks.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Sync,
    Compress,
    Write,
    Overflow,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Sync => "sync",
            EventKind::Compress => "compress",
            EventKind::Write => "write",
            EventKind::Overflow => "overflow",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub rank: usize,
    pub kind: EventKind,
    /// Field index for compress/write events.
    pub task: Option<usize>,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub events: Vec<SimEvent>,
    pub makespan: f64,
}

impl Timeline {
    /// `rank,kind,task,start,end` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,kind,task,start,end\n");
        for e in &self.events {
            let task = e.task.map(|t| t.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{}\n", e.rank, e.kind.name(), task, e.start, e.end));
        }
        out
    }
}

/// Simulate one method over the workload.
pub fn simulate(workload: &SimWorkload, method: Method) -> Timeline {
    match method {
        Method::RawCollective => simulate_collective(workload, false),
        Method::CompressCollective => simulate_collective(workload, true),
        Method::Overlap => simulate_overlapped(workload, false),
        Method::OverlapReorder => simulate_overlapped(workload, true),
    }
}

/// Methods 1 and 2. Writes happen field by field as collective events:
/// within one event every rank writes concurrently at its own speed and
/// the event completes with its slowest rank. Method 2 first runs all
/// compressions to a global barrier.
fn simulate_collective(workload: &SimWorkload, compressed: bool) -> Timeline {
    let mut events = Vec::new();
    let mut cursor = 0.0f64;

    if compressed {
        let mut slowest = 0.0f64;
        for (rank, tasks) in workload.ranks.iter().enumerate() {
            let mut t = 0.0f64;
            for task in tasks {
                let end = t + task.compress_time;
                events.push(SimEvent {
                    rank,
                    kind: EventKind::Compress,
                    task: Some(task.field_index),
                    start: t,
                    end,
                });
                t = end;
            }
            slowest = slowest.max(t);
        }
        cursor = slowest;
    }

    let field_count = workload.ranks.iter().map(|t| t.len()).max().unwrap_or(0);
    for field_pos in 0..field_count {
        // Offset exchange / collective coordination for this field.
        if workload.sync_cost > 0.0 {
            for rank in 0..workload.rank_count() {
                events.push(SimEvent {
                    rank,
                    kind: EventKind::Sync,
                    task: None,
                    start: cursor,
                    end: cursor + workload.sync_cost,
                });
            }
        }
        let start = cursor + workload.sync_cost;
        let mut slowest = start;
        for (rank, tasks) in workload.ranks.iter().enumerate() {
            if let Some(task) = tasks.get(field_pos) {
                let cost = if compressed { task.write_time } else { task.raw_write_time };
                let end = start + cost;
                events.push(SimEvent {
                    rank,
                    kind: EventKind::Write,
                    task: Some(task.field_index),
                    start,
                    end,
                });
                slowest = slowest.max(end);
            }
        }
        cursor = slowest;
    }

    Timeline { makespan: cursor, events }
}

/// Methods 3 and 4: per-rank one-compressor/one-writer pipelines, run by
/// an event heap. Ranks are independent after the initial estimate
/// exchange (one sync event).
fn simulate_overlapped(workload: &SimWorkload, reorder: bool) -> Timeline {
    #[derive(Debug, Clone, Copy, PartialEq)]
    enum Pending {
        CompressDone { rank: usize, pos: usize },
        WriteDone { rank: usize },
    }

    let ordered: Vec<Vec<SimTask>> = workload
        .ranks
        .iter()
        .map(|tasks| {
            if reorder {
                let field_tasks: Vec<FieldTask> = tasks.iter().map(SimTask::as_field_task).collect();
                let queue = optimize_order(&field_tasks);
                queue
                    .order
                    .iter()
                    .map(|&fi| *tasks.iter().find(|t| t.field_index == fi).expect("permutation"))
                    .collect()
            } else {
                tasks.clone()
            }
        })
        .collect();

    let mut events = Vec::new();
    let start_at = workload.sync_cost;
    if workload.sync_cost > 0.0 {
        for rank in 0..ordered.len() {
            events.push(SimEvent { rank, kind: EventKind::Sync, task: None, start: 0.0, end: start_at });
        }
    }

    struct RankState {
        next_to_compress: usize,
        writer_queue: VecDeque<usize>,
        writer_busy: bool,
    }
    let mut states: Vec<RankState> = ordered
        .iter()
        .map(|_| RankState { next_to_compress: 0, writer_queue: VecDeque::new(), writer_busy: false })
        .collect();

    // Min-heap on (time, seq); the sequence number keeps ordering total
    // and deterministic.
    let mut heap: BinaryHeap<Reverse<(OrderedTime, u64, usize)>> = BinaryHeap::new();
    let mut pendings: Vec<Pending> = Vec::new();
    let mut seq = 0u64;
    let mut push = |heap: &mut BinaryHeap<_>, pendings: &mut Vec<Pending>, t: f64, p: Pending| {
        pendings.push(p);
        heap.push(Reverse((OrderedTime(t), seq, pendings.len() - 1)));
        seq += 1;
    };

    for (rank, tasks) in ordered.iter().enumerate() {
        if let Some(task) = tasks.first() {
            let end = start_at + task.compress_time;
            events.push(SimEvent {
                rank,
                kind: EventKind::Compress,
                task: Some(task.field_index),
                start: start_at,
                end,
            });
            push(&mut heap, &mut pendings, end, Pending::CompressDone { rank, pos: 0 });
        }
    }

    let mut makespan = start_at;
    while let Some(Reverse((OrderedTime(now), _, idx))) = heap.pop() {
        makespan = makespan.max(now);
        match pendings[idx] {
            Pending::CompressDone { rank, pos } => {
                let state = &mut states[rank];
                state.writer_queue.push_back(pos);
                if !state.writer_busy {
                    let next = state.writer_queue.pop_front().expect("just pushed");
                    state.writer_busy = true;
                    let task = &ordered[rank][next];
                    let end = now + task.write_time;
                    events.push(SimEvent {
                        rank,
                        kind: EventKind::Write,
                        task: Some(task.field_index),
                        start: now,
                        end,
                    });
                    push(&mut heap, &mut pendings, end, Pending::WriteDone { rank });
                }
                let next_pos = pos + 1;
                if next_pos < ordered[rank].len() {
                    let task = &ordered[rank][next_pos];
                    let end = now + task.compress_time;
                    events.push(SimEvent {
                        rank,
                        kind: EventKind::Compress,
                        task: Some(task.field_index),
                        start: now,
                        end,
                    });
                    states[rank].next_to_compress = next_pos;
                    push(&mut heap, &mut pendings, end, Pending::CompressDone { rank, pos: next_pos });
                }
            }
            Pending::WriteDone { rank } => {
                let state = &mut states[rank];
                if let Some(next) = state.writer_queue.pop_front() {
                    let task = &ordered[rank][next];
                    let end = now + task.write_time;
                    events.push(SimEvent {
                        rank,
                        kind: EventKind::Write,
                        task: Some(task.field_index),
                        start: now,
                        end,
                    });
                    push(&mut heap, &mut pendings, end, Pending::WriteDone { rank });
                } else {
                    state.writer_busy = false;
                }
            }
        }
    }

    Timeline { makespan, events }
}

/// Finite f64 with a total order for the event heap.
#[derive(Debug, Clone, Copy, PartialEq)]
struct OrderedTime(f64);

impl Eq for OrderedTime {}

impl PartialOrd for OrderedTime {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderedTime {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodComparison {
    /// Makespans indexed by method (1-based index - 1).
    pub makespans: [f64; 4],
}

impl MethodComparison {
    pub fn makespan(&self, method: Method) -> f64 {
        self.makespans[method.index() as usize - 1]
    }

    pub fn speedup(&self, fast: Method, over: Method) -> f64 {
        self.makespan(over) / self.makespan(fast)
    }

    /// `method,makespan,speedup_vs_1,speedup_vs_2,speedup_vs_3` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,makespan,speedup_vs_1,speedup_vs_2,speedup_vs_3\n");
        for m in Method::ALL {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                m.index(),
                self.makespan(m),
                self.speedup(m, Method::RawCollective),
                self.speedup(m, Method::CompressCollective),
                self.speedup(m, Method::Overlap),
            ));
        }
        out
    }
}

/// Run all four methods over the same workload.
pub fn compare_methods(workload: &SimWorkload) -> MethodComparison {
    let mut makespans = [0.0f64; 4];
    for m in Method::ALL {
        makespans[m.index() as usize - 1] = simulate(workload, m).makespan;
    }
    MethodComparison { makespans }
}

/// Parse workload CSV: `rank,field,P_c,P_w[,P_w_raw]` per line, or the
/// single-rank shorthand `field,P_c,P_w`. A header line is skipped.
pub fn parse_workload_csv(text: &str, sync_cost: f64) -> Result<SimWorkload> {
    let mut per_rank: std::collections::BTreeMap<usize, Vec<SimTask>> = std::collections::BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if lineno == 0 && fields.iter().any(|f| f.parse::<f64>().is_err()) {
            continue; // header
        }
        let bad = |e: String| Error::invalid(format!("workload line {}: {e}", lineno + 1));
        let parse_f = |s: &str| s.parse::<f64>().map_err(|e| bad(e.to_string()));
        let parse_u = |s: &str| s.parse::<usize>().map_err(|e| bad(e.to_string()));
        let (rank, field, p_c, p_w, p_raw) = match fields.len() {
            3 => (0, parse_u(fields[0])?, parse_f(fields[1])?, parse_f(fields[2])?, None),
            4 => (
                parse_u(fields[0])?,
                parse_u(fields[1])?,
                parse_f(fields[2])?,
                parse_f(fields[3])?,
                None,
            ),
            5 => (
                parse_u(fields[0])?,
                parse_u(fields[1])?,
                parse_f(fields[2])?,
                parse_f(fields[3])?,
                Some(parse_f(fields[4])?),
            ),
            other => {
                return Err(bad(format!("expected 3, 4 or 5 comma-separated values, got {other}")))
            }
        };
        let raw = p_raw.unwrap_or(p_w);
        per_rank.entry(rank).or_default().push(SimTask::new(field, p_c, p_w, raw)?);
    }
    if per_rank.is_empty() {
        return Err(Error::invalid("workload is empty"));
    }
    let max_rank = *per_rank.keys().last().unwrap();
    let mut ranks = vec![Vec::new(); max_rank + 1];
    for (rank, tasks) in per_rank {
        ranks[rank] = tasks;
    }
    SimWorkload::new(ranks, sync_cost)
}
