//! Deterministic discrete-event core.
//!
//! Time is an unsigned 64-bit nanosecond count. Events are totally ordered by
//! `(time, seq)` where `seq` is the insertion counter, so two runs of the same
//! model pop exactly the same sequence.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use crate::error::SimError;

/// Simulated time or duration in nanoseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000_000)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    /// Seconds with nanosecond precision, e.g. `0.000028512`.
    pub fn to_seconds_string(self) -> String {
        format!("{}.{:09}", self.0 / 1_000_000_000, self.0 % 1_000_000_000)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_seconds_string())
    }
}

/// A scheduled occurrence.
#[derive(Debug, Clone)]
pub struct Event<P> {
    pub time: SimTime,
    pub seq: u64,
    pub payload: P,
}

struct Entry<P>(Event<P>);

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        (self.0.time, self.0.seq) == (other.0.time, other.0.seq)
    }
}

impl<P> Eq for Entry<P> {}

impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Entry<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.0.time, self.0.seq).cmp(&(other.0.time, other.0.seq))
    }
}

/// Priority queue plus simulation clock.
pub struct EventQueue<P> {
    heap: BinaryHeap<Reverse<Entry<P>>>,
    now: SimTime,
    next_seq: u64,
    popped: u64,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            now: SimTime::ZERO,
            next_seq: 0,
            popped: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Number of events popped so far.
    pub fn processed(&self) -> u64 {
        self.popped
    }

    /// Enqueues `payload` at `time`. Returns the assigned sequence number.
    pub fn schedule(&mut self, time: SimTime, payload: P) -> Result<u64, SimError> {
        if time < self.now {
            return Err(SimError::TimeTravel {
                now: self.now,
                requested: time,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Entry(Event { time, seq, payload })));
        Ok(seq)
    }

    /// Enqueues `payload` at `now + delay`.
    pub fn schedule_in(&mut self, delay: SimTime, payload: P) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Entry(Event {
            time: self.now + delay,
            seq,
            payload,
        })));
        seq
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|Reverse(e)| e.0.time)
    }

    /// Removes the earliest event and advances the clock to its time.
    pub fn pop(&mut self) -> Option<Event<P>> {
        let Reverse(Entry(ev)) = self.heap.pop()?;
        debug_assert!(ev.time >= self.now);
        self.now = ev.time;
        self.popped += 1;
        Some(ev)
    }
}

/// Counters collected over one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub packet_ins: u64,
    pub flow_mods: u64,
    pub packet_outs: u64,
    /// Data-link transmissions (one per frame copy per link).
    pub frames_sent: u64,
    /// Transmissions consumed by a switch or accepted by a host.
    pub frames_delivered: u64,
    /// Transmissions discarded: host address filter, Drop action, or undecodable payload.
    pub frames_dropped: u64,
    /// Replications of a frame to every port but the ingress.
    pub floods: u64,
    pub malformed: u64,
    /// Flow-mod removals that named an absent rule.
    pub remove_nonexistent: u64,
    pub events: u64,
}

/// Outcome of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunMetrics {
    pub setup_time: SimTime,
    pub first_event_time: SimTime,
    pub last_ack_time: SimTime,
    pub positive_acks: u64,
    pub nacks: u64,
    pub counters: Counters,
}

impl RunMetrics {
    pub fn new(first_event_time: SimTime, last_ack_time: SimTime, positive_acks: u64, nacks: u64, counters: Counters) -> Self {
        Self {
            setup_time: last_ack_time.saturating_sub(first_event_time),
            first_event_time,
            last_ack_time,
            positive_acks,
            nacks,
            counters,
        }
    }
}

/// A simulation model driven by [`run_until_quiescent`].
pub trait Model {
    type Payload;

    fn handle(&mut self, event: Event<Self::Payload>, queue: &mut EventQueue<Self::Payload>) -> Result<(), SimError>;

    /// Number of consumer queries that have not reached `Subscribed`.
    fn unfinished(&self) -> usize;

    fn metrics(&self, queue: &EventQueue<Self::Payload>) -> RunMetrics;
}

/// Pops events in `(time, seq)` order until the queue drains or the next
/// event lies beyond `limit`.
///
/// Fails with [`SimError::Timeout`] if the limit is hit or if the queue
/// drains while some consumer query is still unfinished.
pub fn run_until_quiescent<M: Model>(
    model: &mut M,
    queue: &mut EventQueue<M::Payload>,
    limit: SimTime,
) -> Result<RunMetrics, SimError> {
    while let Some(t) = queue.peek_time() {
        if t > limit {
            return Err(SimError::Timeout {
                limit,
                unfinished: model.unfinished(),
                pending_events: queue.len(),
            });
        }
        let ev = queue.pop().expect("peeked");
        model.handle(ev, queue)?;
    }
    let unfinished = model.unfinished();
    if unfinished > 0 {
        return Err(SimError::Timeout {
            limit,
            unfinished,
            pending_events: 0,
        });
    }
    Ok(model.metrics(queue))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_time_events_pop_in_insertion_order() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_micros(5), "a").unwrap();
        q.schedule(SimTime::from_micros(1), "b").unwrap();
        q.schedule(SimTime::from_micros(5), "c").unwrap();
        let order: Vec<_> = std::iter::from_fn(|| q.pop().map(|e| e.payload)).collect();
        assert_eq!(order, ["b", "a", "c"]);
    }

    #[test]
    fn scheduling_at_current_time_runs_after_queued_peers() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_micros(2), 1).unwrap();
        q.schedule(SimTime::from_micros(2), 2).unwrap();
        let first = q.pop().unwrap();
        assert_eq!(first.payload, 1);
        q.schedule(q.now(), 3).unwrap();
        assert_eq!(q.pop().unwrap().payload, 2);
        assert_eq!(q.pop().unwrap().payload, 3);
        assert!(q.is_empty());
    }

    #[test]
    fn past_events_are_rejected() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_micros(10), ()).unwrap();
        q.pop();
        let err = q.schedule(SimTime::from_micros(9), ()).unwrap_err();
        assert!(matches!(err, SimError::TimeTravel { .. }));
    }

    #[test]
    fn clock_never_decreases() {
        let mut q = EventQueue::new();
        for t in [7u64, 3, 9, 3, 1, 12] {
            q.schedule(SimTime::from_nanos(t), t).unwrap();
        }
        let mut last = SimTime::ZERO;
        while let Some(e) = q.pop() {
            assert!(e.time >= last);
            last = e.time;
        }
    }

    #[test]
    fn seconds_string_keeps_nanoseconds() {
        assert_eq!(SimTime::from_nanos(28_512).to_seconds_string(), "0.000028512");
        assert_eq!(SimTime::from_secs(2).to_seconds_string(), "2.000000000");
    }

    struct Countdown {
        left: u32,
        unfinished: usize,
    }

    impl Model for Countdown {
        type Payload = ();
        fn handle(&mut self, _: Event<()>, q: &mut EventQueue<()>) -> Result<(), SimError> {
            if self.left > 0 {
                self.left -= 1;
                q.schedule_in(SimTime::from_micros(1), ());
            }
            Ok(())
        }
        fn unfinished(&self) -> usize {
            self.unfinished
        }
        fn metrics(&self, q: &EventQueue<()>) -> RunMetrics {
            RunMetrics::new(SimTime::ZERO, q.now(), 0, 0, Counters::default())
        }
    }

    #[test]
    fn run_stops_when_queue_drains() {
        let mut m = Countdown { left: 4, unfinished: 0 };
        let mut q = EventQueue::new();
        q.schedule(SimTime::ZERO, ()).unwrap();
        let metrics = run_until_quiescent(&mut m, &mut q, SimTime::from_secs(1)).unwrap();
        assert_eq!(metrics.setup_time, SimTime::from_micros(4));
        assert!(q.is_empty());
    }

    #[test]
    fn run_times_out_past_limit() {
        let mut m = Countdown { left: 100, unfinished: 0 };
        let mut q = EventQueue::new();
        q.schedule(SimTime::ZERO, ()).unwrap();
        let err = run_until_quiescent(&mut m, &mut q, SimTime::from_micros(10)).unwrap_err();
        assert!(matches!(err, SimError::Timeout { .. }));
    }

    #[test]
    fn drained_queue_with_open_queries_is_a_timeout() {
        let mut m = Countdown { left: 0, unfinished: 2 };
        let mut q = EventQueue::new();
        q.schedule(SimTime::ZERO, ()).unwrap();
        let err = run_until_quiescent(&mut m, &mut q, SimTime::from_secs(1)).unwrap_err();
        assert!(matches!(err, SimError::Timeout { unfinished: 2, .. }));
    }
}
