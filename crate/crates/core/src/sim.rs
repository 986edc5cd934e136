//! Deterministic discrete-event engine.
//!
//! The clock is virtual time in seconds. Events are ordered by `(time, seq)`
//! where `seq` is the insertion counter, so simultaneous events dispatch in
//! the order they were scheduled.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

/// Virtual time in seconds.
pub type SimTime = f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("event at t={time} scheduled in the past (clock is {now})")]
    ScheduleInPast { time: SimTime, now: SimTime },
    #[error("event time {0} is not a finite number")]
    NonFiniteTime(SimTime),
    #[error("run_until({t_end}) is behind the clock ({now})")]
    RunBackwards { t_end: SimTime, now: SimTime },
    #[error("exponential mean must be positive, got {0}")]
    NonPositiveMean(f64),
}

/// Handle returned by [`EventQueue::schedule`]; used to cancel an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn seq(self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event<P> {
    pub time: SimTime,
    pub seq: u64,
    pub payload: P,
}

struct Entry<P>(Event<P>);

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<P> Eq for Entry<P> {}

impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Entry<P> {
    // BinaryHeap is a max-heap; reverse so the earliest (time, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .time
            .total_cmp(&self.0.time)
            .then_with(|| other.0.seq.cmp(&self.0.seq))
    }
}

/// Priority queue of timestamped events with a virtual clock.
pub struct EventQueue<P> {
    heap: BinaryHeap<Entry<P>>,
    cancelled: HashSet<u64>,
    next_seq: u64,
    now: SimTime,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> std::fmt::Debug for EventQueue<P> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventQueue")
            .field("now", &self.now)
            .field("pending", &self.len())
            .finish()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        Self {
            heap: BinaryHeap::new(),
            cancelled: HashSet::new(),
            next_seq: 0,
            now: 0.0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of live (not cancelled) events still queued.
    pub fn len(&self) -> usize {
        self.heap.len() - self.cancelled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn schedule(&mut self, time: SimTime, payload: P) -> Result<EventHandle, SimError> {
        if !time.is_finite() {
            return Err(SimError::NonFiniteTime(time));
        }
        if time < self.now {
            return Err(SimError::ScheduleInPast {
                time,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry(Event { time, seq, payload }));
        Ok(EventHandle(seq))
    }

    /// Schedule `delay` seconds after the current clock.
    pub fn schedule_in(&mut self, delay: SimTime, payload: P) -> Result<EventHandle, SimError> {
        self.schedule(self.now + delay, payload)
    }

    /// Returns false if the event was already dispatched or cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if handle.0 >= self.next_seq || self.cancelled.contains(&handle.0) {
            return false;
        }
        if !self.heap.iter().any(|e| e.0.seq == handle.0) {
            return false;
        }
        self.cancelled.insert(handle.0)
    }

    fn peek_live_time(&mut self) -> Option<SimTime> {
        while let Some(top) = self.heap.peek() {
            if self.cancelled.remove(&top.0.seq) {
                self.heap.pop();
                continue;
            }
            return Some(top.0.time);
        }
        None
    }

    /// Pop the next event with `time <= t_end`, advancing the clock to it.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<Event<P>> {
        let time = self.peek_live_time()?;
        if time > t_end {
            return None;
        }
        let Entry(ev) = self.heap.pop().expect("peeked");
        self.now = ev.time;
        Some(ev)
    }

    /// Dispatch every event with `time <= t_end` through `handler`, then set
    /// the clock to `t_end`. The handler may schedule further events.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> Result<usize, SimError>
    where
        F: FnMut(&mut Self, Event<P>),
    {
        if t_end < self.now {
            return Err(SimError::RunBackwards {
                t_end,
                now: self.now,
            });
        }
        let mut dispatched = 0;
        while let Some(ev) = self.pop_until(t_end) {
            handler(self, ev);
            dispatched += 1;
        }
        self.now = t_end;
        Ok(dispatched)
    }
}

/// Seeded random stream. One independent stream per traffic class label, so
/// that drawing from one class never perturbs another.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    label: String,
    rng: ChaCha12Rng,
}

/// FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
fn label_stream_id(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl RandomStream {
    pub fn new(seed: u64, label: &str) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(label_stream_id(label));
        Self {
            seed,
            label: label.to_owned(),
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn rng(&mut self) -> &mut ChaCha12Rng {
        &mut self.rng
    }

    /// Exponential draw with the given mean (seconds).
    pub fn sample_exp(&mut self, mean: SimTime) -> Result<SimTime, SimError> {
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(SimError::NonPositiveMean(mean));
        }
        let exp = Exp::new(1.0 / mean).map_err(|_| SimError::NonPositiveMean(mean))?;
        Ok(exp.sample(&mut self.rng))
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        rand::Rng::gen::<f64>(&mut self.rng)
    }
}
