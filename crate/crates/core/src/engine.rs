//! Deterministic discrete-event core: virtual clock, event queue and seeded
//! random streams.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::SimError;

/// Simulated time, stored as integer nanoseconds so that the event order is
/// exact and identical on every platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(nanos: u64) -> Self {
        SimTime(nanos)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    /// Converts seconds to simulated time. Negative or NaN input is clamped
    /// to zero; callers that care about validity check before converting.
    pub fn from_secs_f64(secs: f64) -> Self {
        if secs.is_nan() || secs <= 0.0 {
            return SimTime::ZERO;
        }
        SimTime((secs * 1e9).round() as u64)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
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
        write!(f, "{:.9}s", self.as_secs_f64())
    }
}

/// A scheduled event. `(fire_at, seq)` is a strict total order.
#[derive(Debug, Clone)]
pub struct SimEvent<K> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub kind: K,
}

impl<K> PartialEq for SimEvent<K> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq == other.seq
    }
}

impl<K> Eq for SimEvent<K> {}

impl<K> Ord for SimEvent<K> {
    // Reversed so that `BinaryHeap` pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.fire_at, other.seq).cmp(&(self.fire_at, self.seq))
    }
}

impl<K> PartialOrd for SimEvent<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOutcome {
    pub events_executed: u64,
    pub clock: SimTime,
}

/// Event queue plus virtual clock.
#[derive(Debug)]
pub struct Scheduler<K> {
    now: SimTime,
    next_seq: u64,
    executed: u64,
    queue: BinaryHeap<SimEvent<K>>,
}

impl<K> Default for Scheduler<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K> Scheduler<K> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_seq: 0,
            executed: 0,
            queue: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn events_executed(&self) -> u64 {
        self.executed
    }

    /// Schedules `kind` at absolute time `fire_at`, returning the sequence
    /// number that breaks ties between simultaneous events.
    pub fn schedule(&mut self, fire_at: SimTime, kind: K) -> Result<u64, SimError> {
        if fire_at < self.now {
            return Err(SimError::SchedulingInPast {
                now: self.now,
                fire_at,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(SimEvent { fire_at, seq, kind });
        Ok(seq)
    }

    pub fn schedule_in(&mut self, delay: SimTime, kind: K) -> Result<u64, SimError> {
        self.schedule(self.now + delay, kind)
    }

    /// Pops the next event at or before `t_end` and advances the clock to it.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<SimEvent<K>> {
        if self.queue.peek()?.fire_at > t_end {
            return None;
        }
        let ev = self.queue.pop()?;
        assert!(ev.fire_at >= self.now, "event queue went backwards");
        self.now = ev.fire_at;
        self.executed += 1;
        Some(ev)
    }

    /// Moves the clock forward to `t` once no event at or before `t` remains.
    pub fn advance_to(&mut self, t: SimTime) {
        assert!(
            self.queue.peek().is_none_or(|ev| ev.fire_at > t),
            "advancing past pending events"
        );
        if t > self.now {
            self.now = t;
        }
    }

    /// Pending events in no particular order.
    pub fn pending_events(&self) -> impl Iterator<Item = &SimEvent<K>> {
        self.queue.iter()
    }

    /// Executes every event with `fire_at <= t_end` through `handler`, then
    /// leaves the clock at `t_end`.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> Result<RunOutcome, SimError>
    where
        F: FnMut(&mut Scheduler<K>, SimEvent<K>) -> Result<(), SimError>,
    {
        let start = self.executed;
        while let Some(ev) = self.pop_until(t_end) {
            handler(self, ev)?;
        }
        if t_end > self.now {
            self.now = t_end;
        }
        Ok(RunOutcome {
            events_executed: self.executed - start,
            clock: self.now,
        })
    }
}

/// The role a random stream plays. Each role draws from its own stream so
/// that, for example, changing the traffic load leaves node placement
/// untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StreamRole {
    Topology,
    Loss,
    Traffic,
    Jitter,
}

impl StreamRole {
    fn stream_id(self) -> u64 {
        match self {
            StreamRole::Topology => 1,
            StreamRole::Loss => 2,
            StreamRole::Traffic => 3,
            StreamRole::Jitter => 4,
        }
    }
}

/// Counter-based random stream: the sequence is a pure function of
/// `(seed, role)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    role: StreamRole,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, role: StreamRole) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(role.stream_id());
        RngStream { seed, role, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn role(&self) -> StreamRole {
        self.role
    }

    /// Next draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }
}
