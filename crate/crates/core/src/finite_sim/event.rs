//! Continuous-time FCFS simulation with exact arrival epochs.
//!
//! Customers are served in arrival order by the first server to free up
//! (Kiefer-Wolfowitz recursion over a heap of server free times). A customer
//! arriving at the exact instant a server frees starts immediately. The
//! integer-epoch `(Q, L)` state is recovered from residual service times.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};
use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::Distribution;
use serde::Serialize;

use super::FiniteSystemState;
use crate::arrivals::ArrivalSource;
use crate::model::ServiceDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CustomerRecord {
    pub arrival_epoch: f64,
    pub wait: f64,
    pub service: u32,
}

/// Receives simulation output as it is produced.
pub trait EventObserver {
    fn customer(&mut self, _record: &CustomerRecord) {}
    fn epoch(&mut self, _state: &FiniteSystemState) {}
}

impl EventObserver for () {}

/// Keeps everything; only for short runs.
#[derive(Debug, Default)]
pub struct Recorder {
    pub customers: Vec<CustomerRecord>,
    pub states: Vec<FiniteSystemState>,
}

impl EventObserver for Recorder {
    fn customer(&mut self, record: &CustomerRecord) {
        self.customers.push(*record);
    }

    fn epoch(&mut self, state: &FiniteSystemState) {
        self.states.push(state.clone());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct EventSummary {
    pub customers: u64,
    pub epochs: u64,
    /// Integer epochs with a waiting customer and an idle server.
    pub idle_with_queue: u64,
    /// Customers whose service started before an earlier arrival's.
    pub order_violations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct FreeAt(f64);

impl Eq for FreeAt {}

impl PartialOrd for FreeAt {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FreeAt {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

struct EpochTracker {
    modulus: u64,
    // customers in service as of the last epoch, by ceil(departure) mod (K+1)
    ring: Vec<u64>,
    // (start, departure) of customers still waiting at the last epoch
    pending: VecDeque<(f64, f64)>,
    state: FiniteSystemState,
}

impl EpochTracker {
    fn advance_to(&mut self, t: u64) -> &FiniteSystemState {
        let now = t as f64;
        self.ring[(t % self.modulus) as usize] = 0;
        while let Some(&(start, depart)) = self.pending.front() {
            if start > now {
                break;
            }
            self.pending.pop_front();
            if depart > now {
                self.ring[(depart.ceil() as u64 % self.modulus) as usize] += 1;
            }
        }
        self.state.t = t;
        self.state.q = self.pending.len() as u64;
        for (i, slot) in self.state.l.iter_mut().enumerate() {
            *slot = self.ring[((t + i as u64 + 1) % self.modulus) as usize];
        }
        &self.state
    }
}

/// Simulates `servers` FCFS servers fed by `source` and emits the state at
/// integer epochs `1..=horizon`. The system starts empty at time 0.
pub fn run_event_sim<R: Rng + ?Sized, O: EventObserver>(
    servers: u64,
    dist: &ServiceDistribution,
    source: &mut ArrivalSource,
    horizon: u64,
    rng: &mut R,
    observer: &mut O,
) -> EventSummary {
    assert!(servers > 0);
    let k = dist.k();
    let services = WeightedIndex::new(dist.p()).expect("valid service law");
    let mut free: BinaryHeap<Reverse<FreeAt>> = (0..servers).map(|_| Reverse(FreeAt(0.0))).collect();
    let mut tracker = EpochTracker {
        modulus: k as u64 + 1,
        ring: vec![0; k + 1],
        pending: VecDeque::new(),
        state: FiniteSystemState::empty(servers, k),
    };
    let mut summary = EventSummary::default();
    let mut last_start = f64::NEG_INFINITY;
    let mut t = 1u64;

    while t <= horizon {
        let arrival = source.peek_epoch();
        while t <= horizon && (t as f64) < arrival {
            let state = tracker.advance_to(t);
            if state.q > 0 && state.busy() < servers {
                summary.idle_with_queue += 1;
            }
            summary.epochs += 1;
            observer.epoch(state);
            t += 1;
        }
        if t > horizon {
            break;
        }
        source.next_epoch();
        let service = services.sample(rng) as u32 + 1;
        let Reverse(FreeAt(earliest)) = free.pop().expect("at least one server");
        let start = arrival.max(earliest);
        let depart = start + service as f64;
        free.push(Reverse(FreeAt(depart)));
        if start < last_start {
            summary.order_violations += 1;
        }
        last_start = start;
        tracker.pending.push_back((start, depart));
        summary.customers += 1;
        observer.customer(&CustomerRecord { arrival_epoch: arrival, wait: start - arrival, service });
    }
    summary
}

/// Streams customer records as CSV `(arrival_epoch, wait, service)`.
pub struct CustomerCsv<W: Write> {
    inner: csv::Writer<W>,
    pub error: Option<csv::Error>,
}

impl<W: Write> CustomerCsv<W> {
    pub fn new(out: W) -> Self {
        Self { inner: csv::Writer::from_writer(out), error: None }
    }

    pub fn finish(mut self) -> csv::Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.inner.flush()?;
        Ok(())
    }
}

impl<W: Write> EventObserver for CustomerCsv<W> {
    fn customer(&mut self, record: &CustomerRecord) {
        if self.error.is_none() {
            if let Err(e) = self.inner.serialize(record) {
                self.error = Some(e);
            }
        }
    }
}
