//! Waiting times: scaled-wait law against the limiting queue, and the
//! distributional Little's law `Q = A(0, W]`.

use serde::Serialize;

use super::AnalysisError;
use crate::arrivals::{make_source, ArrivalFamily};
use crate::finite_sim::event::{run_event_sim, CustomerRecord, EventObserver};
use crate::finite_sim::FiniteSystemState;
use crate::model::{QedScaling, ServiceDistribution};
use crate::rng::{Purpose, SeedStream};
use crate::stats::{ks_critical_95, ks_two_sample};

/// Minimum number of customer records for the checks.
pub const MIN_RECORDS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaitingReport {
    pub n: u64,
    /// KS distance between `√n·W` and `Q̂/μ`.
    pub ks_scaled_wait: f64,
    /// KS distance between stationary `Q` and `A(0, W]`.
    pub ks_little: f64,
    pub wait_atom: f64,
    pub limit_atom: f64,
    pub queue_atom: f64,
    pub mean_scaled_wait: f64,
    pub mean_limit_wait: f64,
    pub records: usize,
    pub queue_samples: usize,
    /// i.i.d. 95% critical value for the scaled-wait comparison (for scale).
    pub ks_scaled_wait_crit: f64,
    pub ks_little_crit: f64,
}

/// Compares stationary waits and queue lengths of an n-server system with
/// limiting-chain `Q̂` samples. Little's-law counts come from a fresh
/// stationary source of the same family, replayed over consecutive windows
/// of length `W`.
pub fn waiting_time_checks(
    waits: &[f64],
    queue: &[u64],
    limit_q_hat: &[f64],
    scaling: &QedScaling,
    family: ArrivalFamily,
    replay_seed: u64,
) -> Result<WaitingReport, AnalysisError> {
    if waits.len() < MIN_RECORDS {
        return Err(AnalysisError::TooFewSamples { need: MIN_RECORDS, got: waits.len() });
    }
    let sqrt_n = scaling.sqrt_n();
    let scaled: Vec<f64> = waits.iter().map(|w| sqrt_n * w).collect();
    let limit_wait: Vec<f64> = limit_q_hat.iter().map(|q| q / scaling.mu).collect();

    let mut replay = make_source(family, scaling.lambda_n, replay_seed)?;
    let counts: Vec<f64> = waits.iter().map(|&w| replay.advance(w) as f64).collect();
    let queue_f: Vec<f64> = queue.iter().map(|&q| q as f64).collect();

    let atom = |xs: &[f64]| xs.iter().filter(|&&x| x == 0.0).count() as f64 / xs.len().max(1) as f64;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len().max(1) as f64;
    Ok(WaitingReport {
        n: scaling.n,
        ks_scaled_wait: ks_two_sample(&scaled, &limit_wait),
        ks_little: ks_two_sample(&queue_f, &counts),
        wait_atom: atom(&scaled),
        limit_atom: atom(&limit_wait),
        queue_atom: atom(&queue_f),
        mean_scaled_wait: mean(&scaled),
        mean_limit_wait: mean(&limit_wait),
        records: waits.len(),
        queue_samples: queue.len(),
        ks_scaled_wait_crit: ks_critical_95(scaled.len(), limit_wait.len()),
        ks_little_crit: ks_critical_95(queue_f.len(), counts.len()),
    })
}

/// Thinned output of an event simulation.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EventSamples {
    pub waits: Vec<f64>,
    pub queue: Vec<u64>,
    pub busy: Vec<u64>,
    pub idle_with_queue: u64,
    pub order_violations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventPlan {
    pub warmup: u64,
    /// Integer epochs after warmup.
    pub horizon: u64,
    /// Keep one customer in `customer_stride`.
    pub customer_stride: u64,
    /// Keep one epoch in `epoch_stride`.
    pub epoch_stride: u64,
}

struct Thinning<'a> {
    plan: EventPlan,
    seen: u64,
    out: &'a mut EventSamples,
}

impl EventObserver for Thinning<'_> {
    fn customer(&mut self, r: &CustomerRecord) {
        if r.arrival_epoch > self.plan.warmup as f64 {
            if self.seen.is_multiple_of(self.plan.customer_stride.max(1)) {
                self.out.waits.push(r.wait);
            }
            self.seen += 1;
        }
    }

    fn epoch(&mut self, s: &FiniteSystemState) {
        if s.t > self.plan.warmup && (s.t - self.plan.warmup).is_multiple_of(self.plan.epoch_stride.max(1)) {
            self.out.queue.push(s.q);
            self.out.busy.push(s.busy());
        }
    }
}

/// Runs the event simulation from empty and keeps thinned post-warmup
/// waits and integer-epoch states.
pub fn collect_event_samples(
    scaling: &QedScaling,
    dist: &ServiceDistribution,
    family: ArrivalFamily,
    plan: EventPlan,
    seeds: &SeedStream,
    rep: u64,
) -> Result<EventSamples, AnalysisError> {
    let mut source = make_source(family, scaling.lambda_n, seeds.seed(rep, Purpose::Arrivals))?;
    let mut rng = seeds.rng(rep, Purpose::Service);
    let mut out = EventSamples::default();
    let mut obs = Thinning { plan, seen: 0, out: &mut out };
    let summary = run_event_sim(scaling.n, dist, &mut source, plan.warmup + plan.horizon, &mut rng, &mut obs);
    out.idle_with_queue = summary.idle_with_queue;
    out.order_violations = summary.order_violations;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::qed_scaling;

    #[test]
    fn light_traffic_concentrates_at_zero() {
        let d = ServiceDistribution::deterministic();
        // β close to √n: λ = n − β√n is small
        let sc = qed_scaling(100, 9.0, &d).unwrap();
        let plan = EventPlan { warmup: 100, horizon: 20_000, customer_stride: 1, epoch_stride: 1 };
        let s = collect_event_samples(&sc, &d, ArrivalFamily::Deterministic, plan, &SeedStream::new(1), 0).unwrap();
        assert!(s.waits.iter().all(|&w| w == 0.0));
        assert!(s.queue.iter().all(|&q| q == 0));
        let limit = vec![0.0; 1000];
        let r = waiting_time_checks(&s.waits, &s.queue, &limit, &sc, ArrivalFamily::Deterministic, 5).unwrap();
        assert_eq!(r.ks_scaled_wait, 0.0);
        assert!(r.ks_little < 0.01, "{r:?}");
    }

    #[test]
    fn too_few_records() {
        let d = ServiceDistribution::deterministic();
        let sc = qed_scaling(100, 1.0, &d).unwrap();
        let err = waiting_time_checks(&[0.0; 10], &[0], &[0.0], &sc, ArrivalFamily::Exponential, 0).unwrap_err();
        assert!(matches!(err, AnalysisError::TooFewSamples { .. }));
    }
}
