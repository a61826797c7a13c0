//! Stationary renewal arrival sources.
//!
//! Interarrival times are `ζ_i / λ` with `ζ` a unit-mean variable from one of
//! a few standard families. A source starts in equilibrium at time 0: the
//! interarrival interval straddling 0 is drawn length-biased and split at a
//! uniform point, which gives both the backward recurrence time and the
//! first arrival epoch their stationary joint law.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Exp1, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::rng::SimRng;
use crate::stats::{batch_means_by, Moments};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArrivalError {
    #[error("hyperexponential arrivals need c_a > 1, got {0}")]
    UnsupportedCV(f64),
    #[error("erlang shape must be >= 1")]
    BadShape,
    #[error("arrival rate must be positive and finite, got {0}")]
    BadRate(f64),
}

/// Unit-mean interarrival family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ArrivalFamily {
    Deterministic,
    Exponential,
    Erlang { shape: u32 },
    /// Two phases with balanced means; `c_a > 1` fixes both rates and the
    /// mixing weight.
    Hyperexponential { c_a: f64 },
    /// Uniform on `(0, 2)`.
    Uniform,
}

impl ArrivalFamily {
    pub fn validate(&self) -> Result<(), ArrivalError> {
        match *self {
            ArrivalFamily::Erlang { shape: 0 } => Err(ArrivalError::BadShape),
            ArrivalFamily::Hyperexponential { c_a } if !(c_a > 1.0) || !c_a.is_finite() => {
                Err(ArrivalError::UnsupportedCV(c_a))
            }
            _ => Ok(()),
        }
    }

    /// Coefficient of variation of `ζ`.
    pub fn c_a(&self) -> f64 {
        match *self {
            ArrivalFamily::Deterministic => 0.0,
            ArrivalFamily::Exponential => 1.0,
            ArrivalFamily::Erlang { shape } => 1.0 / (shape as f64).sqrt(),
            ArrivalFamily::Hyperexponential { c_a } => c_a,
            ArrivalFamily::Uniform => 1.0 / 3f64.sqrt(),
        }
    }

    pub fn name(&self) -> String {
        match *self {
            ArrivalFamily::Deterministic => "deterministic".into(),
            ArrivalFamily::Exponential => "exponential".into(),
            ArrivalFamily::Erlang { shape } => format!("erlang({shape})"),
            ArrivalFamily::Hyperexponential { c_a } => format!("hyperexponential(c_a={c_a})"),
            ArrivalFamily::Uniform => "uniform(0,2)".into(),
        }
    }

    /// Phase probability of the fast-and-likely branch of the balanced
    /// hyperexponential; the other branch has `1 − q`.
    fn h2_weight(c_a: f64) -> f64 {
        let c2 = c_a * c_a;
        0.5 * (1.0 + ((c2 - 1.0) / (c2 + 1.0)).sqrt())
    }

    /// One draw of `ζ`.
    pub fn sample_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ArrivalFamily::Deterministic => 1.0,
            ArrivalFamily::Exponential => Exp1.sample(rng),
            ArrivalFamily::Erlang { shape } => {
                let k = shape as f64;
                let mut total = 0.0;
                for _ in 0..shape {
                    let e: f64 = Exp1.sample(rng);
                    total += e;
                }
                total / k
            }
            ArrivalFamily::Hyperexponential { c_a } => {
                let q = Self::h2_weight(c_a);
                let e: f64 = Exp1.sample(rng);
                if rng.random::<f64>() < q { e / (2.0 * q) } else { e / (2.0 * (1.0 - q)) }
            }
            ArrivalFamily::Uniform => 2.0 * rng.random::<f64>(),
        }
    }

    /// One draw from the length-biased law `x f(x) / E ζ`.
    pub fn sample_length_biased<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ArrivalFamily::Deterministic => 1.0,
            ArrivalFamily::Exponential => gamma(rng, 2.0, 1.0),
            ArrivalFamily::Erlang { shape } => gamma(rng, shape as f64 + 1.0, shape as f64),
            ArrivalFamily::Hyperexponential { c_a } => {
                // each balanced branch carries half of the mean
                let q = Self::h2_weight(c_a);
                let rate = if rng.random::<f64>() < 0.5 { 2.0 * q } else { 2.0 * (1.0 - q) };
                gamma(rng, 2.0, rate)
            }
            ArrivalFamily::Uniform => 2.0 * rng.random::<f64>().sqrt(),
        }
    }

    /// One draw from the stationary-excess law `P[ζ > x] / E ζ`, using a
    /// per-family closed form.
    pub fn sample_excess<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ArrivalFamily::Deterministic => rng.random::<f64>(),
            ArrivalFamily::Exponential => Exp1.sample(rng),
            ArrivalFamily::Erlang { shape } => {
                // uniform mixture over Gamma(j, k), j = 1..k
                let j = rng.random_range(1..=shape) as f64;
                gamma(rng, j, shape as f64)
            }
            ArrivalFamily::Hyperexponential { c_a } => {
                let q = Self::h2_weight(c_a);
                let e: f64 = Exp1.sample(rng);
                if rng.random::<f64>() < 0.5 { e / (2.0 * q) } else { e / (2.0 * (1.0 - q)) }
            }
            ArrivalFamily::Uniform => {
                // inverse of F(x) = x − x²/4 on [0, 2]
                let u: f64 = rng.random();
                2.0 * (1.0 - (1.0 - u).sqrt())
            }
        }
    }
}

fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters").sample(rng)
}

/// Arrival count of one unit slot and the backward recurrence time at its end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlotArrivals {
    pub count: u64,
    pub recurrence: f64,
}

/// CSV row of a slot-count trace.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SlotRecord {
    pub t: u64,
    pub count: u64,
    pub recurrence: f64,
}

/// A stationary renewal arrival stream with rate `λ`.
///
/// Two ways to consume it: slot-wise through [`next_slot`]/[`advance`]
/// (which track the current time), or epoch-wise through [`next_epoch`].
/// Do not interleave the two on one source.
///
/// [`next_slot`]: ArrivalSource::next_slot
/// [`advance`]: ArrivalSource::advance
/// [`next_epoch`]: ArrivalSource::next_epoch
#[derive(Debug, Clone)]
pub struct ArrivalSource {
    family: ArrivalFamily,
    rate: f64,
    rng: SimRng,
    now: f64,
    next: f64,
    last: f64,
}

/// Builds a source in equilibrium at time 0.
pub fn make_source(family: ArrivalFamily, rate: f64, seed: u64) -> Result<ArrivalSource, ArrivalError> {
    family.validate()?;
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(ArrivalError::BadRate(rate));
    }
    let mut rng = SimRng::seed_from_u64(seed);
    let span = family.sample_length_biased(&mut rng) / rate;
    let u: f64 = rng.random();
    let backward = u * span;
    Ok(ArrivalSource { family, rate, rng, now: 0.0, next: span - backward, last: -backward })
}

impl ArrivalSource {
    /// Deterministic arrivals every `1/rate` with the first at `phase`.
    pub fn deterministic_with_phase(rate: f64, phase: f64) -> Result<Self, ArrivalError> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(ArrivalError::BadRate(rate));
        }
        Ok(Self {
            family: ArrivalFamily::Deterministic,
            rate,
            rng: SimRng::seed_from_u64(0),
            now: 0.0,
            next: phase,
            last: phase - 1.0 / rate,
        })
    }

    pub fn family(&self) -> ArrivalFamily {
        self.family
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn c_a(&self) -> f64 {
        self.family.c_a()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Epoch of the next arrival not yet consumed.
    pub fn peek_epoch(&self) -> f64 {
        self.next
    }

    fn draw_gap(&mut self) -> f64 {
        self.family.sample_unit(&mut self.rng) / self.rate
    }

    /// Consumes and returns the next arrival epoch.
    pub fn next_epoch(&mut self) -> f64 {
        let epoch = self.next;
        self.last = epoch;
        self.next = epoch + self.draw_gap();
        epoch
    }

    /// Moves time forward by `dt` and returns the arrivals in `(now, now+dt]`.
    pub fn advance(&mut self, dt: f64) -> u64 {
        let end = self.now + dt;
        let mut count = 0;
        while self.next <= end {
            self.next_epoch();
            count += 1;
        }
        self.now = end;
        count
    }

    /// Backward recurrence time at the current time.
    pub fn recurrence(&self) -> f64 {
        self.now - self.last
    }

    /// Advances one unit slot.
    pub fn next_slot(&mut self) -> SlotArrivals {
        let count = self.advance(1.0);
        SlotArrivals { count, recurrence: self.recurrence() }
    }
}

/// Writes `slots` slot records as CSV `(t, count, recurrence)`.
pub fn write_slot_trace<W: Write>(source: &mut ArrivalSource, slots: u64, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for t in 1..=slots {
        let s = source.next_slot();
        w.serialize(SlotRecord { t, count: s.count, recurrence: s.recurrence })?;
    }
    w.flush()?;
    Ok(())
}

/// Standardized slot-count moments at one rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CltRow {
    pub rate: f64,
    pub slots: u64,
    /// Mean of `(A_t − λ)/√λ`.
    pub mean: f64,
    pub variance: f64,
    pub variance_se: f64,
    pub target_variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Jarque-Bera statistic of the standardized counts.
    pub jarque_bera: f64,
    /// `|variance − c_a²| > 3·SE + 1/λ` (the `1/λ` term is the count lattice).
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltReport {
    pub family: String,
    pub c_a: f64,
    pub rows: Vec<CltRow>,
}

impl CltReport {
    pub fn any_flagged(&self) -> bool {
        self.rows.iter().any(|r| r.flagged)
    }
}

/// Empirical check that `(A_t − λ)/√λ` has variance near `c_a²` across a
/// grid of rates. Rates run as independent sources seeded from `seed`.
pub fn clt_selfcheck(
    family: ArrivalFamily,
    rates: &[f64],
    slots: u64,
    seed: u64,
    exec: Execution,
) -> Result<CltReport, ArrivalError> {
    family.validate()?;
    let c2 = family.c_a().powi(2);
    let rows = exec.map(rates.len(), |i| -> Result<CltRow, ArrivalError> {
        let rate = rates[i];
        let stream = crate::rng::SeedStream::new(seed).seed(i as u64, crate::rng::Purpose::Arrivals);
        let mut src = make_source(family, rate, stream)?;
        let scale = rate.sqrt();
        let m: Moments = (0..slots).map(|_| (src.next_slot().count as f64 - rate) / scale).collect();
        let variance = m.variance();
        let se = m.variance_se();
        let skew = m.skewness();
        let kurt = m.excess_kurtosis();
        Ok(CltRow {
            rate,
            slots,
            mean: m.mean,
            variance,
            variance_se: se,
            target_variance: c2,
            skewness: skew,
            excess_kurtosis: kurt,
            jarque_bera: slots as f64 / 6.0 * (skew * skew + kurt * kurt / 4.0),
            flagged: (variance - c2).abs() > 3.0 * se + 1.0 / rate,
        })
    });
    Ok(CltReport { family: family.name(), c_a: family.c_a(), rows: rows.into_iter().collect::<Result<_, _>>()? })
}

/// Long-run mean of the slot-end backward recurrence time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecurrenceCheck {
    pub mean: f64,
    pub se: f64,
    /// `(c_a² + 1) / (2λ)`.
    pub target: f64,
    pub within_3se: bool,
}

pub fn recurrence_selfcheck(
    family: ArrivalFamily,
    rate: f64,
    slots: usize,
    seed: u64,
) -> Result<RecurrenceCheck, ArrivalError> {
    let mut src = make_source(family, rate, seed)?;
    let trace: Vec<f64> = (0..slots).map(|_| src.next_slot().recurrence).collect();
    let bm = batch_means_by(trace.len(), 50, |i| trace[i]);
    let target = (family.c_a().powi(2) + 1.0) / (2.0 * rate);
    Ok(RecurrenceCheck { mean: bm.mean, se: bm.se, target, within_3se: (bm.mean - target).abs() <= 3.0 * bm.se })
}
