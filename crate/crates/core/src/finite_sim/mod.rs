//! The n-server system observed at integer epochs.
//!
//! [`embedded_step`] is the slot-to-slot Markov update on `(Q, L)`; the
//! [`event`] submodule is an independent continuous-time FCFS simulation
//! used as an oracle for it and as the source of waiting times.

pub mod event;

use std::io::Write;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use crate::arrivals::ArrivalSource;
use crate::model::{QedScaling, ServiceDistribution};
use crate::rng::SimRng;

/// `(Q, L)` of the n-server system at slot boundary `t`.
///
/// `l[k-1]` counts customers in service whose residual service lies in
/// `(k-1, k]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FiniteSystemState {
    pub t: u64,
    pub q: u64,
    pub l: Vec<u64>,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StateViolation {
    TooManyBusy { busy: u64, n: u64 },
    Complementarity { q: u64, busy: u64, n: u64 },
    Conservation { q_before: u64, arrivals: u64, entered: u64, q_after: u64 },
}

impl FiniteSystemState {
    pub fn empty(n: u64, k: usize) -> Self {
        Self { t: 0, q: 0, l: vec![0; k], n }
    }

    /// Number of busy servers `‖L‖`.
    pub fn busy(&self) -> u64 {
        self.l.iter().sum()
    }

    /// Customers in the system, `‖L‖ + Q`.
    pub fn y(&self) -> u64 {
        self.busy() + self.q
    }

    pub fn check(&self) -> Result<(), StateViolation> {
        let busy = self.busy();
        if busy > self.n {
            return Err(StateViolation::TooManyBusy { busy, n: self.n });
        }
        if self.q > 0 && busy != self.n {
            return Err(StateViolation::Complementarity { q: self.q, busy, n: self.n });
        }
        Ok(())
    }
}

/// What happened during one slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SlotTransition {
    pub arrivals: u64,
    /// Entries into service split by service requirement.
    pub j: Vec<u64>,
    pub j_norm: u64,
}

/// Multinomial draw by sequential conditional binomials. `out` gets the
/// counts; its length must match `p`.
pub fn sample_multinomial<R: Rng + ?Sized>(m: u64, p: &[f64], rng: &mut R, out: &mut [u64]) {
    debug_assert_eq!(p.len(), out.len());
    let mut left = m;
    let mut mass = 1.0;
    let last = p.len() - 1;
    for (k, slot) in out.iter_mut().enumerate() {
        if left == 0 {
            *slot = 0;
            continue;
        }
        if k == last {
            *slot = left;
            left = 0;
            continue;
        }
        let prob = (p[k] / mass).clamp(0.0, 1.0);
        let draw = if prob == 0.0 {
            0
        } else if prob == 1.0 {
            left
        } else {
            Binomial::new(left, prob).expect("probability in (0,1)").sample(rng)
        };
        *slot = draw;
        left -= draw;
        mass -= p[k];
    }
}

/// One slot of the embedded chain, updating `state` in place.
///
/// `‖J‖ = (Q + A) ∧ (n − ‖L‖ + L_1)`, `J` multinomial given `‖J‖`,
/// `L ← shift(L) + J`, `Q ← Q + A − ‖J‖`.
pub fn embedded_step<R: Rng + ?Sized>(
    state: &mut FiniteSystemState,
    dist: &ServiceDistribution,
    arrivals: u64,
    rng: &mut R,
    transition: &mut SlotTransition,
) {
    let k = state.l.len();
    let busy = state.busy();
    let freed = state.l[0];
    let j_norm = (state.q + arrivals).min(state.n - busy + freed);
    transition.j.resize(k, 0);
    sample_multinomial(j_norm, dist.p(), rng, &mut transition.j);
    state.l.rotate_left(1);
    state.l[k - 1] = 0;
    for (lk, jk) in state.l.iter_mut().zip(&transition.j) {
        *lk += jk;
    }
    state.q = state.q + arrivals - j_norm;
    state.t += 1;
    transition.arrivals = arrivals;
    transition.j_norm = j_norm;
}

/// Centered and `√n`-scaled view of a state and the slot that led to it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaledView {
    pub q_hat: f64,
    pub y_hat: f64,
    pub l_hat: Vec<f64>,
    pub j_hat: f64,
    pub a_hat: f64,
    /// `(J − ‖J‖p)/√n + p·Â`.
    pub z_hat: Vec<f64>,
}

impl ScaledView {
    pub fn new(state: &FiniteSystemState, tr: &SlotTransition, scaling: &QedScaling, dist: &ServiceDistribution) -> Self {
        let sqrt_n = scaling.sqrt_n();
        let lambda = scaling.lambda_n;
        let q_hat = state.q as f64 / sqrt_n;
        let l_hat: Vec<f64> = state
            .l
            .iter()
            .zip(dist.tilde_p())
            .map(|(&l, &tp)| (l as f64 - lambda * tp) / sqrt_n)
            .collect();
        let a_hat = (tr.arrivals as f64 - lambda) / sqrt_n;
        let jn = tr.j_norm as f64;
        let z_hat = tr
            .j
            .iter()
            .zip(dist.p())
            .map(|(&j, &p)| (j as f64 - jn * p) / sqrt_n + p * a_hat)
            .collect();
        Self {
            q_hat,
            // (Y − λ/μ)/√n computed from integers to avoid summing rounding
            y_hat: (state.y() as f64 - lambda / scaling.mu) / sqrt_n,
            l_hat,
            j_hat: (jn - lambda) / sqrt_n,
            a_hat,
            z_hat,
        }
    }

    /// Largest deviation in `ŷ = Σ l̂ + q̂` and `q̂ = (ŷ − β)^+`.
    pub fn identity_error(&self, beta_n: f64) -> f64 {
        let sum: f64 = self.l_hat.iter().sum::<f64>() + self.q_hat;
        let a = (self.y_hat - sum).abs();
        let b = (self.q_hat - (self.y_hat - beta_n).max(0.0)).abs();
        a.max(b)
    }
}

/// The embedded chain bundled with its arrival source and RNG.
#[derive(Debug, Clone)]
pub struct EmbeddedChain {
    pub state: FiniteSystemState,
    pub last: SlotTransition,
    pub scaling: QedScaling,
    dist: ServiceDistribution,
    source: ArrivalSource,
    rng: SimRng,
}

impl EmbeddedChain {
    /// Starts from the empty system.
    pub fn new(scaling: QedScaling, dist: ServiceDistribution, source: ArrivalSource, rng: SimRng) -> Self {
        let k = dist.k();
        Self {
            state: FiniteSystemState::empty(scaling.n, k),
            last: SlotTransition { arrivals: 0, j: vec![0; k], j_norm: 0 },
            scaling,
            dist,
            source,
            rng,
        }
    }

    pub fn dist(&self) -> &ServiceDistribution {
        &self.dist
    }

    /// Advances one slot and checks conservation and complementarity.
    pub fn step(&mut self) -> Result<(), StateViolation> {
        let a = self.source.next_slot().count;
        let q_before = self.state.q;
        embedded_step(&mut self.state, &self.dist, a, &mut self.rng, &mut self.last);
        if self.state.q + self.last.j_norm != q_before + a {
            return Err(StateViolation::Conservation {
                q_before,
                arrivals: a,
                entered: self.last.j_norm,
                q_after: self.state.q,
            });
        }
        self.state.check()
    }

    /// `count` states, one every `spacing` slots.
    pub fn sample_states(&mut self, count: usize, spacing: u64) -> Result<Vec<FiniteSystemState>, StateViolation> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            for _ in 0..spacing.max(1) {
                self.step()?;
            }
            out.push(self.state.clone());
        }
        Ok(out)
    }

    pub fn view(&self) -> ScaledView {
        ScaledView::new(&self.state, &self.last, &self.scaling, &self.dist)
    }
}

/// Runs `warmup` slots, then calls `sink` after each of `samples` slots.
/// Stops at the first invariant violation.
pub fn run_embedded<F>(chain: &mut EmbeddedChain, warmup: u64, samples: u64, mut sink: F) -> Result<(), StateViolation>
where
    F: FnMut(&FiniteSystemState, &SlotTransition),
{
    for _ in 0..warmup {
        chain.step()?;
    }
    for _ in 0..samples {
        chain.step()?;
        sink(&chain.state, &chain.last);
    }
    Ok(())
}

/// Default warmup: `20·n·E S` slots.
pub fn default_warmup(n: u64, dist: &ServiceDistribution) -> u64 {
    (20.0 * n as f64 * dist.mean_service()).ceil() as u64
}

/// CSV writer for `(t, Q, L_1..L_K, A_t, J_norm)` rows.
pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
    row: Vec<String>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W, k: usize) -> csv::Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string(), "Q".to_string()];
        header.extend((1..=k).map(|i| format!("L_{i}")));
        header.push("A_t".into());
        header.push("J_norm".into());
        inner.write_record(&header)?;
        Ok(Self { inner, row: Vec::with_capacity(k + 4) })
    }

    pub fn write(&mut self, state: &FiniteSystemState, tr: &SlotTransition) -> csv::Result<()> {
        self.row.clear();
        self.row.push(state.t.to_string());
        self.row.push(state.q.to_string());
        self.row.extend(state.l.iter().map(|l| l.to_string()));
        self.row.push(tr.arrivals.to_string());
        self.row.push(tr.j_norm.to_string());
        self.inner.write_record(&self.row)
    }

    pub fn finish(mut self) -> csv::Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrivals::{make_source, ArrivalFamily};
    use crate::model::qed_scaling;
    use rand::SeedableRng;

    fn two_point() -> ServiceDistribution {
        ServiceDistribution::from_pairs(&[(1, 0.5), (2, 0.5)]).unwrap()
    }

    fn step_with(q: u64, l: Vec<u64>, n: u64, a: u64, dist: &ServiceDistribution) -> (FiniteSystemState, SlotTransition) {
        let mut s = FiniteSystemState { t: 0, q, l, n };
        let mut tr = SlotTransition { arrivals: 0, j: vec![], j_norm: 0 };
        let mut rng = SimRng::seed_from_u64(3);
        embedded_step(&mut s, dist, a, &mut rng, &mut tr);
        (s, tr)
    }

    #[test]
    fn empty_system_stays_empty() {
        let (s, tr) = step_with(0, vec![0, 0], 10, 0, &two_point());
        assert_eq!((s.q, s.l.clone(), tr.j_norm), (0, vec![0, 0], 0));
    }

    #[test]
    fn hand_checked_steps() {
        let d = two_point();
        let (s, tr) = step_with(0, vec![2, 3], 10, 3, &d);
        assert_eq!((tr.j_norm, s.q), (3, 0));
        assert_eq!(s.busy(), 3 + 3);

        let (s, tr) = step_with(4, vec![1, 9], 10, 2, &d);
        assert_eq!((tr.j_norm, s.q), (1, 5));
        assert_eq!(s.busy(), 10);
    }

    #[test]
    fn multinomial_edge_cases() {
        let mut rng = SimRng::seed_from_u64(1);
        let mut out = [7u64; 3];
        sample_multinomial(0, &[0.2, 0.3, 0.5], &mut rng, &mut out);
        assert_eq!(out, [0, 0, 0]);
        let mut one = [0u64];
        sample_multinomial(5, &[1.0], &mut rng, &mut one);
        assert_eq!(one, [5]);
        let mut gap = [0u64; 3];
        sample_multinomial(100, &[0.5, 0.0, 0.5], &mut rng, &mut gap);
        assert_eq!(gap[1], 0);
        assert_eq!(gap.iter().sum::<u64>(), 100);
    }

    #[test]
    fn multinomial_large_count_means() {
        let mut rng = SimRng::seed_from_u64(2);
        let mut out = [0u64; 2];
        for _ in 0..20 {
            sample_multinomial(1_000_000, &[0.5, 0.5], &mut rng, &mut out);
            assert_eq!(out[0] + out[1], 1_000_000);
            assert!((out[0] as f64 - 5e5).abs() < 3.0 * (1e6f64 * 0.25).sqrt() * 1.5);
        }
    }

    #[test]
    fn multinomial_marginals() {
        let p = [0.3, 0.3, 0.4];
        let mut rng = SimRng::seed_from_u64(4);
        let mut sums = [0u64; 3];
        let mut out = [0u64; 3];
        let reps = 20_000;
        for _ in 0..reps {
            sample_multinomial(17, &p, &mut rng, &mut out);
            for (s, o) in sums.iter_mut().zip(out) {
                *s += o;
            }
        }
        for (k, &s) in sums.iter().enumerate() {
            let mean = s as f64 / reps as f64;
            let se = (17.0 * p[k] * (1.0 - p[k]) / reps as f64).sqrt();
            assert!((mean - 17.0 * p[k]).abs() < 4.0 * se, "k={k} mean {mean}");
        }
    }

    fn chain(n: u64, beta: f64, family: ArrivalFamily, seed: u64) -> EmbeddedChain {
        let d = two_point();
        let sc = qed_scaling(n, beta, &d).unwrap();
        let src = make_source(family, sc.lambda_n, seed).unwrap();
        EmbeddedChain::new(sc, d, src, SimRng::seed_from_u64(seed + 1))
    }

    #[test]
    fn light_traffic_never_queues() {
        let d = two_point();
        let sc = qed_scaling(50, 1.0, &d).unwrap();
        let src = make_source(ArrivalFamily::Deterministic, 0.5, 9).unwrap();
        let mut ch = EmbeddedChain::new(sc, d, src, SimRng::seed_from_u64(1));
        run_embedded(&mut ch, 100, 5_000, |s, _| assert_eq!(s.q, 0)).unwrap();
    }

    #[test]
    fn qed_delay_fraction_is_interior() {
        let mut ch = chain(50, 1.0, ArrivalFamily::Exponential, 12);
        let mut delayed = 0u64;
        let samples = 100_000;
        run_embedded(&mut ch, 2_000, samples, |s, _| delayed += (s.q > 0) as u64).unwrap();
        let frac = delayed as f64 / samples as f64;
        assert!(frac > 0.01 && frac < 0.99, "{frac}");
    }

    #[test]
    fn scaled_view_identities() {
        let mut ch = chain(50, 1.0, ArrivalFamily::Exponential, 5);
        let beta_n = ch.scaling.beta_n;
        for _ in 0..20_000 {
            ch.step().unwrap();
            let v = ch.view();
            assert!(v.identity_error(beta_n) < 1e-9, "{v:?}");
            let zsum: f64 = v.z_hat.iter().sum();
            assert!((zsum - v.a_hat).abs() < 1e-9);
        }
    }

    #[test]
    fn trace_header() {
        let mut buf = Vec::new();
        let mut w = TraceWriter::new(&mut buf, 2).unwrap();
        let s = FiniteSystemState { t: 1, q: 0, l: vec![1, 2], n: 5 };
        w.write(&s, &SlotTransition { arrivals: 3, j: vec![1, 2], j_norm: 3 }).unwrap();
        w.finish().unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "t,Q,L_1,L_2,A_t,J_norm\n1,0,1,2,3,3\n");
    }
}
