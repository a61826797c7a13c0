//! The Gaussian limiting chain on `(Q̂, L̂)`.
//!
//! One step draws `Â ~ N(0, μc_a²)` and a mix vector `Ĵ ~ N(0, μΣ)`, then
//!
//! ```text
//! s    = Σ_{k≥2} l̂_k
//! Ĵ    = (q̂ + Â) ∧ (β − s)
//! q̂'   = (q̂ + Â + s − β)^+
//! l̂'_k = l̂_{k+1} + Ĵ_k + p_k Ĵ
//! ```

pub mod checks;
pub mod oracle;

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::model::ServiceDistribution;
use crate::rng::SimRng;

/// Snap threshold for floating-point dust in `q̂`.
pub const Q_SNAP: f64 = 1e-12;

/// The last `K` values of `Ŷ` and `Ẑ`, most recent first.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    k: usize,
    head: usize,
    len: usize,
    y: Vec<f64>,
    z: Vec<f64>,
}

impl History {
    pub fn new(k: usize) -> Self {
        Self { k, head: 0, len: 0, y: vec![0.0; k], z: vec![0.0; k * k] }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// True once `K` values have been pushed.
    pub fn full(&self) -> bool {
        self.len == self.k
    }

    pub fn push(&mut self, y: f64, z: &[f64]) {
        debug_assert_eq!(z.len(), self.k);
        self.head = (self.head + 1) % self.k;
        self.y[self.head] = y;
        self.z[self.head * self.k..(self.head + 1) * self.k].copy_from_slice(z);
        self.len = (self.len + 1).min(self.k);
    }

    fn slot(&self, age: usize) -> usize {
        (self.head + self.k - age) % self.k
    }

    /// `Ŷ_{t−age}`; zero for entries not yet pushed.
    pub fn y(&self, age: usize) -> f64 {
        if age >= self.len {
            0.0
        } else {
            self.y[self.slot(age)]
        }
    }

    /// `Ẑ_{t−age}`.
    pub fn z(&self, age: usize) -> &[f64] {
        let s = self.slot(age);
        &self.z[s * self.k..(s + 1) * self.k]
    }

    /// `V̂_t = Σ_{i=1}^K Σ_{j≥i} Ẑ_{t+1−i, j}`.
    pub fn v_hat(&self) -> f64 {
        let mut v = 0.0;
        for i in 0..self.len {
            v += self.z(i)[i..].iter().sum::<f64>();
        }
        v
    }

    /// `p̃ · Ȳ_t = Σ_i p̃_i Ŷ_{t+1−i}`.
    pub fn tilde_p_dot_y(&self, tilde_p: &[f64]) -> f64 {
        tilde_p.iter().enumerate().map(|(i, tp)| tp * self.y(i)).sum()
    }

    /// `α · Z̄_t = Σ_k Σ_j (j−k)^+ Ẑ_{t+1−k, j}`.
    pub fn alpha_dot_z(&self) -> f64 {
        let mut total = 0.0;
        for age in 0..self.len {
            let z = self.z(age);
            for (j, zj) in z.iter().enumerate().skip(age + 1) {
                total += (j - age) as f64 * zj;
            }
        }
        total
    }

    /// Whether `Ȳ_t` lies in `R_x`: some stored coordinate is below `x`.
    pub fn in_region(&self, x: f64) -> bool {
        (0..self.k).any(|i| self.y(i) < x)
    }
}

/// Noise parameters of the limiting chain.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDrivers {
    /// Variance `μc_a²` of `Â`.
    pub a_sigma2: f64,
    a_sd: f64,
    p: Vec<f64>,
    g_sd: Vec<f64>,
}

impl GaussianDrivers {
    pub fn new(dist: &ServiceDistribution, c_a: f64) -> Self {
        let mu = dist.mu();
        Self {
            a_sigma2: mu * c_a * c_a,
            a_sd: (mu * c_a * c_a).sqrt(),
            p: dist.p().to_vec(),
            g_sd: dist.p().iter().map(|&p| (mu * p).sqrt()).collect(),
        }
    }

    /// Covariance `μΣ` of the mix vector.
    pub fn mix_cov(&self) -> Vec<Vec<f64>> {
        let mu: f64 = self.g_sd.iter().map(|s| s * s).sum();
        let k = self.p.len();
        (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| {
                        let d = if i == j { self.p[i] } else { 0.0 };
                        mu * (d - self.p[i] * self.p[j])
                    })
                    .collect()
            })
            .collect()
    }

    pub fn sample_a<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g: f64 = StandardNormal.sample(rng);
        self.a_sd * g
    }

    /// `Ĵ_k = G_k − p_k ΣG` with independent `G_k ~ N(0, μp_k)`.
    pub fn sample_mix<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let mut total = 0.0;
        for (o, sd) in out.iter_mut().zip(&self.g_sd) {
            let g: f64 = StandardNormal.sample(rng);
            *o = sd * g;
            total += *o;
        }
        let Some((last, head)) = out.split_last_mut() else { return };
        let mut partial = 0.0;
        for (o, p) in head.iter_mut().zip(&self.p) {
            *o -= p * total;
            partial += *o;
        }
        // closes the index-order sum to exactly zero
        *last = -partial;
    }
}

/// One draw of the mix vector `Ĵ ~ N(0, μΣ)`.
pub fn sample_mix_vector<R: Rng + ?Sized>(dist: &ServiceDistribution, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; dist.k()];
    GaussianDrivers::new(dist, 0.0).sample_mix(rng, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitChainState {
    pub t: u64,
    pub q_hat: f64,
    pub l_hat: Vec<f64>,
    pub history: History,
}

/// Noise and scalar entry of the last step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LimitNoise {
    pub a_hat: f64,
    pub j_hat: f64,
    pub j_vec: Vec<f64>,
    /// `Ĵ-vector + p·Â`.
    pub z_hat: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitViolation {
    pub t: u64,
    pub q_hat: f64,
    pub l_sum: f64,
}

impl LimitChainState {
    pub fn zero(k: usize) -> Self {
        Self { t: 0, q_hat: 0.0, l_hat: vec![0.0; k], history: History::new(k) }
    }

    pub fn y_hat(&self) -> f64 {
        self.l_hat.iter().sum::<f64>() + self.q_hat
    }

    /// `Σ l̂ ≤ β` and `q̂ (Σ l̂ − β) = 0`, to `1e−9`.
    pub fn check(&self, beta: f64) -> Result<(), LimitViolation> {
        let l_sum: f64 = self.l_hat.iter().sum();
        let tol = 1e-9 * (1.0 + beta.abs() + self.q_hat);
        if l_sum > beta + tol || self.q_hat < 0.0 || (self.q_hat * (l_sum - beta)).abs() > tol {
            return Err(LimitViolation { t: self.t, q_hat: self.q_hat, l_sum });
        }
        Ok(())
    }
}

/// Applies the three recursions with the given noise.
pub fn limit_step(state: &mut LimitChainState, beta: f64, p: &[f64], a_hat: f64, j_vec: &[f64]) -> f64 {
    let s: f64 = state.l_hat[1..].iter().sum();
    let free = beta - s;
    let j_hat = (state.q_hat + a_hat).min(free);
    let mut q = state.q_hat + a_hat - free;
    if q < Q_SNAP {
        q = 0.0;
    }
    state.q_hat = q;
    let k = state.l_hat.len();
    state.l_hat.rotate_left(1);
    state.l_hat[k - 1] = 0.0;
    for ((l, jk), pk) in state.l_hat.iter_mut().zip(j_vec).zip(p) {
        *l += jk + pk * j_hat;
    }
    state.t += 1;
    j_hat
}

/// A limiting chain with its own noise stream.
#[derive(Debug, Clone)]
pub struct LimitChain {
    pub state: LimitChainState,
    pub noise: LimitNoise,
    pub beta: f64,
    p: Vec<f64>,
    drivers: GaussianDrivers,
    rng: SimRng,
}

impl LimitChain {
    /// Starts at `Q̂ = 0`, `L̂ = 0`.
    pub fn new(dist: &ServiceDistribution, beta: f64, c_a: f64, rng: SimRng) -> Self {
        let k = dist.k();
        Self {
            state: LimitChainState::zero(k),
            noise: LimitNoise { a_hat: 0.0, j_hat: 0.0, j_vec: vec![0.0; k], z_hat: vec![0.0; k] },
            beta,
            p: dist.p().to_vec(),
            drivers: GaussianDrivers::new(dist, c_a),
            rng,
        }
    }

    pub fn drivers(&self) -> &GaussianDrivers {
        &self.drivers
    }

    pub fn step(&mut self) {
        let a = self.drivers.sample_a(&mut self.rng);
        self.drivers.sample_mix(&mut self.rng, &mut self.noise.j_vec);
        let j = limit_step(&mut self.state, self.beta, &self.p, a, &self.noise.j_vec);
        for ((z, jk), pk) in self.noise.z_hat.iter_mut().zip(&self.noise.j_vec).zip(&self.p) {
            *z = jk + pk * a;
        }
        self.noise.a_hat = a;
        self.noise.j_hat = j;
        let y = self.state.y_hat();
        self.state.history.push(y, &self.noise.z_hat);
    }

    /// Steps and verifies the state invariants.
    pub fn step_checked(&mut self) -> Result<(), LimitViolation> {
        self.step();
        self.state.check(self.beta)
    }

    pub fn advance(&mut self, steps: u64) {
        for _ in 0..steps {
            self.step();
        }
    }

    /// `count` values of `Q̂`, one every `spacing` steps.
    pub fn sample_q_hat(&mut self, count: usize, spacing: u64) -> Vec<f64> {
        (0..count)
            .map(|_| {
                self.advance(spacing.max(1));
                self.state.q_hat
            })
            .collect()
    }
}

/// Per-step `Q̂`, `Ŷ`, `V̂` of a stored run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub q: Vec<f64>,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn push(&mut self, q: f64, y: f64, v: f64) {
        self.q.push(q);
        self.y.push(y);
        self.v.push(v);
    }
}

/// Records `steps` steps of `chain` from its current state. Entry `i`
/// holds the values after step `i + 1`.
pub fn record(chain: &mut LimitChain, steps: usize) -> Result<Trajectory, LimitViolation> {
    let mut tr = Trajectory { q: Vec::with_capacity(steps), y: Vec::with_capacity(steps), v: Vec::with_capacity(steps) };
    for _ in 0..steps {
        chain.step_checked()?;
        tr.push(chain.state.q_hat, chain.state.y_hat(), chain.state.history.v_hat());
    }
    Ok(tr)
}

/// CSV writer for `(t, q_hat, l_hat_1..l_hat_K, y_hat, v_hat)` rows.
pub struct TrajectoryWriter<W: Write> {
    inner: csv::Writer<W>,
    row: Vec<String>,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(out: W, k: usize) -> csv::Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string(), "q_hat".to_string()];
        header.extend((1..=k).map(|i| format!("l_hat_{i}")));
        header.push("y_hat".into());
        header.push("v_hat".into());
        inner.write_record(&header)?;
        Ok(Self { inner, row: Vec::new() })
    }

    pub fn write(&mut self, state: &LimitChainState) -> csv::Result<()> {
        self.row.clear();
        self.row.push(state.t.to_string());
        self.row.push(format!("{:e}", state.q_hat));
        self.row.extend(state.l_hat.iter().map(|l| format!("{l:e}")));
        self.row.push(format!("{:e}", state.y_hat()));
        self.row.push(format!("{:e}", state.history.v_hat()));
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
    use rand::SeedableRng;

    fn two_point() -> ServiceDistribution {
        ServiceDistribution::from_pairs(&[(1, 0.5), (2, 0.5)]).unwrap()
    }

    #[test]
    fn hand_checked_steps() {
        let p = [0.5, 0.5];
        let mut s = LimitChainState::zero(2);
        let j = limit_step(&mut s, 1.0, &p, -0.5, &[0.0, 0.0]);
        assert_eq!((j, s.q_hat), (-0.5, 0.0));

        let mut s = LimitChainState { t: 0, q_hat: 2.0, l_hat: vec![0.5, 0.5], history: History::new(2) };
        let j = limit_step(&mut s, 1.0, &p, 0.0, &[0.0, 0.0]);
        assert_eq!(j, 0.5);
        assert_eq!(s.q_hat, 1.5);
        assert_eq!(s.l_hat, vec![0.75, 0.25]);
    }

    #[test]
    fn unit_service_is_reflected_walk() {
        let d = ServiceDistribution::deterministic();
        let mut ch = LimitChain::new(&d, 0.5, 1.0, SimRng::seed_from_u64(1));
        let mut q = 0.0f64;
        for _ in 0..10_000 {
            ch.step();
            q = (q + ch.noise.a_hat - 0.5).max(0.0);
            if q < Q_SNAP {
                q = 0.0;
            }
            assert!((ch.state.q_hat - q).abs() < 1e-12);
        }
    }

    #[test]
    fn mix_vector_sums_to_zero() {
        let d = ServiceDistribution::from_pairs(&[(1, 0.3), (2, 0.3), (3, 0.4)]).unwrap();
        let mut rng = SimRng::seed_from_u64(2);
        for _ in 0..1000 {
            let v = sample_mix_vector(&d, &mut rng);
            assert_eq!(v.iter().sum::<f64>(), 0.0);
        }
        let unit = ServiceDistribution::deterministic();
        assert_eq!(sample_mix_vector(&unit, &mut rng), vec![0.0]);
    }

    #[test]
    fn states_stay_valid() {
        let d = ServiceDistribution::from_pairs(&[(1, 0.3), (2, 0.3), (3, 0.4)]).unwrap();
        let mut ch = LimitChain::new(&d, 0.5, 1.0, SimRng::seed_from_u64(3));
        for _ in 0..50_000 {
            ch.step_checked().unwrap();
        }
    }

    #[test]
    fn history_bookkeeping() {
        let mut h = History::new(2);
        h.push(1.0, &[0.1, 0.2]);
        assert_eq!(h.v_hat(), 0.1 + 0.2);
        assert!(!h.full());
        h.push(2.0, &[0.3, 0.4]);
        assert!(h.full());
        // Ẑ_t fully, plus Ẑ_{t−1, 2}
        assert!((h.v_hat() - (0.3 + 0.4 + 0.2)).abs() < 1e-15);
        // α_1 = (0, 1), α_2 = (0, 0)
        assert!((h.alpha_dot_z() - 0.4).abs() < 1e-15);
        assert!((h.tilde_p_dot_y(&[1.0, 0.5]) - (2.0 + 0.5)).abs() < 1e-15);
        assert!(h.in_region(1.5));
        assert!(!h.in_region(1.0));
    }

    #[test]
    fn drivers_cov_matches_model() {
        let d = two_point();
        let cov = GaussianDrivers::new(&d, 1.0).mix_cov();
        let mu = d.mu();
        assert!((cov[0][0] - 0.25 * mu).abs() < 1e-15);
        assert!((cov[0][1] + 0.25 * mu).abs() < 1e-15);
    }

    #[test]
    fn trajectory_csv_header() {
        let d = two_point();
        let mut ch = LimitChain::new(&d, 1.0, 1.0, SimRng::seed_from_u64(0));
        ch.step();
        let mut buf = Vec::new();
        let mut w = TrajectoryWriter::new(&mut buf, 2).unwrap();
        w.write(&ch.state).unwrap();
        w.finish().unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("t,q_hat,l_hat_1,l_hat_2,y_hat,v_hat"));
    }
}
