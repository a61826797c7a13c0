//! Pathwise identities and bounds for `Ŷ` and `V̂` along a stored trajectory.

use serde::Serialize;
use thiserror::Error;

use super::Trajectory;
use crate::model::ServiceDistribution;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CheckError {
    #[error("window of {len} steps is too short, need at least {need}")]
    WindowTooShort { len: usize, need: usize },
}

const SLACK: f64 = 1e-9;

fn need(tr: &Trajectory, n: usize) -> Result<(), CheckError> {
    if tr.len() < n {
        return Err(CheckError::WindowTooShort { len: tr.len(), need: n });
    }
    Ok(())
}

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityReport {
    pub max_residual: f64,
    /// `1 + max |Ŷ|` over the window.
    pub scale: f64,
    pub checked: usize,
}

impl IdentityReport {
    pub fn holds(&self) -> bool {
        self.max_residual <= 1e-9 * self.scale
    }
}

/// Largest `|Ŷ_t − V̂_t − Σ_i p_i (Ŷ_{t−i} − β)^+|` over `t ≥ K`.
pub fn y_identity_residual(tr: &Trajectory, dist: &ServiceDistribution, beta: f64) -> Result<IdentityReport, CheckError> {
    let k = dist.k();
    need(tr, k + 1)?;
    let p = dist.p();
    let mut max_residual: f64 = 0.0;
    for t in k..tr.len() {
        let past: f64 = (1..=k).map(|i| p[i - 1] * pos(tr.y[t - i] - beta)).sum();
        max_residual = max_residual.max((tr.y[t] - tr.v[t] - past).abs());
    }
    let scale = 1.0 + tr.y.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    Ok(IdentityReport { max_residual, scale, checked: tr.len() - k })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub k: usize,
    /// Index sequence `i_1..i_k` used for the lower bound.
    pub indices: Vec<usize>,
    pub upper_violations: u64,
    pub lower_violations: u64,
    /// Steps with `Ŷ_t < V̂_t`.
    pub floor_violations: u64,
    pub checked: usize,
}

impl BoundsReport {
    pub fn violations(&self) -> u64 {
        self.upper_violations + self.lower_violations + self.floor_violations
    }
}

/// `i_1..i_k` cycling through the support of `p`.
pub fn cycling_indices(dist: &ServiceDistribution, k: usize) -> Vec<usize> {
    let support: Vec<usize> = dist.support().collect();
    (0..k).map(|j| support[j % support.len()]).collect()
}

/// Checks, for every admissible `t`,
///
/// ```text
/// Ŷ_t ≤ Σ_{i=0}^{k} (V̂_{t−i})^+ + Σ_{i=k+1}^{k+K} p̃_{i−k} (Ŷ_{t−i} − β)^+
/// Ŷ_t ≥ p(k) Ŷ_{t−s(k)} − Σ_{j<k} (β − V̂_{t−s(j)})^+
/// Ŷ_t ≥ V̂_t
/// ```
///
/// with `p(k) = Π p_{i_j}` and `s(k) = Σ i_j` for the cycling index sequence.
pub fn y_bounds_check(tr: &Trajectory, dist: &ServiceDistribution, beta: f64, k: usize) -> Result<BoundsReport, CheckError> {
    let big_k = dist.k();
    need(tr, k + big_k + 1)?;
    let p = dist.p();
    let tp = dist.tilde_p();
    let indices = cycling_indices(dist, k);
    let mut offsets = vec![0usize];
    let mut prod = 1.0;
    for &i in &indices {
        offsets.push(offsets.last().unwrap() + i);
        prod *= p[i - 1];
    }
    let s_k = *offsets.last().unwrap();

    let mut report = BoundsReport {
        k,
        indices: indices.clone(),
        upper_violations: 0,
        lower_violations: 0,
        floor_violations: 0,
        checked: 0,
    };
    let first = (k + big_k).max(s_k) + big_k;
    for t in first..tr.len() {
        let y = tr.y[t];
        let slack = SLACK * (1.0 + y.abs());
        let upper: f64 = (0..=k).map(|i| pos(tr.v[t - i])).sum::<f64>()
            + (k + 1..=k + big_k).map(|i| tp[i - k - 1] * pos(tr.y[t - i] - beta)).sum::<f64>();
        if y > upper + slack * (1.0 + upper.abs()) {
            report.upper_violations += 1;
        }
        let lower = prod * tr.y[t - s_k] - offsets[..k].iter().map(|&s| pos(beta - tr.v[t - s])).sum::<f64>();
        if y < lower - slack * (1.0 + lower.abs()) {
            report.lower_violations += 1;
        }
        if y < tr.v[t] - slack {
            report.floor_violations += 1;
        }
        report.checked += 1;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SandwichReport {
    pub j: usize,
    /// Violations of the bound with `V̄` summed from the window start.
    pub violations: u64,
    /// Violations of the same bound with `V̄_{t+j}` restricted to the last
    /// `K` values of `|V̂|` (informational).
    pub windowed_violations: u64,
    pub checked: usize,
}

/// Checks `−V̄ − β B_j ≤ Ȳ_{t+j} − (Ȳ_t)^+ Γ^j ≤ V̄` componentwise, where
/// `B_j = (j, (j−1)^+, …)` and `V̄_c = Σ_{i=t−K+1}^{t+j−c} |V̂_i|`.
pub fn gamma_sandwich_check(tr: &Trajectory, dist: &ServiceDistribution, beta: f64, j: usize) -> Result<SandwichReport, CheckError> {
    let k = dist.k();
    need(tr, j + k)?;
    let p = dist.p();
    // prefix[i] = Σ_{m<i} |V̂_m|
    let mut prefix = Vec::with_capacity(tr.len() + 1);
    prefix.push(0.0);
    for v in &tr.v {
        prefix.push(prefix.last().unwrap() + v.abs());
    }
    let sum_abs = |lo: usize, hi: usize| if hi < lo { 0.0 } else { prefix[hi + 1] - prefix[lo] };

    let mut report = SandwichReport { j, violations: 0, windowed_violations: 0, checked: 0 };
    let mut x = vec![0.0; k];
    let mut next = vec![0.0; k];
    for t in (k - 1)..(tr.len() - j) {
        for (c, xc) in x.iter_mut().enumerate() {
            *xc = pos(tr.y[t - c]);
        }
        for _ in 0..j {
            next[0] = x.iter().zip(p).map(|(a, b)| a * b).sum();
            next[1..].copy_from_slice(&x[..k - 1]);
            std::mem::swap(&mut x, &mut next);
        }
        let lo = t + 1 - k;
        let mut bad = false;
        let mut bad_windowed = false;
        #[allow(clippy::needless_range_loop)]
        for c in 0..k {
            let diff = tr.y[t + j - c] - x[c];
            let slack = SLACK * (1.0 + tr.y[t + j - c].abs() + x[c].abs());
            let b = j.saturating_sub(c) as f64;
            let anchored = sum_abs(lo, t + j - c);
            if diff > anchored + slack || diff < -anchored - beta * b - slack {
                bad = true;
            }
            let windowed = sum_abs(t + j + 1 - k, t + j - c);
            if diff > windowed + slack || diff < -windowed - beta * b - slack {
                bad_windowed = true;
            }
        }
        report.violations += bad as u64;
        report.windowed_violations += bad_windowed as u64;
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit_chain::{record, LimitChain};
    use crate::rng::SimRng;
    use rand::SeedableRng;

    fn run(dist: &ServiceDistribution, beta: f64, steps: usize, seed: u64) -> Trajectory {
        let mut ch = LimitChain::new(dist, beta, 1.0, SimRng::seed_from_u64(seed));
        record(&mut ch, steps).unwrap()
    }

    #[test]
    fn hand_built_trace() {
        // p = (.5,.5), β = 1, starting from zero; Â = (1, 2, −1), Ĵ-vector = 0.
        // Ẑ_t = p Â_t, and the chain gives Ŷ = (1, 2.5, 0.75).
        let d = ServiceDistribution::from_pairs(&[(1, 0.5), (2, 0.5)]).unwrap();
        let tr = Trajectory {
            q: vec![0.0, 1.5, 0.0],
            y: vec![1.0, 2.5, 0.75],
            // V̂_t = Â_t + 0.5 Â_{t−1}
            v: vec![1.0, 2.5, 0.0],
        };
        let r = y_identity_residual(&tr, &d, 1.0).unwrap();
        assert_eq!(r.max_residual, 0.0);
        assert_eq!(r.checked, 1);
    }

    #[test]
    fn hand_built_trace_matches_chain() {
        use crate::limit_chain::{limit_step, History, LimitChainState};
        let d = ServiceDistribution::from_pairs(&[(1, 0.5), (2, 0.5)]).unwrap();
        let mut s = LimitChainState { t: 0, q_hat: 0.0, l_hat: vec![0.0; 2], history: History::new(2) };
        let mut ys = vec![];
        for a in [1.0, 2.0, -1.0] {
            limit_step(&mut s, 1.0, d.p(), a, &[0.0, 0.0]);
            ys.push(s.y_hat());
        }
        assert_eq!(ys, vec![1.0, 2.5, 0.75]);
    }

    #[test]
    fn short_windows_are_rejected() {
        let d = ServiceDistribution::from_pairs(&[(1, 0.5), (2, 0.5)]).unwrap();
        let tr = run(&d, 1.0, 2, 0);
        assert!(matches!(y_identity_residual(&tr, &d, 1.0), Err(CheckError::WindowTooShort { .. })));
        assert!(y_bounds_check(&tr, &d, 1.0, 1).is_err());
        assert!(gamma_sandwich_check(&tr, &d, 1.0, 5).is_err());
    }

    #[test]
    fn checks_hold_on_simulated_paths() {
        let d = ServiceDistribution::from_pairs(&[(1, 0.3), (2, 0.3), (3, 0.4)]).unwrap();
        let tr = run(&d, 0.5, 100_000, 7);
        assert!(y_identity_residual(&tr, &d, 0.5).unwrap().holds());
        for k in [0, 1, 5, 10] {
            let r = y_bounds_check(&tr, &d, 0.5, k).unwrap();
            assert_eq!(r.violations(), 0, "{r:?}");
        }
        for j in [0, 1, 5, 50] {
            let r = gamma_sandwich_check(&tr, &d, 0.5, j).unwrap();
            assert_eq!(r.violations, 0, "{r:?}");
        }
    }

    #[test]
    fn windowed_sandwich_fails_for_unit_service() {
        // Ŷ_{t+2} − Ŷ_t^+ can exceed |V̂_{t+2}| when Â_{t+1} > 2β
        let d = ServiceDistribution::deterministic();
        let tr = run(&d, 0.5, 20_000, 3);
        let r = gamma_sandwich_check(&tr, &d, 0.5, 2).unwrap();
        assert_eq!(r.violations, 0);
        assert!(r.windowed_violations > 0);
    }
}
