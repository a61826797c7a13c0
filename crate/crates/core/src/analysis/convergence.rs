//! Distance between finite-n and limiting stationary `Q̂` as `n` grows.

use std::io::Write;

use serde::Serialize;

use super::AnalysisError;
use crate::arrivals::{make_source, ArrivalFamily};
use crate::exec::Execution;
use crate::finite_sim::{default_warmup, EmbeddedChain};
use crate::limit_chain::LimitChain;
use crate::model::{qed_scaling, ServiceDistribution};
use crate::rng::{Purpose, SeedStream};
use crate::stats::{ks_jackknife, KsEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceBudget {
    /// Total samples per population, split evenly over replications.
    pub samples: usize,
    pub replications: usize,
    /// Steps between retained samples.
    pub spacing: u64,
    /// Finite-n warmup in slots; `None` uses `20·n·E S`.
    pub finite_warmup: Option<u64>,
    pub limit_warmup: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: u64,
    pub ks: f64,
    pub se: f64,
    pub samples: usize,
    pub finite_atom: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub limit_atom: f64,
    /// Limit chain against an independent copy of itself.
    pub null_case: KsEstimate,
}

impl ConvergenceTable {
    /// `D_i ≥ D_{i+1} − 2(se_i + se_{i+1})` for consecutive rows.
    pub fn non_increasing_within_noise(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].ks <= w[0].ks + 2.0 * (w[0].se + w[1].se))
    }

    /// `D_i − D_{i+1} > 2 √(se_i² + se_{i+1}²)` for consecutive rows.
    pub fn strictly_decreasing_beyond_noise(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[0].ks - w[1].ks > 2.0 * (w[0].se.powi(2) + w[1].se.powi(2)).sqrt())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn limit_groups(
    dist: &ServiceDistribution,
    beta: f64,
    c_a: f64,
    budget: &ConvergenceBudget,
    seeds: &SeedStream,
    rep_offset: u64,
    exec: Execution,
) -> Vec<Vec<f64>> {
    let per = budget.samples / budget.replications;
    exec.map(budget.replications, |r| {
        let mut chain = LimitChain::new(dist, beta, c_a, seeds.rng(rep_offset + r as u64, Purpose::LimitChain));
        chain.advance(budget.limit_warmup);
        chain.sample_q_hat(per, budget.spacing)
    })
}

/// KS distance between finite-n and limit `Q̂` for each `n`, with
/// jackknife standard errors over replications.
pub fn convergence_study(
    dist: &ServiceDistribution,
    beta: f64,
    family: ArrivalFamily,
    ns: &[u64],
    budget: ConvergenceBudget,
    seed: u64,
    exec: Execution,
) -> Result<ConvergenceTable, AnalysisError> {
    if budget.replications < 2 || budget.samples < budget.replications {
        return Err(AnalysisError::InvalidParameter("need at least two replications".into()));
    }
    if ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(AnalysisError::InvalidParameter("n list must be increasing".into()));
    }
    let seeds = SeedStream::new(seed);
    let c_a = family.c_a();
    let reps = budget.replications as u64;
    let limit = limit_groups(dist, beta, c_a, &budget, &seeds, 0, exec);
    let null = limit_groups(dist, beta, c_a, &budget, &seeds, reps, exec);
    let per = budget.samples / budget.replications;

    let mut rows = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        let scaling = qed_scaling(n, beta, dist)?;
        let warmup = budget.finite_warmup.unwrap_or_else(|| default_warmup(n, dist));
        let base = (2 + i as u64) * reps;
        let groups = exec.map(budget.replications, |r| -> Result<Vec<f64>, AnalysisError> {
            let rep = base + r as u64;
            let source = make_source(family, scaling.lambda_n, seeds.seed(rep, Purpose::Arrivals))?;
            let mut chain = EmbeddedChain::new(scaling, dist.clone(), source, seeds.rng(rep, Purpose::Service));
            for _ in 0..warmup {
                chain.step()?;
            }
            let states = chain.sample_states(per, budget.spacing)?;
            Ok(states.iter().map(|s| s.q as f64 / scaling.sqrt_n()).collect())
        });
        let groups: Vec<Vec<f64>> = groups.into_iter().collect::<Result<_, _>>()?;
        let zeros = groups.iter().flatten().filter(|&&q| q == 0.0).count();
        let est = ks_jackknife(&groups, &limit);
        rows.push(ConvergenceRow { n, ks: est.distance, se: est.se, samples: per * budget.replications, finite_atom: zeros as f64 / (per * budget.replications) as f64 });
    }
    let limit_zeros = limit.iter().flatten().filter(|&&q| q == 0.0).count();
    Ok(ConvergenceTable {
        rows,
        limit_atom: limit_zeros as f64 / (per * budget.replications) as f64,
        null_case: ks_jackknife(&limit, &null),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_critical_95;

    #[test]
    fn smoke_budget_reports_errors() {
        let d = ServiceDistribution::from_pairs(&[(1, 0.5), (2, 0.5)]).unwrap();
        let budget = ConvergenceBudget { samples: 4_000, replications: 4, spacing: 2, finite_warmup: Some(500), limit_warmup: 500 };
        let t = convergence_study(&d, 1.0, ArrivalFamily::Exponential, &[25, 100], budget, 3, Execution::Parallel).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert!(t.rows.iter().all(|r| r.se.is_finite() && r.ks > 0.0));
        // null case sits at the two-sample noise level
        assert!(t.null_case.distance < 3.0 * ks_critical_95(4_000, 4_000));
    }

    #[test]
    fn rejects_bad_lists() {
        let d = ServiceDistribution::deterministic();
        let budget = ConvergenceBudget { samples: 100, replications: 2, spacing: 1, finite_warmup: None, limit_warmup: 10 };
        assert!(convergence_study(&d, 1.0, ArrivalFamily::Exponential, &[100, 25], budget, 0, Execution::Sequential).is_err());
    }
}
