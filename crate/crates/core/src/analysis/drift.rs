//! Empirical one-step drift of the geometric and quadratic Lyapunov
//! functions along simulated paths.
//!
//! `Φ_θ = exp(θ p̃·Ȳ + θ α·Z̄)` and `Ψ_θ = (p̃·Ȳ + α·Z̄)^θ`, where `Ȳ_t`
//! stacks the last `K` values of `Ŷ` and `Z̄_t` those of `Ẑ`. Only visited
//! states are examined, so the reports are conditional averages, not
//! certificates.

use serde::Serialize;

use super::AnalysisError;
use crate::arrivals::{make_source, ArrivalFamily};
use crate::finite_sim::EmbeddedChain;
use crate::limit_chain::{History, LimitChain};
use crate::model::{QedScaling, ServiceDistribution};
use crate::rng::{Purpose, SeedStream};
use crate::stats::{batch_means, least_squares, t975, Moments};

/// Largest log-ratio whose exponential is still finite.
const MAX_LOG_RATIO: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftMode {
    Geometric,
    Quadratic,
}

/// Regression of the `Ψ₂` increment on `Ψ₁` outside the exception set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraticFit {
    /// `−slope`.
    pub delta: f64,
    pub delta_ci: f64,
    /// Intercept.
    pub psi: f64,
    pub psi_ci: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub theta: f64,
    pub mode: DriftMode,
    /// Mean one-step ratio over visited states outside `R_β` (geometric),
    /// or mean `Ψ₂` increment there (quadratic).
    pub ratio_outside: f64,
    pub ratio_outside_ci: f64,
    /// Same, over all visited states.
    pub growth_ratio_all: f64,
    pub growth_ratio_all_ci: f64,
    pub exception_frequency: f64,
    pub steps: u64,
    pub outside_steps: u64,
    /// `exp(−θβ + θ²(c_a² + c_s²)/(2μ))`, the exact conditional mean ratio
    /// outside `R_β` (geometric mode only).
    pub analytic_ratio_outside: Option<f64>,
    pub fit: Option<QuadraticFit>,
}

impl DriftReport {
    /// Upper 95% bound of `ratio_outside` is at most `limit`.
    pub fn contracts_below(&self, limit: f64) -> bool {
        self.ratio_outside + self.ratio_outside_ci <= limit
    }

    /// Lower 95% bound of `growth_ratio_all` is at least `limit`.
    pub fn grows_above(&self, limit: f64) -> bool {
        self.growth_ratio_all - self.growth_ratio_all_ci >= limit
    }
}

/// `Ψ₁ = p̃·Ȳ + α·Z̄` given the pieces.
pub fn psi_one(tilde_p: &[f64], y_bar: &[f64], alpha_dot_z: f64) -> f64 {
    tilde_p.iter().zip(y_bar).map(|(a, b)| a * b).sum::<f64>() + alpha_dot_z
}

/// `Ψ_θ = Ψ₁^θ`.
pub fn psi_theta(tilde_p: &[f64], y_bar: &[f64], alpha_dot_z: f64, theta: f64) -> f64 {
    psi_one(tilde_p, y_bar, alpha_dot_z).powf(theta)
}

/// `log Φ_θ = θ Ψ₁`.
pub fn log_phi(tilde_p: &[f64], y_bar: &[f64], alpha_dot_z: f64, theta: f64) -> f64 {
    theta * psi_one(tilde_p, y_bar, alpha_dot_z)
}

fn log_phi_of(h: &History, tilde_p: &[f64], theta: f64) -> f64 {
    theta * (h.tilde_p_dot_y(tilde_p) + h.alpha_dot_z())
}

fn y_bar(h: &History) -> Vec<f64> {
    (0..h.k()).map(|i| h.y(i)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftRun {
    pub steps: u64,
    pub warmup: u64,
    pub batches: usize,
    pub seed: u64,
}

/// Geometric drift on the limiting chain.
pub fn drift_check_geometric(
    dist: &ServiceDistribution,
    beta: f64,
    c_a: f64,
    theta: f64,
    run: DriftRun,
) -> Result<DriftReport, AnalysisError> {
    if !(theta > 0.0) {
        return Err(AnalysisError::InvalidParameter(format!("theta must be positive, got {theta}")));
    }
    let seeds = SeedStream::new(run.seed);
    let mut chain = LimitChain::new(dist, beta, c_a, seeds.rng(0, Purpose::LimitChain));
    chain.advance(run.warmup.max(dist.k() as u64));
    let tp = dist.tilde_p().to_vec();

    let mut all = Vec::with_capacity(run.steps as usize);
    let mut outside = Vec::new();
    let mut before = log_phi_of(&chain.state.history, &tp, theta);
    for step in 0..run.steps {
        let was_outside = !chain.state.history.in_region(beta);
        chain.step_checked()?;
        let after = log_phi_of(&chain.state.history, &tp, theta);
        let d = after - before;
        if !(d.abs() < MAX_LOG_RATIO) {
            return Err(AnalysisError::Overflow { theta, step, log_ratio: d, y_bar: y_bar(&chain.state.history) });
        }
        let r = d.exp();
        all.push(r);
        if was_outside {
            outside.push(r);
        }
        before = after;
    }
    let all_bm = batch_means(&all, run.batches);
    let out_bm = batch_means(&outside, run.batches);
    let var = (c_a * c_a + dist.c_s().powi(2)) / dist.mu();
    Ok(DriftReport {
        theta,
        mode: DriftMode::Geometric,
        ratio_outside: out_bm.mean,
        ratio_outside_ci: out_bm.half_width,
        growth_ratio_all: all_bm.mean,
        growth_ratio_all_ci: all_bm.half_width,
        exception_frequency: 1.0 - outside.len() as f64 / all.len().max(1) as f64,
        steps: run.steps,
        outside_steps: outside.len() as u64,
        analytic_ratio_outside: Some((-theta * beta + theta * theta * var / 2.0).exp()),
        fit: None,
    })
}

/// Quadratic drift (`θ = 2`) on the finite-n embedded chain.
pub fn drift_check_quadratic(
    scaling: &QedScaling,
    dist: &ServiceDistribution,
    family: ArrivalFamily,
    run: DriftRun,
) -> Result<DriftReport, AnalysisError> {
    let seeds = SeedStream::new(run.seed);
    let source = make_source(family, scaling.lambda_n, seeds.seed(0, Purpose::Arrivals))?;
    let mut chain = EmbeddedChain::new(*scaling, dist.clone(), source, seeds.rng(0, Purpose::Service));
    let beta_n = scaling.beta_n;
    let tp = dist.tilde_p().to_vec();
    let mut history = History::new(dist.k());
    for _ in 0..run.warmup.max(dist.k() as u64) {
        chain.step()?;
        let v = chain.view();
        history.push(v.y_hat, &v.z_hat);
    }

    let mut x_out = Vec::new();
    let mut y_out = Vec::new();
    let mut all = Vec::with_capacity(run.steps as usize);
    let mut psi1 = history.tilde_p_dot_y(&tp) + history.alpha_dot_z();
    for _ in 0..run.steps {
        let was_outside = !history.in_region(beta_n);
        chain.step()?;
        let v = chain.view();
        history.push(v.y_hat, &v.z_hat);
        let next = history.tilde_p_dot_y(&tp) + history.alpha_dot_z();
        let incr = next * next - psi1 * psi1;
        all.push(incr);
        if was_outside {
            x_out.push(psi1);
            y_out.push(incr);
        }
        psi1 = next;
    }
    if x_out.len() < run.batches * 10 {
        return Err(AnalysisError::TooFewSamples { need: run.batches * 10, got: x_out.len() });
    }

    // batch-wise regressions give an autocorrelation-aware spread
    let size = x_out.len() / run.batches;
    let mut slopes = Moments::new();
    let mut intercepts = Moments::new();
    for b in 0..run.batches {
        let r = b * size..(b + 1) * size;
        let f = least_squares(&x_out[r.clone()], &y_out[r]);
        slopes.push(f.slope);
        intercepts.push(f.intercept);
    }
    let t = t975(run.batches - 1);
    let bn = run.batches as f64;
    let pooled = least_squares(&x_out, &y_out);
    let out_bm = batch_means(&y_out, run.batches);
    let all_bm = batch_means(&all, run.batches);
    Ok(DriftReport {
        theta: 2.0,
        mode: DriftMode::Quadratic,
        ratio_outside: out_bm.mean,
        ratio_outside_ci: out_bm.half_width,
        growth_ratio_all: all_bm.mean,
        growth_ratio_all_ci: all_bm.half_width,
        exception_frequency: 1.0 - x_out.len() as f64 / all.len() as f64,
        steps: run.steps,
        outside_steps: x_out.len() as u64,
        analytic_ratio_outside: None,
        fit: Some(QuadraticFit {
            delta: -pooled.slope,
            delta_ci: t * (slopes.variance() / bn).sqrt(),
            psi: pooled.intercept,
            psi_ci: t * (intercepts.variance() / bn).sqrt(),
            r_squared: pooled.r_squared,
        }),
    })
}
