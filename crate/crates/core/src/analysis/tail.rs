//! Tail-decay fits and empirical moment generating functions.

use std::io::Write;

use serde::Serialize;

use super::stationary::StationaryEstimate;
use super::AnalysisError;
use crate::stats::{least_squares, LinearFit};

/// Bins with fewer samples are left out of the fit.
pub const MIN_BIN_COUNT: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailFit {
    pub x_lo: f64,
    pub x_hi: f64,
    /// Slope of `log P[X ≥ x]` against `x`.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub theta_star_ref: f64,
    /// `|(−slope) − θ*| / θ*`.
    pub rel_error: f64,
    pub regression: LinearFit,
    pub bins_used: usize,
}

/// Least-squares fit of the log complementary CDF over `[x_lo, x_hi]`.
///
/// Defaults: `x_lo` is the 70th percentile of the positive samples and
/// `x_hi` the left edge of the last bin holding at least
/// [`MIN_BIN_COUNT`] samples.
pub fn fit_tail_exponent(
    est: &StationaryEstimate,
    x_lo: Option<f64>,
    x_hi: Option<f64>,
    theta_star_ref: f64,
) -> Result<TailFit, AnalysisError> {
    let h = &est.histogram;
    let x_lo = x_lo.unwrap_or_else(|| est.positive_quantile(0.7));
    let x_hi = x_hi.unwrap_or_else(|| {
        h.counts.iter().rposition(|&c| c >= MIN_BIN_COUNT).map(|b| h.bin_lo(b)).unwrap_or(x_lo)
    });
    let total = est.sample_count as f64;
    let eps = 1e-9 * h.width;
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..h.counts.len())
        .filter(|&b| {
            let lo = h.bin_lo(b);
            lo >= x_lo - eps && lo <= x_hi + eps && h.counts[b] >= MIN_BIN_COUNT
        })
        .map(|b| (h.bin_lo(b), (h.count_from(b) as f64 / total).ln()))
        .unzip();
    if xs.len() < 5 {
        return Err(AnalysisError::EmptyTail { x_lo, x_hi, usable: xs.len() });
    }
    let regression = least_squares(&xs, &ys);
    Ok(TailFit {
        x_lo,
        x_hi,
        slope: regression.slope,
        intercept: regression.intercept,
        r_squared: regression.r_squared,
        theta_star_ref,
        rel_error: ((-regression.slope) - theta_star_ref).abs() / theta_star_ref,
        regression,
        bins_used: xs.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MgfPoint {
    pub theta: f64,
    pub estimate: f64,
    /// `s/√N`, the jackknife standard error of a sample mean.
    pub se: f64,
    pub log_estimate: f64,
    /// Share of the estimate coming from the 10 largest samples.
    pub top_share: f64,
    pub unreliable: bool,
}

/// Sample mean of `exp(θx)` for each `θ`, computed in log space.
pub fn empirical_mgf(samples: &[f64], thetas: &[f64]) -> Vec<MgfPoint> {
    let n = samples.len();
    let mut top: Vec<f64> = samples.to_vec();
    let k = 10.min(n);
    if k > 0 && k < n {
        top.select_nth_unstable_by(n - k, |a, b| a.total_cmp(b));
    }
    let top = &top[n - k..];
    thetas
        .iter()
        .map(|&theta| {
            if theta == 0.0 || n == 0 {
                return MgfPoint { theta, estimate: 1.0, se: 0.0, log_estimate: 0.0, top_share: k as f64 / n.max(1) as f64, unreliable: false };
            }
            let shift = samples.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(theta * x));
            let (mut s1, mut s2) = (0.0, 0.0);
            for &x in samples {
                let e = (theta * x - shift).exp();
                s1 += e;
                s2 += e * e;
            }
            let nf = n as f64;
            let mean = s1 / nf;
            let var = (s2 / nf - mean * mean).max(0.0) * nf / (nf - 1.0).max(1.0);
            let top_sum: f64 = top.iter().map(|&x| (theta * x - shift).exp()).sum();
            let top_share = top_sum / s1;
            let log_estimate = mean.ln() + shift;
            MgfPoint {
                theta,
                estimate: log_estimate.exp(),
                se: (var / nf).sqrt() * shift.exp(),
                log_estimate,
                top_share,
                unreliable: top_share > 0.5,
            }
        })
        .collect()
}

/// Smallest flagged `θ`, if any.
pub fn first_unreliable(points: &[MgfPoint]) -> Option<f64> {
    points.iter().filter(|p| p.unreliable).map(|p| p.theta).reduce(f64::min)
}

pub fn write_mgf_csv<W: Write>(points: &[MgfPoint], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
