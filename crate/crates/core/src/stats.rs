//! Small statistical building blocks shared across modules: mergeable
//! moment accumulators, batch means, and two-sample Kolmogorov-Smirnov.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Running mean and central moments up to order four.
///
/// `merge` is exact (pairwise update), so accumulators filled by parallel
/// workers can be reduced in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
    pub min: f64,
    pub max: f64,
}

impl Moments {
    pub fn new() -> Self {
        Self { min: f64::INFINITY, max: f64::NEG_INFINITY, ..Default::default() }
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.count as f64;
        self.count += 1;
        let n = self.count as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2 - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d2 = delta * delta;
        let d3 = d2 * delta;
        let d4 = d2 * d2;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3 + other.m3 + d3 * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        self.mean += delta * nb / n;
        self.m2 = m2;
        self.m3 = m3;
        self.m4 = m4;
        self.count += other.count;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count as f64 - 1.0)
        }
    }

    /// Population (biased) central moment of order 2.
    pub fn central2(&self) -> f64 {
        if self.count == 0 { 0.0 } else { self.m2 / self.count as f64 }
    }

    pub fn central4(&self) -> f64 {
        if self.count == 0 { 0.0 } else { self.m4 / self.count as f64 }
    }

    pub fn skewness(&self) -> f64 {
        let c2 = self.central2();
        if c2 <= 0.0 {
            return 0.0;
        }
        (self.m3 / self.count as f64) / c2.powf(1.5)
    }

    pub fn excess_kurtosis(&self) -> f64 {
        let c2 = self.central2();
        if c2 <= 0.0 {
            return 0.0;
        }
        self.central4() / (c2 * c2) - 3.0
    }

    /// Standard error of the sample variance, `sqrt((m4 − m2²)/N)`.
    pub fn variance_se(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let c2 = self.central2();
        ((self.central4() - c2 * c2).max(0.0) / self.count as f64).sqrt()
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::new();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// Two-sided Student-t quantile at 97.5% for `dof` degrees of freedom.
pub fn t975(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof.max(1) as f64)
        .map(|t| t.inverse_cdf(0.975))
        .unwrap_or(1.96)
}

/// Batch-means summary of an autocorrelated series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatchMeans {
    pub mean: f64,
    /// Standard error of the grand mean from the spread of batch means.
    pub se: f64,
    /// 95% half-width, `t_{0.975, B-1} · se`.
    pub half_width: f64,
    pub batches: usize,
    pub batch_size: usize,
}

/// Splits `samples` into `batches` contiguous batches of equal size (the
/// remainder at the end is dropped from the batch statistic).
pub fn batch_means(samples: &[f64], batches: usize) -> BatchMeans {
    batch_means_by(samples.len(), batches, |i| samples[i])
}

pub fn batch_means_by(len: usize, batches: usize, value: impl Fn(usize) -> f64) -> BatchMeans {
    let batches = batches.max(2);
    let size = len / batches;
    if size == 0 {
        let mean = (0..len).map(&value).sum::<f64>() / len.max(1) as f64;
        return BatchMeans { mean, se: f64::INFINITY, half_width: f64::INFINITY, batches, batch_size: 0 };
    }
    let means: Moments = (0..batches)
        .map(|b| (b * size..(b + 1) * size).map(&value).sum::<f64>() / size as f64)
        .collect();
    let se = (means.variance() / batches as f64).sqrt();
    BatchMeans { mean: means.mean, se, half_width: t975(batches - 1) * se, batches, batch_size: size }
}

/// Two-sample Kolmogorov-Smirnov distance `sup_x |F_a(x) − F_b(x)|`.
///
/// Inputs need not be sorted. Ties (including atoms) are handled by
/// advancing both empirical CDFs past each distinct value before comparing.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    ks_sorted(&a, &b)
}

/// As [`ks_two_sample`] for already sorted inputs.
pub fn ks_sorted(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 1.0;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic 95% critical value of the two-sample KS statistic for
/// independent samples of the given sizes.
pub fn ks_critical_95(na: usize, nb: usize) -> f64 {
    let (na, nb) = (na as f64, nb as f64);
    1.358 * ((na + nb) / (na * nb)).sqrt()
}

/// Two-sample KS with a delete-one-group jackknife standard error.
///
/// `a` and `b` are split into the same number of groups (typically one per
/// independent replication).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsEstimate {
    pub distance: f64,
    pub se: f64,
    pub groups: usize,
}

pub fn ks_jackknife(a_groups: &[Vec<f64>], b_groups: &[Vec<f64>]) -> KsEstimate {
    let flatten = |groups: &[Vec<f64>], skip: Option<usize>| -> Vec<f64> {
        let mut v: Vec<f64> = groups
            .iter()
            .enumerate()
            .filter(|(g, _)| Some(*g) != skip)
            .flat_map(|(_, s)| s.iter().copied())
            .collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let distance = ks_sorted(&flatten(a_groups, None), &flatten(b_groups, None));
    let groups = a_groups.len().min(b_groups.len());
    if groups < 2 {
        return KsEstimate { distance, se: f64::NAN, groups };
    }
    let leave_out: Vec<f64> = (0..groups)
        .map(|g| ks_sorted(&flatten(a_groups, Some(g)), &flatten(b_groups, Some(g))))
        .collect();
    let mean = leave_out.iter().sum::<f64>() / groups as f64;
    let g = groups as f64;
    let se = ((g - 1.0) / g * leave_out.iter().map(|d| (d - mean).powi(2)).sum::<f64>()).sqrt();
    KsEstimate { distance, se, groups }
}

/// Ordinary least squares `y = intercept + slope · x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub r_squared: f64,
    pub points: usize,
}

pub fn least_squares(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len().min(y.len());
    let nf = n as f64;
    let mx = x[..n].iter().sum::<f64>() / nf;
    let my = y[..n].iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse = (syy - slope * sxy).max(0.0);
    let s2 = if n > 2 { sse / (nf - 2.0) } else { f64::NAN };
    let slope_se = (s2 / sxx).sqrt();
    let intercept_se = (s2 * (1.0 / nf + mx * mx / sxx)).sqrt();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    LinearFit { slope, intercept, slope_se, intercept_se, r_squared, points: n }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ks_basic_cases() {
        assert_eq!(ks_two_sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(ks_two_sample(&[0.0, 0.0], &[1.0, 1.0]), 1.0);
        // atoms: a has P[0] = 1/2, b has P[0] = 1/4
        let d = ks_two_sample(&[0.0, 0.0, 1.0, 2.0], &[0.0, 1.0, 1.0, 2.0]);
        assert!((d - 0.25).abs() < 1e-15);
    }

    #[test]
    fn least_squares_exact_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.0 * v).collect();
        let fit = least_squares(&x, &y);
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!((fit.intercept - 3.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn batch_means_constant_series() {
        let bm = batch_means(&vec![2.5; 3200], 32);
        assert_eq!(bm.mean, 2.5);
        assert_eq!(bm.se, 0.0);
        assert_eq!(bm.batch_size, 100);
    }

    #[test]
    fn t_quantile_sane() {
        assert!((t975(31) - 2.0395).abs() < 1e-3);
        assert!((t975(100_000) - 1.96).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn merge_matches_sequential(xs in prop::collection::vec(-100.0f64..100.0, 2..200), cut in 0usize..200) {
            let cut = cut.min(xs.len());
            let whole: Moments = xs.iter().copied().collect();
            let mut left: Moments = xs[..cut].iter().copied().collect();
            let right: Moments = xs[cut..].iter().copied().collect();
            left.merge(&right);
            let scale = 1.0 + whole.central4().abs();
            prop_assert_eq!(left.count, whole.count);
            prop_assert!((left.mean - whole.mean).abs() < 1e-9);
            prop_assert!((left.variance() - whole.variance()).abs() < 1e-8 * (1.0 + whole.variance()));
            prop_assert!((left.central4() - whole.central4()).abs() < 1e-8 * scale);
            prop_assert!((left.skewness() - whole.skewness()).abs() < 1e-6);
        }

        #[test]
        fn ks_is_a_symmetric_distance(a in prop::collection::vec(0.0f64..5.0, 1..60), b in prop::collection::vec(0.0f64..5.0, 1..60)) {
            let d1 = ks_two_sample(&a, &b);
            let d2 = ks_two_sample(&b, &a);
            prop_assert!((d1 - d2).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&d1));
            prop_assert_eq!(ks_two_sample(&a, &a), 0.0);
        }
    }
}
