//! Batch-means summaries of a stationary sample stream.

use std::io::Write;

use serde::Serialize;

use super::AnalysisError;
use crate::stats::{batch_means_by, Moments};

/// Fixed-width histogram anchored at a multiple of the bin width.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub width: f64,
    /// Left edge of bin 0.
    pub origin: f64,
    pub counts: Vec<u64>,
    pub below: u64,
    pub above: u64,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, width: f64) -> Self {
        let origin = (lo / width).floor() * width;
        let bins = (((hi - origin) / width).floor() as usize + 1).max(1);
        Self { width, origin, counts: vec![0; bins], below: 0, above: 0 }
    }

    pub fn bin_of(&self, x: f64) -> Option<usize> {
        let pos = ((x - self.origin) / self.width).floor();
        if pos < 0.0 || !pos.is_finite() {
            None
        } else {
            Some(pos as usize)
        }
    }

    pub fn push(&mut self, x: f64) {
        if x < self.origin {
            self.below += 1;
            return;
        }
        match self.bin_of(x) {
            Some(b) if b < self.counts.len() => self.counts[b] += 1,
            _ => self.above += 1,
        }
    }

    /// Adds another histogram with the same width and origin.
    pub fn merge(&mut self, other: &Histogram) {
        assert_eq!(self.width, other.width);
        assert_eq!(self.origin, other.origin);
        if other.counts.len() > self.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.below += other.below;
        self.above += other.above;
    }

    pub fn in_range(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.in_range() + self.below + self.above
    }

    pub fn bin_lo(&self, b: usize) -> f64 {
        self.origin + b as f64 * self.width
    }

    /// Samples at or above the left edge of bin `b`.
    pub fn count_from(&self, b: usize) -> u64 {
        self.counts[b.min(self.counts.len())..].iter().sum::<u64>() + self.above
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_lo", "bin_hi", "count"])?;
        for (b, c) in self.counts.iter().enumerate() {
            w.write_record([format!("{}", self.bin_lo(b)), format!("{}", self.bin_lo(b + 1)), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryEstimate {
    pub histogram: Histogram,
    pub mean: f64,
    pub variance: f64,
    /// 95% batch-means half-width for the mean.
    pub batch_ci: f64,
    /// Fraction of samples exactly equal to zero.
    pub atom_at_zero: f64,
    /// 95% batch-means half-width for `atom_at_zero`.
    pub atom_ci: f64,
    pub zero_count: u64,
    pub sample_count: usize,
    pub batch_count: usize,
    pub max: f64,
}

impl StationaryEstimate {
    /// Whether the atom's 95% interval lies inside `(lo, hi)`.
    pub fn atom_within(&self, lo: f64, hi: f64) -> bool {
        self.atom_at_zero - self.atom_ci > lo && self.atom_at_zero + self.atom_ci < hi
    }

    /// Empirical quantile of the strictly positive samples, from the
    /// histogram.
    pub fn positive_quantile(&self, q: f64) -> f64 {
        let h = &self.histogram;
        let positive = self.sample_count as u64 - self.zero_count - h.below;
        let target = (q * positive as f64).ceil() as u64;
        let zero_bin = h.bin_of(0.0);
        let mut seen = 0u64;
        for (b, &c) in h.counts.iter().enumerate() {
            let c = if Some(b) == zero_bin { c - self.zero_count } else { c };
            seen += c;
            if seen >= target.max(1) {
                return h.bin_lo(b + 1);
            }
        }
        h.bin_lo(h.counts.len())
    }
}

/// Minimum samples per batch.
pub const SAMPLES_PER_BATCH: usize = 1000;

/// Summarizes `samples[warmup..]`.
pub fn estimate_stationary(
    samples: &[f64],
    warmup: usize,
    batches: usize,
    bin_width: f64,
) -> Result<StationaryEstimate, AnalysisError> {
    if batches < 20 {
        return Err(AnalysisError::InvalidParameter(format!("batch count {batches} < 20")));
    }
    if !(bin_width > 0.0) {
        return Err(AnalysisError::InvalidParameter(format!("bin width {bin_width}")));
    }
    let data = samples.get(warmup..).unwrap_or(&[]);
    let need = batches * SAMPLES_PER_BATCH;
    if data.len() < need {
        return Err(AnalysisError::TooFewSamples { need, got: data.len() });
    }
    let m: Moments = data.iter().copied().collect();
    let mut histogram = Histogram::new(m.min, m.max, bin_width);
    let mut zero_count = 0u64;
    for &x in data {
        histogram.push(x);
        zero_count += (x == 0.0) as u64;
    }
    let mean_bm = batch_means_by(data.len(), batches, |i| data[i]);
    let atom_bm = batch_means_by(data.len(), batches, |i| (data[i] == 0.0) as u8 as f64);
    Ok(StationaryEstimate {
        histogram,
        mean: m.mean,
        variance: m.variance(),
        batch_ci: mean_bm.half_width,
        atom_at_zero: zero_count as f64 / data.len() as f64,
        atom_ci: atom_bm.half_width,
        zero_count,
        sample_count: data.len(),
        batch_count: batches,
        max: m.max,
    })
}
