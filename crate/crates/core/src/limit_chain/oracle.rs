//! Numerical stationary law of the reflected Gaussian walk
//! `Q ← (Q + Â − β)^+`, `Â ~ N(0, c_a²)`.
//!
//! The CDF on a uniform grid is the fixed point of
//! `F(x) = ∫ Φ((x + β − y)/c_a) dF(y)`, iterated with a trapezoid rule on
//! the increments of `F` plus the atom at zero.

use std::io::Write;

use serde::Serialize;
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::exec::Execution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("grid spacing {h} exceeds c_a/20 = {limit}")]
    GridTooCoarse { h: f64, limit: f64 },
    #[error("invalid oracle parameters: {0}")]
    InvalidParameter(String),
    #[error("no convergence after {iterations} iterations (last change {change:e})")]
    NotConverged { iterations: usize, change: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub h: f64,
    pub x_max: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl GridSpec {
    /// Spacing `c_a/40` up to a point where the exponential tail is below
    /// `1e−14`.
    pub fn for_walk(beta: f64, c_a: f64) -> Self {
        let rate = 2.0 * beta / (c_a * c_a);
        Self { h: c_a / 40.0, x_max: (35.0 / rate).max(10.0 * c_a), tolerance: 1e-10, max_iterations: 200_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCdf {
    pub h: f64,
    pub x: Vec<f64>,
    pub cdf: Vec<f64>,
    pub iterations: usize,
    pub last_change: f64,
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

impl OracleCdf {
    pub fn atom_at_zero(&self) -> f64 {
        self.cdf[0]
    }

    /// Linear interpolation; 0 below zero, the last value past the grid.
    pub fn eval(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let pos = x / self.h;
        let i = pos.floor() as usize;
        if i + 1 >= self.cdf.len() {
            return *self.cdf.last().unwrap();
        }
        let w = pos - i as f64;
        self.cdf[i] * (1.0 - w) + self.cdf[i + 1] * w
    }

    /// Sup distance to the empirical CDF of `sorted`, evaluated at every
    /// sample point from both sides.
    pub fn sup_distance(&self, sorted: &[f64]) -> f64 {
        let n = sorted.len() as f64;
        let mut d: f64 = 0.0;
        let mut i = 0;
        while i < sorted.len() {
            let x = sorted[i];
            let mut j = i;
            while j < sorted.len() && sorted[j] == x {
                j += 1;
            }
            let f = self.eval(x);
            // the only jump of the limit law is the atom at zero
            let f_left = if x <= 0.0 { 0.0 } else { f };
            d = d.max((f - j as f64 / n).abs()).max((f_left - i as f64 / n).abs());
            i = j;
        }
        d
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "cdf"])?;
        for (x, c) in self.x.iter().zip(&self.cdf) {
            w.write_record([format!("{x}"), format!("{c:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Stationary CDF of the reflected walk on `[0, x_max]`.
pub fn reflected_walk_oracle(beta: f64, c_a: f64, grid: GridSpec, exec: Execution) -> Result<OracleCdf, OracleError> {
    if !(beta > 0.0) || !(c_a > 0.0) || !(grid.h > 0.0) || !(grid.x_max > grid.h) {
        return Err(OracleError::InvalidParameter(format!("beta={beta}, c_a={c_a}, grid={grid:?}")));
    }
    if grid.h > c_a / 20.0 {
        return Err(OracleError::GridTooCoarse { h: grid.h, limit: c_a / 20.0 });
    }
    let n = (grid.x_max / grid.h).ceil() as usize + 1;
    let x: Vec<f64> = (0..n).map(|i| i as f64 * grid.h).collect();
    // kernel[i][m] = Φ((x_i + β − y)/c_a) averaged over the cell ending at x_m
    let g = |xi: f64, y: f64| std_normal_cdf((xi + beta - y) / c_a);
    let kernel: Vec<Vec<f64>> = exec.map(n, |i| {
        let mut row = Vec::with_capacity(n);
        row.push(g(x[i], 0.0));
        for m in 1..n {
            row.push(0.5 * (g(x[i], x[m - 1]) + g(x[i], x[m])));
        }
        row
    });

    let mut cdf = vec![1.0; n];
    let mut mass = vec![0.0; n];
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < grid.max_iterations {
        mass[0] = cdf[0];
        for m in 1..n {
            mass[m] = cdf[m] - cdf[m - 1];
        }
        // mass beyond the grid sits at x_max
        let beyond = 1.0 - cdf[n - 1];
        let next: Vec<f64> = exec.map(n, |i| {
            let row = &kernel[i];
            let s: f64 = row.iter().zip(&mass).map(|(k, p)| k * p).sum();
            (s + beyond * g(x[i], x[n - 1])).min(1.0)
        });
        change = next.iter().zip(&cdf).fold(0.0f64, |d, (a, b)| d.max((a - b).abs()));
        cdf = next;
        iterations += 1;
        if change < grid.tolerance {
            break;
        }
    }
    if change >= grid.tolerance {
        return Err(OracleError::NotConverged { iterations, change });
    }
    Ok(OracleCdf { h: grid.h, x, cdf, iterations, last_change: change })
}
