//! Service-time laws on the integer lattice, QED scaling arithmetic, and the
//! constant objects derived from them (critical exponent, mix covariance,
//! Lyapunov weights, and the age-chain matrix).

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `|Σp − 1|` below which input masses are renormalized.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("service distribution has no support")]
    EmptySupport,
    #[error("negative probability {mass} at service time {index}")]
    NegativeMass { index: u32, mass: f64 },
    #[error("positive mass {0} at service time 0 (instantaneous service)")]
    ZeroServiceMass(f64),
    #[error("service masses sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("gcd of service support is {0}; rescale time so the lattice step is 1")]
    LatticeNotReduced(u32),
    #[error("support has no relatively prime pair; the age chain is periodic")]
    NotAperiodic,
    #[error("c_a = c_s = 0: no exponential tail applies")]
    DegenerateNoise,
    #[error("beta * sqrt(n) >= n for n = {n}, beta = {beta}: arrival rate would be non-positive")]
    Overloaded { n: u64, beta: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// Law of the service time `S` on `{1, .., K}` with `p_K > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ServiceSpec", into = "ServiceSpec")]
pub struct ServiceDistribution {
    /// `p[k-1] = P[S = k]`.
    p: Vec<f64>,
    /// `tilde_p[k-1] = P[S >= k]`.
    tilde_p: Vec<f64>,
    mean: f64,
    sigma: f64,
}

/// Wire form: `{"p": {"1": 0.5, "2": 0.5}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ServiceSpec {
    pub p: BTreeMap<String, f64>,
}

impl TryFrom<ServiceSpec> for ServiceDistribution {
    type Error = ModelError;

    fn try_from(raw: ServiceSpec) -> Result<Self, ModelError> {
        let mut mass = BTreeMap::new();
        for (key, value) in raw.p {
            let k: u32 = key.trim().parse().map_err(|_| {
                ModelError::InvalidParameter(format!("service time key {key:?} is not a non-negative integer"))
            })?;
            mass.insert(k, value);
        }
        ServiceDistribution::new(&mass)
    }
}

impl From<ServiceDistribution> for ServiceSpec {
    fn from(dist: ServiceDistribution) -> Self {
        let p = dist
            .p
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(i, &m)| ((i + 1).to_string(), m))
            .collect();
        ServiceSpec { p }
    }
}

impl ServiceDistribution {
    /// Validates a mass map `k -> P[S = k]`.
    ///
    /// Masses whose total is within [`NORMALIZATION_TOL`] of one are
    /// renormalized; anything further off is rejected. Trailing zero masses
    /// are trimmed so that `p_K > 0`.
    pub fn new(mass: &BTreeMap<u32, f64>) -> Result<Self, ModelError> {
        for (&k, &m) in mass {
            if !(m >= 0.0) || !m.is_finite() {
                return Err(ModelError::NegativeMass { index: k, mass: m });
            }
        }
        if let Some(&m0) = mass.get(&0) {
            if m0 > 0.0 {
                return Err(ModelError::ZeroServiceMass(m0));
            }
        }
        let support: Vec<u32> = mass
            .iter()
            .filter(|(&k, &m)| k > 0 && m > 0.0)
            .map(|(&k, _)| k)
            .collect();
        let Some(&max_k) = support.last() else {
            return Err(ModelError::EmptySupport);
        };
        let total: f64 = mass.values().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(ModelError::NotNormalized(total));
        }
        let g = support.iter().fold(0, |acc, &k| gcd(acc, k));
        if g > 1 {
            return Err(ModelError::LatticeNotReduced(g));
        }

        let big_k = max_k as usize;
        let mut p = vec![0.0; big_k];
        for (&k, &m) in mass {
            if k > 0 && m > 0.0 {
                p[k as usize - 1] = m / total;
            }
        }
        Ok(Self::from_normalized(p))
    }

    /// Convenience constructor from `(k, mass)` pairs.
    pub fn from_pairs(pairs: &[(u32, f64)]) -> Result<Self, ModelError> {
        let mut mass = BTreeMap::new();
        for &(k, m) in pairs {
            *mass.entry(k).or_insert(0.0) += m;
        }
        Self::new(&mass)
    }

    /// Deterministic unit service, `S = 1`.
    pub fn deterministic() -> Self {
        Self::from_normalized(vec![1.0])
    }

    fn from_normalized(p: Vec<f64>) -> Self {
        let mut tilde_p = vec![0.0; p.len()];
        let mut acc = 0.0;
        for i in (0..p.len()).rev() {
            acc += p[i];
            tilde_p[i] = acc;
        }
        // Pin the head of the tail vector; summation dust is not allowed to
        // leak into P[S >= 1].
        tilde_p[0] = 1.0;
        let mean: f64 = p.iter().enumerate().map(|(i, &m)| (i + 1) as f64 * m).sum();
        let second: f64 = p
            .iter()
            .enumerate()
            .map(|(i, &m)| ((i + 1) as f64 - mean).powi(2) * m)
            .sum();
        Self { p, tilde_p, mean, sigma: second.sqrt() }
    }

    /// Largest support point `K`.
    pub fn k(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn tilde_p(&self) -> &[f64] {
        &self.tilde_p
    }

    /// `E S = 1/μ`.
    pub fn mean_service(&self) -> f64 {
        self.mean
    }

    /// Service rate `μ = 1 / E S`.
    pub fn mu(&self) -> f64 {
        1.0 / self.mean
    }

    /// Standard deviation of `S`.
    pub fn sigma_s(&self) -> f64 {
        self.sigma
    }

    /// Coefficient of variation `σ_s / E S`.
    pub fn c_s(&self) -> f64 {
        self.sigma / self.mean
    }

    /// Support points with positive mass.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.p.iter().enumerate().filter(|(_, &m)| m > 0.0).map(|(i, _)| i + 1)
    }
}

impl fmt::Display for ServiceDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, k) in self.support().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{k}: {}", self.p[k - 1])?;
        }
        write!(f, "}}")
    }
}

/// Server count and arrival rate of the `n`-th system under QED scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QedScaling {
    pub n: u64,
    pub beta: f64,
    pub lambda_n: f64,
    pub rho_n: f64,
    pub beta_n: f64,
    pub mu: f64,
}

impl QedScaling {
    pub fn sqrt_n(&self) -> f64 {
        (self.n as f64).sqrt()
    }

    /// Offered load `λ_n / μ`.
    pub fn offered_load(&self) -> f64 {
        self.lambda_n / self.mu
    }
}

/// `λ_n = μ(n − β√n)`, so that `β_n = β` holds exactly.
pub fn qed_scaling(n: u64, beta: f64, dist: &ServiceDistribution) -> Result<QedScaling, ModelError> {
    if n == 0 {
        return Err(ModelError::InvalidParameter("server count must be >= 1".into()));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(ModelError::InvalidParameter(format!("beta must be positive, got {beta}")));
    }
    let nf = n as f64;
    let mu = dist.mu();
    let spare = beta * nf.sqrt();
    if spare >= nf {
        return Err(ModelError::Overloaded { n, beta });
    }
    let lambda_n = mu * (nf - spare);
    Ok(QedScaling {
        n,
        beta,
        lambda_n,
        rho_n: lambda_n / (nf * mu),
        beta_n: beta,
        mu,
    })
}

/// `θ* = 2β / (c_a² + c_s²)`.
pub fn theta_star(beta: f64, c_a: f64, c_s: f64) -> Result<f64, ModelError> {
    let noise = c_a * c_a + c_s * c_s;
    if noise <= 0.0 {
        return Err(ModelError::DegenerateNoise);
    }
    Ok(2.0 * beta / noise)
}

/// Covariance template of the service-mix noise: `diag(p) − pᵀp`.
///
/// The limiting mix vector has covariance `μΣ`; the factor `μ` is applied at
/// sampling time.
pub fn covariance_sigma(dist: &ServiceDistribution) -> DMatrix<f64> {
    let p = dist.p();
    let k = p.len();
    DMatrix::from_fn(k, k, |i, j| if i == j { (1.0 - p[i]) * p[i] } else { -p[i] * p[j] })
}

/// Weights `α_{k,j} = (j − k)^+`, flattened k-major.
pub fn alpha_vector(k: usize) -> Vec<f64> {
    let mut alpha = Vec::with_capacity(k * k);
    for row in 1..=k {
        for col in 1..=k {
            alpha.push(col.saturating_sub(row) as f64);
        }
    }
    alpha
}

/// Age-chain matrix `Γ` (with `Γᵀ = [p; I 0]`) and its limit row `ψ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaMatrix {
    pub gamma: DMatrix<f64>,
    pub psi: Vec<f64>,
}

impl GammaMatrix {
    /// `Γ^j` for `j = 0..=max_power`.
    pub fn powers(&self, max_power: usize) -> Vec<DMatrix<f64>> {
        let k = self.gamma.nrows();
        let mut out = Vec::with_capacity(max_power + 1);
        let mut acc = DMatrix::identity(k, k);
        out.push(acc.clone());
        for _ in 0..max_power {
            acc = &acc * &self.gamma;
            out.push(acc.clone());
        }
        out
    }
}

pub fn gamma_matrix(dist: &ServiceDistribution) -> Result<GammaMatrix, ModelError> {
    let p = dist.p();
    let k = p.len();
    if k > 1 {
        let support: Vec<u32> = dist.support().map(|s| s as u32).collect();
        let coprime = support
            .iter()
            .enumerate()
            .any(|(a, &x)| support[a + 1..].iter().any(|&y| gcd(x, y) == 1));
        if !coprime {
            return Err(ModelError::NotAperiodic);
        }
    }
    let gamma_t = DMatrix::from_fn(k, k, |i, j| {
        if i == 0 {
            p[j]
        } else if j + 1 == i {
            1.0
        } else {
            0.0
        }
    });

    // ψ Γᵀ = ψ, Σψ = 1: solve (Γᵀ − I)ᵀ ψᵀ = 0 with the last equation
    // swapped for the normalization.
    let mut system = (&gamma_t - DMatrix::identity(k, k)).transpose();
    for j in 0..k {
        system[(k - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(k);
    rhs[k - 1] = 1.0;
    let psi = system
        .lu()
        .solve(&rhs)
        .ok_or(ModelError::NotAperiodic)?;
    Ok(GammaMatrix { gamma: gamma_t.transpose(), psi: psi.iter().copied().collect() })
}

/// All model constants for one `(p, β, c_a)` configuration.
#[derive(Debug, Clone, Serialize)]
pub struct DerivedConstants {
    pub k: usize,
    pub mean_service: f64,
    pub mu: f64,
    pub sigma_s: f64,
    pub c_s: f64,
    pub c_a: f64,
    pub beta: f64,
    pub theta_star: f64,
    /// Critical exponent of the geometric Lyapunov function, `μθ*`.
    pub phi_critical: f64,
    pub sigma_matrix: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub gamma: Vec<Vec<f64>>,
    pub psi: Vec<f64>,
    pub tilde_p: Vec<f64>,
}

impl DerivedConstants {
    pub fn new(dist: &ServiceDistribution, beta: f64, c_a: f64) -> Result<Self, ModelError> {
        let theta = theta_star(beta, c_a, dist.c_s())?;
        let sigma = covariance_sigma(dist);
        let gamma = gamma_matrix(dist)?;
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
        };
        Ok(Self {
            k: dist.k(),
            mean_service: dist.mean_service(),
            mu: dist.mu(),
            sigma_s: dist.sigma_s(),
            c_s: dist.c_s(),
            c_a,
            beta,
            theta_star: theta,
            phi_critical: dist.mu() * theta,
            sigma_matrix: rows(&sigma),
            alpha: alpha_vector(dist.k()),
            gamma: rows(&gamma.gamma),
            psi: gamma.psi,
            tilde_p: dist.tilde_p().to_vec(),
        })
    }
}
