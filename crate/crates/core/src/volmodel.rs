//! Generalized linear volatility models: constant volatility, ARCH(1) and
//! GARCH(1,1), with the deterministic recursion
//!
//! ```text
//! σ²_t = ω + α·Y²_{t−1} + β·σ²_{t−1}
//! ```
//!
//! and Gaussian simulation `Y_t = σ_t·ε_t`.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Constant,
    Arch1,
    Garch11,
}

impl Family {
    /// Number of free parameters.
    pub fn dim(self) -> usize {
        match self {
            Family::Constant => 1,
            Family::Arch1 => 2,
            Family::Garch11 => 3,
        }
    }

    /// Smallest interval on which the family is estimated.
    pub fn min_observations(self) -> usize {
        match self {
            Family::Constant => 1,
            Family::Arch1 => 5,
            Family::Garch11 => 10,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Constant => "constant",
            Family::Arch1 => "arch1",
            Family::Garch11 => "garch11",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "constant" | "const" => Ok(Family::Constant),
            "arch" | "arch1" => Ok(Family::Arch1),
            "garch" | "garch11" => Ok(Family::Garch11),
            other => Err(Error::input(format!("unknown model family `{other}`"))),
        }
    }
}

/// Closed parameter box. `alpha` and `beta` have lower bound 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub omega_min: f64,
    pub omega_max: f64,
    pub alpha_max: f64,
    pub beta_max: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            omega_min: 1e-8,
            omega_max: 1e6,
            alpha_max: 0.999,
            beta_max: 0.999,
        }
    }
}

/// A parametric family together with the compact parameter set Θ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    pub bounds: Bounds,
    /// `s` in the constraint `α + β ≤ 1 − s`.
    pub stationarity_margin: f64,
}

impl ModelSpec {
    pub fn new(family: Family) -> Self {
        ModelSpec {
            family,
            bounds: Bounds::default(),
            stationarity_margin: 1e-6,
        }
    }

    pub fn constant() -> Self {
        Self::new(Family::Constant)
    }

    pub fn arch1() -> Self {
        Self::new(Family::Arch1)
    }

    pub fn garch11() -> Self {
        Self::new(Family::Garch11)
    }

    pub fn with_bounds(family: Family, bounds: Bounds, stationarity_margin: f64) -> Result<Self> {
        let ok = bounds.omega_min > 0.0
            && bounds.omega_min.is_finite()
            && bounds.omega_max.is_finite()
            && bounds.omega_min <= bounds.omega_max
            && bounds.alpha_max.is_finite()
            && bounds.alpha_max >= 0.0
            && bounds.beta_max.is_finite()
            && bounds.beta_max >= 0.0;
        if !ok {
            return Err(Error::domain(format!("invalid parameter bounds {bounds:?}")));
        }
        if !(stationarity_margin > 0.0 && stationarity_margin < 1.0) {
            return Err(Error::domain(format!(
                "stationarity margin {stationarity_margin} not in (0, 1)"
            )));
        }
        Ok(ModelSpec {
            family,
            bounds,
            stationarity_margin,
        })
    }

    /// Upper bound on `α + β`.
    pub fn persistence_cap(&self) -> f64 {
        1.0 - self.stationarity_margin
    }

    pub fn alpha_active(&self) -> bool {
        self.family != Family::Constant
    }

    pub fn beta_active(&self) -> bool {
        self.family == Family::Garch11
    }

    pub fn contains(&self, theta: &ParamVector) -> bool {
        self.validate(theta).is_ok()
    }

    pub fn validate(&self, theta: &ParamVector) -> Result<()> {
        let b = &self.bounds;
        let err = |what: &str| Err(Error::domain(format!("{theta} outside Θ for {}: {what}", self.family)));
        if !(theta.omega >= b.omega_min && theta.omega <= b.omega_max) {
            return err("omega out of bounds");
        }
        if self.alpha_active() {
            if !(theta.alpha >= 0.0 && theta.alpha <= b.alpha_max) {
                return err("alpha out of bounds");
            }
        } else if theta.alpha != 0.0 {
            return err("alpha must be 0");
        }
        if self.beta_active() {
            if !(theta.beta >= 0.0 && theta.beta <= b.beta_max) {
                return err("beta out of bounds");
            }
        } else if theta.beta != 0.0 {
            return err("beta must be 0");
        }
        if theta.alpha + theta.beta > self.persistence_cap() {
            return err("alpha + beta exceeds the stationarity cap");
        }
        Ok(())
    }

    /// Active components of `theta` in the order (ω, α, β).
    pub(crate) fn pack(&self, theta: &ParamVector) -> Vec<f64> {
        let mut v = vec![theta.omega];
        if self.alpha_active() {
            v.push(theta.alpha);
        }
        if self.beta_active() {
            v.push(theta.beta);
        }
        v
    }

    pub(crate) fn unpack(&self, x: &[f64]) -> ParamVector {
        ParamVector {
            omega: x[0],
            alpha: if self.alpha_active() { x[1] } else { 0.0 },
            beta: if self.beta_active() { x[2] } else { 0.0 },
        }
    }

    /// Euclidean projection onto Θ for the active coordinates.
    pub(crate) fn project(&self, theta: &ParamVector) -> ParamVector {
        let b = &self.bounds;
        let omega = theta.omega.clamp(b.omega_min, b.omega_max);
        let mut alpha = if self.alpha_active() {
            theta.alpha.clamp(0.0, b.alpha_max)
        } else {
            0.0
        };
        let mut beta = if self.beta_active() {
            theta.beta.clamp(0.0, b.beta_max)
        } else {
            0.0
        };
        // Target slightly inside the cap so rounding cannot push the sum out.
        let cap = self.persistence_cap() * (1.0 - 4.0 * f64::EPSILON);
        if alpha + beta > self.persistence_cap() {
            if self.beta_active() {
                // Project onto the line α + β = cap, then fix up the box.
                let excess = 0.5 * (alpha + beta - cap);
                alpha -= excess;
                beta -= excess;
                if alpha < 0.0 {
                    beta += alpha;
                    alpha = 0.0;
                } else if beta < 0.0 {
                    alpha += beta;
                    beta = 0.0;
                }
                alpha = alpha.min(b.alpha_max);
                beta = beta.min(b.beta_max).min(cap - alpha);
            } else {
                alpha = cap;
            }
        }
        ParamVector { omega, alpha, beta }
    }
}

/// θ = (ω, α, β). Inactive components are zero.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct ParamVector {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ParamVector {
    pub fn new(omega: f64, alpha: f64, beta: f64) -> Self {
        ParamVector { omega, alpha, beta }
    }

    pub fn constant(omega: f64) -> Self {
        Self::new(omega, 0.0, 0.0)
    }

    pub fn persistence(&self) -> f64 {
        self.alpha + self.beta
    }

    /// `ω / (1 − α − β)` when the process is covariance stationary.
    pub fn unconditional_variance(&self) -> Option<f64> {
        let p = self.persistence();
        (p < 1.0).then(|| self.omega / (1.0 - p))
    }

    /// Lexicographic comparison used for deterministic tie-breaking.
    pub(crate) fn lex_cmp(&self, other: &ParamVector) -> std::cmp::Ordering {
        self.omega
            .total_cmp(&other.omega)
            .then(self.alpha.total_cmp(&other.alpha))
            .then(self.beta.total_cmp(&other.beta))
    }
}

impl fmt::Display for ParamVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.omega, self.alpha, self.beta)
    }
}

impl FromStr for ParamVector {
    type Err = Error;

    /// Parses `ω,α,β`; missing trailing components default to 0.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.is_empty() || parts.len() > 3 {
            return Err(Error::input(format!("expected `omega,alpha,beta`, got `{s}`")));
        }
        let mut v = [0.0; 3];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .parse::<f64>()
                .map_err(|e| Error::input(format!("bad parameter `{p}`: {e}")))?;
        }
        Ok(ParamVector::new(v[0], v[1], v[2]))
    }
}

/// Observed returns `Y_t`. Timestamps are opaque labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    values: Vec<f64>,
    timestamps: Option<Vec<String>>,
}

impl ReturnSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::input("return series is empty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                index: i,
                what: format!("return {}", values[i]),
            });
        }
        Ok(ReturnSeries {
            values,
            timestamps: None,
        })
    }

    pub fn with_timestamps(mut self, timestamps: Vec<String>) -> Result<Self> {
        if timestamps.len() != self.values.len() {
            return Err(Error::input(format!(
                "{} timestamps for {} returns",
                timestamps.len(),
                self.values.len()
            )));
        }
        self.timestamps = Some(timestamps);
        Ok(self)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn timestamps(&self) -> Option<&[String]> {
        self.timestamps.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Conditional variances `σ²_t` aligned with a [`ReturnSeries`].
#[derive(Debug, Clone, PartialEq)]
pub struct VolatilityPath {
    sigma2: Vec<f64>,
}

impl VolatilityPath {
    pub fn new(sigma2: Vec<f64>) -> Result<Self> {
        if let Some(i) = sigma2.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Numeric {
                index: i,
                what: format!("variance {}", sigma2[i]),
            });
        }
        Ok(VolatilityPath { sigma2 })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.sigma2
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.sigma2
    }

    pub fn len(&self) -> usize {
        self.sigma2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma2.is_empty()
    }
}

/// How `σ²` is set at the first observation of a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitRule {
    /// `ω / (1 − α − β)`, falling back to `ω` when `α + β ≥ 1`.
    #[default]
    Unconditional,
    Omega,
    /// Mean of `Y²` over the window.
    SampleVariance,
}

impl InitRule {
    pub fn initial_variance(self, theta: &ParamVector, window: &[f64]) -> f64 {
        match self {
            InitRule::Unconditional => theta.unconditional_variance().unwrap_or(theta.omega),
            InitRule::Omega => theta.omega,
            InitRule::SampleVariance => {
                let v = mean_square(window);
                if v > 0.0 {
                    v
                } else {
                    theta.omega
                }
            }
        }
    }
}

impl FromStr for InitRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "unconditional" => Ok(InitRule::Unconditional),
            "omega" => Ok(InitRule::Omega),
            "sample-variance" | "sample" => Ok(InitRule::SampleVariance),
            other => Err(Error::input(format!("unknown init rule `{other}`"))),
        }
    }
}

pub(crate) fn mean_square(ys: &[f64]) -> f64 {
    if ys.is_empty() {
        return 0.0;
    }
    ys.iter().map(|y| y * y).sum::<f64>() / ys.len() as f64
}

/// Runs the variance recursion over `ys`, starting from `sigma2_first`.
pub(crate) fn run_recursion(theta: &ParamVector, ys: &[f64], sigma2_first: f64, out: &mut Vec<f64>) {
    out.clear();
    out.reserve(ys.len());
    let mut s2 = sigma2_first;
    let mut prev = 0.0;
    for (t, &y) in ys.iter().enumerate() {
        if t > 0 {
            s2 = theta.omega + theta.alpha * prev * prev + theta.beta * s2;
        }
        out.push(s2);
        prev = y;
    }
}

/// The model-implied conditional variance path `σ²_t(θ)` over the whole series.
pub fn volatility_path(
    spec: &ModelSpec,
    theta: &ParamVector,
    y: &ReturnSeries,
    init: InitRule,
) -> Result<VolatilityPath> {
    spec.validate(theta)?;
    let ys = y.values();
    let mut out = Vec::new();
    run_recursion(theta, ys, init.initial_variance(theta, ys), &mut out);
    VolatilityPath::new(out)
}

/// Simulates `n` observations of `Y_t = σ_t ε_t` with standard normal
/// innovations. The recursion starts at the unconditional variance.
pub fn simulate_path(
    spec: &ModelSpec,
    theta: &ParamVector,
    n: usize,
    seed: u64,
) -> Result<(ReturnSeries, VolatilityPath)> {
    spec.validate(theta)?;
    if n == 0 {
        return Err(Error::input("cannot simulate an empty path"));
    }
    let mut rng = seed::rng(seed);
    let mut ys = Vec::with_capacity(n);
    let mut s2s = Vec::with_capacity(n);
    let mut s2 = InitRule::Unconditional.initial_variance(theta, &[]);
    for t in 0..n {
        if t > 0 {
            let prev: f64 = ys[t - 1];
            s2 = theta.omega + theta.alpha * prev * prev + theta.beta * s2;
        }
        let eps: f64 = StandardNormal.sample(&mut rng);
        ys.push(s2.sqrt() * eps);
        s2s.push(s2);
    }
    Ok((ReturnSeries::new(ys)?, VolatilityPath::new(s2s)?))
}
