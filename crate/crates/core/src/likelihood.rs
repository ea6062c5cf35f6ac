//! Gaussian quasi-log-likelihood `ℓ(y, υ) = −½(log υ + y²/υ)` summed over an
//! interval, the fitted-likelihood loss, and Kullback–Leibler diagnostics.
//!
//! The variance recursion always restarts at the first observation of the
//! interval; nothing before `start` influences the value.

use std::fmt;

use crate::error::{Error, Result};
use crate::volmodel::{run_recursion, InitRule, ModelSpec, ParamVector, ReturnSeries, VolatilityPath};

/// Inclusive, zero-based index range `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
}

impl Interval {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start > end {
            return Err(Error::input(format!("interval start {start} after end {end}")));
        }
        Ok(Interval { start, end })
    }

    /// The window of `len` observations ending at `end`.
    pub fn ending_at(end: usize, len: usize) -> Result<Self> {
        if len == 0 || len > end + 1 {
            return Err(Error::input(format!(
                "cannot place an interval of length {len} ending at {end}"
            )));
        }
        Ok(Interval {
            start: end + 1 - len,
            end,
        })
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn slice<'a>(&self, ys: &'a [f64]) -> &'a [f64] {
        &ys[self.start..=self.end]
    }

    pub(crate) fn check_within(&self, n: usize) -> Result<()> {
        if self.end >= n {
            return Err(Error::input(format!("interval {self} exceeds series of length {n}")));
        }
        Ok(())
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

/// Pointwise quasi-log-likelihood. The `−½ log 2π` constant is dropped.
pub fn ell(y: f64, v: f64) -> f64 {
    -0.5 * (v.ln() + y * y / v)
}

/// Data for one likelihood evaluation: the recursion runs over all of `ys`
/// from the start, but only `ys[from..]` is scored. `init_ys` feeds
/// [`InitRule::SampleVariance`].
#[derive(Debug, Clone, Copy)]
pub(crate) struct Segment<'a> {
    pub ys: &'a [f64],
    pub from: usize,
    pub init_ys: &'a [f64],
}

impl<'a> Segment<'a> {
    pub fn whole(ys: &'a [f64]) -> Self {
        Segment {
            ys,
            from: 0,
            init_ys: ys,
        }
    }

    pub fn scored(&self) -> &'a [f64] {
        &self.ys[self.from..]
    }
}

/// Log-likelihood of `ys` with the recursion started at the window start.
pub(crate) fn loglik_slice(theta: &ParamVector, ys: &[f64], init: InitRule) -> f64 {
    loglik_segment(theta, Segment::whole(ys), init)
}

pub(crate) fn loglik_segment(theta: &ParamVector, seg: Segment<'_>, init: InitRule) -> f64 {
    let mut s2 = init.initial_variance(theta, seg.init_ys);
    let mut log_sum = 0.0;
    let mut ratio_sum = 0.0;
    let mut prev = 0.0;
    for (t, &y) in seg.ys.iter().enumerate() {
        if t > 0 {
            s2 = theta.omega + theta.alpha * prev * prev + theta.beta * s2;
        }
        if t >= seg.from {
            log_sum += s2.ln();
            ratio_sum += y * y / s2;
        }
        prev = y;
    }
    -0.5 * (log_sum + ratio_sum)
}

/// Log-likelihood and its gradient with respect to (ω, α, β).
pub(crate) fn loglik_grad_slice(theta: &ParamVector, ys: &[f64], init: InitRule) -> (f64, [f64; 3]) {
    loglik_grad_segment(theta, Segment::whole(ys), init)
}

pub(crate) fn loglik_grad_segment(theta: &ParamVector, seg: Segment<'_>, init: InitRule) -> (f64, [f64; 3]) {
    let (mut s2, mut d) = initial_with_derivative(theta, seg.init_ys, init);
    let mut value = 0.0;
    let mut grad = [0.0; 3];
    let mut prev = 0.0;
    for (t, &y) in seg.ys.iter().enumerate() {
        if t > 0 {
            let prev2 = prev * prev;
            d = [
                1.0 + theta.beta * d[0],
                prev2 + theta.beta * d[1],
                s2 + theta.beta * d[2],
            ];
            s2 = theta.omega + theta.alpha * prev2 + theta.beta * s2;
        }
        prev = y;
        if t < seg.from {
            continue;
        }
        let y2 = y * y;
        value += s2.ln() + y2 / s2;
        // ∂ℓ/∂σ² = −½(1/σ² − y²/σ⁴)
        let score = -0.5 * (1.0 - y2 / s2) / s2;
        for (g, di) in grad.iter_mut().zip(d) {
            *g += score * di;
        }
    }
    (-0.5 * value, grad)
}

fn initial_with_derivative(theta: &ParamVector, ys: &[f64], init: InitRule) -> (f64, [f64; 3]) {
    match init {
        InitRule::Unconditional => {
            let p = theta.persistence();
            if p < 1.0 {
                let q = 1.0 - p;
                let v = theta.omega / q;
                (v, [1.0 / q, v / q, v / q])
            } else {
                (theta.omega, [1.0, 0.0, 0.0])
            }
        }
        InitRule::Omega => (theta.omega, [1.0, 0.0, 0.0]),
        InitRule::SampleVariance => (init.initial_variance(theta, ys), [0.0; 3]),
    }
}

fn check_finite(value: f64, theta: &ParamVector, ys: &[f64], init: InitRule, offset: usize) -> Result<f64> {
    if value.is_finite() {
        return Ok(value);
    }
    let mut path = Vec::new();
    run_recursion(theta, ys, init.initial_variance(theta, ys), &mut path);
    let index = ys
        .iter()
        .zip(&path)
        .position(|(y, v)| !ell(*y, *v).is_finite())
        .unwrap_or(0);
    Err(Error::Numeric {
        index: offset + index,
        what: format!("log-likelihood term at {theta}"),
    })
}

/// `L_I(θ) = Σ_{t∈I} ℓ(Y_t, σ²_t(θ))`.
pub fn loglik(
    spec: &ModelSpec,
    theta: &ParamVector,
    y: &ReturnSeries,
    interval: Interval,
    init: InitRule,
) -> Result<f64> {
    spec.validate(theta)?;
    interval.check_within(y.len())?;
    let ys = interval.slice(y.values());
    check_finite(loglik_slice(theta, ys, init), theta, ys, init, interval.start)
}

/// Gradient of [`loglik`] with respect to (ω, α, β), all three components.
pub fn loglik_gradient(
    spec: &ModelSpec,
    theta: &ParamVector,
    y: &ReturnSeries,
    interval: Interval,
    init: InitRule,
) -> Result<[f64; 3]> {
    spec.validate(theta)?;
    interval.check_within(y.len())?;
    let ys = interval.slice(y.values());
    let (v, g) = loglik_grad_slice(theta, ys, init);
    check_finite(v, theta, ys, init, interval.start)?;
    Ok(g)
}

/// `L_I(θ_ref, θ) = L_I(θ_ref) − L_I(θ)`.
pub fn loss(
    spec: &ModelSpec,
    theta_ref: &ParamVector,
    theta: &ParamVector,
    y: &ReturnSeries,
    interval: Interval,
    init: InitRule,
) -> Result<f64> {
    if theta_ref == theta {
        spec.validate(theta)?;
        interval.check_within(y.len())?;
        return Ok(0.0);
    }
    Ok(loglik(spec, theta_ref, y, interval, init)? - loglik(spec, theta, y, interval, init)?)
}

/// Kullback–Leibler divergence between `N(0, v)` and `N(0, v′)`,
/// `½(v/v′ − 1 − log(v/v′))`.
pub fn kl_gauss(v: f64, v_prime: f64) -> Result<f64> {
    if !(v > 0.0 && v_prime > 0.0 && v.is_finite() && v_prime.is_finite()) {
        return Err(Error::domain(format!(
            "variances must be positive, got ({v}, {v_prime})"
        )));
    }
    let q = v / v_prime;
    // ln_1p keeps precision near q = 1.
    Ok(0.5 * ((q - 1.0) - (q - 1.0).ln_1p()))
}

/// Cumulative KL distance `Σ_{t∈I} K(σ²_t, σ²_t(θ))` between the true
/// variances and the model-implied ones.
pub fn modeling_bias(
    spec: &ModelSpec,
    theta: &ParamVector,
    y: &ReturnSeries,
    interval: Interval,
    sigma2_true: &VolatilityPath,
    init: InitRule,
) -> Result<f64> {
    spec.validate(theta)?;
    if sigma2_true.len() != y.len() {
        return Err(Error::input(format!(
            "volatility path has {} entries, series has {}",
            sigma2_true.len(),
            y.len()
        )));
    }
    interval.check_within(y.len())?;
    let ys = interval.slice(y.values());
    let mut model = Vec::new();
    run_recursion(theta, ys, init.initial_variance(theta, ys), &mut model);
    interval
        .slice(sigma2_true.as_slice())
        .iter()
        .zip(&model)
        .map(|(&v, &w)| kl_gauss(v, w))
        .sum()
}
