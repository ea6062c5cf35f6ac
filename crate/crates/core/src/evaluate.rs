//! Volatility forecasts, absolute prediction errors and method comparison.
//!
//! For a fitted `θ` with state `(σ²_n, Y_n)` the forecasts are
//! `σ̂²_{n+1|n} = ω + αY²_n + βσ²_n` and
//! `σ̂²_{n+h|n} = ω + (α + β)σ̂²_{n+h−1|n}` for `h ≥ 2`.
//! The absolute prediction error at `t` is
//! `APE(t) = |H|⁻¹ Σ_{h∈H} |σ²_{t+h} − σ̂²_{t+h|t}|`, where the target is
//! either the simulated variance or the squared return.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use crate::adaptive::select_interval;
use crate::error::{Error, Result};
use crate::grid::IntervalGrid;
use crate::io::csv_err;
use crate::likelihood::Interval;
use crate::mle::{fit_slice, OptimizerConfig};
use crate::schedule::CriticalValueSchedule;
use crate::volmodel::{run_recursion, InitRule, ModelSpec, ParamVector, ReturnSeries};

/// Window of the trailing APE average, in observations.
pub const DEFAULT_WINDOW: usize = 21;
/// Estimation window of the rolling parametric baseline.
pub const DEFAULT_BASELINE_WINDOW: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Proxy {
    TrueSigma2,
    SquaredReturns,
}

impl fmt::Display for Proxy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Proxy::TrueSigma2 => "true-sigma2",
            Proxy::SquaredReturns => "squared-returns",
        })
    }
}

impl FromStr for Proxy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "true-sigma2" | "true" => Ok(Proxy::TrueSigma2),
            "squared-returns" | "squared" => Ok(Proxy::SquaredReturns),
            other => Err(Error::input(format!(
                "unknown proxy `{other}` (expected true-sigma2 or squared-returns)"
            ))),
        }
    }
}

impl Proxy {
    /// The evaluation target aligned with `y`.
    pub fn target(self, y: &ReturnSeries, sigma2: Option<&[f64]>) -> Result<Vec<f64>> {
        match self {
            Proxy::SquaredReturns => Ok(y.values().iter().map(|v| v * v).collect()),
            Proxy::TrueSigma2 => {
                let s = sigma2.ok_or_else(|| Error::input("proxy true-sigma2 needs a sigma2_true column"))?;
                if s.len() != y.len() {
                    return Err(Error::input(format!("{} variances for {} returns", s.len(), y.len())));
                }
                Ok(s.to_vec())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastConfig {
    pub horizons: Vec<usize>,
    pub proxy: Proxy,
    pub window: usize,
}

impl ForecastConfig {
    pub fn new(horizons: Vec<usize>, proxy: Proxy, window: usize) -> Result<Self> {
        if horizons.is_empty() || horizons.contains(&0) {
            return Err(Error::input("horizons must be a nonempty set of positive integers"));
        }
        if window == 0 {
            return Err(Error::input("averaging window must be at least 1"));
        }
        Ok(ForecastConfig {
            horizons,
            proxy,
            window,
        })
    }
}

/// `σ̂²_{n+h|n}` from the state `(σ²_n, Y_n)`.
pub fn forecast_vol(spec: &ModelSpec, theta: &ParamVector, sigma2_n: f64, y_n: f64, h: usize) -> Result<f64> {
    spec.validate(theta)?;
    if h == 0 {
        return Err(Error::input("forecast horizon must be at least 1"));
    }
    if !(sigma2_n > 0.0 && sigma2_n.is_finite()) || !y_n.is_finite() {
        return Err(Error::domain(format!(
            "invalid forecast state (σ²={sigma2_n}, y={y_n})"
        )));
    }
    let mut v = theta.omega + theta.alpha * y_n * y_n + theta.beta * sigma2_n;
    let p = theta.persistence();
    for _ in 1..h {
        v = theta.omega + p * v;
    }
    Ok(v)
}

/// Forecasts for every horizon after fitting `theta` on `window`, whose last
/// element is `Y_n`. The recursion restarts at the window start.
pub fn forecast_from_window(
    spec: &ModelSpec,
    theta: &ParamVector,
    window: &[f64],
    init: InitRule,
    horizons: &[usize],
) -> Result<Vec<f64>> {
    let y_n = *window.last().ok_or_else(|| Error::input("empty estimation window"))?;
    let mut path = Vec::new();
    run_recursion(theta, window, init.initial_variance(theta, window), &mut path);
    let s2 = *path.last().expect("nonempty");
    horizons
        .iter()
        .map(|&h| forecast_vol(spec, theta, s2, y_n, h))
        .collect()
}

/// Per-endpoint forecasts, one value per horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecasts {
    pub endpoints: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

/// A forecasting method.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Method {
    /// Adaptive estimate with the given schedule.
    Adaptive {
        name: String,
        spec: ModelSpec,
        grid: IntervalGrid,
        schedule: CriticalValueSchedule,
    },
    /// Quasi-MLE on the last `window` observations (or all available ones).
    Rolling {
        name: String,
        spec: ModelSpec,
        window: usize,
    },
}

impl Method {
    pub fn name(&self) -> &str {
        match self {
            Method::Adaptive { name, .. } | Method::Rolling { name, .. } => name,
        }
    }

    /// Estimation interval and fitted parameter at endpoint `n`.
    pub fn estimate(
        &self,
        y: &ReturnSeries,
        n: usize,
        init: InitRule,
        opt: &OptimizerConfig,
    ) -> Result<(Interval, ParamVector)> {
        match self {
            Method::Adaptive {
                spec, grid, schedule, ..
            } => {
                let fit = select_interval(spec, y, n, grid, schedule, init, opt)?;
                Ok((fit.interval, fit.theta_hat))
            }
            Method::Rolling { spec, window, .. } => {
                if n >= y.len() {
                    return Err(Error::input(format!(
                        "endpoint {n} outside series of length {}",
                        y.len()
                    )));
                }
                let interval = Interval::ending_at(n, (*window).min(n + 1))?;
                let fit = fit_slice(spec, interval.slice(y.values()), init, opt, &[])?;
                Ok((interval, fit.theta_hat))
            }
        }
    }

    fn spec(&self) -> &ModelSpec {
        match self {
            Method::Adaptive { spec, .. } | Method::Rolling { spec, .. } => spec,
        }
    }

    pub fn forecast(
        &self,
        y: &ReturnSeries,
        endpoints: &[usize],
        horizons: &[usize],
        init: InitRule,
        opt: &OptimizerConfig,
    ) -> Result<Forecasts> {
        let values = endpoints
            .par_iter()
            .map(|&n| {
                let (interval, theta) = self.estimate(y, n, init, opt)?;
                forecast_from_window(self.spec(), &theta, interval.slice(y.values()), init, horizons)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Forecasts {
            endpoints: endpoints.to_vec(),
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApeSeries {
    pub t: Vec<usize>,
    pub ape: Vec<f64>,
    /// Endpoints dropped because some `t + h` lies beyond the target.
    pub excluded: usize,
}

impl ApeSeries {
    /// Mean of the last `w` values at each position (fewer at the start).
    pub fn trailing_mean(&self, w: usize) -> Vec<f64> {
        let w = w.max(1);
        (0..self.ape.len())
            .map(|i| {
                let span = &self.ape[(i + 1).saturating_sub(w)..=i];
                span.iter().sum::<f64>() / span.len() as f64
            })
            .collect()
    }

    /// Mean APE over all retained endpoints.
    pub fn global(&self) -> f64 {
        if self.ape.is_empty() {
            return f64::NAN;
        }
        self.ape.iter().sum::<f64>() / self.ape.len() as f64
    }
}

/// `APE(t)` for every forecast endpoint whose targets are all available.
pub fn ape(forecasts: &Forecasts, truth: &[f64], horizons: &[usize]) -> Result<ApeSeries> {
    if forecasts.endpoints.len() != forecasts.values.len() {
        return Err(Error::input("forecast endpoints and values differ in length"));
    }
    let mut out = ApeSeries {
        t: Vec::new(),
        ape: Vec::new(),
        excluded: 0,
    };
    for (&t, f) in forecasts.endpoints.iter().zip(&forecasts.values) {
        if f.len() != horizons.len() {
            return Err(Error::input(format!(
                "{} forecasts for {} horizons at t={t}",
                f.len(),
                horizons.len()
            )));
        }
        if horizons.iter().any(|&h| t + h >= truth.len()) {
            out.excluded += 1;
            continue;
        }
        let sum: f64 = horizons.iter().zip(f).map(|(&h, v)| (truth[t + h] - v).abs()).sum();
        out.t.push(t);
        out.ape.push(sum / horizons.len() as f64);
    }
    Ok(out)
}

/// Ratio of two errors with `0/0 = 1`.
fn ratio(a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        1.0
    } else {
        a / b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub t: usize,
    pub method: String,
    pub ape_w: f64,
    pub ratio_baseline: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub global_pe: f64,
    pub ratio_baseline: f64,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub baseline: String,
    pub proxy: Proxy,
    pub window: usize,
    pub rows: Vec<ReportRow>,
    pub summary: Vec<SummaryRow>,
}

/// Trailing-window APE per method with ratios against `baseline`.
pub fn compare_methods(
    methods: &[(String, ApeSeries)],
    baseline: &str,
    proxy: Proxy,
    window: usize,
) -> Result<ComparisonReport> {
    let (_, base) = methods
        .iter()
        .find(|(n, _)| n == baseline)
        .ok_or_else(|| Error::input(format!("baseline `{baseline}` is not among the methods")))?;
    for (name, s) in methods {
        if s.t != base.t {
            return Err(Error::input(format!(
                "method `{name}` covers a different endpoint range than `{baseline}`"
            )));
        }
    }
    let base_w = base.trailing_mean(window);
    let base_global = base.global();
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (name, s) in methods {
        let w = s.trailing_mean(window);
        for (i, &t) in s.t.iter().enumerate() {
            rows.push(ReportRow {
                t,
                method: name.clone(),
                ape_w: w[i],
                ratio_baseline: ratio(w[i], base_w[i]),
            });
        }
        summary.push(SummaryRow {
            method: name.clone(),
            global_pe: s.global(),
            ratio_baseline: ratio(s.global(), base_global),
            excluded: s.excluded,
        });
    }
    Ok(ComparisonReport {
        baseline: baseline.to_owned(),
        proxy,
        window,
        rows,
        summary,
    })
}

impl ComparisonReport {
    /// CSV with columns `t,method,ape_w,ratio_baseline`, followed by a
    /// `#`-prefixed summary block.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# proxy={} window={} baseline={}",
            self.proxy, self.window, self.baseline
        )?;
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["t", "method", "ape_w", "ratio_baseline"])
                .map_err(csv_err)?;
            for r in &self.rows {
                w.write_record([
                    r.t.to_string(),
                    r.method.clone(),
                    r.ape_w.to_string(),
                    r.ratio_baseline.to_string(),
                ])
                .map_err(csv_err)?;
            }
            w.flush()?;
        }
        writeln!(out, "# summary: method,global_pe,ratio_baseline,excluded")?;
        for s in &self.summary {
            writeln!(
                out,
                "# {},{},{},{}",
                s.method, s.global_pe, s.ratio_baseline, s.excluded
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub r: f64,
    pub rho: f64,
    /// `(r, ρ, objective)` for every candidate, sorted by `(r, ρ)`.
    pub objectives: Vec<(f64, f64, f64)>,
}

/// Chooses `(r, ρ)` minimising `Σ_n Σ_{h∈H} |target_{n+h} − σ̂²_{n+h|n}|^power`
/// over the adaptive forecasts produced with each schedule. Ties go to the
/// smaller `r`, then the smaller `ρ`.
#[allow(clippy::too_many_arguments)]
pub fn tune_r_rho(
    spec: &ModelSpec,
    y: &ReturnSeries,
    target: &[f64],
    grid: &IntervalGrid,
    schedules: &[CriticalValueSchedule],
    power: f64,
    horizons: &[usize],
    endpoints: &[usize],
    init: InitRule,
    opt: &OptimizerConfig,
) -> Result<TuneResult> {
    if endpoints.is_empty() {
        return Err(Error::input("no endpoints to evaluate"));
    }
    if schedules.is_empty() {
        return Err(Error::input("no candidate schedules"));
    }
    if !(power > 0.0) {
        return Err(Error::domain(format!("loss power must be positive, got {power}")));
    }
    let mut candidates: Vec<(f64, f64, &CriticalValueSchedule)> = schedules
        .iter()
        .map(|s| match (s.meta.r, s.meta.rho) {
            (Some(r), Some(rho)) => Ok((r, rho, s)),
            _ => Err(Error::input("every candidate schedule must record r and rho")),
        })
        .collect::<Result<_>>()?;
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let usable: Vec<usize> = endpoints
        .iter()
        .copied()
        .filter(|&n| horizons.iter().all(|&h| n + h < target.len()))
        .collect();
    if usable.is_empty() {
        return Err(Error::input("no endpoint has targets for every horizon"));
    }

    let mut objectives = Vec::with_capacity(candidates.len());
    for (r, rho, schedule) in &candidates {
        let method = Method::Adaptive {
            name: String::new(),
            spec: *spec,
            grid: grid.clone(),
            schedule: (*schedule).clone(),
        };
        let f = method.forecast(y, &usable, horizons, init, opt)?;
        let obj: f64 = f
            .endpoints
            .iter()
            .zip(&f.values)
            .map(|(&n, v)| {
                horizons
                    .iter()
                    .zip(v)
                    .map(|(&h, x)| (target[n + h] - x).abs().powf(power))
                    .sum::<f64>()
            })
            .sum();
        objectives.push((*r, *rho, obj));
    }
    let best = objectives
        .iter()
        .fold(None::<&(f64, f64, f64)>, |acc, c| match acc {
            Some(b) if b.2 <= c.2 => Some(b),
            _ => Some(c),
        })
        .expect("nonempty");
    Ok(TuneResult {
        r: best.0,
        rho: best.1,
        objectives,
    })
}
