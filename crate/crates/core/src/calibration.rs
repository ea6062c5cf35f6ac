//! Monte Carlo calibration of critical-value schedules.
//!
//! Under a parametric model `θ₀` the adaptive procedure should lose at most a
//! `ρ_k = ρk/K` fraction of the parametric risk `ℜ_r = E|L_{I_K}(θ̃_{I_K}, θ₀)|^r`
//! at each step `k`:
//!
//! ```text
//! E|L_{I_k}(θ̃_{I_k}, θ̂_{I_k})|^r ≤ ρ_k ℜ_r
//! ```
//!
//! where `θ̂_{I_k}` is the estimate after the first `k` steps. The first step
//! is constrained separately through
//! `E|L_{I_K}(θ̃_{I_K}, θ̃_{I_0})|^r 1(T_{I_1} > z_1) ≤ ρℜ_r / K`.
//!
//! Expectations are replaced by Monte Carlo means; an inequality passes when
//! the mean is at most the target plus `slack` standard errors of the mean.
//!
//! Replicate `i` uses the series `simulate_path(θ₀, m_K, sub_seed(seed, i))`
//! with endpoint `m_K − 1`.

use rayon::prelude::*;

use crate::adaptive::{select_interval, PathStatistics, StepOutcome};
use crate::error::{Error, Result};
use crate::grid::IntervalGrid;
use crate::likelihood::loglik_slice;
use crate::mle::{fit_slice, OptimizerConfig};
use crate::schedule::{CriticalValueSchedule, ScheduleMeta};
use crate::seed::sub_seed;
use crate::volmodel::{simulate_path, Family, InitRule, ModelSpec, ParamVector};

pub const MIN_REPS: usize = 100;
/// Largest tolerated share of failed replicates.
pub const MAX_FAILURE_RATE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub mc_reps: usize,
    pub seed: u64,
    pub init: InitRule,
    pub opt: OptimizerConfig,
}

impl McConfig {
    pub fn new(mc_reps: usize, seed: u64) -> Self {
        McConfig {
            mc_reps,
            seed,
            init: InitRule::default(),
            opt: OptimizerConfig::default(),
        }
    }

    /// 1000 replicates for the constant and ARCH families, 400 for GARCH.
    pub fn default_reps(family: Family) -> usize {
        match family {
            Family::Garch11 => 400,
            _ => 1000,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.mc_reps < MIN_REPS {
            return Err(Error::input(format!(
                "at least {MIN_REPS} Monte Carlo replicates are required, got {}",
                self.mc_reps
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Candidate values of the first-step critical value `z_1`, ascending.
    pub c_grid: Vec<f64>,
    pub d_min: f64,
    /// Bisection tolerance for both `z_1` and `D`.
    pub tol: f64,
    /// One-sided allowance in Monte Carlo standard errors.
    pub slack: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            c_grid: (0..40).map(|i| 2.0 + 118.0 * i as f64 / 39.0).collect(),
            d_min: -20.0,
            tol: 0.05,
            slack: 1.64,
        }
    }
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McMean {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl McMean {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return McMean {
                mean: f64::NAN,
                se: f64::NAN,
                n,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        McMean { mean, se, n }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRisk {
    pub k: usize,
    pub length: usize,
    pub estimate: McMean,
    pub target: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub r: f64,
    pub rho: f64,
    /// `R̂_r`.
    pub risk_bound: McMean,
    /// One entry per `k = 1..=K`.
    pub steps: Vec<StepRisk>,
    /// The first-step false-alarm condition.
    pub first_step: StepRisk,
    pub replicates: usize,
    pub failures: usize,
}

impl RiskReport {
    /// Whether every per-step condition holds.
    pub fn passed(&self) -> bool {
        self.steps.iter().all(|s| s.pass)
    }

    pub fn binding(&self) -> Vec<usize> {
        self.steps.iter().filter(|s| !s.pass).map(|s| s.k).collect()
    }
}

fn check_r(r: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::domain(format!("r must be positive, got {r}")));
    }
    Ok(())
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::domain(format!("rho must be positive, got {rho}")));
    }
    Ok(())
}

fn check_failures(failures: usize, reps: usize) -> Result<()> {
    if failures as f64 > MAX_FAILURE_RATE * reps as f64 {
        return Err(Error::Calibration {
            reason: format!("{failures} of {reps} replicates failed to estimate; check the model bounds"),
            binding: vec![],
        });
    }
    Ok(())
}

fn passes(estimate: &McMean, target: f64, slack: f64) -> bool {
    estimate.mean <= target + slack * estimate.se
}

fn replicate_series(spec: &ModelSpec, theta0: &ParamVector, n: usize, seed: u64, i: usize) -> Result<Vec<f64>> {
    let (y, _) = simulate_path(spec, theta0, n, sub_seed(seed, i as u64))?;
    Ok(y.values().to_vec())
}

/// `L_{I_K}(θ̃_{I_K}, θ₀)` for one replicate.
fn parametric_loss(spec: &ModelSpec, theta0: &ParamVector, ys: &[f64], mc: &McConfig) -> Result<f64> {
    let fit = fit_slice(spec, ys, mc.init, &mc.opt, &[*theta0])?;
    if !fit.converged {
        return Err(Error::Numeric {
            index: ys.len(),
            what: "fit on the longest interval did not converge".into(),
        });
    }
    Ok(fit.loglik - loglik_slice(theta0, ys, mc.init))
}

/// Monte Carlo estimate of `ℜ_r(θ₀) = E|L_{I_K}(θ̃_{I_K}, θ₀)|^r` with
/// `|I_K| = m_K`.
pub fn estimate_parametric_risk(
    spec: &ModelSpec,
    theta0: &ParamVector,
    grid: &IntervalGrid,
    r: f64,
    mc: &McConfig,
) -> Result<McMean> {
    check_r(r)?;
    mc.validate()?;
    spec.validate(theta0)?;
    let n = grid.max_length();
    let losses: Vec<Option<f64>> = (0..mc.mc_reps)
        .into_par_iter()
        .map(|i| {
            let ys = replicate_series(spec, theta0, n, mc.seed, i).ok()?;
            parametric_loss(spec, theta0, &ys, mc).ok()
        })
        .collect();
    let ok: Vec<f64> = losses.iter().flatten().map(|l| l.abs().powf(r)).collect();
    check_failures(mc.mc_reps - ok.len(), mc.mc_reps)?;
    Ok(McMean::of(&ok))
}

/// Runs the adaptive procedure with `cv` on parametric simulations and
/// reports every risk condition.
#[allow(clippy::too_many_arguments)]
pub fn check_schedule(
    spec: &ModelSpec,
    theta0: &ParamVector,
    grid: &IntervalGrid,
    cv: &CriticalValueSchedule,
    r: f64,
    rho: f64,
    mc: &McConfig,
    slack: f64,
) -> Result<RiskReport> {
    check_r(r)?;
    check_rho(rho)?;
    mc.validate()?;
    spec.validate(theta0)?;
    let n = grid.max_length();
    let big_k = grid.steps();
    if big_k == 0 {
        return Err(Error::input("the grid needs at least one test step"));
    }

    struct Row {
        risk: f64,
        steps: Vec<f64>,
        first: f64,
    }
    let rows: Vec<Option<Row>> = (0..mc.mc_reps)
        .into_par_iter()
        .map(|i| -> Option<Row> {
            let ys = replicate_series(spec, theta0, n, mc.seed, i).ok()?;
            let risk = parametric_loss(spec, theta0, &ys, mc).ok()?;
            let series = crate::volmodel::ReturnSeries::new(ys.clone()).ok()?;
            let fit = select_interval(spec, &series, n - 1, grid, cv, mc.init, &mc.opt).ok()?;
            let k_hat = fit.selected_k;
            let mut steps = vec![0.0; big_k];
            for k in k_hat + 1..=big_k {
                let window = &ys[n - grid.length(k)..];
                let fk = fit_slice(spec, window, mc.init, &mc.opt, &[]).ok()?;
                steps[k - 1] = (fk.loglik - loglik_slice(&fit.theta_hat, window, mc.init))
                    .abs()
                    .powf(r);
            }
            let alarm = matches!(
                fit.trace.first().map(|s| &s.outcome),
                Some(StepOutcome::Rejected | StepOutcome::Failed(_))
            );
            let first = if alarm {
                let full = fit_slice(spec, &ys, mc.init, &mc.opt, &[]).ok()?;
                (full.loglik - loglik_slice(&fit.theta_hat, &ys, mc.init)).abs().powf(r)
            } else {
                0.0
            };
            Some(Row {
                risk: risk.abs().powf(r),
                steps,
                first,
            })
        })
        .collect();
    let ok: Vec<&Row> = rows.iter().flatten().collect();
    let failures = mc.mc_reps - ok.len();
    check_failures(failures, mc.mc_reps)?;

    let risk_bound = McMean::of(&ok.iter().map(|r| r.risk).collect::<Vec<_>>());
    let steps = (1..=big_k)
        .map(|k| {
            let estimate = McMean::of(&ok.iter().map(|r| r.steps[k - 1]).collect::<Vec<_>>());
            let target = rho * k as f64 / big_k as f64 * risk_bound.mean;
            StepRisk {
                k,
                length: grid.length(k),
                estimate,
                target,
                pass: passes(&estimate, target, slack),
            }
        })
        .collect();
    let first = McMean::of(&ok.iter().map(|r| r.first).collect::<Vec<_>>());
    let first_target = rho * risk_bound.mean / big_k as f64;
    Ok(RiskReport {
        r,
        rho,
        risk_bound,
        steps,
        first_step: StepRisk {
            k: 1,
            length: grid.length(1),
            estimate: first,
            target: first_target,
            pass: passes(&first, first_target, slack),
        },
        replicates: ok.len(),
        failures,
    })
}

/// Everything the procedure can observe on one replicate.
#[derive(Debug, Clone)]
struct Replicate {
    stats: PathStatistics,
    /// `loss[k][j] = L_{I_k}(θ̃_{I_k}) − L_{I_k}(θ̃_{I_j})` for `j ≤ k`.
    loss: Vec<Vec<f64>>,
    /// `L_{I_K}(θ̃_{I_K}, θ₀)`.
    risk: f64,
}

/// Simulated replicates kept in memory so that many schedules and `(r, ρ)`
/// pairs can be evaluated on the same draws.
#[derive(Debug, Clone)]
pub struct ReplicateSet {
    pub spec: ModelSpec,
    pub theta0: ParamVector,
    pub grid: IntervalGrid,
    pub mc: McConfig,
    reps: Vec<Replicate>,
    failures: usize,
}

impl ReplicateSet {
    pub fn simulate(spec: &ModelSpec, theta0: &ParamVector, grid: &IntervalGrid, mc: &McConfig) -> Result<Self> {
        mc.validate()?;
        spec.validate(theta0)?;
        if grid.steps() == 0 {
            return Err(Error::input("the grid needs at least one test step"));
        }
        let n = grid.max_length();
        let reps: Vec<Option<Replicate>> = (0..mc.mc_reps)
            .into_par_iter()
            .map(|i| {
                let ys = replicate_series(spec, theta0, n, mc.seed, i).ok()?;
                let risk = parametric_loss(spec, theta0, &ys, mc).ok()?;
                let series = crate::volmodel::ReturnSeries::new(ys.clone()).ok()?;
                let stats = PathStatistics::compute(spec, &series, n - 1, grid, mc.init, &mc.opt).ok()?;
                let loss = (0..=grid.steps())
                    .map(|k| {
                        let window = &ys[n - grid.length(k)..];
                        (0..=k)
                            .map(|j| stats.fits[k].loglik - loglik_slice(&stats.fits[j].theta_hat, window, mc.init))
                            .collect()
                    })
                    .collect();
                Some(Replicate { stats, loss, risk })
            })
            .collect();
        let failures = reps.iter().filter(|r| r.is_none()).count();
        check_failures(failures, mc.mc_reps)?;
        Ok(ReplicateSet {
            spec: *spec,
            theta0: *theta0,
            grid: grid.clone(),
            mc: mc.clone(),
            reps: reps.into_iter().flatten().collect(),
            failures,
        })
    }

    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    pub fn failures(&self) -> usize {
        self.failures
    }

    pub fn risk_bound(&self, r: f64) -> McMean {
        McMean::of(&self.reps.iter().map(|x| x.risk.abs().powf(r)).collect::<Vec<_>>())
    }

    fn first_step(&self, z1: f64, r: f64) -> McMean {
        let big_k = self.grid.steps();
        let xs: Vec<f64> = self
            .reps
            .iter()
            .map(|x| match x.stats.sup_stats[0] {
                Some(t) if !(t <= z1) => x.loss[big_k][0].abs().powf(r),
                _ => 0.0,
            })
            .collect();
        McMean::of(&xs)
    }

    /// The report [`check_schedule`] would produce for critical values `z`
    /// (indexed by grid position) on these replicates.
    pub fn report(&self, z: &[f64], r: f64, rho: f64, slack: f64) -> Result<RiskReport> {
        check_r(r)?;
        check_rho(rho)?;
        let big_k = self.grid.steps();
        if z.len() != big_k + 1 {
            return Err(Error::ScheduleMismatch(format!(
                "{} critical values for {} grid lengths",
                z.len(),
                big_k + 1
            )));
        }
        let selected: Vec<usize> = self.reps.iter().map(|x| x.stats.selected_k(z)).collect();
        let risk_bound = self.risk_bound(r);
        let steps = (1..=big_k)
            .map(|k| {
                let xs: Vec<f64> = self
                    .reps
                    .iter()
                    .zip(&selected)
                    .map(|(x, &k_hat)| {
                        if k <= k_hat {
                            0.0
                        } else {
                            x.loss[k][k_hat].abs().powf(r)
                        }
                    })
                    .collect();
                let estimate = McMean::of(&xs);
                let target = rho * k as f64 / big_k as f64 * risk_bound.mean;
                StepRisk {
                    k,
                    length: self.grid.length(k),
                    estimate,
                    target,
                    pass: passes(&estimate, target, slack),
                }
            })
            .collect();
        let first = self.first_step(z[1], r);
        let first_target = rho * risk_bound.mean / big_k as f64;
        Ok(RiskReport {
            r,
            rho,
            risk_bound,
            steps,
            first_step: StepRisk {
                k: 1,
                length: self.grid.length(1),
                estimate: first,
                target: first_target,
                pass: passes(&first, first_target, slack),
            },
            replicates: self.reps.len(),
            failures: self.failures,
        })
    }

    /// Values `z_k = z_1 + D·log(m_k / m_1)` for every grid length.
    fn anchored(&self, z1: f64, d: f64) -> Vec<f64> {
        let ln_m1 = (self.grid.length(1) as f64).ln();
        self.grid
            .lengths()
            .iter()
            .map(|&m| z1 + d * ((m as f64).ln() - ln_m1))
            .collect()
    }

    /// Smallest first-step value `z_1` from `c_grid` (refined by bisection
    /// towards the preceding grid point) meeting the first-step condition
    /// with all later steps flat at `z_1`; then the smallest `D ≤ 0` for which
    /// every per-step condition holds.
    pub fn calibrate(&self, r: f64, rho: f64, search: &SearchConfig) -> Result<CriticalValueSchedule> {
        check_r(r)?;
        check_rho(rho)?;
        if search.c_grid.is_empty() || search.c_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::input("c_grid must be nonempty and strictly increasing"));
        }
        if !(search.tol > 0.0) || !(search.d_min <= 0.0) {
            return Err(Error::input("search needs tol > 0 and d_min ≤ 0"));
        }
        let rb = self.risk_bound(r).mean;
        if !(rb > 0.0) {
            return Err(Error::Calibration {
                reason: format!("parametric risk estimate {rb} is not positive"),
                binding: vec![],
            });
        }
        let feasible = |z1: f64| -> Result<bool> {
            let rep = self.report(&self.anchored(z1, 0.0), r, rho, search.slack)?;
            Ok(rep.first_step.pass && rep.passed())
        };

        let mut found = None;
        for (i, &g) in search.c_grid.iter().enumerate() {
            if feasible(g)? {
                found = Some(i);
                break;
            }
        }
        let Some(i) = found else {
            let top = *search.c_grid.last().expect("nonempty");
            let rep = self.report(&self.anchored(top, 0.0), r, rho, search.slack)?;
            let mut binding = rep.binding();
            if !rep.first_step.pass && !binding.contains(&1) {
                binding.insert(0, 1);
            }
            return Err(Error::Calibration {
                reason: format!("no first-step value up to {top} satisfies the risk conditions"),
                binding,
            });
        };
        let mut hi = search.c_grid[i];
        if i > 0 {
            let mut lo = search.c_grid[i - 1];
            while hi - lo > search.tol {
                let mid = 0.5 * (lo + hi);
                if feasible(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
        }
        let z1 = hi;

        let span = (self.grid.max_length() as f64 / self.grid.length(1) as f64).ln();
        // Keep z_K positive.
        let d_floor = if span > 0.0 {
            search.d_min.max(-z1 / span * (1.0 - 1e-9))
        } else {
            0.0
        };
        let ok = |d: f64| -> Result<bool> { Ok(self.report(&self.anchored(z1, d), r, rho, search.slack)?.passed()) };
        let d = if ok(d_floor)? {
            d_floor
        } else {
            let (mut lo, mut hi) = (d_floor, 0.0);
            while hi - lo > search.tol {
                let mid = 0.5 * (lo + hi);
                if ok(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        };
        let c = z1 - d * (self.grid.length(1) as f64).ln();
        let meta = ScheduleMeta {
            theta0: vec![self.theta0],
            r: Some(r),
            rho: Some(rho),
            mc_reps: Some(self.mc.mc_reps),
            seed: Some(self.mc.seed),
            sources: vec![],
        };
        CriticalValueSchedule::linear(self.spec.family, self.grid.clone(), c, d, meta)
    }
}

/// Simulates replicates and calibrates a linear schedule for one `(r, ρ)`.
pub fn calibrate(
    spec: &ModelSpec,
    theta0: &ParamVector,
    grid: &IntervalGrid,
    r: f64,
    rho: f64,
    mc: &McConfig,
    search: &SearchConfig,
) -> Result<CriticalValueSchedule> {
    check_r(r)?;
    check_rho(rho)?;
    ReplicateSet::simulate(spec, theta0, grid, mc)?.calibrate(r, rho, search)
}

/// Pointwise maximum of schedules sharing family, grid, `r` and `ρ`.
pub fn conservative_schedule(schedules: &[CriticalValueSchedule]) -> Result<CriticalValueSchedule> {
    let (first, rest) = schedules
        .split_first()
        .ok_or_else(|| Error::input("no schedules to combine"))?;
    if rest.is_empty() {
        return Ok(first.clone());
    }
    for s in rest {
        if s.grid != first.grid {
            return Err(Error::ScheduleMismatch("schedules use different interval grids".into()));
        }
        if s.family != first.family {
            return Err(Error::ScheduleMismatch(format!(
                "families {} and {} differ",
                first.family, s.family
            )));
        }
        if s.meta.r != first.meta.r || s.meta.rho != first.meta.rho {
            return Err(Error::ScheduleMismatch(
                "schedules were calibrated for different (r, rho)".into(),
            ));
        }
    }
    let z: Vec<f64> = (0..first.values().len())
        .map(|k| schedules.iter().map(|s| s.z(k)).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let mut sources = Vec::new();
    for s in schedules {
        if s.meta.sources.is_empty() {
            let thetas: Vec<String> = s.meta.theta0.iter().map(|t| t.to_string()).collect();
            let seed = s.meta.seed.map_or(String::new(), |v| format!(" seed {v}"));
            sources.push(format!("{} theta0 {}{seed}", s.family, thetas.join("|")));
        } else {
            sources.extend(s.meta.sources.iter().cloned());
        }
    }
    let meta = ScheduleMeta {
        theta0: schedules.iter().flat_map(|s| s.meta.theta0.iter().copied()).collect(),
        r: first.meta.r,
        rho: first.meta.rho,
        mc_reps: schedules.iter().filter_map(|s| s.meta.mc_reps).min(),
        seed: None,
        sources,
    };
    CriticalValueSchedule::from_values(first.family, first.grid.clone(), z, meta)
}
