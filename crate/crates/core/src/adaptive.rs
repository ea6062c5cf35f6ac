//! Sequential search for the longest interval of time homogeneity ending at
//! an endpoint `n`, and the resulting adaptive estimate.
//!
//! `I_0` is accepted without a test. For `k = 1, 2, …` the supremum LR
//! statistic of `I_k` is compared with `z_k`; the first rejection stops the
//! search and `I_{k−1}` is selected. If every step accepts, `I_K` is used.
//! The estimate is the quasi-MLE refitted on the selected interval.

use rayon::prelude::*;

use crate::changepoint::scan;
use crate::error::{Error, Result};
use crate::grid::{CandidateSet, IntervalGrid};
use crate::likelihood::Interval;
use crate::mle::{fit_slice, FitResult, OptimizerConfig};
use crate::schedule::CriticalValueSchedule;
use crate::volmodel::{InitRule, ModelSpec, ParamVector, ReturnSeries};

#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    Accepted,
    Rejected,
    /// `I_k` cannot be split into two estimable segments; accepted untested.
    Untestable,
    /// The test could not be computed; treated as a rejection.
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub length: usize,
    pub sup_stat: Option<f64>,
    pub z: f64,
    pub argmax_tau: Option<usize>,
    pub outcome: StepOutcome,
    pub converged: bool,
}

impl StepRecord {
    pub fn accepted(&self) -> bool {
        matches!(self.outcome, StepOutcome::Accepted | StepOutcome::Untestable)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    BreakDetected,
    GridExhausted,
    /// Every step allowed by the available history was accepted, but the
    /// history is shorter than `m_K`.
    HistoryExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveFit {
    pub endpoint: usize,
    pub selected_k: usize,
    pub interval: Interval,
    pub theta_hat: ParamVector,
    pub fit: FitResult,
    pub trace: Vec<StepRecord>,
    pub stopped_reason: StopReason,
}

/// One homogeneity test. `Ok(None)` marks an untestable step.
pub(crate) struct StepTest {
    pub sup_stat: f64,
    pub argmax_tau: usize,
    pub converged: bool,
}

pub(crate) fn test_step(
    spec: &ModelSpec,
    y: &ReturnSeries,
    endpoint: usize,
    grid: &IntervalGrid,
    k: usize,
    init: InitRule,
    opt: &OptimizerConfig,
) -> Result<Option<StepTest>> {
    let interval = grid.interval(endpoint, k)?;
    match grid.candidates(spec.family, endpoint, k)? {
        CandidateSet::Untestable => Ok(None),
        CandidateSet::Locations(taus) => {
            let s = scan(spec, y, interval, &taus, init, opt)?;
            Ok(Some(StepTest {
                sup_stat: s.sup_stat,
                argmax_tau: s.argmax_tau,
                converged: s.all_converged,
            }))
        }
    }
}

fn usable_grid(grid: &IntervalGrid, endpoint: usize, n_obs: usize) -> Result<IntervalGrid> {
    if endpoint >= n_obs {
        return Err(Error::input(format!(
            "endpoint {endpoint} outside series of length {n_obs}"
        )));
    }
    grid.truncated(endpoint + 1).ok_or(Error::InsufficientHistory {
        endpoint,
        needed: grid.m0(),
        available: endpoint + 1,
    })
}

fn check_schedule(grid: &IntervalGrid, cv: &CriticalValueSchedule) -> Result<()> {
    if cv.grid.lengths() != grid.lengths() {
        return Err(Error::ScheduleMismatch(format!(
            "schedule lengths {:?} differ from grid {:?}",
            cv.grid.lengths(),
            grid.lengths()
        )));
    }
    Ok(())
}

/// Adaptive estimate at `endpoint` (a zero-based index into `y`).
pub fn select_interval(
    spec: &ModelSpec,
    y: &ReturnSeries,
    endpoint: usize,
    grid: &IntervalGrid,
    cv: &CriticalValueSchedule,
    init: InitRule,
    opt: &OptimizerConfig,
) -> Result<AdaptiveFit> {
    check_schedule(grid, cv)?;
    let usable = usable_grid(grid, endpoint, y.len())?;
    let mut trace = Vec::with_capacity(usable.steps());
    let mut selected_k = 0;
    let mut stopped = None;

    for k in 1..=usable.steps() {
        let z = cv.z(k);
        let mut record = StepRecord {
            k,
            length: usable.length(k),
            sup_stat: None,
            z,
            argmax_tau: None,
            outcome: StepOutcome::Untestable,
            converged: true,
        };
        match test_step(spec, y, endpoint, &usable, k, init, opt) {
            Ok(None) => {}
            Ok(Some(t)) => {
                record.sup_stat = Some(t.sup_stat);
                record.argmax_tau = Some(t.argmax_tau);
                record.converged = t.converged;
                record.outcome = if t.sup_stat > z {
                    StepOutcome::Rejected
                } else {
                    StepOutcome::Accepted
                };
            }
            Err(e) => record.outcome = StepOutcome::Failed(e.to_string()),
        }
        let accepted = record.accepted();
        trace.push(record);
        if !accepted {
            stopped = Some(StopReason::BreakDetected);
            break;
        }
        selected_k = k;
    }

    let stopped_reason = stopped.unwrap_or(if usable.steps() < grid.steps() {
        StopReason::HistoryExhausted
    } else {
        StopReason::GridExhausted
    });
    let interval = usable.interval(endpoint, selected_k)?;
    let fit = fit_slice(spec, interval.slice(y.values()), init, opt, &[])?;
    Ok(AdaptiveFit {
        endpoint,
        selected_k,
        interval,
        theta_hat: fit.theta_hat,
        fit,
        trace,
        stopped_reason,
    })
}

/// Independent [`select_interval`] runs, one per endpoint, in input order.
/// Failures at one endpoint do not affect the others.
pub fn rolling_fit(
    spec: &ModelSpec,
    y: &ReturnSeries,
    endpoints: &[usize],
    grid: &IntervalGrid,
    cv: &CriticalValueSchedule,
    init: InitRule,
    opt: &OptimizerConfig,
) -> Vec<Result<AdaptiveFit>> {
    endpoints
        .par_iter()
        .map(|&n| select_interval(spec, y, n, grid, cv, init, opt))
        .collect()
}

/// Every quantity the procedure can look at for one endpoint, computed
/// without stopping: the fits `θ̃_{I_k}` for `k = 0..=K` and the test
/// statistics for `k = 1..=K`. Replaying a schedule against these gives the
/// same selection as [`select_interval`].
#[derive(Debug, Clone, PartialEq)]
pub struct PathStatistics {
    pub fits: Vec<FitResult>,
    /// `None` for untestable steps; `NaN` for failed tests.
    pub sup_stats: Vec<Option<f64>>,
}

impl PathStatistics {
    pub fn compute(
        spec: &ModelSpec,
        y: &ReturnSeries,
        endpoint: usize,
        grid: &IntervalGrid,
        init: InitRule,
        opt: &OptimizerConfig,
    ) -> Result<Self> {
        if endpoint + 1 < grid.max_length() || endpoint >= y.len() {
            return Err(Error::InsufficientHistory {
                endpoint,
                needed: grid.max_length(),
                available: (endpoint + 1).min(y.len()),
            });
        }
        let fits = (0..=grid.steps())
            .map(|k| {
                let interval = grid.interval(endpoint, k)?;
                fit_slice(spec, interval.slice(y.values()), init, opt, &[])
            })
            .collect::<Result<Vec<_>>>()?;
        let sup_stats = (1..=grid.steps())
            .map(|k| match test_step(spec, y, endpoint, grid, k, init, opt) {
                Ok(t) => t.map(|t| t.sup_stat),
                Err(_) => Some(f64::NAN),
            })
            .collect();
        Ok(PathStatistics { fits, sup_stats })
    }

    /// Index of the selected interval under critical values `z` (indexed by
    /// grid position, `z[0]` unused).
    pub fn selected_k(&self, z: &[f64]) -> usize {
        for (i, s) in self.sup_stats.iter().enumerate() {
            let k = i + 1;
            if let Some(s) = s {
                // NaN never satisfies `≤`, so failed tests reject.
                if !(*s <= z[k]) {
                    return k - 1;
                }
            }
        }
        self.sup_stats.len()
    }

    /// The step at which the procedure stops, if it rejects at all.
    pub fn first_rejection(&self, z: &[f64]) -> Option<usize> {
        let k = self.selected_k(z);
        (k < self.sup_stats.len()).then_some(k + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volmodel::{simulate_path, Family};

    fn grid() -> IntervalGrid {
        IntervalGrid::spanning(10, 1.25, 120).unwrap()
    }

    fn never_reject(family: Family) -> CriticalValueSchedule {
        CriticalValueSchedule::constant_value(family, grid(), f64::INFINITY).unwrap()
    }

    #[test]
    fn infinite_critical_values_select_the_longest_interval() {
        let spec = ModelSpec::constant();
        let (y, _) = simulate_path(&spec, &ParamVector::constant(1.0), 200, 1).unwrap();
        let opt = OptimizerConfig::default();
        let fit = select_interval(
            &spec,
            &y,
            199,
            &grid(),
            &never_reject(Family::Constant),
            InitRule::default(),
            &opt,
        )
        .unwrap();
        assert_eq!(fit.selected_k, grid().steps());
        assert_eq!(fit.interval, Interval::new(80, 199).unwrap());
        assert_eq!(fit.stopped_reason, StopReason::GridExhausted);
        let full = crate::mle::fit(&spec, &y, fit.interval, InitRule::default(), &opt).unwrap();
        assert_eq!(fit.theta_hat, full.theta_hat);
    }

    #[test]
    fn zero_critical_values_stop_at_first_step() {
        let spec = ModelSpec::constant();
        let (y, _) = simulate_path(&spec, &ParamVector::constant(1.0), 200, 2).unwrap();
        let cv = CriticalValueSchedule::constant_value(Family::Constant, grid(), 0.0).unwrap();
        let fit = select_interval(
            &spec,
            &y,
            150,
            &grid(),
            &cv,
            InitRule::default(),
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert_eq!(fit.selected_k, 0);
        assert_eq!(fit.interval.len(), 10);
        assert_eq!(fit.stopped_reason, StopReason::BreakDetected);
        assert_eq!(fit.trace.len(), 1);
        assert_eq!(fit.trace[0].outcome, StepOutcome::Rejected);
    }

    #[test]
    fn short_history() {
        let spec = ModelSpec::constant();
        let (y, _) = simulate_path(&spec, &ParamVector::constant(1.0), 200, 3).unwrap();
        let cv = never_reject(Family::Constant);
        let opt = OptimizerConfig::default();
        let fit = select_interval(&spec, &y, 49, &grid(), &cv, InitRule::default(), &opt).unwrap();
        assert_eq!(fit.stopped_reason, StopReason::HistoryExhausted);
        assert!(fit.interval.len() <= 50);
        let err = select_interval(&spec, &y, 5, &grid(), &cv, InitRule::default(), &opt);
        assert!(matches!(err, Err(Error::InsufficientHistory { .. })));
    }

    #[test]
    fn trace_is_monotone_and_replayable() {
        let spec = ModelSpec::constant();
        let (mut v, _) = simulate_path(&spec, &ParamVector::constant(1.0), 200, 4).unwrap();
        let mut values = v.values().to_vec();
        for x in values.iter_mut().skip(160) {
            *x *= 3.0;
        }
        v = ReturnSeries::new(values).unwrap();
        let g = grid();
        let cv = CriticalValueSchedule::linear(Family::Constant, g.clone(), 12.0, -1.0, Default::default()).unwrap();
        let opt = OptimizerConfig::default();
        let fit = select_interval(&spec, &v, 199, &g, &cv, InitRule::default(), &opt).unwrap();
        let k_hat = fit.selected_k;
        assert!(fit.trace[..k_hat].iter().all(|r| r.accepted()));
        if fit.stopped_reason == StopReason::BreakDetected {
            let last = fit.trace.last().unwrap();
            assert_eq!(last.k, k_hat + 1);
            assert!(last.sup_stat.unwrap() > last.z);
        }
        let stats = PathStatistics::compute(&spec, &v, 199, &g, InitRule::default(), &opt).unwrap();
        assert_eq!(stats.selected_k(cv.values()), k_hat);
        assert_eq!(stats.fits[k_hat].theta_hat, fit.theta_hat);
    }

    #[test]
    fn rolling_fit_matches_single_runs() {
        let spec = ModelSpec::arch1();
        let (y, _) = simulate_path(&spec, &ParamVector::new(1.0, 0.2, 0.0), 160, 5).unwrap();
        let cv = CriticalValueSchedule::linear(Family::Arch1, grid(), 15.0, -1.0, Default::default()).unwrap();
        let opt = OptimizerConfig::default();
        let batch = rolling_fit(&spec, &y, &[3, 130, 159], &grid(), &cv, InitRule::default(), &opt);
        assert!(batch[0].is_err());
        let single = select_interval(&spec, &y, 159, &grid(), &cv, InitRule::default(), &opt).unwrap();
        assert_eq!(batch[2].as_ref().unwrap(), &single);
    }

    #[test]
    fn mismatched_schedule_is_rejected() {
        let spec = ModelSpec::constant();
        let (y, _) = simulate_path(&spec, &ParamVector::constant(1.0), 200, 6).unwrap();
        let other = CriticalValueSchedule::constant_value(
            Family::Constant,
            IntervalGrid::spanning(10, 1.25, 150).unwrap(),
            1.0,
        )
        .unwrap();
        let err = select_interval(
            &spec,
            &y,
            199,
            &grid(),
            &other,
            InitRule::default(),
            &OptimizerConfig::default(),
        );
        assert!(matches!(err, Err(Error::ScheduleMismatch(_))));
    }
}
