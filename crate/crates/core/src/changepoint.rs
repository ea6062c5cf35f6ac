//! Likelihood-ratio statistics for a single change point inside an interval.
//!
//! For a split `τ` of `I = [t₀, t₁]` into `J = [t₀, τ]` and `Jᶜ = [τ+1, t₁]`
//!
//! ```text
//! T_{I,τ} = L_J(θ̃_J) + L_{Jᶜ}(θ̃_{Jᶜ}) − L_I(θ̃_I)
//! ```
//!
//! The recursion starts at `t₀` for both segments: `J` is scored from its
//! own start, `Jᶜ` runs its parameter through `J` first and is scored from
//! `τ + 1`. Splitting therefore nests the pooled model and `T_{I,τ} ≥ 0` up
//! to optimizer tolerance. The scan statistic is the supremum over a
//! candidate set.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::likelihood::{Interval, Segment};
use crate::mle::{check_length, fit_segment, fit_slice, FitResult, OptimizerConfig};
use crate::volmodel::{InitRule, ModelSpec, ReturnSeries};

#[derive(Debug, Clone, PartialEq)]
pub struct BreakScan {
    pub interval: Interval,
    /// Feasible break locations, in increasing order.
    pub candidates: Vec<usize>,
    /// `T_{I,τ}` for each entry of `candidates`.
    pub stats: Vec<f64>,
    pub sup_stat: f64,
    pub argmax_tau: usize,
    /// Requested locations dropped because a segment was too short.
    pub infeasible: Vec<usize>,
    pub pooled: FitResult,
    /// False when any segment fit stopped on its evaluation budget.
    pub all_converged: bool,
}

/// Whether `tau` leaves both segments of `interval` long enough for the family.
pub fn is_feasible(spec: &ModelSpec, interval: Interval, tau: usize) -> bool {
    let min = spec.family.min_observations();
    tau >= interval.start && tau < interval.end && tau - interval.start + 1 >= min && interval.end - tau >= min
}

fn split_stat(
    spec: &ModelSpec,
    ys: &[f64],
    interval: Interval,
    tau: usize,
    pooled: &FitResult,
    init: InitRule,
    opt: &OptimizerConfig,
) -> Result<(f64, bool)> {
    let cut = tau - interval.start + 1;
    let warm = [pooled.theta_hat];
    // J^c's recursion runs through J, so L_J(θ) + L_{J^c}(θ) = L_I(θ).
    let j = fit_segment(
        spec,
        Segment {
            ys: &ys[..cut],
            from: 0,
            init_ys: ys,
        },
        init,
        opt,
        &warm,
    )?;
    let jc = fit_segment(
        spec,
        Segment {
            ys,
            from: cut,
            init_ys: ys,
        },
        init,
        opt,
        &warm,
    )?;
    let t = j.loglik + jc.loglik - pooled.loglik;
    if !t.is_finite() {
        return Err(Error::Numeric {
            index: tau,
            what: "likelihood-ratio statistic".into(),
        });
    }
    Ok((t, j.converged && jc.converged))
}

/// `T_{I,τ}` for a single break location.
pub fn lr_stat(
    spec: &ModelSpec,
    y: &ReturnSeries,
    interval: Interval,
    tau: usize,
    init: InitRule,
    opt: &OptimizerConfig,
) -> Result<f64> {
    interval.check_within(y.len())?;
    if !(tau >= interval.start && tau < interval.end) {
        return Err(Error::input(format!("break {tau} does not split {interval}")));
    }
    check_length(spec, tau - interval.start + 1)?;
    check_length(spec, interval.end - tau)?;
    let ys = interval.slice(y.values());
    let pooled = fit_slice(spec, ys, init, opt, &[])?;
    split_stat(spec, ys, interval, tau, &pooled, init, opt).map(|(t, _)| t)
}

/// `T_{I,T(I)} = sup_{τ∈T(I)} T_{I,τ}`. Infeasible candidates are filtered
/// and reported; ties in the supremum go to the earliest break.
pub fn scan(
    spec: &ModelSpec,
    y: &ReturnSeries,
    interval: Interval,
    candidates: &[usize],
    init: InitRule,
    opt: &OptimizerConfig,
) -> Result<BreakScan> {
    interval.check_within(y.len())?;
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let (feasible, infeasible): (Vec<usize>, Vec<usize>) =
        sorted.into_iter().partition(|&tau| is_feasible(spec, interval, tau));
    if feasible.is_empty() {
        return Err(Error::NoFeasibleCandidates {
            start: interval.start,
            end: interval.end,
        });
    }
    let ys = interval.slice(y.values());
    let pooled = fit_slice(spec, ys, init, opt, &[])?;
    let results: Vec<(f64, bool)> = feasible
        .par_iter()
        .map(|&tau| split_stat(spec, ys, interval, tau, &pooled, init, opt))
        .collect::<Result<_>>()?;

    let stats: Vec<f64> = results.iter().map(|r| r.0).collect();
    let mut best = 0;
    for (i, s) in stats.iter().enumerate() {
        if *s > stats[best] {
            best = i;
        }
    }
    Ok(BreakScan {
        interval,
        sup_stat: stats[best],
        argmax_tau: feasible[best],
        candidates: feasible,
        stats,
        infeasible,
        all_converged: pooled.converged && results.iter().all(|r| r.1),
        pooled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volmodel::{mean_square, simulate_path, ParamVector};
    use approx::assert_relative_eq;

    fn series(v: &[f64]) -> ReturnSeries {
        ReturnSeries::new(v.to_vec()).unwrap()
    }

    /// Closed form for the constant family: with segment means of Y² the
    /// quadratic terms cancel, leaving
    /// `½[|I| log v̄_I − |J| log v̄_J − |Jᶜ| log v̄_Jᶜ]`.
    fn constant_lr_oracle(ys: &[f64], cut: usize) -> f64 {
        let (a, b) = ys.split_at(cut);
        0.5 * (ys.len() as f64 * mean_square(ys).ln()
            - a.len() as f64 * mean_square(a).ln()
            - b.len() as f64 * mean_square(b).ln())
    }

    #[test]
    fn constant_two_level_example() {
        let y = series(&[1.0, -1.0, 2.0, -2.0]);
        let i = Interval::new(0, 3).unwrap();
        let t = lr_stat(
            &ModelSpec::constant(),
            &y,
            i,
            1,
            InitRule::default(),
            &OptimizerConfig::default(),
        )
        .unwrap();
        let expected = -1.0 - (4f64.ln() + 1.0) + 2.0 * (2.5f64.ln() + 1.0);
        assert_relative_eq!(t, expected, max_relative = 1e-12);
        assert_relative_eq!(t, 0.446_287, epsilon = 1e-6);
    }

    #[test]
    fn identical_segments_give_zero() {
        let y = series(&[0.5, -1.2, 0.9, 0.5, -1.2, 0.9]);
        let i = Interval::new(0, 5).unwrap();
        let t = lr_stat(
            &ModelSpec::constant(),
            &y,
            i,
            2,
            InitRule::default(),
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert!(t.abs() < 1e-12, "{t}");
    }

    #[test]
    fn constant_matches_closed_form() {
        let (y, _) = simulate_path(&ModelSpec::constant(), &ParamVector::constant(1.0), 120, 6).unwrap();
        let i = Interval::new(20, 119).unwrap();
        let ys = i.slice(y.values());
        for tau in [20usize, 45, 70, 118] {
            let t = lr_stat(
                &ModelSpec::constant(),
                &y,
                i,
                tau,
                InitRule::default(),
                &OptimizerConfig::default(),
            )
            .unwrap();
            let oracle = constant_lr_oracle(ys, tau - 20 + 1);
            assert!(
                (t - oracle).abs() <= 1e-8 * oracle.abs().max(1.0),
                "tau={tau}: {t} vs {oracle}"
            );
        }
    }

    #[test]
    fn short_segments_are_errors_not_zero() {
        let y = series(&[1.0; 30]);
        let i = Interval::new(0, 29).unwrap();
        let err = lr_stat(
            &ModelSpec::garch11(),
            &y,
            i,
            5,
            InitRule::default(),
            &OptimizerConfig::default(),
        );
        assert!(matches!(err, Err(Error::TooFewObservations { .. })));
        let err = scan(
            &ModelSpec::garch11(),
            &y,
            i,
            &[2, 3, 25],
            InitRule::default(),
            &OptimizerConfig::default(),
        );
        assert!(matches!(err, Err(Error::NoFeasibleCandidates { start: 0, end: 29 })));
    }

    #[test]
    fn scan_reports_filtered_candidates() {
        let (y, _) = simulate_path(&ModelSpec::arch1(), &ParamVector::new(1.0, 0.3, 0.0), 60, 1).unwrap();
        let i = Interval::new(0, 59).unwrap();
        let s = scan(
            &ModelSpec::arch1(),
            &y,
            i,
            &[1, 10, 30, 57],
            InitRule::default(),
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert_eq!(s.candidates, vec![10, 30]);
        assert_eq!(s.infeasible, vec![1, 57]);
        assert_eq!(s.sup_stat, s.stats.iter().cloned().fold(f64::MIN, f64::max));
    }

    #[test]
    fn single_candidate_scan_equals_lr_stat() {
        let (y, _) = simulate_path(&ModelSpec::garch11(), &ParamVector::new(1.0, 0.2, 0.5), 80, 2).unwrap();
        let i = Interval::new(0, 79).unwrap();
        let opt = OptimizerConfig::default();
        let s = scan(&ModelSpec::garch11(), &y, i, &[40], InitRule::default(), &opt).unwrap();
        let t = lr_stat(&ModelSpec::garch11(), &y, i, 40, InitRule::default(), &opt).unwrap();
        assert_relative_eq!(s.sup_stat, t, max_relative = 1e-9);
        assert_eq!(s.argmax_tau, 40);
    }

    #[test]
    fn adding_candidates_never_lowers_sup() {
        let (y, _) = simulate_path(&ModelSpec::constant(), &ParamVector::constant(2.0), 100, 12).unwrap();
        let i = Interval::new(0, 99).unwrap();
        let opt = OptimizerConfig::default();
        let spec = ModelSpec::constant();
        let small = scan(&spec, &y, i, &[30, 60], InitRule::default(), &opt).unwrap();
        let large = scan(&spec, &y, i, &[10, 30, 50, 60, 90], InitRule::default(), &opt).unwrap();
        assert!(large.sup_stat >= small.sup_stat);
    }

    #[test]
    fn dynamic_families_nest_the_pooled_fit() {
        let opt = OptimizerConfig::default();
        for (spec, theta) in [
            (ModelSpec::arch1(), ParamVector::new(1.0, 0.4, 0.0)),
            (ModelSpec::garch11(), ParamVector::new(0.2, 0.15, 0.8)),
        ] {
            for seed in 0..4 {
                let (y, _) = simulate_path(&spec, &theta, 60, seed).unwrap();
                let i = Interval::new(0, 59).unwrap();
                let cands: Vec<usize> = (0..59).collect();
                for init in [InitRule::Unconditional, InitRule::SampleVariance] {
                    let s = scan(&spec, &y, i, &cands, init, &opt).unwrap();
                    let min = s.stats.iter().copied().fold(f64::INFINITY, f64::min);
                    assert!(min >= -1e-6, "{} seed {seed} {init:?}: {min}", spec.family);
                }
            }
        }
    }
}
