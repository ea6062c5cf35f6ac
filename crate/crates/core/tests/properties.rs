use adaptive_vol::adaptive::{select_interval, PathStatistics};
use adaptive_vol::changepoint::{lr_stat, scan};
use adaptive_vol::grid::IntervalGrid;
use adaptive_vol::likelihood::{kl_gauss, loglik, loss, Interval};
use adaptive_vol::mle::{fit, OptimizerConfig};
use adaptive_vol::schedule::CriticalValueSchedule;
use adaptive_vol::volmodel::{Family, InitRule, ModelSpec, ParamVector, ReturnSeries};
use proptest::prelude::*;

fn returns(min: usize, max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![-5.0..-0.01f64, 0.01..5.0f64], min..max)
}

fn whole(n: usize) -> Interval {
    Interval::new(0, n - 1).unwrap()
}

/// Constant-volatility split statistic in closed form.
fn constant_lr(ys: &[f64], cut: usize) -> f64 {
    let half_n_log_mean =
        |s: &[f64]| 0.5 * s.len() as f64 * (s.iter().map(|y| y * y).sum::<f64>() / s.len() as f64).ln();
    half_n_log_mean(ys) - half_n_log_mean(&ys[..cut]) - half_n_log_mean(&ys[cut..])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kl_is_nonnegative_and_vanishes_on_the_diagonal(v in 1e-3..1e3f64, w in 1e-3..1e3f64) {
        let k = kl_gauss(v, w).unwrap();
        prop_assert!(k >= 0.0);
        prop_assert!(kl_gauss(v, v).unwrap().abs() < 1e-15);
    }

    #[test]
    fn constant_loglik_matches_direct_sum(ys in returns(1, 60), omega in 0.05..20.0f64) {
        let y = ReturnSeries::new(ys.clone()).unwrap();
        let l = loglik(&ModelSpec::constant(), &ParamVector::constant(omega), &y, whole(ys.len()), InitRule::default()).unwrap();
        let direct: f64 = ys.iter().map(|v| -0.5 * (omega.ln() + v * v / omega)).sum();
        prop_assert!((l - direct).abs() <= 1e-10 * direct.abs().max(1.0));
    }

    #[test]
    fn fitted_constant_dominates_every_parameter(ys in returns(1, 60), omega in 0.05..20.0f64) {
        let y = ReturnSeries::new(ys.clone()).unwrap();
        let spec = ModelSpec::constant();
        let f = fit(&spec, &y, whole(ys.len()), InitRule::default(), &OptimizerConfig::default()).unwrap();
        let mean_sq = ys.iter().map(|v| v * v).sum::<f64>() / ys.len() as f64;
        prop_assert!((f.theta_hat.omega / mean_sq - 1.0).abs() < 1e-12);
        let l = loss(&spec, &f.theta_hat, &ParamVector::constant(omega), &y, whole(ys.len()), InitRule::default()).unwrap();
        prop_assert!(l >= -1e-10);
    }

    #[test]
    fn constant_lr_matches_closed_form(ys in returns(4, 40), frac in 0.0..1.0f64) {
        let n = ys.len();
        let cut = 1 + ((n - 2) as f64 * frac) as usize;
        let y = ReturnSeries::new(ys.clone()).unwrap();
        let t = lr_stat(&ModelSpec::constant(), &y, whole(n), cut - 1, InitRule::default(), &OptimizerConfig::default()).unwrap();
        let oracle = constant_lr(&ys, cut);
        prop_assert!((t - oracle).abs() <= 1e-8 * oracle.abs().max(1.0), "{} vs {}", t, oracle);
        prop_assert!(t >= -1e-10);
    }

    #[test]
    fn scan_supremum_is_the_largest_split(ys in returns(6, 40)) {
        let n = ys.len();
        let y = ReturnSeries::new(ys.clone()).unwrap();
        let cands: Vec<usize> = (0..n - 1).collect();
        let s = scan(&ModelSpec::constant(), &y, whole(n), &cands, InitRule::default(), &OptimizerConfig::default()).unwrap();
        let best = (1..n).map(|c| constant_lr(&ys, c)).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((s.sup_stat - best).abs() <= 1e-8 * best.abs().max(1.0));
        prop_assert!(s.stats.iter().all(|t| *t <= s.sup_stat));
    }

    #[test]
    fn grid_intervals_are_nested_and_end_at_the_endpoint(m0 in 2usize..20, a in 1.05..2.0f64, steps in 1usize..12, extra in 0usize..50) {
        let grid = IntervalGrid::geometric(m0, a, steps).unwrap();
        let endpoint = grid.max_length() - 1 + extra;
        let mut prev: Option<Interval> = None;
        for k in 0..=grid.steps() {
            let i = grid.interval(endpoint, k).unwrap();
            prop_assert_eq!(i.end, endpoint);
            prop_assert_eq!(i.len(), grid.length(k));
            if let Some(p) = prev {
                prop_assert!(i.start < p.start);
            }
            prev = Some(i);
        }
    }

    #[test]
    fn schedule_text_round_trips(c in -50.0..50.0f64, d in -5.0..5.0f64) {
        let grid = IntervalGrid::spanning(10, 1.25, 570).unwrap();
        let cv = CriticalValueSchedule::linear(Family::Arch1, grid, c, d, Default::default()).unwrap();
        let back = CriticalValueSchedule::from_text(&cv.to_text()).unwrap();
        prop_assert_eq!(back, cv);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Raising every critical value can only lengthen the selected interval,
    /// and replaying stored statistics gives the same choice as a live run.
    #[test]
    fn selection_is_monotone_in_the_schedule(seed in 0u64..1000, z in 0.5..6.0f64, bump in 0.0..4.0f64) {
        let spec = ModelSpec::constant();
        let grid = IntervalGrid::spanning(10, 1.25, 118).unwrap();
        let theta = ParamVector::constant(1.0);
        let (y, _) = adaptive_vol::volmodel::simulate_path(&spec, &theta, 150, seed).unwrap();
        let opt = OptimizerConfig::default();
        let stats = PathStatistics::compute(&spec, &y, 149, &grid, InitRule::default(), &opt).unwrap();
        let low = CriticalValueSchedule::constant_value(Family::Constant, grid.clone(), z).unwrap();
        let high = CriticalValueSchedule::constant_value(Family::Constant, grid.clone(), z + bump).unwrap();
        let k_low = stats.selected_k(low.values());
        let k_high = stats.selected_k(high.values());
        prop_assert!(k_low <= k_high);
        let live = select_interval(&spec, &y, 149, &grid, &low, InitRule::default(), &opt).unwrap();
        prop_assert_eq!(live.selected_k, k_low);
    }
}
