//! Quasi-maximum-likelihood estimation over the compact set Θ.
//!
//! The constant-volatility fit is closed form (`ω̂ = mean Y²`, clipped to the
//! bounds). ARCH(1) and GARCH(1,1) run a Nelder–Mead search from five
//! deterministic starting points, polishes each result with projected BFGS on
//! the analytic gradient, and keeps the best. The search works in coordinates
//! `(ω / v̄, α, β)` where `v̄` is the mean squared return of the window, which
//! makes the fit scale equivariant.

use crate::error::{Error, Result};
use crate::likelihood::{loglik_grad_segment, loglik_segment, loglik_slice, loss, Interval, Segment};
use crate::optim::{nelder_mead, projected_bfgs};
use crate::volmodel::{mean_square, Family, InitRule, ModelSpec, ParamVector, ReturnSeries};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    /// Relative change in the (per-observation) log-likelihood at which a
    /// search stops.
    pub tol: f64,
    /// Coarser tolerance for the simplex stage; the polish tightens to `tol`.
    pub simplex_tol: f64,
    /// Evaluation budget for each starting point.
    pub max_evals: usize,
    /// Run the gradient polish after each simplex search.
    pub polish: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            tol: 1e-8,
            simplex_tol: 1e-8,
            max_evals: 2000,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub theta_hat: ParamVector,
    /// `L_I(θ̃_I)`.
    pub loglik: f64,
    pub converged: bool,
    pub n_evals: usize,
}

/// (α, β) pairs for the deterministic starts; ω is moment matched.
fn start_shapes(spec: &ModelSpec) -> Vec<(f64, f64)> {
    let b = &spec.bounds;
    match spec.family {
        Family::Constant => vec![(0.0, 0.0)],
        Family::Arch1 => vec![
            (0.5 * b.alpha_max, 0.0),
            (0.1, 0.0),
            (0.02, 0.0),
            (0.3, 0.0),
            (0.7, 0.0),
        ],
        Family::Garch11 => vec![
            (0.5 * b.alpha_max, 0.5 * b.beta_max),
            (0.1, 0.8),
            (0.05, 0.05),
            (0.2, 0.5),
            (0.05, 0.9),
        ],
    }
}

struct Scaled<'a> {
    spec: &'a ModelSpec,
    seg: Segment<'a>,
    init: InitRule,
    scale: f64,
    inv_m: f64,
}

impl Scaled<'_> {
    fn theta(&self, x: &[f64]) -> ParamVector {
        let mut t = self.spec.unpack(x);
        t.omega *= self.scale;
        t
    }

    fn to_x(&self, theta: &ParamVector) -> Vec<f64> {
        let mut x = self.spec.pack(theta);
        x[0] /= self.scale;
        x
    }

    fn project(&self, x: &mut [f64]) {
        let p = self.spec.project(&self.theta(x));
        x.copy_from_slice(&self.to_x(&p));
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let mut p = x.to_vec();
        self.project(&mut p);
        let dist2: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        -loglik_segment(&self.theta(&p), self.seg, self.init) * self.inv_m + 10.0 * dist2
    }

    fn objective_grad(&self, x: &[f64], g: &mut [f64]) -> f64 {
        let (v, full) = loglik_grad_segment(&self.theta(x), self.seg, self.init);
        g[0] = -full[0] * self.scale * self.inv_m;
        if self.spec.alpha_active() {
            g[1] = -full[1] * self.inv_m;
        }
        if self.spec.beta_active() {
            g[2] = -full[2] * self.inv_m;
        }
        -v * self.inv_m
    }
}

fn better(a: &FitResult, b: &FitResult) -> bool {
    match a.loglik.total_cmp(&b.loglik) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => a.theta_hat.lex_cmp(&b.theta_hat).is_lt(),
    }
}

pub(crate) fn check_length(spec: &ModelSpec, len: usize) -> Result<()> {
    let needed = spec.family.min_observations();
    if len < needed {
        return Err(Error::TooFewObservations {
            family: spec.family,
            needed,
            got: len,
        });
    }
    Ok(())
}

/// Closed-form constant-volatility estimate.
pub(crate) fn constant_fit(spec: &ModelSpec, ys: &[f64], init: InitRule) -> FitResult {
    let b = &spec.bounds;
    let omega = mean_square(ys).clamp(b.omega_min, b.omega_max);
    let theta_hat = ParamVector::constant(omega);
    FitResult {
        theta_hat,
        loglik: loglik_slice(&theta_hat, ys, init),
        converged: true,
        n_evals: 1,
    }
}

/// Fit on a raw window. `extra_starts` are tried in addition to the
/// deterministic ones (warm starts from neighbouring windows).
pub(crate) fn fit_slice(
    spec: &ModelSpec,
    ys: &[f64],
    init: InitRule,
    opt: &OptimizerConfig,
    extra_starts: &[ParamVector],
) -> Result<FitResult> {
    fit_segment(spec, Segment::whole(ys), init, opt, extra_starts)
}

/// Fit on `seg.scored()` with the recursion primed over `seg.ys[..seg.from]`.
pub(crate) fn fit_segment(
    spec: &ModelSpec,
    seg: Segment<'_>,
    init: InitRule,
    opt: &OptimizerConfig,
    extra_starts: &[ParamVector],
) -> Result<FitResult> {
    let scored = seg.scored();
    check_length(spec, scored.len())?;
    if spec.family == Family::Constant {
        let mut f = constant_fit(spec, scored, init);
        f.loglik = loglik_segment(&f.theta_hat, seg, init);
        return Ok(f);
    }

    let vbar = mean_square(scored);
    let scale = vbar.max(spec.bounds.omega_min);
    let problem = Scaled {
        spec,
        seg,
        init,
        scale,
        inv_m: 1.0 / scored.len() as f64,
    };

    let mut starts: Vec<ParamVector> = start_shapes(spec)
        .into_iter()
        .map(|(a, b)| spec.project(&ParamVector::new(scale * (1.0 - a - b).max(1e-3), a, b)))
        .collect();
    starts.extend(extra_starts.iter().map(|t| spec.project(t)));

    let dim = spec.family.dim();
    let mut total_evals = 0;
    let mut best: Option<FitResult> = None;
    for start in &starts {
        let x0 = problem.to_x(start);
        let mut step: Vec<f64> = vec![0.05; dim];
        step[0] = 0.1 * x0[0].max(1e-3);
        // Step inward so the initial simplex stays (mostly) feasible.
        for j in 1..dim {
            let mut probe = x0.clone();
            probe[j] += step[j];
            let mut pp = probe.clone();
            problem.project(&mut pp);
            if pp != probe {
                step[j] = -step[j];
            }
        }
        let out = nelder_mead(
            |x| problem.objective(x),
            &x0,
            &step,
            opt.simplex_tol.max(opt.tol),
            opt.max_evals,
        );
        total_evals += out.evals;
        let mut x = out.x;
        problem.project(&mut x);
        let mut candidate = FitResult {
            theta_hat: problem.theta(&x),
            loglik: 0.0,
            converged: out.converged,
            n_evals: 0,
        };
        candidate.loglik = loglik_segment(&candidate.theta_hat, seg, init);
        if opt.polish {
            let polished = projected_bfgs(
                |x, g| problem.objective_grad(x, g),
                |x| problem.project(x),
                &x,
                opt.tol * 1e-2,
                opt.max_evals,
            );
            total_evals += polished.evals;
            let theta = problem.theta(&polished.x);
            let ll = loglik_segment(&theta, seg, init);
            if ll.is_finite() && ll >= candidate.loglik {
                candidate.theta_hat = theta;
                candidate.loglik = ll;
            }
            candidate.converged = candidate.converged || polished.converged;
        }
        if best.as_ref().is_none_or(|b| better(&candidate, b)) {
            best = Some(candidate);
        }
    }
    let mut result = best.expect("at least one start");
    result.n_evals = total_evals;
    if !result.loglik.is_finite() {
        result.converged = false;
    }
    Ok(result)
}

/// `θ̃_I = argmax_{θ∈Θ} L_I(θ)`.
pub fn fit(
    spec: &ModelSpec,
    y: &ReturnSeries,
    interval: Interval,
    init: InitRule,
    opt: &OptimizerConfig,
) -> Result<FitResult> {
    interval.check_within(y.len())?;
    fit_slice(spec, interval.slice(y.values()), init, opt, &[])
}

/// `L_I(θ̃_I, θ)`: how far the maximum lies above the likelihood at `theta`.
pub fn fitted_loss(
    spec: &ModelSpec,
    y: &ReturnSeries,
    interval: Interval,
    theta: &ParamVector,
    init: InitRule,
    opt: &OptimizerConfig,
) -> Result<f64> {
    let f = fit(spec, y, interval, init, opt)?;
    loss(spec, &f.theta_hat, theta, y, interval, init)
}

/// Membership of `theta` in the likelihood confidence set
/// `{θ : L_I(θ̃_I, θ) ≤ z}`.
pub fn confidence_set_contains(
    spec: &ModelSpec,
    y: &ReturnSeries,
    interval: Interval,
    theta: &ParamVector,
    z_alpha: f64,
    init: InitRule,
    opt: &OptimizerConfig,
) -> Result<bool> {
    if !(z_alpha > 0.0) {
        return Err(Error::domain(format!(
            "confidence threshold must be positive, got {z_alpha}"
        )));
    }
    Ok(fitted_loss(spec, y, interval, theta, init, opt)? <= z_alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::loglik;
    use crate::volmodel::simulate_path;
    use approx::assert_relative_eq;

    fn series(v: &[f64]) -> ReturnSeries {
        ReturnSeries::new(v.to_vec()).unwrap()
    }

    fn whole(y: &ReturnSeries) -> Interval {
        Interval::new(0, y.len() - 1).unwrap()
    }

    #[test]
    fn constant_closed_form() {
        let y = series(&[1.0, -2.0]);
        let f = fit(
            &ModelSpec::constant(),
            &y,
            whole(&y),
            InitRule::default(),
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert_eq!(f.theta_hat, ParamVector::constant(2.5));
        assert_relative_eq!(f.loglik, -0.5 * 2.0 * (2.5f64.ln() + 1.0), max_relative = 1e-14);
        assert!(f.converged);
    }

    #[test]
    fn constant_fit_clips_to_bounds() {
        let y = series(&[0.0, 0.0, 0.0]);
        let spec = ModelSpec::constant();
        let f = fit(&spec, &y, whole(&y), InitRule::default(), &OptimizerConfig::default()).unwrap();
        assert_eq!(f.theta_hat.omega, spec.bounds.omega_min);
    }

    #[test]
    fn too_few_observations() {
        let y = series(&[1.0; 9]);
        let err = fit(
            &ModelSpec::garch11(),
            &y,
            whole(&y),
            InitRule::default(),
            &OptimizerConfig::default(),
        );
        assert!(matches!(err, Err(Error::TooFewObservations { needed: 10, got: 9, .. })));
        let y = series(&[1.0; 4]);
        assert!(fit(
            &ModelSpec::arch1(),
            &y,
            whole(&y),
            InitRule::default(),
            &OptimizerConfig::default()
        )
        .is_err());
    }

    #[test]
    fn fit_beats_its_starting_points() {
        let spec = ModelSpec::garch11();
        let (y, _) = simulate_path(&spec, &ParamVector::new(1.0, 0.2, 0.6), 300, 4).unwrap();
        let i = whole(&y);
        let f = fit(&spec, &y, i, InitRule::default(), &OptimizerConfig::default()).unwrap();
        assert!(spec.contains(&f.theta_hat));
        let vbar = mean_square(y.values());
        for (a, b) in start_shapes(&spec) {
            let t = spec.project(&ParamVector::new(vbar * (1.0 - a - b).max(1e-3), a, b));
            assert!(f.loglik >= loglik(&spec, &t, &y, i, InitRule::default()).unwrap());
        }
    }

    #[test]
    fn fitted_loss_of_own_estimate_is_zero() {
        let spec = ModelSpec::arch1();
        let (y, _) = simulate_path(&spec, &ParamVector::new(1.0, 0.3, 0.0), 200, 8).unwrap();
        let i = whole(&y);
        let opt = OptimizerConfig::default();
        let f = fit(&spec, &y, i, InitRule::default(), &opt).unwrap();
        assert_eq!(
            fitted_loss(&spec, &y, i, &f.theta_hat, InitRule::default(), &opt).unwrap(),
            0.0
        );
        assert!(confidence_set_contains(&spec, &y, i, &f.theta_hat, 1e-12, InitRule::default(), &opt).unwrap());
        let far = ParamVector::new(5.0, 0.9, 0.0);
        assert!(!confidence_set_contains(&spec, &y, i, &far, 1e-12, InitRule::default(), &opt).unwrap());
        assert!(confidence_set_contains(&spec, &y, i, &far, 0.0, InitRule::default(), &opt).is_err());
    }

    #[test]
    fn constant_fitted_loss_closed_form() {
        let y = series(&[0.3, -1.1, 2.2, 0.4, -0.9, 1.6]);
        let vbar = mean_square(y.values());
        let spec = ModelSpec::constant();
        for omega in [0.5, 1.7, 3.0] {
            let l = fitted_loss(
                &spec,
                &y,
                whole(&y),
                &ParamVector::constant(omega),
                InitRule::default(),
                &OptimizerConfig::default(),
            )
            .unwrap();
            let closed = 0.5 * 6.0 * ((omega / vbar).ln() + vbar / omega - 1.0);
            assert_relative_eq!(l, closed, max_relative = 1e-12);
            assert!(l >= 0.0);
        }
    }

    #[test]
    fn nested_families_are_ordered() {
        let (y, _) = simulate_path(&ModelSpec::garch11(), &ParamVector::new(0.5, 0.15, 0.7), 400, 21).unwrap();
        let i = whole(&y);
        let opt = OptimizerConfig::default();
        let init = InitRule::default();
        let c = fit(&ModelSpec::constant(), &y, i, init, &opt).unwrap().loglik;
        let a = fit(&ModelSpec::arch1(), &y, i, init, &opt).unwrap().loglik;
        let g = fit(&ModelSpec::garch11(), &y, i, init, &opt).unwrap().loglik;
        let tol = 1e-6 * 400.0;
        assert!(a >= c - tol, "arch {a} < constant {c}");
        assert!(g >= a - tol, "garch {g} < arch {a}");
    }

    #[test]
    fn scale_equivariance() {
        let (y, _) = simulate_path(&ModelSpec::constant(), &ParamVector::constant(1.0), 50, 2).unwrap();
        let c = 3.0;
        let scaled = series(&y.values().iter().map(|v| v * c).collect::<Vec<_>>());
        let opt = OptimizerConfig::default();
        let a = fit(&ModelSpec::constant(), &y, whole(&y), InitRule::default(), &opt).unwrap();
        let b = fit(&ModelSpec::constant(), &scaled, whole(&y), InitRule::default(), &opt).unwrap();
        assert_relative_eq!(b.theta_hat.omega, c * c * a.theta_hat.omega, max_relative = 1e-12);
    }

    #[test]
    fn arch_on_constant_data_hits_boundary() {
        let (y, _) = simulate_path(&ModelSpec::constant(), &ParamVector::constant(1.0), 10_000, 31).unwrap();
        let f = fit(
            &ModelSpec::arch1(),
            &y,
            whole(&y),
            InitRule::default(),
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert!(f.theta_hat.alpha < 0.05, "{}", f.theta_hat);
    }
}
