//! Minimizers used by the quasi-MLE: a Nelder–Mead simplex search and a
//! projected BFGS polish. Both minimize; callers negate the likelihood.
//!
//! Feasibility is handled by the caller through a projection closure.

pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub evals: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn spread_small(f_best: f64, f_worst: f64, tol: f64) -> bool {
    (f_worst - f_best).abs() <= tol * (f_best.abs() + tol)
}

/// Nelder–Mead from `x0` with axis steps `step`. Stops when the relative
/// spread of function values over the simplex drops below `tol` or after
/// `max_evals` evaluations.
pub(crate) fn nelder_mead<F>(mut f: F, x0: &[f64], step: &[f64], tol: f64, max_evals: usize) -> Outcome
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut values: Vec<f64> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    values.push(eval(x0, &mut evals));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step[i];
        values.push(eval(&x, &mut evals));
        simplex.push(x);
    }

    let mut converged = false;
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial2 = vec![0.0; n];
    while evals < max_evals {
        // Order vertices; ties broken by insertion order for determinism.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        if spread_small(values[0], values[n], tol) {
            converged = true;
            break;
        }

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let worst = simplex[n].clone();
        for j in 0..n {
            trial[j] = centroid[j] + REFLECT * (centroid[j] - worst[j]);
        }
        let fr = eval(&trial, &mut evals);
        if fr < values[0] {
            for j in 0..n {
                trial2[j] = centroid[j] + EXPAND * (trial[j] - centroid[j]);
            }
            let fe = eval(&trial2, &mut evals);
            if fe < fr {
                simplex[n].copy_from_slice(&trial2);
                values[n] = fe;
            } else {
                simplex[n].copy_from_slice(&trial);
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n].copy_from_slice(&trial);
            values[n] = fr;
            continue;
        }
        // Contraction, outside if the reflection improved on the worst point.
        let outside = fr < values[n];
        for j in 0..n {
            trial2[j] = if outside {
                centroid[j] + CONTRACT * (trial[j] - centroid[j])
            } else {
                centroid[j] + CONTRACT * (worst[j] - centroid[j])
            };
        }
        let fc = eval(&trial2, &mut evals);
        if fc < if outside { fr } else { values[n] } {
            simplex[n].copy_from_slice(&trial2);
            values[n] = fc;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=n {
            for j in 0..n {
                simplex[i][j] = best[j] + SHRINK * (simplex[i][j] - best[j]);
            }
            values[i] = eval(&simplex[i], &mut evals);
        }
    }

    let (i_best, _) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("simplex is nonempty");
    Outcome {
        x: simplex[i_best].clone(),
        evals,
        converged,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projected BFGS with Armijo backtracking along the projection arc.
/// `fg` returns the objective and writes the gradient.
pub(crate) fn projected_bfgs<F, P>(mut fg: F, project: P, x0: &[f64], tol: f64, max_evals: usize) -> Outcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
    P: Fn(&mut [f64]),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x);
    let mut g = vec![0.0; n];
    let mut f = fg(&x, &mut g);
    let mut evals = 1;
    if !f.is_finite() {
        return Outcome {
            x,
            evals,
            converged: false,
        };
    }

    let identity = |scale: f64| {
        let mut h = vec![vec![0.0; n]; n];
        for (i, row) in h.iter_mut().enumerate() {
            row[i] = scale;
        }
        h
    };
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut h = identity(if gmax > 0.0 { 0.1 / gmax } else { 1.0 });
    let mut h_is_identity = true;

    let mut d = vec![0.0; n];
    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];
    let mut converged = false;
    while evals < max_evals {
        for i in 0..n {
            d[i] = -dot(&h[i], &g);
        }
        if dot(&d, &g) >= 0.0 {
            let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if gmax == 0.0 {
                converged = true;
                break;
            }
            h = identity(0.1 / gmax);
            h_is_identity = true;
            continue;
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            for i in 0..n {
                xt[i] = x[i] + t * d[i];
            }
            project(&mut xt);
            let moved: f64 = xt.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
            if moved == 0.0 {
                break;
            }
            let ft = fg(&xt, &mut gt);
            evals += 1;
            let decrease: f64 = xt.iter().zip(&x).zip(&g).map(|((a, b), gi)| gi * (a - b)).sum();
            if ft.is_finite() && ft <= f + 1e-4 * decrease {
                accepted = Some(ft);
                break;
            }
            t *= 0.5;
            if evals >= max_evals {
                break;
            }
        }

        let Some(ft) = accepted else {
            if h_is_identity {
                // No feasible descent along the projected gradient.
                converged = true;
                break;
            }
            let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            h = identity(if gmax > 0.0 { 0.1 / gmax } else { 1.0 });
            h_is_identity = true;
            continue;
        };

        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        let done = (f - ft).abs() <= tol * (f.abs() + tol);
        x.copy_from_slice(&xt);
        g.copy_from_slice(&gt);
        f = ft;
        if done {
            converged = true;
            break;
        }
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() {
            if h_is_identity {
                h = identity(sy / dot(&yv, &yv));
            }
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], &yv)).collect();
            let yhy = dot(&yv, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            h_is_identity = false;
        }
    }
    Outcome { x, evals, converged }
}
