//! Damped least-squares fitting with analytic Jacobians.
//!
//! Small dense engine shared by the squeezer-model and thermal-calibration
//! fits: Levenberg-style damping on the normal equations, an optional mask of
//! frozen parameters (used for profile-likelihood scans), and a Nelder–Mead
//! simplex fallback that takes over when the Jacobian goes rank deficient.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("{m} residuals cannot constrain {p} free parameters")]
    NotEnoughData { m: usize, p: usize },
    #[error("residuals or Jacobian produced non-finite values at the initial point")]
    NonFinite,
    #[error("no convergence within {0} iterations")]
    DidNotConverge(usize),
    #[error("normal equations singular and simplex fallback failed")]
    Singular,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative cost-change threshold declaring convergence.
    pub rel_cost_tol: f64,
    /// Infinity norm of the gradient below which the fit stops.
    pub grad_tol: f64,
    pub lambda_init: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 500,
            rel_cost_tol: 1e-12,
            grad_tol: 1e-14,
            lambda_init: 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub params: Vec<f64>,
    /// Residual sum of squares at the optimum.
    pub cost: f64,
    /// sqrt(cost / m).
    pub residual_rms: f64,
    pub iterations: usize,
    /// Standard errors from the linearized covariance at the optimum
    /// (zero for frozen parameters); absent when the curvature is singular.
    pub standard_errors: Option<Vec<f64>>,
    /// True when the simplex fallback produced the result.
    pub used_fallback: bool,
}

fn cost_of(r: &DVector<f64>) -> f64 {
    r.dot(r)
}

/// Minimize `|residuals(p)|^2` starting from `p0`.
///
/// `fixed[i]` freezes parameter `i` at its initial value.  The residual and
/// Jacobian closures fill preallocated storage of length `m` (rows).  A step
/// whose trial cost is non-finite is treated as out of domain and rejected,
/// which keeps box-interior problems (positive squeeze factors, efficiencies
/// in range) inside their domain without explicit constraints.
pub fn least_squares<R, J>(
    m: usize,
    p0: &[f64],
    fixed: &[bool],
    opts: &FitOptions,
    mut residuals: R,
    mut jacobian: J,
) -> Result<FitOutcome, FitError>
where
    R: FnMut(&[f64], &mut DVector<f64>),
    J: FnMut(&[f64], &mut DMatrix<f64>),
{
    let p_total = p0.len();
    assert_eq!(fixed.len(), p_total, "fixed mask length must match params");
    let free: Vec<usize> = (0..p_total).filter(|&i| !fixed[i]).collect();
    let nf = free.len();
    if m < nf {
        return Err(FitError::NotEnoughData { m, p: nf });
    }

    let mut params = p0.to_vec();
    let mut r = DVector::zeros(m);
    let mut r_trial = DVector::zeros(m);
    let mut jac = DMatrix::zeros(m, p_total);

    residuals(&params, &mut r);
    let mut cost = cost_of(&r);
    if !cost.is_finite() {
        return Err(FitError::NonFinite);
    }

    let mut lambda = opts.lambda_init;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iterations {
        iterations += 1;
        jacobian(&params, &mut jac);
        if jac.iter().any(|x| !x.is_finite()) {
            return Err(FitError::NonFinite);
        }

        // Reduced normal equations over the free parameters.
        let mut a = DMatrix::zeros(nf, nf);
        let mut g = DVector::zeros(nf);
        for (bi, &i) in free.iter().enumerate() {
            for (bj, &j) in free.iter().enumerate() {
                let mut s = 0.0;
                for row in 0..m {
                    s += jac[(row, i)] * jac[(row, j)];
                }
                a[(bi, bj)] = s;
            }
            let mut s = 0.0;
            for row in 0..m {
                s += jac[(row, i)] * r[row];
            }
            g[bi] = s;
        }

        if g.amax() < opts.grad_tol {
            converged = true;
            break;
        }

        // A parameter with no curvature at all means the model does not
        // respond to it: rank deficient, hand over to the simplex.
        let max_diag = (0..nf).map(|i| a[(i, i)]).fold(0.0f64, f64::max);
        if max_diag <= 0.0 || (0..nf).any(|i| a[(i, i)] < 1e-14 * max_diag) {
            return simplex_fallback(m, &params, &free, opts, &mut residuals, iterations);
        }

        let mut accepted = false;
        for _ in 0..40 {
            let mut damped = a.clone();
            for i in 0..nf {
                damped[(i, i)] += lambda * a[(i, i)];
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 7.0;
                continue;
            };
            let step = chol.solve(&(-&g));
            let mut trial = params.clone();
            for (bi, &i) in free.iter().enumerate() {
                trial[i] += step[bi];
            }
            residuals(&trial, &mut r_trial);
            let trial_cost = cost_of(&r_trial);
            if trial_cost.is_finite() && trial_cost < cost {
                let rel_drop = (cost - trial_cost) / cost.max(f64::MIN_POSITIVE);
                params = trial;
                std::mem::swap(&mut r, &mut r_trial);
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if rel_drop < opts.rel_cost_tol {
                    converged = true;
                }
                break;
            }
            lambda *= 7.0;
            if lambda > 1e15 {
                break;
            }
        }

        if !accepted {
            // Damping saturated: no descent direction left at this scale.
            converged = true;
        }
        if converged {
            break;
        }
    }

    if !converged {
        return Err(FitError::DidNotConverge(opts.max_iterations));
    }

    // Linearized covariance at the optimum for standard errors.
    jacobian(&params, &mut jac);
    let mut a = DMatrix::zeros(nf, nf);
    for (bi, &i) in free.iter().enumerate() {
        for (bj, &j) in free.iter().enumerate() {
            let mut s = 0.0;
            for row in 0..m {
                s += jac[(row, i)] * jac[(row, j)];
            }
            a[(bi, bj)] = s;
        }
    }
    let dof = (m - nf).max(1);
    let s2 = cost / dof as f64;
    let standard_errors = a.try_inverse().map(|inv| {
        let mut se = vec![0.0; p_total];
        for (bi, &i) in free.iter().enumerate() {
            se[i] = (s2 * inv[(bi, bi)]).max(0.0).sqrt();
        }
        se
    });

    Ok(FitOutcome {
        residual_rms: (cost / m as f64).sqrt(),
        params,
        cost,
        iterations,
        standard_errors,
        used_fallback: false,
    })
}

/// Nelder–Mead on the free parameters; engaged on Jacobian rank deficiency.
fn simplex_fallback<R>(
    m: usize,
    start: &[f64],
    free: &[usize],
    opts: &FitOptions,
    residuals: &mut R,
    prior_iterations: usize,
) -> Result<FitOutcome, FitError>
where
    R: FnMut(&[f64], &mut DVector<f64>),
{
    let nf = free.len();
    let mut r = DVector::zeros(m);
    let mut eval = |x: &[f64]| -> f64 {
        let mut full = start.to_vec();
        for (bi, &i) in free.iter().enumerate() {
            full[i] = x[bi];
        }
        residuals(&full, &mut r);
        let c = cost_of(&r);
        if c.is_finite() {
            c
        } else {
            f64::INFINITY
        }
    };

    let x0: Vec<f64> = free.iter().map(|&i| start[i]).collect();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(nf + 1);
    let f0 = eval(&x0);
    simplex.push((x0.clone(), f0));
    for i in 0..nf {
        let mut x = x0.clone();
        let h = if x[i].abs() > 1e-8 { 0.05 * x[i].abs() } else { 0.01 };
        x[i] += h;
        let f = eval(&x);
        simplex.push((x, f));
    }

    let max_iter = opts.max_iterations * 4;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[nf].1;
        if worst - best <= 1e-14 * (1.0 + best.abs()) {
            break;
        }
        let mut centroid = vec![0.0; nf];
        for (x, _) in &simplex[..nf] {
            for i in 0..nf {
                centroid[i] += x[i] / nf as f64;
            }
        }
        let reflect: Vec<f64> = (0..nf)
            .map(|i| centroid[i] + (centroid[i] - simplex[nf].0[i]))
            .collect();
        let fr = eval(&reflect);
        if fr < simplex[0].1 {
            let expand: Vec<f64> = (0..nf)
                .map(|i| centroid[i] + 2.0 * (centroid[i] - simplex[nf].0[i]))
                .collect();
            let fe = eval(&expand);
            simplex[nf] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[nf - 1].1 {
            simplex[nf] = (reflect, fr);
        } else {
            let contract: Vec<f64> = (0..nf)
                .map(|i| centroid[i] + 0.5 * (simplex[nf].0[i] - centroid[i]))
                .collect();
            let fc = eval(&contract);
            if fc < simplex[nf].1 {
                simplex[nf] = (contract, fc);
            } else {
                let best_x = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = (0..nf)
                        .map(|i| best_x[i] + 0.5 * (entry.0[i] - best_x[i]))
                        .collect();
                    let f = eval(&x);
                    *entry = (x, f);
                }
            }
        }
    }
    if iterations >= max_iter {
        return Err(FitError::DidNotConverge(max_iter));
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut params = start.to_vec();
    for (bi, &i) in free.iter().enumerate() {
        params[i] = simplex[0].0[bi];
    }
    Ok(FitOutcome {
        residual_rms: (simplex[0].1 / m as f64).sqrt(),
        params,
        cost: simplex[0].1,
        iterations: prior_iterations + iterations,
        standard_errors: None,
        used_fallback: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // y = a exp(-b x) + c sampled on a grid; recover (a, b, c).
    fn synthetic(n: usize, truth: [f64; 3], noise: impl Fn(usize) -> f64) -> (Vec<f64>, Vec<f64>) {
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| truth[0] * (-truth[1] * x).exp() + truth[2] + noise(i))
            .collect();
        (xs, ys)
    }

    fn run_fit(xs: &[f64], ys: &[f64], p0: [f64; 3], fixed: [bool; 3]) -> FitOutcome {
        least_squares(
            xs.len(),
            &p0,
            &fixed,
            &FitOptions::default(),
            |p, r| {
                for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
                    r[i] = p[0] * (-p[1] * x).exp() + p[2] - y;
                }
            },
            |p, j| {
                for (i, &x) in xs.iter().enumerate() {
                    let e = (-p[1] * x).exp();
                    j[(i, 0)] = e;
                    j[(i, 1)] = -p[0] * x * e;
                    j[(i, 2)] = 1.0;
                }
            },
        )
        .unwrap()
    }

    #[test]
    fn recovers_exponential_parameters() {
        let truth = [2.5, 1.3, 0.4];
        let (xs, ys) = synthetic(100, truth, |_| 0.0);
        let out = run_fit(&xs, &ys, [1.0, 0.5, 0.0], [false; 3]);
        for (p, t) in out.params.iter().zip(truth) {
            assert!((p - t).abs() < 1e-8, "got {p}, want {t}");
        }
        assert!(out.cost < 1e-16);
        assert!(!out.used_fallback);
        let se = out.standard_errors.unwrap();
        assert!(se.iter().all(|&s| s < 1e-7));
    }

    #[test]
    fn frozen_parameters_stay_put() {
        let truth = [2.5, 1.3, 0.4];
        let (xs, ys) = synthetic(100, truth, |_| 0.0);
        let out = run_fit(&xs, &ys, [1.0, 1.3, 0.0], [false, true, false]);
        assert_eq!(out.params[1], 1.3);
        assert!((out.params[0] - truth[0]).abs() < 1e-8);
        assert_eq!(out.standard_errors.unwrap()[1], 0.0);
    }

    #[test]
    fn insensitive_parameter_triggers_simplex() {
        // Third parameter never enters the model: the Jacobian column is
        // zero and the engine must switch to the simplex.
        let xs: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| 3.0 * x + 1.0).collect();
        let out = least_squares(
            xs.len(),
            &[1.0, 0.0, 5.0],
            &[false; 3],
            &FitOptions::default(),
            |p, r| {
                for (i, (&x, &y)) in xs.iter().zip(&ys).enumerate() {
                    r[i] = p[0] * x + p[1] - y;
                }
            },
            |p, j| {
                let _ = p;
                for (i, &x) in xs.iter().enumerate() {
                    j[(i, 0)] = x;
                    j[(i, 1)] = 1.0;
                    j[(i, 2)] = 0.0;
                }
            },
        )
        .unwrap();
        assert!(out.used_fallback);
        assert!((out.params[0] - 3.0).abs() < 1e-4);
        assert!((out.params[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn too_few_rows_is_an_error() {
        let r = least_squares(
            2,
            &[0.0; 3],
            &[false; 3],
            &FitOptions::default(),
            |_, r| r.fill(0.0),
            |_, j| j.fill(0.0),
        );
        assert!(matches!(r, Err(FitError::NotEnoughData { .. })));
    }

    #[test]
    fn noisy_fit_lands_within_standard_errors() {
        let truth = [2.5, 1.3, 0.4];
        // Deterministic pseudo-noise, amplitude 1e-3.
        let (xs, ys) = synthetic(200, truth, |i| 1e-3 * ((i as f64 * 12.9898).sin() * 43758.5453).fract());
        let out = run_fit(&xs, &ys, [1.0, 0.5, 0.0], [false; 3]);
        let se = out.standard_errors.unwrap();
        for ((p, t), s) in out.params.iter().zip(truth).zip(&se) {
            assert!((p - t).abs() < 5.0 * s.max(1e-4), "p={p} t={t} se={s}");
        }
    }
}
