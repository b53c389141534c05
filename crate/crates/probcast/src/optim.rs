//! Small deterministic optimizers used by model fitting: BFGS with a
//! backtracking line search, and golden-section search for scalars.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub(crate) struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    /// Objective after every accepted step, starting at the initial point.
    /// Non-increasing by construction of the line search.
    #[cfg_attr(not(test), allow(dead_code))]
    pub trace: Vec<f64>,
}

/// Minimizes `f` from `x0` with BFGS. The line search only accepts strict
/// decreases, so the returned trace is non-increasing. Convergence is
/// declared when the gradient infinity-norm falls below
/// `grad_tol * max(1, |f|)`.
pub(crate) fn bfgs<F>(mut f: F, x0: Vec<f64>, max_iters: usize, grad_tol: f64) -> OptimResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let dim = x0.len();
    let mut x = DVector::from_vec(x0);
    let (mut fx, g0) = f(x.as_slice());
    let mut grad = DVector::from_vec(g0);
    let mut h_inv = DMatrix::<f64>::identity(dim, dim);
    let mut trace = vec![fx];
    let mut converged = grad_norm_ok(&grad, fx, grad_tol);
    let mut iterations = 0;

    while !converged && iterations < max_iters {
        iterations += 1;
        let mut direction = -(&h_inv * &grad);
        let mut slope = direction.dot(&grad);
        if !(slope < 0.0) || !slope.is_finite() {
            // Curvature information went bad; restart from steepest descent.
            h_inv = DMatrix::identity(dim, dim);
            direction = -grad.clone();
            slope = direction.dot(&grad);
            if !(slope < 0.0) {
                break;
            }
        }

        // Backtracking Armijo search; accepts only strict decrease.
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let candidate = &x + &direction * step;
            let (fc, gc) = f(candidate.as_slice());
            if fc.is_finite() && fc <= fx + 1e-4 * step * slope {
                accepted = Some((candidate, fc, DVector::from_vec(gc)));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            break;
        };

        let s = &x_new - &x;
        let y = &g_new - &grad;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            // Standard BFGS inverse-Hessian update.
            let rho = 1.0 / sy;
            let identity = DMatrix::<f64>::identity(dim, dim);
            let left = &identity - &s * y.transpose() * rho;
            let right = &identity - &y * s.transpose() * rho;
            h_inv = &left * h_inv * &right + &s * s.transpose() * rho;
        }

        x = x_new;
        fx = f_new;
        grad = g_new;
        trace.push(fx);
        converged = grad_norm_ok(&grad, fx, grad_tol);
    }

    OptimResult {
        x: x.as_slice().to_vec(),
        value: fx,
        converged,
        trace,
    }
}

fn grad_norm_ok(grad: &DVector<f64>, fx: f64, tol: f64) -> bool {
    let inf_norm = grad.iter().fold(0.0f64, |m, &g| m.max(g.abs()));
    inf_norm <= tol * fx.abs().max(1.0)
}

/// Golden-section minimization of a unimodal scalar function on [lo, hi].
/// Returns (argmin, min). Deterministic; runs until the bracket is shorter
/// than `tol`.
pub(crate) fn golden_section<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let inv_phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    if fc < fx && fc < fd {
        (c, fc)
    } else if fd < fx {
        (d, fd)
    } else {
        (x, fx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bfgs_minimizes_quadratic() {
        // f(x) = (x0-1)^2 + 10 (x1+2)^2
        let result = bfgs(
            |x| {
                let f = (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2);
                let g = vec![2.0 * (x[0] - 1.0), 20.0 * (x[1] + 2.0)];
                (f, g)
            },
            vec![5.0, 5.0],
            200,
            1e-10,
        );
        assert!(result.converged);
        assert_abs_diff_eq!(result.x[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(result.x[1], -2.0, epsilon = 1e-6);
    }

    #[test]
    fn bfgs_trace_is_non_increasing() {
        let result = bfgs(
            |x| {
                // Rosenbrock, a standard curved valley.
                let (a, b) = (x[0], x[1]);
                let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
                let g = vec![
                    -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                    200.0 * (b - a * a),
                ];
                (f, g)
            },
            vec![-1.2, 1.0],
            500,
            1e-8,
        );
        for w in result.trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(result.converged);
        assert_abs_diff_eq!(result.x[0], 1.0, epsilon = 1e-4);
    }

    #[test]
    fn golden_section_finds_scalar_minimum() {
        let (x, fx) = golden_section(|x| (x - 0.3).powi(2) + 1.0, 0.0, 1.0, 1e-6);
        assert_abs_diff_eq!(x, 0.3, epsilon = 1e-5);
        assert_abs_diff_eq!(fx, 1.0, epsilon = 1e-9);
    }
}
