//! Quasi-Newton minimization with finite-difference derivatives.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop after two consecutive steps that lower f by less than this.
    pub f_tolerance: f64,
    /// Stop when the gradient's Euclidean norm falls below this.
    pub g_tolerance: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            f_tolerance: 1e-8,
            g_tolerance: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub f_start: f64,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

/// Central-difference gradient; falls back to a one-sided difference when
/// one side is not finite.
pub fn numerical_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], fx: f64) -> Vec<f64> {
    let mut xs = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 6e-6 * x[i].abs().max(1.0);
            xs[i] = x[i] + h;
            let fp = f(&xs);
            xs[i] = x[i] - h;
            let fm = f(&xs);
            xs[i] = x[i];
            match (fp.is_finite(), fm.is_finite()) {
                (true, true) => (fp - fm) / (2.0 * h),
                (true, false) => (fp - fx) / h,
                (false, true) => (fx - fm) / h,
                (false, false) => 0.0,
            }
        })
        .collect()
}

/// Central-difference Hessian with per-coordinate steps.
pub fn numerical_hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], steps: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let f0 = f(x);
    let mut hess = DMatrix::zeros(n, n);
    let mut xs = x.to_vec();
    let eval = |xs: &mut Vec<f64>, di: (usize, f64), dj: Option<(usize, f64)>| {
        xs[di.0] += di.1;
        if let Some((j, d)) = dj {
            xs[j] += d;
        }
        let v = f(xs);
        xs[di.0] = x[di.0];
        if let Some((j, _)) = dj {
            xs[j] = x[j];
        }
        v
    };
    for i in 0..n {
        let hi = steps[i];
        let fp = eval(&mut xs, (i, hi), None);
        let fm = eval(&mut xs, (i, -hi), None);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = steps[j];
            let fpp = eval(&mut xs, (i, hi), Some((j, hj)));
            let fpm = eval(&mut xs, (i, hi), Some((j, -hj)));
            let fmp = eval(&mut xs, (i, -hi), Some((j, hj)));
            let fmm = eval(&mut xs, (i, -hi), Some((j, -hj)));
            let v = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Minimize `f`, which returns +∞ (or NaN) outside its domain.
pub fn minimize<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], opts: &BfgsOptions) -> BfgsResult {
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x.as_slice());
    let f_start = fx;
    if !fx.is_finite() {
        return BfgsResult {
            x: x0.to_vec(),
            f: fx,
            f_start,
            iterations: 0,
            converged: false,
            grad_norm: f64::NAN,
        };
    }
    let mut g = DVector::from_vec(numerical_gradient(&f, x.as_slice(), fx));
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut first_step = true;
    let mut converged = false;
    let mut iterations = 0;
    let mut reset_once = false;
    let mut stalled = 0;

    while iterations < opts.max_iterations {
        let gn = g.norm();
        if gn < opts.g_tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let mut dir = -(&h_inv * &g);
        let mut slope = dir.dot(&g);
        if slope >= 0.0 {
            h_inv = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = -gn * gn;
            first_step = true;
        }
        let mut alpha = if first_step { (1.0 / dir.norm()).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + alpha * &dir;
            let ft = f(trial.as_slice());
            if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if !reset_once && !first_step {
                reset_once = true;
                h_inv = DMatrix::identity(n, n);
                first_step = true;
                continue;
            }
            // no descent left at finite-difference resolution
            converged = gn < 1e-2 * fx.abs().max(1.0).sqrt();
            break;
        };
        reset_once = false;
        let g_new = DVector::from_vec(numerical_gradient(&f, x_new.as_slice(), f_new));
        let s = &x_new - &x;
        let yv = &g_new - &g;
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            if first_step {
                h_inv = DMatrix::identity(n, n) * (sy / yv.dot(&yv));
            }
            let rho = 1.0 / sy;
            let hy = &h_inv * &yv;
            let yhy = yv.dot(&hy);
            h_inv += (rho * rho * yhy + rho) * (&s * s.transpose())
                - rho * (&hy * s.transpose() + &s * hy.transpose());
            first_step = false;
        }
        let improvement = fx - f_new;
        x = x_new;
        fx = f_new;
        g = g_new;
        stalled = if improvement < opts.f_tolerance { stalled + 1 } else { 0 };
        if stalled >= 2 {
            converged = true;
            break;
        }
    }
    BfgsResult {
        x: x.iter().copied().collect(),
        f: fx,
        f_start,
        iterations,
        converged,
        grad_norm: norm(g.as_slice()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = minimize(f, &[-1.2, 1.0], &BfgsOptions { f_tolerance: 1e-14, ..Default::default() });
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
        assert!(r.f <= r.f_start);
    }

    #[test]
    fn quadratic_hessian() {
        let f = |x: &[f64]| 3.0 * x[0] * x[0] + 2.0 * x[0] * x[1] + 5.0 * x[1] * x[1];
        let h = numerical_hessian(&f, &[0.3, -0.2], &[1e-4, 1e-4]);
        assert!((h[(0, 0)] - 6.0).abs() < 1e-5);
        assert!((h[(0, 1)] - 2.0).abs() < 1e-5);
        assert!((h[(1, 1)] - 10.0).abs() < 1e-5);
    }

    #[test]
    fn respects_infeasible_region() {
        // minimum of x - ln x at 1; domain x > 0
        let f = |x: &[f64]| if x[0] <= 0.0 { f64::INFINITY } else { x[0] - x[0].ln() };
        let r = minimize(f, &[5.0], &BfgsOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-3, "{:?}", r.x);
    }

    #[test]
    fn infeasible_start_reports_failure() {
        let r = minimize(|_: &[f64]| f64::INFINITY, &[0.0], &BfgsOptions::default());
        assert!(!r.converged);
        assert_eq!(r.iterations, 0);
    }
}
