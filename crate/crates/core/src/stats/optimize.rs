//! Quasi-Newton maximization and finite-difference derivatives.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, sup_norm, Cholesky, Matrix};

/// A smooth function to be maximized.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Gradient of [`Objective::value`]. The default uses central differences.
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        let g = finite_diff_gradient(|p| self.value(p), x, None);
        grad.copy_from_slice(&g);
    }

    /// Value and gradient together; override when they share work.
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.gradient(x, grad);
        self.value(x)
    }
}

/// Adapts a pair of closures to [`Objective`].
pub struct FnObjective<F, G> {
    dim: usize,
    f: F,
    g: G,
}

impl<F, G> FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
{
    pub fn new(dim: usize, f: F, g: G) -> Self {
        FnObjective { dim, f, g }
    }
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        (self.g)(x, grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaximizeOptions {
    /// Converged once the gradient sup-norm drops to this.
    pub gradient_tolerance: f64,
    /// Relative change in value treated as no progress.
    pub relative_tolerance: f64,
    pub max_iterations: usize,
    /// Compute the observed information at the maximum.
    pub information: bool,
}

impl Default for MaximizeOptions {
    fn default() -> Self {
        MaximizeOptions {
            gradient_tolerance: 1e-8,
            relative_tolerance: 1e-12,
            max_iterations: 500,
            information: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerReport {
    pub argmax: Vec<f64>,
    pub max_value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    /// Negative Hessian at `argmax`, from differences of the gradient.
    pub observed_information: Option<Matrix>,
}

fn default_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

/// Central-difference gradient of `f`.
pub fn finite_diff_gradient(f: impl Fn(&[f64]) -> f64, point: &[f64], step: Option<f64>) -> Vec<f64> {
    let mut x = point.to_vec();
    (0..point.len())
        .map(|i| {
            let h = step.unwrap_or_else(|| default_step(point[i]));
            x[i] = point[i] + h;
            let up = f(&x);
            x[i] = point[i] - h;
            let down = f(&x);
            x[i] = point[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Jacobian of a vector function; row `i` holds
/// `∂g_i/∂x`.
pub fn finite_diff_jacobian(g: impl Fn(&[f64]) -> Vec<f64>, point: &[f64], step: Option<f64>) -> Matrix {
    let n = point.len();
    let mut x = point.to_vec();
    let mut cols = Vec::with_capacity(n);
    let mut m = 0;
    for j in 0..n {
        let h = step.unwrap_or_else(|| default_step(point[j]));
        x[j] = point[j] + h;
        let up = g(&x);
        x[j] = point[j] - h;
        let down = g(&x);
        x[j] = point[j];
        m = up.len();
        cols.push(
            up.iter()
                .zip(&down)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect::<Vec<_>>(),
        );
    }
    Matrix::from_fn(m, n, |i, j| cols[j][i])
}

/// Observed information `−∇²f` from central differences of the analytic
/// gradient, symmetrized.
pub fn observed_information(obj: &impl Objective, x: &[f64]) -> Matrix {
    let n = obj.dim();
    let mut h = finite_diff_jacobian(
        |p| {
            let mut g = vec![0.0; n];
            obj.gradient(p, &mut g);
            g
        },
        x,
        None,
    );
    h.symmetrize();
    h.scale(-1.0)
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Maximizes `obj` from `init` with BFGS and a backtracking Armijo line
/// search, finishing with Newton steps on a differenced Hessian if BFGS
/// stalls short of the gradient tolerance.
pub fn maximize(obj: &impl Objective, init: &[f64], opts: &MaximizeOptions) -> Result<OptimizerReport> {
    let n = obj.dim();
    if init.len() != n {
        return Err(Error::InvalidInput(format!(
            "initial point has {} entries, objective has {}",
            init.len(),
            n
        )));
    }
    let mut x = init.to_vec();
    let mut g = vec![0.0; n];
    let mut f = obj.value_and_gradient(&x, &mut g);
    if !f.is_finite() || !all_finite(&g) {
        return Err(Error::NonFinite(format!("objective at the initial point is {f}")));
    }
    let mut hinv = Matrix::identity(n);
    let mut fresh = true;
    let mut iterations = 0;
    let mut flat_steps = 0;
    let mut xn = vec![0.0; n];
    let mut gn = vec![0.0; n];

    while iterations < opts.max_iterations && sup_norm(&g) > opts.gradient_tolerance {
        iterations += 1;
        let mut d = hinv.matvec(&g);
        let mut slope = dot(&g, &d);
        if !(slope > 0.0) {
            hinv = Matrix::identity(n);
            fresh = true;
            d = g.clone();
            slope = dot(&g, &g);
        }
        let mut t = if fresh { (1.0 / sup_norm(&d)).min(1.0) } else { 1.0 };
        let mut accepted = false;
        let mut fnew = f;
        for _ in 0..60 {
            for i in 0..n {
                xn[i] = x[i] + t * d[i];
            }
            fnew = obj.value_and_gradient(&xn, &mut gn);
            if fnew.is_finite() && all_finite(&gn) {
                if fnew >= f + 1e-4 * t * slope {
                    accepted = true;
                    break;
                }
                t *= 0.5;
            } else {
                t *= 0.1;
            }
        }
        if !accepted {
            if fresh {
                break;
            }
            hinv = Matrix::identity(n);
            fresh = true;
            continue;
        }
        let s: Vec<f64> = (0..n).map(|i| xn[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g[i] - gn[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * (dot(&s, &s) * dot(&y, &y)).sqrt() && sy > 0.0 {
            if fresh {
                hinv = Matrix::identity(n).scale(sy / dot(&y, &y));
                fresh = false;
            }
            bfgs_update(&mut hinv, &s, &y, sy);
        }
        if (fnew - f).abs() <= opts.relative_tolerance * f.abs().max(1.0) {
            flat_steps += 1;
        } else {
            flat_steps = 0;
        }
        core::mem::swap(&mut x, &mut xn);
        core::mem::swap(&mut g, &mut gn);
        f = fnew;
        if flat_steps >= 3 {
            break;
        }
    }

    if sup_norm(&g) > opts.gradient_tolerance {
        newton_polish(obj, &mut x, &mut f, &mut g);
    }
    if !f.is_finite() {
        return Err(Error::NonFinite(format!("objective became {f} during maximization")));
    }
    let gradient_norm = sup_norm(&g);
    let observed_information = opts.information.then(|| observed_information(obj, &x));
    Ok(OptimizerReport {
        argmax: x,
        max_value: f,
        converged: gradient_norm <= opts.gradient_tolerance,
        iterations,
        gradient_norm,
        observed_information,
    })
}

fn bfgs_update(h: &mut Matrix, s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy = h.matvec(y);
    let yhy = dot(y, &hy);
    let c = (1.0 + rho * yhy) * rho;
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] += c * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

fn newton_polish(obj: &impl Objective, x: &mut Vec<f64>, f: &mut f64, g: &mut Vec<f64>) {
    let n = x.len();
    let mut xn = vec![0.0; n];
    let mut gn = vec![0.0; n];
    for _ in 0..10 {
        let info = observed_information(obj, x);
        let Ok(chol) = Cholesky::new(&info) else {
            return;
        };
        let step = chol.solve(g);
        let gnorm = sup_norm(g);
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            for i in 0..n {
                xn[i] = x[i] + t * step[i];
            }
            let fnew = obj.value_and_gradient(&xn, &mut gn);
            if fnew.is_finite()
                && all_finite(&gn)
                && (fnew > *f || (sup_norm(&gn) < gnorm && fnew >= *f - 1e-12 * f.abs().max(1.0)))
            {
                x.copy_from_slice(&xn);
                g.copy_from_slice(&gn);
                *f = fnew;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved || sup_norm(g) < 1e-12 {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic<'a>(a: &'a Matrix, b: &'a [f64]) -> impl Objective + 'a {
        FnObjective::new(
            b.len(),
            move |x: &[f64]| dot(b, x) - 0.5 * dot(x, &a.matvec(x)),
            move |x: &[f64], g: &mut [f64]| {
                let ax = a.matvec(x);
                for i in 0..g.len() {
                    g[i] = b[i] - ax[i];
                }
            },
        )
    }

    #[test]
    fn recovers_quadratic_maximum_and_curvature() {
        // f = bᵀx − ½ xᵀAx, maximum at A⁻¹b; information equals A.
        let a = Matrix::from_rows(&[vec![2.0, 0.5, 0.0], vec![0.5, 1.0, 0.2], vec![0.0, 0.2, 3.0]]);
        let b = [1.0, -2.0, 0.5];
        let obj = quadratic(&a, &b);
        let rep = maximize(&obj, &[0.0; 3], &MaximizeOptions::default()).unwrap();
        assert!(rep.converged);
        let want = Cholesky::new(&a).unwrap().solve(&b);
        for i in 0..3 {
            assert!((rep.argmax[i] - want[i]).abs() < 1e-7);
        }
        let info = rep.observed_information.unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((info[(i, j)] - a[(i, j)]).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn rosenbrock_converges() {
        let obj = FnObjective::new(
            2,
            |x: &[f64]| -((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)),
            |x: &[f64], g: &mut [f64]| {
                g[0] = 2.0 * (1.0 - x[0]) + 400.0 * x[0] * (x[1] - x[0] * x[0]);
                g[1] = -200.0 * (x[1] - x[0] * x[0]);
            },
        );
        let rep = maximize(&obj, &[-1.2, 1.0], &MaximizeOptions::default()).unwrap();
        assert!(rep.converged, "{rep:?}");
        assert!((rep.argmax[0] - 1.0).abs() < 1e-6 && (rep.argmax[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn backtracks_out_of_infeasible_region() {
        // log-barrier: undefined for x ≤ 0.
        let obj = FnObjective::new(
            1,
            |x: &[f64]| if x[0] > 0.0 { x[0].ln() - x[0] } else { f64::NAN },
            |x: &[f64], g: &mut [f64]| g[0] = 1.0 / x[0] - 1.0,
        );
        let rep = maximize(&obj, &[0.01], &MaximizeOptions::default()).unwrap();
        assert!((rep.argmax[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_nonfinite_start() {
        let obj = FnObjective::new(1, |_: &[f64]| f64::NAN, |_: &[f64], g: &mut [f64]| g[0] = 0.0);
        assert!(matches!(
            maximize(&obj, &[0.0], &MaximizeOptions::default()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn finite_difference_gradient_of_cubic() {
        let g = finite_diff_gradient(|x| x[0].powi(3) + x[0] * x[1], &[2.0, 3.0], None);
        assert!((g[0] - 15.0).abs() < 1e-8 && (g[1] - 2.0).abs() < 1e-8);
    }
}
