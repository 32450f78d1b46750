//! Safeguarded Newton ascent shared by the rate and dose-response fits.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

pub(crate) trait Objective {
    fn value(&self, x: &DVector<f64>) -> Result<f64>;
    fn derivs(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>, DMatrix<f64>)>;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NewtonSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Largest move per coordinate in one iteration.
    pub max_step: f64,
    /// Coordinates are kept inside `[-bound, bound]`.
    pub bound: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonOutcome {
    pub x: DVector<f64>,
    pub value: f64,
    pub hess: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Objective after every accepted step, starting point included.
    pub trace: Vec<f64>,
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

pub(crate) fn is_stationary(value: f64, grad: &DVector<f64>, tol: f64) -> bool {
    grad.amax() <= tol * (1.0 + value.abs())
}

/// Relative floor on the curvature magnitudes used by the modified step.
const EIGEN_FLOOR: f64 = 1e-10;

/// Newton direction when `-hess` is positive definite. Otherwise the
/// Hessian's eigenvalues are replaced by `-max(|e|, floor)`, which keeps the
/// Newton scaling along well-curved directions and gives an ascent
/// direction; plain gradient ascent is the last resort.
fn direction(grad: &DVector<f64>, hess: &DMatrix<f64>, max_step: f64) -> DVector<f64> {
    if let Some(ch) = (-hess).cholesky() {
        let d = ch.solve(grad);
        if d.iter().all(|v| v.is_finite()) {
            return d;
        }
    }
    if hess.iter().all(|v| v.is_finite()) {
        let eig = hess.clone().symmetric_eigen();
        let floor = EIGEN_FLOOR * eig.eigenvalues.amax();
        if floor > 0.0 {
            let q = &eig.eigenvectors;
            let mut coef = q.transpose() * grad;
            for (c, e) in coef.iter_mut().zip(eig.eigenvalues.iter()) {
                *c /= e.abs().max(floor);
            }
            let d = q * coef;
            if d.iter().all(|v| v.is_finite()) {
                return d;
            }
        }
    }
    grad * (max_step / grad.amax())
}

pub(crate) fn maximize(
    obj: &dyn Objective,
    x0: DVector<f64>,
    s: &NewtonSettings,
) -> Result<NewtonOutcome> {
    let clamp = |x: DVector<f64>| x.map(|v| v.clamp(-s.bound, s.bound));
    let mut x = clamp(x0);
    let (mut f, mut g, mut h) = obj.derivs(&x)?;
    let mut trace = vec![f];
    let mut iterations = 0;
    let mut converged = f.is_finite() && is_stationary(f, &g, s.tol);

    while !converged && iterations < s.max_iter && f.is_finite() {
        iterations += 1;
        let mut d = direction(&g, &h, s.max_step);
        let big = d.amax();
        if big > s.max_step {
            d *= s.max_step / big;
        }
        let slope = g.dot(&d);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial = clamp(&x + &d * step);
            if let Ok(ft) = obj.value(&trial) {
                if ft.is_finite() && ft >= f + ARMIJO * step * slope {
                    accepted = Some(trial);
                    break;
                }
            }
            step *= 0.5;
        }
        let Some(next) = accepted else {
            break;
        };
        let (fn_, gn, hn) = obj.derivs(&next)?;
        if fn_ < f {
            // the value-only and full evaluations agree; guard anyway so the
            // trace stays monotone
            break;
        }
        x = next;
        f = fn_;
        g = gn;
        h = hn;
        trace.push(f);
        converged = is_stationary(f, &g, s.tol);
    }
    Ok(NewtonOutcome {
        x,
        value: f,
        hess: h,
        converged,
        iterations,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quad;

    impl Objective for Quad {
        fn value(&self, x: &DVector<f64>) -> Result<f64> {
            Ok(-(x[0] - 1.0).powi(2) - 10.0 * (x[1] + 2.0).powi(2) - (x[0] - 1.0).powi(4))
        }
        fn derivs(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
            let a = x[0] - 1.0;
            let g = DVector::from_vec(vec![-2.0 * a - 4.0 * a.powi(3), -20.0 * (x[1] + 2.0)]);
            let h = DMatrix::from_row_slice(2, 2, &[-2.0 - 12.0 * a * a, 0.0, 0.0, -20.0]);
            Ok((self.value(x)?, g, h))
        }
    }

    #[test]
    fn finds_maximum_with_monotone_trace() {
        let s = NewtonSettings {
            tol: 1e-12,
            max_iter: 100,
            max_step: 2.0,
            bound: 100.0,
        };
        let out = maximize(&Quad, DVector::from_vec(vec![8.0, 5.0]), &s).unwrap();
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] + 2.0).abs() < 1e-10);
        assert!(out.trace.windows(2).all(|w| w[1] >= w[0]));
    }
}
