//! Damped Newton minimization for self-concordant objectives.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, spd_solve};

pub const GRAD_TOL: f64 = 1e-9;
pub const MAX_ITERS: usize = 200;
/// Newton decrement required alongside the gradient test. It is affine
/// invariant, so it stays near 1 while iterates escape along a recession
/// direction of an unbounded domain.
pub const DECREMENT_TOL: f64 = 1e-6;

/// An objective that is `+∞` outside its open domain.
pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>>;
}

/// Minimizes `f` from the strictly feasible `x0`.
///
/// Each step solves `H dx = −g` and halves the step until the trial point is
/// finite-valued (strictly interior) and does not increase `f`. Stops once
/// `‖g‖₂ ≤ 1e-9` and the Newton decrement is below `1e-6`; errors after 200
/// iterations with the last gradient residual.
pub fn minimize<F: Objective>(f: &F, x0: &[f64]) -> Result<Vec<f64>> {
    minimize_with_tol(f, x0, GRAD_TOL)
}

/// [`minimize`] with a caller-chosen gradient tolerance, for objectives whose
/// linear term is large enough that `1e-9` is below rounding.
pub fn minimize_with_tol<F: Objective>(f: &F, x0: &[f64], grad_tol: f64) -> Result<Vec<f64>> {
    let mut x = x0.to_vec();
    let mut fx = f.value(&x);
    if !fx.is_finite() {
        return Err(Error::OutsideDomain("newton start point is not strictly feasible".into()));
    }
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < MAX_ITERS {
        iterations += 1;
        let g = f.gradient(&x)?;
        residual = norm(&g);
        let h = f.hessian(&x)?;
        let step = spd_solve(&h, &g)?;
        let decrement = dot(&g, &step).max(0.0).sqrt();
        if residual <= grad_tol && decrement <= DECREMENT_TOL {
            return Ok(x);
        }
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-30 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(xi, si)| xi - t * si).collect();
            let ft = f.value(&trial);
            if ft.is_finite() && ft <= fx + 1e-13 * fx.abs().max(1.0) {
                x = trial;
                fx = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(Error::NewtonNoConvergence { iterations, residual })
}
