//! Regularizer families: negative Tsallis entropy on the simplex and
//! logarithmic barriers on the Euclidean ball and on polytopes.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::geometry::LinearConstraint;
use crate::linalg::dot;

/// Tolerance used when validating that an input lies on the simplex.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Negative Tsallis entropy `φ_β(p) = (1 − Σ p(a)^β)/(1 − β)`, and negative
/// Shannon entropy `Σ p log p` at `β = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsallisRegularizer {
    beta: f64,
    dim: usize,
}

impl TsallisRegularizer {
    pub fn new(beta: f64, dim: usize) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidParameter(format!("Tsallis beta must lie in (0, 1], got {beta}")));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        Ok(Self { beta, dim })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_shannon(&self) -> bool {
        self.beta == 1.0
    }
}

/// `φ(x) = −log(1 − ‖x‖²)` on the open unit ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallBarrier {
    dim: usize,
}

impl BallBarrier {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// `φ(x) = −Σ log(b − ⟨a, x⟩)` over a shared constraint list.
#[derive(Debug, Clone, PartialEq)]
pub struct PolytopeBarrier {
    constraints: Arc<Vec<LinearConstraint>>,
    dim: usize,
}

impl PolytopeBarrier {
    pub fn new(constraints: Arc<Vec<LinearConstraint>>) -> Result<Self> {
        let dim = constraints
            .first()
            .map(|c| c.a.len())
            .ok_or_else(|| Error::InvalidDomain("polytope has no constraints".into()))?;
        for c in constraints.iter() {
            check_dim(dim, c.a.len())?;
        }
        Ok(Self { constraints, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    /// Slacks `b − ⟨a, x⟩`, one per constraint.
    pub fn slacks(&self, x: &[f64]) -> Vec<f64> {
        self.constraints.iter().map(|c| c.slack(x)).collect()
    }

    fn interior_slacks(&self, x: &[f64]) -> Result<Vec<f64>> {
        let s = self.slacks(x);
        if let Some((j, v)) = s.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::OutsideDomain(format!("constraint {j} has slack {v:e}")));
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    Tsallis(TsallisRegularizer),
    Ball(BallBarrier),
    Polytope(PolytopeBarrier),
}

fn check_simplex(p: &[f64]) -> Result<()> {
    check_finite("simplex point", p)?;
    if p.iter().any(|&v| v < -SIMPLEX_TOL) {
        return Err(Error::OutsideDomain("simplex point has a negative coordinate".into()));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::OutsideDomain(format!("simplex point sums to {s}")));
    }
    Ok(())
}

fn ball_gap(x: &[f64]) -> Result<f64> {
    let gap = 1.0 - dot(x, x);
    if gap > 0.0 {
        Ok(gap)
    } else {
        Err(Error::OutsideDomain(format!("point has norm² {} ≥ 1", 1.0 - gap)))
    }
}

/// Tsallis entropy `H_β(p) = (Σ p(a)^β − 1)/(1 − β)` for `β ∈ [0, 1)`, and
/// Shannon entropy `−Σ p log p` at `β = 1`.
pub fn tsallis_entropy(beta: f64, p: &[f64]) -> Result<f64> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!("beta must lie in [0, 1], got {beta}")));
    }
    check_simplex(p)?;
    Ok(tsallis_entropy_unchecked(beta, p))
}

fn tsallis_entropy_unchecked(beta: f64, p: &[f64]) -> f64 {
    if beta == 1.0 {
        -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
    } else {
        let s: f64 = p.iter().map(|&v| v.max(0.0).powf(beta)).sum();
        (s - 1.0) / (1.0 - beta)
    }
}

impl Regularizer {
    pub fn tsallis(beta: f64, dim: usize) -> Result<Self> {
        Ok(Self::Tsallis(TsallisRegularizer::new(beta, dim)?))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Tsallis(r) => r.dim,
            Self::Ball(r) => r.dim,
            Self::Polytope(r) => r.dim,
        }
    }

    /// Exact regularizer value. Barriers on or outside the boundary are an
    /// error; see [`Regularizer::value_or_inf`] for the sentinel mode.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        match self {
            Self::Tsallis(r) => {
                check_simplex(x)?;
                Ok(-tsallis_entropy_unchecked(r.beta, x))
            }
            Self::Ball(_) => {
                check_finite("point", x)?;
                Ok(-ball_gap(x)?.ln())
            }
            Self::Polytope(r) => {
                check_finite("point", x)?;
                Ok(-r.interior_slacks(x)?.iter().map(|s| s.ln()).sum::<f64>())
            }
        }
    }

    /// Value with `+∞` outside the domain, for line searches.
    pub fn value_or_inf(&self, x: &[f64]) -> f64 {
        self.value(x).unwrap_or(f64::INFINITY)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        match self {
            Self::Tsallis(r) => {
                check_simplex(x)?;
                if let Some(a) = x.iter().position(|&v| v <= 0.0) {
                    return Err(Error::OutsideDomain(format!(
                        "Tsallis gradient unbounded at zero coordinate {a}"
                    )));
                }
                Ok(tsallis_gradient(r.beta, x))
            }
            Self::Ball(_) => {
                check_finite("point", x)?;
                let gap = ball_gap(x)?;
                Ok(x.iter().map(|v| 2.0 * v / gap).collect())
            }
            Self::Polytope(r) => {
                check_finite("point", x)?;
                let s = r.interior_slacks(x)?;
                let mut g = vec![0.0; r.dim];
                for (c, sj) in r.constraints.iter().zip(&s) {
                    for (gi, ai) in g.iter_mut().zip(&c.a) {
                        *gi += ai / sj;
                    }
                }
                Ok(g)
            }
        }
    }

    /// Dense Hessian, symmetric positive definite on the interior.
    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), x.len())?;
        let d = self.dim();
        match self {
            Self::Tsallis(r) => {
                check_simplex(x)?;
                if x.iter().any(|&v| v <= 0.0) {
                    return Err(Error::OutsideDomain("Tsallis Hessian unbounded at zero coordinate".into()));
                }
                let diag = x.iter().map(|&v| {
                    if r.is_shannon() {
                        1.0 / v
                    } else {
                        r.beta * v.powf(r.beta - 2.0)
                    }
                });
                Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(d, diag)))
            }
            Self::Ball(_) => {
                check_finite("point", x)?;
                let gap = ball_gap(x)?;
                let mut h = DMatrix::<f64>::identity(d, d) * (2.0 / gap);
                for i in 0..d {
                    for j in 0..d {
                        h[(i, j)] += 4.0 * x[i] * x[j] / (gap * gap);
                    }
                }
                Ok(h)
            }
            Self::Polytope(r) => {
                check_finite("point", x)?;
                let s = r.interior_slacks(x)?;
                let mut h = DMatrix::<f64>::zeros(d, d);
                for (c, sj) in r.constraints.iter().zip(&s) {
                    let w = 1.0 / (sj * sj);
                    for i in 0..d {
                        if c.a[i] == 0.0 {
                            continue;
                        }
                        for j in 0..d {
                            h[(i, j)] += w * c.a[i] * c.a[j];
                        }
                    }
                }
                Ok(h)
            }
        }
    }

    /// `B_φ(x‖y) = φ(x) − φ(y) − ⟨∇φ(y), x − y⟩`, floored at zero against
    /// rounding. `y` must be strictly interior.
    pub fn bregman(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let gy = self.gradient(y)?;
        let fx = self.value(x)?;
        let fy = self.value(y)?;
        let lin: f64 = gy.iter().zip(x.iter().zip(y)).map(|(g, (a, b))| g * (a - b)).sum();
        Ok((fx - fy - lin).max(0.0))
    }

    /// The minimizer of `φ` over the closure of its domain, for families where
    /// it is known in closed form.
    pub fn closed_form_minimizer(&self) -> Option<Vec<f64>> {
        match self {
            Self::Tsallis(r) => Some(vec![1.0 / r.dim as f64; r.dim]),
            Self::Ball(r) => Some(vec![0.0; r.dim]),
            Self::Polytope(_) => None,
        }
    }
}

pub(crate) fn tsallis_gradient(beta: f64, x: &[f64]) -> Vec<f64> {
    if beta == 1.0 {
        x.iter().map(|v| 1.0 + v.ln()).collect()
    } else {
        x.iter().map(|v| -beta * v.powf(beta - 1.0) / (1.0 - beta)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn box_constraints() -> Arc<Vec<LinearConstraint>> {
        Arc::new(vec![
            LinearConstraint::new(vec![1.0, 0.0], 1.0),
            LinearConstraint::new(vec![-1.0, 0.0], 0.0),
            LinearConstraint::new(vec![0.0, 1.0], 1.0),
            LinearConstraint::new(vec![0.0, -1.0], 0.0),
        ])
    }

    #[test]
    fn tsallis_values_at_uniform_and_vertex() {
        let r = Regularizer::tsallis(0.5, 4).unwrap();
        assert_relative_eq!(r.value(&[0.25; 4]).unwrap(), -2.0, epsilon = 1e-14);
        for beta in [0.2, 0.5, 1.0] {
            let r = Regularizer::tsallis(beta, 3).unwrap();
            assert_eq!(r.value(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        }
    }

    #[test]
    fn tsallis_entropy_examples() {
        assert_relative_eq!(tsallis_entropy(1.0, &[0.2; 5]).unwrap(), 5f64.ln(), epsilon = 1e-14);
        assert_relative_eq!(tsallis_entropy(0.5, &[0.25; 4]).unwrap(), 2.0, epsilon = 1e-14);
        let h = tsallis_entropy(0.5, &[0.5, 0.5, 0.0, 0.0]).unwrap();
        assert_relative_eq!(h, 0.828427, epsilon = 1e-6);
        assert!(tsallis_entropy(0.5, &[0.5, 0.6]).is_err());
    }

    #[test]
    fn tsallis_gradient_at_uniform() {
        let r = Regularizer::tsallis(0.5, 4).unwrap();
        let g = r.gradient(&[0.25; 4]).unwrap();
        for v in g {
            assert_relative_eq!(v, -2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn tsallis_gradient_rejects_zero_coordinate() {
        let r = Regularizer::tsallis(0.5, 3).unwrap();
        assert!(matches!(r.gradient(&[0.5, 0.5, 0.0]), Err(Error::OutsideDomain(_))));
    }

    #[test]
    fn ball_barrier_at_origin() {
        let r = Regularizer::Ball(BallBarrier::new(3));
        assert_eq!(r.value(&[0.0; 3]).unwrap(), 0.0);
        assert_eq!(r.gradient(&[0.0; 3]).unwrap(), vec![0.0; 3]);
        let h = r.hessian(&[0.0; 3]).unwrap();
        assert_eq!(h, DMatrix::identity(3, 3) * 2.0);
    }

    #[test]
    fn barrier_outside_is_error_or_infinite() {
        let r = Regularizer::Ball(BallBarrier::new(2));
        assert!(matches!(r.value(&[0.6, 0.8]), Err(Error::OutsideDomain(_))));
        assert_eq!(r.value_or_inf(&[1.0, 1.0]), f64::INFINITY);
        let p = Regularizer::Polytope(PolytopeBarrier::new(box_constraints()).unwrap());
        assert!(p.value(&[1.5, 0.5]).is_err());
        assert_eq!(p.value_or_inf(&[0.0, 0.5]), f64::INFINITY);
    }

    #[test]
    fn polytope_gradient_zero_at_box_center() {
        let p = Regularizer::Polytope(PolytopeBarrier::new(box_constraints()).unwrap());
        assert_eq!(p.gradient(&[0.5, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn bregman_examples() {
        let kl = Regularizer::tsallis(1.0, 2).unwrap();
        let direct = 0.9 * (0.9f64 / 0.5).ln() + 0.1 * (0.1f64 / 0.5).ln();
        assert_relative_eq!(kl.bregman(&[0.9, 0.1], &[0.5, 0.5]).unwrap(), direct, epsilon = 1e-14);
        assert_relative_eq!(direct, 0.368064, epsilon = 1e-6);

        let ball = Regularizer::Ball(BallBarrier::new(2));
        let expect = 0.75f64.ln() + 2.0 / 3.0;
        assert_relative_eq!(ball.bregman(&[0.0, 0.0], &[0.5, 0.0]).unwrap(), expect, epsilon = 1e-14);
        assert_relative_eq!(expect, 0.378985, epsilon = 1e-6);

        for r in [kl, ball] {
            let y = if r.dim() == 2 && matches!(r, Regularizer::Tsallis(_)) { vec![0.3, 0.7] } else { vec![0.1, -0.2] };
            assert_eq!(r.bregman(&y, &y).unwrap(), 0.0);
        }
    }

    #[test]
    fn bregman_requires_interior_base_point() {
        let r = Regularizer::tsallis(0.5, 2).unwrap();
        assert!(r.bregman(&[0.5, 0.5], &[1.0, 0.0]).is_err());
    }
}
