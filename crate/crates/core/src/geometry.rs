//! Action-set geometry: the probability simplex, the Euclidean unit ball and
//! polytopes (in particular DAG flow polytopes), together with their Minkowski
//! gauges, analytic centers and the shrunk-set linear minimizer `OPT_ε`.
//!
//! The shrunk set `K_ε` is defined per domain type. On the simplex it is the
//! coordinate floor `{x ∈ Δ : min_a x(a) ≥ ε/d}`; on the ball and on polytopes
//! it is the gauge sublevel set `{x : π_c(x) ≤ 1/(1+ε)}` around the analytic
//! center `c`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::linalg::{dot, norm};
use crate::newton::{self, Objective};
use crate::regularizers::{BallBarrier, PolytopeBarrier, Regularizer};
use crate::shortestpath::FlowLift;

/// Half-space `⟨a, x⟩ ≤ b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub a: Vec<f64>,
    pub b: f64,
}

impl LinearConstraint {
    pub fn new(a: Vec<f64>, b: f64) -> Self {
        Self { a, b }
    }

    pub fn slack(&self, x: &[f64]) -> f64 {
        self.b - dot(&self.a, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplexDomain {
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallDomain {
    pub dim: usize,
}

/// How the linear minimizer over a polytope's vertices is computed.
#[derive(Debug, Clone)]
pub enum VertexOracle {
    /// No vertex minimizer; `constrained_optimum` reports an error.
    Unavailable,
    /// An explicit vertex list, scanned in order (lowest index wins ties).
    Enumerated(Vec<Vec<f64>>),
    /// A DAG flow polytope in reduced coordinates; the minimizer is a
    /// shortest path.
    Flow(Arc<FlowLift>),
}

#[derive(Debug, Clone)]
pub struct PolytopeDomain {
    constraints: Arc<Vec<LinearConstraint>>,
    center: Vec<f64>,
    oracle: VertexOracle,
}

#[derive(Debug, Deserialize)]
struct PolytopeDocument {
    constraints: Vec<LinearConstraint>,
    #[serde(default)]
    interior_point: Option<Vec<f64>>,
}

struct BarrierObjective<'a>(&'a Regularizer);

impl Objective for BarrierObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.0.value_or_inf(x)
    }
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.0.gradient(x)
    }
    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.0.hessian(x)
    }
}

/// Minimizer of a barrier regularizer by damped Newton from a strictly
/// feasible start.
pub fn analytic_center(reg: &Regularizer, start: &[f64]) -> Result<Vec<f64>> {
    match reg {
        Regularizer::Tsallis(_) => Ok(reg.closed_form_minimizer().expect("tsallis minimizer")),
        _ => newton::minimize(&BarrierObjective(reg), start),
    }
}

impl PolytopeDomain {
    /// Builds the domain and caches its analytic center, starting Newton from
    /// `interior_start` (which must satisfy every constraint strictly).
    pub fn new(constraints: Vec<LinearConstraint>, interior_start: &[f64], oracle: VertexOracle) -> Result<Self> {
        let constraints = Arc::new(constraints);
        let barrier = Regularizer::Polytope(PolytopeBarrier::new(constraints.clone())?);
        check_dim(barrier.dim(), interior_start.len())?;
        check_finite("interior start", interior_start)?;
        if !barrier.value_or_inf(interior_start).is_finite() {
            return Err(Error::InvalidDomain("start point is not strictly interior".into()));
        }
        let center = analytic_center(&barrier, interior_start).map_err(|e| match e {
            Error::NewtonNoConvergence { .. } => {
                Error::InvalidDomain(format!("analytic center not found (unbounded polytope?): {e}"))
            }
            other => other,
        })?;
        let domain = Self { constraints, center, oracle };
        if let Some(j) = domain.constraints.iter().position(|c| !(c.slack(&domain.center) > 0.0)) {
            return Err(Error::InvalidDomain(format!("constraint {j} has zero slack at the center")));
        }
        Ok(domain)
    }

    /// Parses `{"constraints": [{"a": [...], "b": ...}], "interior_point": [...]}`.
    /// Without `interior_point` the origin is tried as the Newton start.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PolytopeDocument = serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
        let dim = doc
            .constraints
            .first()
            .map(|c| c.a.len())
            .ok_or_else(|| Error::InvalidDomain("polytope has no constraints".into()))?;
        let start = doc.interior_point.unwrap_or_else(|| vec![0.0; dim]);
        Self::new(doc.constraints, &start, VertexOracle::Unavailable)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn shared_constraints(&self) -> Arc<Vec<LinearConstraint>> {
        self.constraints.clone()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn oracle(&self) -> &VertexOracle {
        &self.oracle
    }

    pub fn barrier(&self) -> PolytopeBarrier {
        PolytopeBarrier::new(self.constraints.clone()).expect("validated at construction")
    }

    /// `max_j (⟨a_j,x⟩ − ⟨a_j,c⟩)/(b_j − ⟨a_j,c⟩)`, floored at zero.
    pub fn gauge(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        check_finite("point", x)?;
        let mut g: f64 = 0.0;
        for (j, c) in self.constraints.iter().enumerate() {
            let denom = c.slack(&self.center);
            if !(denom > 0.0) {
                return Err(Error::InvalidDomain(format!("constraint {j} has zero slack at the center")));
            }
            g = g.max((dot(&c.a, x) - dot(&c.a, &self.center)) / denom);
        }
        Ok(g)
    }

    fn vertex_minimizer(&self, loss: &[f64]) -> Result<Vec<f64>> {
        match &self.oracle {
            VertexOracle::Unavailable => Err(Error::InvalidDomain(
                "no vertex minimizer for this polytope (only DAG flow polytopes and enumerated vertices)".into(),
            )),
            VertexOracle::Enumerated(vs) => {
                let mut best: Option<(f64, &Vec<f64>)> = None;
                for v in vs {
                    let val = dot(loss, v);
                    if best.is_none_or(|(b, _)| val < b) {
                        best = Some((val, v));
                    }
                }
                best.map(|(_, v)| v.clone()).ok_or_else(|| Error::InvalidDomain("empty vertex list".into()))
            }
            VertexOracle::Flow(lift) => lift.vertex_minimizer(loss),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Domain {
    Simplex(SimplexDomain),
    Ball(BallDomain),
    Polytope(PolytopeDomain),
}

impl Domain {
    pub fn simplex(dim: usize) -> Self {
        Self::Simplex(SimplexDomain { dim })
    }

    pub fn ball(dim: usize) -> Self {
        Self::Ball(BallDomain { dim })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Simplex(s) => s.dim,
            Self::Ball(b) => b.dim,
            Self::Polytope(p) => p.dim(),
        }
    }

    /// The regularizer family attached to this domain. `beta` is only used
    /// on the simplex.
    pub fn regularizer(&self, beta: f64) -> Result<Regularizer> {
        match self {
            Self::Simplex(s) => Regularizer::tsallis(beta, s.dim),
            Self::Ball(b) => Ok(Regularizer::Ball(BallBarrier::new(b.dim))),
            Self::Polytope(p) => Ok(Regularizer::Polytope(p.barrier())),
        }
    }

    /// `argmin φ`: the uniform distribution, the origin, or the cached
    /// analytic center.
    pub fn center(&self) -> Vec<f64> {
        match self {
            Self::Simplex(s) => vec![1.0 / s.dim as f64; s.dim],
            Self::Ball(b) => vec![0.0; b.dim],
            Self::Polytope(p) => p.center.clone(),
        }
    }

    /// Minkowski gauge around the center. Not defined for the simplex, whose
    /// shrunk sets use coordinate floors instead.
    pub fn gauge(&self, x: &[f64]) -> Result<f64> {
        match self {
            Self::Simplex(_) => Err(Error::InvalidParameter("the simplex uses coordinate floors, not a gauge".into())),
            Self::Ball(b) => {
                check_dim(b.dim, x.len())?;
                check_finite("point", x)?;
                Ok(norm(x))
            }
            Self::Polytope(p) => p.gauge(x),
        }
    }

    fn check_eps(&self, eps: f64) -> Result<()> {
        let ok = match self {
            Self::Simplex(_) => (0.0..=1.0).contains(&eps),
            _ => eps >= 0.0 && eps.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("boundary offset {eps} out of range")))
        }
    }

    /// Membership in `K_ε` with a small absolute tolerance.
    pub fn in_shrunk_set(&self, x: &[f64], eps: f64, tol: f64) -> Result<bool> {
        self.check_eps(eps)?;
        match self {
            Self::Simplex(s) => {
                check_dim(s.dim, x.len())?;
                let floor = eps / s.dim as f64;
                let sum: f64 = x.iter().sum();
                Ok((sum - 1.0).abs() <= tol.max(1e-12) && x.iter().all(|&v| v >= floor - tol))
            }
            _ => Ok(self.gauge(x)? <= 1.0 / (1.0 + eps) + tol),
        }
    }

    /// `OPT_ε(loss) = argmin_{x ∈ K_ε} ⟨loss, x⟩`; the zero vector maps to the
    /// center.
    pub fn constrained_optimum(&self, loss: &[f64], eps: f64) -> Result<Vec<f64>> {
        check_dim(self.dim(), loss.len())?;
        if loss.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("loss vector contains NaN".into()));
        }
        check_finite("loss vector", loss)?;
        self.check_eps(eps)?;
        if self.dim() == 0 {
            return Err(Error::InvalidDomain("empty domain".into()));
        }
        if loss.iter().all(|&v| v == 0.0) {
            return Ok(self.center());
        }
        match self {
            Self::Simplex(s) => {
                let d = s.dim;
                let mut best = 0;
                for (a, &v) in loss.iter().enumerate() {
                    if v < loss[best] {
                        best = a;
                    }
                }
                let mut x = vec![eps / d as f64; d];
                x[best] += 1.0 - eps;
                Ok(x)
            }
            Self::Ball(_) => {
                let n = norm(loss);
                Ok(loss.iter().map(|v| -v / ((1.0 + eps) * n)).collect())
            }
            Self::Polytope(p) => {
                let vertex = p.vertex_minimizer(loss)?;
                let s = 1.0 / (1.0 + eps);
                Ok(p.center.iter().zip(&vertex).map(|(c, v)| c + (v - c) * s).collect())
            }
        }
    }
}
