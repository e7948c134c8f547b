//! Within-task bandit linear optimization: follow-the-regularized-leader with
//! a self-concordant barrier, exploration at the endpoints of the Dikin
//! ellipsoid, and the matching unbiased loss estimator.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::linalg::{dot, jacobi_eigen, norm_inf};
use crate::newton::{self, Objective};
use crate::regularizers::Regularizer;

/// Slack on `|observed| ≤ 1`.
pub const OBSERVATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct BloTaskConfig {
    pub barrier: Regularizer,
    pub eta: f64,
    pub m: usize,
    pub init: Vec<f64>,
}

impl BloTaskConfig {
    pub fn validate(&self) -> Result<()> {
        if matches!(self.barrier, Regularizer::Tsallis(_)) {
            return Err(Error::InvalidParameter("bandit linear optimization needs a barrier regularizer".into()));
        }
        if self.m == 0 {
            return Err(Error::InvalidParameter("m must be positive".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {}", self.eta)));
        }
        check_dim(self.barrier.dim(), self.init.len())?;
        if !self.barrier.value_or_inf(&self.init).is_finite() {
            return Err(Error::OutsideDomain("init must be strictly interior".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BloTranscript {
    pub centers: Vec<Vec<f64>>,
    pub plays: Vec<Vec<f64>>,
    pub realized_losses: Vec<f64>,
    /// Per-round estimates `ℓ̂_i`.
    pub estimates: Vec<Vec<f64>>,
    pub est_cum_loss: Vec<f64>,
}

struct FtrlObjective<'a> {
    barrier: &'a Regularizer,
    /// `∇φ(init) − ηL`; the objective is `φ(x) − ⟨c, x⟩` up to a constant.
    c: Vec<f64>,
}

impl Objective for FtrlObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.barrier.value_or_inf(x) - dot(&self.c, x)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let g = self.barrier.gradient(x)?;
        Ok(g.iter().zip(&self.c).map(|(a, b)| a - b).collect())
    }

    fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.barrier.hessian(x)
    }
}

/// The minimizer of `B_φ(x‖init) + η⟨L, x⟩` by damped Newton from `init`.
pub fn blo_ftrl_step(init: &[f64], cum_est_loss: &[f64], eta: f64, barrier: &Regularizer) -> Result<Vec<f64>> {
    blo_ftrl_step_from(init, init, cum_est_loss, eta, barrier)
}

/// [`blo_ftrl_step`] with Newton started at `start` (any interior point,
/// typically the previous round's iterate).
pub fn blo_ftrl_step_from(
    start: &[f64],
    init: &[f64],
    cum_est_loss: &[f64],
    eta: f64,
    barrier: &Regularizer,
) -> Result<Vec<f64>> {
    check_dim(barrier.dim(), init.len())?;
    check_dim(barrier.dim(), cum_est_loss.len())?;
    check_finite("cumulative loss", cum_est_loss)?;
    let g0 = barrier.gradient(init)?;
    let c: Vec<f64> = g0.iter().zip(cum_est_loss).map(|(g, l)| g - eta * l).collect();
    let tol = newton::GRAD_TOL * norm_inf(&c).max(1.0);
    newton::minimize_with_tol(&FtrlObjective { barrier, c }, start, tol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DikinSample {
    pub y: Vec<f64>,
    pub index: usize,
    pub sign: f64,
    pub lambda: f64,
    pub v: Vec<f64>,
}

/// Eigendecomposes `∇²φ(x)` and returns `x + s·λ_i^(−1/2)·v_i` for a uniform
/// direction `i` and sign `s`.
pub fn dikin_sample<R: Rng + ?Sized>(x: &[f64], barrier: &Regularizer, rng: &mut R) -> Result<DikinSample> {
    let eig = jacobi_eigen(&barrier.hessian(x)?)?;
    let d = x.len();
    let index = rng.gen_range(0..d);
    let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    dikin_endpoint(x, &eig.values, &eig.vectors, index, sign)
}

/// The endpoint for a fixed `(i, s)`.
pub fn dikin_endpoint(x: &[f64], values: &[f64], vectors: &[Vec<f64>], index: usize, sign: f64) -> Result<DikinSample> {
    let lambda = values[index];
    if !(lambda > 0.0) {
        return Err(Error::Eigen(format!("Hessian eigenvalue {lambda} is not positive")));
    }
    let v = vectors[index].clone();
    let r = sign / lambda.sqrt();
    let y = x.iter().zip(&v).map(|(xi, vi)| xi + r * vi).collect();
    Ok(DikinSample { y, index, sign, lambda, v })
}

/// `ℓ̂ = d·observed·s·√λ_i·v_i`.
pub fn blo_loss_estimator(observed: f64, sign: f64, lambda: f64, v: &[f64], d: usize) -> Vec<f64> {
    let k = d as f64 * observed * sign * lambda.sqrt();
    v.iter().map(|vi| k * vi).collect()
}

/// Plays one task. `observe(i, y, rng)` returns the loss of play `y` in round
/// `i`; it must lie in `[−1, 1]`.
pub fn run_blo_task<R, O>(cfg: &BloTaskConfig, mut observe: O, rng: &mut R) -> Result<BloTranscript>
where
    R: Rng + ?Sized,
    O: FnMut(usize, &[f64], &mut R) -> Result<f64>,
{
    cfg.validate()?;
    let d = cfg.init.len();
    let mut t = BloTranscript {
        centers: Vec::with_capacity(cfg.m),
        plays: Vec::with_capacity(cfg.m),
        realized_losses: Vec::with_capacity(cfg.m),
        estimates: Vec::with_capacity(cfg.m),
        est_cum_loss: vec![0.0; d],
    };
    let mut x = cfg.init.clone();
    for i in 0..cfg.m {
        let sample = dikin_sample(&x, &cfg.barrier, rng)?;
        let observed = observe(i, &sample.y, rng)?;
        if !(observed.abs() <= 1.0 + OBSERVATION_TOL) {
            return Err(Error::InvalidParameter(format!("observed loss {observed} outside [-1, 1]")));
        }
        let est = blo_loss_estimator(observed, sample.sign, sample.lambda, &sample.v, d);
        for (c, e) in t.est_cum_loss.iter_mut().zip(&est) {
            *c += e;
        }
        let next = blo_ftrl_step_from(&x, &cfg.init, &t.est_cum_loss, cfg.eta, &cfg.barrier)?;
        t.centers.push(x);
        t.plays.push(sample.y);
        t.realized_losses.push(observed);
        t.estimates.push(est);
        x = next;
    }
    Ok(t)
}

/// [`run_blo_task`] observing `⟨ℓ_i, y⟩` from an `m × d` loss matrix.
pub fn run_blo_task_linear<R: Rng + ?Sized>(cfg: &BloTaskConfig, losses: &[Vec<f64>], rng: &mut R) -> Result<BloTranscript> {
    check_dim(cfg.m, losses.len())?;
    for row in losses {
        check_dim(cfg.init.len(), row.len())?;
        check_finite("losses", row)?;
    }
    run_blo_task(cfg, |i, y, _| Ok(dot(&losses[i], y)), rng)
}

/// Both sides of the estimated-regret bound against `x_star`:
/// `Σ_i ⟨ℓ̂_i, x_i − x*⟩` and `B_φ(x*‖init)/η + 32·d²·η·m`.
pub fn estimated_regret_sides(cfg: &BloTaskConfig, t: &BloTranscript, x_star: &[f64]) -> Result<(f64, f64)> {
    let d = cfg.init.len();
    check_dim(d, x_star.len())?;
    let lhs: f64 = t
        .estimates
        .iter()
        .zip(&t.centers)
        .map(|(e, x)| e.iter().zip(x.iter().zip(x_star)).map(|(ei, (xi, si))| ei * (xi - si)).sum::<f64>())
        .sum();
    let rhs = cfg.barrier.bregman(x_star, &cfg.init)? / cfg.eta + 32.0 * (d * d) as f64 * cfg.eta * cfg.m as f64;
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Domain, LinearConstraint, PolytopeDomain, VertexOracle};
    use crate::regularizers::BallBarrier;
    use crate::rng::{stream, Purpose};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn ball(d: usize) -> Regularizer {
        Regularizer::Ball(BallBarrier::new(d))
    }

    fn unit_box() -> Regularizer {
        let cs = vec![
            LinearConstraint::new(vec![1.0, 0.0], 1.0),
            LinearConstraint::new(vec![-1.0, 0.0], 0.0),
            LinearConstraint::new(vec![0.0, 1.0], 1.0),
            LinearConstraint::new(vec![0.0, -1.0], 0.0),
        ];
        Domain::Polytope(PolytopeDomain::new(cs, &[0.5, 0.5], VertexOracle::Unavailable).unwrap())
            .regularizer(1.0)
            .unwrap()
    }

    /// Ball minimizer in closed form: `x ∥ c` with `2u/(1−u²) = ‖c‖`.
    fn ball_oracle(init: &[f64], l: &[f64], eta: f64) -> Vec<f64> {
        let g = ball(init.len()).gradient(init).unwrap();
        let c: Vec<f64> = g.iter().zip(l).map(|(a, b)| a - eta * b).collect();
        let n = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n == 0.0 {
            return vec![0.0; init.len()];
        }
        let u = ((1.0 + n * n).sqrt() - 1.0) / n;
        c.iter().map(|v| v / n * u).collect()
    }

    #[test]
    fn zero_loss_returns_init() {
        let x = blo_ftrl_step(&[0.3, -0.2], &[0.0, 0.0], 0.5, &ball(2)).unwrap();
        assert_relative_eq!(x[0], 0.3, epsilon = 1e-12);
        assert_relative_eq!(x[1], -0.2, epsilon = 1e-12);
    }

    #[test]
    fn ball_step_example() {
        let x = blo_ftrl_step(&[0.0, 0.0], &[-2.0, 0.0], 1.0, &ball(2)).unwrap();
        assert_relative_eq!(x[0], (5f64.sqrt() - 1.0) / 2.0, epsilon = 1e-10);
        assert_relative_eq!(x[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn box_step_first_order() {
        let b = unit_box();
        let l = [1e-4, -2e-4];
        let x = blo_ftrl_step(&[0.5, 0.5], &l, 1.0, &b).unwrap();
        let h = b.hessian(&[0.5, 0.5]).unwrap();
        let lin = crate::linalg::spd_solve(&h, &l).unwrap();
        for k in 0..2 {
            assert!((x[k] - 0.5 + lin[k]).abs() <= 10.0 * 4e-8);
        }
    }

    #[test]
    fn ball_dikin_at_origin() {
        let mut rng = stream(1, 0, Purpose::Learner);
        for _ in 0..20 {
            let s = dikin_sample(&[0.0, 0.0], &ball(2), &mut rng).unwrap();
            assert_relative_eq!(s.lambda, 2.0, epsilon = 1e-14);
            let n = crate::linalg::norm(&s.y);
            assert_relative_eq!(n, 1.0 / 2f64.sqrt(), epsilon = 1e-14);
        }
    }

    #[test]
    fn estimator_examples() {
        let v = [1.0, 0.0];
        let y = [1.0 / 2f64.sqrt(), 0.0];
        let e = blo_loss_estimator(dot(&[1.0, 0.0], &y), 1.0, 2.0, &v, 2);
        assert_relative_eq!(e[0], 2.0, epsilon = 1e-14);
        assert_eq!(e[1], 0.0);
        let y2 = [0.0, 1.0 / 2f64.sqrt()];
        let e2 = blo_loss_estimator(dot(&[1.0, 0.0], &y2), 1.0, 2.0, &[0.0, 1.0], 2);
        assert_eq!(e2, vec![0.0, 0.0]);
    }

    #[test]
    fn zero_losses_keep_center_and_runs_are_reproducible() {
        let cfg = BloTaskConfig { barrier: ball(3), eta: 0.1, m: 30, init: vec![0.1, 0.2, -0.1] };
        let t = run_blo_task_linear(&cfg, &vec![vec![0.0; 3]; 30], &mut stream(2, 0, Purpose::Learner)).unwrap();
        for c in &t.centers {
            for (a, b) in c.iter().zip(&cfg.init) {
                assert_relative_eq!(*a, *b, epsilon = 1e-12);
            }
        }
        let losses: Vec<Vec<f64>> = (0..30).map(|i| vec![0.3, -0.2 + 0.01 * i as f64, 0.1]).collect();
        let a = run_blo_task_linear(&cfg, &losses, &mut stream(5, 1, Purpose::Learner)).unwrap();
        let b = run_blo_task_linear(&cfg, &losses, &mut stream(5, 1, Purpose::Learner)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fixed_loss_respects_estimated_regret_bound() {
        let d = 2;
        let m = 2000;
        let g = 4.0 * d as f64 * 2f64.sqrt();
        let eta = 1.0 / (g * (m as f64).sqrt());
        let cfg = BloTaskConfig { barrier: ball(d), eta, m, init: vec![0.0; d] };
        let losses = vec![vec![0.5, 0.0]; m];
        let t = run_blo_task_linear(&cfg, &losses, &mut stream(7, 0, Purpose::Learner)).unwrap();
        let eps = 0.1;
        for x_star in [vec![-1.0 / (1.0 + eps), 0.0], vec![0.0, 0.5], vec![0.3, -0.4]] {
            let (lhs, rhs) = estimated_regret_sides(&cfg, &t, &x_star).unwrap();
            assert!(lhs <= rhs + 1e-6 * m as f64, "lhs {lhs} rhs {rhs}");
        }
    }

    #[test]
    fn out_of_range_observation_is_an_error() {
        let cfg = BloTaskConfig { barrier: ball(2), eta: 0.1, m: 3, init: vec![0.0; 2] };
        let r = run_blo_task(&cfg, |_, _, _| Ok(1.5), &mut stream(1, 1, Purpose::Learner));
        assert!(r.is_err());
    }

    fn random_interior(rng: &mut impl Rng, d: usize) -> Vec<f64> {
        let r: f64 = 0.999 * rng.gen::<f64>();
        let v: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() - 0.5).collect();
        let n = crate::linalg::norm(&v);
        v.iter().map(|x| x / n * r).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn ball_newton_matches_closed_form(seed in any::<u64>(), d in 1usize..6, eta in 0.01f64..3.0) {
            let mut rng = stream(seed, 0, Purpose::Environment);
            let init = random_interior(&mut rng, d);
            let l: Vec<f64> = (0..d).map(|_| 20.0 * (rng.gen::<f64>() - 0.5)).collect();
            let x = blo_ftrl_step(&init, &l, eta, &ball(d)).unwrap();
            let o = ball_oracle(&init, &l, eta);
            for (a, b) in x.iter().zip(&o) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }

        #[test]
        fn estimator_is_unbiased_and_plays_stay_inside(seed in any::<u64>(), d in 1usize..6) {
            let mut rng = stream(seed, 0, Purpose::Environment);
            let x = random_interior(&mut rng, d);
            let l: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() - 0.5).collect();
            let b = ball(d);
            let eig = jacobi_eigen(&b.hessian(&x).unwrap()).unwrap();
            let mut mean = vec![0.0; d];
            for i in 0..d {
                for s in [1.0, -1.0] {
                    let smp = dikin_endpoint(&x, &eig.values, &eig.vectors, i, s).unwrap();
                    prop_assert!(crate::linalg::norm(&smp.y) < 1.0);
                    let e = blo_loss_estimator(dot(&l, &smp.y), s, smp.lambda, &smp.v, d);
                    for (m, v) in mean.iter_mut().zip(e) {
                        *m += v / (2 * d) as f64;
                    }
                }
            }
            for (m, v) in mean.iter().zip(&l) {
                prop_assert!((m - v).abs() <= 1e-10);
            }
        }
    }
}
