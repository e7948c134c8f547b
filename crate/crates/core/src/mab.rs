//! Within-task multi-armed bandit learner: follow-the-regularized-leader with
//! a Tsallis regularizer anchored at the task initialization, arm sampling,
//! and γ-offset importance-weighted loss estimates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::regularizers::tsallis_gradient;

/// Accuracy of `Σx = 1` before the final renormalization.
pub const SUM_TOL: f64 = 1e-12;
const MAX_ROOT_ITERS: usize = 200;
const COORD_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MabTaskConfig {
    pub d: usize,
    pub m: usize,
    pub eta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub init: Vec<f64>,
}

impl MabTaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.m == 0 {
            return Err(Error::InvalidParameter("d and m must be positive".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidParameter(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must be nonnegative, got {}", self.gamma)));
        }
        check_interior_simplex(&self.init, self.d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MabTranscript {
    pub actions: Vec<usize>,
    /// Row `i` is the play distribution of round `i`.
    pub probs: Vec<Vec<f64>>,
    pub realized_losses: Vec<f64>,
    pub est_cum_loss: Vec<f64>,
}

impl MabTranscript {
    /// `Σ_i ⟨ℓ_i, x_i⟩`, the loss of the play distributions.
    pub fn expected_loss(&self, losses: &[Vec<f64>]) -> f64 {
        self.probs.iter().zip(losses).map(|(p, l)| crate::linalg::dot(p, l)).sum()
    }
}

fn check_interior_simplex(x: &[f64], d: usize) -> Result<()> {
    check_dim(d, x.len())?;
    check_finite("init", x)?;
    if x.iter().any(|&v| v <= 0.0) {
        return Err(Error::OutsideDomain("init must be strictly inside the simplex".into()));
    }
    let s: f64 = x.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::OutsideDomain(format!("init sums to {s}")));
    }
    Ok(())
}

/// The minimizer over the simplex of `B_φβ(x‖init) + η⟨L, x⟩`.
///
/// At `β = 1` this is the exponentiated-gradient point `init·exp(−ηL)`,
/// normalized. For `β < 1` stationarity gives `x(a) = (q(a) + ν)^(−1/(1−β))`
/// with `q(a) = init(a)^(β−1) + ((1−β)/β)·η·L(a)`, and `ν` is the root of the
/// convex decreasing `Σx − 1` on `[1 − min q, d^(1−β) − min q]`.
pub fn mab_ftrl_step(init: &[f64], cum_est_loss: &[f64], eta: f64, beta: f64) -> Result<Vec<f64>> {
    let d = init.len();
    check_interior_simplex(init, d)?;
    check_dim(d, cum_est_loss.len())?;
    check_finite("cumulative loss", cum_est_loss)?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidParameter(format!("beta must lie in (0, 1], got {beta}")));
    }
    if beta == 1.0 {
        let logits: Vec<f64> = init.iter().zip(cum_est_loss).map(|(p, l)| p.ln() - eta * l).collect();
        let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logits.iter().map(|z| (z - mx).exp()).collect();
        let s: f64 = w.iter().sum();
        return Ok(w.iter().map(|v| (v / s).max(COORD_FLOOR)).collect());
    }

    let kappa = (1.0 - beta) / beta;
    let power = -1.0 / (1.0 - beta);
    let q: Vec<f64> = init
        .iter()
        .zip(cum_est_loss)
        .map(|(p, l)| p.max(COORD_FLOOR).powf(beta - 1.0) + kappa * eta * l)
        .collect();
    let q_min = q.iter().copied().fold(f64::INFINITY, f64::min);
    let coords = |nu: f64| -> Vec<f64> { q.iter().map(|qa| ((qa + nu).ln() * power).exp()).collect() };
    let excess = |nu: f64| -> (f64, f64) {
        let mut f = -1.0;
        let mut df = 0.0;
        for qa in &q {
            let z = qa + nu;
            let x = (z.ln() * power).exp();
            f += x;
            df += power * x / z;
        }
        (f, df)
    };

    let lo = 1.0 - q_min;
    let hi = (d as f64).powf(1.0 - beta) - q_min;
    let (f_lo, _) = excess(lo);
    let (f_hi, _) = excess(hi);
    if !(f_lo >= -SUM_TOL && f_hi <= SUM_TOL) {
        return Err(Error::RootBracket { lo, hi, f_lo, f_hi });
    }

    // Newton from the left end never overshoots a convex decreasing root.
    let mut nu = lo;
    let mut converged = false;
    for _ in 0..MAX_ROOT_ITERS {
        let (f, df) = excess(nu);
        if f.abs() <= SUM_TOL {
            converged = true;
            break;
        }
        let next = nu - f / df;
        if !(next > nu && next <= hi) {
            break;
        }
        nu = next;
    }
    if !converged {
        let (mut a, mut b) = (nu.max(lo), hi);
        for _ in 0..MAX_ROOT_ITERS {
            let mid = 0.5 * (a + b);
            let (f, _) = excess(mid);
            if f > 0.0 {
                a = mid;
            } else {
                b = mid;
            }
            if (b - a) <= 1e-15 * b.abs().max(1.0) || f.abs() <= SUM_TOL {
                break;
            }
        }
        nu = 0.5 * (a + b);
        let (f, _) = excess(nu);
        if f.abs() > 1e-10 {
            return Err(Error::RootBracket { lo: a, hi: b, f_lo: excess(a).0, f_hi: excess(b).0 });
        }
    }
    let x = coords(nu);
    let s: f64 = x.iter().sum();
    Ok(x.iter().map(|v| (v / s).max(COORD_FLOOR)).collect())
}

/// `ℓ̂(a) = ℓ·1{a played}/(x(a) + γ)`.
pub fn mab_loss_estimator(loss_value: f64, played_arm: usize, probs: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if played_arm >= probs.len() {
        return Err(Error::InvalidParameter(format!("arm {played_arm} out of range")));
    }
    let denom = probs[played_arm] + gamma;
    if !(denom > 0.0) {
        return Err(Error::InvalidParameter("zero probability with zero offset".into()));
    }
    let mut est = vec![0.0; probs.len()];
    est[played_arm] = loss_value / denom;
    Ok(est)
}

/// Draws an arm by inverse CDF. Trailing zero-probability arms are never
/// returned.
pub fn sample_arm<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    let mut last = 0;
    for (a, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = a;
        if u < acc {
            return a;
        }
    }
    last
}

/// Plays one task of `m` rounds against a fixed loss matrix (`m` rows of `d`
/// arm losses in `[0, 1]`).
pub fn run_mab_task<R: Rng + ?Sized>(cfg: &MabTaskConfig, losses: &[Vec<f64>], rng: &mut R) -> Result<MabTranscript> {
    cfg.validate()?;
    check_dim(cfg.m, losses.len())?;
    for row in losses {
        check_dim(cfg.d, row.len())?;
        check_finite("losses", row)?;
    }
    let mut cum = vec![0.0; cfg.d];
    let mut t = MabTranscript {
        actions: Vec::with_capacity(cfg.m),
        probs: Vec::with_capacity(cfg.m),
        realized_losses: Vec::with_capacity(cfg.m),
        est_cum_loss: Vec::new(),
    };
    let mut x = cfg.init.clone();
    for row in losses {
        let a = sample_arm(&x, rng);
        let l = row[a];
        cum[a] += l / (x[a] + cfg.gamma);
        t.actions.push(a);
        t.realized_losses.push(l);
        t.probs.push(x);
        x = mab_ftrl_step(&cfg.init, &cum, cfg.eta, cfg.beta)?;
    }
    t.est_cum_loss = cum;
    Ok(t)
}

/// Both sides of the estimated-regret bound against comparator `x_star`:
/// `Σ_i ⟨ℓ̂_i, x_i − x*⟩` and
/// `B_φβ(x*‖init)/η + (η/β)·Σ_i Σ_a x_i(a)^(2−β)·ℓ̂_i(a)²`.
pub fn estimated_regret_sides(cfg: &MabTaskConfig, t: &MabTranscript, x_star: &[f64]) -> Result<(f64, f64)> {
    check_dim(cfg.d, x_star.len())?;
    let reg = crate::regularizers::Regularizer::tsallis(cfg.beta, cfg.d)?;
    let mut lhs = 0.0;
    let mut stability = 0.0;
    for ((&a, x), &l) in t.actions.iter().zip(&t.probs).zip(&t.realized_losses) {
        let est = l / (x[a] + cfg.gamma);
        lhs += est * (x[a] - x_star[a]);
        stability += x[a].powf(2.0 - cfg.beta) * est * est;
    }
    let rhs = reg.bregman(x_star, &cfg.init)? / cfg.eta + cfg.eta / cfg.beta * stability;
    Ok((lhs, rhs))
}

/// `‖∇φ(x) − ∇φ(init) + ηL + μ1‖_∞` minimized over `μ`, i.e. the KKT
/// residual of an interior FTRL point.
pub fn kkt_residual(x: &[f64], init: &[f64], cum_est_loss: &[f64], eta: f64, beta: f64) -> f64 {
    let gx = tsallis_gradient(beta, x);
    let gi = tsallis_gradient(beta, init);
    let r: Vec<f64> = gx
        .iter()
        .zip(&gi)
        .zip(cum_est_loss)
        .map(|((a, b), l)| a - b + eta * l)
        .collect();
    let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
    0.5 * (hi - lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn zero_loss_returns_init() {
        let init = [0.2, 0.3, 0.5];
        for beta in [0.3, 0.5, 1.0] {
            let x = mab_ftrl_step(&init, &[0.0; 3], 0.7, beta).unwrap();
            for (a, b) in x.iter().zip(init) {
                assert_relative_eq!(*a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn exponentiated_gradient_example() {
        let x = mab_ftrl_step(&[0.5, 0.5], &[2f64.ln(), 0.0], 1.0, 1.0).unwrap();
        assert_relative_eq!(x[0], 1.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(x[1], 2.0 / 3.0, epsilon = 1e-14);
    }

    /// Bisection on the equality multiplier in the original parameterization,
    /// run to machine precision.
    fn oracle_step(init: &[f64], l: &[f64], eta: f64, beta: f64) -> Vec<f64> {
        let c = beta / (1.0 - beta);
        let g0: Vec<f64> = init.iter().map(|p| -c * p.powf(beta - 1.0)).collect();
        // x(a) = (c / (c·init^(β−1) + ηL + μ))^(1/(1−β)); need denominators > 0
        let x_of = |mu: f64| -> Vec<f64> {
            g0.iter().zip(l).map(|(g, la)| (c / (-g + eta * la + mu)).powf(1.0 / (1.0 - beta))).collect()
        };
        let floor = g0.iter().zip(l).map(|(g, la)| -g + eta * la).fold(f64::INFINITY, f64::min);
        let (mut a, mut b) = (-floor + 1e-300, 1.0);
        while x_of(b).iter().sum::<f64>() > 1.0 {
            b *= 2.0;
        }
        for _ in 0..2000 {
            let mid = 0.5 * (a + b);
            if x_of(mid).iter().sum::<f64>() > 1.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        x_of(0.5 * (a + b))
    }

    #[test]
    fn tsallis_half_example_matches_oracle() {
        let init = [1.0 / 3.0; 3];
        let l = [1.0, 0.0, 0.0];
        let x = mab_ftrl_step(&init, &l, 0.1, 0.5).unwrap();
        assert!(kkt_residual(&x, &init, &l, 0.1, 0.5) <= 1e-8);
        assert!(x[0] < x[1]);
        assert_relative_eq!(x[1], x[2], epsilon = 1e-15);
        let o = oracle_step(&init, &l, 0.1, 0.5);
        for (a, b) in x.iter().zip(&o) {
            assert_relative_eq!(*a, *b, epsilon = 1e-10);
        }
    }

    #[test]
    fn estimator_examples() {
        assert_eq!(mab_loss_estimator(0.8, 0, &[0.5, 0.5], 0.0).unwrap(), vec![1.6, 0.0]);
        let e = mab_loss_estimator(0.8, 0, &[0.5, 0.5], 0.1).unwrap();
        assert_relative_eq!(e[0], 0.8 / 0.6, epsilon = 1e-15);
        assert_eq!(e[1], 0.0);
        assert!(mab_loss_estimator(0.8, 0, &[0.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn zero_losses_keep_init() {
        let cfg = MabTaskConfig { d: 3, m: 20, eta: 0.5, beta: 0.5, gamma: 0.0, init: vec![0.2, 0.3, 0.5] };
        let mut rng = stream(3, 0, Purpose::Learner);
        let t = run_mab_task(&cfg, &vec![vec![0.0; 3]; 20], &mut rng).unwrap();
        assert_eq!(t.est_cum_loss, vec![0.0; 3]);
        for p in &t.probs {
            for (a, b) in p.iter().zip(&cfg.init) {
                assert_relative_eq!(*a, *b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        let cfg = MabTaskConfig { d: 2, m: 1, eta: 0.5, beta: 1.0, gamma: 0.0, init: vec![0.5, 0.5] };
        let losses = vec![vec![0.3, 0.9]];
        let a = run_mab_task(&cfg, &losses, &mut stream(9, 4, Purpose::Learner)).unwrap();
        let b = run_mab_task(&cfg, &losses, &mut stream(9, 4, Purpose::Learner)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fixed_losses_respect_estimated_regret_bound() {
        let d = 2;
        let m = 2000;
        let eta = (2f64.ln() / (d as f64 * m as f64)).sqrt();
        let cfg = MabTaskConfig { d, m, eta, beta: 1.0, gamma: 0.0, init: vec![0.5, 0.5] };
        let losses = vec![vec![0.9, 0.1]; m];
        let t = run_mab_task(&cfg, &losses, &mut stream(11, 0, Purpose::Learner)).unwrap();
        for x_star in [vec![0.0, 1.0], vec![1.0, 0.0], vec![0.3, 0.7]] {
            let (lhs, rhs) = estimated_regret_sides(&cfg, &t, &x_star).unwrap();
            assert!(lhs <= rhs + 1e-6 * m as f64, "lhs {lhs} rhs {rhs}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn ftrl_step_is_kkt_point(
            raw in proptest::collection::vec(0.05f64..1.0, 2..8),
            scale in 0.0f64..50.0,
            beta in 0.1f64..1.0,
            eta in 0.01f64..2.0,
            seed in any::<u64>(),
        ) {
            let s: f64 = raw.iter().sum();
            let init: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let mut rng = stream(seed, 0, Purpose::Learner);
            let l: Vec<f64> = (0..init.len()).map(|_| scale * rng.gen::<f64>()).collect();
            let x = mab_ftrl_step(&init, &l, eta, beta).unwrap();
            prop_assert!((x.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            prop_assert!(x.iter().all(|&v| v > 0.0));
            let scale_grad = tsallis_gradient(beta, &x).iter().fold(1.0f64, |m, g| m.max(g.abs()));
            prop_assert!(kkt_residual(&x, &init, &l, eta, beta) <= 1e-8 * scale_grad);
        }

        #[test]
        fn estimator_expectation_by_enumeration(
            raw in proptest::collection::vec(0.01f64..1.0, 2..10),
            gamma in 0.0f64..0.5,
            seed in any::<u64>(),
        ) {
            let s: f64 = raw.iter().sum();
            let probs: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let mut rng = stream(seed, 1, Purpose::Environment);
            let loss: Vec<f64> = probs.iter().map(|_| rng.gen::<f64>()).collect();
            let mut mean = vec![0.0; probs.len()];
            for (arm, p) in probs.iter().enumerate() {
                let e = mab_loss_estimator(loss[arm], arm, &probs, gamma).unwrap();
                for (m, v) in mean.iter_mut().zip(e) {
                    *m += p * v;
                }
            }
            for a in 0..probs.len() {
                let expect = loss[a] * probs[a] / (probs[a] + gamma);
                prop_assert!((mean[a] - expect).abs() <= 1e-12);
                prop_assert!(mean[a] <= loss[a] + 1e-15);
            }
        }
    }
}
