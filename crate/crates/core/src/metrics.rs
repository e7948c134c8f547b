//! Regret accounting and task-similarity measures: entropy of the mean
//! estimated optimum, barrier divergence, the entropy-based regret
//! prediction, and per-constraint AM/GM slack ratios.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::LinearConstraint;
use crate::linalg::{dot, mean_of};
use crate::regularizers::{tsallis_entropy, Regularizer};

/// Hyperparameters `(η, β, ε)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub eta: f64,
    pub beta: f64,
    pub eps: f64,
}

/// One task's outcome.
///
/// `learner_loss` is `Σ_i ⟨ℓ_i, x_i⟩` over the round play distributions (the
/// conditional expectation of the realized loss); `realized_loss` is what the
/// sampled actions actually incurred. Both regrets use the true best fixed
/// action in hindsight over the whole domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task: usize,
    pub theta_index: usize,
    pub theta: Theta,
    pub learner_loss: f64,
    pub realized_loss: f64,
    pub comparator_loss: f64,
    pub regret: f64,
    pub realized_regret: f64,
    pub est_cum_loss: Vec<f64>,
    /// `OPT_ε(ℓ̂_t)` for each distinct grid `ε`, ascending.
    pub optima: Vec<Vec<f64>>,
    /// `OPT_0(ℓ̂_t)`, the estimated best vertex.
    pub vertex_optimum: Vec<f64>,
    /// The true best vertex in hindsight.
    pub true_optimum: Vec<f64>,
    /// Per-θ expert losses fed to the weight update; empty for baselines.
    pub expert_losses: Vec<f64>,
}

/// Mean of per-task regrets.
pub fn task_averaged_regret(records: &[TaskRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::InvalidParameter("no task records".into()));
    }
    Ok(records.iter().map(|r| r.regret).sum::<f64>() / records.len() as f64)
}

/// Running task-averaged regret after each task.
pub fn cumulative_average(regrets: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    regrets
        .iter()
        .enumerate()
        .map(|(i, r)| {
            acc += r;
            acc / (i + 1) as f64
        })
        .collect()
}

/// `V̂ = √((1/T)(Σ_t φ(x_t) − T·φ(x̄)))`, the root mean divergence from the
/// points to their mean (which minimizes it).
pub fn barrier_divergence(optima: &[Vec<f64>], reg: &Regularizer) -> Result<f64> {
    if optima.is_empty() {
        return Err(Error::InvalidParameter("no optima".into()));
    }
    let mean = mean_of(optima);
    // the mean must be interior for the minimizer to be meaningful
    reg.gradient(&mean)?;
    let mut total = 0.0;
    for x in optima {
        reg.gradient(x)?;
        total += reg.value(x)?;
    }
    let t = optima.len() as f64;
    Ok(((total - t * reg.value(&mean)?) / t).max(0.0).sqrt())
}

/// `(1/T) Σ_t B_φ(x_t‖y)`.
pub fn mean_divergence_to(optima: &[Vec<f64>], reg: &Regularizer, y: &[f64]) -> Result<f64> {
    let mut s = 0.0;
    for x in optima {
        s += reg.bregman(x, y)?;
    }
    Ok(s / optima.len() as f64)
}

/// Minimizes `2·√(Ĥ_β·d^β·m/β)` over the given `(β, Ĥ_β)` pairs; returns the
/// minimizing `β` and the bound.
pub fn predicted_mab_bound(entropies: &[(f64, f64)], d: usize, m: usize) -> Result<(f64, f64)> {
    entropies
        .iter()
        .map(|&(beta, h)| (beta, 2.0 * (h.max(0.0) * (d as f64).powf(beta) * m as f64 / beta).sqrt()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::InvalidParameter("empty beta grid".into()))
}

/// Per constraint, `log(AM/GM)` of the slacks `b − ⟨a, x_t⟩` across points.
/// Computed in log space; zero iff all slacks of that constraint are equal.
pub fn am_gm_log_ratios(points: &[Vec<f64>], constraints: &[LinearConstraint]) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::InvalidParameter("no points".into()));
    }
    let n = points.len() as f64;
    constraints
        .iter()
        .map(|c| {
            let mut logs = Vec::with_capacity(points.len());
            for x in points {
                check_dim(c.a.len(), x.len())?;
                let s = c.b - dot(&c.a, x);
                if !(s > 0.0) {
                    return Err(Error::OutsideDomain(format!("slack {s} is not positive")));
                }
                logs.push(s.ln());
            }
            let mx = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_am = mx + (logs.iter().map(|l| (l - mx).exp()).sum::<f64>() / n).ln();
            let log_gm = logs.iter().sum::<f64>() / n;
            Ok((log_am - log_gm).max(0.0))
        })
        .collect()
}

/// Similarity measures of a replica's estimated optima.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    /// Mean of the estimated best vertices `OPT_0(ℓ̂_t)`.
    pub mean_optimum: Vec<f64>,
    /// `(β, H_β(mean_optimum))` per grid β; simplex only.
    pub entropy: Vec<(f64, f64)>,
    /// `(ε, V̂_ε)` per grid ε; barrier domains only.
    pub barrier_divergence: Vec<(f64, f64)>,
    /// Per-constraint `log(AM/GM)` of slacks at the smallest ε; polytopes only.
    pub am_gm_log_ratio: Vec<f64>,
    /// `(β*, 2·√(Ĥ_β d^β m/β))`; simplex only.
    pub predicted_bound: Option<(f64, f64)>,
    /// The same entropy and divergence measures on true per-task optima.
    pub true_optima: TrueOptimaDiagnostics,
}

/// Diagnostics on simulator-side true optima rather than the learner's
/// estimates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrueOptimaDiagnostics {
    pub mean_optimum: Vec<f64>,
    pub entropy: Vec<(f64, f64)>,
    pub predicted_bound: Option<(f64, f64)>,
}

/// Mean point and its `(β, entropy)` pairs.
pub type EntropyProfile = (Vec<f64>, Vec<(f64, f64)>);

/// Entropy of the mean point per β.
pub fn entropy_profile(points: &[Vec<f64>], betas: &[f64]) -> Result<EntropyProfile> {
    if points.is_empty() {
        return Err(Error::InvalidParameter("no points".into()));
    }
    let mean = mean_of(points);
    let mut out = Vec::with_capacity(betas.len());
    for &b in betas {
        out.push((b, tsallis_entropy(b, &mean)?));
    }
    Ok((mean, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularizers::BallBarrier;
    use approx::assert_relative_eq;

    fn record(regret: f64) -> TaskRecord {
        TaskRecord {
            task: 0,
            theta_index: 0,
            theta: Theta { eta: 1.0, beta: 1.0, eps: 0.0 },
            learner_loss: regret,
            realized_loss: regret,
            comparator_loss: 0.0,
            regret,
            realized_regret: regret,
            est_cum_loss: vec![],
            optima: vec![],
            vertex_optimum: vec![],
            true_optimum: vec![],
            expert_losses: vec![],
        }
    }

    #[test]
    fn averaged_regret_examples() {
        assert_eq!(task_averaged_regret(&[record(5.0)]).unwrap(), 5.0);
        assert_eq!(task_averaged_regret(&[record(2.0), record(4.0)]).unwrap(), 3.0);
        assert_eq!(task_averaged_regret(&[record(0.0)]).unwrap(), 0.0);
        assert!(task_averaged_regret(&[]).is_err());
        assert_eq!(cumulative_average(&[2.0, 4.0, 0.0]), vec![2.0, 3.0, 2.0]);
    }

    #[test]
    fn divergence_examples() {
        let ball = Regularizer::Ball(BallBarrier::new(2));
        let same = vec![vec![0.1, 0.2]; 4];
        assert_eq!(barrier_divergence(&same, &ball).unwrap(), 0.0);
        let anti = vec![vec![0.5, 0.0], vec![-0.5, 0.0]];
        let v = barrier_divergence(&anti, &ball).unwrap();
        assert_relative_eq!(v * v, -(0.75f64.ln()), epsilon = 1e-12);

        let kl = Regularizer::tsallis(1.0, 2).unwrap();
        let pts = vec![vec![0.9, 0.1], vec![0.1, 0.9]];
        let v = barrier_divergence(&pts, &kl).unwrap();
        let h09 = -(0.9f64 * 0.9f64.ln() + 0.1 * 0.1f64.ln());
        assert_relative_eq!(v * v, 2f64.ln() - h09, epsilon = 1e-9);
        let direct = mean_divergence_to(&pts, &kl, &[0.5, 0.5]).unwrap();
        assert_relative_eq!(v * v, direct, epsilon = 1e-9);
    }

    #[test]
    fn mean_minimizes_divergence_on_a_mesh() {
        let ball = Regularizer::Ball(BallBarrier::new(2));
        let pts = vec![vec![0.6, 0.1], vec![-0.2, 0.5], vec![0.1, -0.7], vec![0.3, 0.3]];
        let v = barrier_divergence(&pts, &ball).unwrap();
        let mut best = f64::INFINITY;
        let n = 400;
        for i in 0..=n {
            for j in 0..=n {
                let y = [-1.0 + 2.0 * i as f64 / n as f64, -1.0 + 2.0 * j as f64 / n as f64];
                if y[0] * y[0] + y[1] * y[1] < 0.99 {
                    best = best.min(mean_divergence_to(&pts, &ball, &y).unwrap());
                }
            }
        }
        assert!((best - v * v).abs() <= 1e-4, "mesh {best} fast path {}", v * v);
    }

    #[test]
    fn predicted_bound_examples() {
        let (b, v) = predicted_mab_bound(&[(1.0, 2f64.ln())], 2, 100).unwrap();
        assert_eq!(b, 1.0);
        assert_relative_eq!(v, 23.548, epsilon = 1e-3);
        let (b, v) = predicted_mab_bound(&[(1.0, 0.5), (0.5, 0.0)], 4, 10).unwrap();
        assert_eq!((b, v), (0.5, 0.0));
        assert!(predicted_mab_bound(&[], 2, 10).is_err());
    }

    #[test]
    fn sparse_mean_optimum_bound_decreases_toward_small_beta() {
        // s = 2 of d = 50 arms share all the mass
        let d = 50;
        let mut p = vec![0.0; d];
        p[3] = 0.5;
        p[17] = 0.5;
        let lo = 1.0 / (d as f64).ln();
        let betas: Vec<f64> = (0..=10).map(|j| lo + (1.0 - lo) * j as f64 / 10.0).collect();
        let (_, h) = entropy_profile(&[p], &betas).unwrap();
        let bounds: Vec<f64> = h.iter().map(|&(b, hb)| predicted_mab_bound(&[(b, hb)], d, 100).unwrap().1).collect();
        assert!(bounds.windows(2).all(|w| w[0] <= w[1] + 1e-12));
        let (bstar, _) = predicted_mab_bound(&h, d, 100).unwrap();
        assert_eq!(bstar, lo);
    }

    #[test]
    fn am_gm_ratios() {
        let cs = vec![LinearConstraint::new(vec![1.0, 0.0], 1.0), LinearConstraint::new(vec![0.0, -1.0], 0.0)];
        let same = vec![vec![0.5, 0.5]; 3];
        assert!(am_gm_log_ratios(&same, &cs).unwrap().iter().all(|&r| r.abs() < 1e-15));
        let spread = vec![vec![0.1, 0.5], vec![0.9, 0.5]];
        let r = am_gm_log_ratios(&spread, &cs).unwrap();
        assert_relative_eq!(r[0], (0.5f64).ln() - 0.5 * (0.9f64 * 0.1).ln(), epsilon = 1e-12);
        assert!(r[1].abs() < 1e-15);
        assert!(am_gm_log_ratios(&[vec![1.0, 0.5]], &cs).is_err());
    }
}
