//! The meta layer. A grid of hyperparameters `θ = (η, β, ε)` is weighted by
//! multiplicative weights on a regret upper bound, and every `θ` starts each
//! task from the running mean of past `ε`-constrained estimated optima.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blo::{run_blo_task, run_blo_task_linear, BloTaskConfig};
use crate::error::{check_dim, Error, Result};
use crate::geometry::{Domain, VertexOracle};
use crate::linalg::{dot, norm};
use crate::mab::{run_mab_task, MabTaskConfig};
use crate::metrics::{TaskRecord, Theta};
use crate::regularizers::Regularizer;
use crate::rng::{stream, Purpose, StreamRng};
use crate::shortestpath::{dag_shortest_path, flow_sample_path, path_weight, FlowLift};

/// Cap on `α·U` in one weight update.
pub const MAX_LOG_DECREMENT: f64 = 700.0;

/// A closed interval; `low == high` is a singleton axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub low: f64,
    pub high: f64,
}

impl AxisRange {
    pub fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    pub fn single(v: f64) -> Self {
        Self { low: v, high: v }
    }

    pub fn is_singleton(&self) -> bool {
        self.low == self.high
    }

    /// `low + (j/k)(high − low)` for `j = 0..=k`, or the single value.
    pub fn points(&self, k: usize) -> Vec<f64> {
        if self.is_singleton() {
            return vec![self.low];
        }
        (0..=k)
            .map(|j| if j == k { self.high } else { self.low + (j as f64 / k as f64) * (self.high - self.low) })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperGridSpec {
    pub eta: AxisRange,
    pub beta: AxisRange,
    pub eps: AxisRange,
    /// Intervals per non-singleton axis (`k + 1` points).
    pub k: usize,
}

impl HyperGridSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, r: &AxisRange| Error::InvalidParameter(format!("{what} range [{}, {}] is invalid", r.low, r.high));
        if !(self.eta.low > 0.0 && self.eta.low <= self.eta.high && self.eta.high.is_finite()) {
            return Err(bad("eta", &self.eta));
        }
        if !(self.beta.low > 0.0 && self.beta.low <= self.beta.high && self.beta.high <= 1.0) {
            return Err(bad("beta", &self.beta));
        }
        if !(self.eps.low >= 0.0 && self.eps.low <= self.eps.high && self.eps.high < 1.0) {
            return Err(bad("eps", &self.eps));
        }
        let any_range = [self.eta, self.beta, self.eps].iter().any(|r| !r.is_singleton());
        if self.k == 0 && any_range {
            return Err(Error::InvalidParameter("k must be positive when an axis is a range".into()));
        }
        Ok(())
    }
}

/// Cartesian product of the axis grids, `η` slowest and `ε` fastest.
pub fn build_grid(spec: &HyperGridSpec) -> Result<Vec<Theta>> {
    spec.validate()?;
    let mut grid = Vec::new();
    for &eta in &spec.eta.points(spec.k) {
        for &beta in &spec.beta.points(spec.k) {
            for &eps in &spec.eps.points(spec.k) {
                grid.push(Theta { eta, beta, eps });
            }
        }
    }
    Ok(grid)
}

/// How the gradient-norm term `G_β²` of the upper bound is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExpertVariant {
    /// `G_β² = d^β/β`.
    Mab { d: usize },
    /// `G² = 32d²`.
    Blo { d: usize },
    Fixed { g2: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretUpperBoundParams {
    pub variant: ExpertVariant,
    pub c: f64,
    pub rho: f64,
    /// `D`, with `D²` bounding the Bregman divergence over the shrunk domain.
    pub d_bound: f64,
    pub m: usize,
}

impl RegretUpperBoundParams {
    pub fn g2(&self, beta: f64) -> f64 {
        match self.variant {
            ExpertVariant::Mab { d } => (d as f64).powf(beta) / beta,
            ExpertVariant::Blo { d } => 32.0 * (d * d) as f64,
            ExpertVariant::Fixed { g2 } => g2,
        }
    }
}

/// `U = (B + ρ²D²)/η + (η·G_β² + C·ε)·m`.
pub fn u_rho(b: f64, theta: &Theta, p: &RegretUpperBoundParams) -> Result<f64> {
    if !(theta.eta > 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {}", theta.eta)));
    }
    let rho_term = p.rho * p.rho * p.d_bound * p.d_bound;
    Ok((b + rho_term) / theta.eta + (theta.eta * p.g2(theta.beta) + p.c * theta.eps) * p.m as f64)
}

/// Weights and initializations of the meta learner. Serializes to a JSON
/// checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaState {
    pub grid: Vec<Theta>,
    /// Normalized log-probabilities over the grid.
    pub log_weights: Vec<f64>,
    /// Distinct grid `ε` values, ascending. Triples sharing `ε` share an
    /// initialization.
    pub eps_values: Vec<f64>,
    pub eps_index: Vec<usize>,
    pub inits: Vec<Vec<f64>>,
    /// Tasks completed.
    pub t: usize,
}

impl MetaState {
    /// Uniform weights and every initialization at `center = argmin φ`.
    pub fn new(grid: Vec<Theta>, center: Vec<f64>) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::InvalidParameter("empty hyperparameter grid".into()));
        }
        let mut eps_values: Vec<f64> = grid.iter().map(|t| t.eps).collect();
        eps_values.sort_by(f64::total_cmp);
        eps_values.dedup();
        let eps_index = grid
            .iter()
            .map(|t| eps_values.iter().position(|&e| e == t.eps).expect("eps listed"))
            .collect();
        let n = grid.len();
        Ok(Self {
            log_weights: vec![-(n as f64).ln(); n],
            inits: vec![center; eps_values.len()],
            grid,
            eps_values,
            eps_index,
            t: 0,
        })
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let mx = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.log_weights.iter().map(|l| (l - mx).exp()).collect();
        let s: f64 = w.iter().sum();
        w.iter().map(|v| v / s).collect()
    }

    pub fn init(&self, theta_index: usize) -> &[f64] {
        &self.inits[self.eps_index[theta_index]]
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
        let n = s.grid.len();
        if s.log_weights.len() != n || s.eps_index.len() != n || s.inits.len() != s.eps_values.len() {
            return Err(Error::Serde("inconsistent checkpoint lengths".into()));
        }
        Ok(s)
    }
}

/// Draws a grid index from the normalized weights by inverse CDF.
pub fn sample_theta<R: Rng + ?Sized>(state: &MetaState, rng: &mut R) -> Result<usize> {
    if state.log_weights.iter().all(|l| *l == f64::NEG_INFINITY) || state.log_weights.iter().any(|l| l.is_nan()) {
        return Err(Error::NonFinite("meta weights are degenerate".into()));
    }
    let p = state.probabilities();
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &pj) in p.iter().enumerate() {
        if pj == 0.0 {
            continue;
        }
        acc += pj;
        last = j;
        if u < acc {
            return Ok(j);
        }
    }
    Ok(last)
}

/// `OPT_ε(ℓ̂)` for each distinct grid `ε`, in `state.eps_values` order.
pub fn constrained_optima(state: &MetaState, est_loss: &[f64], domain: &Domain) -> Result<Vec<Vec<f64>>> {
    state.eps_values.iter().map(|&e| domain.constrained_optimum(est_loss, e)).collect()
}

/// Folds one task's constrained optima into the running means.
pub fn apply_optima(state: &mut MetaState, optima: &[Vec<f64>]) -> Result<()> {
    check_dim(state.inits.len(), optima.len())?;
    state.t += 1;
    let t = state.t as f64;
    for (init, opt) in state.inits.iter_mut().zip(optima) {
        check_dim(init.len(), opt.len())?;
        if state.t == 1 {
            init.clone_from(opt);
        } else {
            for (x, o) in init.iter_mut().zip(opt) {
                *x += (o - *x) / t;
            }
        }
    }
    Ok(())
}

/// Computes the constrained optima of `ℓ̂` and folds them into the running
/// means; returns the optima.
pub fn update_initializations(state: &mut MetaState, est_loss: &[f64], domain: &Domain) -> Result<Vec<Vec<f64>>> {
    let optima = constrained_optima(state, est_loss, domain)?;
    apply_optima(state, &optima)?;
    Ok(optima)
}

/// `log p ← log p − min(α·U, 700)`, then renormalized by log-sum-exp.
pub fn mw_update(state: &mut MetaState, losses: &[f64], alpha: f64) -> Result<()> {
    check_dim(state.log_weights.len(), losses.len())?;
    crate::error::check_finite("expert losses", losses)?;
    for (lw, u) in state.log_weights.iter_mut().zip(losses) {
        *lw -= (alpha * u).min(MAX_LOG_DECREMENT);
    }
    let mx = state.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + state.log_weights.iter().map(|l| (l - mx).exp()).sum::<f64>().ln();
    state.log_weights.iter_mut().for_each(|l| *l -= lse);
    Ok(())
}

/// What a base learner reports back from one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutcome {
    pub est_cum_loss: Vec<f64>,
    /// Loss of the per-round play distributions, `Σ_i E[ℓ_i(play_i)]`.
    pub learner_loss: f64,
    pub realized_loss: f64,
}

/// A within-task learner for one setting, plus hindsight comparators.
pub trait TaskRunner: Sync {
    fn domain(&self) -> &Domain;

    fn run(&self, theta: &Theta, init: &[f64], losses: &[Vec<f64>], rng: &mut StreamRng) -> Result<TaskOutcome>;

    /// Loss and location of the best fixed action over the whole domain.
    fn best_in_hindsight(&self, losses: &[Vec<f64>]) -> Result<(f64, Vec<f64>)>;
}

fn column_sums(losses: &[Vec<f64>]) -> Vec<f64> {
    let d = losses.first().map_or(0, |r| r.len());
    let mut s = vec![0.0; d];
    for row in losses {
        for (si, v) in s.iter_mut().zip(row) {
            *si += v;
        }
    }
    s
}

/// Tsallis FTRL on the simplex.
#[derive(Debug, Clone)]
pub struct MabRunner {
    pub m: usize,
    pub gamma: f64,
    domain: Domain,
}

impl MabRunner {
    pub fn new(d: usize, m: usize, gamma: f64) -> Self {
        Self { m, gamma, domain: Domain::simplex(d) }
    }
}

impl TaskRunner for MabRunner {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn run(&self, theta: &Theta, init: &[f64], losses: &[Vec<f64>], rng: &mut StreamRng) -> Result<TaskOutcome> {
        let cfg = MabTaskConfig {
            d: self.domain.dim(),
            m: self.m,
            eta: theta.eta,
            beta: theta.beta,
            gamma: self.gamma,
            init: init.to_vec(),
        };
        let t = run_mab_task(&cfg, losses, rng)?;
        Ok(TaskOutcome {
            learner_loss: t.expected_loss(losses),
            realized_loss: t.realized_losses.iter().sum(),
            est_cum_loss: t.est_cum_loss,
        })
    }

    fn best_in_hindsight(&self, losses: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
        let s = column_sums(losses);
        check_dim(self.domain.dim(), s.len())?;
        let mut best = 0;
        for (a, &v) in s.iter().enumerate() {
            if v < s[best] {
                best = a;
            }
        }
        let mut x = vec![0.0; s.len()];
        x[best] = 1.0;
        Ok((s[best], x))
    }
}

/// Barrier FTRL on the unit ball with linear losses.
#[derive(Debug, Clone)]
pub struct SphereRunner {
    pub m: usize,
    domain: Domain,
}

impl SphereRunner {
    pub fn new(d: usize, m: usize) -> Self {
        Self { m, domain: Domain::ball(d) }
    }
}

impl TaskRunner for SphereRunner {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn run(&self, theta: &Theta, init: &[f64], losses: &[Vec<f64>], rng: &mut StreamRng) -> Result<TaskOutcome> {
        let cfg = BloTaskConfig { barrier: self.domain.regularizer(1.0)?, eta: theta.eta, m: self.m, init: init.to_vec() };
        let t = run_blo_task_linear(&cfg, losses, rng)?;
        Ok(TaskOutcome {
            learner_loss: t.centers.iter().zip(losses).map(|(x, l)| dot(x, l)).sum(),
            realized_loss: t.realized_losses.iter().sum(),
            est_cum_loss: t.est_cum_loss,
        })
    }

    fn best_in_hindsight(&self, losses: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
        let s = column_sums(losses);
        check_dim(self.domain.dim(), s.len())?;
        let n = norm(&s);
        if n == 0.0 {
            return Ok((0.0, vec![0.0; s.len()]));
        }
        Ok((-n, s.iter().map(|v| -v / n).collect()))
    }
}

/// Barrier FTRL on a DAG flow polytope in reduced coordinates. Losses are
/// per-edge; each round plays a path sampled from the Dikin point's flow and
/// observes only that path's total loss.
#[derive(Debug, Clone)]
pub struct PathRunner {
    pub m: usize,
    domain: Domain,
    lift: Arc<FlowLift>,
}

impl PathRunner {
    pub fn new(domain: Domain, m: usize) -> Result<Self> {
        let lift = match &domain {
            Domain::Polytope(p) => match p.oracle() {
                VertexOracle::Flow(l) => l.clone(),
                _ => return Err(Error::InvalidDomain("path runner needs a flow polytope".into())),
            },
            _ => return Err(Error::InvalidDomain("path runner needs a flow polytope".into())),
        };
        Ok(Self { m, domain, lift })
    }

    pub fn lift(&self) -> &FlowLift {
        &self.lift
    }

    fn flow(&self, z: &[f64]) -> Vec<f64> {
        self.lift.to_edge(z).into_iter().map(|v| v.max(0.0)).collect()
    }
}

impl TaskRunner for PathRunner {
    fn domain(&self) -> &Domain {
        &self.domain
    }

    fn run(&self, theta: &Theta, init: &[f64], losses: &[Vec<f64>], rng: &mut StreamRng) -> Result<TaskOutcome> {
        check_dim(self.m, losses.len())?;
        let dag = self.lift.dag();
        for row in losses {
            check_dim(dag.n_edges(), row.len())?;
        }
        let cfg = BloTaskConfig { barrier: self.domain.regularizer(1.0)?, eta: theta.eta, m: self.m, init: init.to_vec() };
        let t = run_blo_task(
            &cfg,
            |i, y, rng: &mut StreamRng| {
                let path = flow_sample_path(dag, &self.flow(y), rng)?;
                Ok(path_weight(&path, &losses[i]))
            },
            rng,
        )?;
        Ok(TaskOutcome {
            learner_loss: t.centers.iter().zip(losses).map(|(z, w)| dot(&self.lift.to_edge(z), w)).sum(),
            realized_loss: t.realized_losses.iter().sum(),
            est_cum_loss: t.est_cum_loss,
        })
    }

    fn best_in_hindsight(&self, losses: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
        let w = column_sums(losses);
        let dag = self.lift.dag();
        let path = dag_shortest_path(dag, &w)?;
        Ok((path_weight(&path, &w), self.lift.to_reduced(&dag.path_indicator(&path))))
    }
}

/// The meta learner: state, per-θ regularizers, bound parameters, and the
/// weight step size.
#[derive(Debug, Clone)]
pub struct MetaLearner {
    pub state: MetaState,
    pub params: RegretUpperBoundParams,
    pub alpha: f64,
    regs: Vec<Regularizer>,
    reg_index: Vec<usize>,
}

impl MetaLearner {
    pub fn new(grid: Vec<Theta>, domain: &Domain, params: RegretUpperBoundParams, alpha: f64) -> Result<Self> {
        let state = MetaState::new(grid, domain.center())?;
        Self::from_state(state, domain, params, alpha)
    }

    /// Resumes from a checkpointed state.
    pub fn from_state(state: MetaState, domain: &Domain, params: RegretUpperBoundParams, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be nonnegative, got {alpha}")));
        }
        let mut betas: Vec<f64> = state.grid.iter().map(|t| t.beta).collect();
        betas.sort_by(f64::total_cmp);
        betas.dedup();
        let regs = betas.iter().map(|&b| domain.regularizer(b)).collect::<Result<Vec<_>>>()?;
        let reg_index = state
            .grid
            .iter()
            .map(|t| betas.iter().position(|&b| b == t.beta).expect("beta listed"))
            .collect();
        Ok(Self { state, params, alpha, regs, reg_index })
    }

    /// Expert losses `U(x_t^(θ), θ)` against the current initializations.
    pub fn expert_losses(&self, optima: &[Vec<f64>]) -> Result<Vec<f64>> {
        let st = &self.state;
        st.grid
            .iter()
            .enumerate()
            .map(|(j, theta)| {
                let e = st.eps_index[j];
                let b = self.regs[self.reg_index[j]].bregman(&optima[e], &st.inits[e])?;
                u_rho(b, theta, &self.params)
            })
            .collect()
    }

    /// One task: sample θ, run the base learner from its initialization,
    /// score every θ, update initializations and weights.
    pub fn meta_round<T: TaskRunner + ?Sized>(
        &mut self,
        task: usize,
        losses: &[Vec<f64>],
        runner: &T,
        meta_rng: &mut StreamRng,
        learner_rng: &mut StreamRng,
    ) -> Result<TaskRecord> {
        let idx = sample_theta(&self.state, meta_rng)?;
        let theta = self.state.grid[idx];
        let outcome = runner.run(&theta, self.state.init(idx), losses, learner_rng)?;
        let domain = runner.domain();
        let optima = constrained_optima(&self.state, &outcome.est_cum_loss, domain)?;
        let expert = self.expert_losses(&optima)?;
        apply_optima(&mut self.state, &optima)?;
        mw_update(&mut self.state, &expert, self.alpha)?;
        finish_record(task, idx, theta, outcome, runner, losses, optima, expert)
    }

    /// [`MetaLearner::meta_round`] with the standard streams for `(seed, task)`.
    pub fn run_task<T: TaskRunner + ?Sized>(&mut self, seed: u64, task: usize, losses: &[Vec<f64>], runner: &T) -> Result<TaskRecord> {
        let mut meta_rng = stream(seed, task as u64, Purpose::MetaSampling);
        let mut learner_rng = stream(seed, task as u64, Purpose::Learner);
        self.meta_round(task, losses, runner, &mut meta_rng, &mut learner_rng)
    }
}

#[allow(clippy::too_many_arguments)]
fn finish_record<T: TaskRunner + ?Sized>(
    task: usize,
    theta_index: usize,
    theta: Theta,
    outcome: TaskOutcome,
    runner: &T,
    losses: &[Vec<f64>],
    optima: Vec<Vec<f64>>,
    expert_losses: Vec<f64>,
) -> Result<TaskRecord> {
    let (comparator_loss, true_optimum) = runner.best_in_hindsight(losses)?;
    let vertex_optimum = runner.domain().constrained_optimum(&outcome.est_cum_loss, 0.0)?;
    Ok(TaskRecord {
        task,
        theta_index,
        theta,
        learner_loss: outcome.learner_loss,
        realized_loss: outcome.realized_loss,
        comparator_loss,
        regret: outcome.learner_loss - comparator_loss,
        realized_regret: outcome.realized_loss - comparator_loss,
        est_cum_loss: outcome.est_cum_loss,
        optima,
        vertex_optimum,
        true_optimum,
        expert_losses,
    })
}

/// A single-task learner with fixed hyperparameters, restarted from `init`
/// on every task.
pub fn run_fixed_task<T: TaskRunner + ?Sized>(
    runner: &T,
    theta: &Theta,
    init: &[f64],
    seed: u64,
    task: usize,
    losses: &[Vec<f64>],
) -> Result<TaskRecord> {
    let mut rng = stream(seed, task as u64, Purpose::Learner);
    let outcome = runner.run(theta, init, losses, &mut rng)?;
    finish_record(task, 0, *theta, outcome, runner, losses, Vec::new(), Vec::new())
}

/// `Σ_t [B(x_t‖y_t) − B(x_t‖x̄)]` where `y_1 = start`, `y_{t+1}` is the mean
/// of `x_1..x_t`, and `x̄` the mean of all points: the regret of
/// follow-the-leader on Bregman losses.
pub fn ftl_bregman_regret(reg: &Regularizer, points: &[Vec<f64>], start: &[f64]) -> Result<f64> {
    if points.is_empty() {
        return Ok(0.0);
    }
    let final_mean = crate::linalg::mean_of(points);
    let mut y = start.to_vec();
    let mut total = 0.0;
    for (t, x) in points.iter().enumerate() {
        total += reg.bregman(x, &y)? - reg.bregman(x, &final_mean)?;
        if t == 0 {
            y.clone_from(x);
        } else {
            let n = (t + 1) as f64;
            for (yi, xi) in y.iter_mut().zip(x) {
                *yi += (xi - *yi) / n;
            }
        }
    }
    Ok(total)
}

/// Hyperparameter presets for the bandit setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `β = 1` only.
    Exp3,
    /// `β ∈ [1/2, 1]`.
    TsallisHalf,
    /// `β ∈ [1/log d, 1]`.
    Full,
}

/// Defaults derived for one setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaDefaults {
    pub grid: HyperGridSpec,
    pub params: RegretUpperBoundParams,
    pub alpha: f64,
    /// Estimator offset for the bandit setting; zero otherwise.
    pub gamma: f64,
    /// Grid resolution suggested by the worst-case analysis, reported only.
    pub theoretical_k: f64,
    /// `G`, the gradient-norm bound used in `α`.
    pub g: f64,
    /// `M`, the ratio of largest to smallest gradient bound over the β range.
    pub m_ratio: f64,
}

/// Points per axis used when none is configured.
pub const DEFAULT_K_CAP: usize = 16;

/// `α = √(3·log N/(2Tm)) / (DG/ρ + 2DMG + C√m)` with `N` the number of grid
/// points.
#[allow(clippy::too_many_arguments)]
pub fn default_alpha(d_bound: f64, g: f64, m_ratio: f64, c: f64, rho: f64, m: usize, t: usize, n_experts: usize) -> f64 {
    if n_experts <= 1 {
        return 0.0;
    }
    let denom = d_bound * g / rho + 2.0 * d_bound * m_ratio * g + c * (m as f64).sqrt();
    (3.0 * (n_experts as f64).ln() / (2.0 * t as f64 * m as f64)).sqrt() / denom
}

/// Number of grid points a spec expands to.
pub fn grid_size(spec: &HyperGridSpec) -> usize {
    [spec.eta, spec.beta, spec.eps]
        .iter()
        .map(|r| if r.is_singleton() { 1 } else { spec.k + 1 })
        .product()
}

/// Regime defaults for the bandit with `d` arms, `m` rounds, `T` tasks.
///
/// `η ∈ [ρ/√m, 2√(d·log d/(e·m))]`, `D = G = √d`, `M = √(d·log d/e)`, `C = 0`.
/// Per regime, `(ε, γ, ρ)` are `(1/√T, √log(4/δ)/(d·T^¼), √d/T^¼)`,
/// `(√(d/T), same γ, 1/√(md))`, or `(T^(−1/3), √log(4/δ)/(d·T^(1/6)), √d/T^(1/6))`.
pub fn mab_defaults(regime: Regime, d: usize, m: usize, t: usize, delta: f64, k: Option<usize>) -> Result<MetaDefaults> {
    if d < 2 || m == 0 || t == 0 {
        return Err(Error::InvalidParameter("need d ≥ 2 and positive m, T".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")));
    }
    let (df, mf, tf) = (d as f64, m as f64, t as f64);
    let log_d = df.ln();
    let conf = (4.0 / delta).ln().sqrt();
    let (beta_low, eps, gamma, rho) = match regime {
        Regime::Exp3 => (1.0, 1.0 / tf.sqrt(), conf / (df * tf.powf(0.25)), df.sqrt() / tf.powf(0.25)),
        Regime::TsallisHalf => (0.5, (df / tf).sqrt(), conf / (df * tf.powf(0.25)), 1.0 / (mf * df).sqrt()),
        Regime::Full => ((1.0 / log_d).min(1.0), tf.powf(-1.0 / 3.0), conf / (df * tf.powf(1.0 / 6.0)), df.sqrt() / tf.powf(1.0 / 6.0)),
    };
    let eps = eps.min(0.5);
    let eta_high = 2.0 * (df * log_d / (std::f64::consts::E * mf)).sqrt();
    let eta_low = (rho / mf.sqrt()).min(eta_high);
    let k = k.unwrap_or(DEFAULT_K_CAP);
    let grid = HyperGridSpec {
        eta: AxisRange::new(eta_low, eta_high),
        beta: AxisRange::new(beta_low, 1.0),
        eps: AxisRange::single(eps),
        k,
    };
    let d_bound = df.sqrt();
    let g = df.sqrt();
    let m_ratio = (df * log_d / std::f64::consts::E).sqrt().max(1.0);
    let params = RegretUpperBoundParams { variant: ExpertVariant::Mab { d }, c: 0.0, rho, d_bound, m };
    let lipschitz = df * (df / eps).ln();
    let theoretical_k = ((4.0 * d_bound.powi(2) * m_ratio.powi(2) * lipschitz * g) * (mf * tf).sqrt()).ceil();
    Ok(MetaDefaults {
        alpha: default_alpha(d_bound, g, m_ratio, 0.0, rho, m, t, grid_size(&grid)),
        grid,
        params,
        gamma,
        theoretical_k,
        g,
        m_ratio,
    })
}

/// Candidate extreme points of `K_ε` for estimating `max B_φ` over it.
fn shrunk_extremes(domain: &Domain, eps: f64) -> Result<Vec<Vec<f64>>> {
    let c = domain.center();
    let s = 1.0 / (1.0 + eps);
    let shrink = |v: &[f64]| -> Vec<f64> { c.iter().zip(v).map(|(ci, vi)| ci + (vi - ci) * s).collect() };
    match domain {
        Domain::Ball(b) => {
            let mut e = vec![0.0; b.dim];
            e[0] = s;
            let mut f = vec![0.0; b.dim];
            f[0] = -s;
            Ok(vec![e, f, c])
        }
        Domain::Polytope(p) => {
            let vertices: Vec<Vec<f64>> = match p.oracle() {
                VertexOracle::Enumerated(v) => v.clone(),
                VertexOracle::Flow(lift) => lift
                    .dag()
                    .enumerate_paths()
                    .iter()
                    .map(|path| lift.to_reduced(&lift.dag().path_indicator(path)))
                    .collect(),
                VertexOracle::Unavailable => {
                    return Err(Error::InvalidDomain("polytope has no vertex oracle".into()));
                }
            };
            let mut pts: Vec<Vec<f64>> = vertices.iter().map(|v| shrink(v)).collect();
            pts.push(c);
            Ok(pts)
        }
        Domain::Simplex(_) => Err(Error::InvalidDomain("use the bandit defaults for the simplex".into())),
    }
}

/// `max B_φ(x‖y)` over candidate extreme points of `K_ε`, at least 1.
pub fn divergence_diameter_sq(domain: &Domain, eps: f64) -> Result<f64> {
    let reg = domain.regularizer(1.0)?;
    let pts = shrunk_extremes(domain, eps)?;
    let mut best = 1.0f64;
    for x in &pts {
        for y in &pts {
            best = best.max(reg.bregman(x, y)?);
        }
    }
    Ok(best)
}

/// Defaults for bandit linear optimization on a barrier domain.
///
/// `ε ∈ [1/m, 1/√m]`, `ρ = T^(−1/4)`, `G = 4√2·d`, `M = 1`, `C = 1`,
/// `D² = max B_φ` over `K_{ε_low}`, `η ∈ [ρD/(G√m), 2D/(G√m)]`.
pub fn blo_defaults(domain: &Domain, m: usize, t: usize, k: Option<usize>) -> Result<MetaDefaults> {
    if m < 2 || t == 0 {
        return Err(Error::InvalidParameter("need m ≥ 2 and positive T".into()));
    }
    let d = domain.dim();
    let (mf, tf) = (m as f64, t as f64);
    let eps_low = 1.0 / mf;
    let eps_high = 1.0 / mf.sqrt();
    let rho = tf.powf(-0.25);
    let g = 4.0 * 2f64.sqrt() * d as f64;
    let d2 = divergence_diameter_sq(domain, eps_low)?;
    let d_bound = d2.sqrt();
    let grid = HyperGridSpec {
        eta: AxisRange::new(rho * d_bound / (g * mf.sqrt()), 2.0 * d_bound / (g * mf.sqrt())),
        beta: AxisRange::single(1.0),
        eps: AxisRange::new(eps_low, eps_high),
        k: k.unwrap_or(DEFAULT_K_CAP),
    };
    let params = RegretUpperBoundParams { variant: ExpertVariant::Blo { d }, c: 1.0, rho, d_bound, m };
    Ok(MetaDefaults {
        alpha: default_alpha(d_bound, g, 1.0, 1.0, rho, m, t, grid_size(&grid)),
        grid,
        params,
        gamma: 0.0,
        theoretical_k: (d2 * d as f64 * (mf * tf).sqrt()).ceil(),
        g,
        m_ratio: 1.0,
    })
}

/// The analytic-center baseline's step size `D/(G√m)` at `ε = 1/m`.
pub fn blo_baseline_eta(domain: &Domain, m: usize) -> Result<f64> {
    let g = 4.0 * 2f64.sqrt() * domain.dim() as f64;
    Ok(divergence_diameter_sq(domain, 1.0 / m as f64)?.sqrt() / (g * (m as f64).sqrt()))
}

/// Exp3: `β = 1`, `η = √(log d/(d·m))`.
pub fn exp3_theta(d: usize, m: usize) -> Theta {
    let (df, mf) = (d as f64, m as f64);
    Theta { eta: (df.ln() / (df * mf)).sqrt(), beta: 1.0, eps: 0.0 }
}

/// Tsallis-1/2: `η = √(β·B_max/(d^β·m))`, `B_max = (d^(1−β) − 1)/(1−β)`.
pub fn tsallis_half_theta(d: usize, m: usize) -> Theta {
    let beta = 0.5;
    let (df, mf) = (d as f64, m as f64);
    let b_max = (df.powf(1.0 - beta) - 1.0) / (1.0 - beta);
    Theta { eta: (beta * b_max / (df.powf(beta) * mf)).sqrt(), beta, eps: 0.0 }
}
