//! Experiment harness: config loading, seeded replicas of the meta learner
//! against fixed-tuning baselines on shared loss tensors, and result files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::environments::{gen_mab_tasks, gen_path_tasks, gen_sphere_tasks, LossTensor, MabEnvSpec, PathEnvSpec, SphereEnvSpec};
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::meta::{
    blo_baseline_eta, blo_defaults, build_grid, default_alpha, exp3_theta, grid_size, mab_defaults, run_fixed_task,
    tsallis_half_theta, AxisRange, MabRunner, MetaDefaults, MetaLearner, PathRunner, Regime, SphereRunner, TaskRunner,
};
use crate::metrics::{
    am_gm_log_ratios, barrier_divergence, cumulative_average, entropy_profile, predicted_mab_bound, task_averaged_regret,
    SimilarityReport, TaskRecord, Theta, TrueOptimaDiagnostics,
};
use crate::shortestpath::build_flow_polytope;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const REGRET_SERIES_HEADER: &str = "replica,task,theta_eta,theta_beta,theta_eps,task_regret,cum_avg_regret";
pub const BASELINE_SERIES_HEADER: &str = "replica,baseline,task,task_regret,cum_avg_regret";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Mab,
    BloSphere,
    BloPath,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum EnvSpec {
    Mab(MabEnvSpec),
    Sphere(SphereEnvSpec),
    Path(PathEnvSpec),
}

impl EnvSpec {
    pub fn m(&self) -> usize {
        match self {
            EnvSpec::Mab(s) => s.m,
            EnvSpec::Sphere(s) => s.m,
            EnvSpec::Path(s) => s.m,
        }
    }

    pub fn t(&self) -> usize {
        match self {
            EnvSpec::Mab(s) => s.t,
            EnvSpec::Sphere(s) => s.t,
            EnvSpec::Path(s) => s.t,
        }
    }

    fn with_seed(&self, seed: u64) -> Self {
        let mut e = self.clone();
        match &mut e {
            EnvSpec::Mab(s) => s.seed = seed,
            EnvSpec::Sphere(s) => s.seed = seed,
            EnvSpec::Path(s) => s.seed = seed,
        }
        e
    }

    fn generate(&self) -> Result<LossTensor> {
        match self {
            EnvSpec::Mab(s) => gen_mab_tasks(s),
            EnvSpec::Sphere(s) => gen_sphere_tasks(s),
            EnvSpec::Path(s) => gen_path_tasks(s),
        }
    }
}

/// Fixed-tuning single-task learners restarted every task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    /// `β = 1`, `η = √(log d/(d·m))`, uniform start.
    Exp3,
    /// `β = 1/2`, `η = √(β·B_max/(d^β·m))`, uniform start.
    TsallisHalf,
    /// Barrier FTRL from the analytic center with `η = D/(G√m)`.
    AnalyticCenter,
}

impl Baseline {
    pub fn name(&self) -> &'static str {
        match self {
            Baseline::Exp3 => "exp3",
            Baseline::TsallisHalf => "tsallis-half",
            Baseline::AnalyticCenter => "analytic-center",
        }
    }
}

/// Meta-learner settings. Unset fields take the setting's defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaConfig {
    /// Bandit presets; ignored for barrier domains.
    #[serde(default = "default_regime")]
    pub regime: Regime,
    pub k: Option<usize>,
    pub eta: Option<AxisRange>,
    pub beta: Option<AxisRange>,
    pub eps: Option<AxisRange>,
    pub alpha: Option<f64>,
    pub rho: Option<f64>,
    pub gamma: Option<f64>,
    /// Whether the expert losses include the `ρ²D²/η` term.
    #[serde(default = "yes")]
    pub rho_term: bool,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_regime() -> Regime {
    Regime::Full
}

fn yes() -> bool {
    true
}

fn default_delta() -> f64 {
    0.05
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            regime: default_regime(),
            k: None,
            eta: None,
            beta: None,
            eps: None,
            alpha: None,
            rho: None,
            gamma: None,
            rho_term: true,
            delta: default_delta(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub env: EnvSpec,
    /// One replica per seed; the seed drives every stream of that replica.
    pub replicas: Vec<u64>,
    pub meta: MetaConfig,
    pub baselines: Vec<Baseline>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Mode,
    env: serde_json::Value,
    #[serde(default = "default_replicas")]
    replicas: Vec<u64>,
    #[serde(default)]
    meta: MetaConfig,
    baselines: Option<Vec<Baseline>>,
}

fn default_replicas() -> Vec<u64> {
    vec![0]
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let v: toml::Value = toml::from_str(text).map_err(config_err)?;
        Self::from_value(serde_json::to_value(v).map_err(config_err)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text).map_err(config_err)?)
    }

    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    fn from_value(v: serde_json::Value) -> Result<Self> {
        let raw: RawConfig = serde_json::from_value(v).map_err(config_err)?;
        let env = match raw.mode {
            Mode::Mab => EnvSpec::Mab(serde_json::from_value(raw.env).map_err(config_err)?),
            Mode::BloSphere => EnvSpec::Sphere(serde_json::from_value(raw.env).map_err(config_err)?),
            Mode::BloPath => EnvSpec::Path(serde_json::from_value(raw.env).map_err(config_err)?),
        };
        let baselines = raw.baselines.unwrap_or_else(|| match raw.mode {
            Mode::Mab => vec![Baseline::Exp3, Baseline::TsallisHalf],
            _ => vec![Baseline::AnalyticCenter],
        });
        let cfg = Self { mode: raw.mode, env, replicas: raw.replicas, meta: raw.meta, baselines };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Replaces the seed list with `base, base+1, ...`, keeping the count.
    pub fn override_seed(&mut self, base: u64) {
        let n = self.replicas.len().max(1);
        self.replicas = (0..n as u64).map(|i| base.wrapping_add(i)).collect();
    }

    /// Sets the replica count, continuing consecutively from the first seed.
    pub fn set_replica_count(&mut self, n: usize) {
        let base = self.replicas.first().copied().unwrap_or(0);
        self.replicas = (0..n as u64).map(|i| base.wrapping_add(i)).collect();
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        match &self.env {
            EnvSpec::Mab(s) => s.validate(),
            EnvSpec::Sphere(s) => s.validate(),
            EnvSpec::Path(s) => s.validate(),
        }
        .map_err(wrap)?;
        if self.replicas.is_empty() {
            return Err(Error::Config("at least one replica seed is required".into()));
        }
        for b in &self.baselines {
            let ok = matches!(
                (self.mode, b),
                (Mode::Mab, Baseline::Exp3 | Baseline::TsallisHalf) | (Mode::BloSphere | Mode::BloPath, Baseline::AnalyticCenter)
            );
            if !ok {
                return Err(Error::Config(format!("baseline {} does not apply to this mode", b.name())));
            }
        }
        if let Some(a) = self.meta.alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::Config(format!("alpha must be nonnegative, got {a}")));
            }
        }
        if let Some(r) = self.meta.rho {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Config(format!("rho must be positive, got {r}")));
            }
        }
        if let Some(g) = self.meta.gamma {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::Config(format!("gamma must be nonnegative, got {g}")));
            }
        }
        let setup = Setup::new(self).map_err(wrap)?;
        if self.mode == Mode::Mab && setup.grid.iter().any(|t| t.eps <= 0.0) {
            return Err(Error::Config("bandit grids need eps > 0 so initializations stay interior".into()));
        }
        Ok(())
    }
}

/// Everything derived from the config before any task runs.
struct Setup {
    runner: Box<dyn TaskRunner>,
    baseline_runner: Box<dyn TaskRunner>,
    defaults: MetaDefaults,
    grid: Vec<Theta>,
    baselines: Vec<(Baseline, Theta)>,
}

impl Setup {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let m = cfg.env.m();
        let t = cfg.env.t();
        let mc = &cfg.meta;
        let (runner, baseline_runner, mut defaults): (Box<dyn TaskRunner>, Box<dyn TaskRunner>, MetaDefaults) = match &cfg.env {
            EnvSpec::Mab(s) => {
                let mut def = mab_defaults(mc.regime, s.d, m, t, mc.delta, mc.k)?;
                if let Some(g) = mc.gamma {
                    def.gamma = g;
                }
                (Box::new(MabRunner::new(s.d, m, def.gamma)), Box::new(MabRunner::new(s.d, m, 0.0)), def)
            }
            EnvSpec::Sphere(s) => {
                let r = SphereRunner::new(s.d, m);
                let def = blo_defaults(r.domain(), m, t, mc.k)?;
                (Box::new(r.clone()), Box::new(r), def)
            }
            EnvSpec::Path(s) => {
                let (poly, _) = build_flow_polytope(&s.dag).reduce()?;
                let r = PathRunner::new(Domain::Polytope(poly), m)?;
                let def = blo_defaults(r.domain(), m, t, mc.k)?;
                (Box::new(r.clone()), Box::new(r), def)
            }
        };
        if let Some(r) = mc.eta {
            defaults.grid.eta = r;
        }
        if let Some(r) = mc.beta {
            defaults.grid.beta = r;
        }
        if let Some(r) = mc.eps {
            defaults.grid.eps = r;
        }
        if let Some(rho) = mc.rho {
            defaults.params.rho = rho;
        }
        let grid = build_grid(&defaults.grid)?;
        defaults.alpha = match mc.alpha {
            Some(a) => a,
            None => default_alpha(
                defaults.params.d_bound,
                defaults.g,
                defaults.m_ratio,
                defaults.params.c,
                defaults.params.rho,
                m,
                t,
                grid_size(&defaults.grid),
            ),
        };
        if !mc.rho_term {
            defaults.params.rho = 0.0;
        }
        let mut baselines = Vec::new();
        for b in &cfg.baselines {
            let theta = match (b, &cfg.env) {
                (Baseline::Exp3, EnvSpec::Mab(s)) => exp3_theta(s.d, m),
                (Baseline::TsallisHalf, EnvSpec::Mab(s)) => tsallis_half_theta(s.d, m),
                (Baseline::AnalyticCenter, _) => {
                    Theta { eta: blo_baseline_eta(baseline_runner.domain(), m)?, beta: 1.0, eps: 0.0 }
                }
                _ => return Err(Error::Config(format!("baseline {} does not apply to this mode", b.name()))),
            };
            baselines.push((*b, theta));
        }
        Ok(Self { runner, baseline_runner, defaults, grid, baselines })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub baseline: Baseline,
    pub theta: Theta,
    pub records: Vec<TaskRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaResult {
    pub seed: u64,
    pub meta: Vec<TaskRecord>,
    pub baselines: Vec<BaselineResult>,
    /// Grid probabilities after each task.
    pub pt: Vec<Vec<f64>>,
    pub similarity: SimilarityReport,
}

impl ReplicaResult {
    pub fn meta_regrets(&self) -> Vec<f64> {
        self.meta.iter().map(|r| r.regret).collect()
    }

    pub fn meta_average(&self) -> f64 {
        task_averaged_regret(&self.meta).unwrap_or(f64::NAN)
    }

    pub fn baseline_average(&self, b: Baseline) -> Option<f64> {
        self.baselines.iter().find(|r| r.baseline == b).and_then(|r| task_averaged_regret(&r.records).ok())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultsBundle {
    pub version: String,
    pub config: ExperimentConfig,
    pub defaults: MetaDefaults,
    pub grid: Vec<Theta>,
    pub replicas: Vec<ReplicaResult>,
}

fn similarity(records: &[TaskRecord], mode: Mode, grid: &[Theta], domain: &Domain, m: usize) -> Result<SimilarityReport> {
    let vertex: Vec<Vec<f64>> = records.iter().map(|r| r.vertex_optimum.clone()).collect();
    let truth: Vec<Vec<f64>> = records.iter().map(|r| r.true_optimum.clone()).collect();
    let mut betas: Vec<f64> = grid.iter().map(|t| t.beta).collect();
    betas.sort_by(f64::total_cmp);
    betas.dedup();
    let mut eps: Vec<f64> = grid.iter().map(|t| t.eps).collect();
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    match mode {
        Mode::Mab => {
            let d = domain.dim();
            let (mean_optimum, entropy) = entropy_profile(&vertex, &betas)?;
            let (true_mean, true_entropy) = entropy_profile(&truth, &betas)?;
            Ok(SimilarityReport {
                mean_optimum,
                predicted_bound: Some(predicted_mab_bound(&entropy, d, m)?),
                entropy,
                barrier_divergence: Vec::new(),
                am_gm_log_ratio: Vec::new(),
                true_optima: TrueOptimaDiagnostics {
                    mean_optimum: true_mean,
                    predicted_bound: Some(predicted_mab_bound(&true_entropy, d, m)?),
                    entropy: true_entropy,
                },
            })
        }
        Mode::BloSphere | Mode::BloPath => {
            let reg = domain.regularizer(1.0)?;
            let mut divergence = Vec::with_capacity(eps.len());
            for (e, &ev) in eps.iter().enumerate() {
                let pts: Vec<Vec<f64>> = records.iter().map(|r| r.optima[e].clone()).collect();
                divergence.push((ev, barrier_divergence(&pts, &reg)?));
            }
            let am_gm = match domain {
                Domain::Polytope(p) => {
                    let pts: Vec<Vec<f64>> = records.iter().map(|r| r.optima[0].clone()).collect();
                    am_gm_log_ratios(&pts, p.constraints())?
                }
                _ => Vec::new(),
            };
            Ok(SimilarityReport {
                mean_optimum: crate::linalg::mean_of(&vertex),
                entropy: Vec::new(),
                barrier_divergence: divergence,
                am_gm_log_ratio: am_gm,
                predicted_bound: None,
                true_optima: TrueOptimaDiagnostics {
                    mean_optimum: crate::linalg::mean_of(&truth),
                    entropy: Vec::new(),
                    predicted_bound: None,
                },
            })
        }
    }
}

fn run_replica(cfg: &ExperimentConfig, setup: &Setup, seed: u64) -> Result<ReplicaResult> {
    let losses = cfg.env.with_seed(seed).generate()?;
    let runner = setup.runner.as_ref();
    let mut meta = MetaLearner::new(setup.grid.clone(), runner.domain(), setup.defaults.params, setup.defaults.alpha)?;
    let mut records = Vec::with_capacity(losses.len());
    let mut pt = Vec::with_capacity(losses.len());
    for (task, task_losses) in losses.iter().enumerate() {
        records.push(meta.run_task(seed, task, task_losses, runner)?);
        pt.push(meta.state.probabilities());
    }
    let start = setup.baseline_runner.domain().center();
    let mut baselines = Vec::with_capacity(setup.baselines.len());
    for &(baseline, theta) in &setup.baselines {
        let recs = losses
            .iter()
            .enumerate()
            .map(|(task, l)| run_fixed_task(setup.baseline_runner.as_ref(), &theta, &start, seed, task, l))
            .collect::<Result<Vec<_>>>()?;
        baselines.push(BaselineResult { baseline, theta, records: recs });
    }
    let similarity = similarity(&records, cfg.mode, &setup.grid, runner.domain(), cfg.env.m())?;
    Ok(ReplicaResult { seed, meta: records, baselines, pt, similarity })
}

/// Runs every replica (concurrently when the `parallel` feature is on).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultsBundle> {
    cfg.validate()?;
    let setup = Setup::new(cfg)?;
    #[cfg(feature = "parallel")]
    let replicas = {
        use rayon::prelude::*;
        cfg.replicas.par_iter().map(|&s| run_replica(cfg, &setup, s)).collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let replicas = cfg.replicas.iter().map(|&s| run_replica(cfg, &setup, s)).collect::<Result<Vec<_>>>()?;
    Ok(ResultsBundle {
        version: VERSION.to_string(),
        config: cfg.clone(),
        defaults: setup.defaults,
        grid: setup.grid,
        replicas,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSummary {
    pub seed: u64,
    pub meta_avg_regret: f64,
    pub meta_realized_avg_regret: f64,
    pub baseline_avg_regret: BTreeMap<String, f64>,
    pub similarity: SimilarityReport,
    pub final_probabilities_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub version: String,
    pub config: serde_json::Value,
    pub grid_size: usize,
    pub alpha: f64,
    pub theoretical_k: f64,
    pub replicas: Vec<ReplicaSummary>,
    pub mean_meta_avg_regret: f64,
    pub mean_baseline_avg_regret: BTreeMap<String, f64>,
}

impl ResultsBundle {
    pub fn summary(&self) -> Result<Summary> {
        let mut replicas = Vec::with_capacity(self.replicas.len());
        for r in &self.replicas {
            let mut baseline_avg_regret = BTreeMap::new();
            for b in &r.baselines {
                baseline_avg_regret.insert(b.baseline.name().to_string(), task_averaged_regret(&b.records)?);
            }
            replicas.push(ReplicaSummary {
                seed: r.seed,
                meta_avg_regret: task_averaged_regret(&r.meta)?,
                meta_realized_avg_regret: r.meta.iter().map(|x| x.realized_regret).sum::<f64>() / r.meta.len() as f64,
                baseline_avg_regret,
                similarity: r.similarity.clone(),
                final_probabilities_max: r.pt.last().map_or(f64::NAN, |p| p.iter().copied().fold(0.0, f64::max)),
            });
        }
        let n = replicas.len() as f64;
        let mut mean_baseline_avg_regret = BTreeMap::new();
        for r in &replicas {
            for (k, v) in &r.baseline_avg_regret {
                *mean_baseline_avg_regret.entry(k.clone()).or_insert(0.0) += v / n;
            }
        }
        Ok(Summary {
            version: self.version.clone(),
            config: serde_json::to_value(&self.config).map_err(|e| Error::Serde(e.to_string()))?,
            grid_size: self.grid.len(),
            alpha: self.defaults.alpha,
            theoretical_k: self.defaults.theoretical_k,
            mean_meta_avg_regret: replicas.iter().map(|r| r.meta_avg_regret).sum::<f64>() / n,
            replicas,
            mean_baseline_avg_regret,
        })
    }

    pub fn regret_series_csv(&self) -> String {
        let mut s = String::from(REGRET_SERIES_HEADER);
        s.push('\n');
        for (i, r) in self.replicas.iter().enumerate() {
            let cum = cumulative_average(&r.meta_regrets());
            for (rec, c) in r.meta.iter().zip(cum) {
                let th = rec.theta;
                let _ = writeln!(s, "{i},{},{},{},{},{},{c}", rec.task, th.eta, th.beta, th.eps, rec.regret);
            }
        }
        s
    }

    pub fn baseline_series_csv(&self) -> String {
        let mut s = String::from(BASELINE_SERIES_HEADER);
        s.push('\n');
        for (i, r) in self.replicas.iter().enumerate() {
            for b in &r.baselines {
                let regrets: Vec<f64> = b.records.iter().map(|x| x.regret).collect();
                for (rec, c) in b.records.iter().zip(cumulative_average(&regrets)) {
                    let _ = writeln!(s, "{i},{},{},{},{c}", b.baseline.name(), rec.task, rec.regret);
                }
            }
        }
        s
    }

    /// One row per task with the probability of every grid point.
    pub fn pt_trajectory_csv(&self) -> String {
        let mut s = String::from("replica,task");
        for j in 0..self.grid.len() {
            let _ = write!(s, ",p_{j}");
        }
        s.push('\n');
        for (i, r) in self.replicas.iter().enumerate() {
            for (task, p) in r.pt.iter().enumerate() {
                let _ = write!(s, "{i},{task}");
                for v in p {
                    let _ = write!(s, ",{v}");
                }
                s.push('\n');
            }
        }
        s
    }

    /// `theta_index,eta,beta,eps` for reading the trajectory columns.
    pub fn grid_csv(&self) -> String {
        let mut s = String::from("theta_index,eta,beta,eps\n");
        for (j, t) in self.grid.iter().enumerate() {
            let _ = writeln!(s, "{j},{},{},{}", t.eta, t.beta, t.eps);
        }
        s
    }
}

/// Writes `regret_series.csv`, `baseline_series.csv`, `pt_trajectory.csv`,
/// `grid.csv` and `summary.json` into `dir`, creating it if needed.
pub fn emit_results(bundle: &ResultsBundle, dir: &Path) -> Result<()> {
    if bundle.replicas.is_empty() || bundle.replicas.iter().any(|r| r.meta.is_empty()) {
        return Err(Error::InvalidParameter("nothing to emit: the bundle has no task records".into()));
    }
    let io = |p: &Path| {
        let path = p.display().to_string();
        move |source| Error::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let summary = serde_json::to_string_pretty(&bundle.summary()?).map_err(|e| Error::Serde(e.to_string()))?;
    let files = [
        ("regret_series.csv", bundle.regret_series_csv()),
        ("baseline_series.csv", bundle.baseline_series_csv()),
        ("pt_trajectory.csv", bundle.pt_trajectory_csv()),
        ("grid.csv", bundle.grid_csv()),
        ("summary.json", summary + "\n"),
    ];
    for (name, body) in files {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(io(&p))?;
    }
    Ok(())
}
