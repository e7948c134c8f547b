//! Randomized invariant suites over the base learners, regularizers and flow
//! machinery. Each check returns a report instead of panicking so that both
//! the CLI and the test suites can consume it.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::Serialize;

use crate::blo::{blo_loss_estimator, dikin_endpoint, estimated_regret_sides as blo_sides, run_blo_task_linear, BloTaskConfig};
use crate::error::Result;
use crate::geometry::{Domain, LinearConstraint, PolytopeDomain, VertexOracle};
use crate::linalg::{dot, jacobi_eigen, norm, spectral_norm_sym};
use crate::mab::{estimated_regret_sides as mab_sides, mab_loss_estimator, run_mab_task, MabTaskConfig};
use crate::meta::{blo_baseline_eta, exp3_theta, ftl_bregman_regret};
use crate::regularizers::{tsallis_entropy, Regularizer};
use crate::rng::{stream, Purpose, StreamRng};
use crate::shortestpath::{dag_shortest_path, path_weight, walk_edge_marginals, Dag};

/// Outcome of one suite. `worst` is the largest observed violation measure
/// (positive means a bound was exceeded) and passes iff `worst ≤ tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub cases: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl CheckReport {
    fn new(name: &str, cases: usize, worst: f64, tolerance: f64, detail: String) -> Self {
        Self { name: name.into(), cases, worst, tolerance, passed: worst <= tolerance, detail }
    }
}

fn rng_for(seed: u64, case: usize) -> StreamRng {
    stream(seed, case as u64, Purpose::Environment)
}

/// A point of the simplex with every coordinate at least `floor`.
fn simplex_point<R: Rng + ?Sized>(d: usize, floor: f64, rng: &mut R) -> Vec<f64> {
    let shape = [0.2, 1.0, 5.0][rng.gen_range(0..3)];
    let g = Gamma::new(shape, 1.0).expect("positive shape");
    let w: Vec<f64> = (0..d).map(|_| g.sample(rng) + 1e-300).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|v| floor + (1.0 - d as f64 * floor) * v / s).collect()
}

fn ball_point<R: Rng + ?Sized>(d: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let n = norm(&g);
    let r = radius * rng.gen::<f64>().powf(1.0 / d as f64);
    g.iter().map(|v| v * r / n).collect()
}

/// `[-1, 1]^d` as a barrier polytope with its vertex list.
pub fn box_domain(d: usize) -> Result<PolytopeDomain> {
    let mut cons = Vec::with_capacity(2 * d);
    for i in 0..d {
        let mut a = vec![0.0; d];
        a[i] = 1.0;
        cons.push(LinearConstraint::new(a.clone(), 1.0));
        a[i] = -1.0;
        cons.push(LinearConstraint::new(a, 1.0));
    }
    let vertices = (0..1usize << d)
        .map(|mask| (0..d).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect())
        .collect();
    PolytopeDomain::new(cons, &vec![0.0; d], VertexOracle::Enumerated(vertices))
}

type Sampler = Box<dyn Fn(&mut StreamRng) -> Vec<f64>>;

/// A regularizer family together with samplers for `K_ε` and the curvature
/// and radius constants `S = max ‖∇²φ‖`, `K = max ‖x‖` over `K_ε`.
struct Family {
    name: String,
    reg: Regularizer,
    start: Vec<f64>,
    sample: Sampler,
    s: f64,
    k: f64,
}

fn families(eps: f64) -> Result<Vec<Family>> {
    let mut out = Vec::new();
    for &(d, beta) in &[(3usize, 0.5), (5, 1.0), (4, 0.3)] {
        let floor = eps / d as f64;
        let s = if beta == 1.0 { 1.0 / floor } else { beta * floor.powf(beta - 2.0) };
        let mut far = vec![floor; d];
        far[0] = 1.0 - (d - 1) as f64 * floor;
        out.push(Family {
            name: format!("tsallis(beta={beta}, d={d})"),
            reg: Regularizer::tsallis(beta, d)?,
            start: vec![1.0 / d as f64; d],
            sample: Box::new(move |r| simplex_point(d, floor, r)),
            s,
            k: norm(&far),
        });
    }
    for d in [2usize, 4] {
        let r = 1.0 / (1.0 + eps);
        out.push(Family {
            name: format!("ball(d={d})"),
            reg: Domain::ball(d).regularizer(1.0)?,
            start: vec![0.0; d],
            sample: Box::new(move |g| ball_point(d, r, g)),
            s: (2.0 + 2.0 * r * r) / (1.0 - r * r).powi(2),
            k: r,
        });
    }
    for d in [2usize, 3] {
        let dom = Domain::Polytope(box_domain(d)?);
        let reg = dom.regularizer(1.0)?;
        let h = 1.0 / (1.0 + eps);
        let mut s = 0.0f64;
        let mut k = 0.0f64;
        for mask in 0..1usize << d {
            let v: Vec<f64> = (0..d).map(|i| if mask >> i & 1 == 1 { h } else { -h }).collect();
            s = s.max(spectral_norm_sym(&reg.hessian(&v)?)?);
            k = k.max(norm(&v));
        }
        out.push(Family {
            name: format!("box-barrier(d={d})"),
            reg,
            start: vec![0.0; d],
            sample: Box::new(move |g| (0..d).map(|_| g.gen_range(-h..=h)).collect()),
            s,
            k,
        });
    }
    Ok(out)
}

/// `Σ_t B_φ(x_t‖x̄) = Σ_t φ(x_t) − T·φ(x̄)` on random interior sequences.
pub fn check_bregman_mean_identity(sequences: usize, t: usize, seed: u64) -> Result<CheckReport> {
    let fams = families(0.01)?;
    let mut worst = f64::NEG_INFINITY;
    let mut worst_at = String::new();
    for (fi, f) in fams.iter().enumerate() {
        for q in 0..sequences {
            let mut rng = rng_for(seed, fi * 100_000 + q);
            let xs: Vec<Vec<f64>> = (0..t).map(|_| (f.sample)(&mut rng)).collect();
            let mean = crate::linalg::mean_of(&xs);
            let mut lhs = 0.0;
            let mut sum_phi = 0.0;
            for x in &xs {
                lhs += f.reg.bregman(x, &mean)?;
                sum_phi += f.reg.value(x)?;
            }
            let err = (lhs - (sum_phi - t as f64 * f.reg.value(&mean)?)).abs();
            if err > worst {
                worst = err;
                worst_at = f.name.clone();
            }
        }
    }
    Ok(CheckReport::new(
        "bregman-mean-identity",
        fams.len() * sequences,
        worst,
        1e-8 * t as f64,
        format!("max |error| {worst:.3e} ({worst_at})"),
    ))
}

/// Follow-the-leader on Bregman losses over `K_ε`: regret `≤ 8SK²(1 + log T)`.
/// `worst` is the largest ratio of regret to bound minus one.
pub fn check_ftl_bregman_bound(sequences: usize, t: usize, eps: f64, seed: u64) -> Result<CheckReport> {
    let fams = families(eps)?;
    let mut worst = f64::NEG_INFINITY;
    let mut detail = Vec::new();
    for (fi, f) in fams.iter().enumerate() {
        let bound = 8.0 * f.s * f.k * f.k * (1.0 + (t as f64).ln());
        let mut fam_worst = f64::NEG_INFINITY;
        for q in 0..sequences {
            let mut rng = rng_for(seed ^ 0xB1, fi * 100_000 + q);
            // alternate between spread-out sequences and a drifting cluster
            let xs: Vec<Vec<f64>> = if q % 2 == 0 {
                (0..t).map(|_| (f.sample)(&mut rng)).collect()
            } else {
                let a = (f.sample)(&mut rng);
                let b = (f.sample)(&mut rng);
                (0..t).map(|i| crate::linalg::lerp(&a, &b, i as f64 / (t - 1).max(1) as f64)).collect()
            };
            let regret = ftl_bregman_regret(&f.reg, &xs, &f.start)?;
            fam_worst = fam_worst.max(regret / bound);
        }
        detail.push(format!("{}: max regret/bound {fam_worst:.3e}", f.name));
        worst = worst.max(fam_worst - 1.0);
    }
    Ok(CheckReport::new("ftl-bregman-bound", fams.len() * sequences, worst, 0.0, detail.join("; ")))
}

/// `|H_β(x) − H_β′(x)| ≤ d·log(1/ρ₀)·|β − β′|` for points with all
/// coordinates at least `ρ₀`.
pub fn check_entropy_lipschitz(points: usize, betas: usize, floor: f64, seed: u64) -> Result<CheckReport> {
    let grid: Vec<f64> = (1..=betas).map(|j| j as f64 / betas as f64).collect();
    let mut worst = f64::NEG_INFINITY;
    for p in 0..points {
        let mut rng = rng_for(seed ^ 0xC2, p);
        let d = [2usize, 5, 10, 50][p % 4];
        let x = simplex_point(d, floor, &mut rng);
        let lip = d as f64 * (1.0 / floor).ln();
        let h: Vec<f64> = grid.iter().map(|&b| tsallis_entropy(b, &x)).collect::<Result<_>>()?;
        for i in 0..grid.len() {
            for j in i + 1..grid.len() {
                worst = worst.max((h[i] - h[j]).abs() - lip * (grid[i] - grid[j]).abs());
            }
        }
    }
    Ok(CheckReport::new(
        "entropy-lipschitz-in-beta",
        points,
        worst,
        1e-9,
        format!("max excess over the Lipschitz bound {worst:.3e}"),
    ))
}

/// Losses in `[0, 1]`: a drifting per-arm mean plus uniform noise, with the
/// best arm switching halfway.
fn adversarial_mab_losses(d: usize, m: usize, rng: &mut StreamRng) -> Vec<Vec<f64>> {
    let base: Vec<f64> = (0..d).map(|_| rng.gen_range(0.2..0.8)).collect();
    let flip = rng.gen_range(0..d);
    (0..m)
        .map(|i| {
            (0..d)
                .map(|a| {
                    let mut mu = base[a];
                    if a == flip && i >= m / 2 {
                        mu = 0.05;
                    }
                    (mu + rng.gen_range(-0.2..0.2)).clamp(0.0, 1.0)
                })
                .collect()
        })
        .collect()
}

/// The per-transcript Tsallis FTRL estimated-regret bound against every
/// vertex and random simplex comparators. `worst` is the largest
/// `lhs − rhs`; tolerance `1e-6·m`.
pub fn check_mab_transcript_bound(dims: &[usize], seeds: usize, m: usize, seed: u64) -> Result<CheckReport> {
    let mut worst = f64::NEG_INFINITY;
    let mut cases = 0;
    for &d in dims {
        let df = d as f64;
        let mut betas = vec![(1.0 / df.ln()).min(1.0), 0.5, 1.0];
        betas.dedup();
        for &beta in &betas {
            for s in 0..seeds {
                let mut rng = rng_for(seed ^ 0xC1, d * 1_000_000 + (beta * 1000.0) as usize * 1000 + s);
                let losses = adversarial_mab_losses(d, m, &mut rng);
                let init = simplex_point(d, 0.2 / df, &mut rng);
                let eta = exp3_theta(d, m).eta * [0.5, 1.0, 2.0][s % 3];
                let gamma = if s % 4 == 3 { 0.01 } else { 0.0 };
                let cfg = MabTaskConfig { d, m, eta, beta, gamma, init };
                let t = run_mab_task(&cfg, &losses, &mut rng)?;
                let mut comparators: Vec<Vec<f64>> = (0..d)
                    .map(|a| {
                        let mut e = vec![0.0; d];
                        e[a] = 1.0;
                        e
                    })
                    .collect();
                comparators.extend((0..3).map(|_| simplex_point(d, 0.0, &mut rng)));
                for x in &comparators {
                    let (lhs, rhs) = mab_sides(&cfg, &t, x)?;
                    worst = worst.max(lhs - rhs);
                }
                cases += 1;
            }
        }
    }
    Ok(CheckReport::new(
        "mab-estimated-regret-bound",
        cases,
        worst,
        1e-6 * m as f64,
        format!("max (lhs - rhs) {worst:.3e}"),
    ))
}

/// The barrier FTRL estimated-regret bound `B_φ(x*‖x₁)/η + 32d²ηm` on the
/// ball, against random comparators in `K_ε` with `ε = 1/m`.
pub fn check_blo_transcript_bound(dims: &[usize], seeds: usize, m: usize, comparators: usize, seed: u64) -> Result<CheckReport> {
    let mut worst = f64::NEG_INFINITY;
    let mut cases = 0;
    let eps = 1.0 / m as f64;
    for &d in dims {
        let dom = Domain::ball(d);
        let barrier = dom.regularizer(1.0)?;
        let base_eta = blo_baseline_eta(&dom, m)?;
        for s in 0..seeds {
            let mut rng = rng_for(seed ^ 0xD1, d * 1_000_000 + s);
            let dir = ball_point(d, 1.0, &mut rng);
            let losses: Vec<Vec<f64>> = (0..m)
                .map(|i| {
                    let mut l: Vec<f64> = dir.iter().map(|v| v + 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
                    if i >= m / 2 {
                        l.iter_mut().for_each(|v| *v = -*v);
                    }
                    let n = norm(&l).max(1.0);
                    l.iter().map(|v| v / n).collect()
                })
                .collect();
            let init = ball_point(d, 0.5, &mut rng);
            let eta = base_eta * [0.5, 1.0, 2.0][s % 3];
            let cfg = BloTaskConfig { barrier: barrier.clone(), eta, m, init };
            let t = run_blo_task_linear(&cfg, &losses, &mut rng)?;
            let r = 1.0 / (1.0 + eps);
            for c in 0..comparators {
                let x = if c == 0 {
                    // the boundary of K_ε in the direction of the best response
                    let sum: Vec<f64> = (0..d).map(|k| losses.iter().map(|l| l[k]).sum::<f64>()).collect();
                    let n = norm(&sum).max(1e-300);
                    sum.iter().map(|v| -v * r / n).collect()
                } else {
                    ball_point(d, r, &mut rng)
                };
                let (lhs, rhs) = blo_sides(&cfg, &t, &x)?;
                worst = worst.max(lhs - rhs);
            }
            cases += 1;
        }
    }
    Ok(CheckReport::new(
        "blo-estimated-regret-bound",
        cases,
        worst,
        1e-6 * m as f64,
        format!("max (lhs - rhs) {worst:.3e}"),
    ))
}

/// Exact expectations of both loss estimators by enumerating every outcome:
/// `E[ℓ̂(a)] = p_a·ℓ(a)/(p_a + γ)` for the bandit estimator and `E[ℓ̂] = ℓ`
/// over the `2d` Dikin endpoints.
pub fn check_estimators_exact(points: usize, seed: u64) -> Result<CheckReport> {
    let mut worst_mab = 0.0f64;
    let mut worst_blo = 0.0f64;
    for p in 0..points {
        let mut rng = rng_for(seed ^ 0xE1, p);
        let d = [2usize, 3, 5, 10][p % 4];
        let probs = simplex_point(d, 1e-3, &mut rng);
        let loss: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
        for gamma in [0.0, 0.05] {
            let mut mean = vec![0.0; d];
            for arm in 0..d {
                let est = mab_loss_estimator(loss[arm], arm, &probs, gamma)?;
                for (mi, e) in mean.iter_mut().zip(&est) {
                    *mi += probs[arm] * e;
                }
            }
            for a in 0..d {
                worst_mab = worst_mab.max((mean[a] - probs[a] * loss[a] / (probs[a] + gamma)).abs());
            }
        }

        let (dom, x) = if p % 2 == 0 {
            let dd = [2usize, 3, 5][p % 3];
            (Domain::ball(dd), ball_point(dd, 0.95, &mut rng))
        } else {
            let dd = [2usize, 3][p % 2];
            let x = (0..dd).map(|_| rng.gen_range(-0.9..0.9)).collect();
            (Domain::Polytope(box_domain(dd)?), x)
        };
        let dd = dom.dim();
        let barrier = dom.regularizer(1.0)?;
        let lin: Vec<f64> = ball_point(dd, 1.0, &mut rng);
        let eig = jacobi_eigen(&barrier.hessian(&x)?)?;
        let mut mean = vec![0.0; dd];
        for i in 0..dd {
            for sign in [1.0, -1.0] {
                let s = dikin_endpoint(&x, &eig.values, &eig.vectors, i, sign)?;
                let est = blo_loss_estimator(dot(&lin, &s.y), s.sign, s.lambda, &s.v, dd);
                for (mi, e) in mean.iter_mut().zip(&est) {
                    *mi += e / (2 * dd) as f64;
                }
            }
        }
        for k in 0..dd {
            worst_blo = worst_blo.max((mean[k] - lin[k]).abs());
        }
    }
    let worst = (worst_mab / 1e-12).max(worst_blo / 1e-10);
    Ok(CheckReport::new(
        "estimator-exact-expectation",
        points,
        worst,
        1.0,
        format!("bandit max error {worst_mab:.3e} (tol 1e-12), Dikin max error {worst_blo:.3e} (tol 1e-10)"),
    ))
}

/// A random DAG with at most `max_edges` edges whose every edge lies on a
/// source-sink path.
pub fn random_dag<R: Rng + ?Sized>(max_edges: usize, rng: &mut R) -> Result<Dag> {
    loop {
        let n = rng.gen_range(3..=6usize);
        let mut edges = Vec::new();
        // a backbone path keeps the sink reachable
        for v in 0..n - 1 {
            edges.push((v, v + 1));
        }
        for u in 0..n {
            for v in u + 2..n {
                if rng.gen::<f64>() < 0.5 {
                    edges.push((u, v));
                }
            }
        }
        if rng.gen::<f64>() < 0.3 {
            edges.push((0, n - 1));
        }
        if edges.len() <= max_edges {
            return Dag::new(n, edges, 0, n - 1);
        }
    }
}

/// Forward-propagated path probabilities reproduce the flow, and the DAG
/// shortest path matches brute-force path enumeration.
pub fn check_flow_sampling(dags: usize, max_edges: usize, seed: u64) -> Result<CheckReport> {
    let mut worst_flow = 0.0f64;
    let mut worst_sp = 0.0f64;
    for g in 0..dags {
        let mut rng = rng_for(seed ^ 0xF1, g);
        let dag = random_dag(max_edges, &mut rng)?;
        let paths = dag.enumerate_paths();
        let w: Vec<f64> = paths.iter().map(|_| -rng.gen::<f64>().ln()).collect();
        let total: f64 = w.iter().sum();
        let mut flow = vec![0.0; dag.n_edges()];
        for (p, wp) in paths.iter().zip(&w) {
            for (f, ind) in flow.iter_mut().zip(dag.path_indicator(p)) {
                *f += wp / total * ind;
            }
        }
        let marg = walk_edge_marginals(&dag, &flow)?;
        for (a, b) in marg.iter().zip(&flow) {
            worst_flow = worst_flow.max((a - b).abs());
        }
        for _ in 0..5 {
            let weights: Vec<f64> = (0..dag.n_edges()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let best = paths.iter().map(|p| path_weight(p, &weights)).fold(f64::INFINITY, f64::min);
            let sp = dag_shortest_path(&dag, &weights)?;
            worst_sp = worst_sp.max((path_weight(&sp, &weights) - best).abs());
        }
    }
    let worst = (worst_flow / 1e-10).max(worst_sp / 1e-12);
    Ok(CheckReport::new(
        "flow-sampling-and-shortest-path",
        dags,
        worst,
        1.0,
        format!("marginal max error {worst_flow:.3e} (tol 1e-10), shortest-path max gap {worst_sp:.3e}"),
    ))
}

/// Suite sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// Reduced sizes for a quick smoke run.
    Quick,
    /// The sizes used by the acceptance suite.
    Full,
}

pub fn run_all(scale: Scale, seed: u64) -> Result<Vec<CheckReport>> {
    let full = scale == Scale::Full;
    let pick = |q: usize, f: usize| if full { f } else { q };
    Ok(vec![
        check_bregman_mean_identity(pick(10, 100), 50, seed)?,
        check_ftl_bregman_bound(pick(10, 100), 200, 0.1, seed)?,
        check_entropy_lipschitz(pick(100, 1000), 50, 1e-3, seed)?,
        check_mab_transcript_bound(&[2, 5, 10], pick(3, 50), pick(200, 1000), seed)?,
        check_blo_transcript_bound(&[2, 5], pick(3, 50), pick(200, 1000), 20, seed)?,
        check_estimators_exact(100, seed)?,
        check_flow_sampling(50, 12, seed)?,
    ])
}
