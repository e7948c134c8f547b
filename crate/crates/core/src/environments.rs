//! Oblivious task generators with a similarity knob: sparse optimal arms for
//! the bandit, clustered loss directions on the ball, and a favored path in
//! a DAG. Every generator returns the full `T × m × dim` loss tensor before
//! any learner runs.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::rng::{stream, Purpose, StreamRng};
use crate::shortestpath::Dag;

/// `tensor[t][i]` is the loss vector of round `i` in task `t`.
pub type LossTensor = Vec<Vec<Vec<f64>>>;

/// Task index reserved for draws shared by every task.
const GLOBAL: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MabEnvSpec {
    pub d: usize,
    pub m: usize,
    #[serde(rename = "T")]
    pub t: usize,
    /// Size of the arm subset that optimal arms are drawn from.
    pub s: usize,
    pub gap: f64,
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereEnvSpec {
    pub d: usize,
    pub m: usize,
    #[serde(rename = "T")]
    pub t: usize,
    /// Spread of per-task directions around the shared one: 0 makes every
    /// task identical, 1 draws each task's direction uniformly.
    pub concentration: f64,
    /// Norm of the per-task mean loss.
    #[serde(default = "default_magnitude")]
    pub magnitude: f64,
    /// Scale of the per-round Gaussian perturbation.
    #[serde(default)]
    pub perturbation: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_magnitude() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathEnvSpec {
    pub dag: Dag,
    pub m: usize,
    #[serde(rename = "T")]
    pub t: usize,
    /// Probability that a task favors a uniformly drawn path instead of the
    /// shared favored path.
    #[serde(default)]
    pub shuffle: f64,
    /// Index into [`Dag::enumerate_paths`]; drawn from the seed when absent.
    #[serde(default)]
    pub favored_path: Option<usize>,
    /// Per-edge uniform perturbation, relative to the edge loss scale.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

fn check_common(m: usize, t: usize) -> Result<()> {
    if m == 0 || t == 0 {
        return Err(Error::InvalidParameter("m and T must be positive".into()));
    }
    Ok(())
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {v}")))
    }
}

impl MabEnvSpec {
    pub fn validate(&self) -> Result<()> {
        check_common(self.m, self.t)?;
        if self.s == 0 || self.s > self.d {
            return Err(Error::InvalidParameter(format!("s must lie in [1, d], got {}", self.s)));
        }
        check_unit("gap", self.gap)?;
        check_unit("noise", self.noise)
    }

    /// The favored arm subset, sorted.
    pub fn favored_arms(&self) -> Vec<usize> {
        let mut rng = stream(self.seed, GLOBAL, Purpose::Environment);
        let mut arms = sample(&mut rng, self.d, self.s).into_vec();
        arms.sort_unstable();
        arms
    }
}

impl SphereEnvSpec {
    pub fn validate(&self) -> Result<()> {
        check_common(self.m, self.t)?;
        if self.d == 0 {
            return Err(Error::InvalidParameter("d must be positive".into()));
        }
        check_unit("concentration", self.concentration)?;
        check_unit("magnitude", self.magnitude)?;
        if !(self.perturbation >= 0.0 && self.perturbation.is_finite()) {
            return Err(Error::InvalidParameter("perturbation must be nonnegative".into()));
        }
        Ok(())
    }
}

impl PathEnvSpec {
    pub fn validate(&self) -> Result<()> {
        check_common(self.m, self.t)?;
        check_unit("shuffle", self.shuffle)?;
        check_unit("noise", self.noise)?;
        if let Some(p) = self.favored_path {
            let n = self.dag.enumerate_paths().len();
            if p >= n {
                return Err(Error::InvalidParameter(format!("favored path {p} out of range ({n} paths)")));
            }
        }
        Ok(())
    }

    pub fn favored_path(&self) -> Vec<usize> {
        let paths = self.dag.enumerate_paths();
        let idx = self.favored_path.unwrap_or_else(|| {
            stream(self.seed, GLOBAL, Purpose::Environment).gen_range(0..paths.len())
        });
        paths[idx].clone()
    }
}

/// Per task, an optimal arm drawn from the favored subset gets mean loss
/// `0.5 − gap/2` and every other arm `0.5 + gap/2`; each entry adds
/// `U[−noise, noise]` and is clipped to `[0, 1]`.
pub fn gen_mab_tasks(spec: &MabEnvSpec) -> Result<LossTensor> {
    spec.validate()?;
    let favored = spec.favored_arms();
    Ok((0..spec.t)
        .map(|task| {
            let mut rng = stream(spec.seed, task as u64, Purpose::Environment);
            let best = favored[rng.gen_range(0..favored.len())];
            (0..spec.m)
                .map(|_| {
                    (0..spec.d)
                        .map(|a| {
                            let mean = if a == best { 0.5 - spec.gap / 2.0 } else { 0.5 + spec.gap / 2.0 };
                            (mean + uniform_sym(&mut rng, spec.noise)).clamp(0.0, 1.0)
                        })
                        .collect()
                })
                .collect()
        })
        .collect())
}

fn uniform_sym(rng: &mut StreamRng, scale: f64) -> f64 {
    if scale == 0.0 {
        0.0
    } else {
        scale * (2.0 * rng.gen::<f64>() - 1.0)
    }
}

fn unit_gaussian(rng: &mut StreamRng, d: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&g);
        if n > 1e-12 {
            return g.iter().map(|v| v / n).collect();
        }
    }
}

/// Per task, direction `normalize((1−c)·u + c·g)` for a shared unit `u` and a
/// task-specific uniform unit `g`; per round, `magnitude·dir + perturbation·ξ`
/// with Gaussian `ξ`, rescaled to norm at most 1.
pub fn gen_sphere_tasks(spec: &SphereEnvSpec) -> Result<LossTensor> {
    spec.validate()?;
    let shared = unit_gaussian(&mut stream(spec.seed, GLOBAL, Purpose::Environment), spec.d);
    let c = spec.concentration;
    Ok((0..spec.t)
        .map(|task| {
            let mut rng = stream(spec.seed, task as u64, Purpose::Environment);
            let g = unit_gaussian(&mut rng, spec.d);
            let mut dir: Vec<f64> = shared.iter().zip(&g).map(|(u, v)| (1.0 - c) * u + c * v).collect();
            let n = norm(&dir);
            if n > 1e-12 {
                dir.iter_mut().for_each(|v| *v /= n);
            } else {
                dir = g;
            }
            (0..spec.m)
                .map(|_| {
                    let mut l: Vec<f64> = dir
                        .iter()
                        .map(|v| {
                            let xi: f64 = if spec.perturbation > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
                            spec.magnitude * v + spec.perturbation * xi
                        })
                        .collect();
                    let n = norm(&l);
                    if n > 1.0 {
                        l.iter_mut().for_each(|v| *v /= n);
                    }
                    l
                })
                .collect()
        })
        .collect())
}

/// Per task, edges on the task's favored path cost `−1/L` and all others
/// `+1/L` (`L` the longest path length in edges), each perturbed by
/// `U[−noise, noise]/L` and clipped to `[−1/L, 1/L]`, so every path total lies
/// in `[−1, 1]`.
pub fn gen_path_tasks(spec: &PathEnvSpec) -> Result<LossTensor> {
    spec.validate()?;
    let paths = spec.dag.enumerate_paths();
    let favored = spec.favored_path();
    let scale = 1.0 / spec.dag.longest_path_edges() as f64;
    let n_edges = spec.dag.n_edges();
    Ok((0..spec.t)
        .map(|task| {
            let mut rng = stream(spec.seed, task as u64, Purpose::Environment);
            let path = if spec.shuffle > 0.0 && rng.gen::<f64>() < spec.shuffle {
                paths[rng.gen_range(0..paths.len())].clone()
            } else {
                favored.clone()
            };
            let mut on = vec![false; n_edges];
            for e in path {
                on[e] = true;
            }
            (0..spec.m)
                .map(|_| {
                    on.iter()
                        .map(|&b| {
                            let base = if b { -1.0 } else { 1.0 };
                            scale * (base + uniform_sym(&mut rng, spec.noise)).clamp(-1.0, 1.0)
                        })
                        .collect()
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shortestpath::{dag_shortest_path, path_weight};

    fn mab(s: usize, gap: f64, noise: f64) -> MabEnvSpec {
        MabEnvSpec { d: 6, m: 20, t: 15, s, gap, noise, seed: 3 }
    }

    fn column_argmin(task: &[Vec<f64>]) -> usize {
        let d = task[0].len();
        let sums: Vec<f64> = (0..d).map(|a| task.iter().map(|r| r[a]).sum()).collect();
        (0..d).min_by(|&a, &b| sums[a].total_cmp(&sums[b])).unwrap()
    }

    #[test]
    fn single_favored_arm_is_always_optimal() {
        let tasks = gen_mab_tasks(&mab(1, 0.4, 0.0)).unwrap();
        let first = column_argmin(&tasks[0]);
        assert!(tasks.iter().all(|t| column_argmin(t) == first));
    }

    #[test]
    fn no_gap_no_noise_is_flat() {
        let tasks = gen_mab_tasks(&mab(6, 0.0, 0.0)).unwrap();
        assert!(tasks.iter().flatten().flatten().all(|&v| v == 0.5));
    }

    #[test]
    fn generators_are_deterministic_and_in_range() {
        let spec = mab(2, 0.4, 0.3);
        let a = gen_mab_tasks(&spec).unwrap();
        assert_eq!(a, gen_mab_tasks(&spec).unwrap());
        assert!(a.iter().flatten().flatten().all(|&v| (0.0..=1.0).contains(&v)));
        let optima: std::collections::BTreeSet<usize> = a.iter().map(|t| column_argmin(t)).collect();
        assert!(optima.is_subset(&spec.favored_arms().into_iter().collect()));
    }

    #[test]
    fn identical_sphere_tasks_without_spread() {
        let spec = SphereEnvSpec { d: 3, m: 5, t: 4, concentration: 0.0, magnitude: 0.8, perturbation: 0.0, seed: 1 };
        let tasks = gen_sphere_tasks(&spec).unwrap();
        let first = tasks[0][0].clone();
        assert!(tasks.iter().flatten().all(|l| *l == first));
        assert!((norm(&first) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn sphere_losses_have_norm_at_most_one() {
        let spec = SphereEnvSpec { d: 4, m: 50, t: 20, concentration: 0.7, magnitude: 1.0, perturbation: 0.5, seed: 2 };
        for l in gen_sphere_tasks(&spec).unwrap().iter().flatten() {
            assert!(norm(l) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn parallel_edges_keep_one_shortest_path() {
        let dag = Dag::new(2, vec![(0, 1), (0, 1)], 0, 1).unwrap();
        let spec = PathEnvSpec { dag: dag.clone(), m: 10, t: 8, shuffle: 0.0, favored_path: Some(0), noise: 0.5, seed: 4 };
        for task in gen_path_tasks(&spec).unwrap() {
            let total: Vec<f64> = (0..2).map(|e| task.iter().map(|r| r[e]).sum()).collect();
            assert_eq!(dag_shortest_path(&dag, &total).unwrap(), vec![0]);
        }
        assert_eq!(gen_path_tasks(&spec).unwrap(), gen_path_tasks(&spec).unwrap());
    }

    #[test]
    fn path_totals_bounded_by_longest_path() {
        // 0→1→2→3 plus shortcut 0→3
        let dag = Dag::new(4, vec![(0, 1), (1, 2), (2, 3), (0, 3)], 0, 3).unwrap();
        assert_eq!(dag.longest_path_edges(), 3);
        let spec = PathEnvSpec { dag: dag.clone(), m: 30, t: 10, shuffle: 0.5, favored_path: None, noise: 1.0, seed: 9 };
        let paths = dag.enumerate_paths();
        for row in gen_path_tasks(&spec).unwrap().iter().flatten() {
            let max_edge = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(max_edge * dag.longest_path_edges() as f64 <= 1.0 + 1e-12);
            for p in &paths {
                assert!(path_weight(p, row).abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn cyclic_graph_is_rejected() {
        let text = r#"{"dag": {"vertices": 3, "edges": [[0,1],[1,2],[2,1]], "source": 0, "sink": 2}, "m": 5, "T": 2}"#;
        assert!(serde_json::from_str::<PathEnvSpec>(text).is_err());
    }
}
