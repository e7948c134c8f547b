//! Browser bindings: each export takes plain numbers and returns a JSON
//! string, or throws with the error message.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use metabandit::blo::{run_blo_task_linear, BloTaskConfig};
use metabandit::environments::MabEnvSpec;
use metabandit::experiment::{run_experiment, Baseline, EnvSpec, ExperimentConfig, MetaConfig, Mode};
use metabandit::geometry::Domain;
use metabandit::mab::mab_ftrl_step;
use metabandit::meta::Regime;
use metabandit::metrics::cumulative_average;
use metabandit::rng::{stream, Purpose};

fn json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// One Tsallis FTRL step from `init` after cumulative estimated loss `loss`.
pub fn tsallis_step(init: &[f64], loss: &[f64], eta: f64, beta: f64) -> Result<String, String> {
    let p = mab_ftrl_step(init, loss, eta, beta).map_err(|e| e.to_string())?;
    json(&p)
}

#[derive(Serialize)]
struct Curves {
    meta: Vec<f64>,
    exp3: Vec<f64>,
    theta_eta: Vec<f64>,
    theta_beta: Vec<f64>,
    entropy: f64,
}

/// Cumulative task-averaged regret of the meta learner and of Exp3 on a
/// bandit environment where `s` of the `d` arms can be optimal.
pub fn mab_meta_curve(d: usize, s: usize, gap: f64, m: usize, t: usize, k: usize, seed: u64) -> Result<String, String> {
    let cfg = ExperimentConfig {
        mode: Mode::Mab,
        env: EnvSpec::Mab(MabEnvSpec { d, m, t, s, gap, noise: 0.1, seed }),
        replicas: vec![seed],
        meta: MetaConfig { regime: Regime::Full, k: Some(k), ..MetaConfig::default() },
        baselines: vec![Baseline::Exp3],
    };
    let b = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let r = &b.replicas[0];
    let exp3: Vec<f64> = r.baselines[0].records.iter().map(|x| x.regret).collect();
    json(&Curves {
        meta: cumulative_average(&r.meta_regrets()),
        exp3: cumulative_average(&exp3),
        theta_eta: r.meta.iter().map(|x| x.theta.eta).collect(),
        theta_beta: r.meta.iter().map(|x| x.theta.beta).collect(),
        entropy: r.similarity.entropy.last().map_or(f64::NAN, |x| x.1),
    })
}

#[derive(Serialize)]
struct Trajectory {
    centers: Vec<Vec<f64>>,
    plays: Vec<Vec<f64>>,
}

/// Barrier FTRL on the unit disk from `(x0, y0)` against the constant loss
/// direction `angle` (radians) scaled by `magnitude ≤ 1`.
pub fn ball_trajectory(x0: f64, y0: f64, angle: f64, magnitude: f64, eta: f64, m: usize, seed: u64) -> Result<String, String> {
    if !(0.0..=1.0).contains(&magnitude) {
        return Err(format!("magnitude must lie in [0, 1], got {magnitude}"));
    }
    let loss = vec![magnitude * angle.cos(), magnitude * angle.sin()];
    let cfg = BloTaskConfig {
        barrier: Domain::ball(2).regularizer(1.0).map_err(|e| e.to_string())?,
        eta,
        m,
        init: vec![x0, y0],
    };
    let mut rng = stream(seed, 0, Purpose::Learner);
    let t = run_blo_task_linear(&cfg, &vec![loss; m], &mut rng).map_err(|e| e.to_string())?;
    json(&Trajectory { centers: t.centers, plays: t.plays })
}

#[wasm_bindgen(js_name = tsallisStep)]
pub fn tsallis_step_js(init: Vec<f64>, loss: Vec<f64>, eta: f64, beta: f64) -> Result<String, JsValue> {
    tsallis_step(&init, &loss, eta, beta).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = mabMetaCurve)]
pub fn mab_meta_curve_js(d: usize, s: usize, gap: f64, m: usize, t: usize, k: usize, seed: u64) -> Result<String, JsValue> {
    mab_meta_curve(d, s, gap, m, t, k, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = ballTrajectory)]
pub fn ball_trajectory_js(x0: f64, y0: f64, angle: f64, magnitude: f64, eta: f64, m: usize, seed: u64) -> Result<String, JsValue> {
    ball_trajectory(x0, y0, angle, magnitude, eta, m, seed).map_err(|e| JsValue::from_str(&e))
}
