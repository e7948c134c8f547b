use metabandit_web::{ball_trajectory, mab_meta_curve, tsallis_step};

#[test]
fn tsallis_step_returns_a_distribution() {
    let p: Vec<f64> = serde_json::from_str(&tsallis_step(&[0.5, 0.5], &[1.0, 0.0], 1.0, 1.0).unwrap()).unwrap();
    let e = std::f64::consts::E;
    assert!((p[0] - 1.0 / (1.0 + e)).abs() < 1e-12);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(tsallis_step(&[0.5, 0.5], &[1.0], 1.0, 1.0).is_err());
}

#[test]
fn meta_curve_has_one_point_per_task() {
    let v: serde_json::Value = serde_json::from_str(&mab_meta_curve(5, 1, 0.4, 50, 8, 2, 3).unwrap()).unwrap();
    assert_eq!(v["meta"].as_array().unwrap().len(), 8);
    assert_eq!(v["exp3"].as_array().unwrap().len(), 8);
    assert!(mab_meta_curve(0, 1, 0.4, 50, 8, 2, 3).is_err());
}

#[test]
fn ball_trajectory_moves_against_the_loss() {
    let v: serde_json::Value = serde_json::from_str(&ball_trajectory(0.0, 0.0, 0.0, 1.0, 0.05, 100, 1).unwrap()).unwrap();
    let centers = v["centers"].as_array().unwrap();
    assert_eq!(centers.len(), 100);
    let last = centers.last().unwrap().as_array().unwrap();
    assert!(last[0].as_f64().unwrap() < -0.1);
    for p in v["plays"].as_array().unwrap() {
        let p: Vec<f64> = serde_json::from_value(p.clone()).unwrap();
        assert!(p[0] * p[0] + p[1] * p[1] < 1.0);
    }
    assert!(ball_trajectory(0.0, 0.0, 0.0, 2.0, 0.05, 10, 1).is_err());
}
