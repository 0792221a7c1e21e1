use rydberg_dqc_demo::{closed_loop_json, derivative_comparison_json, model_curve_json};
use serde_json::Value;

#[test]
fn model_curve_has_requested_points() {
    let v: Value = serde_json::from_str(&model_curve_json(2.79, 25).unwrap()).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 25);
    assert!(rows.iter().all(|r| r["f_model"].is_f64() && r["f_exact"].is_f64()));
}

#[test]
fn derivative_comparison_agrees() {
    let v: Value = serde_json::from_str(&derivative_comparison_json(2.79, 121, 10.0).unwrap()).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 121);
    assert!(v["relative_rms"].as_f64().unwrap() < 0.1);
    assert!(derivative_comparison_json(2.79, 50, -1.0).is_err());
}

#[test]
fn closed_loop_picks_the_expected_phase() {
    let v: Value = serde_json::from_str(&closed_loop_json(0, 0).unwrap()).unwrap();
    assert_eq!(v["sequences"], 308);
    assert_eq!(v["theta_opt"], 2.79);
    assert_eq!(v["losses"].as_array().unwrap().len(), 9);
    let sampled: Value = serde_json::from_str(&closed_loop_json(200, 3).unwrap()).unwrap();
    assert_eq!(sampled["sequences"], 308);
}
