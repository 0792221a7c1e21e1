//! Browser bindings. Every function returns a JSON string so the page needs
//! no generated type glue beyond `wasm-bindgen`'s string passing.
//!
//! The `*_json` functions are plain Rust and are what the native tests call.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use rydberg_dqc::circuit::Readout;
use rydberg_dqc::pipeline::{self, baseline_comparison, solution_curve, sweep_grid, RunSettings};
use rydberg_dqc::problem::Problem;
use rydberg_dqc::sampling::ShotConfig;
use rydberg_dqc::smoothing::SmootherConfig;

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

fn points(n: u32) -> usize {
    (n as usize).clamp(3, 2000)
}

/// Scaled model output at `theta` next to the analytic solution.
pub fn model_curve_json(theta: f64, n: u32) -> Result<String, String> {
    let problem = Problem::benchmark();
    let xs = sweep_grid(&problem, points(n));
    to_json(&solution_curve(&problem, theta, &xs, 1).map_err(|e| e.to_string())?)
}

/// Shift-rule, smoothed and exact derivatives of the scaled model.
pub fn derivative_comparison_json(theta: f64, n: u32, lambda: f64) -> Result<String, String> {
    #[derive(Serialize)]
    struct Row {
        x: f64,
        shift_rule: f64,
        smoothed: f64,
        exact: f64,
    }
    #[derive(Serialize)]
    struct Out {
        rows: Vec<Row>,
        relative_rms: f64,
    }
    let problem = Problem::benchmark();
    let xs = sweep_grid(&problem, points(n));
    let smoother = SmootherConfig::new(lambda, problem.smoothing.order);
    let b = baseline_comparison(&problem, theta, &xs, &smoother, 1).map_err(|e| e.to_string())?;
    let m = problem.scaling.multiplier;
    let a: Vec<f64> = b.iter().map(|r| r.df_shift_rule).collect();
    let s: Vec<f64> = b.iter().map(|r| r.df_smoothed).collect();
    let rows = b.iter().map(|r| Row { x: r.x, shift_rule: m * r.df_shift_rule, smoothed: m * r.df_smoothed, exact: m * r.df_exact }).collect();
    to_json(&Out { rows, relative_rms: pipeline::relative_rms(&a, &s) })
}

/// Full closed loop; `shots == 0` means exact readout.
pub fn closed_loop_json(shots: u32, seed: u64) -> Result<String, String> {
    #[derive(Serialize)]
    struct Loss {
        theta: f64,
        sqrt_l_d: f64,
        l_b: f64,
        total: f64,
    }
    #[derive(Serialize)]
    struct Out {
        sequences: usize,
        theta_opt: f64,
        x_opt: Option<f64>,
        x_bar: f64,
        losses: Vec<Loss>,
        derivatives: Vec<(f64, f64, f64)>,
    }
    let problem = Problem::benchmark();
    let readout = if shots == 0 { Readout::Exact } else { Readout::Sampled(ShotConfig { shots: shots as u64, ..Default::default() }) };
    let r = pipeline::run(&problem, &RunSettings { readout, seed, jobs: 1 }).map_err(|e| e.to_string())?;
    let x_bar = problem.equation.analytic_extremum().map_err(|e| e.to_string())?.x;
    to_json(&Out {
        sequences: r.sequences,
        theta_opt: r.theta_opt,
        x_opt: r.qel.as_ref().map(|q| q.extremum.x_opt),
        x_bar,
        losses: r.losses.iter().map(|l| Loss { theta: l.theta, sqrt_l_d: l.sqrt_l_d(), l_b: l.l_b, total: l.total }).collect(),
        derivatives: r.qel.map(|q| q.derivatives).unwrap_or_default(),
    })
}

#[wasm_bindgen]
pub fn model_curve(theta: f64, n: u32) -> Result<String, JsValue> {
    model_curve_json(theta, n).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn derivative_comparison(theta: f64, n: u32, lambda: f64) -> Result<String, JsValue> {
    derivative_comparison_json(theta, n, lambda).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn closed_loop(shots: u32, seed: u64) -> Result<String, JsValue> {
    closed_loop_json(shots, seed).map_err(|e| JsValue::from_str(&e))
}
