//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use rydberg_dqc::calibration::{fit_detuning_offset, CalibrationSettings, Observation};
use rydberg_dqc::circuit::{build_sequence, plan_experiment, run_circuit, Readout};
use rydberg_dqc::gpsr::{gpsr_derivative, GapSet, ShiftSet};
use rydberg_dqc::pipeline::{baseline_comparison, relative_rms, run, sweep_grid, RunSettings};
use rydberg_dqc::problem::Problem;
use rydberg_dqc::quantum::{evolve_constant, evolve_stepped, expectation, total_magnetization, StateVector};
use rydberg_dqc::rydberg::{build_hamiltonian, interaction_strength, c6_from_ghz, C6_DEFAULT};
use rydberg_dqc::sampling::{derive_seed, magnetization_estimate, measure, MagnetizationEstimate, ShotConfig};
use rydberg_dqc::smoothing::{normal_equation_residual, whittaker_smooth, SmootherConfig};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Debug>(e: E) -> String {
    format!("{e:?}")
}

fn end_to_end() -> Outcome {
    let problem = Problem::benchmark();
    let start = Instant::now();
    let result = run(&problem, &RunSettings::default()).map_err(err)?;
    let elapsed = start.elapsed().as_secs_f64();
    let x_bar = problem.equation.analytic_extremum().map_err(err)?.x;
    let x_opt = result.qel.as_ref().ok_or("no extremization stage")?.extremum.x_opt;
    check(
        result.theta_opt == 2.79 && (x_opt - x_bar).abs() <= 0.238 && elapsed < 60.0,
        format!("theta_opt = {}, x_opt = {x_opt:.3}, x_bar = {x_bar:.3}, {elapsed:.2} s", result.theta_opt),
    )
}

fn sequence_count() -> Outcome {
    let plan = plan_experiment(&Problem::benchmark().plan_request());
    let at_opt = plan.at_theta(2.79).count();
    check(plan.len() == 308 && at_opt == 52, format!("total {}, at theta = 2.79: {at_opt}", plan.len()))
}

fn gpsr_exactness() -> Outcome {
    let gaps = GapSet::new(&[1.0, 2.0]).map_err(err)?;
    let shifts = ShiftSet::benchmark();
    let mut worst: f64 = 0.0;
    for (a, b, c, p, q) in [(0.3, -1.2, 0.7, 0.4, 1.9), (1.0, 0.0, -0.5, 2.2, 0.1), (-0.6, 0.9, 0.0, 0.0, 3.0)] {
        let f = move |x: f64| a + b * (x + p).cos() + c * (2.0 * x + q).sin();
        let df = move |x: f64| -b * (x + p).sin() + 2.0 * c * (2.0 * x + q).cos();
        for k in 0..40 {
            let x = -3.0 + 0.17 * k as f64;
            let d = gpsr_derivative(|x| Ok(MagnetizationEstimate::exact(f(x))), x, &gaps, &shifts).map_err(err)?;
            worst = worst.max((d.value - df(x)).abs());
        }
    }
    // Single gap: f'(x) = [f(x + s) - f(x - s)] * w / (2 sin(w s)).
    let mut psr_diff: f64 = 0.0;
    for (w, s) in [(1.0, PI / 2.0), (1.0, 0.9), (2.0, 0.3)] {
        let g = GapSet::new(&[w]).map_err(err)?;
        let sh = ShiftSet::new(&[s]).map_err(err)?;
        let f = |x: f64| (w * x + 0.4).sin();
        for x in [0.0, 0.5, 1.3] {
            let d = gpsr_derivative(|x| Ok(MagnetizationEstimate::exact(f(x))), x, &g, &sh).map_err(err)?;
            let textbook = w * (f(x + s) - f(x - s)) / (2.0 * (w * s).sin());
            psr_diff = psr_diff.max((d.value - textbook).abs());
        }
    }
    check(worst < 1e-9 && psr_diff < 1e-12, format!("max error {worst:.2e}, textbook difference {psr_diff:.2e}"))
}

fn baseline_agreement() -> Outcome {
    let problem = Problem::benchmark();
    let xs = sweep_grid(&problem, 121);
    let smoother = SmootherConfig::new(problem.smoothing.lambda, problem.smoothing.order);
    let mut worst: f64 = 0.0;
    for &theta in &problem.grids.thetas {
        let rows = baseline_comparison(&problem, theta, &xs, &smoother, 4).map_err(err)?;
        let a: Vec<f64> = rows.iter().map(|r| r.df_shift_rule).collect();
        let b: Vec<f64> = rows.iter().map(|r| r.df_smoothed).collect();
        worst = worst.max(relative_rms(&a, &b));
    }
    check(worst < 0.10, format!("worst relative RMS over 9 thetas {:.2}%", 100.0 * worst))
}

fn analytic_oracle() -> Outcome {
    let de = Problem::benchmark().equation;
    let fb = de.analytic_solution(6.516);
    let ext = de.analytic_extremum().map_err(err)?;
    let r = de.rhs(ext.x);
    check(
        fb == 0.0 && r.abs() < 1e-8 && (ext.x - 5.140).abs() <= 0.001,
        format!("f(6.516) = {fb}, x_bar = {:.5}, rhs(x_bar) = {r:.2e}", ext.x),
    )
}

fn physics() -> Outcome {
    let problem = Problem::benchmark();
    let geometry = problem.register.geometry().map_err(err)?;
    let x_max = problem.grids.collocation.iter().copied().fold(0.0, f64::max)
        + problem.differentiation.shifts.iter().copied().fold(0.0, f64::max);
    let seq = build_sequence(x_max, 6.28, &problem.circuit).map_err(err)?;
    let mut exact = StateVector::ground(2).map_err(err)?;
    let mut stepped = exact.clone();
    for seg in &seq {
        let h = build_hamiltonian(&seg.sample(), &geometry).map_err(err)?;
        exact = evolve_constant(&exact, &h, seg.duration).map_err(err)?;
        stepped = evolve_stepped(&stepped, |_| Ok(h.clone()), seg.duration, 1e-3).map_err(err)?;
    }
    let drift = (exact.norm() - 1.0).abs();
    let mismatch = exact.distance(&stepped);
    let v = interaction_strength(8.7, c6_from_ghz(138.0)).map_err(err)?;
    let c6_ok = (c6_from_ghz(138.0) - C6_DEFAULT).abs() < 1e-6;
    check(
        drift < 1e-10 && (v - 2.0).abs() <= 0.02 && mismatch < 1e-8 && c6_ok,
        format!("norm drift {drift:.1e}, V(8.7 um) = {v:.4}, stepped vs exact {mismatch:.1e}"),
    )
}

fn shot_noise() -> Outcome {
    let problem = Problem::benchmark();
    let geometry = problem.register.geometry().map_err(err)?;
    let seq = build_sequence(4.0, 2.79, &problem.circuit).map_err(err)?;
    let state = rydberg_dqc::circuit::run_sequence(&seq, &geometry, problem.circuit.modulation).map_err(err)?;
    let exact = expectation(&state, &total_magnetization(2).map_err(err)?).map_err(err)?;
    let trials = 1000;
    let mut inside = 0;
    let mut se = [0.0; 2];
    for (slot, shots) in [200u64, 800].into_iter().enumerate() {
        let config = ShotConfig { shots, ..Default::default() };
        for t in 0..trials {
            let rec = measure(&state, &config, derive_seed(17, 4.0, shots as f64, t)).map_err(err)?;
            let est = magnetization_estimate(&rec).map_err(err)?;
            se[slot] += est.std_error / trials as f64;
            if shots == 200 && (est.value - exact).abs() <= 4.0 * est.std_error {
                inside += 1;
            }
        }
    }
    let coverage = inside as f64 / trials as f64;
    let ratio = se[0] / se[1];
    check(
        coverage >= 0.99 && (ratio / 2.0 - 1.0).abs() <= 0.10,
        format!("4-sigma coverage {:.1}%, se(200)/se(800) = {ratio:.3} (ideal 2)", 100.0 * coverage),
    )
}

fn calibration() -> Outcome {
    let problem = Problem::benchmark();
    let geometry = problem.register.geometry().map_err(err)?;
    let injected = -2.0 * PI * 0.162;
    let truth = problem.circuit.with_offset(injected);
    let readout = Readout::Sampled(ShotConfig { shots: 10_000, ..Default::default() });
    let mut data = Vec::new();
    for &theta in &problem.grids.thetas {
        for &x in &problem.grids.collocation {
            let estimate = run_circuit(x, theta, &truth, &geometry, &readout, derive_seed(99, x, theta, 0)).map_err(err)?;
            data.push(Observation { x, theta, estimate });
        }
    }
    let settings = CalibrationSettings { jobs: 4, ..Default::default() };
    let r = fit_detuning_offset(&data, &problem.circuit, &geometry, &settings).map_err(err)?;
    check(
        (r.delta_offset - injected).abs() <= 2.0 * PI * 0.005 && r.weighted_rmsd_after < r.weighted_rmsd_before,
        format!(
            "recovered {:.4} rad/us (injected {injected:.4}), RMSD {:.3} -> {:.3}",
            r.delta_offset, r.weighted_rmsd_before, r.weighted_rmsd_after
        ),
    )
}

fn robustness() -> Outcome {
    let problem = Problem::benchmark();
    let mut hits = 0;
    for seed in 0..20 {
        let settings = RunSettings { readout: Readout::Sampled(ShotConfig::default()), seed, jobs: 4 };
        if run(&problem, &settings).map_err(err)?.theta_opt == 2.79 {
            hits += 1;
        }
    }
    check(hits >= 12, format!("theta_opt = 2.79 in {hits}/20 seeds"))
}

fn whittaker() -> Outcome {
    let y: Vec<f64> = (0..40).map(|i| (i as f64 * 0.3).sin() + 0.1 * ((i * 7919) % 13) as f64).collect();
    let identity = whittaker_smooth(&y, &SmootherConfig::new(0.0, 2)).map_err(err)? == y;
    let stiff = whittaker_smooth(&y, &SmootherConfig::new(1e9, 2)).map_err(err)?;
    let curvature = stiff.windows(3).map(|w| (w[0] - 2.0 * w[1] + w[2]).abs()).fold(0.0, f64::max);
    let mut residual: f64 = 0.0;
    for (lambda, order) in [(0.5, 1), (10.0, 2), (300.0, 3)] {
        let cfg = SmootherConfig::new(lambda, order);
        let z = whittaker_smooth(&y, &cfg).map_err(err)?;
        residual = residual.max(normal_equation_residual(&y, &z, &cfg).map_err(err)?);
    }
    check(
        identity && curvature < 1e-6 && residual < 1e-9,
        format!("identity {identity}, max second difference {curvature:.1e}, normal-equation residual {residual:.1e}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("end-to-end noiseless run", end_to_end),
        ("sequence count", sequence_count),
        ("shift-rule exactness", gpsr_exactness),
        ("shift rule vs smoothing baseline", baseline_agreement),
        ("analytic oracle", analytic_oracle),
        ("physics checks", physics),
        ("shot-noise statistics", shot_noise),
        ("calibration recovery", calibration),
        ("robustness over seeds", robustness),
        ("smoother invariants", whittaker),
    ];
    let mut failed = 0;
    for (i, (name, criterion)) in criteria.iter().enumerate() {
        match criterion() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
