//! End-to-end closed loop: execute the sequence plan, differentiate, score
//! every `theta`, extremize the winner, and assemble the figure data.

use serde::{Deserialize, Serialize};

use crate::circuit::{plan_experiment, run_circuit, Readout, Role, SequencePlan};
use crate::error::{Error, Result};
use crate::gpsr::{effective_gaps, feature_map_generator, DerivativeEstimate, GapSet, ShiftRule, ShiftSet, DEFAULT_CONDITION_CAP};
use crate::points::PointMap;
use crate::problem::{GapChoice, Problem};
use crate::qel::{extend_derivative_grid, find_extremum, ExtremizationResult};
use crate::quantum::StateVector;
use crate::rydberg::RegisterGeometry;
use crate::sampling::{derive_seed, MagnetizationEstimate};
use crate::smoothing::{smoothed_derivative, SmootherConfig};
use crate::trainer::{evaluate_loss, fit_output_scaling, grid_search, scale_derivative, scale_model_output, LossInputs, LossReport};

/// Order-preserving parallel map over at most `jobs` scoped threads.
pub fn par_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items.chunks(chunk).map(|part| scope.spawn(|| part.iter().map(&f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub readout: Readout,
    pub seed: u64,
    pub jobs: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self { readout: Readout::Exact, seed: 0, jobs: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub x: f64,
    pub theta: f64,
    pub role: Role,
    pub estimate: MagnetizationEstimate,
}

/// Resolves the configured gap choice into a shift rule.
pub fn shift_rule(problem: &Problem) -> Result<ShiftRule> {
    let shifts = ShiftSet::new(&problem.differentiation.shifts)?;
    let gaps = match &problem.differentiation.gaps {
        GapChoice::Fixed(g) => GapSet::new(g)?,
        GapChoice::Auto => {
            let geometry = problem.register.geometry()?;
            let generator = feature_map_generator(problem.circuit.fm_omega, &geometry)?;
            effective_gaps(&generator, &StateVector::ground(geometry.n_atoms())?, shifts.len())?
        }
    };
    ShiftRule::new(&gaps, &shifts, DEFAULT_CONDITION_CAP)
}

/// Runs every plan entry; the seed of each depends only on its coordinates.
pub fn execute_plan(plan: &SequencePlan, problem: &Problem, settings: &RunSettings) -> Result<Vec<Evaluation>> {
    let geometry = problem.register.geometry()?;
    par_map(&plan.entries, settings.jobs, |e| {
        let seed = derive_seed(settings.seed, e.x, e.theta, 0);
        run_circuit(e.x, e.theta, &problem.circuit, &geometry, &settings.readout, seed)
            .map(|estimate| Evaluation { x: e.x, theta: e.theta, role: e.role, estimate })
    })
    .into_iter()
    .collect()
}

/// Evaluations at one `theta`, keyed by `x`.
pub fn outputs_at(evaluations: &[Evaluation], theta: f64) -> PointMap<MagnetizationEstimate> {
    evaluations.iter().filter(|e| e.theta == theta).map(|e| (e.x, e.estimate)).collect()
}

/// Shift-rule derivatives at `points` from already executed evaluations.
pub fn derivatives_from(outputs: &PointMap<MagnetizationEstimate>, points: &[f64], rule: &ShiftRule) -> Result<PointMap<DerivativeEstimate>> {
    points
        .iter()
        .map(|&x| rule.derivative(|xs| outputs.get(xs).copied().ok_or(Error::MissingEvaluation(xs)), x).map(|d| (x, d)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QelOutcome {
    pub theta: f64,
    /// `(x, scaled df/dx, std error)` on the restricted grid.
    pub derivatives: Vec<(f64, f64, f64)>,
    pub extremum: ExtremizationResult,
    pub new_executions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub sequences: usize,
    pub gaps_weights: Vec<f64>,
    pub theta_opt: f64,
    pub losses: Vec<LossReport>,
    /// Absent when the extremization grid has fewer than 3 points.
    pub qel: Option<QelOutcome>,
    pub evaluations: Vec<Evaluation>,
}

/// The complete closed loop for one problem.
pub fn run(problem: &Problem, settings: &RunSettings) -> Result<RunResult> {
    problem.validate()?;
    shift_rule(problem)?;
    let plan = plan_experiment(&problem.plan_request());
    let evaluations = execute_plan(&plan, problem, settings)?;
    analyze(problem, settings, plan.len(), evaluations)
}

/// Everything after execution: derivatives, losses, grid search and the
/// extremization, from stored evaluations.
pub fn analyze(problem: &Problem, settings: &RunSettings, sequences: usize, evaluations: Vec<Evaluation>) -> Result<RunResult> {
    let rule = shift_rule(problem)?;
    let mut losses = Vec::with_capacity(problem.grids.thetas.len());
    for &theta in &problem.grids.thetas {
        let outputs = outputs_at(&evaluations, theta);
        let derivatives = derivatives_from(&outputs, &problem.grids.collocation, &rule)?;
        losses.push(evaluate_loss(
            &LossInputs {
                theta,
                collocation: &problem.grids.collocation,
                outputs: &outputs,
                derivatives: &derivatives,
                scaling: problem.scaling,
                weights: problem.loss,
                boundary_tolerance: problem.differentiation.boundary_tolerance,
            },
            &problem.equation,
        )?);
    }
    let (theta_opt, losses) = grid_search(&losses)?;
    let qel = if extremization_grid(problem).len() >= 3 {
        Some(extremize(problem, theta_opt, &rule, &evaluations, settings)?)
    } else {
        None
    };
    Ok(RunResult { sequences, gaps_weights: rule.weights().to_vec(), theta_opt, losses, qel, evaluations })
}

/// The restricted grid around the extra points, or the collocation points
/// when no extra points are configured.
pub fn extremization_grid(problem: &Problem) -> Vec<f64> {
    let grid = problem.collocation_set().restricted_grid();
    if grid.is_empty() {
        let mut g = problem.grids.collocation.clone();
        g.sort_by(f64::total_cmp);
        g
    } else {
        grid
    }
}

/// Derivatives on the restricted grid at `theta`, evaluating only sequences
/// not already executed, then the model minimum.
pub fn extremize(problem: &Problem, theta: f64, rule: &ShiftRule, evaluations: &[Evaluation], settings: &RunSettings) -> Result<QelOutcome> {
    let geometry = problem.register.geometry()?;
    let mut cache = outputs_at(evaluations, theta);
    let prior = derivatives_from(&cache, &problem.grids.collocation, rule)?;
    let grid = extremization_grid(problem);
    let extras: Vec<f64> = grid.iter().copied().filter(|x| !prior.contains(*x)).collect();
    let extended = extend_derivative_grid(&prior, &extras, problem.equation.domain, rule, &mut cache, |x| {
        run_circuit(x, theta, &problem.circuit, &geometry, &settings.readout, derive_seed(settings.seed, x, theta, 0))
    })?;
    let scaling = &problem.scaling;
    let derivatives: PointMap<f64> = grid
        .iter()
        .map(|&x| extended.derivatives.get(x).map(|d| (x, scale_derivative(d.value, scaling))).ok_or(Error::MissingEvaluation(x)))
        .collect::<Result<_>>()?;
    let values: PointMap<f64> = cache.iter().map(|(x, e)| (x, scale_model_output(e.value, scaling))).collect();
    let extremum = find_extremum(&derivatives, &values, problem.extremum_mode)?;
    let table = grid
        .iter()
        .map(|&x| {
            let d = extended.derivatives.get(x).expect("checked above");
            (x, scale_derivative(d.value, scaling), scaling.multiplier.abs() * d.std_error)
        })
        .collect();
    Ok(QelOutcome { theta, derivatives: table, extremum, new_executions: extended.new_executions })
}

/// Feature values for dense sweeps: the domain, clipped so every shifted
/// evaluation stays at a positive duration.
pub fn sweep_grid(problem: &Problem, n: usize) -> Vec<f64> {
    let s_max = problem.differentiation.shifts.iter().copied().fold(0.0, f64::max);
    let lo = problem.equation.domain.0.max(s_max + 0.02);
    let hi = problem.equation.domain.1;
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1).max(1) as f64).collect()
}

/// One row of a noiseless derivative comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub x: f64,
    pub f: f64,
    pub f_smoothed: f64,
    pub df_smoothed: f64,
    pub df_shift_rule: f64,
    pub df_exact: f64,
}

/// Exact magnetization, its smoothed derivative, the shift-rule estimate
/// and a fine central difference, all unscaled, on `xs`.
pub fn baseline_comparison(problem: &Problem, theta: f64, xs: &[f64], smoother: &SmootherConfig, jobs: usize) -> Result<Vec<BaselineRow>> {
    let geometry = problem.register.geometry()?;
    let rule = shift_rule(problem)?;
    let exact = |x: f64| run_circuit(x, theta, &problem.circuit, &geometry, &Readout::Exact, 0);
    let h = 1e-5;
    let rows = par_map(xs, jobs, |&x| -> Result<(f64, f64, f64)> {
        let f = exact(x)?.value;
        let d = rule.derivative(exact, x)?.value;
        let fd = (exact(x + h)?.value - exact(x - h)?.value) / (2.0 * h);
        Ok((f, d, fd))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let f: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let (z, dz) = smoothed_derivative(xs, &f, smoother)?;
    Ok((0..xs.len())
        .map(|i| BaselineRow { x: xs[i], f: f[i], f_smoothed: z[i], df_smoothed: dz[i], df_shift_rule: rows[i].1, df_exact: rows[i].2 })
        .collect())
}

/// `rms(a - b) / rms(b)`.
pub fn relative_rms(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum();
    let norm: f64 = b.iter().map(|q| q * q).sum();
    (diff / norm).sqrt()
}

/// Affine scaling that best maps the noiseless circuit output at `theta`
/// onto the analytic solution over `xs`.
pub fn fit_scaling(problem: &Problem, theta: f64, xs: &[f64]) -> Result<crate::problem::OutputScaling> {
    let geometry = problem.register.geometry()?;
    let m = xs
        .iter()
        .map(|&x| run_circuit(x, theta, &problem.circuit, &geometry, &Readout::Exact, 0).map(|e| e.value))
        .collect::<Result<Vec<_>>>()?;
    let target: Vec<f64> = xs.iter().map(|&x| problem.equation.analytic_solution(x)).collect();
    fit_output_scaling(&m, &target)
}

/// Model curve at `theta` next to the analytic solution, both scaled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionRow {
    pub x: f64,
    pub f_model: f64,
    pub f_exact: f64,
}

pub fn solution_curve(problem: &Problem, theta: f64, xs: &[f64], jobs: usize) -> Result<Vec<SolutionRow>> {
    let geometry: RegisterGeometry = problem.register.geometry()?;
    par_map(xs, jobs, |&x| {
        run_circuit(x, theta, &problem.circuit, &geometry, &Readout::Exact, 0).map(|e| SolutionRow {
            x,
            f_model: scale_model_output(e.value, &problem.scaling),
            f_exact: problem.equation.analytic_solution(x),
        })
    })
    .into_iter()
    .collect()
}
