mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use rydberg_dqc::calibration::{fit_detuning_offset, fit_per_theta, CalibrationResult, CalibrationSettings, Observation};
use rydberg_dqc::circuit::{plan_experiment, run_circuit, Readout};
use rydberg_dqc::pipeline::{self, analyze, baseline_comparison, execute_plan, shift_rule, solution_curve, sweep_grid, Evaluation, RunResult, RunSettings};
use rydberg_dqc::problem::Problem;
use rydberg_dqc::qel::interpolate;
use rydberg_dqc::points::PointMap;
use rydberg_dqc::sampling::{derive_seed, ShotConfig};
use rydberg_dqc::smoothing::SmootherConfig;
use rydberg_dqc::trainer::{scale_derivative, scale_model_output};

use output::{config_hash, write_csv, write_json};

#[derive(Parser)]
#[command(name = "rdqc", version, about = "Pulse-level Rydberg emulator and closed-loop ODE solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate the unique pulse sequences of a closed-loop run.
    Plan(Common),
    /// Execute the plan, train over the phase grid and extremize.
    Run(Common),
    /// Fit a constant detuning offset to measured (or synthetic) curves.
    Calibrate(CalibrateArgs),
    /// Shift-rule derivative of the model at a single point.
    Derive(DeriveArgs),
    /// Noiseless baseline and solution curves for plotting.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Exact,
    Sampled,
}

#[derive(Args, Clone)]
struct Common {
    /// Problem file (TOML or JSON).
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, value_enum, default_value = "exact")]
    mode: Mode,
    /// Shots per sequence and copy in sampled mode.
    #[arg(long, default_value_t = 200)]
    shots: u64,
    /// Multiplexed copies per sequence in sampled mode.
    #[arg(long, default_value_t = 1)]
    copies: u32,
    #[arg(long, default_value_t = 0.0)]
    prep_failure: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 picks the available parallelism).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    common: Common,
    /// Measured curves: CSV `x,theta,value,std_error` or JSON.
    #[arg(long, conflicts_with = "inject")]
    data: Option<PathBuf>,
    /// Synthesize data with this offset (rad/us) instead of reading a file.
    #[arg(long, allow_hyphen_values = true)]
    inject: Option<f64>,
    /// Fit every phase separately instead of jointly.
    #[arg(long)]
    per_theta: bool,
}

#[derive(Args)]
struct DeriveArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, allow_hyphen_values = true)]
    x: f64,
    #[arg(long, allow_hyphen_values = true)]
    theta: f64,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    /// Phase for the solution curve; defaults to the one in `summary.json`.
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, default_value_t = 121)]
    points: usize,
}

struct RunContext {
    problem: Problem,
    settings: RunSettings,
    hash: String,
    out: PathBuf,
}

impl Common {
    fn load(&self) -> Result<RunContext> {
        let problem = Problem::from_file(&self.problem)
            .map_err(|e| anyhow!("{e}"))
            .with_context(|| format!("[load] reading {}", self.problem.display()))?;
        if self.mode == Mode::Sampled && self.shots == 0 {
            bail!("[load] sampled mode needs at least one shot");
        }
        let readout = match self.mode {
            Mode::Exact => Readout::Exact,
            Mode::Sampled => Readout::Sampled(ShotConfig { shots: self.shots, copies: self.copies, prep_failure_rate: self.prep_failure }),
        };
        let jobs = if self.jobs == 0 { std::thread::available_parallelism().map_or(1, |n| n.get()) } else { self.jobs };
        let settings = RunSettings { readout, seed: self.seed, jobs };
        let hash = config_hash(&problem, &readout, self.seed)?;
        std::fs::create_dir_all(&self.out).with_context(|| format!("[load] creating {}", self.out.display()))?;
        Ok(RunContext { problem, settings, hash, out: self.out.clone() })
    }
}

fn stage<T, E: std::fmt::Display>(name: &str, r: std::result::Result<T, E>) -> Result<T> {
    r.map_err(|e| anyhow!("[{name}] {e}"))
}

#[derive(Serialize)]
struct PlanRow {
    x: f64,
    theta: f64,
    role: String,
    center: Option<f64>,
    shift: Option<f64>,
    serves_boundary: bool,
}

fn cmd_plan(args: &Common) -> Result<()> {
    let ctx = args.load()?;
    let plan = plan_experiment(&ctx.problem.plan_request());
    let rows: Vec<PlanRow> = plan
        .entries
        .iter()
        .map(|e| PlanRow {
            x: e.x,
            theta: e.theta,
            role: format!("{:?}", e.role).to_lowercase(),
            center: e.center,
            shift: e.shift,
            serves_boundary: e.serves_boundary,
        })
        .collect();
    write_csv(&ctx.out.join("plan.csv"), &ctx.hash, &rows)?;
    #[derive(Serialize)]
    struct Count {
        theta: f64,
        sequences: usize,
    }
    let counts: Vec<Count> = plan.counts_by_theta().into_iter().map(|(theta, sequences)| Count { theta, sequences }).collect();
    write_csv(&ctx.out.join("plan_counts.csv"), &ctx.hash, &counts)?;
    println!("sequences: {}", plan.len());
    for c in &counts {
        println!("  theta {:>5}: {}", c.theta, c.sequences);
    }
    Ok(())
}

/// Executes the plan or reuses a cached execution with the same config hash.
fn evaluations_for(ctx: &RunContext) -> Result<(usize, Vec<Evaluation>, bool)> {
    let plan = plan_experiment(&ctx.problem.plan_request());
    let cache = ctx.out.join("cache").join(format!("{}.json", ctx.hash));
    if let Ok(text) = std::fs::read_to_string(&cache) {
        if let Ok(evals) = serde_json::from_str::<Vec<Evaluation>>(&text) {
            if evals.len() == plan.len() {
                return Ok((plan.len(), evals, true));
            }
        }
    }
    let evals = stage("execute", execute_plan(&plan, &ctx.problem, &ctx.settings))?;
    std::fs::create_dir_all(cache.parent().expect("has parent"))?;
    std::fs::write(&cache, serde_json::to_string(&evals)?).context("[execute] writing cache")?;
    Ok((plan.len(), evals, false))
}

#[derive(Serialize)]
struct Summary {
    config_hash: String,
    mode: Mode,
    seed: u64,
    sequences: usize,
    shots_used: u64,
    theta_opt: f64,
    x_opt: Option<f64>,
    f_at_opt: Option<f64>,
    x_bar_analytic: f64,
    qel_new_executions: usize,
    shift_weights: Vec<f64>,
}

#[derive(Serialize)]
struct DerivativeRow {
    x: f64,
    f: f64,
    df: f64,
    theta: f64,
    df_std_error: f64,
}

#[derive(Serialize)]
struct LossRow {
    theta: f64,
    sqrt_l_d: f64,
    l_b: f64,
    total: f64,
}

#[derive(Serialize)]
struct ExtremumRow {
    x: f64,
    f: f64,
    df: f64,
    df_std_error: f64,
}

#[derive(Serialize)]
struct CandidateRow {
    x: f64,
    df: f64,
    f: f64,
    classification: String,
}

#[derive(Serialize)]
struct EvaluationRow {
    x: f64,
    theta: f64,
    role: String,
    magnetization: f64,
    std_error: f64,
    shots: Option<u64>,
}

fn scaled_values(problem: &Problem, evaluations: &[Evaluation], theta: f64) -> PointMap<f64> {
    pipeline::outputs_at(evaluations, theta)
        .iter()
        .map(|(x, e)| (x, scale_model_output(e.value, &problem.scaling)))
        .collect()
}

fn write_run_outputs(ctx: &RunContext, result: &RunResult) -> Result<Summary> {
    let p = &ctx.problem;
    let rule = stage("derive", shift_rule(p))?;
    let mut derivative_rows = Vec::new();
    for &theta in &p.grids.thetas {
        let outputs = pipeline::outputs_at(&result.evaluations, theta);
        let values = scaled_values(p, &result.evaluations, theta);
        let derivs = stage("derive", pipeline::derivatives_from(&outputs, &p.grids.collocation, &rule))?;
        for (x, d) in derivs.iter() {
            derivative_rows.push(DerivativeRow {
                x,
                f: stage("derive", interpolate(&values, x))?,
                df: scale_derivative(d.value, &p.scaling),
                theta,
                df_std_error: p.scaling.multiplier.abs() * d.std_error,
            });
        }
    }
    write_csv(&ctx.out.join("derivatives.csv"), &ctx.hash, &derivative_rows)?;

    let loss_rows: Vec<LossRow> =
        result.losses.iter().map(|l| LossRow { theta: l.theta, sqrt_l_d: l.sqrt_l_d(), l_b: l.l_b, total: l.total }).collect();
    write_csv(&ctx.out.join("losses.csv"), &ctx.hash, &loss_rows)?;

    if let Some(qel) = &result.qel {
        let values = scaled_values(p, &result.evaluations, qel.theta);
        let rows = qel
            .derivatives
            .iter()
            .map(|&(x, df, se)| Ok(ExtremumRow { x, f: interpolate(&values, x).map_err(|e| anyhow!("[qel] {e}"))?, df, df_std_error: se }))
            .collect::<Result<Vec<_>>>()?;
        write_csv(&ctx.out.join("extremum.csv"), &ctx.hash, &rows)?;
        let candidates: Vec<CandidateRow> = qel
            .extremum
            .candidates
            .iter()
            .map(|c| CandidateRow { x: c.x, df: c.derivative, f: c.value, classification: format!("{:?}", c.classification).to_lowercase() })
            .collect();
        write_csv(&ctx.out.join("qel_candidates.csv"), &ctx.hash, &candidates)?;
    }

    let evaluations: Vec<EvaluationRow> = result
        .evaluations
        .iter()
        .map(|e| EvaluationRow {
            x: e.x,
            theta: e.theta,
            role: format!("{:?}", e.role).to_lowercase(),
            magnetization: e.estimate.value,
            std_error: e.estimate.std_error,
            shots: e.estimate.shots,
        })
        .collect();
    write_csv(&ctx.out.join("evaluations.csv"), &ctx.hash, &evaluations)?;

    let summary = Summary {
        config_hash: ctx.hash.clone(),
        mode: if matches!(ctx.settings.readout, Readout::Exact) { Mode::Exact } else { Mode::Sampled },
        seed: ctx.settings.seed,
        sequences: result.sequences,
        shots_used: result.evaluations.iter().filter_map(|e| e.estimate.shots).sum(),
        theta_opt: result.theta_opt,
        x_opt: result.qel.as_ref().map(|q| q.extremum.x_opt),
        f_at_opt: result.qel.as_ref().map(|q| q.extremum.f_at_opt),
        x_bar_analytic: stage("oracle", p.equation.analytic_extremum())?.x,
        qel_new_executions: result.qel.as_ref().map_or(0, |q| q.new_executions),
        shift_weights: result.gaps_weights.clone(),
    };
    write_json(&ctx.out.join("summary.json"), &summary)?;
    Ok(summary)
}

fn cmd_run(args: &Common) -> Result<()> {
    let ctx = args.load()?;
    let (sequences, evaluations, cached) = evaluations_for(&ctx)?;
    let result = stage("train", analyze(&ctx.problem, &ctx.settings, sequences, evaluations))?;
    let summary = write_run_outputs(&ctx, &result)?;
    println!("sequences: {}{}", summary.sequences, if cached { " (cached)" } else { "" });
    println!("theta_opt: {}", summary.theta_opt);
    if let Some(x) = summary.x_opt {
        println!("x_opt: {x}");
    }
    println!("x_bar_analytic: {:.4}", summary.x_bar_analytic);
    Ok(())
}

#[derive(Serialize, serde::Deserialize)]
struct DataRow {
    x: f64,
    theta: f64,
    value: f64,
    std_error: f64,
}

fn read_observations(path: &Path) -> Result<Vec<Observation>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("[calibrate] reading {}", path.display()))?;
    let rows: Vec<DataRow> = if path.extension().and_then(|e| e.to_str()) == Some("json") {
        serde_json::from_str(&text).context("[calibrate] data file does not match the schema")?
    } else {
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        reader.deserialize().collect::<std::result::Result<_, _>>().context("[calibrate] data file does not match the schema")?
    };
    if rows.is_empty() {
        bail!("[calibrate] data file has no observations");
    }
    Ok(rows
        .into_iter()
        .map(|r| Observation {
            x: r.x,
            theta: r.theta,
            estimate: rydberg_dqc::sampling::MagnetizationEstimate { value: r.value, std_error: r.std_error, shots: None },
        })
        .collect())
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<()> {
    let ctx = args.common.load()?;
    let p = &ctx.problem;
    let geometry = stage("calibrate", p.register.geometry())?;
    let data = match (&args.data, args.inject) {
        (Some(path), _) => read_observations(path)?,
        (None, Some(offset)) => {
            let readout = match ctx.settings.readout {
                Readout::Exact => bail!("[calibrate] synthetic data needs --mode sampled"),
                r => r,
            };
            let truth = p.circuit.with_offset(offset);
            let mut data = Vec::new();
            for &theta in &p.grids.thetas {
                for &x in &p.grids.collocation {
                    let seed = derive_seed(ctx.settings.seed, x, theta, 0);
                    let estimate = stage("calibrate", run_circuit(x, theta, &truth, &geometry, &readout, seed))?;
                    data.push(Observation { x, theta, estimate });
                }
            }
            let rows: Vec<DataRow> =
                data.iter().map(|o| DataRow { x: o.x, theta: o.theta, value: o.estimate.value, std_error: o.estimate.std_error }).collect();
            write_csv(&ctx.out.join("calibration_data.csv"), &ctx.hash, &rows)?;
            data
        }
        (None, None) => bail!("[calibrate] pass --data FILE or --inject OFFSET"),
    };
    let settings = CalibrationSettings { jobs: ctx.settings.jobs, ..Default::default() };

    #[derive(Serialize)]
    struct ScanRow {
        theta: Option<f64>,
        delta_offset: f64,
        weighted_rmsd: f64,
    }
    #[derive(Serialize)]
    struct Report<'a> {
        config_hash: &'a str,
        fits: Vec<(Option<f64>, &'a CalibrationResult)>,
    }
    let fits: Vec<(Option<f64>, CalibrationResult)> = if args.per_theta {
        stage("calibrate", fit_per_theta(&data, &p.circuit, &geometry, &settings))?.into_iter().map(|(t, r)| (Some(t), r)).collect()
    } else {
        vec![(None, stage("calibrate", fit_detuning_offset(&data, &p.circuit, &geometry, &settings))?)]
    };
    let scan: Vec<ScanRow> = fits
        .iter()
        .flat_map(|(t, r)| r.scan.iter().map(move |&(d, v)| ScanRow { theta: *t, delta_offset: d, weighted_rmsd: v }))
        .collect();
    write_csv(&ctx.out.join("calibration_scan.csv"), &ctx.hash, &scan)?;
    write_json(&ctx.out.join("calibration.json"), &Report { config_hash: &ctx.hash, fits: fits.iter().map(|(t, r)| (*t, r)).collect() })?;
    for (t, r) in &fits {
        let label = t.map_or("joint".to_string(), |t| format!("theta {t}"));
        println!(
            "{label}: delta_offset = {:.5} rad/us (2pi x {:.1} kHz), rmsd {:.4} -> {:.4}",
            r.delta_offset,
            r.delta_offset / (2.0 * std::f64::consts::PI) * 1e3,
            r.weighted_rmsd_before,
            r.weighted_rmsd_after
        );
    }
    Ok(())
}

fn cmd_derive(args: &DeriveArgs) -> Result<()> {
    let ctx = args.common.load()?;
    let p = &ctx.problem;
    let geometry = stage("derive", p.register.geometry())?;
    let rule = stage("derive", shift_rule(p))?;
    let d = stage(
        "derive",
        rule.derivative(
            |x| run_circuit(x, args.theta, &p.circuit, &geometry, &ctx.settings.readout, derive_seed(ctx.settings.seed, x, args.theta, 0)),
            args.x,
        ),
    )?;
    #[derive(Serialize)]
    struct Derivative<'a> {
        config_hash: &'a str,
        x: f64,
        theta: f64,
        shifts: &'a [f64],
        weights: &'a [f64],
        raw: f64,
        raw_std_error: f64,
        scaled: f64,
        scaled_std_error: f64,
        evaluations: &'a [rydberg_dqc::gpsr::ShiftedEvaluation],
    }
    let out = Derivative {
        config_hash: &ctx.hash,
        x: args.x,
        theta: args.theta,
        shifts: rule.shifts(),
        weights: rule.weights(),
        raw: d.value,
        raw_std_error: d.std_error,
        scaled: scale_derivative(d.value, &p.scaling),
        scaled_std_error: p.scaling.multiplier.abs() * d.std_error,
        evaluations: &d.evaluations,
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let ctx = args.common.load()?;
    let p = &ctx.problem;
    let xs = sweep_grid(p, args.points.max(3));
    let smoother = SmootherConfig::new(p.smoothing.lambda, p.smoothing.order);

    #[derive(Serialize)]
    struct BaselineRow {
        x: f64,
        f_smoothed: f64,
        df_smoothed: f64,
        theta: f64,
        f: f64,
        df_shift_rule: f64,
        df_exact: f64,
    }
    let mut rows = Vec::new();
    let mut agreement = Vec::new();
    for &theta in &p.grids.thetas {
        let b = stage("report", baseline_comparison(p, theta, &xs, &smoother, ctx.settings.jobs))?;
        let a: Vec<f64> = b.iter().map(|r| r.df_shift_rule).collect();
        let s: Vec<f64> = b.iter().map(|r| r.df_smoothed).collect();
        agreement.push((theta, pipeline::relative_rms(&a, &s)));
        let m = p.scaling.multiplier;
        rows.extend(b.into_iter().map(|r| BaselineRow {
            x: r.x,
            f_smoothed: scale_model_output(r.f_smoothed, &p.scaling),
            df_smoothed: m * r.df_smoothed,
            theta,
            f: scale_model_output(r.f, &p.scaling),
            df_shift_rule: m * r.df_shift_rule,
            df_exact: m * r.df_exact,
        }));
    }
    write_csv(&ctx.out.join("baseline.csv"), &ctx.hash, &rows)?;

    let theta = match args.theta {
        Some(t) => t,
        None => {
            let text = std::fs::read_to_string(ctx.out.join("summary.json")).context("[report] no --theta given and no summary.json; run `rdqc run` first")?;
            let v: serde_json::Value = serde_json::from_str(&text)?;
            v["theta_opt"].as_f64().ok_or_else(|| anyhow!("[report] summary.json lacks theta_opt"))?
        }
    };
    let solution = stage("report", solution_curve(p, theta, &xs, ctx.settings.jobs))?;
    write_csv(&ctx.out.join("solution.csv"), &ctx.hash, &solution)?;
    let rms = (solution.iter().map(|r| (r.f_model - r.f_exact).powi(2)).sum::<f64>() / solution.len() as f64).sqrt();
    println!("shift rule vs smoothed derivative (relative RMS):");
    for (t, r) in agreement {
        println!("  theta {t:>5}: {:.2}%", 100.0 * r);
    }
    println!("model vs analytic solution at theta {theta}: RMS {rms:.4}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Plan(a) => cmd_plan(a),
        Command::Run(a) => cmd_run(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Derive(a) => cmd_derive(a),
        Command::Report(a) => cmd_report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
