//! Fitting a constant detuning offset that aligns simulated magnetization
//! with measured curves.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::circuit::{run_circuit, CircuitSpec, Readout};
use crate::error::{Error, Result};
use crate::pipeline::par_map;
use crate::rydberg::RegisterGeometry;
use crate::sampling::MagnetizationEstimate;

/// `2 pi x 1 kHz` in rad/us.
pub const DEFAULT_TOLERANCE: f64 = 2.0 * PI * 0.001;
/// Offsets beyond `2 pi x 100 kHz` exceed typical hardware accuracy.
pub const WARN_THRESHOLD: f64 = 2.0 * PI * 0.1;
pub const DEFAULT_SCAN_POINTS: usize = 41;

/// One measured point of a calibration curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: f64,
    pub theta: f64,
    pub estimate: MagnetizationEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub delta_offset: f64,
    pub weighted_rmsd_before: f64,
    pub weighted_rmsd_after: f64,
    /// `(offset, rmsd)` over the coarse scan.
    pub scan: Vec<(f64, f64)>,
    /// Larger than typical hardware detuning accuracy.
    pub exceeds_hardware_accuracy: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSettings {
    pub interval: (f64, f64),
    pub tolerance: f64,
    pub scan_points: usize,
    pub jobs: usize,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self { interval: (-2.0 * PI * 0.5, 2.0 * PI * 0.5), tolerance: DEFAULT_TOLERANCE, scan_points: DEFAULT_SCAN_POINTS, jobs: 1 }
    }
}

/// `sqrt(sum w (d - s)^2 / sum w)` with `w = 1/std_error^2`; points with a
/// zero error are skipped.
pub fn weighted_rmsd(data: &[Observation], sim: &[f64]) -> Result<f64> {
    if data.len() != sim.len() {
        return Err(Error::DimensionMismatch { expected: data.len(), actual: sim.len() });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    let mut skipped = 0;
    for (d, s) in data.iter().zip(sim) {
        let se = d.estimate.std_error;
        if !(se > 0.0) {
            skipped += 1;
            continue;
        }
        let w = 1.0 / (se * se);
        num += w * (d.estimate.value - s).powi(2);
        den += w;
    }
    if skipped > 0 {
        log::warn!("{skipped} observations without a standard error were excluded");
    }
    if den == 0.0 {
        return Err(Error::InvalidArgument("no observations with a positive standard error".into()));
    }
    Ok((num / den).sqrt())
}

fn simulate(data: &[Observation], spec: &CircuitSpec, geometry: &RegisterGeometry, offset: f64) -> Result<Vec<f64>> {
    let spec = spec.with_offset(offset);
    data.iter()
        .map(|o| run_circuit(o.x, o.theta, &spec, geometry, &Readout::Exact, 0).map(|e| e.value))
        .collect()
}

/// Coarse scan over `settings.interval`, then golden-section refinement
/// around the best scan point. The offset is added to every segment.
pub fn fit_detuning_offset(
    data: &[Observation],
    spec: &CircuitSpec,
    geometry: &RegisterGeometry,
    settings: &CalibrationSettings,
) -> Result<CalibrationResult> {
    let (lo, hi) = settings.interval;
    if !(lo < hi) || settings.scan_points < 3 || !(settings.tolerance > 0.0) {
        return Err(Error::InvalidArgument("need lo < hi, at least 3 scan points and a positive tolerance".into()));
    }
    let objective = |offset: f64| -> Result<f64> { weighted_rmsd(data, &simulate(data, spec, geometry, offset)?) };
    let before = objective(spec.detuning_offset)?;

    let n = settings.scan_points;
    let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let values = par_map(&grid, settings.jobs, |&d| objective(d)).into_iter().collect::<Result<Vec<f64>>>()?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite objective in the scan".into()));
    }
    let scan: Vec<(f64, f64)> = grid.iter().copied().zip(values.iter().copied()).collect();
    let (vmin, vmax) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if vmax - vmin <= 1e-12 * vmax.abs().max(1.0) {
        return Err(Error::FlatObjective);
    }
    let best = (0..n).min_by(|&a, &b| values[a].total_cmp(&values[b])).expect("non-empty scan");
    if best == 0 || best == n - 1 {
        return Err(Error::NotBracketing);
    }

    // Golden section on the bracket around the best scan point.
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (grid[best - 1], grid[best + 1]);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (objective(c)?, objective(d)?);
    while b - a > settings.tolerance {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d)?;
        }
    }
    let mut delta_offset = 0.5 * (a + b);
    let mut after = objective(delta_offset)?;
    if values[best] < after {
        delta_offset = grid[best];
        after = values[best];
    }
    if before < after {
        delta_offset = spec.detuning_offset;
        after = before;
    }
    let exceeds_hardware_accuracy = delta_offset.abs() > WARN_THRESHOLD;
    if exceeds_hardware_accuracy {
        log::warn!("fitted detuning offset {delta_offset:.4} rad/us exceeds typical hardware accuracy");
    }
    Ok(CalibrationResult { delta_offset, weighted_rmsd_before: before, weighted_rmsd_after: after, scan, exceeds_hardware_accuracy })
}

/// One independent fit per `theta` curve instead of a joint fit.
pub fn fit_per_theta(
    data: &[Observation],
    spec: &CircuitSpec,
    geometry: &RegisterGeometry,
    settings: &CalibrationSettings,
) -> Result<Vec<(f64, CalibrationResult)>> {
    let mut thetas: Vec<f64> = data.iter().map(|o| o.theta).collect();
    thetas.sort_by(f64::total_cmp);
    thetas.dedup();
    thetas
        .into_iter()
        .map(|t| {
            let subset: Vec<Observation> = data.iter().copied().filter(|o| o.theta == t).collect();
            fit_detuning_offset(&subset, spec, geometry, settings).map(|r| (t, r))
        })
        .collect()
}
