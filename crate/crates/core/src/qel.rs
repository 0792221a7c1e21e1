//! Extremization of the trained model in its input: derivative sign changes
//! on a grid, classified and filtered by the model value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpsr::{DerivativeEstimate, ShiftRule};
use crate::points::PointMap;
use crate::problem::ExtremumMode;
use crate::sampling::MagnetizationEstimate;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Minimum,
    Maximum,
    Inflection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub x: f64,
    pub derivative: f64,
    pub value: f64,
    pub classification: Classification,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremizationResult {
    pub x_opt: f64,
    pub f_at_opt: f64,
    pub candidates: Vec<Candidate>,
    pub method: ExtremumMode,
    /// No interior minimum was found; `x_opt` is the better grid endpoint.
    pub endpoint_fallback: bool,
}

/// Linear interpolation of `values` at `x`, clamped to the end values.
pub fn interpolate(values: &PointMap<f64>, x: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = values.iter().map(|(k, v)| (k, *v)).collect();
    let (first, last) = match (pts.first(), pts.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(Error::EmptyGrid),
    };
    if x <= first.0 {
        return Ok(first.1);
    }
    if x >= last.0 {
        return Ok(last.1);
    }
    let i = pts.partition_point(|p| p.0 <= x);
    let (a, b) = (pts[i - 1], pts[i]);
    Ok(a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0))
}

/// Locates the minimizer of the model from its derivative on a grid.
///
/// `derivatives` holds `df/dx` at the grid points; `values` holds model
/// values at any feature values (interpolated to the candidates).
pub fn find_extremum(derivatives: &PointMap<f64>, values: &PointMap<f64>, mode: ExtremumMode) -> Result<ExtremizationResult> {
    if derivatives.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 derivative points, got {}", derivatives.len())));
    }
    let grid: Vec<(f64, f64)> = derivatives.iter().map(|(x, d)| (x, *d)).collect();
    let mut candidates = Vec::new();
    for (i, w) in grid.windows(2).enumerate() {
        let ((xa, da), (xb, db)) = (w[0], w[1]);
        let classification = if da < 0.0 && db >= 0.0 {
            Classification::Minimum
        } else if da > 0.0 && db <= 0.0 {
            Classification::Maximum
        } else {
            // A near-miss: |df/dx| has a local minimum at a grid point
            // without changing sign.
            if i + 2 < grid.len() {
                let dc = grid[i + 2].1;
                if db.abs() < da.abs() && db.abs() < dc.abs() && db.signum() == dc.signum() && db != 0.0 {
                    candidates.push(Candidate {
                        x: xb,
                        derivative: db,
                        value: interpolate(values, xb)?,
                        classification: Classification::Inflection,
                    });
                }
            }
            continue;
        };
        let (x, derivative) = match mode {
            ExtremumMode::GridArgmin => {
                if da.abs() <= db.abs() {
                    (xa, da)
                } else {
                    (xb, db)
                }
            }
            ExtremumMode::SignChangeInterpolation => (xa - da * (xb - xa) / (db - da), 0.0),
        };
        candidates.push(Candidate { x, derivative, value: interpolate(values, x)?, classification });
    }
    candidates.sort_by(|a, b| a.x.total_cmp(&b.x));

    let best = candidates
        .iter()
        .filter(|c| c.classification == Classification::Minimum)
        .min_by(|a, b| a.value.total_cmp(&b.value).then(a.x.total_cmp(&b.x)));
    if let Some(best) = best {
        return Ok(ExtremizationResult {
            x_opt: best.x,
            f_at_opt: best.value,
            candidates: candidates.clone(),
            method: mode,
            endpoint_fallback: false,
        });
    }
    let (lo, hi) = (grid[0].0, grid[grid.len() - 1].0);
    let (flo, fhi) = (interpolate(values, lo)?, interpolate(values, hi)?);
    let (x_opt, f_at_opt) = if flo <= fhi { (lo, flo) } else { (hi, fhi) };
    Ok(ExtremizationResult { x_opt, f_at_opt, candidates, method: mode, endpoint_fallback: true })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedGrid {
    pub derivatives: PointMap<DerivativeEstimate>,
    /// Circuit executions that were not already cached.
    pub new_executions: usize,
}

/// Adds derivatives at `extra_points` to the stored ones, reusing every
/// cached derivative and every cached circuit evaluation.
pub fn extend_derivative_grid<F>(
    prior: &PointMap<DerivativeEstimate>,
    extra_points: &[f64],
    domain: (f64, f64),
    rule: &ShiftRule,
    cache: &mut PointMap<MagnetizationEstimate>,
    mut evaluate: F,
) -> Result<ExtendedGrid>
where
    F: FnMut(f64) -> Result<MagnetizationEstimate>,
{
    if let Some(p) = extra_points.iter().find(|p| !(**p > domain.0 && **p < domain.1)) {
        return Err(Error::InvalidArgument(format!("extra point {p} outside the domain")));
    }
    let mut derivatives = prior.clone();
    let mut new_executions = 0;
    for &x in extra_points {
        if derivatives.contains(x) {
            continue;
        }
        let d = rule.derivative(
            |xs| {
                if let Some(hit) = cache.get(xs) {
                    return Ok(*hit);
                }
                let e = evaluate(xs)?;
                new_executions += 1;
                cache.insert(xs, e);
                Ok(e)
            },
            x,
        )?;
        derivatives.insert(x, d);
    }
    Ok(ExtendedGrid { derivatives, new_executions })
}
