//! Physics-informed loss over the collocation points and the closed-loop
//! grid search over the single ansatz phase.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpsr::DerivativeEstimate;
use crate::points::PointMap;
use crate::problem::{FirstOrderOde, LossWeights, OutputScaling, PolynomialDE};
use crate::sampling::MagnetizationEstimate;

pub fn scale_model_output(raw: f64, scaling: &OutputScaling) -> f64 {
    scaling.multiplier * raw + scaling.offset
}

/// Derivatives only pick up the multiplier.
pub fn scale_derivative(raw: f64, scaling: &OutputScaling) -> f64 {
    scaling.multiplier * raw
}

/// Least-squares affine map from magnetization samples onto target values.
pub fn fit_output_scaling(magnetization: &[f64], target: &[f64]) -> Result<OutputScaling> {
    if magnetization.len() != target.len() || magnetization.len() < 2 {
        return Err(Error::InvalidArgument("need at least two aligned samples to fit a scaling".into()));
    }
    let n = magnetization.len() as f64;
    let mx = magnetization.iter().sum::<f64>() / n;
    let my = target.iter().sum::<f64>() / n;
    let sxx: f64 = magnetization.iter().map(|m| (m - mx).powi(2)).sum();
    let sxy: f64 = magnetization.iter().zip(target).map(|(m, y)| (m - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Singular);
    }
    let multiplier = sxy / sxx;
    Ok(OutputScaling { multiplier, offset: my - multiplier * mx })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub x: f64,
    pub derivative: f64,
    pub derivative_std_error: f64,
    pub rhs: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub theta: f64,
    /// Sum of squared residuals over the collocation points.
    pub l_d: f64,
    /// `|f(x_b) - f_b|`.
    pub l_b: f64,
    pub residuals: Vec<Residual>,
    /// `l_d + w_b l_b^2`.
    pub total: f64,
}

impl LossReport {
    pub fn sqrt_l_d(&self) -> f64 {
        self.l_d.sqrt()
    }
}

/// Where a loss evaluation finds its inputs.
pub struct LossInputs<'a> {
    pub theta: f64,
    pub collocation: &'a [f64],
    /// Raw magnetization by feature value.
    pub outputs: &'a PointMap<MagnetizationEstimate>,
    /// Raw magnetization derivatives by collocation point.
    pub derivatives: &'a PointMap<DerivativeEstimate>,
    pub scaling: OutputScaling,
    pub weights: LossWeights,
    /// How far the evaluated point standing in for `x_b` may sit from it.
    pub boundary_tolerance: f64,
}

pub fn evaluate_loss(inputs: &LossInputs<'_>, de: &PolynomialDE) -> Result<LossReport> {
    evaluate_loss_with(inputs, de, de.boundary_x, de.boundary_value)
}

/// Loss for any `df/dx = g(f, x)` with one boundary condition.
pub fn evaluate_loss_with<O: FirstOrderOde>(
    inputs: &LossInputs<'_>,
    ode: &O,
    boundary_x: f64,
    boundary_value: f64,
) -> Result<LossReport> {
    let scaling = &inputs.scaling;
    let mut residuals = Vec::with_capacity(inputs.collocation.len());
    for &x in inputs.collocation {
        let d = inputs.derivatives.get(x).ok_or(Error::MissingEvaluation(x))?;
        let f = if ode.depends_on_f() {
            let m = inputs.outputs.get(x).ok_or(Error::MissingEvaluation(x))?;
            scale_model_output(m.value, scaling)
        } else {
            f64::NAN
        };
        let derivative = scale_derivative(d.value, scaling);
        let rhs = ode.g(f, x);
        residuals.push(Residual {
            x,
            derivative,
            derivative_std_error: scaling.multiplier.abs() * d.std_error,
            rhs,
            residual: derivative - rhs,
        });
    }
    let (_, fb) = inputs
        .outputs
        .nearest(boundary_x, inputs.boundary_tolerance)
        .ok_or(Error::MissingEvaluation(boundary_x))?;
    let l_d: f64 = residuals.iter().map(|r| r.residual * r.residual).sum();
    let l_b = (scale_model_output(fb.value, scaling) - boundary_value).abs();
    let total = l_d + inputs.weights.boundary * l_b * l_b;
    if !total.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite loss at theta = {}", inputs.theta)));
    }
    Ok(LossReport { theta: inputs.theta, l_d, l_b, residuals, total })
}

/// Smallest total loss; ties go to the smaller `theta`, so the outcome does
/// not depend on grid order.
pub fn grid_search(reports: &[LossReport]) -> Result<(f64, Vec<LossReport>)> {
    let best = reports
        .iter()
        .min_by(|a, b| a.total.total_cmp(&b.total).then(a.theta.total_cmp(&b.theta)))
        .ok_or(Error::EmptyGrid)?;
    let mut sorted = reports.to_vec();
    sorted.sort_by(|a, b| a.theta.total_cmp(&b.theta));
    Ok((best.theta, sorted))
}
