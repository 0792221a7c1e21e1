//! Whittaker–Eilers smoothing and numerical differentiation of the smoothed
//! curve, used as a classical baseline for the shift-rule derivatives.
//!
//! The roughness penalty uses index differences, so non-uniform grids are
//! smoothed as if evenly spaced; the derivative uses physical spacing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmootherConfig {
    pub lambda: f64,
    pub order: usize,
    /// Per-point weights; `None` means all ones.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self { lambda: 10.0, order: 2, weights: None }
    }
}

impl SmootherConfig {
    pub fn new(lambda: f64, order: usize) -> Self {
        Self { lambda, order, weights: None }
    }

    /// Weights `1/std_error^2`, falling back to unit weights when any error
    /// is zero.
    pub fn with_std_errors(mut self, std_errors: &[f64]) -> Self {
        self.weights = if std_errors.iter().all(|s| *s > 0.0) {
            Some(std_errors.iter().map(|s| 1.0 / (s * s)).collect())
        } else {
            None
        };
        self
    }

    fn validate(&self, n: usize) -> Result<Vec<f64>> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(1..=3).contains(&self.order) {
            return Err(Error::InvalidArgument(format!("difference order must be 1, 2 or 3, got {}", self.order)));
        }
        if n <= self.order {
            return Err(Error::InvalidArgument(format!("need more than {} points, got {n}", self.order)));
        }
        let w = match &self.weights {
            Some(w) if w.len() != n => return Err(Error::DimensionMismatch { expected: n, actual: w.len() }),
            Some(w) => w.clone(),
            None => vec![1.0; n],
        };
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
        }
        Ok(w)
    }
}

fn difference_stencil(order: usize) -> Vec<f64> {
    let mut c = vec![1.0];
    for _ in 0..order {
        let mut next = vec![0.0; c.len() + 1];
        for (i, v) in c.iter().enumerate() {
            next[i + 1] += v;
            next[i] -= v;
        }
        c = next;
    }
    c
}

/// Symmetric band matrix stored as `band[i][k] = A[i][i + k]`, `k <= bw`.
struct Banded {
    band: Vec<Vec<f64>>,
    bw: usize,
}

impl Banded {
    /// `W + lambda D^T D`.
    fn system(weights: &[f64], lambda: f64, order: usize) -> Self {
        let n = weights.len();
        let mut band: Vec<Vec<f64>> = weights.iter().map(|w| {
            let mut row = vec![0.0; order + 1];
            row[0] = *w;
            row
        }).collect();
        let stencil = difference_stencil(order);
        for r in 0..n - order {
            for a in 0..=order {
                for b in a..=order {
                    band[r + a][b - a] += lambda * stencil[a] * stencil[b];
                }
            }
        }
        Self { band, bw: order }
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        if j - i > self.bw {
            0.0
        } else {
            self.band[i][j - i]
        }
    }

    fn mul(&self, z: &[f64]) -> Vec<f64> {
        let n = z.len();
        (0..n)
            .map(|i| {
                let lo = i.saturating_sub(self.bw);
                let hi = (i + self.bw).min(n - 1);
                (lo..=hi).map(|j| self.get(i, j) * z[j]).sum()
            })
            .collect()
    }

    /// Banded Cholesky `A = L L^T`, then two triangular solves.
    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = rhs.len();
        let bw = self.bw;
        // l[i][k] = L[i][i - k]
        let mut l = vec![vec![0.0; bw + 1]; n];
        for i in 0..n {
            for k in (0..=bw.min(i)).rev() {
                let j = i - k;
                let mut s = self.get(i, j);
                for m in 1..=bw {
                    if k + m > bw || m > j {
                        break;
                    }
                    s -= l[i][k + m] * l[j][m];
                }
                if k == 0 {
                    let scale = self.band[i][0].abs().max(1.0);
                    if !(s > 1e-14 * scale) {
                        return Err(Error::Singular);
                    }
                    l[i][0] = s.sqrt();
                } else {
                    l[i][k] = s / l[j][0];
                }
            }
        }
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = rhs[i];
            for k in 1..=bw.min(i) {
                s -= l[i][k] * y[i - k];
            }
            y[i] = s / l[i][0];
        }
        let mut z = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in 1..=bw.min(n - 1 - i) {
                s -= l[i + k][k] * z[i + k];
            }
            z[i] = s / l[i][0];
        }
        Ok(z)
    }
}

/// Minimizes `sum w_i (z_i - y_i)^2 + lambda sum (D^d z)^2`.
pub fn whittaker_smooth(y: &[f64], config: &SmootherConfig) -> Result<Vec<f64>> {
    let w = config.validate(y.len())?;
    if w.iter().all(|v| *v == 0.0) {
        return Err(Error::Singular);
    }
    if config.lambda == 0.0 && w.iter().all(|v| *v > 0.0) {
        return Ok(y.to_vec());
    }
    let system = Banded::system(&w, config.lambda, config.order);
    let rhs: Vec<f64> = w.iter().zip(y).map(|(w, y)| w * y).collect();
    system.solve(&rhs)
}

/// `max_i |((W + lambda D^T D) z - W y)_i|`.
pub fn normal_equation_residual(y: &[f64], z: &[f64], config: &SmootherConfig) -> Result<f64> {
    let w = config.validate(y.len())?;
    if z.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: y.len(), actual: z.len() });
    }
    let lhs = Banded::system(&w, config.lambda, config.order).mul(z);
    Ok(lhs.iter().zip(w.iter().zip(y)).map(|(a, (w, y))| (a - w * y).abs()).fold(0.0, f64::max))
}

/// Derivative at `at` of the parabola through three points.
fn three_point(xs: [f64; 3], ys: [f64; 3], at: f64) -> f64 {
    let [x0, x1, x2] = xs;
    let [y0, y1, y2] = ys;
    y0 * (2.0 * at - x1 - x2) / ((x0 - x1) * (x0 - x2))
        + y1 * (2.0 * at - x0 - x2) / ((x1 - x0) * (x1 - x2))
        + y2 * (2.0 * at - x0 - x1) / ((x2 - x0) * (x2 - x1))
}

/// Second-order differences on a possibly non-uniform grid.
pub fn finite_difference(x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if z.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: z.len() });
    }
    if n < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 points, got {n}")));
    }
    let increasing = x.windows(2).all(|w| w[1] > w[0]);
    let decreasing = x.windows(2).all(|w| w[1] < w[0]);
    if !increasing && !decreasing {
        return Err(Error::InvalidArgument("grid must be strictly monotone".into()));
    }
    Ok((0..n)
        .map(|i| {
            let c = i.clamp(1, n - 2);
            three_point([x[c - 1], x[c], x[c + 1]], [z[c - 1], z[c], z[c + 1]], x[i])
        })
        .collect())
}

/// Smoothed values and their derivative.
pub fn smoothed_derivative(x: &[f64], y: &[f64], config: &SmootherConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), actual: y.len() });
    }
    if x.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 points, got {}", x.len())));
    }
    let z = whittaker_smooth(y, config)?;
    let d = finite_difference(x, &z)?;
    Ok((z, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stencils() {
        assert_eq!(difference_stencil(1), vec![-1.0, 1.0]);
        assert_eq!(difference_stencil(2), vec![1.0, -2.0, 1.0]);
        assert_eq!(difference_stencil(3), vec![-1.0, 3.0, -3.0, 1.0]);
    }

    #[test]
    fn zero_lambda_is_identity() {
        let y = [0.3, -1.0, 2.0, 0.1, 5.0];
        assert_eq!(whittaker_smooth(&y, &SmootherConfig::new(0.0, 2)).unwrap(), y.to_vec());
    }

    #[test]
    fn huge_lambda_gives_affine() {
        let y: Vec<f64> = (0..25).map(|i| ((i * 37) % 11) as f64 - 3.0).collect();
        let z = whittaker_smooth(&y, &SmootherConfig::new(1e9, 2)).unwrap();
        let max_second = z.windows(3).map(|w| (w[0] - 2.0 * w[1] + w[2]).abs()).fold(0.0, f64::max);
        assert!(max_second < 1e-6, "{max_second}");
    }

    #[test]
    fn reduces_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..32).map(|i| i as f64 * 0.2).collect();
        let clean: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        let noisy: Vec<f64> = clean.iter().map(|c| c + 0.2 * (rng.random::<f64>() - 0.5)).collect();
        let z = whittaker_smooth(&noisy, &SmootherConfig::new(10.0, 2)).unwrap();
        let rmse = |a: &[f64]| (a.iter().zip(&clean).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 32.0).sqrt();
        assert!(rmse(&z) < rmse(&noisy));
    }

    #[test]
    fn errors() {
        assert!(whittaker_smooth(&[1.0, 2.0], &SmootherConfig::new(1.0, 2)).is_err());
        assert!(whittaker_smooth(&[1.0; 5], &SmootherConfig::new(-1.0, 2)).is_err());
        assert!(whittaker_smooth(&[1.0; 5], &SmootherConfig::new(1.0, 4)).is_err());
        let zero = SmootherConfig { weights: Some(vec![0.0; 5]), ..SmootherConfig::new(1.0, 2) };
        assert!(matches!(whittaker_smooth(&[1.0; 5], &zero), Err(Error::Singular)));
        let short = SmootherConfig { weights: Some(vec![1.0; 4]), ..SmootherConfig::new(1.0, 2) };
        assert!(whittaker_smooth(&[1.0; 5], &short).is_err());
        assert!(smoothed_derivative(&[0.0, 1.0], &[0.0, 1.0], &SmootherConfig::new(0.0, 1)).is_err());
    }

    #[test]
    fn linear_data_exact_slope() {
        let x = [0.0, 0.3, 1.0, 1.1, 2.5, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let d = finite_difference(&x, &y).unwrap();
        assert!(d.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn reversal_negates_derivative() {
        let x = [1.0, 1.5, 2.2, 3.0, 3.1];
        let y: Vec<f64> = x.iter().map(|v: &f64| v.powi(3)).collect();
        let d = finite_difference(&x, &y).unwrap();
        let mut xr: Vec<f64> = x.iter().map(|v| -v).collect();
        xr.reverse();
        let mut yr = y.clone();
        yr.reverse();
        let mut dr = finite_difference(&xr, &yr).unwrap();
        dr.reverse();
        for (a, b) in d.iter().zip(&dr) {
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weight_points_have_no_influence() {
        let y: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).cos()).collect();
        let mut w = vec![1.0; 12];
        w[5] = 0.0;
        let cfg = SmootherConfig { weights: Some(w), ..SmootherConfig::new(3.0, 2) };
        let a = whittaker_smooth(&y, &cfg).unwrap();
        let mut y2 = y.clone();
        y2[5] = 1e3;
        let b = whittaker_smooth(&y2, &cfg).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn normal_equations_and_shift(y in prop::collection::vec(-5.0..5.0f64, 6..60), lambda in 0.0..1e3f64, order in 1usize..4, c in -10.0..10.0f64) {
            let cfg = SmootherConfig::new(lambda, order);
            let z = whittaker_smooth(&y, &cfg).unwrap();
            prop_assert!(normal_equation_residual(&y, &z, &cfg).unwrap() < 1e-9);
            let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
            let zs = whittaker_smooth(&shifted, &cfg).unwrap();
            for (a, b) in z.iter().zip(&zs) {
                prop_assert!((a + c - b).abs() < 1e-8);
            }
        }
    }
}
