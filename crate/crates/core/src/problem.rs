//! The benchmark ODE `df/dx = sum_i a_i (x/scale)^i`, its grids, an exact
//! analytic oracle, and the on-disk problem description.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitSpec, PlanRequest, DEFAULT_BOUNDARY_TOLERANCE};
use crate::error::{Error, Result};
use crate::rydberg::{self, RegisterGeometry, C6_DEFAULT, PAIR_DISTANCE_DEFAULT};

pub const BENCHMARK_COEFFICIENTS: [f64; 7] = [63.1, -857.7, 4503.2, -11823.4, 16477.2, -11615.9, 3253.3];
pub const BENCHMARK_COLLOCATION: [f64; 8] = [2.614, 3.328, 4.042, 4.757, 5.471, 6.185, 6.900, 7.614];
pub const BENCHMARK_THETAS: [f64; 9] = [0.70, 1.40, 2.09, 2.79, 3.49, 4.19, 4.88, 5.58, 6.28];
pub const BENCHMARK_QEL_POINTS: [f64; 5] = [4.519, 4.995, 5.233, 5.709, 5.947];

/// A first-order ODE `df/dx = g(f, x)`.
pub trait FirstOrderOde {
    fn g(&self, f: f64, x: f64) -> f64;

    /// Whether `g` reads `f`; if not, collocation points need no unshifted
    /// function evaluation.
    fn depends_on_f(&self) -> bool {
        true
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialDE {
    pub coefficients: Vec<f64>,
    pub scale: f64,
    pub boundary_x: f64,
    pub boundary_value: f64,
    pub domain: (f64, f64),
}

impl PolynomialDE {
    pub fn benchmark() -> Self {
        Self {
            coefficients: BENCHMARK_COEFFICIENTS.to_vec(),
            scale: 8.0,
            boundary_x: 6.516,
            boundary_value: 0.0,
            domain: (2.0, 8.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.domain;
        if !(self.scale > 0.0) {
            return Err(Error::Problem(format!("scale must be positive, got {}", self.scale)));
        }
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Problem(format!("invalid domain ({lo}, {hi})")));
        }
        if !(lo..=hi).contains(&self.boundary_x) {
            return Err(Error::Problem(format!("boundary point {} outside the domain", self.boundary_x)));
        }
        if self.coefficients.is_empty() {
            return Err(Error::Problem("no coefficients".into()));
        }
        Ok(())
    }

    pub fn rhs(&self, x: f64) -> f64 {
        let u = x / self.scale;
        self.coefficients.iter().rev().fold(0.0, |acc, a| acc * u + a)
    }

    fn antiderivative(&self, x: f64) -> f64 {
        let u = x / self.scale;
        let poly = self
            .coefficients
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (i, a)| acc * u + a / (i as f64 + 1.0));
        self.scale * u * poly
    }

    /// Term-wise antiderivative pinned to the boundary condition.
    pub fn analytic_solution(&self, x: f64) -> f64 {
        self.antiderivative(x) - self.antiderivative(self.boundary_x) + self.boundary_value
    }

    /// Global minimizer of the analytic solution over the closed domain.
    pub fn analytic_extremum(&self) -> Result<Extremum> {
        self.validate()?;
        let (lo, hi) = self.domain;
        let n = 6000;
        let step = (hi - lo) / n as f64;
        let mut candidates = Vec::new();
        let mut a = lo;
        let mut ra = self.rhs(a);
        for k in 1..=n {
            let b = if k == n { hi } else { lo + k as f64 * step };
            let rb = self.rhs(b);
            if ra < 0.0 && rb >= 0.0 && b < hi {
                candidates.push(self.bisect(a, b));
            }
            a = b;
            ra = rb;
        }
        let mut best = Extremum { x: lo, value: self.analytic_solution(lo), at_boundary: true };
        for x in [hi].into_iter().chain(candidates) {
            let value = self.analytic_solution(x);
            if value < best.value {
                best = Extremum { x, value, at_boundary: x == lo || x == hi };
            }
        }
        Ok(best)
    }

    /// Sign change from - to + inside `[a, b]` refined by bisection.
    fn bisect(&self, mut a: f64, mut b: f64) -> f64 {
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b || b - a < 1e-13 {
                break;
            }
            let rm = self.rhs(m);
            if rm == 0.0 {
                return m;
            }
            if rm < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        if self.rhs(a).abs() < self.rhs(b).abs() {
            a
        } else {
            b
        }
    }
}

impl FirstOrderOde for PolynomialDE {
    fn g(&self, _f: f64, x: f64) -> f64 {
        self.rhs(x)
    }

    fn depends_on_f(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub x: f64,
    pub value: f64,
    /// No interior minimum beats the domain endpoints.
    pub at_boundary: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollocationSet {
    pub points: Vec<f64>,
    #[serde(default)]
    pub extra_qel_points: Vec<f64>,
}

impl CollocationSet {
    pub fn benchmark() -> Self {
        Self { points: BENCHMARK_COLLOCATION.to_vec(), extra_qel_points: BENCHMARK_QEL_POINTS.to_vec() }
    }

    pub fn validate(&self, domain: (f64, f64)) -> Result<()> {
        for (name, pts) in [("collocation", &self.points), ("qel", &self.extra_qel_points)] {
            if pts.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Problem(format!("{name} points must be sorted without duplicates")));
            }
            if let Some(p) = pts.iter().find(|p| !(**p > domain.0 && **p < domain.1)) {
                return Err(Error::Problem(format!("{name} point {p} outside the domain")));
            }
        }
        if self.points.is_empty() {
            return Err(Error::Problem("no collocation points".into()));
        }
        Ok(())
    }

    /// The extra points merged with the collocation points they fall
    /// between, i.e. the evenly spaced extremization grid.
    pub fn restricted_grid(&self) -> Vec<f64> {
        let Some((lo, hi)) = self
            .extra_qel_points
            .iter()
            .fold(None, |acc: Option<(f64, f64)>, &p| Some(acc.map_or((p, p), |(a, b)| (a.min(p), b.max(p)))))
        else {
            return Vec::new();
        };
        let spacing = self.extra_qel_points.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let pad = if spacing.is_finite() { spacing * 1.01 } else { 0.0 };
        let mut grid: Vec<f64> = self
            .points
            .iter()
            .copied()
            .filter(|&p| p >= lo - pad && p <= hi + pad)
            .chain(self.extra_qel_points.iter().copied())
            .collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        grid
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grids {
    pub collocation: Vec<f64>,
    pub thetas: Vec<f64>,
    #[serde(default)]
    pub qel_points: Vec<f64>,
    pub qel_theta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapChoice {
    /// Dominant effective gaps of the feature-map generator.
    Auto,
    Fixed(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Differentiation {
    pub shifts: Vec<f64>,
    #[serde(default = "default_gaps")]
    pub gaps: GapChoice,
    #[serde(default = "default_boundary_tolerance")]
    pub boundary_tolerance: f64,
}

fn default_gaps() -> GapChoice {
    GapChoice::Auto
}

fn default_boundary_tolerance() -> f64 {
    DEFAULT_BOUNDARY_TOLERANCE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Register {
    pub distance: f64,
    /// `C6 / 2 pi` in GHz um^6.
    pub c6_ghz: f64,
    /// Center-to-center separation of multiplexed copies (um).
    #[serde(default = "default_separation")]
    pub multiplex_separation: f64,
}

fn default_separation() -> f64 {
    50.0
}

impl Register {
    pub fn geometry(&self) -> Result<RegisterGeometry> {
        RegisterGeometry::pair(self.distance, rydberg::c6_from_ghz(self.c6_ghz))
    }

    pub fn multiplexed_geometry(&self) -> Result<RegisterGeometry> {
        RegisterGeometry::multiplexed_pairs(self.distance, self.multiplex_separation, rydberg::c6_from_ghz(self.c6_ghz))
    }
}

impl Default for Register {
    fn default() -> Self {
        Self { distance: PAIR_DISTANCE_DEFAULT, c6_ghz: C6_DEFAULT / (2.0 * std::f64::consts::PI * 1e3), multiplex_separation: 50.0 }
    }
}

/// Affine map `multiplier * magnetization + offset` from circuit output to
/// the model value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputScaling {
    pub multiplier: f64,
    pub offset: f64,
}

impl OutputScaling {
    pub const IDENTITY: Self = Self { multiplier: 1.0, offset: 0.0 };
}

impl Default for OutputScaling {
    fn default() -> Self {
        Self::IDENTITY
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub boundary: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { boundary: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingSettings {
    pub lambda: f64,
    pub order: usize,
}

impl Default for SmoothingSettings {
    fn default() -> Self {
        Self { lambda: 10.0, order: 2 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtremumMode {
    #[default]
    GridArgmin,
    SignChangeInterpolation,
}

/// Everything needed to reproduce one closed-loop run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub equation: PolynomialDE,
    pub grids: Grids,
    pub differentiation: Differentiation,
    #[serde(default)]
    pub circuit: CircuitSpec,
    #[serde(default)]
    pub register: Register,
    #[serde(default)]
    pub scaling: OutputScaling,
    #[serde(default)]
    pub loss: LossWeights,
    #[serde(default)]
    pub smoothing: SmoothingSettings,
    #[serde(default)]
    pub extremum_mode: ExtremumMode,
}

/// The shipped benchmark instance, identical to `problems/benchmark.toml`.
pub const BENCHMARK_PROBLEM_TOML: &str = include_str!("../../../problems/benchmark.toml");

impl Problem {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let problem: Self = toml::from_str(text).map_err(|e| Error::Problem(e.to_string()))?;
        problem.validate()?;
        Ok(problem)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let problem: Self = serde_json::from_str(text).map_err(|e| Error::Problem(e.to_string()))?;
        problem.validate()?;
        Ok(problem)
    }

    /// Reads TOML or JSON, chosen by extension.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }

    pub fn benchmark() -> Self {
        Self::from_toml_str(BENCHMARK_PROBLEM_TOML).expect("shipped problem file is valid")
    }

    pub fn validate(&self) -> Result<()> {
        self.equation.validate()?;
        let set = self.collocation_set();
        set.validate(self.equation.domain)?;
        if self.grids.thetas.is_empty() {
            return Err(Error::Problem("empty theta grid".into()));
        }
        if self.differentiation.shifts.is_empty() {
            return Err(Error::Problem("no shifts".into()));
        }
        if !self.grids.qel_points.is_empty() && self.grids.qel_theta.is_none() {
            return Err(Error::Problem("qel_points given without qel_theta".into()));
        }
        self.circuit.validate()?;
        self.register.geometry()?;
        Ok(())
    }

    pub fn collocation_set(&self) -> CollocationSet {
        CollocationSet { points: self.grids.collocation.clone(), extra_qel_points: self.grids.qel_points.clone() }
    }

    pub fn plan_request(&self) -> PlanRequest {
        PlanRequest {
            collocation: self.grids.collocation.clone(),
            boundary_x: Some(self.equation.boundary_x),
            thetas: self.grids.thetas.clone(),
            shifts: self.differentiation.shifts.clone(),
            qel_theta: self.grids.qel_theta,
            qel_points: self.grids.qel_points.clone(),
            boundary_tolerance: self.differentiation.boundary_tolerance,
            include_centers: self.equation.depends_on_f(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn rhs_values() {
        let de = PolynomialDE::benchmark();
        assert_eq!(de.rhs(0.0), 63.1);
        // 63.1 - 857.7 + 4503.2 - 11823.4 + 16477.2 - 11615.9 + 3253.3
        assert_abs_diff_eq!(de.rhs(8.0), -0.2, epsilon = 1e-9);
    }

    #[test]
    fn boundary_condition_holds_exactly() {
        let de = PolynomialDE::benchmark();
        assert_eq!(de.analytic_solution(6.516), 0.0);
        let shifted = PolynomialDE { boundary_value: 1.5, ..de.clone() };
        for x in [2.0, 4.4, 7.9] {
            assert_abs_diff_eq!(shifted.analytic_solution(x) - de.analytic_solution(x), 1.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn solution_derivative_matches_rhs() {
        let de = PolynomialDE::benchmark();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let h = 1e-5;
        for _ in 0..100 {
            let x = rng.random_range(2.0..8.0);
            let fd = (de.analytic_solution(x + h) - de.analytic_solution(x - h)) / (2.0 * h);
            assert_abs_diff_eq!(fd, de.rhs(x), epsilon = 1e-6);
        }
    }

    #[test]
    fn benchmark_extremum() {
        let de = PolynomialDE::benchmark();
        let ext = de.analytic_extremum().unwrap();
        assert_abs_diff_eq!(ext.x, 5.140, epsilon = 1e-3);
        assert!(de.rhs(ext.x).abs() < 1e-8);
        assert!(!ext.at_boundary);
    }

    #[test]
    fn parabola_extremum() {
        let de = PolynomialDE { coefficients: vec![-5.0, 1.0], scale: 1.0, boundary_x: 5.0, boundary_value: 0.0, domain: (2.0, 8.0) };
        let ext = de.analytic_extremum().unwrap();
        assert_abs_diff_eq!(ext.x, 5.0, epsilon = 1e-10);
        assert_abs_diff_eq!(ext.value, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn monotone_extremum_is_left_endpoint() {
        let de = PolynomialDE { coefficients: vec![1.0, 0.1], scale: 1.0, boundary_x: 3.0, boundary_value: 0.0, domain: (2.0, 8.0) };
        let ext = de.analytic_extremum().unwrap();
        assert_eq!(ext.x, 2.0);
        assert!(ext.at_boundary);
    }

    #[test]
    fn grids_match_shipped_file() {
        let p = Problem::benchmark();
        assert_eq!(p.equation, PolynomialDE::benchmark());
        assert_eq!(p.grids.collocation, BENCHMARK_COLLOCATION.to_vec());
        assert_eq!(p.grids.thetas, BENCHMARK_THETAS.to_vec());
        assert_eq!(p.grids.qel_points, BENCHMARK_QEL_POINTS.to_vec());
        assert_eq!(p.grids.qel_theta, Some(2.79));
        assert_eq!(p.differentiation.shifts, vec![0.90, 2.47]);
    }

    #[test]
    fn restricted_grid_is_evenly_spaced() {
        let grid = CollocationSet::benchmark().restricted_grid();
        assert_eq!(grid, vec![4.519, 4.757, 4.995, 5.233, 5.471, 5.709, 5.947, 6.185]);
        for w in grid.windows(2) {
            assert_abs_diff_eq!(w[1] - w[0], 0.238, epsilon = 1.5e-3);
        }
    }

    #[test]
    fn invalid_problems() {
        let mut de = PolynomialDE::benchmark();
        de.boundary_x = 9.0;
        assert!(de.validate().is_err());
        let set = CollocationSet { points: vec![3.0, 2.5], extra_qel_points: vec![] };
        assert!(set.validate((2.0, 8.0)).is_err());
        let set = CollocationSet { points: vec![1.0], extra_qel_points: vec![] };
        assert!(set.validate((2.0, 8.0)).is_err());
        assert!(Problem::from_toml_str("equation = 3").is_err());
    }
}
