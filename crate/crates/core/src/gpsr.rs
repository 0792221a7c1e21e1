//! Generalized parameter-shift differentiation with respect to the encoded
//! feature.
//!
//! If `f(x) = a_0 + sum_j [a_j cos(D_j x) + b_j sin(D_j x)]`, then
//! `F_k = f(x + s_k) - f(x - s_k) = sum_j 2 sin(D_j s_k) c_j` with
//! `c_j = -a_j sin(D_j x) + b_j cos(D_j x)`, and `f'(x) = sum_j D_j c_j`.
//! With as many shifts as gaps the system is square; its solution gives the
//! derivative as a fixed linear combination `sum_k w_k F_k` with
//! `w = M^-T D`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{HermitianOperator, StateVector};
use crate::rydberg::{self, DriveSample, RegisterGeometry};
use crate::sampling::MagnetizationEstimate;

pub const DEFAULT_CONDITION_CAP: f64 = 1e8;
pub const BENCHMARK_SHIFTS: [f64; 2] = [0.90, 2.47];
const GAP_MERGE_TOL: f64 = 1e-6;

fn sorted_distinct(values: &[f64], what: &str) -> Result<Vec<f64>> {
    let mut v = values.to_vec();
    if v.is_empty() {
        return Err(Error::InvalidArgument(format!("{what} must not be empty")));
    }
    if v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} must be strictly positive")));
    }
    v.sort_by(f64::total_cmp);
    if v.windows(2).any(|w| w[1] - w[0] < 1e-9) {
        return Err(Error::InvalidArgument(format!("{what} contain duplicates")));
    }
    Ok(v)
}

/// Distinct positive spectral gaps, ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapSet(Vec<f64>);

impl GapSet {
    pub fn new(gaps: &[f64]) -> Result<Self> {
        sorted_distinct(gaps, "gaps").map(Self)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Distinct positive shift magnitudes. Order is kept as given so evaluation
/// records line up with the caller's shift list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftSet(Vec<f64>);

impl ShiftSet {
    pub fn new(shifts: &[f64]) -> Result<Self> {
        sorted_distinct(shifts, "shifts")?;
        Ok(Self(shifts.to_vec()))
    }

    pub fn benchmark() -> Self {
        Self(BENCHMARK_SHIFTS.to_vec())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftedEvaluation {
    pub x: f64,
    pub estimate: MagnetizationEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeEstimate {
    pub value: f64,
    pub std_error: f64,
    /// `f(x + s_1), f(x - s_1), f(x + s_2), ...`
    pub evaluations: Vec<ShiftedEvaluation>,
}

/// Precomputed linear weights of a shift rule.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftRule {
    shifts: Vec<f64>,
    /// Weight on `F_k = f(x + s_k) - f(x - s_k)`.
    weights: Vec<f64>,
    condition_number: f64,
}

impl ShiftRule {
    pub fn new(gaps: &GapSet, shifts: &ShiftSet, condition_cap: f64) -> Result<Self> {
        if gaps.len() != shifts.len() {
            return Err(Error::InvalidArgument(format!(
                "need as many shifts as gaps ({} vs {})",
                shifts.len(),
                gaps.len()
            )));
        }
        let n = gaps.len();
        let m = DMatrix::from_fn(n, n, |k, j| 2.0 * (gaps.values()[j] * shifts.values()[k]).sin());
        let sv = m.singular_values();
        let smax = sv.max();
        let smin = sv.min();
        // Entries are bounded by 2, so a vanishing singular value is singular
        // even for a 1x1 system.
        let condition_number = if smin > 1e-12 { smax / smin } else { f64::INFINITY };
        if !(condition_number <= condition_cap) {
            return Err(Error::IllConditioned(condition_number));
        }
        let rhs = DVector::from_column_slice(gaps.values());
        let weights = m.transpose().lu().solve(&rhs).ok_or(Error::IllConditioned(condition_number))?;
        Ok(Self { shifts: shifts.values().to_vec(), weights: weights.iter().copied().collect(), condition_number })
    }

    pub fn condition_number(&self) -> f64 {
        self.condition_number
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn shifts(&self) -> &[f64] {
        &self.shifts
    }

    /// Points at which `f` must be evaluated, in the order expected by
    /// [`ShiftRule::combine`].
    pub fn points(&self, x: f64) -> Vec<f64> {
        self.shifts.iter().flat_map(|s| [x + s, x - s]).collect()
    }

    /// Combines evaluations at [`ShiftRule::points`] into a derivative with
    /// propagated standard error.
    pub fn combine(&self, x: f64, estimates: &[MagnetizationEstimate]) -> Result<DerivativeEstimate> {
        if estimates.len() != 2 * self.shifts.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} evaluations, got {}",
                2 * self.shifts.len(),
                estimates.len()
            )));
        }
        let mut value = 0.0;
        let mut variance = 0.0;
        for (k, w) in self.weights.iter().enumerate() {
            let (plus, minus) = (&estimates[2 * k], &estimates[2 * k + 1]);
            value += w * (plus.value - minus.value);
            variance += w * w * (plus.std_error.powi(2) + minus.std_error.powi(2));
        }
        let evaluations = self
            .points(x)
            .into_iter()
            .zip(estimates)
            .map(|(x, e)| ShiftedEvaluation { x, estimate: *e })
            .collect();
        Ok(DerivativeEstimate { value, std_error: variance.sqrt(), evaluations })
    }

    pub fn derivative<F>(&self, mut f: F, x: f64) -> Result<DerivativeEstimate>
    where
        F: FnMut(f64) -> Result<MagnetizationEstimate>,
    {
        let estimates = self.points(x).into_iter().map(&mut f).collect::<Result<Vec<_>>>()?;
        self.combine(x, &estimates)
    }
}

/// Exact shift-rule derivative for `f` whose spectrum is contained in `gaps`.
pub fn gpsr_derivative<F>(f: F, x: f64, gaps: &GapSet, shifts: &ShiftSet) -> Result<DerivativeEstimate>
where
    F: FnMut(f64) -> Result<MagnetizationEstimate>,
{
    ShiftRule::new(gaps, shifts, DEFAULT_CONDITION_CAP)?.derivative(f, x)
}

/// Same linear system with a reduced set of effective gaps standing in for a
/// larger true spectrum; approximate when the spectrum is not covered.
pub fn agpsr_derivative<F>(f: F, x: f64, effective_gaps: &GapSet, shifts: &ShiftSet) -> Result<DerivativeEstimate>
where
    F: FnMut(f64) -> Result<MagnetizationEstimate>,
{
    gpsr_derivative(f, x, effective_gaps, shifts)
}

/// All distinct positive `(l_a - l_b) / 2` of a generator's eigenvalues.
pub fn spectral_gaps_of_generator(generator: &HermitianOperator) -> GapSet {
    let values = generator.eigenvalues();
    let mut gaps = Vec::new();
    for (a, la) in values.iter().enumerate() {
        for lb in &values[a + 1..] {
            gaps.push((lb - la).abs() / 2.0);
        }
    }
    GapSet(merge_close(gaps))
}

fn merge_close(mut values: Vec<f64>) -> Vec<f64> {
    values.retain(|g| *g > GAP_MERGE_TOL);
    values.sort_by(f64::total_cmp);
    let mut merged: Vec<f64> = Vec::new();
    for g in values {
        match merged.last() {
            Some(last) if g - last < GAP_MERGE_TOL => {}
            _ => merged.push(g),
        }
    }
    merged
}

/// A frequency of `f(x)` with the weight `|P_a psi| |P_b psi|` of the
/// eigenspace pair producing it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectralLine {
    pub gap: f64,
    pub weight: f64,
}

/// Frequencies reachable from `reference` under `exp(-i (x/2) G)`, ascending.
pub fn spectral_lines(generator: &HermitianOperator, reference: &StateVector) -> Result<Vec<SpectralLine>> {
    if generator.dim() != reference.dim() {
        return Err(Error::DimensionMismatch { expected: generator.dim(), actual: reference.dim() });
    }
    let spectrum = generator.spectrum();
    let psi = reference.amplitudes();
    // Eigenspaces: (eigenvalue, squared projection norm).
    let mut spaces: Vec<(f64, f64)> = Vec::new();
    for (j, &lambda) in spectrum.values.iter().enumerate() {
        let amp: num_complex::Complex64 =
            (0..psi.len()).map(|i| spectrum.vectors[(i, j)].conj() * psi[i]).sum();
        match spaces.last_mut() {
            Some((l, p)) if (lambda - *l).abs() < GAP_MERGE_TOL => *p += amp.norm_sqr(),
            _ => spaces.push((lambda, amp.norm_sqr())),
        }
    }
    let mut lines: Vec<SpectralLine> = Vec::new();
    for (a, &(la, pa)) in spaces.iter().enumerate() {
        for &(lb, pb) in &spaces[a + 1..] {
            let weight = (pa * pb).sqrt();
            if weight < 1e-12 {
                continue;
            }
            let gap = (lb - la) / 2.0;
            match lines.iter_mut().find(|l| (l.gap - gap).abs() < GAP_MERGE_TOL) {
                Some(line) => line.weight += weight,
                None => lines.push(SpectralLine { gap, weight }),
            }
        }
    }
    lines.sort_by(|a, b| a.gap.total_cmp(&b.gap));
    Ok(lines)
}

/// Reduces the reachable spectrum to `count` effective gaps by repeatedly
/// merging the two closest lines into their weight-averaged frequency.
///
/// This is a stand-in for a dedicated gap-selection procedure and can be
/// swapped for explicitly configured gaps.
pub fn effective_gaps(generator: &HermitianOperator, reference: &StateVector, count: usize) -> Result<GapSet> {
    let mut lines = spectral_lines(generator, reference)?;
    if count == 0 || lines.len() < count {
        return Err(Error::InvalidArgument(format!(
            "cannot select {count} effective gaps from {} spectral lines",
            lines.len()
        )));
    }
    while lines.len() > count {
        let k = (0..lines.len() - 1)
            .min_by(|&a, &b| {
                let da = lines[a + 1].gap - lines[a].gap;
                let db = lines[b + 1].gap - lines[b].gap;
                da.total_cmp(&db)
            })
            .expect("at least two lines");
        let (a, b) = (lines[k], lines[k + 1]);
        let weight = a.weight + b.weight;
        lines[k] = SpectralLine { gap: (a.gap * a.weight + b.gap * b.weight) / weight, weight };
        lines.remove(k + 1);
    }
    GapSet::new(&lines.iter().map(|l| l.gap).collect::<Vec<_>>())
}

/// Feature-map generator `G_FM = (2/Omega) H_FM`, with `H_FM` the register
/// Hamiltonian of a resonant, zero-phase drive of amplitude `Omega`.
pub fn feature_map_generator(fm_omega: f64, geometry: &RegisterGeometry) -> Result<HermitianOperator> {
    if !(fm_omega > 0.0) {
        return Err(Error::InvalidArgument(format!("fm_omega must be positive, got {fm_omega}")));
    }
    let h = rydberg::build_hamiltonian(&DriveSample { omega: fm_omega, delta: 0.0, phi: 0.0 }, geometry)?;
    Ok(h.scaled(2.0 / fm_omega))
}
