//! Analog neutral-atom Hamiltonian with a global drive and van der Waals
//! interactions between Rydberg pairs.
//!
//! Units: hbar = 1, angular frequencies in rad/us, times in us, distances in
//! um, so `C6` is in rad um^6 / us.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{self, HermitianOperator, StateVector};

/// `2 pi x 138 GHz um^6` expressed in rad um^6 / us.
pub const C6_DEFAULT: f64 = 2.0 * PI * 1.38e5;
pub const PAIR_DISTANCE_DEFAULT: f64 = 8.7;
pub const OMEGA_DEFAULT: f64 = 9.0;
pub const CROSSTALK_THRESHOLD_DEFAULT: f64 = 1e-3;

/// Converts a `C6` quoted in GHz um^6 (as `2 pi x value`) to rad um^6 / us.
pub fn c6_from_ghz(ghz_um6: f64) -> f64 {
    2.0 * PI * ghz_um6 * 1e3
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub group: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegisterGeometry {
    pub c6: f64,
    pub atoms: Vec<Atom>,
}

impl RegisterGeometry {
    pub fn new(atoms: Vec<Atom>, c6: f64) -> Result<Self> {
        let geometry = Self { c6, atoms };
        geometry.validate()?;
        Ok(geometry)
    }

    /// Two atoms `distance` apart on the x axis.
    pub fn pair(distance: f64, c6: f64) -> Result<Self> {
        Self::new(
            vec![Atom { x: 0.0, y: 0.0, group: 0 }, Atom { x: distance, y: 0.0, group: 0 }],
            c6,
        )
    }

    /// Two identical pairs whose centers are `separation` apart along y.
    pub fn multiplexed_pairs(distance: f64, separation: f64, c6: f64) -> Result<Self> {
        let mut atoms = Vec::with_capacity(4);
        for (group, y) in [(0, 0.0), (1, separation)] {
            atoms.push(Atom { x: -distance / 2.0, y, group });
            atoms.push(Atom { x: distance / 2.0, y, group });
        }
        Self::new(atoms, c6)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let geometry: Self = serde_json::from_str(text)?;
        geometry.validate()?;
        Ok(geometry)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c6 > 0.0) || !self.c6.is_finite() {
            return Err(Error::InvalidArgument(format!("c6 must be positive, got {}", self.c6)));
        }
        if self.atoms.is_empty() {
            return Err(Error::InvalidArgument("geometry has no atoms".into()));
        }
        for (i, a) in self.atoms.iter().enumerate() {
            for (j, b) in self.atoms.iter().enumerate().skip(i + 1) {
                if distance(a, b) <= 0.0 {
                    return Err(Error::CoincidentAtoms(i, j));
                }
            }
        }
        Ok(())
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    /// Atoms of one multiplexed copy as a standalone register.
    pub fn group(&self, group: u32) -> Result<Self> {
        let atoms: Vec<Atom> = self.atoms.iter().copied().filter(|a| a.group == group).collect();
        if atoms.is_empty() {
            return Err(Error::InvalidArgument(format!("no atoms in group {group}")));
        }
        Self::new(atoms, self.c6)
    }

    pub fn groups(&self) -> Vec<u32> {
        let mut groups: Vec<u32> = self.atoms.iter().map(|a| a.group).collect();
        groups.sort_unstable();
        groups.dedup();
        groups
    }
}

fn distance(a: &Atom, b: &Atom) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DriveSample {
    pub omega: f64,
    pub delta: f64,
    pub phi: f64,
}

impl DriveSample {
    pub fn new(omega: f64, delta: f64, phi: f64) -> Result<Self> {
        if !(omega >= 0.0) {
            return Err(Error::InvalidArgument(format!("omega must be >= 0, got {omega}")));
        }
        Ok(Self { omega, delta, phi })
    }
}

/// `C6 / r^6`.
pub fn interaction_strength(r: f64, c6: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be positive, got {r}")));
    }
    Ok(c6 / r.powi(6))
}

/// `(Omega/2)(cos phi sum X - sin phi sum Y) - (delta/2) sum Z + sum_{i<j} C6/r_ij^6 N_i N_j`.
pub fn build_hamiltonian(drive: &DriveSample, geometry: &RegisterGeometry) -> Result<HermitianOperator> {
    let n = geometry.n_atoms();
    let sx = quantum::collective(&quantum::sigma_x(), n)?;
    let sy = quantum::collective(&quantum::sigma_y(), n)?;
    let sz = quantum::collective(&quantum::sigma_z(), n)?;
    let mut h = sx
        .scaled(0.5 * drive.omega * drive.phi.cos())
        .plus(&sy.scaled(-0.5 * drive.omega * drive.phi.sin()))?
        .plus(&sz.scaled(-0.5 * drive.delta))?;
    h = h.plus(&interaction_term(geometry)?)?;
    Ok(h)
}

/// Diagonal van der Waals term `sum_{i<j} C6/r_ij^6 N_i N_j`.
pub fn interaction_term(geometry: &RegisterGeometry) -> Result<HermitianOperator> {
    let n = geometry.n_atoms();
    let mut total = HermitianOperator::zeros(1 << n);
    for i in 0..n {
        let ni = quantum::embed_single_qubit(&quantum::occupation(), i, n)?;
        for j in (i + 1)..n {
            let r = distance(&geometry.atoms[i], &geometry.atoms[j]);
            if r <= 0.0 {
                return Err(Error::CoincidentAtoms(i, j));
            }
            let nj = quantum::embed_single_qubit(&quantum::occupation(), j, n)?;
            let v = interaction_strength(r, geometry.c6)?;
            total = total.plus(&ni.product_unchecked(&nj).scaled(v))?;
        }
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CrosstalkReport {
    /// Smallest center-to-center distance between copies.
    pub separation: f64,
    /// `(C6 / D^6) / Omega`.
    pub ratio: f64,
    pub passes: bool,
}

/// Compares the residual interaction between multiplexed copies to the drive
/// amplitude. Copies are identified by the atoms' `group` tag.
pub fn multiplex_crosstalk_check(geometry: &RegisterGeometry, omega: f64, threshold: f64) -> Result<CrosstalkReport> {
    let mut centers: BTreeMap<u32, (f64, f64, usize)> = BTreeMap::new();
    for atom in &geometry.atoms {
        let entry = centers.entry(atom.group).or_insert((0.0, 0.0, 0));
        entry.0 += atom.x;
        entry.1 += atom.y;
        entry.2 += 1;
    }
    if centers.len() < 2 {
        return Err(Error::InvalidArgument("crosstalk check needs at least two groups".into()));
    }
    if !(omega > 0.0) {
        return Err(Error::InvalidArgument(format!("omega must be positive, got {omega}")));
    }
    let centers: Vec<Atom> = centers
        .into_iter()
        .map(|(group, (x, y, k))| Atom { x: x / k as f64, y: y / k as f64, group })
        .collect();
    let mut separation = f64::INFINITY;
    for (i, a) in centers.iter().enumerate() {
        for b in &centers[i + 1..] {
            separation = separation.min(distance(a, b));
        }
    }
    let ratio = interaction_strength(separation, geometry.c6)? / omega;
    Ok(CrosstalkReport { separation, ratio, passes: ratio < threshold })
}

/// Uniformly sampled drive, `samples[k]` at time `k * dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub dt: f64,
    pub samples: Vec<DriveSample>,
}

impl Waveform {
    pub fn duration(&self) -> f64 {
        self.dt * (self.samples.len().saturating_sub(1)) as f64
    }

    /// Linear interpolation between samples; clamps outside the range.
    pub fn at(&self, t: f64) -> DriveSample {
        let last = self.samples.len() - 1;
        let pos = (t / self.dt).clamp(0.0, last as f64);
        let k = (pos.floor() as usize).min(last.saturating_sub(1));
        if last == 0 {
            return self.samples[0];
        }
        let frac = pos - k as f64;
        let (a, b) = (self.samples[k], self.samples[k + 1]);
        // Interpolate the quadratures so phase wrap-around is harmless.
        let lerp = |p: f64, q: f64| p + frac * (q - p);
        let i = lerp(a.omega * a.phi.cos(), b.omega * b.phi.cos());
        let q = lerp(a.omega * a.phi.sin(), b.omega * b.phi.sin());
        let omega = i.hypot(q);
        let phi = if omega > 0.0 { q.atan2(i) } else { lerp(a.phi, b.phi) };
        DriveSample { omega, delta: lerp(a.delta, b.delta), phi }
    }
}

/// Fourth-order stepped evolution under the time-dependent register
/// Hamiltonian, using the waveform's own sample spacing as the step.
pub fn evolve_waveform(state: &StateVector, waveform: &Waveform, geometry: &RegisterGeometry) -> Result<StateVector> {
    if waveform.samples.is_empty() {
        return Err(Error::InvalidArgument("empty waveform".into()));
    }
    if !(waveform.dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {}", waveform.dt)));
    }
    let interaction = interaction_term(geometry)?;
    let n = geometry.n_atoms();
    let sx = quantum::collective(&quantum::sigma_x(), n)?;
    let sy = quantum::collective(&quantum::sigma_y(), n)?;
    let sz = quantum::collective(&quantum::sigma_z(), n)?;
    let hamiltonian_at = |t: f64| -> Result<HermitianOperator> {
        let d = waveform.at(t);
        sx.scaled(0.5 * d.omega * d.phi.cos())
            .plus(&sy.scaled(-0.5 * d.omega * d.phi.sin()))?
            .plus(&sz.scaled(-0.5 * d.delta))?
            .plus(&interaction)
    };
    quantum::evolve_stepped(state, hamiltonian_at, waveform.duration(), waveform.dt)
}
