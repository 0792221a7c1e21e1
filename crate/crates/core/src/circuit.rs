//! Feature map and ansatz as a square-pulse sequence, its execution on the
//! register, and the enumeration of every sequence a closed-loop experiment
//! needs.
//!
//! The feature map is a drive of amplitude `fm_omega` at zero detuning and
//! phase, lasting `x / fm_omega`, so that it implements
//! `exp(-i (x/2) G_FM)` with `G_FM = (2/Omega)((Omega/2) sum X + V N_1 N_2)`.
//! The ansatz is a second drive with phase `theta`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{self, StateVector};
use crate::rydberg::{self, DriveSample, RegisterGeometry, Waveform, OMEGA_DEFAULT};
use crate::sampling::{self, MagnetizationEstimate, ShotConfig};

pub const DEFAULT_MAX_SEQUENCE_DURATION: f64 = 5.0;
pub const DEFAULT_STEP: f64 = 1e-3;
/// Tolerance under which a shifted point also serves as the boundary point.
pub const DEFAULT_BOUNDARY_TOLERANCE: f64 = 5e-3;
const COINCIDENCE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Drive,
    Delay,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSegment {
    pub kind: SegmentKind,
    pub duration: f64,
    pub omega: f64,
    pub delta: f64,
    pub phi: f64,
}

impl PulseSegment {
    pub fn drive(duration: f64, omega: f64, delta: f64, phi: f64) -> Self {
        Self { kind: SegmentKind::Drive, duration, omega, delta, phi }
    }

    pub fn delay(duration: f64, delta: f64) -> Self {
        Self { kind: SegmentKind::Delay, duration, omega: 0.0, delta, phi: 0.0 }
    }

    pub fn sample(&self) -> DriveSample {
        DriveSample { omega: self.omega, delta: self.delta, phi: self.phi }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Modulation {
    /// Ideal square pulses, exact exponentials per segment.
    Ideal,
    /// First-order low-pass on the complex drive with the given 3 dB bandwidth
    /// (MHz), integrated with step `dt` (us).
    Smoothed { bandwidth: f64, dt: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CircuitSpec {
    pub fm_omega: f64,
    pub ansatz_omega: f64,
    pub ansatz_duration: f64,
    pub inter_pulse_delay: f64,
    pub delay_detuning: f64,
    /// Systematic detuning added to every segment.
    pub detuning_offset: f64,
    pub modulation: Modulation,
    pub max_sequence_duration: f64,
}

impl Default for CircuitSpec {
    fn default() -> Self {
        Self {
            fm_omega: OMEGA_DEFAULT,
            ansatz_omega: OMEGA_DEFAULT,
            ansatz_duration: PI / OMEGA_DEFAULT,
            inter_pulse_delay: 0.0,
            delay_detuning: 0.0,
            detuning_offset: 0.0,
            modulation: Modulation::Ideal,
            max_sequence_duration: DEFAULT_MAX_SEQUENCE_DURATION,
        }
    }
}

impl CircuitSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
            }
        };
        positive("fm_omega", self.fm_omega)?;
        positive("max_sequence_duration", self.max_sequence_duration)?;
        if !(self.ansatz_omega >= 0.0) || !(self.ansatz_duration >= 0.0) || !(self.inter_pulse_delay >= 0.0) {
            return Err(Error::InvalidArgument("ansatz amplitude, ansatz duration and delay must be >= 0".into()));
        }
        if let Modulation::Smoothed { bandwidth, dt } = self.modulation {
            positive("bandwidth", bandwidth)?;
            positive("dt", dt)?;
        }
        Ok(())
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.detuning_offset = offset;
        self
    }
}

/// `[feature-map drive, optional delay, ansatz drive]`.
pub fn build_sequence(x: f64, theta: f64, spec: &CircuitSpec) -> Result<Vec<PulseSegment>> {
    spec.validate()?;
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidArgument(format!("feature value must be positive, got {x}")));
    }
    let fm_duration = x / spec.fm_omega;
    let total = fm_duration + spec.inter_pulse_delay + spec.ansatz_duration;
    if total > spec.max_sequence_duration {
        return Err(Error::InvalidArgument(format!(
            "sequence lasts {total:.4} us, above the {:.4} us limit",
            spec.max_sequence_duration
        )));
    }
    let offset = spec.detuning_offset;
    let mut segments = vec![PulseSegment::drive(fm_duration, spec.fm_omega, offset, 0.0)];
    if spec.inter_pulse_delay > 0.0 {
        segments.push(PulseSegment::delay(spec.inter_pulse_delay, spec.delay_detuning + offset));
    }
    segments.push(PulseSegment::drive(spec.ansatz_duration, spec.ansatz_omega, offset, theta));
    Ok(segments)
}

/// Evolves `|0...0>` through `segments`.
pub fn run_sequence(segments: &[PulseSegment], geometry: &RegisterGeometry, modulation: Modulation) -> Result<StateVector> {
    let state = StateVector::ground(geometry.n_atoms())?;
    match modulation {
        Modulation::Ideal => segments.iter().try_fold(state, |psi, seg| {
            let h = rydberg::build_hamiltonian(&seg.sample(), geometry)?;
            quantum::evolve_constant(&psi, &h, seg.duration)
        }),
        Modulation::Smoothed { bandwidth, dt } => {
            let waveform = smoothed_waveform(segments, bandwidth, dt);
            if waveform.samples.len() < 2 {
                return Ok(state);
            }
            rydberg::evolve_waveform(&state, &waveform, geometry)
        }
    }
}

/// Samples the segments on a uniform grid and passes the complex drive
/// `Omega e^{i phi}` through a first-order low-pass filter; the detuning
/// follows its target instantly.
pub fn smoothed_waveform(segments: &[PulseSegment], bandwidth: f64, dt: f64) -> Waveform {
    let total: f64 = segments.iter().map(|s| s.duration).sum();
    let steps = (total / dt).round().max(0.0) as usize;
    let tau = 1.0 / (2.0 * PI * bandwidth);
    let decay = (-dt / tau).exp();
    let mut samples = Vec::with_capacity(steps + 1);
    let (mut i, mut q) = (0.0, 0.0);
    for k in 0..=steps {
        let t = (k as f64 * dt).min(total);
        let target = segment_at(segments, t);
        if k > 0 {
            let (ti, tq) = (target.omega * target.phi.cos(), target.omega * target.phi.sin());
            i = ti + (i - ti) * decay;
            q = tq + (q - tq) * decay;
        }
        let omega = i.hypot(q);
        let phi = if omega > 0.0 { q.atan2(i) } else { target.phi };
        samples.push(DriveSample { omega, delta: target.delta, phi });
    }
    let effective_dt = if steps > 0 { total / steps as f64 } else { dt };
    Waveform { dt: effective_dt, samples }
}

fn segment_at(segments: &[PulseSegment], t: f64) -> DriveSample {
    let mut start = 0.0;
    for seg in segments {
        if t < start + seg.duration {
            return seg.sample();
        }
        start += seg.duration;
    }
    segments.last().map(PulseSegment::sample).unwrap_or_default()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Readout {
    Exact,
    Sampled(ShotConfig),
}

/// Exact or sampled total magnetization of a sequence's output state.
pub fn measure_sequence(
    segments: &[PulseSegment],
    geometry: &RegisterGeometry,
    modulation: Modulation,
    readout: &Readout,
    seed: u64,
) -> Result<MagnetizationEstimate> {
    let state = run_sequence(segments, geometry, modulation)?;
    match readout {
        Readout::Exact => {
            let observable = quantum::total_magnetization(geometry.n_atoms())?;
            Ok(MagnetizationEstimate::exact(quantum::expectation(&state, &observable)?))
        }
        Readout::Sampled(config) => sampling::magnetization_estimate(&sampling::measure(&state, config, seed)?),
    }
}

/// `f_theta(x)` before any output scaling.
pub fn run_circuit(
    x: f64,
    theta: f64,
    spec: &CircuitSpec,
    geometry: &RegisterGeometry,
    readout: &Readout,
    seed: u64,
) -> Result<MagnetizationEstimate> {
    let segments = build_sequence(x, theta, spec)?;
    measure_sequence(&segments, geometry, spec.modulation, readout, seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Collocation,
    Shift,
    Boundary,
    Qel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub x: f64,
    pub theta: f64,
    pub role: Role,
    /// Collocation or QEL point this evaluation was shifted from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
    /// Signed shift applied to `center`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
    /// Set when this evaluation also stands in for the boundary point.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub serves_boundary: bool,
}

/// Inputs to [`plan_experiment`].
#[derive(Clone, Debug, PartialEq)]
pub struct PlanRequest {
    pub collocation: Vec<f64>,
    pub boundary_x: Option<f64>,
    pub thetas: Vec<f64>,
    pub shifts: Vec<f64>,
    /// `theta` at which the extremization points are differentiated.
    pub qel_theta: Option<f64>,
    pub qel_points: Vec<f64>,
    pub boundary_tolerance: f64,
    /// Also evaluate the unshifted collocation points (needed when the
    /// right-hand side depends on `f`).
    pub include_centers: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SequencePlan {
    pub entries: Vec<PlanEntry>,
}

impl SequencePlan {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sequence count per `theta`, keyed by the bit pattern's total order.
    pub fn counts_by_theta(&self) -> Vec<(f64, usize)> {
        let mut counts: Vec<(f64, usize)> = Vec::new();
        for e in &self.entries {
            match counts.iter_mut().find(|(t, _)| *t == e.theta) {
                Some((_, n)) => *n += 1,
                None => counts.push((e.theta, 1)),
            }
        }
        counts.sort_by(|a, b| a.0.total_cmp(&b.0));
        counts
    }

    pub fn at_theta(&self, theta: f64) -> impl Iterator<Item = &PlanEntry> {
        self.entries.iter().filter(move |e| e.theta == theta)
    }
}

fn push_unique(entries: &mut Vec<PlanEntry>, entry: PlanEntry) {
    let exists = entries
        .iter()
        .any(|e| e.theta == entry.theta && (e.x - entry.x).abs() < COINCIDENCE_TOL);
    if !exists {
        entries.push(entry);
    }
}

/// Enumerates the unique `(x, theta)` sequences of a closed-loop run: every
/// collocation point shifted by `+-s_k` at each `theta`, the extra
/// extremization points likewise at `qel_theta`, and the boundary point
/// unless a shifted point already lands on it.
pub fn plan_experiment(request: &PlanRequest) -> SequencePlan {
    let mut thetas = request.thetas.clone();
    if let Some(t) = request.qel_theta {
        if !request.qel_points.is_empty() && !thetas.contains(&t) {
            thetas.push(t);
        }
    }
    thetas.sort_by(f64::total_cmp);
    thetas.dedup();
    let mut shifts = request.shifts.clone();
    shifts.sort_by(f64::total_cmp);
    let mut collocation = request.collocation.clone();
    collocation.sort_by(f64::total_cmp);
    let mut extras = request.qel_points.clone();
    extras.sort_by(f64::total_cmp);

    let mut entries = Vec::new();
    for &theta in &thetas {
        let mut at_theta = Vec::new();
        let in_grid = request.thetas.contains(&theta);
        let mut centers: Vec<(f64, Role)> = Vec::new();
        if in_grid {
            centers.extend(collocation.iter().map(|&x| (x, Role::Shift)));
        }
        if request.qel_theta == Some(theta) {
            centers.extend(extras.iter().map(|&x| (x, Role::Qel)));
        }
        for &(center, role) in &centers {
            if in_grid && request.include_centers && role == Role::Shift {
                push_unique(&mut at_theta, PlanEntry {
                    x: center,
                    theta,
                    role: Role::Collocation,
                    center: Some(center),
                    shift: Some(0.0),
                    serves_boundary: false,
                });
            }
            for &s in &shifts {
                for signed in [s, -s] {
                    push_unique(&mut at_theta, PlanEntry {
                        x: center + signed,
                        theta,
                        role,
                        center: Some(center),
                        shift: Some(signed),
                        serves_boundary: false,
                    });
                }
            }
        }
        if let (true, Some(xb)) = (in_grid, request.boundary_x) {
            let nearest = at_theta
                .iter_mut()
                .filter(|e| (e.x - xb).abs() <= request.boundary_tolerance)
                .min_by(|a, b| (a.x - xb).abs().total_cmp(&(b.x - xb).abs()));
            match nearest {
                Some(entry) => entry.serves_boundary = true,
                None => at_theta.push(PlanEntry {
                    x: xb,
                    theta,
                    role: Role::Boundary,
                    center: None,
                    shift: None,
                    serves_boundary: true,
                }),
            }
        }
        at_theta.sort_by(|a, b| a.x.total_cmp(&b.x));
        entries.extend(at_theta);
    }
    SequencePlan { entries }
}

/// Groups plan entries by `theta` for per-curve processing.
pub fn group_by_theta(plan: &SequencePlan) -> BTreeMap<u64, Vec<&PlanEntry>> {
    let mut groups: BTreeMap<u64, Vec<&PlanEntry>> = BTreeMap::new();
    for e in &plan.entries {
        groups.entry(ordered_bits(e.theta)).or_default().push(e);
    }
    groups
}

/// Order-preserving map from `f64` to `u64` (for map keys).
pub fn ordered_bits(v: f64) -> u64 {
    let bits = v.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}
