//! Finite-shot readout: Born-rule bitstring sampling, dropped preparation
//! failures, pooling of multiplexed copies and magnetization estimates.
//!
//! Bitstrings list qubit 0 as the leftmost character; `'1'` is a Rydberg
//! outcome (`z = +1`), `'0'` the ground state (`z = -1`).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::StateVector;

pub const DEFAULT_SHOTS: u64 = 200;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub counts: BTreeMap<String, u64>,
    #[serde(rename = "requested")]
    pub requested_shots: u64,
    #[serde(rename = "valid")]
    pub valid_shots: u64,
}

impl ShotRecord {
    pub fn from_counts<I, S>(counts: I) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut map = BTreeMap::new();
        for (bits, n) in counts {
            *map.entry(bits.into()).or_insert(0) += n;
        }
        let valid = map.values().sum();
        Self { counts: map, requested_shots: valid, valid_shots: valid }
    }

    pub fn bit_length(&self) -> Option<usize> {
        self.counts.keys().next().map(String::len)
    }

    fn check_consistent(&self) -> Result<()> {
        let total: u64 = self.counts.values().sum();
        if total != self.valid_shots || self.valid_shots > self.requested_shots {
            return Err(Error::InvalidArgument(format!(
                "inconsistent shot record: counts sum {total}, valid {}, requested {}",
                self.valid_shots, self.requested_shots
            )));
        }
        if let Some(len) = self.bit_length() {
            for key in self.counts.keys() {
                if key.len() != len || !key.bytes().all(|b| b == b'0' || b == b'1') {
                    return Err(Error::InvalidArgument(format!("malformed bitstring {key:?}")));
                }
            }
        }
        Ok(())
    }
}

/// Mean total magnetization with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagnetizationEstimate {
    pub value: f64,
    pub std_error: f64,
    /// Valid shots behind the estimate; `None` for exact expectation values.
    pub shots: Option<u64>,
}

impl MagnetizationEstimate {
    pub fn exact(value: f64) -> Self {
        Self { value, std_error: 0.0, shots: None }
    }
}

/// Mixes a master seed with an evaluation's coordinates so every sequence
/// draws from its own stream regardless of execution order.
pub fn derive_seed(master: u64, x: f64, theta: f64, index: u64) -> u64 {
    let mut h = splitmix(master ^ 0x6a09_e667_f3bc_c908);
    for word in [x.to_bits(), theta.to_bits(), index] {
        h = splitmix(h ^ word);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn bitstring(index: usize, n_qubits: usize) -> String {
    format!("{index:0n_qubits$b}")
}

/// Draws `shots` computational-basis outcomes from `|amplitude|^2`.
pub fn sample(state: &StateVector, shots: u64, seed: u64) -> Result<ShotRecord> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shots must be >= 1".into()));
    }
    let norm = state.norm();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::NotNormalized(norm));
    }
    let probabilities = state.probabilities();
    let mut cumulative = Vec::with_capacity(probabilities.len());
    let mut acc = 0.0;
    for p in &probabilities {
        acc += p;
        cumulative.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tallies = vec![0u64; probabilities.len()];
    for _ in 0..shots {
        let u: f64 = rng.random::<f64>() * acc;
        let k = cumulative.partition_point(|&c| c <= u).min(tallies.len() - 1);
        tallies[k] += 1;
    }
    let counts = tallies
        .into_iter()
        .enumerate()
        .filter(|&(_, n)| n > 0)
        .map(|(k, n)| (bitstring(k, state.n_qubits()), n))
        .collect();
    Ok(ShotRecord { counts, requested_shots: shots, valid_shots: shots })
}

/// Drops each valid shot independently with probability `failure_rate`.
pub fn apply_prep_failure(record: &ShotRecord, failure_rate: f64, seed: u64) -> Result<ShotRecord> {
    if !(0.0..1.0).contains(&failure_rate) {
        return Err(Error::InvalidArgument(format!("failure rate must lie in [0, 1), got {failure_rate}")));
    }
    if failure_rate == 0.0 {
        return Ok(record.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = BTreeMap::new();
    let mut valid = 0;
    for (bits, &n) in &record.counts {
        let kept = (0..n).filter(|_| rng.random::<f64>() >= failure_rate).count() as u64;
        if kept > 0 {
            counts.insert(bits.clone(), kept);
            valid += kept;
        }
    }
    Ok(ShotRecord { counts, requested_shots: record.requested_shots, valid_shots: valid })
}

/// Pools the shots of copies that ran the same sequence.
pub fn aggregate_multiplex(records: &[ShotRecord]) -> Result<ShotRecord> {
    let first = records.first().ok_or_else(|| Error::InvalidArgument("no records to aggregate".into()))?;
    let mut width = first.bit_length();
    let mut pooled = ShotRecord { counts: BTreeMap::new(), requested_shots: 0, valid_shots: 0 };
    for record in records {
        record.check_consistent()?;
        match (width, record.bit_length()) {
            (Some(a), Some(b)) if a != b => return Err(Error::BitstringLength(a, b)),
            (None, b) => width = b,
            _ => {}
        }
        for (bits, &n) in &record.counts {
            *pooled.counts.entry(bits.clone()).or_insert(0) += n;
        }
        pooled.requested_shots += record.requested_shots;
        pooled.valid_shots += record.valid_shots;
    }
    Ok(pooled)
}

fn magnetization_of(bits: &str) -> f64 {
    bits.bytes().map(|b| if b == b'1' { 1.0 } else { -1.0 }).sum()
}

/// Sample mean of `sum_i z_i` with standard error `s / sqrt(N)`, `s` the
/// unbiased sample standard deviation (zero for a single shot).
pub fn magnetization_estimate(record: &ShotRecord) -> Result<MagnetizationEstimate> {
    record.check_consistent()?;
    if record.valid_shots == 0 {
        return Err(Error::NoValidShots);
    }
    let n = record.valid_shots as f64;
    let mean = record.counts.iter().map(|(b, &k)| magnetization_of(b) * k as f64).sum::<f64>() / n;
    let std_error = if record.valid_shots > 1 {
        let ss: f64 = record.counts.iter().map(|(b, &k)| (magnetization_of(b) - mean).powi(2) * k as f64).sum();
        (ss / (n - 1.0)).sqrt() / n.sqrt()
    } else {
        0.0
    };
    Ok(MagnetizationEstimate { value: mean, std_error, shots: Some(record.valid_shots) })
}

/// Shot-noise settings for one sequence execution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotConfig {
    /// Shots requested per copy.
    pub shots: u64,
    /// Multiplexed copies executing the sequence simultaneously.
    pub copies: u32,
    pub prep_failure_rate: f64,
}

impl Default for ShotConfig {
    fn default() -> Self {
        Self { shots: DEFAULT_SHOTS, copies: 1, prep_failure_rate: 0.0 }
    }
}

/// Samples every copy from its own stream, drops failed preparations and
/// pools the result.
pub fn measure(state: &StateVector, config: &ShotConfig, seed: u64) -> Result<ShotRecord> {
    if config.copies == 0 {
        return Err(Error::InvalidArgument("at least one copy is required".into()));
    }
    let mut records = Vec::with_capacity(config.copies as usize);
    for copy in 0..config.copies as u64 {
        let copy_seed = splitmix(seed ^ splitmix(copy));
        let raw = sample(state, config.shots, copy_seed)?;
        records.push(apply_prep_failure(&raw, config.prep_failure_rate, splitmix(copy_seed))?);
    }
    aggregate_multiplex(&records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::C64;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn uniform2() -> StateVector {
        StateVector::from_amplitudes(vec![C64::from(0.5); 4]).unwrap()
    }

    #[test]
    fn deterministic_state() {
        let r = sample(&StateVector::ground(2).unwrap(), 100, 7).unwrap();
        assert_eq!(r.counts, BTreeMap::from([("00".to_string(), 100)]));
        let r = sample(&StateVector::basis(2, 2).unwrap(), 5, 7).unwrap();
        assert_eq!(r.counts, BTreeMap::from([("10".to_string(), 5)]));
    }

    #[test]
    fn uniform_frequencies_within_binomial_bound() {
        let n = 100_000u64;
        let r = sample(&uniform2(), n, 11).unwrap();
        let sigma = (0.25f64 * 0.75 / n as f64).sqrt();
        for bits in ["00", "01", "10", "11"] {
            let freq = r.counts[bits] as f64 / n as f64;
            assert!((freq - 0.25).abs() < 4.0 * sigma, "{bits}: {freq}");
        }
    }

    #[test]
    fn same_seed_same_counts() {
        assert_eq!(sample(&uniform2(), 500, 3).unwrap(), sample(&uniform2(), 500, 3).unwrap());
        assert_ne!(sample(&uniform2(), 500, 3).unwrap(), sample(&uniform2(), 500, 4).unwrap());
    }

    #[test]
    fn rejects_zero_shots() {
        assert!(sample(&uniform2(), 0, 1).is_err());
    }

    #[test]
    fn prep_failure() {
        let r = sample(&uniform2(), 100_000, 5).unwrap();
        assert_eq!(apply_prep_failure(&r, 0.0, 1).unwrap(), r);
        let dropped = apply_prep_failure(&r, 0.5, 1).unwrap();
        let sigma = (100_000.0f64 * 0.25).sqrt();
        assert!((dropped.valid_shots as f64 - 50_000.0).abs() < 4.0 * sigma);
        assert_eq!(dropped.requested_shots, 100_000);
        assert_eq!(dropped.counts.values().sum::<u64>(), dropped.valid_shots);
        assert!(apply_prep_failure(&r, 1.0, 1).is_err());
    }

    #[test]
    fn total_prep_failure_propagates_to_estimate() {
        let r = ShotRecord::from_counts([("00", 3)]);
        let dropped = (0..50)
            .map(|seed| apply_prep_failure(&r, 0.999, seed).unwrap())
            .find(|d| d.valid_shots == 0)
            .expect("some seed drops every shot");
        assert!(matches!(magnetization_estimate(&dropped), Err(Error::NoValidShots)));
    }

    #[test]
    fn aggregation() {
        let a = ShotRecord::from_counts([("00", 50)]);
        let pooled = aggregate_multiplex(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(pooled.counts["00"], 100);
        assert_eq!(pooled.valid_shots, 100);
        let wide = ShotRecord::from_counts([("000", 1)]);
        assert!(matches!(aggregate_multiplex(&[a, wide]), Err(Error::BitstringLength(2, 3))));
        assert!(aggregate_multiplex(&[]).is_err());
    }

    #[test]
    fn estimates() {
        let e = magnetization_estimate(&ShotRecord::from_counts([("00", 200)])).unwrap();
        assert_eq!((e.value, e.std_error), (-2.0, 0.0));

        // values -2 and +2, 100 each: s^2 = 200*4/199, se = s/sqrt(200)
        let e = magnetization_estimate(&ShotRecord::from_counts([("00", 100), ("11", 100)])).unwrap();
        assert_abs_diff_eq!(e.value, 0.0);
        assert_abs_diff_eq!(e.std_error, (800.0f64 / 199.0).sqrt() / 200f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(e.std_error, 0.141, epsilon = 1e-3);

        let e = magnetization_estimate(&ShotRecord::from_counts([("01", 50), ("10", 50)])).unwrap();
        assert_eq!((e.value, e.std_error), (0.0, 0.0));
        assert_eq!(e.shots, Some(100));
    }

    #[test]
    fn json_schema() {
        let r = ShotRecord::from_counts([("01", 2)]);
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(text, r#"{"counts":{"01":2},"requested":2,"valid":2}"#);
        assert_eq!(serde_json::from_str::<ShotRecord>(&text).unwrap(), r);
    }

    #[test]
    fn multiplexing_doubles_shots() {
        let cfg = ShotConfig { shots: 200, copies: 2, prep_failure_rate: 0.0 };
        let r = measure(&uniform2(), &cfg, 9).unwrap();
        assert_eq!(r.valid_shots, 400);
    }

    fn record_strategy() -> impl Strategy<Value = ShotRecord> {
        prop::collection::vec(0u64..40, 4).prop_map(|n| {
            ShotRecord::from_counts(["00", "01", "10", "11"].into_iter().zip(n).filter(|(_, k)| *k > 0))
        })
    }

    proptest! {
        #[test]
        fn aggregation_commutes_and_matches_pooled(a in record_strategy(), b in record_strategy(), c in record_strategy()) {
            let ab_c = aggregate_multiplex(&[aggregate_multiplex(&[a.clone(), b.clone()]).unwrap(), c.clone()]).unwrap();
            let c_ba = aggregate_multiplex(&[c.clone(), aggregate_multiplex(&[b.clone(), a.clone()]).unwrap()]).unwrap();
            prop_assert_eq!(&ab_c, &c_ba);
            let mut pooled = a.counts.clone();
            for (k, v) in b.counts.iter().chain(c.counts.iter()) {
                *pooled.entry(k.clone()).or_insert(0) += v;
            }
            let direct = ShotRecord::from_counts(pooled);
            if direct.valid_shots > 0 {
                prop_assert_eq!(magnetization_estimate(&ab_c).unwrap(), magnetization_estimate(&direct).unwrap());
            }
        }
    }
}
