//! Values keyed by a real coordinate, looked up with a tolerance.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointMap<T> {
    entries: Vec<(f64, T)>,
}

impl<T> Default for PointMap<T> {
    fn default() -> Self {
        Self { entries: Vec::new() }
    }
}

impl<T> PointMap<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces the value at `x` (exact key match within 1e-12).
    pub fn insert(&mut self, x: f64, value: T) {
        match self.entries.binary_search_by(|(k, _)| k.total_cmp(&x)) {
            Ok(i) => self.entries[i].1 = value,
            Err(i) => {
                if let Some(j) = [i.wrapping_sub(1), i].into_iter().find(|&j| {
                    self.entries.get(j).is_some_and(|(k, _)| (k - x).abs() < 1e-12)
                }) {
                    self.entries[j].1 = value;
                } else {
                    self.entries.insert(i, (x, value));
                }
            }
        }
    }

    /// Entry whose key is closest to `x`, if within `tol`.
    pub fn nearest(&self, x: f64, tol: f64) -> Option<(f64, &T)> {
        let i = self.entries.partition_point(|(k, _)| *k < x);
        [i.wrapping_sub(1), i]
            .into_iter()
            .filter_map(|j| self.entries.get(j))
            .filter(|(k, _)| (k - x).abs() <= tol)
            .min_by(|a, b| (a.0 - x).abs().total_cmp(&(b.0 - x).abs()))
            .map(|(k, v)| (*k, v))
    }

    pub fn get(&self, x: f64) -> Option<&T> {
        self.nearest(x, 1e-9).map(|(_, v)| v)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.get(x).is_some()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &T)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    pub fn keys(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|(k, _)| *k)
    }
}

impl<T> FromIterator<(f64, T)> for PointMap<T> {
    fn from_iter<I: IntoIterator<Item = (f64, T)>>(iter: I) -> Self {
        let mut map = Self::new();
        for (x, v) in iter {
            map.insert(x, v);
        }
        map
    }
}
