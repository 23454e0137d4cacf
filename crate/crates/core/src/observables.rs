//! Localization probability, spatial distributions and height ratios.

use crate::error::{Error, Result};
use crate::lattice::WavefunctionField;
use crate::oracle::{NoiseKind, NoiseSpec};
use crate::scalar::{compensated_sum, Real};

/// The four nodes adjacent to the potential center, `{M/2-1, M/2}^2`.
pub fn marked_nodes(size: usize) -> [(usize, usize); 4] {
    let (a, b) = (size / 2 - 1, size / 2);
    [(a, a), (a, b), (b, a), (b, b)]
}

/// Probability `P_j` of finding the walker on the four marked nodes.
pub fn localization_probability<T: Real>(state: &WavefunctionField<T>) -> T {
    marked_nodes(state.size())
        .iter()
        .map(|&(p, q)| state.node_probability(p, q))
        .fold(T::zero(), |acc, x| acc + x)
}

/// Per-node probability grid `d[j, p, q]` at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSnapshot<T> {
    pub size: usize,
    pub step: usize,
    /// Row-major, `size^2` entries.
    pub values: Vec<T>,
}

impl<T: Real> DistributionSnapshot<T> {
    pub fn new(size: usize, step: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != size * size {
            return Err(Error::SizeMismatch {
                expected: size * size,
                found: values.len(),
            });
        }
        Ok(Self { size, step, values })
    }

    pub fn get(&self, p: usize, q: usize) -> T {
        self.values[p * self.size + q]
    }

    pub fn total(&self) -> T {
        compensated_sum(self.values.iter().copied())
    }

    /// Sum over the four marked nodes; equals [`localization_probability`]
    /// of the state the snapshot was taken from.
    pub fn marked_probability(&self) -> T {
        marked_nodes(self.size)
            .iter()
            .map(|&(p, q)| self.get(p, q))
            .fold(T::zero(), |acc, x| acc + x)
    }
}

pub fn distribution_snapshot<T: Real>(state: &WavefunctionField<T>, step: usize) -> DistributionSnapshot<T> {
    let values = state
        .left()
        .iter()
        .zip(state.right())
        .map(|(l, r)| l.norm_sqr() + r.norm_sqr())
        .collect();
    DistributionSnapshot {
        size: state.size(),
        step,
        values,
    }
}

/// Peak-to-background ratio `d[M/2-1, M/2-1] / d[1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeightRatio<T> {
    pub value: T,
    /// Set when the background cell is zero and `value` is infinite.
    pub zero_background: bool,
}

pub fn height_ratio<T: Real>(snapshot: &DistributionSnapshot<T>) -> HeightRatio<T> {
    let c = snapshot.size / 2 - 1;
    let peak = snapshot.get(c, c);
    let background = snapshot.get(1 % snapshot.size, 1 % snapshot.size);
    if background > T::zero() {
        HeightRatio {
            value: peak / background,
            zero_background: false,
        }
    } else {
        HeightRatio {
            value: T::infinity(),
            zero_background: true,
        }
    }
}

/// Provenance carried alongside a series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMeta {
    pub noise_kind: NoiseKind,
    pub noise_ratio: f64,
    pub master_seed: u64,
    /// Number of realizations averaged into the series.
    pub realizations: usize,
    /// Realization index for single runs, `None` for ensemble averages.
    pub realization: Option<usize>,
    pub config_hash: String,
}

impl SeriesMeta {
    pub fn from_noise<T: Real>(noise: &NoiseSpec<T>, config_hash: String) -> Self {
        Self {
            noise_kind: noise.kind,
            noise_ratio: noise.ratio.to_f64_lossy(),
            master_seed: noise.master_seed,
            realizations: 1,
            realization: None,
            config_hash,
        }
    }
}

impl Default for SeriesMeta {
    fn default() -> Self {
        Self {
            noise_kind: NoiseKind::None,
            noise_ratio: 0.0,
            master_seed: 0,
            realizations: 1,
            realization: None,
            config_hash: String::new(),
        }
    }
}

/// `P_j` for `j = 0, 1, ..., J_max`; the step index is the position.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries<T> {
    pub size: usize,
    pub probabilities: Vec<T>,
    pub meta: SeriesMeta,
}

impl<T: Real> TimeSeries<T> {
    pub fn new(size: usize, probabilities: Vec<T>) -> Self {
        Self {
            size,
            probabilities,
            meta: SeriesMeta::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Last recorded step.
    pub fn horizon(&self) -> usize {
        self.probabilities.len().saturating_sub(1)
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.probabilities.iter().copied().enumerate()
    }

    /// Total node count `N`.
    pub fn nodes(&self) -> usize {
        self.size * self.size
    }
}
