//! Coulomb phase oracle and white-noise perturbations of it.
//!
//! A [`PhaseTable`] stores the product `e * phi[p, q]` so the kernel can turn
//! it into `exp(-i e phi)` without touching the charge again. Noise draws come
//! from a ChaCha8 generator keyed by `(master_seed, realization)` with the
//! time step as stream id, so any `(realization, step)` pair can be sampled
//! independently of every other one and the result never depends on
//! scheduling.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeConfig;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    /// Fixed for every step of a run (noiseless or spatial noise).
    Static,
    /// Valid for a single step only (spatiotemporal noise).
    PerStep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTable<T> {
    size: usize,
    values: Vec<T>,
    signal_max: T,
    walker_charge: T,
    kind: TableKind,
}

impl<T: Real> PhaseTable<T> {
    /// Table from explicit `e * phi` values (row-major). `signal_max` is
    /// taken as `max |value| / |e|`, or `max |value|` when `e = 0`.
    pub fn from_values(size: usize, values: Vec<T>, walker_charge: T) -> Result<Self> {
        if size < 2 || size % 2 != 0 {
            return Err(Error::InvalidGridSize(size));
        }
        if values.len() != size * size {
            return Err(Error::SizeMismatch {
                expected: size * size,
                found: values.len(),
            });
        }
        let max_abs = values.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let signal_max = if walker_charge == T::zero() {
            max_abs
        } else {
            max_abs / walker_charge.abs()
        };
        Ok(Self {
            size,
            values,
            signal_max,
            walker_charge,
            kind: TableKind::Static,
        })
    }

    /// All-zero table (free walk).
    pub fn zeros(size: usize, walker_charge: T) -> Result<Self> {
        Self::from_values(size, vec![T::zero(); size * size], walker_charge)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// `e * phi` values in row-major order.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn value(&self, p: usize, q: usize) -> T {
        self.values[(p % self.size) * self.size + (q % self.size)]
    }

    /// `max |phi|` of the noiseless potential.
    pub fn signal_max(&self) -> T {
        self.signal_max
    }

    pub fn walker_charge(&self) -> T {
        self.walker_charge
    }

    pub fn kind(&self) -> TableKind {
        self.kind
    }

    /// Copy of this table with `e * b[i]` added to every value.
    fn with_overlay(&self, noise: &[T], kind: TableKind) -> Self {
        let e = self.walker_charge;
        let values = self
            .values
            .iter()
            .zip(noise)
            .map(|(v, b)| *v + e * *b)
            .collect();
        Self {
            values,
            kind,
            ..self.clone()
        }
    }
}

/// Coulomb table `e Q / |x - center|` for the configured lattice.
///
/// With the center expressed in lattice units the spacing cancels out of
/// `phi = spacing * V(spacing * p, spacing * q)`; it is kept in the formula so
/// the table follows the continuum definition literally.
pub fn build_coulomb_table<T: Real>(config: &LatticeConfig<T>) -> Result<PhaseTable<T>> {
    config.validate()?;
    let size = config.size();
    let (cx, cy) = config.center();
    let eps = config.spacing;
    let q_src = config.source_charge;
    let e = config.walker_charge;

    let mut values = Vec::with_capacity(size * size);
    let mut signal_max = T::zero();
    for p in 0..size {
        let dx = eps * (T::of_usize(p) - cx);
        for q in 0..size {
            let dy = eps * (T::of_usize(q) - cy);
            let phi = eps * q_src / (dx * dx + dy * dy).sqrt();
            signal_max = signal_max.max(phi.abs());
            values.push(e * phi);
        }
    }
    Ok(PhaseTable {
        size,
        values,
        signal_max,
        walker_charge: e,
        kind: TableKind::Static,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    #[default]
    None,
    Spatial,
    Spatiotemporal,
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::None => "none",
            NoiseKind::Spatial => "spatial",
            NoiseKind::Spatiotemporal => "spatiotemporal",
        }
    }

    /// Ensemble size used when none is configured.
    pub fn default_realizations(self) -> usize {
        match self {
            NoiseKind::None => 1,
            NoiseKind::Spatial => 50,
            NoiseKind::Spatiotemporal => 10,
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(NoiseKind::None),
            "spatial" => Ok(NoiseKind::Spatial),
            "spatiotemporal" => Ok(NoiseKind::Spatiotemporal),
            other => Err(Error::Config(format!(
                "noise_kind must be one of none, spatial, spatiotemporal (got `{other}`)"
            ))),
        }
    }
}

/// Oracle noise model: uniform white noise on `(-B_max, B_max)` with
/// `B_max = ratio * signal_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec<T> {
    pub kind: NoiseKind,
    /// Noise-to-signal ratio `r`.
    pub ratio: T,
    pub master_seed: u64,
    pub realizations: usize,
}

impl<T: Real> NoiseSpec<T> {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            ratio: T::zero(),
            master_seed: 0,
            realizations: 1,
        }
    }

    pub fn spatial(ratio: T, master_seed: u64, realizations: usize) -> Self {
        Self {
            kind: NoiseKind::Spatial,
            ratio,
            master_seed,
            realizations,
        }
    }

    pub fn spatiotemporal(ratio: T, master_seed: u64, realizations: usize) -> Self {
        Self {
            kind: NoiseKind::Spatiotemporal,
            ratio,
            master_seed,
            realizations,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio.is_finite() && self.ratio >= T::zero()) {
            return Err(Error::InvalidParameter {
                name: "noise_ratio",
                reason: format!("must be finite and non-negative (got {})", self.ratio),
            });
        }
        if self.realizations == 0 {
            return Err(Error::InvalidParameter {
                name: "realizations",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// `B_max` for a table with the given signal maximum.
    pub fn amplitude(&self, signal_max: T) -> T {
        self.ratio * signal_max
    }

    /// Whether this spec perturbs the oracle at all.
    pub fn is_active(&self) -> bool {
        self.kind != NoiseKind::None && self.ratio > T::zero()
    }

    fn expect_kind(&self, expected: NoiseKind) -> Result<()> {
        if self.kind != expected {
            return Err(Error::NoiseKindMismatch {
                expected: expected.as_str(),
                found: self.kind.as_str(),
            });
        }
        Ok(())
    }
}

// Domain tags keep spatial and spatiotemporal draws on disjoint keys.
const SPATIAL_TAG: u64 = 0x7370_6174_6961_6c00;
const SPATIOTEMPORAL_TAG: u64 = 0x7370_7469_6d65_0000;

/// Generator for one `(seed, realization, stream)` key.
pub fn noise_rng(master_seed: u64, realization: u64, tag: u64, stream: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&realization.to_le_bytes());
    seed[16..24].copy_from_slice(&tag.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng
}

/// Fills `out` with i.i.d. draws from the open interval `(-b_max, b_max)`.
pub fn fill_uniform_open<T: Real, R: Rng>(rng: &mut R, b_max: T, out: &mut [T]) {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    // Largest representable magnitude strictly below b_max.
    let inner = b_max * (T::one() - T::epsilon());
    for slot in out.iter_mut() {
        let u = (rng.next_u64() >> 11) as f64 * SCALE;
        let b = b_max * T::of(2.0 * u - 1.0);
        *slot = if b.abs() >= b_max { inner.copysign(b) } else { b };
    }
}

fn noise_values<T: Real>(
    table: &PhaseTable<T>,
    spec: &NoiseSpec<T>,
    realization: usize,
    tag: u64,
    stream: u64,
) -> Vec<T> {
    let b_max = spec.amplitude(table.signal_max);
    let mut out = vec![T::zero(); table.size * table.size];
    let mut rng = noise_rng(spec.master_seed, realization as u64, tag, stream);
    fill_uniform_open(&mut rng, b_max, &mut out);
    out
}

/// Raw spatial noise field `B[p, q]` for one realization.
pub fn spatial_noise<T: Real>(
    table: &PhaseTable<T>,
    spec: &NoiseSpec<T>,
    realization: usize,
) -> Result<Vec<T>> {
    spec.expect_kind(NoiseKind::Spatial)?;
    spec.validate()?;
    Ok(noise_values(table, spec, realization, SPATIAL_TAG, 0))
}

/// Raw spatiotemporal noise field `B[j, p, q]` for one realization and step.
pub fn spatiotemporal_noise<T: Real>(
    table: &PhaseTable<T>,
    spec: &NoiseSpec<T>,
    realization: usize,
    step: usize,
) -> Result<Vec<T>> {
    spec.expect_kind(NoiseKind::Spatiotemporal)?;
    spec.validate()?;
    Ok(noise_values(
        table,
        spec,
        realization,
        SPATIOTEMPORAL_TAG,
        step as u64,
    ))
}

/// Time-independent noisy table for one realization.
pub fn overlay_spatial_noise<T: Real>(
    table: &PhaseTable<T>,
    spec: &NoiseSpec<T>,
    realization: usize,
) -> Result<PhaseTable<T>> {
    let noise = spatial_noise(table, spec, realization)?;
    Ok(table.with_overlay(&noise, TableKind::Static))
}

/// Noisy table valid for step `step` of one realization.
pub fn sample_spatiotemporal_noise<T: Real>(
    table: &PhaseTable<T>,
    spec: &NoiseSpec<T>,
    realization: usize,
    step: usize,
) -> Result<PhaseTable<T>> {
    let noise = spatiotemporal_noise(table, spec, realization, step)?;
    Ok(table.with_overlay(&noise, TableKind::PerStep))
}
