//! Electric Dirac discrete-time quantum walk on a periodic square lattice,
//! run as a spatial-search algorithm: the Coulomb phase oracle marks the four
//! nodes around the potential center and the walker localizes there.
//!
//! The numeric core is generic over [`Real`]; the aliases below fix it to
//! `f64`, which every experiment uses.

pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod kernel;
pub mod lattice;
pub mod observables;
pub mod oracle;
pub mod peaks;
pub mod plot;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type LatticeConfig = lattice::LatticeConfig<f64>;
pub type WavefunctionField = lattice::WavefunctionField<f64>;
pub type PhaseTable = oracle::PhaseTable<f64>;
pub type PhaseFactors = kernel::PhaseFactors<f64>;
pub type CoinAngles = kernel::CoinAngles<f64>;
pub type Evolver = kernel::Evolver<f64>;
pub type NoiseSpec = oracle::NoiseSpec<f64>;
pub type TimeSeries = observables::TimeSeries<f64>;
pub type DistributionSnapshot = observables::DistributionSnapshot<f64>;
pub type PeakParams = peaks::PeakParams<f64>;
pub type PeakRecord = peaks::PeakRecord<f64>;
pub type ScalingFit = experiments::ScalingFit<f64>;
pub type ExperimentPlan = experiments::ExperimentPlan<f64>;
pub type ScanReport = experiments::ScanReport<f64>;

pub use experiments::{auto_jmax, HorizonRule, SnapshotAt};
pub use oracle::NoiseKind;
