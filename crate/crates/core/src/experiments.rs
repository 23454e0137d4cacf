//! Experiment orchestration: single runs, noise ensembles, snapshot runs and
//! grid-size scans.
//!
//! Realizations are independent work items executed on the current rayon
//! pool. Reductions always add per-realization results in index order, so an
//! ensemble average is bit-identical for any thread count.

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kernel::{CoinAngles, Evolver, PhaseFactors};
use crate::lattice::{LatticeConfig, WavefunctionField};
use crate::observables::{
    distribution_snapshot, localization_probability, DistributionSnapshot, SeriesMeta, TimeSeries,
};
use crate::oracle::{
    build_coulomb_table, overlay_spatial_noise, sample_spatiotemporal_noise, NoiseKind, NoiseSpec,
};
use crate::peaks::{detect_peaks, detect_peaks_in, PeakParams, PeakRecord};
use crate::scalar::Real;

/// Stable short digest of the physical configuration and noise model.
pub fn config_hash<T: Real>(config: &LatticeConfig<T>, noise: &NoiseSpec<T>) -> String {
    let canonical = format!(
        "size={};e={:?};q={:?};mu={:?};eps={:?};noise={};r={:?};seed={};realizations={}",
        config.size(),
        config.walker_charge.to_f64_lossy(),
        config.source_charge.to_f64_lossy(),
        config.mass.to_f64_lossy(),
        config.spacing.to_f64_lossy(),
        noise.kind,
        noise.ratio.to_f64_lossy(),
        noise.master_seed,
        noise.realizations,
    );
    let digest = Sha256::digest(canonical.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn check_horizon(j_max: usize) -> Result<()> {
    if j_max == 0 {
        return Err(Error::InvalidParameter {
            name: "steps",
            reason: "must be at least 1".into(),
        });
    }
    Ok(())
}

/// Evolves one realization from the uniform state for `j_max` steps,
/// recording `P_j` at every step and full distributions at `snapshot_steps`.
///
/// Snapshots come back in the order of `snapshot_steps`.
pub fn run_realization<T: Real>(
    config: &LatticeConfig<T>,
    noise: &NoiseSpec<T>,
    realization: usize,
    j_max: usize,
    snapshot_steps: &[usize],
) -> Result<(Vec<T>, Vec<DistributionSnapshot<T>>)> {
    config.validate()?;
    noise.validate()?;
    check_horizon(j_max)?;
    if let Some(&bad) = snapshot_steps.iter().find(|&&s| s > j_max) {
        return Err(Error::InvalidParameter {
            name: "snapshots",
            reason: format!("step {bad} lies beyond the horizon {j_max}"),
        });
    }

    let size = config.size();
    let table = build_coulomb_table(config)?;
    let per_step_noise = noise.kind == NoiseKind::Spatiotemporal && noise.is_active();
    let mut factors = if noise.kind == NoiseKind::Spatial && noise.is_active() {
        PhaseFactors::from_table(&overlay_spatial_noise(&table, noise, realization)?)
    } else {
        PhaseFactors::from_table(&table)
    };

    let mut state = WavefunctionField::uniform(config);
    let mut evolver = Evolver::new(size, &CoinAngles::from_mass(config.mass));
    let mut probabilities = Vec::with_capacity(j_max + 1);
    let mut snapshots: Vec<Option<DistributionSnapshot<T>>> = vec![None; snapshot_steps.len()];

    let mut record = |j: usize, state: &WavefunctionField<T>, probabilities: &mut Vec<T>| {
        probabilities.push(localization_probability(state));
        for (slot, &s) in snapshots.iter_mut().zip(snapshot_steps) {
            if s == j {
                *slot = Some(distribution_snapshot(state, j));
            }
        }
    };

    record(0, &state, &mut probabilities);
    for j in 0..j_max {
        if per_step_noise {
            factors.update(&sample_spatiotemporal_noise(&table, noise, realization, j)?)?;
        }
        evolver.advance(&mut state, &factors)?;
        record(j + 1, &state, &mut probabilities);
    }
    let snapshots = snapshots
        .into_iter()
        .map(|s| s.expect("every requested step is within the horizon"))
        .collect();
    Ok((probabilities, snapshots))
}

/// `P_j` for `j = 0..=j_max` of a single realization.
pub fn run_time_series<T: Real>(
    config: &LatticeConfig<T>,
    noise: &NoiseSpec<T>,
    realization: usize,
    j_max: usize,
) -> Result<TimeSeries<T>> {
    let (probabilities, _) = run_realization(config, noise, realization, j_max, &[])?;
    let mut meta = SeriesMeta::from_noise(noise, config_hash(config, noise));
    meta.realization = Some(realization);
    Ok(TimeSeries {
        size: config.size(),
        probabilities,
        meta,
    })
}

/// Ensemble-averaged series and snapshots over `noise.realizations` runs.
///
/// Inactive noise (kind `none` or zero ratio) makes every realization
/// identical, so a single run stands in for the whole ensemble.
pub fn run_ensemble_with_snapshots<T: Real>(
    config: &LatticeConfig<T>,
    noise: &NoiseSpec<T>,
    j_max: usize,
    snapshot_steps: &[usize],
) -> Result<(TimeSeries<T>, Vec<DistributionSnapshot<T>>)> {
    noise.validate()?;
    let mut meta = SeriesMeta::from_noise(noise, config_hash(config, noise));
    meta.realizations = noise.realizations;

    if !noise.is_active() {
        let (probabilities, snapshots) = run_realization(config, noise, 0, j_max, snapshot_steps)?;
        let series = TimeSeries {
            size: config.size(),
            probabilities,
            meta,
        };
        return Ok((series, snapshots));
    }

    let size = config.size();
    let mut sum_p = vec![T::zero(); j_max + 1];
    let mut sum_d: Vec<Vec<T>> = vec![vec![T::zero(); size * size]; snapshot_steps.len()];

    // Chunking bounds memory held by in-flight snapshots; summation order is
    // by realization index regardless of chunk size.
    let chunk = rayon::current_num_threads().max(1);
    let indices: Vec<usize> = (0..noise.realizations).collect();
    for batch in indices.chunks(chunk) {
        let results: Vec<_> = batch
            .par_iter()
            .map(|&k| run_realization(config, noise, k, j_max, snapshot_steps))
            .collect();
        for result in results {
            let (p, snaps) = result?;
            for (acc, x) in sum_p.iter_mut().zip(&p) {
                *acc = *acc + *x;
            }
            for (acc, snap) in sum_d.iter_mut().zip(&snaps) {
                for (a, x) in acc.iter_mut().zip(&snap.values) {
                    *a = *a + *x;
                }
            }
        }
    }

    let count = T::of_usize(noise.realizations);
    for x in sum_p.iter_mut() {
        *x = *x / count;
    }
    let snapshots = sum_d
        .into_iter()
        .zip(snapshot_steps)
        .map(|(mut values, &step)| {
            for x in values.iter_mut() {
                *x = *x / count;
            }
            DistributionSnapshot { size, step, values }
        })
        .collect();
    let series = TimeSeries {
        size,
        probabilities: sum_p,
        meta,
    };
    Ok((series, snapshots))
}

/// Ensemble-averaged `P_j`.
pub fn run_ensemble<T: Real>(
    config: &LatticeConfig<T>,
    noise: &NoiseSpec<T>,
    j_max: usize,
) -> Result<TimeSeries<T>> {
    Ok(run_ensemble_with_snapshots(config, noise, j_max, &[])?.0)
}

/// Linear simulation-horizon rule `J_max = ceil(slope * M + intercept)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonRule {
    pub slope: f64,
    pub intercept: f64,
}

impl HorizonRule {
    /// Grid sizes of the pilot scan behind [`HorizonRule::DEFAULT`].
    pub const PILOT_SIZES: [usize; 3] = [50, 100, 150];
    /// Pilot runs last `ceil(PILOT_FACTOR * M)` steps; shorter pilots cut
    /// the M = 50 second peak off at the end of the series.
    pub const PILOT_FACTOR: f64 = 3.5;

    /// Output of [`calibrate_horizon`] on the pilot sizes with default peak
    /// parameters (frozen; `horizon_defaults_match_pilot` re-derives it).
    pub const DEFAULT: HorizonRule = HorizonRule {
        slope: 1.78,
        intercept: 113.0,
    };

    pub fn horizon(&self, size: usize) -> usize {
        (self.slope * size as f64 + self.intercept).ceil().max(1.0) as usize
    }
}

impl Default for HorizonRule {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Default simulation horizon for an `M x M` grid.
pub fn auto_jmax(size: usize) -> usize {
    HorizonRule::DEFAULT.horizon(size)
}

/// Derives a [`HorizonRule`] from noiseless pilot runs of `factor * M` steps:
/// least-squares line through the detected `(M, j2)` pairs, lifted by the
/// largest positive residual plus `2 * window`, with slope and intercept
/// rounded up to 0.01 and 1. The intercept then grows by `window` until
/// detection on every pilot series cut at the rule's horizon finds the same
/// `j2` again.
pub fn calibrate_horizon(
    template: &LatticeConfig<f64>,
    pilot_sizes: &[usize],
    factor: f64,
    params: PeakParams<f64>,
) -> Result<(HorizonRule, Vec<(usize, usize)>)> {
    let mut pilot = Vec::with_capacity(pilot_sizes.len());
    let mut runs = Vec::with_capacity(pilot_sizes.len());
    for &m in pilot_sizes {
        let config = template.with_size(m)?;
        let series = run_time_series(&config, &NoiseSpec::none(), 0, (factor * m as f64).ceil() as usize)?;
        let second = detect_peaks(&series, params).second.ok_or_else(|| {
            Error::InvalidInput(format!("pilot run at M = {m} shows no second peak"))
        })?;
        pilot.push((m, second.step));
        runs.push(series.probabilities);
    }
    let points: Vec<(f64, f64)> = pilot.iter().map(|&(m, j)| (m as f64, j as f64)).collect();
    let fit = fit_line(&points)
        .ok_or_else(|| Error::InvalidInput("pilot scan needs two distinct grid sizes".into()))?;
    let lift = points
        .iter()
        .map(|&(x, y)| y - (fit.slope * x + fit.intercept))
        .fold(0.0, f64::max);
    let mut rule = HorizonRule {
        slope: (fit.slope.max(0.0) * 100.0).ceil() / 100.0,
        intercept: (fit.intercept + lift + 2.0 * params.window as f64).ceil(),
    };
    let recovers = |rule: &HorizonRule| {
        pilot.iter().zip(&runs).all(|(&(m, j2), p)| {
            let cut = rule.horizon(m).min(p.len() - 1);
            detect_peaks_in(&p[..=cut], params).second.map(|s| s.step) == Some(j2)
        })
    };
    while !recovers(&rule) {
        let longest = pilot.iter().zip(&runs).all(|(&(m, _), p)| rule.horizon(m) >= p.len() - 1);
        if longest {
            return Err(Error::InvalidInput(
                "pilot runs are too short to place a horizon past every second peak".into(),
            ));
        }
        rule.intercept += params.window as f64;
    }
    Ok((rule, pilot))
}

/// Least-squares line through `(x, y)` points.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit<T> {
    pub slope: T,
    pub intercept: T,
    pub r_squared: T,
    pub points: Vec<(T, T)>,
}

/// Ordinary least squares with free intercept. `None` with fewer than two
/// distinct abscissae.
pub fn fit_line<T: Real>(points: &[(T, T)]) -> Option<ScalingFit<T>> {
    if points.len() < 2 {
        return None;
    }
    let n = T::of_usize(points.len());
    let mean_x = points.iter().map(|p| p.0).sum::<T>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<T>() / n;
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for &(x, y) in points {
        sxx = sxx + (x - mean_x) * (x - mean_x);
        sxy = sxy + (x - mean_x) * (y - mean_y);
        syy = syy + (y - mean_y) * (y - mean_y);
    }
    if sxx == T::zero() {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: T = points
        .iter()
        .map(|&(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    let r_squared = if syy == T::zero() {
        if ss_res == T::zero() {
            T::one()
        } else {
            T::zero()
        }
    } else {
        (T::one() - ss_res / syy).max(T::zero()).min(T::one())
    };
    Some(ScalingFit {
        slope,
        intercept,
        r_squared,
        points: points.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    /// [`HorizonRule`] of the plan.
    Auto,
    Fixed(usize),
}

impl Horizon {
    pub fn resolve(&self, size: usize, rule: &HorizonRule) -> usize {
        match *self {
            Horizon::Auto => rule.horizon(size),
            Horizon::Fixed(j) => j,
        }
    }
}

/// Step at which to record a distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SnapshotAt {
    Step(usize),
    FirstPeak,
    SecondPeak,
}

impl std::fmt::Display for SnapshotAt {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SnapshotAt::Step(j) => write!(f, "{j}"),
            SnapshotAt::FirstPeak => f.write_str("j1"),
            SnapshotAt::SecondPeak => f.write_str("j2"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan<T> {
    /// Physics shared by every grid size; its own size is the default grid.
    pub template: LatticeConfig<T>,
    pub grid_sizes: Vec<usize>,
    pub horizon: Horizon,
    pub horizon_rule: HorizonRule,
    pub noise: NoiseSpec<T>,
    pub snapshots: Vec<SnapshotAt>,
    pub peak_params: PeakParams<T>,
    pub output_dir: String,
}

impl<T: Real> ExperimentPlan<T> {
    pub fn new(template: LatticeConfig<T>) -> Self {
        Self {
            grid_sizes: vec![template.size()],
            template,
            horizon: Horizon::Auto,
            horizon_rule: HorizonRule::DEFAULT,
            noise: NoiseSpec::none(),
            snapshots: Vec::new(),
            peak_params: PeakParams::default(),
            output_dir: "out".into(),
        }
    }

    pub fn horizon_for(&self, size: usize) -> usize {
        self.horizon.resolve(size, &self.horizon_rule)
    }
}

/// Result of [`run_snapshots`].
#[derive(Debug, Clone)]
pub struct SnapshotRun<T> {
    pub series: TimeSeries<T>,
    pub peaks: PeakRecord<T>,
    /// One entry per request; `None` when a symbolic peak was not detected.
    pub snapshots: Vec<(SnapshotAt, Option<DistributionSnapshot<T>>)>,
}

/// Ensemble run that records distributions at explicit steps or at the
/// detected peaks. Symbolic requests take two passes: the first detects the
/// peaks from the averaged series, the second records the distributions.
pub fn run_snapshots<T: Real>(
    config: &LatticeConfig<T>,
    noise: &NoiseSpec<T>,
    j_max: usize,
    requests: &[SnapshotAt],
    params: PeakParams<T>,
) -> Result<SnapshotRun<T>> {
    let symbolic = requests.iter().any(|r| !matches!(r, SnapshotAt::Step(_)));
    let explicit: Vec<usize> = requests
        .iter()
        .filter_map(|r| match r {
            SnapshotAt::Step(j) => Some(*j),
            _ => None,
        })
        .collect();

    let (series, peaks, steps) = if symbolic {
        let series = run_ensemble(config, noise, j_max)?;
        let peaks = detect_peaks(&series, params);
        let steps: Vec<Option<usize>> = requests
            .iter()
            .map(|r| match r {
                SnapshotAt::Step(j) => Some(*j),
                SnapshotAt::FirstPeak => peaks.first.map(|p| p.step),
                SnapshotAt::SecondPeak => peaks.second.map(|p| p.step),
            })
            .collect();
        (Some(series), Some(peaks), steps)
    } else {
        (None, None, explicit.iter().map(|&j| Some(j)).collect())
    };

    let wanted: Vec<usize> = steps.iter().flatten().copied().collect();
    let (series, recorded) = match series {
        // The series is known; the second pass only has to reach the last snapshot.
        Some(series) => match wanted.iter().max() {
            Some(&last) => (series, run_ensemble_with_snapshots(config, noise, last.max(1), &wanted)?.1),
            None => (series, Vec::new()),
        },
        None => run_ensemble_with_snapshots(config, noise, j_max, &wanted)?,
    };
    let peaks = peaks.unwrap_or_else(|| detect_peaks(&series, params));

    let mut recorded = recorded.into_iter();
    let snapshots = requests
        .iter()
        .zip(&steps)
        .map(|(r, s)| (*r, s.map(|_| recorded.next().expect("one snapshot per resolved step"))))
        .collect();
    Ok(SnapshotRun {
        series,
        peaks,
        snapshots,
    })
}

/// One grid size of a scan.
#[derive(Debug, Clone)]
pub struct ScanRow<T> {
    pub size: usize,
    pub horizon: usize,
    pub peaks: PeakRecord<T>,
    /// `P_{j1} * N`.
    pub first_collapse: Option<T>,
    /// `P_{j2} * ln N`.
    pub second_collapse: Option<T>,
}

#[derive(Debug, Clone)]
pub struct ScanReport<T> {
    pub rows: Vec<ScanRow<T>>,
    pub series: Vec<TimeSeries<T>>,
    /// Fit of `j2` against `M = sqrt(N)`; needs three sizes with a second peak.
    pub fit: Option<ScalingFit<T>>,
    /// Sizes left out of the fit for lack of a second peak.
    pub excluded: Vec<usize>,
}

/// Runs every grid size of the plan, detects both peaks and fits `j2`
/// linearly against `M`.
pub fn scaling_scan<T: Real>(plan: &ExperimentPlan<T>) -> Result<ScanReport<T>> {
    if plan.grid_sizes.is_empty() {
        return Err(Error::InvalidParameter {
            name: "grid_sizes",
            reason: "scan needs at least one grid size".into(),
        });
    }
    let configs = plan
        .grid_sizes
        .iter()
        .map(|&m| plan.template.with_size(m))
        .collect::<Result<Vec<_>>>()?;
    let series = configs
        .par_iter()
        .map(|c| run_ensemble(c, &plan.noise, plan.horizon_for(c.size())))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(series.len());
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for s in &series {
        let peaks = detect_peaks(s, plan.peak_params);
        let n = T::of_usize(s.nodes());
        match peaks.second {
            Some(p) => points.push((T::of_usize(s.size), T::of_usize(p.step))),
            None => excluded.push(s.size),
        }
        rows.push(ScanRow {
            size: s.size,
            horizon: s.horizon(),
            first_collapse: peaks.first.map(|p| p.probability * n),
            second_collapse: peaks.second.map(|p| p.probability * n.ln()),
            peaks,
        });
    }
    let fit = if points.len() >= 3 { fit_line(&points) } else { None };
    Ok(ScanReport {
        rows,
        series,
        fit,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg(m: usize) -> LatticeConfig<f64> {
        LatticeConfig::new(m).unwrap()
    }

    #[test]
    fn zero_charge_keeps_uniform_probability() {
        for m in [6, 20] {
            let c = cfg(m).with_source_charge(0.0);
            let s = run_time_series(&c, &NoiseSpec::none(), 0, 50).unwrap();
            assert_eq!(s.len(), 51);
            let expected = 4.0 / (m * m) as f64;
            for (_, p) in s.entries() {
                assert!((p - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_zero_horizon_and_late_snapshots() {
        assert!(run_time_series(&cfg(4), &NoiseSpec::none(), 0, 0).is_err());
        assert!(run_realization(&cfg(4), &NoiseSpec::none(), 0, 5, &[6]).is_err());
    }

    #[test]
    fn single_realization_ensemble_matches_run() {
        let c = cfg(16);
        let noise = NoiseSpec::spatial(0.3, 5, 1);
        let single = run_time_series(&c, &noise, 0, 40).unwrap();
        let ens = run_ensemble(&c, &noise, 40).unwrap();
        assert_eq!(single.probabilities, ens.probabilities);
    }

    #[test]
    fn zero_ratio_ensemble_is_noiseless() {
        let c = cfg(16);
        let clean = run_time_series(&c, &NoiseSpec::none(), 0, 40).unwrap();
        let ens = run_ensemble(&c, &NoiseSpec::spatial(0.0, 5, 50), 40).unwrap();
        assert_eq!(clean.probabilities, ens.probabilities);
        assert_eq!(ens.meta.realizations, 50);
    }

    #[test]
    fn noisy_runs_are_reproducible() {
        let c = cfg(20);
        for noise in [NoiseSpec::spatial(1.0 / 3.0, 17, 3), NoiseSpec::spatiotemporal(0.5, 17, 3)] {
            let a = run_time_series(&c, &noise, 2, 30).unwrap();
            let b = run_time_series(&c, &noise, 2, 30).unwrap();
            assert_eq!(a, b);
            let other = run_time_series(&c, &noise, 1, 30).unwrap();
            assert_ne!(a.probabilities, other.probabilities);
        }
    }

    #[test]
    fn ensemble_mean_is_index_ordered_sum() {
        let c = cfg(12);
        let noise = NoiseSpec::spatiotemporal(0.4, 3, 5);
        let ens = run_ensemble(&c, &noise, 20).unwrap();
        let mut sum = vec![0.0; 21];
        for k in 0..5 {
            let s = run_time_series(&c, &noise, k, 20).unwrap();
            for (a, x) in sum.iter_mut().zip(&s.probabilities) {
                *a += x;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|x| x / 5.0).collect();
        assert_eq!(ens.probabilities, mean);
    }

    #[test]
    fn ensemble_independent_of_thread_count() {
        let c = cfg(12);
        let noise = NoiseSpec::spatial(0.4, 3, 7);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_ensemble_with_snapshots(&c, &noise, 15, &[7, 15]).unwrap())
        };
        let (s1, d1) = run(1);
        let (s3, d3) = run(3);
        assert_eq!(s1.probabilities, s3.probabilities);
        assert_eq!(d1, d3);
    }

    #[test]
    fn snapshots_match_series() {
        let c = cfg(10);
        let (p, snaps) = run_realization(&c, &NoiseSpec::none(), 0, 12, &[12, 0, 5]).unwrap();
        assert_eq!(snaps.iter().map(|s| s.step).collect::<Vec<_>>(), vec![12, 0, 5]);
        for s in &snaps {
            assert_relative_eq!(s.marked_probability(), p[s.step], epsilon = 1e-14);
            assert_relative_eq!(s.total(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn symbolic_snapshots_resolve_to_peaks() {
        let c = cfg(40);
        let run = run_snapshots(
            &c,
            &NoiseSpec::none(),
            200,
            &[SnapshotAt::FirstPeak, SnapshotAt::Step(3), SnapshotAt::SecondPeak],
            PeakParams::default(),
        )
        .unwrap();
        let first = run.peaks.first.expect("first peak on M = 40");
        let (req, snap) = &run.snapshots[0];
        assert_eq!(*req, SnapshotAt::FirstPeak);
        assert_eq!(snap.as_ref().unwrap().step, first.step);
        assert_eq!(run.snapshots[1].1.as_ref().unwrap().step, 3);
        match (run.peaks.second, &run.snapshots[2].1) {
            (Some(p), Some(s)) => assert_eq!(s.step, p.step),
            (None, None) => {}
            other => panic!("inconsistent second-peak snapshot: {other:?}"),
        }
    }

    #[test]
    fn fit_line_reference() {
        let pts = [(1.0, 3.0), (2.0, 5.0), (4.0, 9.0)];
        let f = fit_line(&pts).unwrap();
        assert_relative_eq!(f.slope, 2.0, epsilon = 1e-12);
        assert_relative_eq!(f.intercept, 1.0, epsilon = 1e-12);
        assert_relative_eq!(f.r_squared, 1.0, epsilon = 1e-12);
        assert!(fit_line(&[(1.0, 2.0)]).is_none());
        assert!(fit_line(&[(1.0, 2.0), (1.0, 3.0)]).is_none());
        let noisy = fit_line(&[(0.0, 0.0), (1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).unwrap();
        assert!((0.0..=1.0).contains(&noisy.r_squared));
    }

    #[test]
    fn auto_jmax_is_monotone() {
        let mut prev = 0;
        for m in (2..=3000).step_by(2) {
            let h = auto_jmax(m);
            assert!(h >= prev);
            prev = h;
        }
    }

    #[test]
    fn horizon_defaults_match_pilot() {
        let (rule, pilot) = calibrate_horizon(
            &cfg(50),
            &HorizonRule::PILOT_SIZES,
            HorizonRule::PILOT_FACTOR,
            PeakParams::default(),
        )
        .unwrap();
        assert_eq!(pilot, vec![(50, 147), (100, 271), (150, 325)]);
        assert_eq!(rule, HorizonRule::DEFAULT);
        for (m, j2) in pilot {
            assert!(rule.horizon(m) > j2);
        }
    }

    #[test]
    fn horizon_resolution() {
        let rule = HorizonRule { slope: 2.0, intercept: 0.5 };
        assert_eq!(rule.horizon(10), 21);
        assert_eq!(Horizon::Fixed(7).resolve(10, &rule), 7);
        assert_eq!(Horizon::Auto.resolve(10, &rule), 21);
    }

    #[test]
    fn scan_with_single_size_has_no_fit() {
        let mut plan = ExperimentPlan::new(cfg(30));
        plan.horizon = Horizon::Fixed(120);
        let report = scaling_scan(&plan).unwrap();
        assert_eq!(report.rows.len(), 1);
        assert!(report.fit.is_none());
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = config_hash(&cfg(10), &NoiseSpec::<f64>::none());
        assert_eq!(a.len(), 16);
        assert_eq!(a, config_hash(&cfg(10), &NoiseSpec::none()));
        assert_ne!(a, config_hash(&cfg(12), &NoiseSpec::none()));
        assert_ne!(a, config_hash(&cfg(10).with_source_charge(0.8), &NoiseSpec::none()));
    }
}
