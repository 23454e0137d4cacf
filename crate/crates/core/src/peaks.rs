//! Detection of the first and second localization peaks in a `P_j` series.
//!
//! The series is smoothed with a centered moving average, local maxima of the
//! smoothed curve are kept when their topographic prominence reaches a
//! fraction of the curve's total range, and each kept maximum is then pinned
//! to the argmax of the raw series within `±window` steps. The first peak is
//! the earliest kept maximum; the second is the highest (raw) kept maximum
//! beyond twice the first peak's time. Ties go to the earliest step.

use crate::observables::TimeSeries;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakParams<T> {
    /// Moving-average width in steps (`window / 2` on each side).
    pub window: usize,
    /// Minimum prominence as a fraction of `max - min` of the smoothed series.
    pub prominence_frac: T,
}

impl<T: Real> Default for PeakParams<T> {
    fn default() -> Self {
        Self {
            window: 5,
            prominence_frac: T::of(0.1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak<T> {
    pub step: usize,
    /// Raw `P_j` at `step`.
    pub probability: T,
}

/// First and second localization peaks; `None` marks an absent peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakRecord<T> {
    pub first: Option<Peak<T>>,
    pub second: Option<Peak<T>>,
    pub params: PeakParams<T>,
}

impl<T> PeakRecord<T> {
    pub fn is_complete(&self) -> bool {
        self.first.is_some() && self.second.is_some()
    }
}

/// Centered moving average; the window is truncated at both ends.
pub fn moving_average<T: Real>(xs: &[T], window: usize) -> Vec<T> {
    let half = window / 2;
    if half == 0 {
        return xs.to_vec();
    }
    let n = xs.len();
    // Prefix sums in f64 would lose the generic scalar; windows are small.
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let sum: T = xs[lo..=hi].iter().copied().sum();
            sum / T::of_usize(hi - lo + 1)
        })
        .collect()
}

/// Interior local maxima; a flat top is reported at its left edge.
pub fn local_maxima<T: Real>(xs: &[T]) -> Vec<usize> {
    let n = xs.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if xs[i] > xs[i - 1] {
            let mut k = i + 1;
            while k < n && xs[k] == xs[i] {
                k += 1;
            }
            if k < n && xs[k] < xs[i] {
                out.push(i);
            }
            i = k;
        } else {
            i += 1;
        }
    }
    out
}

/// Topographic prominence of the maximum at `i`: height above the higher of
/// the two lowest points reachable before climbing above `xs[i]`.
pub fn prominence<T: Real>(xs: &[T], i: usize) -> T {
    let peak = xs[i];
    let mut left_min = peak;
    for &x in xs[..i].iter().rev() {
        if x > peak {
            break;
        }
        left_min = left_min.min(x);
    }
    let mut right_min = peak;
    for &x in &xs[i + 1..] {
        if x > peak {
            break;
        }
        right_min = right_min.min(x);
    }
    peak - left_min.max(right_min)
}

fn raw_argmax<T: Real>(xs: &[T], lo: usize, hi: usize) -> usize {
    let mut best = lo;
    for j in lo + 1..=hi {
        if xs[j] > xs[best] {
            best = j;
        }
    }
    best
}

pub fn detect_peaks<T: Real>(series: &TimeSeries<T>, params: PeakParams<T>) -> PeakRecord<T> {
    detect_peaks_in(&series.probabilities, params)
}

/// [`detect_peaks`] on a bare slice indexed by step.
pub fn detect_peaks_in<T: Real>(xs: &[T], params: PeakParams<T>) -> PeakRecord<T> {
    let mut record = PeakRecord {
        first: None,
        second: None,
        params,
    };
    if xs.len() < 3 {
        return record;
    }
    let smooth = moving_average(xs, params.window);
    let (lo, hi) = smooth
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let threshold = params.prominence_frac * (hi - lo);
    let last = xs.len() - 1;

    let candidates: Vec<Peak<T>> = local_maxima(&smooth)
        .into_iter()
        .filter(|&i| prominence(&smooth, i) >= threshold)
        .map(|i| {
            let from = i.saturating_sub(params.window).max(1);
            let to = (i + params.window).min(last);
            let step = raw_argmax(xs, from, to);
            Peak {
                step,
                probability: xs[step],
            }
        })
        .collect();

    let Some(first) = candidates.first().copied() else {
        return record;
    };
    record.first = Some(first);
    record.second = candidates
        .iter()
        .filter(|c| c.step > 2 * first.step)
        .fold(None, |best: Option<Peak<T>>, c| match best {
            Some(b) if b.probability >= c.probability => Some(b),
            _ => Some(*c),
        });
    record
}
