//! One-step walk operator `U = exp(-i e phi) R(theta-) S2 R(theta+) S1`.
//!
//! The free functions ([`shift_1`], [`coin_rotate`], [`step`], ...) build a
//! new field per sub-operation and serve as the reference composition.
//! [`Evolver`] performs the same step in place with two fused sweeps over the
//! grid and one reusable scratch field; it is what the experiments run.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::lattice::WavefunctionField;
use crate::oracle::PhaseTable;
use crate::scalar::Real;

/// Coin rotation angles `theta± = ±pi/4 - mu/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoinAngles<T> {
    pub plus: T,
    pub minus: T,
}

impl<T: Real> CoinAngles<T> {
    pub fn from_mass(mu: T) -> Self {
        let half_mu = mu / T::of(2.0);
        Self {
            plus: T::FRAC_PI_4() - half_mu,
            minus: -T::FRAC_PI_4() - half_mu,
        }
    }
}

/// `R(theta) = [[cos, i sin], [i sin, cos]]` as `(cos, i sin)`.
#[derive(Debug, Clone, Copy)]
struct Coin<T> {
    cos: Complex<T>,
    isin: Complex<T>,
}

impl<T: Real> Coin<T> {
    fn new(theta: T) -> Self {
        Self {
            cos: Complex::new(theta.cos(), T::zero()),
            isin: Complex::new(T::zero(), theta.sin()),
        }
    }

    #[inline(always)]
    fn apply(&self, l: Complex<T>, r: Complex<T>) -> (Complex<T>, Complex<T>) {
        (self.cos * l + self.isin * r, self.isin * l + self.cos * r)
    }
}

/// `(S1 psi)^L[p,q] = psi^L[p+1,q]`, `(S1 psi)^R[p,q] = psi^R[p-1,q]`.
pub fn shift_1<T: Real>(state: &WavefunctionField<T>) -> WavefunctionField<T> {
    let m = state.size();
    let mut out = state.clone();
    let (left, right) = out.planes_mut();
    for p in 0..m {
        for q in 0..m {
            left[p * m + q] = state.left()[state.index(p + 1, q)];
            right[p * m + q] = state.right()[state.index(p + m - 1, q)];
        }
    }
    out
}

/// `(S2 psi)^L[p,q] = psi^L[p,q+1]`, `(S2 psi)^R[p,q] = psi^R[p,q-1]`.
pub fn shift_2<T: Real>(state: &WavefunctionField<T>) -> WavefunctionField<T> {
    let m = state.size();
    let mut out = state.clone();
    let (left, right) = out.planes_mut();
    for p in 0..m {
        for q in 0..m {
            left[p * m + q] = state.left()[state.index(p, q + 1)];
            right[p * m + q] = state.right()[state.index(p, q + m - 1)];
        }
    }
    out
}

/// Applies `R(theta)` at every node.
pub fn coin_rotate<T: Real>(state: &WavefunctionField<T>, theta: T) -> WavefunctionField<T> {
    let coin = Coin::new(theta);
    let mut out = state.clone();
    let (left, right) = out.planes_mut();
    for (l, r) in left.iter_mut().zip(right.iter_mut()) {
        let (nl, nr) = coin.apply(*l, *r);
        *l = nl;
        *r = nr;
    }
    out
}

/// Multiplies both components at `(p, q)` by `exp(-i e phi[p,q])`.
pub fn apply_phase<T: Real>(
    state: &WavefunctionField<T>,
    phases: &PhaseTable<T>,
) -> Result<WavefunctionField<T>> {
    let factors = PhaseFactors::from_table(phases);
    check_size(state.size(), factors.size)?;
    let mut out = state.clone();
    let (left, right) = out.planes_mut();
    for ((l, r), f) in left.iter_mut().zip(right.iter_mut()).zip(&factors.factors) {
        *l = *l * f;
        *r = *r * f;
    }
    Ok(out)
}

/// One walk step by explicit composition of the sub-operations.
pub fn step<T: Real>(
    state: &WavefunctionField<T>,
    phases: &PhaseTable<T>,
    angles: &CoinAngles<T>,
) -> Result<WavefunctionField<T>> {
    check_size(state.size(), phases.size())?;
    let s = shift_1(state);
    let s = coin_rotate(&s, angles.plus);
    let s = shift_2(&s);
    let s = coin_rotate(&s, angles.minus);
    apply_phase(&s, phases)
}

fn check_size(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::SizeMismatch { expected, found });
    }
    Ok(())
}

/// Per-node oracle factors `exp(-i e phi)`, precomputed from a [`PhaseTable`].
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseFactors<T> {
    size: usize,
    factors: Vec<Complex<T>>,
}

impl<T: Real> PhaseFactors<T> {
    pub fn from_table(table: &PhaseTable<T>) -> Self {
        let mut out = Self {
            size: table.size(),
            factors: Vec::with_capacity(table.values().len()),
        };
        out.factors
            .extend(table.values().iter().map(|v| Complex::from_polar(T::one(), -*v)));
        out
    }

    /// Recomputes the factors in place from a table of the same size.
    pub fn update(&mut self, table: &PhaseTable<T>) -> Result<()> {
        check_size(self.size, table.size())?;
        for (f, v) in self.factors.iter_mut().zip(table.values()) {
            *f = Complex::from_polar(T::one(), -*v);
        }
        Ok(())
    }

    /// Recomputes the factors from `e * phi` values plus a per-node offset.
    pub fn update_with_offsets(&mut self, table: &PhaseTable<T>, offsets: &[T]) -> Result<()> {
        check_size(self.size, table.size())?;
        check_size(self.factors.len(), offsets.len())?;
        for ((f, v), o) in self.factors.iter_mut().zip(table.values()).zip(offsets) {
            *f = Complex::from_polar(T::one(), -(*v + *o));
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn factors(&self) -> &[Complex<T>] {
        &self.factors
    }
}

/// In-place stepper with a reusable scratch field.
///
/// Sweep one reads rows `p+1` (for `L`) and `p-1` (for `R`) and writes the
/// post-`R(theta+)` spinor to scratch. Sweep two reads columns `q+1` and `q-1`
/// of scratch and writes `phase * R(theta-)` back into the state. Results
/// agree with [`step`] to rounding.
#[derive(Debug, Clone)]
pub struct Evolver<T> {
    size: usize,
    scratch_left: Vec<Complex<T>>,
    scratch_right: Vec<Complex<T>>,
    first: Coin<T>,
    second: Coin<T>,
}

impl<T: Real> Evolver<T> {
    pub fn new(size: usize, angles: &CoinAngles<T>) -> Self {
        let zero = Complex::new(T::zero(), T::zero());
        Self {
            size,
            scratch_left: vec![zero; size * size],
            scratch_right: vec![zero; size * size],
            first: Coin::new(angles.plus),
            second: Coin::new(angles.minus),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Advances `state` by one step.
    pub fn advance(&mut self, state: &mut WavefunctionField<T>, phases: &PhaseFactors<T>) -> Result<()> {
        check_size(self.size, state.size())?;
        check_size(self.size, phases.size)?;
        let m = self.size;
        let (left, right) = state.planes_mut();

        // S1 then R(theta+).
        let coin = self.first;
        for p in 0..m {
            let up = if p + 1 == m { 0 } else { p + 1 };
            let down = if p == 0 { m - 1 } else { p - 1 };
            let src_l = &left[up * m..(up + 1) * m];
            let src_r = &right[down * m..(down + 1) * m];
            let dst_l = &mut self.scratch_left[p * m..(p + 1) * m];
            let dst_r = &mut self.scratch_right[p * m..(p + 1) * m];
            for (((dl, dr), l), r) in dst_l.iter_mut().zip(dst_r.iter_mut()).zip(src_l).zip(src_r) {
                let (nl, nr) = coin.apply(*l, *r);
                *dl = nl;
                *dr = nr;
            }
        }

        // S2, R(theta-), then the oracle phase.
        let coin = self.second;
        for p in 0..m {
            let row = p * m..(p + 1) * m;
            let sl = &self.scratch_left[row.clone()];
            let sr = &self.scratch_right[row.clone()];
            let fac = &phases.factors[row.clone()];
            let dst_l = &mut left[row.clone()];
            let dst_r = &mut right[row];

            // q = 0 wraps for R, q = m-1 wraps for L.
            let write = |q: usize, l3: Complex<T>, r3: Complex<T>, dl: &mut Complex<T>, dr: &mut Complex<T>| {
                let (nl, nr) = coin.apply(l3, r3);
                *dl = fac[q] * nl;
                *dr = fac[q] * nr;
            };
            write(0, sl[1 % m], sr[m - 1], &mut dst_l[0], &mut dst_r[0]);
            if m > 2 {
                let interior = 1..m - 1;
                for ((((dl, dr), l3), r3), f) in dst_l[interior.clone()]
                    .iter_mut()
                    .zip(dst_r[interior.clone()].iter_mut())
                    .zip(&sl[2..])
                    .zip(&sr[..m - 2])
                    .zip(&fac[interior])
                {
                    let (nl, nr) = coin.apply(*l3, *r3);
                    *dl = *f * nl;
                    *dr = *f * nr;
                }
            }
            write(m - 1, sl[0], sr[m - 2], &mut dst_l[m - 1], &mut dst_r[m - 1]);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeConfig;
    use crate::oracle::build_coulomb_table;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    type C = Complex<f64>;
    const ONE: C = C::new(1.0, 0.0);
    const ZERO: C = C::new(0.0, 0.0);

    fn random_field(size: usize, seed: u64) -> WavefunctionField<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        let n = size * size;
        let left = (0..n).map(|_| C::new(draw(), draw())).collect();
        let right = (0..n).map(|_| C::new(draw(), draw())).collect();
        let mut f = WavefunctionField::from_planes(size, left, right).unwrap();
        f.normalize();
        f
    }

    #[test]
    fn coin_angles_sum_to_minus_mu() {
        for mu in [0.0, 0.3, -1.2] {
            let a = CoinAngles::from_mass(mu);
            assert_relative_eq!(a.plus + a.minus, -mu, epsilon = 1e-15);
        }
        let a = CoinAngles::<f64>::from_mass(0.0);
        assert_eq!(a.plus, std::f64::consts::FRAC_PI_4);
    }

    #[test]
    fn shift_1_moves_deltas() {
        let f = WavefunctionField::delta(10, 5, 7, (ONE, ZERO)).unwrap();
        assert_eq!(shift_1(&f).node_probability(4, 7), 1.0);
        let f = WavefunctionField::delta(10, 0, 3, (ZERO, ONE)).unwrap();
        let g = shift_1(&f);
        assert_eq!(g.get(1, 3), (ZERO, ONE));
    }

    #[test]
    fn shift_2_moves_deltas() {
        let f = WavefunctionField::delta(10, 5, 7, (ONE, ZERO)).unwrap();
        assert_eq!(shift_2(&f).get(5, 6), (ONE, ZERO));
        let f = WavefunctionField::delta(10, 5, 0, (ZERO, ONE)).unwrap();
        assert_eq!(shift_2(&f).get(5, 1), (ZERO, ONE));
        let f = WavefunctionField::delta(10, 5, 0, (ONE, ZERO)).unwrap();
        assert_eq!(shift_2(&f).get(5, 9), (ONE, ZERO), "L wraps to q = M-1");
    }

    #[test]
    fn shifts_fix_uniform_field() {
        let c = LatticeConfig::new(8).unwrap();
        let u = WavefunctionField::<f64>::uniform(&c);
        assert_eq!(shift_1(&u), u);
        assert_eq!(shift_2(&u), u);
    }

    #[test]
    fn m_shifts_are_identity() {
        let f = random_field(6, 1);
        let (mut a, mut b) = (f.clone(), f.clone());
        for _ in 0..6 {
            a = shift_1(&a);
            b = shift_2(&b);
        }
        assert_eq!(a, f);
        assert_eq!(b, f);
    }

    #[test]
    fn coin_reference_values() {
        let f = WavefunctionField::delta(4, 1, 1, (ONE, ZERO)).unwrap();
        assert_eq!(coin_rotate(&f, 0.0), f);
        let g = coin_rotate(&f, std::f64::consts::FRAC_PI_4);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let (l, r) = g.get(1, 1);
        assert_relative_eq!(l.re, h, epsilon = 1e-15);
        assert_relative_eq!(l.im, 0.0, epsilon = 1e-15);
        assert_relative_eq!(r.re, 0.0, epsilon = 1e-15);
        assert_relative_eq!(r.im, h, epsilon = 1e-15);
    }

    #[test]
    fn coin_acts_as_phase_on_sigma_x_eigenvector() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for theta in [0.1, 0.7, -2.3] {
            let f = WavefunctionField::delta(2, 0, 0, (C::new(h, 0.0), C::new(h, 0.0))).unwrap();
            let g = coin_rotate(&f, theta);
            let expected = C::from_polar(h, theta);
            let (l, r) = g.get(0, 0);
            assert_relative_eq!((l - expected).norm(), 0.0, epsilon = 1e-15);
            assert_relative_eq!((r - expected).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn phase_reference_values() {
        let f = random_field(4, 2);
        let zero = PhaseTable::zeros(4, -1.0).unwrap();
        assert_eq!(apply_phase(&f, &zero).unwrap(), f);

        let mut values = vec![0.0; 16];
        values[5] = std::f64::consts::PI;
        let t = PhaseTable::from_values(4, values, -1.0).unwrap();
        let d = WavefunctionField::delta(4, 1, 1, (ONE, ZERO)).unwrap();
        let (l, _) = apply_phase(&d, &t).unwrap().get(1, 1);
        assert_relative_eq!(l.re, -1.0, epsilon = 1e-15);
        assert_relative_eq!(l.im, 0.0, epsilon = 1e-15);

        let c = 0.83;
        let t = PhaseTable::from_values(4, vec![c; 16], -1.0).unwrap();
        let g = apply_phase(&f, &t).unwrap();
        let global = C::from_polar(1.0, -c);
        for i in 0..16 {
            assert_relative_eq!((g.left()[i] - f.left()[i] * global).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn phase_size_mismatch() {
        let f = random_field(4, 3);
        let t = PhaseTable::zeros(6, -1.0).unwrap();
        assert!(matches!(apply_phase(&f, &t), Err(Error::SizeMismatch { .. })));
        assert!(step(&f, &t, &CoinAngles::from_mass(0.0)).is_err());
        let mut ev = Evolver::new(4, &CoinAngles::from_mass(0.0));
        let mut g = f.clone();
        assert!(ev.advance(&mut g, &PhaseFactors::from_table(&t)).is_err());
    }

    #[test]
    fn uniform_state_is_fixed_by_free_walk() {
        let c = LatticeConfig::new(10).unwrap();
        let u = WavefunctionField::<f64>::uniform(&c);
        let t = PhaseTable::zeros(10, -1.0).unwrap();
        let s = step(&u, &t, &CoinAngles::from_mass(0.0)).unwrap();
        assert!(s.max_abs_diff(&u) < 1e-15);
    }

    #[test]
    fn coulomb_steps_preserve_norm() {
        let c = LatticeConfig::new(12).unwrap();
        let t = build_coulomb_table(&c).unwrap();
        let factors = PhaseFactors::from_table(&t);
        let mut ev = Evolver::new(12, &CoinAngles::from_mass(0.0));
        let mut f = random_field(12, 4);
        for _ in 0..100 {
            ev.advance(&mut f, &factors).unwrap();
        }
        assert!((f.norm_squared() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fused_step_matches_reference_composition() {
        for (size, mu) in [(2, 0.0), (4, 0.0), (6, 0.4), (10, -0.7)] {
            let c = LatticeConfig::new(size).unwrap().with_mass(mu);
            let t = build_coulomb_table(&c).unwrap();
            let angles = CoinAngles::from_mass(mu);
            let factors = PhaseFactors::from_table(&t);
            let mut ev = Evolver::new(size, &angles);
            let mut fused = random_field(size, size as u64);
            let mut reference = fused.clone();
            for _ in 0..5 {
                ev.advance(&mut fused, &factors).unwrap();
                reference = step(&reference, &t, &angles).unwrap();
            }
            assert!(fused.max_abs_diff(&reference) < 1e-14, "M = {size}");
        }
    }

    proptest! {
        #[test]
        fn sub_operations_are_unitary(seed in any::<u64>(), theta in -4.0f64..4.0) {
            let f = random_field(6, seed);
            let table = PhaseTable::from_values(
                6,
                (0..36).map(|i| (i as f64 * 0.37 + theta).sin() * 3.0).collect(),
                -1.0,
            ).unwrap();
            for g in [
                shift_1(&f),
                shift_2(&f),
                coin_rotate(&f, theta),
                apply_phase(&f, &table).unwrap(),
            ] {
                prop_assert!((g.norm_squared() - 1.0).abs() < 1e-14);
            }
        }
    }
}
