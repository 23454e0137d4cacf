//! Periodic square lattice and the two-component walker state living on it.
//!
//! Nodes are addressed by `(p, q)` with `p, q` in `0..M`. Both axes wrap
//! around (periodic boundary). Amplitudes are stored as two row-major planes,
//! one per coin component, so `p` selects a row and `q` a column.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, Real};

/// Grid size and physical parameters of the walk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeConfig<T> {
    size: usize,
    /// Walker charge `e`.
    pub walker_charge: T,
    /// Source charge `Q` of the Coulomb potential.
    pub source_charge: T,
    /// Mass parameter `mu` entering the coin angles.
    pub mass: T,
    /// Lattice spacing.
    pub spacing: T,
}

impl<T: Real> LatticeConfig<T> {
    pub const DEFAULT_WALKER_CHARGE: f64 = -1.0;
    pub const DEFAULT_SOURCE_CHARGE: f64 = 0.9;

    /// Grid of `size x size` nodes with the default charges (`e = -1`,
    /// `Q = 0.9`), zero mass and unit spacing.
    pub fn new(size: usize) -> Result<Self> {
        check_size(size)?;
        Ok(Self {
            size,
            walker_charge: T::of(Self::DEFAULT_WALKER_CHARGE),
            source_charge: T::of(Self::DEFAULT_SOURCE_CHARGE),
            mass: T::zero(),
            spacing: T::one(),
        })
    }

    /// Same physics on a grid of a different size.
    pub fn with_size(&self, size: usize) -> Result<Self> {
        check_size(size)?;
        Ok(Self { size, ..*self })
    }

    pub fn with_source_charge(mut self, q: T) -> Self {
        self.source_charge = q;
        self
    }

    pub fn with_walker_charge(mut self, e: T) -> Self {
        self.walker_charge = e;
        self
    }

    pub fn with_mass(mut self, mu: T) -> Self {
        self.mass = mu;
        self
    }

    pub fn with_spacing(mut self, spacing: T) -> Self {
        self.spacing = spacing;
        self
    }

    /// Nodes per side `M`.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Total node count `N = M^2`.
    pub fn nodes(&self) -> usize {
        self.size * self.size
    }

    /// Potential center `(M/2 - 1/2, M/2 - 1/2)`, equidistant from four nodes.
    pub fn center(&self) -> (T, T) {
        let c = T::of_usize(self.size) / T::of(2.0) - T::of(0.5);
        (c, c)
    }

    /// Checks every field; the size is already guaranteed by construction.
    pub fn validate(&self) -> Result<()> {
        check_size(self.size)?;
        for (name, value) in [
            ("walker_charge", self.walker_charge),
            ("source_charge", self.source_charge),
            ("mass", self.mass),
        ] {
            if !value.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite (got {value})"),
                });
            }
        }
        if !(self.spacing.is_finite() && self.spacing > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "spacing",
                reason: format!("must be positive and finite (got {})", self.spacing),
            });
        }
        Ok(())
    }
}

fn check_size(size: usize) -> Result<()> {
    if size < 2 || size % 2 != 0 {
        return Err(Error::InvalidGridSize(size));
    }
    Ok(())
}

/// Walker state: a `(psi_L, psi_R)` spinor at every node of an `M x M` torus.
#[derive(Debug, Clone, PartialEq)]
pub struct WavefunctionField<T> {
    size: usize,
    left: Vec<Complex<T>>,
    right: Vec<Complex<T>>,
}

impl<T: Real> WavefunctionField<T> {
    /// All-zero field.
    pub fn zeros(size: usize) -> Result<Self> {
        check_size(size)?;
        let n = size * size;
        Ok(Self {
            size,
            left: vec![Complex::new(T::zero(), T::zero()); n],
            right: vec![Complex::new(T::zero(), T::zero()); n],
        })
    }

    /// Fully delocalized walker: every component equals `1 / (M sqrt 2)`.
    pub fn uniform(config: &LatticeConfig<T>) -> Self {
        let size = config.size();
        let amp = T::one() / (T::of_usize(size) * T::SQRT_2());
        let n = size * size;
        Self {
            size,
            left: vec![Complex::new(amp, T::zero()); n],
            right: vec![Complex::new(amp, T::zero()); n],
        }
    }

    /// Field concentrated on a single node with the given spinor.
    pub fn delta(size: usize, p: usize, q: usize, spinor: (Complex<T>, Complex<T>)) -> Result<Self> {
        let mut field = Self::zeros(size)?;
        field.set(p, q, spinor);
        Ok(field)
    }

    /// Builds a field from explicit planes (row-major, `size^2` entries each).
    pub fn from_planes(size: usize, left: Vec<Complex<T>>, right: Vec<Complex<T>>) -> Result<Self> {
        check_size(size)?;
        let n = size * size;
        for plane in [&left, &right] {
            if plane.len() != n {
                return Err(Error::SizeMismatch {
                    expected: n,
                    found: plane.len(),
                });
            }
        }
        Ok(Self { size, left, right })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Row-major index of node `(p, q)`, with both coordinates taken modulo `M`.
    #[inline]
    pub fn index(&self, p: usize, q: usize) -> usize {
        (p % self.size) * self.size + (q % self.size)
    }

    pub fn get(&self, p: usize, q: usize) -> (Complex<T>, Complex<T>) {
        let i = self.index(p, q);
        (self.left[i], self.right[i])
    }

    pub fn set(&mut self, p: usize, q: usize, spinor: (Complex<T>, Complex<T>)) {
        let i = self.index(p, q);
        self.left[i] = spinor.0;
        self.right[i] = spinor.1;
    }

    pub fn left(&self) -> &[Complex<T>] {
        &self.left
    }

    pub fn right(&self) -> &[Complex<T>] {
        &self.right
    }

    /// Both planes, mutably.
    pub fn planes_mut(&mut self) -> (&mut [Complex<T>], &mut [Complex<T>]) {
        (&mut self.left, &mut self.right)
    }

    /// Probability `|psi_L|^2 + |psi_R|^2` on one node.
    #[inline]
    pub fn node_probability(&self, p: usize, q: usize) -> T {
        let i = self.index(p, q);
        self.left[i].norm_sqr() + self.right[i].norm_sqr()
    }

    /// Total squared norm over the grid.
    pub fn norm_squared(&self) -> T {
        compensated_sum(
            self.left
                .iter()
                .zip(&self.right)
                .map(|(l, r)| l.norm_sqr() + r.norm_sqr()),
        )
    }

    /// Rescales the field to unit norm. Leaves an all-zero field untouched.
    pub fn normalize(&mut self) {
        let norm = self.norm_squared().sqrt();
        if norm > T::zero() {
            let inv = T::one() / norm;
            for z in self.left.iter_mut().chain(self.right.iter_mut()) {
                *z = *z * inv;
            }
        }
    }

    /// Flattened amplitudes in `(node, component)` order: `[L_0, R_0, L_1, R_1, ...]`.
    pub fn to_vector(&self) -> Vec<Complex<T>> {
        self.left
            .iter()
            .zip(&self.right)
            .flat_map(|(l, r)| [*l, *r])
            .collect()
    }

    /// Inverse of [`to_vector`](Self::to_vector).
    pub fn from_vector(size: usize, v: &[Complex<T>]) -> Result<Self> {
        check_size(size)?;
        if v.len() != 2 * size * size {
            return Err(Error::SizeMismatch {
                expected: 2 * size * size,
                found: v.len(),
            });
        }
        let left = v.iter().step_by(2).copied().collect();
        let right = v.iter().skip(1).step_by(2).copied().collect();
        Ok(Self { size, left, right })
    }

    /// Largest componentwise distance to another field of the same size.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.size, other.size, "fields of different size");
        self.left
            .iter()
            .zip(&other.left)
            .chain(self.right.iter().zip(&other.right))
            .map(|(a, b)| (*a - *b).norm())
            .fold(T::zero(), T::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    type C = Complex<f64>;

    #[test]
    fn rejects_odd_or_tiny_grids() {
        for bad in [0, 1, 3, 201] {
            assert!(matches!(
                LatticeConfig::<f64>::new(bad),
                Err(Error::InvalidGridSize(m)) if m == bad
            ));
        }
        assert!(LatticeConfig::<f64>::new(2).is_ok());
    }

    #[test]
    fn config_defaults_and_center() {
        let c = LatticeConfig::<f64>::new(200).unwrap();
        assert_eq!(c.nodes(), 40_000);
        assert_eq!(c.walker_charge, -1.0);
        assert_eq!(c.source_charge, 0.9);
        assert_eq!(c.mass, 0.0);
        assert_eq!(c.spacing, 1.0);
        assert_eq!(c.center(), (99.5, 99.5));
    }

    #[test]
    fn validate_catches_bad_spacing() {
        let c = LatticeConfig::<f64>::new(4).unwrap().with_spacing(0.0);
        assert!(c.validate().is_err());
        let c = LatticeConfig::<f64>::new(4).unwrap().with_source_charge(f64::NAN);
        assert!(c.validate().is_err());
    }

    #[test]
    fn uniform_m2() {
        let c = LatticeConfig::<f64>::new(2).unwrap();
        let f = WavefunctionField::uniform(&c);
        let expected = 1.0 / (2.0 * 2f64.sqrt());
        for z in f.left().iter().chain(f.right()) {
            assert_relative_eq!(z.re, expected, epsilon = 1e-15);
            assert_eq!(z.im, 0.0);
        }
        assert_relative_eq!(expected, 0.353553, epsilon = 1e-6);
        assert_relative_eq!(f.norm_squared(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn uniform_m200_component_weight() {
        let c = LatticeConfig::<f64>::new(200).unwrap();
        let f = WavefunctionField::uniform(&c);
        assert_relative_eq!(f.left()[123].norm_sqr(), 1.25e-5, epsilon = 1e-18);
        assert_relative_eq!(f.norm_squared(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn norm_of_special_fields() {
        assert_eq!(WavefunctionField::<f64>::zeros(6).unwrap().norm_squared(), 0.0);
        let one = (C::new(1.0, 0.0), C::new(0.0, 0.0));
        let f = WavefunctionField::delta(6, 2, 5, one).unwrap();
        assert_eq!(f.norm_squared(), 1.0);
        assert_eq!(f.node_probability(2, 5), 1.0);
        assert_eq!(f.node_probability(8, 11), 1.0, "indices wrap modulo M");
    }

    #[test]
    fn vector_round_trip() {
        let mut f = WavefunctionField::<f64>::zeros(4).unwrap();
        f.set(1, 2, (C::new(0.5, 0.1), C::new(-0.2, 0.3)));
        f.set(3, 0, (C::new(0.0, 1.0), C::new(2.0, 0.0)));
        let v = f.to_vector();
        assert_eq!(v[2 * f.index(1, 2)], C::new(0.5, 0.1));
        assert_eq!(v[2 * f.index(1, 2) + 1], C::new(-0.2, 0.3));
        assert_eq!(WavefunctionField::from_vector(4, &v).unwrap(), f);
    }

    #[test]
    fn generic_over_f32() {
        let c = LatticeConfig::<f32>::new(8).unwrap();
        let f = WavefunctionField::uniform(&c);
        assert!((f.norm_squared() - 1.0).abs() < 1e-5);
    }
}
