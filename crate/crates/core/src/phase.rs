//! Angle arithmetic, the binary entropy function and the ideal 50:50
//! beam-splitter acting on two coherent fields.

use core::ops::{Add, Neg, Sub};

use crate::error::{check_range, Error, Result};
use crate::math;

/// A phase in radians.
///
/// Values are kept raw (unreduced) so long drift integrations do not pick up
/// reduction error; [`Angle::minor`] canonicalizes when comparing.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct Angle(f64);

impl Angle {
    pub const ZERO: Angle = Angle(0.0);
    pub const PI: Angle = Angle(math::PI);

    /// Rejects NaN and infinities.
    pub fn new(radians: f64) -> Result<Self> {
        if radians.is_finite() {
            Ok(Angle(radians))
        } else {
            Err(Error::NonFiniteAngle(radians))
        }
    }

    pub fn from_degrees(degrees: f64) -> Result<Self> {
        Self::new(degrees.to_radians())
    }

    /// Unchecked constructor for values produced by finite arithmetic.
    pub(crate) const fn raw(radians: f64) -> Self {
        Angle(radians)
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }

    /// The minor angle enclosed by the rays at 0 and `self`, in `[0, π]`.
    pub fn minor(self) -> Angle {
        let r = math::fmod(math::abs(self.0), math::TAU);
        Angle(if r > math::PI { math::TAU - r } else { r })
    }

    /// Representative in `(-π, π]`.
    pub fn wrapped(self) -> Angle {
        let r = math::fmod(self.0, math::TAU);
        let r = if r > math::PI {
            r - math::TAU
        } else if r <= -math::PI {
            r + math::TAU
        } else {
            r
        };
        Angle(r)
    }
}

impl Add for Angle {
    type Output = Angle;
    fn add(self, rhs: Angle) -> Angle {
        Angle(self.0 + rhs.0)
    }
}

impl Sub for Angle {
    type Output = Angle;
    fn sub(self, rhs: Angle) -> Angle {
        Angle(self.0 - rhs.0)
    }
}

impl Neg for Angle {
    type Output = Angle;
    fn neg(self) -> Angle {
        Angle(-self.0)
    }
}

/// Mean photon numbers leaving the two output ports of the beam splitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortIntensities {
    pub i_left: f64,
    pub i_right: f64,
}

impl PortIntensities {
    pub fn total(&self) -> f64 {
        self.i_left + self.i_right
    }
}

/// Minor angle of a raw radian value; rejects non-finite input.
pub fn minor_angle(radians: f64) -> Result<Angle> {
    Angle::new(radians).map(Angle::minor)
}

/// Shannon binary entropy in bits, with `H(0) = H(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    check_range("x", x, (0.0..=1.0).contains(&x), "[0, 1]")?;
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * math::log2(x) - (1.0 - x) * math::log2(1.0 - x))
}

/// Two coherent inputs of mean photon number `mu_a`, `mu_b` with relative
/// phase `delta` meet on a lossless 50:50 splitter. `visibility` scales the
/// interference term; 1 is ideal.
pub fn interfere(mu_a: f64, mu_b: f64, delta: Angle, visibility: f64) -> Result<PortIntensities> {
    check_range("mu_a", mu_a, mu_a >= 0.0 && mu_a.is_finite(), "[0, inf)")?;
    check_range("mu_b", mu_b, mu_b >= 0.0 && mu_b.is_finite(), "[0, inf)")?;
    check_range("visibility", visibility, (0.0..=1.0).contains(&visibility), "[0, 1]")?;
    Ok(interfere_unchecked(mu_a, mu_b, delta.radians(), visibility))
}

#[inline]
pub(crate) fn interfere_unchecked(mu_a: f64, mu_b: f64, delta: f64, visibility: f64) -> PortIntensities {
    let total = mu_a + mu_b;
    let cross = 2.0 * math::sqrt(mu_a * mu_b) * visibility * math::cos(delta);
    // (sqrt(a) - sqrt(b))^2 >= 0 bounds both ports; clamp rounding residue.
    let i_left = (0.5 * (total + cross)).clamp(0.0, total);
    PortIntensities {
        i_left,
        i_right: total - i_left,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn minor_angle_examples() {
        assert!(close(minor_angle(-15.0 * PI / 8.0).unwrap().radians(), PI / 8.0, 1e-12));
        assert_eq!(minor_angle(0.0).unwrap().radians(), 0.0);
        assert!(close(minor_angle(PI).unwrap().radians(), PI, 1e-15));
        assert!(close(minor_angle(2.0 * PI + 0.3).unwrap().radians(), 0.3, 1e-12));
    }

    #[test]
    fn minor_angle_rejects_non_finite() {
        assert!(matches!(minor_angle(f64::NAN), Err(Error::NonFiniteAngle(_))));
        assert!(minor_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn wrapped_stays_in_half_open_interval() {
        for &x in &[-7.0, -PI, -0.1, 0.0, PI, 3.5, 40.0] {
            let w = Angle::raw(x).wrapped().radians();
            assert!(w > -PI && w <= PI, "{x} -> {w}");
            assert!(close(math::cos(w), x.cos(), 1e-12));
        }
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        // mpmath, 30 digits: 0.148678746316865148...
        assert!(close(binary_entropy(0.0213).unwrap(), 0.148_678_746_316_865_15, 1e-15));
    }

    #[test]
    fn entropy_rejects_out_of_range() {
        assert!(binary_entropy(-1e-9).is_err());
        assert!(binary_entropy(1.0 + 1e-9).is_err());
        assert!(binary_entropy(f64::NAN).is_err());
    }

    #[test]
    fn interference_examples() {
        let p = interfere(1.0, 1.0, Angle::ZERO, 1.0).unwrap();
        assert!(close(p.i_left, 2.0, 1e-15) && close(p.i_right, 0.0, 1e-15));
        let p = interfere(1.0, 1.0, Angle::PI, 1.0).unwrap();
        assert!(close(p.i_left, 0.0, 1e-15) && close(p.i_right, 2.0, 1e-15));
        for d in [0.0, 0.7, 2.0, -3.0] {
            let p = interfere(1.0, 0.0, Angle::raw(d), 1.0).unwrap();
            assert_eq!((p.i_left, p.i_right), (0.5, 0.5));
        }
    }

    #[test]
    fn interference_rejects_bad_inputs() {
        assert!(interfere(-1.0, 1.0, Angle::ZERO, 1.0).is_err());
        assert!(interfere(1.0, -0.1, Angle::ZERO, 1.0).is_err());
        assert!(interfere(1.0, 1.0, Angle::ZERO, 1.1).is_err());
    }

    proptest! {
        #[test]
        fn minor_angle_is_even_and_periodic(x in -50.0f64..50.0, k in -20i32..20) {
            let m = minor_angle(x).unwrap().radians();
            prop_assert!((0.0..=PI).contains(&m));
            prop_assert!(close(m, minor_angle(-x).unwrap().radians(), 1e-12));
            let shifted = x + f64::from(k) * 2.0 * PI;
            prop_assert!(close(m, minor_angle(shifted).unwrap().radians(), 1e-10));
        }

        #[test]
        fn entropy_is_symmetric_and_bounded(x in 0.0f64..=1.0) {
            let h = binary_entropy(x).unwrap();
            prop_assert!((0.0..=1.0).contains(&h));
            prop_assert!(close(h, binary_entropy(1.0 - x).unwrap(), 1e-12));
        }

        #[test]
        fn interference_conserves_energy(
            a in 0.0f64..10.0, b in 0.0f64..10.0, d in -10.0f64..10.0, v in 0.0f64..=1.0,
        ) {
            let p = interfere(a, b, Angle::new(d).unwrap(), v).unwrap();
            prop_assert!(p.i_left >= 0.0 && p.i_right >= 0.0);
            prop_assert!(close(p.total(), a + b, 1e-12 * (1.0 + a + b)));
        }
    }
}
