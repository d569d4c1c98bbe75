//! Discrete measurement angles in units of pi/4.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

/// One of the eight angles `{0, pi/4, ..., 7pi/4}`, stored as an integer mod 8.
///
/// Every angle the protocol manipulates (pattern angles, blinding offsets,
/// reported measurement angles) lives in this set, so angle arithmetic is done
/// exactly on integers mod 8 and converted to radians only at the simulator
/// boundary. The constant [`Angle8::PI`] is the element `4`.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Angle8(u8);

impl Angle8 {
    pub const ZERO: Angle8 = Angle8(0);
    /// The angle pi, i.e. four units of pi/4.
    pub const PI: Angle8 = Angle8(4);

    /// Wraps `value` into the range `0..8`.
    pub fn new(value: u8) -> Self {
        Angle8(value % 8)
    }

    /// The underlying integer in `0..8` (units of pi/4).
    pub fn value(self) -> u8 {
        self.0
    }

    /// The angle in radians, for handing to the simulator backend.
    pub fn radians(self) -> f64 {
        f64::from(self.0) * std::f64::consts::FRAC_PI_4
    }

    /// Adds `pi` iff `bit` is set: the outcome-bit and input-bit padding step.
    pub fn plus_pi_if(self, bit: bool) -> Self {
        if bit {
            self + Angle8::PI
        } else {
            self
        }
    }

    /// Negates iff `bit` is set, implementing the `(-1)^s` prefactor.
    pub fn negate_if(self, bit: bool) -> Self {
        if bit {
            -self
        } else {
            self
        }
    }

    /// A uniformly random angle.
    pub fn random<R: rand::Rng + ?Sized>(rng: &mut R) -> Self {
        Angle8(rng.random_range(0..8))
    }

    /// All eight angles in increasing order.
    pub fn all() -> impl Iterator<Item = Angle8> {
        (0..8).map(Angle8)
    }
}

impl Add for Angle8 {
    type Output = Angle8;
    fn add(self, rhs: Angle8) -> Angle8 {
        Angle8((self.0 + rhs.0) % 8)
    }
}

impl Sub for Angle8 {
    type Output = Angle8;
    fn sub(self, rhs: Angle8) -> Angle8 {
        self + (-rhs)
    }
}

impl Neg for Angle8 {
    type Output = Angle8;
    fn neg(self) -> Angle8 {
        Angle8((8 - self.0) % 8)
    }
}

impl fmt::Debug for Angle8 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Angle8({})", self.0)
    }
}

impl fmt::Display for Angle8 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}pi/4", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wraps_mod_8() {
        assert_eq!(Angle8::new(8), Angle8::ZERO);
        assert_eq!(Angle8::new(13).value(), 5);
    }

    #[test]
    fn negation_is_8_minus_value() {
        assert_eq!((-Angle8::new(3)).value(), 5);
        assert_eq!((-Angle8::ZERO).value(), 0);
        assert_eq!((-Angle8::PI).value(), 4);
    }

    #[test]
    fn radians_of_pi() {
        assert!((Angle8::PI.radians() - std::f64::consts::PI).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn add_commutes_and_wraps(a in 0u8..8, b in 0u8..8) {
            let x = Angle8::new(a);
            let y = Angle8::new(b);
            prop_assert_eq!(x + y, y + x);
            prop_assert_eq!((x + y).value(), (a + b) % 8);
        }

        #[test]
        fn double_pi_padding_is_identity(a in 0u8..8) {
            let x = Angle8::new(a);
            prop_assert_eq!(x.plus_pi_if(true).plus_pi_if(true), x);
        }

        #[test]
        fn neg_is_involution(a in 0u8..8) {
            let x = Angle8::new(a);
            prop_assert_eq!(-(-x), x);
            prop_assert_eq!(x + (-x), Angle8::ZERO);
        }
    }
}
