//! Angles restricted to the eighth-of-turn group: k*pi/4 with k in Z_8.
//!
//! All blinding arithmetic (theta, phi, delta) happens in integer k-units so
//! the algebra is exact; conversion to radians occurs only at circuit lowering.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Neg, Sub};

/// An angle `k * pi/4` with `k` in `{0, ..., 7}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Angle8(u8);

impl Angle8 {
    pub const ZERO: Angle8 = Angle8(0);
    /// k = 4, i.e. a pi rotation.
    pub const PI: Angle8 = Angle8(4);

    /// Wraps any integer into Z_8.
    pub fn new(k: i64) -> Angle8 {
        Angle8(k.rem_euclid(8) as u8)
    }

    pub fn k(self) -> u8 {
        self.0
    }

    pub fn radians(self) -> f64 {
        f64::from(self.0) * PI / 4.0
    }

    /// All eight group elements in ascending k order.
    pub fn all() -> impl Iterator<Item = Angle8> {
        (0..8).map(|k| Angle8(k))
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
        Angle8((8 + self.0 - rhs.0) % 8)
    }
}

impl Neg for Angle8 {
    type Output = Angle8;
    fn neg(self) -> Angle8 {
        Angle8((8 - self.0) % 8)
    }
}

impl fmt::Display for Angle8 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}pi/4", self.0)
    }
}
