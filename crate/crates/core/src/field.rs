//! Prime field arithmetic.
//!
//! [`Fp`] is the working context passed around the crate: residues are plain
//! `u32` values in `[0, p)` and the context does the reduction. [`FieldElement`]
//! carries its modulus and checks it on every binary operation.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// Largest supported characteristic.
pub const MAX_P: u32 = 31;

fn is_prime(p: u32) -> bool {
    p >= 2 && (2..).take_while(|d| d * d <= p).all(|d| p % d != 0)
}

/// The field F_p for a prime `5 <= p <= 31`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Fp {
    p: u32,
}

impl TryFrom<u32> for Fp {
    type Error = Error;
    fn try_from(p: u32) -> Result<Self> {
        Fp::new(p)
    }
}

impl From<Fp> for u32 {
    fn from(f: Fp) -> u32 {
        f.p
    }
}

impl Fp {
    pub fn new(p: u32) -> Result<Self> {
        if p < 5 || p > MAX_P || !is_prime(p) {
            return Err(Error::InvalidModulus { p, max: MAX_P });
        }
        Ok(Fp { p })
    }

    #[inline]
    pub fn p(self) -> u32 {
        self.p
    }

    #[inline]
    pub fn order(self) -> usize {
        self.p as usize
    }

    #[inline]
    pub fn reduce(self, a: i64) -> u32 {
        a.rem_euclid(self.p as i64) as u32
    }

    #[inline]
    pub fn add(self, a: u32, b: u32) -> u32 {
        let s = a + b;
        if s >= self.p {
            s - self.p
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(self, a: u32, b: u32) -> u32 {
        if a >= b {
            a - b
        } else {
            a + self.p - b
        }
    }

    #[inline]
    pub fn neg(self, a: u32) -> u32 {
        if a == 0 {
            0
        } else {
            self.p - a
        }
    }

    #[inline]
    pub fn mul(self, a: u32, b: u32) -> u32 {
        (a * b) % self.p
    }

    pub fn pow(self, mut a: u32, mut e: u64) -> u32 {
        let mut acc = 1 % self.p;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, a);
            }
            a = self.mul(a, a);
            e >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat; `None` for zero.
    pub fn inv(self, a: u32) -> Option<u32> {
        let a = a % self.p;
        (a != 0).then(|| self.pow(a, (self.p - 2) as u64))
    }

    /// 2⁻¹ mod p, always defined since p is odd.
    pub fn half(self) -> u32 {
        (self.p + 1) / 2
    }

    pub fn element(self, value: i64) -> FieldElement {
        FieldElement {
            value: self.reduce(value),
            modulus: self.p,
        }
    }

    pub fn dot(self, a: &[u32], b: &[u32]) -> u32 {
        let s: u64 = a.iter().zip(b).map(|(&x, &y)| (x * y) as u64).sum();
        (s % self.p as u64) as u32
    }
}

/// A residue tagged with its modulus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FieldElement {
    pub value: u32,
    pub modulus: u32,
}

impl FieldElement {
    pub fn new(value: i64, modulus: u32) -> Result<Self> {
        Ok(Fp::new(modulus)?.element(value))
    }

    fn field(self) -> Fp {
        Fp { p: self.modulus }
    }

    fn check(self, other: FieldElement) -> Result<Fp> {
        if self.modulus != other.modulus {
            return Err(Error::ModulusMismatch(self.modulus, other.modulus));
        }
        Ok(self.field())
    }

    fn with(self, value: u32) -> FieldElement {
        FieldElement {
            value,
            modulus: self.modulus,
        }
    }

    pub fn add(self, other: FieldElement) -> Result<FieldElement> {
        let f = self.check(other)?;
        Ok(self.with(f.add(self.value, other.value)))
    }

    pub fn sub(self, other: FieldElement) -> Result<FieldElement> {
        let f = self.check(other)?;
        Ok(self.with(f.sub(self.value, other.value)))
    }

    pub fn mul(self, other: FieldElement) -> Result<FieldElement> {
        let f = self.check(other)?;
        Ok(self.with(f.mul(self.value, other.value)))
    }

    pub fn neg(self) -> FieldElement {
        self.with(self.field().neg(self.value))
    }

    pub fn inv(self) -> Result<FieldElement> {
        self.field()
            .inv(self.value)
            .map(|v| self.with(v))
            .ok_or(Error::ZeroInverse)
    }

    pub fn is_zero(self) -> bool {
        self.value == 0
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod {})", self.value, self.modulus)
    }
}
