//! Arithmetic in the prime field `F_p = Z/pZ` for odd primes `p >= 3`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Serialize, Serializer};

use crate::{Error, Result};

/// A validated odd prime modulus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Prime(u32);

impl Prime {
    /// Accepts only odd primes. The butterfly code divides by two, so `p = 2`
    /// is rejected along with every composite.
    pub fn new(p: u64) -> Result<Self> {
        if p < 3 || p.is_multiple_of(2) || p > u64::from(u32::MAX) || !is_prime(p) {
            return Err(Error::InvalidModulus(p));
        }
        Ok(Self(p as u32))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn as_usize(self) -> usize {
        self.0 as usize
    }

    /// Reduces an arbitrary integer into the field.
    pub fn elem(self, value: i64) -> Fp {
        Fp {
            value: value.rem_euclid(i64::from(self.0)) as u32,
            modulus: self.0,
        }
    }

    pub fn zero(self) -> Fp {
        self.elem(0)
    }

    pub fn one(self) -> Fp {
        self.elem(1)
    }

    /// The inverse of two, needed by the sink-node decoders.
    pub fn half(self) -> Fp {
        self.elem(2).inv().expect("2 is invertible for odd p")
    }

    /// All field elements in increasing order.
    pub fn elements(self) -> impl Iterator<Item = Fp> + Clone {
        (0..self.0).map(move |v| Fp {
            value: v,
            modulus: self.0,
        })
    }
}

impl fmt::Display for Prime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl Serialize for Prime {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u32(self.0)
    }
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// An element of `F_p`. The modulus travels with the value so that mixing
/// elements of different fields is detected.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fp {
    value: u32,
    modulus: u32,
}

impl Fp {
    pub fn value(self) -> u32 {
        self.value
    }

    pub fn modulus(self) -> u32 {
        self.modulus
    }

    pub fn prime(self) -> Prime {
        Prime(self.modulus)
    }

    pub fn is_zero(self) -> bool {
        self.value == 0
    }

    fn same_field(self, other: Fp) -> Result<()> {
        if self.modulus == other.modulus {
            Ok(())
        } else {
            Err(Error::ModulusMismatch {
                left: self.modulus,
                right: other.modulus,
            })
        }
    }

    fn with_value(self, value: u64) -> Fp {
        Fp {
            value: (value % u64::from(self.modulus)) as u32,
            modulus: self.modulus,
        }
    }

    pub fn checked_add(self, other: Fp) -> Result<Fp> {
        self.same_field(other)?;
        Ok(self.with_value(u64::from(self.value) + u64::from(other.value)))
    }

    pub fn checked_sub(self, other: Fp) -> Result<Fp> {
        self.same_field(other)?;
        Ok(self.with_value(
            u64::from(self.value) + u64::from(self.modulus) - u64::from(other.value),
        ))
    }

    pub fn checked_mul(self, other: Fp) -> Result<Fp> {
        self.same_field(other)?;
        Ok(self.with_value(u64::from(self.value) * u64::from(other.value)))
    }

    pub fn pow(self, mut exp: u64) -> Fp {
        let m = u64::from(self.modulus);
        let mut base = u64::from(self.value);
        let mut acc = 1u64 % m;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base % m;
            }
            base = base * base % m;
            exp >>= 1;
        }
        self.with_value(acc)
    }

    /// Multiplicative inverse via Fermat: `x^(p-2)`.
    pub fn inv(self) -> Result<Fp> {
        if self.is_zero() {
            return Err(Error::DivisionByZero);
        }
        Ok(self.pow(u64::from(self.modulus) - 2))
    }

    /// Lifts to the symmetric representative in `(-p/2, p/2]`.
    pub fn signed(self) -> i64 {
        let v = i64::from(self.value);
        let m = i64::from(self.modulus);
        if v > m / 2 {
            v - m
        } else {
            v
        }
    }
}

impl fmt::Debug for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod {})", self.value, self.modulus)
    }
}

impl fmt::Display for Fp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.value.fmt(f)
    }
}

impl Serialize for Fp {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u32(self.value)
    }
}

// Operator forms panic on mixed moduli; use the `checked_*` methods where the
// operands come from different configurations.
impl Add for Fp {
    type Output = Fp;
    fn add(self, rhs: Fp) -> Fp {
        self.checked_add(rhs).expect("field modulus mismatch")
    }
}

impl Sub for Fp {
    type Output = Fp;
    fn sub(self, rhs: Fp) -> Fp {
        self.checked_sub(rhs).expect("field modulus mismatch")
    }
}

impl Mul for Fp {
    type Output = Fp;
    fn mul(self, rhs: Fp) -> Fp {
        self.checked_mul(rhs).expect("field modulus mismatch")
    }
}

impl Neg for Fp {
    type Output = Fp;
    fn neg(self) -> Fp {
        self.with_value(u64::from(self.modulus) - u64::from(self.value))
    }
}
