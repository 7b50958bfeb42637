//! The two coefficient fields every routine is generic over.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use faer::c64;
use faer::traits::ComplexField;
use rand::Rng;
use rand_distr::StandardNormal;

/// Which field a tensor lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Field {
    Real,
    Complex,
}

impl Field {
    pub fn name(self) -> &'static str {
        match self {
            Field::Real => "real",
            Field::Complex => "complex",
        }
    }
}

impl std::str::FromStr for Field {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "real" => Ok(Field::Real),
            "complex" => Ok(Field::Complex),
            other => Err(format!("unknown field `{other}` (expected real or complex)")),
        }
    }
}

/// `f64` or `c64`. Method names avoid clashing with faer's extension traits.
pub trait Scalar:
    ComplexField<Real = f64>
    + Copy
    + Send
    + Sync
    + Debug
    + PartialEq
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    const FIELD: Field;

    fn from_f64(x: f64) -> Self;
    /// Drops the imaginary part when `Self` is real.
    fn from_c64(z: c64) -> Self;
    fn to_c64(self) -> c64;
    fn conjugate(self) -> Self;
    fn modulus(self) -> f64;
    fn modulus_sqr(self) -> f64;
    fn real_part(self) -> f64;
    fn is_finite_value(self) -> bool;
    /// Standard normal sample; complex samples have independent N(0,1) parts.
    fn sample_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    fn zero_value() -> Self {
        Self::from_f64(0.0)
    }
    fn one_value() -> Self {
        Self::from_f64(1.0)
    }
    fn scale_real(self, s: f64) -> Self {
        self * Self::from_f64(s)
    }
}

impl Scalar for f64 {
    const FIELD: Field = Field::Real;

    fn from_f64(x: f64) -> Self {
        x
    }
    fn from_c64(z: c64) -> Self {
        z.re
    }
    fn to_c64(self) -> c64 {
        c64::new(self, 0.0)
    }
    fn conjugate(self) -> Self {
        self
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn modulus_sqr(self) -> f64 {
        self * self
    }
    fn real_part(self) -> f64 {
        self
    }
    fn is_finite_value(self) -> bool {
        self.is_finite()
    }
    fn sample_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
}

impl Scalar for c64 {
    const FIELD: Field = Field::Complex;

    fn from_f64(x: f64) -> Self {
        c64::new(x, 0.0)
    }
    fn from_c64(z: c64) -> Self {
        z
    }
    fn to_c64(self) -> c64 {
        self
    }
    fn conjugate(self) -> Self {
        self.conj()
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn modulus_sqr(self) -> f64 {
        self.norm_sqr()
    }
    fn real_part(self) -> f64 {
        self.re
    }
    fn is_finite_value(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    fn sample_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        c64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    }
}
