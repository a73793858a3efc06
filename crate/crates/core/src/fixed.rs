//! Q0.z fixed-point values in `[0, 1)`.
//!
//! A value is an unsigned integer `raw < 2^z` read as `raw / 2^z`. Bit `w_1`
//! is the most significant fractional bit.

use crate::error::{invalid, Result};

pub const MAX_FRACTION_BITS: u32 = 64;

/// Value in `[0, 1)` with `z` fractional bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedPointValue {
    raw: u64,
    z: u32,
}

pub(crate) fn check_bits(z: u32) -> Result<()> {
    if (1..=MAX_FRACTION_BITS).contains(&z) {
        Ok(())
    } else {
        Err(invalid(format!("fraction bits z = {z} not in [1, 64]")))
    }
}

/// `2^z` as a 128-bit integer (the fixed-point representation of 1.0).
#[inline]
pub(crate) fn one(z: u32) -> u128 {
    1u128 << z
}

/// `floor(x * 2^z)` for `x` in `[0, 2^(64 - z))`. Scaling by a power of two is exact
/// in binary floating point, so the floor is the exact truncation.
#[inline]
pub(crate) fn scale_floor(x: f64, z: u32) -> u128 {
    (x * 2f64.powi(z as i32)) as u128
}

impl FixedPointValue {
    pub fn from_raw(raw: u64, z: u32) -> Result<Self> {
        check_bits(z)?;
        if z < 64 && raw >> z != 0 {
            return Err(invalid(format!("raw value {raw} does not fit in {z} bits")));
        }
        Ok(Self { raw, z })
    }

    pub fn raw(&self) -> u64 {
        self.raw
    }

    pub fn fraction_bits(&self) -> u32 {
        self.z
    }

    pub fn to_f64(&self) -> f64 {
        self.raw as f64 / 2f64.powi(self.z as i32)
    }

    /// Bits `w_1 .. w_z`, most significant first.
    pub fn bits(&self) -> Vec<u8> {
        (1..=self.z).map(|i| ((self.raw >> (self.z - i)) & 1) as u8).collect()
    }
}

/// Truncating quantization `raw = floor(x * 2^z)`.
pub fn quantize(x: f64, z: u32) -> Result<FixedPointValue> {
    check_bits(z)?;
    if !(0.0..1.0).contains(&x) {
        return Err(invalid(format!("cannot quantize {x}: outside [0, 1)")));
    }
    Ok(FixedPointValue {
        raw: scale_floor(x, z) as u64,
        z,
    })
}

/// Fractional bits of `v`, `w_1` first.
pub fn bits_of(v: &FixedPointValue) -> Vec<u8> {
    v.bits()
}

/// Nonnegative coefficient with an integer part, used for map parameters such as
/// `mu = 4` that do not fit in Q0.z.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct FixedCoef {
    int: u64,
    frac: u64,
    z: u32,
}

impl FixedCoef {
    pub fn new(c: f64, z: u32) -> Self {
        let int = c.trunc();
        Self {
            int: int as u64,
            frac: scale_floor(c - int, z) as u64,
            z,
        }
    }

    /// `c * v` truncated to `z` fractional bits. Requires `v <= 2^z` times a
    /// small constant so that `frac * v` stays inside 128 bits.
    #[inline]
    pub fn mul(&self, v: u128) -> u128 {
        self.int as u128 * v + ((self.frac as u128 * v) >> self.z)
    }
}
