//! Numeric formats and bit-level surgery shared by every fault model.
//!
//! Weights are stored as symmetric per-tensor int8 (two's complement, bit 7
//! is the sign) or as bfloat16 words. Fault injection operates on the raw
//! words through [`flip_bit`] and [`apply_stuck`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantError {
    #[error("quantization scale must be positive and finite, got {0}")]
    BadScale(f64),
    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("bit position {pos} out of range for a {width}-bit word")]
    BitOutOfRange { pos: u32, width: u32 },
}

/// Sign bit of an int8 weight.
pub const INT8_SIGN_BIT: u32 = 7;

/// One stored 8-bit weight together with its dequantization scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Int8Weight {
    pub raw: i8,
    /// Weight units per LSB.
    pub scale: f64,
}

impl Int8Weight {
    pub fn value(&self) -> f64 {
        self.raw as f64 * self.scale
    }

    pub fn sign_bit(&self) -> bool {
        (self.raw as u8) >> INT8_SIGN_BIT & 1 == 1
    }
}

/// A per-tensor quantized int8 array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Int8Tensor {
    pub raw: Vec<i8>,
    pub scale: f64,
}

impl Int8Tensor {
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn get(&self, i: usize) -> Int8Weight {
        Int8Weight { raw: self.raw[i], scale: self.scale }
    }

    pub fn dequantize(&self) -> Vec<f64> {
        self.raw.iter().map(|&r| r as f64 * self.scale).collect()
    }
}

/// Symmetric scale `max|v| / 127`. An all-zero tensor gets scale 1.
pub fn auto_scale(values: &[f64]) -> Result<f64, QuantError> {
    let mut max = 0.0f64;
    for (index, &value) in values.iter().enumerate() {
        if !value.is_finite() {
            return Err(QuantError::NonFinite { index, value });
        }
        max = max.max(value.abs());
    }
    Ok(if max > 0.0 { max / 127.0 } else { 1.0 })
}

/// Rounds half away from zero and saturates to `[-128, 127]`.
#[inline]
pub fn quantize_value(value: f64, scale: f64) -> i8 {
    (value / scale).round().clamp(-128.0, 127.0) as i8
}

pub fn quantize_int8(values: &[f64], scale: f64) -> Result<Int8Tensor, QuantError> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(QuantError::BadScale(scale));
    }
    let raw = values
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if value.is_finite() {
                Ok(quantize_value(value, scale))
            } else {
                Err(QuantError::NonFinite { index, value })
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Int8Tensor { raw, scale })
}

pub fn quantize_int8_auto(values: &[f64]) -> Result<Int8Tensor, QuantError> {
    quantize_int8(values, auto_scale(values)?)
}

/// Fixed-width unsigned machine word.
pub trait Word: Copy + Eq + std::fmt::Debug {
    const BITS: u32;
    fn to_u64(self) -> u64;
    fn from_u64(v: u64) -> Self;
}

macro_rules! impl_word {
    ($($t:ty),*) => {$(
        impl Word for $t {
            const BITS: u32 = <$t>::BITS;
            #[inline]
            fn to_u64(self) -> u64 { self as u64 }
            #[inline]
            fn from_u64(v: u64) -> Self { v as $t }
        }
    )*};
}
impl_word!(u8, u16, u32, u64);

#[inline]
fn check_pos<W: Word>(pos: u32) -> Result<(), QuantError> {
    if pos < W::BITS {
        Ok(())
    } else {
        Err(QuantError::BitOutOfRange { pos, width: W::BITS })
    }
}

/// Inverts exactly bit `pos`.
pub fn flip_bit<W: Word>(word: W, pos: u32) -> Result<W, QuantError> {
    check_pos::<W>(pos)?;
    Ok(W::from_u64(word.to_u64() ^ (1u64 << pos)))
}

/// Forces bit `pos` to `value`.
pub fn apply_stuck<W: Word>(word: W, pos: u32, value: bool) -> Result<W, QuantError> {
    check_pos::<W>(pos)?;
    let w = word.to_u64();
    let mask = 1u64 << pos;
    Ok(W::from_u64(if value { w | mask } else { w & !mask }))
}

/// Flips a bit of an int8 weight's two's-complement storage.
pub fn flip_int8_bit(raw: i8, pos: u32) -> Result<i8, QuantError> {
    flip_bit(raw as u8, pos).map(|w| w as i8)
}

/// bfloat16: 1 sign bit, 8 exponent bits, 7 mantissa bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BFloat16(pub u16);

impl BFloat16 {
    pub const MANTISSA_BITS: u32 = 7;
    pub const EXPONENT_BITS: u32 = 8;
    pub const SIGN_BIT: u32 = 15;
    pub const ZERO: BFloat16 = BFloat16(0);

    pub fn from_bits(bits: u16) -> Self {
        BFloat16(bits)
    }

    pub fn to_bits(self) -> u16 {
        self.0
    }

    /// Exact decode.
    pub fn to_f64(self) -> f64 {
        f32::from_bits((self.0 as u32) << 16) as f64
    }

    pub fn to_f32(self) -> f32 {
        f32::from_bits((self.0 as u32) << 16)
    }

    /// Round-to-nearest-even encode straight from f64 (no intermediate f32,
    /// which would double-round).
    pub fn from_f64(x: f64) -> Self {
        if x.is_nan() {
            let sign = if x.is_sign_negative() { 0x8000 } else { 0 };
            return BFloat16(sign | 0x7FC0);
        }
        if x == 0.0 || x.is_infinite() {
            // Exactly representable; f32 keeps the sign of zero and infinity.
            return BFloat16(((x as f32).to_bits() >> 16) as u16);
        }
        let mag = x.abs();
        // Exponent of the leading bit, clamped so subnormals share the
        // smallest normal exponent.
        let exp = mag.log2().floor() as i32;
        let exp = exp.clamp(-126, 127);
        // log2 can be off by one near powers of two; fix it up.
        let exp = if mag >= 2f64.powi(exp + 1) && exp < 127 {
            exp + 1
        } else if mag < 2f64.powi(exp) && exp > -126 {
            exp - 1
        } else {
            exp
        };
        let ulp = 2f64.powi(exp - Self::MANTISSA_BITS as i32);
        let q = round_half_even(mag / ulp);
        let rounded = q * ulp;
        // Largest finite bfloat16 is (2 - 2^-7) * 2^127.
        let max = (2.0 - 2f64.powi(-7)) * 2f64.powi(127);
        let v = if rounded > max { f64::INFINITY } else { rounded };
        let v = if x < 0.0 { -v } else { v };
        BFloat16(((v as f32).to_bits() >> 16) as u16)
    }

    pub fn sign(self) -> bool {
        self.0 >> Self::SIGN_BIT == 1
    }

    pub fn exponent_field(self) -> u16 {
        (self.0 >> Self::MANTISSA_BITS) & 0xFF
    }

    pub fn mantissa_field(self) -> u16 {
        self.0 & 0x7F
    }

    /// Clears the `k` least-significant mantissa bits.
    pub fn mask_mantissa_lsbs(self, k: u32) -> Self {
        let k = k.min(Self::MANTISSA_BITS);
        BFloat16(self.0 & !((1u16 << k) - 1))
    }

    pub fn is_finite(self) -> bool {
        self.exponent_field() != 0xFF
    }
}

fn round_half_even(v: f64) -> f64 {
    let r = v.round();
    if (r - v).abs() == 0.5 && r % 2.0 != 0.0 {
        r - v.signum()
    } else {
        r
    }
}

/// Rounds a real through bfloat16 and back.
#[inline]
pub fn bf16_round(x: f64) -> f64 {
    BFloat16::from_f64(x).to_f64()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize_int8(&[0.0], 0.37).unwrap().raw, vec![0]);
        assert_eq!(quantize_int8(&[1.0], 1.0 / 127.0).unwrap().raw, vec![127]);
        assert_eq!(quantize_int8(&[10.0], 0.05).unwrap().raw, vec![127]);
        assert_eq!(quantize_int8(&[-10.0], 0.05).unwrap().raw, vec![-128]);
        // half away from zero
        assert_eq!(quantize_int8(&[0.5, -0.5, 1.5], 1.0).unwrap().raw, vec![1, -1, 2]);
    }

    #[test]
    fn quantize_rejects_bad_input() {
        assert!(matches!(quantize_int8(&[f64::NAN], 1.0), Err(QuantError::NonFinite { index: 0, .. })));
        assert!(matches!(quantize_int8(&[1.0, f64::INFINITY], 1.0), Err(QuantError::NonFinite { index: 1, .. })));
        assert_eq!(quantize_int8(&[1.0], 0.0), Err(QuantError::BadScale(0.0)));
        assert_eq!(quantize_int8(&[1.0], -2.0), Err(QuantError::BadScale(-2.0)));
    }

    #[test]
    fn auto_scale_is_symmetric() {
        let t = quantize_int8_auto(&[0.5, -1.27, 0.0]).unwrap();
        assert!((t.scale - 0.01).abs() < 1e-15);
        assert_eq!(t.raw, vec![50, -127, 0]);
        assert_eq!(quantize_int8_auto(&[0.0, 0.0]).unwrap().scale, 1.0);
    }

    #[test]
    fn flip_examples() {
        assert_eq!(flip_bit(0x00u8, 7).unwrap(), 0x80);
        assert_eq!(flip_bit(0x5Au8, 0).unwrap(), 0x5B);
        assert_eq!(flip_bit(0u8, 8), Err(QuantError::BitOutOfRange { pos: 8, width: 8 }));
        assert_eq!(flip_int8_bit(3, 7).unwrap(), -125);
    }

    #[test]
    fn stuck_examples() {
        assert_eq!(apply_stuck(0b1100u8, 0, true).unwrap(), 0b1101);
        assert_eq!(apply_stuck(0b0110u8, 1, false).unwrap(), 0b0100);
        assert_eq!(apply_stuck(0b0110u8, 2, true).unwrap(), 0b0110);
        assert!(apply_stuck(0u16, 16, true).is_err());
    }

    #[test]
    fn exhaustive_involution_and_idempotence() {
        for w in 0..=255u8 {
            for p in 0..8 {
                assert_eq!(flip_bit(flip_bit(w, p).unwrap(), p).unwrap(), w);
                let f = flip_bit(w, p).unwrap();
                assert_eq!((f ^ w).count_ones(), 1);
                for v in [false, true] {
                    let once = apply_stuck(w, p, v).unwrap();
                    assert_eq!(apply_stuck(once, p, v).unwrap(), once);
                    assert_eq!((once >> p) & 1 == 1, v);
                    assert_eq!(once & !(1 << p), w & !(1 << p));
                }
            }
        }
    }

    #[test]
    fn bf16_format_definition() {
        assert_eq!(BFloat16(0x3F80).to_f64(), 1.0);
        assert_eq!(BFloat16(0x0000).to_f64(), 0.0);
        assert_eq!(BFloat16::from_f64(1.0).0, 0x3F80);
        for k in -10..=10 {
            let x = 2f64.powi(k);
            assert_eq!(BFloat16::from_f64(x).to_f64(), x);
            assert_eq!(BFloat16::from_f64(-x).to_f64(), -x);
        }
        assert!(BFloat16::from_f64(f64::NAN).to_f64().is_nan());
        assert_eq!(BFloat16::from_f64(f64::INFINITY).to_f64(), f64::INFINITY);
        assert_eq!(BFloat16::from_f64(f64::NEG_INFINITY).to_f64(), f64::NEG_INFINITY);
        assert_eq!(BFloat16::from_f64(1e40).to_f64(), f64::INFINITY);
    }

    #[test]
    fn bf16_round_to_nearest_even() {
        // 1 + 2^-8 is halfway between 1 and 1 + 2^-7: ties to even (1.0).
        assert_eq!(BFloat16::from_f64(1.0 + 2f64.powi(-8)).0, 0x3F80);
        // 1 + 3*2^-8 is halfway between 1+2^-7 (odd) and 1+2^-6 (even).
        assert_eq!(BFloat16::from_f64(1.0 + 3.0 * 2f64.powi(-8)).0, 0x3F82);
        // Just above the tie rounds up.
        assert_eq!(BFloat16::from_f64(1.0 + 2f64.powi(-8) + 2f64.powi(-20)).0, 0x3F81);
    }

    #[test]
    fn bf16_decode_encode_roundtrip_exhaustive() {
        for bits in 0..=u16::MAX {
            let b = BFloat16(bits);
            if !b.is_finite() {
                continue;
            }
            let back = BFloat16::from_f64(b.to_f64());
            // -0 and +0 both decode to a zero with their sign preserved
            assert_eq!(back, b, "bits {bits:#06x}");
        }
    }

    #[test]
    fn bf16_mask_bound_exhaustive() {
        for bits in 0..=u16::MAX {
            let b = BFloat16(bits);
            let e = b.exponent_field() as i32;
            if e == 0 || e == 0xFF {
                continue;
            }
            let masked = b.mask_mantissa_lsbs(4);
            let delta = (b.to_f64() - masked.to_f64()).abs();
            let bound = 2f64.powi(e - 127) * 15.0 / 128.0;
            assert!(delta <= bound, "bits {bits:#06x}: {delta} > {bound}");
        }
    }

    proptest! {
        #[test]
        fn bf16_encode_is_nearest(x in -1e30f64..1e30) {
            let b = BFloat16::from_f64(x);
            let v = b.to_f64();
            // neighbours one ulp away are never strictly closer
            let up = BFloat16(b.0.wrapping_add(1)).to_f64();
            let down = BFloat16(b.0.wrapping_sub(1)).to_f64();
            prop_assert!((v - x).abs() <= (up - x).abs());
            prop_assert!((v - x).abs() <= (down - x).abs());
        }

        #[test]
        fn quantize_stays_in_range(v in proptest::collection::vec(-100.0f64..100.0, 1..50), scale in 1e-3f64..10.0) {
            let t = quantize_int8(&v, scale).unwrap();
            for (x, &r) in v.iter().zip(&t.raw) {
                let clamped = x.clamp(-128.0 * scale, 127.0 * scale);
                prop_assert!((r as f64 * scale - clamped).abs() <= scale / 2.0 + 1e-12);
            }
        }
    }
}
