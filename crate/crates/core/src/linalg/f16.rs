//! IEEE 754 binary16 conversion with round-to-nearest-even.
//!
//! Magnitudes that would round past the largest finite half (65504)
//! saturate to it, so quantized tensors stay finite. NaN maps to a quiet NaN.

/// Largest finite binary16 value.
pub const F16_MAX: f32 = 65504.0;

const F16_MAX_BITS: u16 = 0x7BFF;

pub fn f16_encode(x: f32) -> u16 {
    let bits = x.to_bits();
    let sign = ((bits >> 16) & 0x8000) as u16;
    let abs = bits & 0x7FFF_FFFF;

    if abs > 0x7F80_0000 {
        return sign | 0x7E00;
    }
    // 65520 is the midpoint between 65504 and the next (overflowing) step.
    if abs >= 0x477F_F000 {
        return sign | F16_MAX_BITS;
    }

    let exp = (abs >> 23) as i32 - 127;
    if exp >= -14 {
        let mant = abs & 0x007F_FFFF;
        let mut h = (((exp + 15) as u32) << 10) | (mant >> 13);
        let rem = mant & 0x1FFF;
        if rem > 0x1000 || (rem == 0x1000 && h & 1 == 1) {
            // A carry out of the mantissa correctly bumps the exponent.
            h += 1;
        }
        sign | h as u16
    } else if exp >= -25 {
        let mant = (abs & 0x007F_FFFF) | 0x0080_0000;
        let shift = (-1 - exp) as u32;
        let mut h = mant >> shift;
        let rem = mant & ((1 << shift) - 1);
        let half = 1 << (shift - 1);
        if rem > half || (rem == half && h & 1 == 1) {
            h += 1;
        }
        sign | h as u16
    } else {
        sign
    }
}

pub fn f16_decode(h: u16) -> f32 {
    let sign = ((h & 0x8000) as u32) << 16;
    let exp = ((h >> 10) & 0x1F) as u32;
    let mant = (h & 0x03FF) as u32;
    let magnitude = match exp {
        0 => {
            // Subnormal: mant · 2⁻²⁴, exact in f32.
            let v = mant as f32 * (1.0 / 16_777_216.0);
            v.to_bits()
        }
        31 => 0x7F80_0000 | (mant << 13),
        _ => ((exp + 112) << 23) | (mant << 13),
    };
    f32::from_bits(sign | magnitude)
}
