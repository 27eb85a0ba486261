//! Elementwise `exp` for `f32` slices written so the compiler can vectorize
//! it: range reduction by `ln 2`, a degree-6 polynomial on the remainder and
//! exponent-bit reconstruction. Within a few ulp of `f32::exp`.

const LOG2_E: f32 = std::f32::consts::LOG2_E;
const LN2_HI: f32 = 0.693_359_4;
const LN2_LO: f32 = -2.121_944_4e-4;
const MAX_ARG: f32 = 88.722_83;
const MIN_ARG: f32 = -87.336_55;
const ROUND: f32 = 12_582_912.0;

#[inline(always)]
fn exp1(x: f32) -> f32 {
    let xc = x.clamp(MIN_ARG, MAX_ARG);
    // Adding 1.5·2²³ rounds to the nearest integer, which then sits in the
    // low mantissa bits.
    let shifted = xc * LOG2_E + ROUND;
    let n = shifted - ROUND;
    let r = xc - n * LN2_HI - n * LN2_LO;
    let mut p = 1.987_569_1e-4f32;
    p = p * r + 1.398_199_9e-3;
    p = p * r + 8.333_452e-3;
    p = p * r + 4.166_579_6e-2;
    p = p * r + 1.666_666_5e-1;
    p = p * r + 5.000_000_1e-1;
    let e = p * r * r + r + 1.0;
    // n is in [-126, 128]; 2^128 is split in two to stay finite.
    let ni = (shifted.to_bits() as i32).wrapping_sub(ROUND.to_bits() as i32);
    let half = ni >> 1;
    let s1 = f32::from_bits((half.wrapping_add(127) as u32) << 23);
    let s2 = f32::from_bits((ni.wrapping_sub(half).wrapping_add(127) as u32) << 23);
    let y = e * s1 * s2;
    if x < MIN_ARG {
        0.0
    } else if x > MAX_ARG {
        f32::INFINITY
    } else if x.is_nan() {
        x
    } else {
        y
    }
}

pub fn exp_f32_in_place(xs: &mut [f32]) {
    for x in xs {
        *x = exp1(*x);
    }
}
