//! Independent reference computations for the test suites.
//!
//! Everything in this crate is deliberately written with big-integer
//! arithmetic and straightforward algorithms so that it shares no code
//! path with the library it checks. The pi digits come from Machin's
//! arctangent formula, not from any BBP-type series.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, Zero};

/// floor(arctan(1/x) * 2^w) computed by the Taylor series with the power
/// of x updated incrementally (scalar divisions only).
fn atan_inv_scaled(x: u64, w: u64) -> BigInt {
    let one = BigUint::one() << w;
    let xsq = x * x;
    let mut power = &one / x; // floor(2^w / x^(2i+1))
    let mut total = BigInt::zero();
    let mut i: u64 = 0;
    loop {
        let term = &power / (2 * i + 1);
        if term.is_zero() {
            break;
        }
        if i.is_multiple_of(2) {
            total += BigInt::from(term);
        } else {
            total -= BigInt::from(term);
        }
        power /= xsq;
        i += 1;
    }
    total
}

/// pi scaled by 2^bits, i.e. floor-ish(pi * 2^bits), accurate to well under
/// one unit in the last place thanks to the internal guard bits.
fn pi_scaled(bits: u64) -> BigUint {
    let guard = 64;
    let w = bits + guard;
    let v: BigInt = atan_inv_scaled(5, w) * 16 - atan_inv_scaled(239, w) * 4;
    let v = v.to_biguint().expect("pi is positive");
    v >> guard
}

/// The first `count` bits of the fractional part of pi, as an integer in
/// [0, 2^count). Machin's formula; independent of any BBP-type series.
pub fn pi_fraction_bits(count: u64) -> BigUint {
    pi_bits_at(1, count)
}

/// `count` bits of pi's fractional part starting at 1-based bit position
/// `start`, as an integer in [0, 2^count).
pub fn pi_bits_at(start: u64, count: u64) -> BigUint {
    assert!(start >= 1 && count >= 1);
    let skip = start - 1;
    // extra guard so truncation of pi_scaled cannot leak into the window
    let w = skip + count + 64;
    let pi = pi_scaled(w);
    let frac = pi - (BigUint::from(3u32) << w);
    let mask = (BigUint::one() << count) - BigUint::one();
    (frac >> (w - skip - count)) & mask
}

/// Uppercase hex of `count_bits` bits of pi starting at `start` (no spacing,
/// tail of a partial nibble padded with zero bits).
pub fn pi_hex_at(start: u64, count_bits: u64) -> String {
    let digits = count_bits.div_ceil(4);
    let pad = digits * 4 - count_bits;
    let v = pi_bits_at(start, count_bits) << pad;
    let s = v.to_str_radix(16).to_uppercase();
    "0".repeat(digits as usize - s.len()) + &s
}

/// Round-to-nearest-even of numerator/denominator scaled to `bits`
/// fractional bits: returns the integer nearest to (num/den) * 2^bits.
pub fn round_nearest_even(numerator: &BigUint, denominator: &BigUint, bits: u32) -> BigUint {
    let t = numerator << (bits + 1);
    let q = &t / denominator;
    let r = t - &q * denominator;
    let mut cand = &q >> 1u32;
    let guard = (&q & BigUint::one()) == BigUint::one();
    let sticky = !r.is_zero();
    let odd = (&cand & BigUint::one()) == BigUint::one();
    if guard && (sticky || odd) {
        cand += BigUint::one();
    }
    cand
}

/// Reference for the scaled division numerator / (2^shift * modulus) at
/// `precision` fractional bits, round-to-nearest-even.
pub fn div_scaled_reference(numerator: u64, modulus: u64, shift: u32, precision: u32) -> BigUint {
    let den = BigUint::from(modulus) << shift;
    round_nearest_even(&BigUint::from(numerator), &den, precision)
}

/// Modular exponentiation by literal repeated multiplication; only usable
/// for small exponents but independent of any square-and-multiply logic.
pub fn mod_pow_naive(base: u64, exponent: u64, modulus: u64) -> u64 {
    assert!(modulus >= 1);
    let m = modulus as u128;
    let mut acc: u128 = 1 % m;
    for _ in 0..exponent {
        acc = acc * (base as u128) % m;
    }
    acc as u64
}

/// Direct scan for the first k with 1/(2^(d*k-n-x) * (y*k+z)) <= 2^-(p+1),
/// i.e. 2^(d*k-n-x) * (y*k+z) >= 2^(p+1), using exact big integers.
pub fn tail_cutoff_scan(d: u64, y: u64, z: u64, x: i64, n: u64, p: u32) -> u64 {
    // threshold condition at k: 2^(d*k) * (y*k+z) >= 2^(p+1+n+x)
    let rhs_exp = p as i64 + 1 + n as i64 + x;
    if rhs_exp < 0 {
        return 0;
    }
    let rhs = BigUint::one() << (rhs_exp as u64);
    let mut pow = BigUint::one(); // 2^(d*k)
    let mut k: u64 = 0;
    loop {
        let lhs = &pow * (y * k + z);
        if lhs >= rhs {
            return k;
        }
        pow <<= d;
        k += 1;
    }
}

/// One BBP-type sub-series evaluated to high precision by exact dyadic
/// arithmetic: sum over k in [range.0, range.1) of
///     (-1)^(k if alternating) * 2^(n+x-d*k) / (y*k+z)
/// each term floored at `work_bits` fractional bits. Returns the result
/// reduced mod 1 as an integer in [0, 2^work_bits). The accumulated floor
/// error is below (range length) ulps at work_bits.
#[allow(clippy::too_many_arguments)]
pub fn series_sum_reference(
    d: u64,
    y: u64,
    z: u64,
    x: i64,
    alternating: bool,
    n: u64,
    range: (u64, u64),
    work_bits: u64,
) -> BigUint {
    let mut acc = BigInt::zero();
    for k in range.0..range.1 {
        let m = BigUint::from(y * k + z);
        let e: i128 = n as i128 + x as i128 - (d as i128) * (k as i128);
        // floor(2^(work_bits + e) / m); skip terms entirely below the scale
        let shift = work_bits as i128 + e;
        if shift < 0 {
            continue;
        }
        let term = (BigUint::one() << (shift as u64)) / &m;
        let neg = alternating && k % 2 == 1;
        if neg {
            acc -= BigInt::from(term);
        } else {
            acc += BigInt::from(term);
        }
    }
    let modulus = BigInt::one() << work_bits;
    let mut r = acc % &modulus;
    if r.is_negative() {
        r += &modulus;
    }
    r.to_biguint().expect("reduced to [0, 2^w)")
}

/// High-precision reference for <2^n * pi> from the original base-16
/// series: the sum over k of 2^(n-4k) * (4/(8k+1) - 2/(8k+4) - 1/(8k+5) -
/// 1/(8k+6)), each component floored at `work_bits` fractional bits and
/// reduced mod 1. The floor error stays below 4*(k_max+1) ulps at
/// work_bits, far beyond anything the comparisons care about.
pub fn bbp16_pi_reference(n: u64, work_bits: u64) -> BigUint {
    let mut acc = BigInt::zero();
    let mut k: u64 = 0;
    loop {
        let shift = work_bits as i128 + n as i128 - 4 * (k as i128);
        if shift < -2 {
            break; // every remaining component floors to zero
        }
        for (coeff, sign_plus, offset) in
            [(4u64, true, 1u64), (2, false, 4), (1, false, 5), (1, false, 6)]
        {
            let den = 8 * k + offset;
            let term = if shift >= 0 {
                (BigUint::from(coeff) << (shift as u64)) / den
            } else {
                BigUint::from(coeff) / (BigUint::from(den) << ((-shift) as u64))
            };
            if sign_plus {
                acc += BigInt::from(term);
            } else {
                acc -= BigInt::from(term);
            }
        }
        k += 1;
    }
    let modulus = BigInt::one() << work_bits;
    let mut r = acc % &modulus;
    if r.is_negative() {
        r += &modulus;
    }
    r.to_biguint().expect("reduced to [0, 2^w)")
}

/// Signed combination of per-series reference sums mod 1.
/// `series` holds (sign_plus, sum) pairs scaled at work_bits.
pub fn combine_mod1_reference(series: &[(bool, BigUint)], work_bits: u64) -> BigUint {
    let modulus = BigInt::one() << work_bits;
    let mut acc = BigInt::zero();
    for (plus, s) in series {
        if *plus {
            acc += BigInt::from(s.clone());
        } else {
            acc -= BigInt::from(s.clone());
        }
    }
    let mut r = acc % &modulus;
    if r.is_negative() {
        r += &modulus;
    }
    r.to_biguint().expect("reduced to [0, 2^w)")
}

/// Distance between a and b mod 2^bits (the shorter way around the circle).
pub fn mod_distance(a: &BigUint, b: &BigUint, bits: u64) -> BigUint {
    let m = BigUint::one() << bits;
    let d = if a >= b { a - b } else { b - a };
    let other = &m - &d;
    d.min(other)
}
