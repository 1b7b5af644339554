//! Modular exponentiation of small-word integers: the inner loop of every
//! head term. Two independent routes are provided, plain square-and-multiply
//! ([`mod_pow`]) and a Montgomery-form ladder fixed at base 2
//! ([`MontgomeryContext::pow2`]), which must agree exactly; the engine picks
//! per modulus via [`pow2_mod`].

use crate::error::{Error, Result};

/// Moduli above this use the Montgomery route in [`pow2_mod`]. The paper's
/// observation is only that Montgomery wins for large moduli; the exact
/// crossover is a tunable, see the workspace benches.
pub const MONTGOMERY_THRESHOLD: u64 = 1 << 16;

/// base^exponent mod modulus by left-to-right binary exponentiation.
/// Result is in [0, modulus). Fails only for modulus = 0.
pub fn mod_pow(base: u64, exponent: u64, modulus: u64) -> Result<u64> {
    if modulus == 0 {
        return Err(Error::ZeroModulus);
    }
    if modulus == 1 {
        return Ok(0);
    }
    let base = base % modulus;
    if exponent == 0 {
        return Ok(1);
    }
    // Operands below 2^32 cannot overflow a u64 product; skip u128 there.
    if modulus <= u32::MAX as u64 {
        let mut acc = 1u64;
        for i in (0..u64::BITS - exponent.leading_zeros()).rev() {
            acc = acc * acc % modulus;
            if (exponent >> i) & 1 == 1 {
                acc = acc * base % modulus;
            }
        }
        Ok(acc)
    } else {
        let m = modulus as u128;
        let mut acc = 1u128;
        for i in (0..u64::BITS - exponent.leading_zeros()).rev() {
            acc = acc * acc % m;
            if (exponent >> i) & 1 == 1 {
                acc = acc * base as u128 % m;
            }
        }
        Ok(acc as u64)
    }
}

/// Precomputed constants for Montgomery reduction with R = 2^64.
///
/// The modulus must be odd (Montgomery's requirement), at least 3, and
/// below 2^63 so that intermediate sums in the reduction cannot overflow.
/// Every BBP/Bellard modulus y*k+z is odd by construction and positions up
/// to ~10^18 stay far below the cap.
#[derive(Debug, Clone, Copy)]
pub struct MontgomeryContext {
    modulus: u64,
    /// (2^64)^2 mod modulus, for conversion into Montgomery form.
    r_squared: u64,
    /// -modulus^-1 mod 2^64.
    neg_inverse: u64,
}

impl MontgomeryContext {
    pub fn new(modulus: u64) -> Result<Self> {
        if modulus < 3 || modulus & 1 == 0 || modulus >= 1 << 63 {
            return Err(Error::InvalidMontgomeryModulus(modulus));
        }
        // Newton's iteration doubles correct low bits each round:
        // x = x * (2 - m*x), starting from x = m (3 correct bits for odd m).
        let mut inv = modulus;
        for _ in 0..5 {
            inv = inv.wrapping_mul(2u64.wrapping_sub(modulus.wrapping_mul(inv)));
        }
        debug_assert_eq!(modulus.wrapping_mul(inv), 1);
        let m = modulus as u128;
        let r_squared = ((u128::MAX % m + 1) % m) as u64; // 2^128 mod m
        Ok(MontgomeryContext {
            modulus,
            r_squared,
            neg_inverse: inv.wrapping_neg(),
        })
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    /// REDC: t * 2^-64 mod modulus, for t < modulus * 2^64.
    #[inline]
    fn redc(&self, t: u128) -> u64 {
        let m = (t as u64).wrapping_mul(self.neg_inverse);
        let mm = m as u128 * self.modulus as u128;
        // low 64 bits of t + mm are zero by construction; the discarded
        // addition carries iff the low half of t is nonzero
        let carry = (t as u64 != 0) as u64;
        let u = (t >> 64) as u64 + (mm >> 64) as u64 + carry;
        if u >= self.modulus {
            u - self.modulus
        } else {
            u
        }
    }

    #[inline]
    fn mul(&self, a: u64, b: u64) -> u64 {
        self.redc(a as u128 * b as u128)
    }

    fn to_mont(self, a: u64) -> u64 {
        self.mul(a % self.modulus, self.r_squared)
    }

    /// 2^exponent mod modulus, identical to `mod_pow(2, exponent, modulus)`.
    /// The whole ladder runs in Montgomery form (squaring by REDC, the
    /// multiply-by-2 step as a modular doubling) with a single conversion
    /// out at the end.
    pub fn pow2(&self, exponent: u64) -> u64 {
        let mut acc = self.to_mont(1);
        for i in (0..u64::BITS - exponent.leading_zeros()).rev() {
            acc = self.mul(acc, acc);
            if (exponent >> i) & 1 == 1 {
                // doubling keeps Montgomery form: (2a)R = 2(aR)
                let s = acc << 1; // no overflow, modulus < 2^63
                acc = if s >= self.modulus { s - self.modulus } else { s };
            }
        }
        self.redc(acc as u128)
    }
}

/// Operation form of [`MontgomeryContext::pow2`].
pub fn montgomery_pow(ctx: &MontgomeryContext, exponent: u64) -> u64 {
    ctx.pow2(exponent)
}

/// 2^exponent mod modulus with the route chosen by modulus size: Montgomery
/// above [`MONTGOMERY_THRESHOLD`] (all series moduli are odd), plain
/// square-and-multiply below.
pub fn pow2_mod(exponent: u64, modulus: u64) -> Result<u64> {
    if modulus > MONTGOMERY_THRESHOLD && modulus & 1 == 1 && modulus < 1 << 63 {
        Ok(MontgomeryContext::new(modulus)?.pow2(exponent))
    } else {
        mod_pow(2, exponent, modulus)
    }
}
