//! Result validation: the dual-run overlap protocol and the probabilistic
//! model of accumulated rounding error.
//!
//! Each rounded term contributes an error uniform in [-e, e] with
//! e = 2^-(p+1); the sum of m such errors follows the Irwin-Hall law,
//! approximated for large m by N(0, m*e^2/3). That yields closed-form
//! confidence figures for |E| staying under a power-of-two bound, plus a
//! seeded Monte Carlo cross-check of the normal approximation.

use std::fmt;

use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::render::{hex_blocks, thousands};
use crate::series::{tail_cutoff, ExtractionResult, Formula};

/// Parameters of the accumulated rounding error E = sum of per-term errors.
#[derive(Debug, Clone, Copy)]
pub struct ErrorModel {
    term_count: u64,
    precision_bits: u32,
}

impl ErrorModel {
    pub fn new(term_count: u64, precision_bits: u32) -> Result<Self> {
        if term_count == 0 {
            return Err(Error::EmptyErrorModel);
        }
        Ok(ErrorModel {
            term_count,
            precision_bits,
        })
    }

    pub fn term_count(&self) -> u64 {
        self.term_count
    }

    pub fn precision_bits(&self) -> u32 {
        self.precision_bits
    }

    /// Half an ulp: the per-term error bound 2^-(p+1).
    pub fn ulp_half(&self) -> f64 {
        (self.precision_bits as f64 + 1.0).exp2().recip()
    }

    /// Variance of E under the uniform-sum model: m * e^2 / 3.
    pub fn variance(&self) -> f64 {
        let e = self.ulp_half();
        self.term_count as f64 * e * e / 3.0
    }

    pub fn sigma(&self) -> f64 {
        self.variance().sqrt()
    }

    /// P(|E| < 2^-bound_exponent) under the normal approximation.
    pub fn confidence(&self, bound_exponent: i32) -> f64 {
        let bound = (bound_exponent as f64).exp2().recip();
        libm::erf(bound / (self.sigma() * std::f64::consts::SQRT_2))
    }
}

/// Operation form of [`ErrorModel::confidence`].
pub fn confidence(model: &ErrorModel, bound_exponent: i32) -> f64 {
    model.confidence(bound_exponent)
}

/// Total number of evaluated terms across all sub-series (head plus tail)
/// for an extraction at exponent n and precision p. Every one of these
/// terms is rounded once, so this is the m of the error model.
pub fn term_count(formula: &Formula, n: u64, precision_bits: u32) -> u64 {
    formula
        .series()
        .iter()
        .map(|spec| tail_cutoff(spec, n, precision_bits))
        .sum()
}

/// Outcome of intersecting two runs: only bits covered by both and equal
/// in both are considered valid.
#[derive(Debug, Clone)]
pub struct OverlapReport {
    pub run_a: ExtractionResult,
    pub run_b: ExtractionResult,
    /// Absolute 1-based position where the overlap begins.
    pub overlap_start: u64,
    /// Number of overlapping bit positions.
    pub overlap_bits: u32,
    /// Length of the agreeing prefix of the overlap.
    pub verified_bits: u32,
    /// Hex of the agreeing prefix, in 8-digit blocks.
    pub verified_hex: String,
    /// Absolute position of the first overlapping bit that differs.
    pub first_disagreement: Option<u64>,
}

impl OverlapReport {
    pub fn agrees(&self) -> bool {
        self.first_disagreement.is_none()
    }
}

impl fmt::Display for OverlapReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "runs at positions {} and {}",
            thousands(self.run_a.start_position),
            thousands(self.run_b.start_position)
        )?;
        writeln!(
            f,
            "overlap: {} bits starting at position {}",
            self.overlap_bits,
            thousands(self.overlap_start)
        )?;
        writeln!(f, "verified: {} bits", self.verified_bits)?;
        writeln!(f, "hex: {}", self.verified_hex)?;
        match self.first_disagreement {
            None => write!(f, "no disagreements"),
            Some(pos) => write!(f, "FIRST DISAGREEMENT at position {}", thousands(pos)),
        }
    }
}

/// Aligns two extractions on absolute bit positions, compares the covered
/// intersection, and reports the longest agreeing prefix. Symmetric in its
/// arguments. Fails if the reported ranges do not overlap.
pub fn overlap_check(a: &ExtractionResult, b: &ExtractionResult) -> Result<OverlapReport> {
    let start = a.start_position.max(b.start_position);
    let end = (a.start_position + a.reported_bits as u64)
        .min(b.start_position + b.reported_bits as u64);
    if start >= end {
        return Err(Error::DisjointRanges);
    }
    let overlap_bits = (end - start) as u32;
    let mut first_disagreement = None;
    for pos in start..end {
        if a.bit_at(pos)? != b.bit_at(pos)? {
            first_disagreement = Some(pos);
            break;
        }
    }
    let verified_bits = match first_disagreement {
        Some(pos) => (pos - start) as u32,
        None => overlap_bits,
    };
    let mut raw = String::new();
    for d in 0..verified_bits.div_ceil(4) {
        let mut nibble = 0u8;
        for o in 0..4 {
            let idx = d * 4 + o;
            let bit = if idx < verified_bits {
                a.bit_at(start + idx as u64)? as u8
            } else {
                0
            };
            nibble = nibble << 1 | bit;
        }
        raw.push(char::from_digit(nibble as u32, 16).unwrap().to_ascii_uppercase());
    }
    Ok(OverlapReport {
        run_a: a.clone(),
        run_b: b.clone(),
        overlap_start: start,
        overlap_bits,
        verified_bits,
        verified_hex: hex_blocks(&raw),
        first_disagreement,
    })
}

/// Empirical distribution summary from simulating the uniform-sum error.
#[derive(Debug, Clone)]
pub struct ErrorSimulation {
    pub trials: u64,
    pub term_count: u64,
    pub precision_bits: u32,
    /// |E| per trial, ascending.
    sorted_abs: Vec<f64>,
    mean: f64,
    variance: f64,
}

impl ErrorSimulation {
    /// Fraction of trials with |E| < 2^-bound_exponent.
    pub fn empirical_probability(&self, bound_exponent: i32) -> f64 {
        let bound = (bound_exponent as f64).exp2().recip();
        let below = self.sorted_abs.partition_point(|&x| x < bound);
        below as f64 / self.sorted_abs.len() as f64
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }
}

/// Simulates E = sum of `model.term_count` uniform errors in [-e, e] for
/// `trials` trials with a seeded generator; single-threaded so a seed fully
/// determines the outcome. Intended for scaled-down m, as a cross-check of
/// the normal approximation.
pub fn monte_carlo_error(model: &ErrorModel, trials: u64, seed: u64) -> ErrorSimulation {
    assert!(trials >= 1);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let eps = model.ulp_half();
    let mut abs = Vec::with_capacity(trials as usize);
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for _ in 0..trials {
        let mut e = 0.0f64;
        for _ in 0..model.term_count() {
            // uniform in [-1, 1) from the top 53 bits, scaled by eps
            let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 52) as f64) - 1.0;
            e += u * eps;
        }
        sum += e;
        sum_sq += e * e;
        abs.push(e.abs());
    }
    abs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let n = trials as f64;
    let mean = sum / n;
    ErrorSimulation {
        trials,
        term_count: model.term_count(),
        precision_bits: model.precision_bits(),
        sorted_abs: abs,
        mean,
        variance: sum_sq / n - mean * mean,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{extract, ExtractionRequest};

    #[test]
    fn confidence_reproduces_reported_figures() {
        // 64-bit floats at the 10^15-th bit: m ~ 7e14, p = 52
        let model = ErrorModel::new(700_000_000_000_000, 52).unwrap();
        let c29 = model.confidence(29);
        assert!((0.7274..=0.7284).contains(&c29), "b=29 gave {c29}");
        let c28 = model.confidence(28);
        assert!((0.9715..=0.9725).contains(&c28), "b=28 gave {c28}");
        // direct evaluation of the same approximation at b=27 gives
        // ~99.9989%, not the sometimes-quoted 99.999989%
        let c27 = model.confidence(27);
        assert!((0.99998..=0.99999).contains(&c27), "b=27 gave {c27}");
    }

    #[test]
    fn confidence_limits_and_monotonicity() {
        let model = ErrorModel::new(1_000_000, 64).unwrap();
        // a bound vastly wider than sigma is certain
        assert!(model.confidence(1) > 0.999_999_999);
        // tighter bounds mean lower confidence
        let mut prev = 1.0;
        for b in 50..70 {
            let c = model.confidence(b);
            assert!(c <= prev + 1e-15, "confidence must fall as b grows");
            prev = c;
        }
        // higher precision means higher confidence at fixed b
        let lo = ErrorModel::new(1_000_000, 40).unwrap().confidence(30);
        let hi = ErrorModel::new(1_000_000, 64).unwrap().confidence(30);
        assert!(hi > lo);
    }

    #[test]
    fn term_count_examples() {
        // n = 0: only tail terms, O(p) of them
        let c = term_count(&Formula::bbp16(), 0, 256);
        assert!(c > 0 && c < 1000, "n=0 count was {c}");
        // monotone in n
        let mut prev = 0;
        for n in [0u64, 10, 1000, 100_000, 10_000_000] {
            let c = term_count(&Formula::bellard(), n, 256);
            assert!(c >= prev);
            prev = c;
        }
        // the bellard index set at n = 10^15 has ~7e14 terms (within 1%)
        let n = 1_000_000_000_000_000u64;
        let c = term_count(&Formula::bellard(), n, 52);
        assert!(
            (c as f64 / 7e14 - 1.0).abs() < 0.01,
            "count {c} is not ~7e14"
        );
    }

    #[test]
    fn overlap_identical_runs() {
        let req = ExtractionRequest::from_reported(Formula::bbp16(), 9, 16, 64).unwrap();
        let res = extract(&req).unwrap();
        let report = overlap_check(&res, &res).unwrap();
        assert_eq!(report.verified_bits, 16);
        assert!(report.agrees());
        assert_eq!(report.verified_hex, "3F6A");
    }

    #[test]
    fn overlap_shifted_runs() {
        let a = extract(&ExtractionRequest::from_reported(Formula::bbp16(), 9, 24, 64).unwrap())
            .unwrap();
        let b = extract(&ExtractionRequest::from_reported(Formula::bellard(), 5, 24, 64).unwrap())
            .unwrap();
        let ab = overlap_check(&a, &b).unwrap();
        // overlap is positions 9..29: 20 bits
        assert_eq!(ab.overlap_start, 9);
        assert_eq!(ab.overlap_bits, 20);
        assert_eq!(ab.verified_bits, 20);
        assert!(ab.agrees());
        // symmetric
        let ba = overlap_check(&b, &a).unwrap();
        assert_eq!(ba.verified_bits, ab.verified_bits);
        assert_eq!(ba.overlap_start, ab.overlap_start);
    }

    #[test]
    fn overlap_synthetic_disagreement() {
        // two hand-built "runs" over a known bit string; run b corrupts one
        // bit, so verification stops exactly there
        use crate::fixedpoint::FixedFraction;
        let a = ExtractionResult::new(
            FixedFraction::from_limbs(vec![0xA5A5_5A5A_0F0F_F0F0]).unwrap(),
            5,
            48,
        )
        .unwrap();
        let mut limbs = vec![0xA5A5_5A5A_0F0F_F0F0u64];
        limbs[0] ^= 1 << 33; // flip fraction bit 31 of run b
        let b = ExtractionResult::new(
            FixedFraction::from_limbs(limbs).unwrap(),
            5,
            48,
        )
        .unwrap();
        let report = overlap_check(&a, &b).unwrap();
        assert_eq!(report.first_disagreement, Some(5 + 30));
        assert_eq!(report.verified_bits, 30);
        assert!(!report.agrees());
    }

    #[test]
    fn overlap_rejects_disjoint() {
        let a = extract(&ExtractionRequest::from_reported(Formula::bbp16(), 1, 8, 64).unwrap())
            .unwrap();
        let b = extract(&ExtractionRequest::from_reported(Formula::bbp16(), 9, 8, 64).unwrap())
            .unwrap();
        assert!(matches!(overlap_check(&a, &b), Err(Error::DisjointRanges)));
    }

    #[test]
    fn monte_carlo_single_term_is_uniform() {
        // m = 1: E is uniform on [-e, e], so P(|E| < e/2) = 1/2 exactly
        let model = ErrorModel::new(1, 20).unwrap();
        let sim = monte_carlo_error(&model, 200_000, 42);
        let p = sim.empirical_probability(20 + 2); // bound e/2 = 2^-(p+2)
        assert!((p - 0.5).abs() < 0.01, "got {p}");
    }

    #[test]
    fn monte_carlo_variance_matches_model() {
        let model = ErrorModel::new(1000, 20).unwrap();
        let sim = monte_carlo_error(&model, 20_000, 7);
        let rel = sim.variance() / model.variance() - 1.0;
        assert!(rel.abs() < 0.05, "relative variance error {rel}");
    }
}
