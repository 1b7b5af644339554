//! The dual-run protocol at realistic positions, and the behavior of a
//! low-precision run against a high-precision one: agreement holds through
//! the confidence bound of the error model (minus carry propagation),
//! divergence appears only in the trailing bits.

use pibits_core::series::{extract, ExtractionRequest, Formula};
use pibits_core::verify::{overlap_check, term_count, ErrorModel};

#[test]
fn offset_runs_agree_over_their_overlap() {
    // the protocol pair: runs at s and s-4 must agree on every shared bit
    let s = 100_001u64;
    let a = extract(&ExtractionRequest::from_reported(Formula::bbp16(), s, 256, 64).unwrap())
        .unwrap();
    let b = extract(&ExtractionRequest::from_reported(Formula::bellard(), s - 4, 256, 64).unwrap())
        .unwrap();
    let report = overlap_check(&a, &b).unwrap();
    assert_eq!(report.overlap_bits, 252);
    assert_eq!(report.verified_bits, 252);
    assert!(report.agrees());
}

#[test]
fn low_precision_run_diverges_only_beyond_the_confidence_bound() {
    // a 128-bit run with no guard bits carries visible rounding error; a
    // 256-bit run over the same window is clean. The error model predicts
    // where they may part: with m ~ 10^6 terms, |E| < 2^-b holds at 99.99%
    // confidence for b = 117. A bounded error can still flip earlier bits
    // by rippling through a run of equal bits, so the check allows 16 bits
    // of carry propagation below the bound.
    for s in [1_000_001u64, 1_000_005, 999_901, 1_000_101, 1_000_201] {
        let low = extract(&ExtractionRequest {
            start_position: s,
            precision_bits: 128,
            guard_bits: 0,
            formula: Formula::bbp16(),
        })
        .unwrap();
        let high = extract(&ExtractionRequest {
            start_position: s,
            precision_bits: 256,
            guard_bits: 128,
            formula: Formula::bbp16(),
        })
        .unwrap();
        let report = overlap_check(&low, &high).unwrap();

        let terms = term_count(&Formula::bbp16(), s - 1, 128);
        let model = ErrorModel::new(terms, 128).unwrap();
        let bound = (1..=128)
            .rev()
            .find(|&b| model.confidence(b) >= 0.9999)
            .expect("bound exists");
        assert_eq!(bound, 117, "term count near 10^6 pins the bound");

        // the unguarded run goes wrong somewhere in its trailing bits
        let diverged_at = report
            .first_disagreement
            .expect("an unguarded 128-bit run cannot match 128 clean bits")
            - s
            + 1;
        assert!(
            diverged_at as i64 >= bound as i64 - 16,
            "s={s}: diverged at bit {diverged_at}, before the bound {bound} - 16"
        );
        assert!(
            report.verified_bits >= 100,
            "s={s}: only {} bits survived",
            report.verified_bits
        );
    }
}
