//! Arbitrary-position binary digit extraction for pi.
//!
//! The library computes bits of pi at any fraction position via BBP-type
//! series, evaluated in exact fixed-point arithmetic mod 1. Around the
//! arithmetic sits a desk-scale elastic summation engine: work is
//! partitioned into jobs, tasks and thread slices, scheduled against a
//! map/reduce slot model, checkpointed per job, and resumable. A
//! verification layer implements the dual-run overlap protocol and a
//! probabilistic model of accumulated rounding error.

pub mod engine;
pub mod error;
pub mod fixedpoint;
pub mod modmath;
pub mod render;
pub mod series;
pub mod verify;

pub use error::{Error, Result};
pub use fixedpoint::{FixedFraction, WORD_BITS};
pub use modmath::{mod_pow, montgomery_pow, MontgomeryContext, MONTGOMERY_THRESHOLD};
pub use series::{extract, ExtractionRequest, ExtractionResult, Formula, SeriesSpec, Sign};
