//! Work decomposition: the Jobs / Tasks / Threads hierarchy over each
//! sub-series' term range, and the plan that covers a whole request.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::fixedpoint::FixedFraction;
use crate::series::{sum_series_range, tail_cutoff, ExtractionRequest, Formula};

/// Position of a slice in the partition hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SliceLevel {
    Job,
    Task,
    Thread,
}

impl SliceLevel {
    fn child(self) -> SliceLevel {
        match self {
            SliceLevel::Job => SliceLevel::Task,
            _ => SliceLevel::Thread,
        }
    }
}

/// Parameters shared by every slice of one run; together with a slice's
/// content they determine its identity and its value.
#[derive(Debug, Clone)]
pub struct RunParams {
    pub formula: Formula,
    /// The power-of-two exponent (start position minus one).
    pub n: u64,
    pub precision_bits: u32,
}

impl RunParams {
    pub fn from_request(request: &ExtractionRequest) -> Self {
        RunParams {
            formula: request.formula.clone(),
            n: request.exponent(),
            precision_bits: request.precision_bits,
        }
    }
}

/// A half-open index subrange of one sub-series at one hierarchy level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComputationSlice {
    pub level: SliceLevel,
    pub series_index: usize,
    pub k_range: Range<u64>,
}

impl ComputationSlice {
    pub fn term_count(&self) -> u64 {
        self.k_range.end - self.k_range.start
    }

    /// Stable identity: a deterministic function of the run parameters and
    /// the slice content. Used as the checkpoint key.
    pub fn id(&self, params: &RunParams) -> String {
        format!(
            "{}/n={}/p={}/s={}/k={}..{}",
            params.formula.name(),
            params.n,
            params.precision_bits,
            self.series_index,
            self.k_range.start,
            self.k_range.end
        )
    }

    /// Splits into at most `parts` disjoint child slices of near-equal size
    /// (sizes differ by at most one); a range with fewer terms than `parts`
    /// yields one singleton per term. Deterministic, concatenation covers
    /// the parent exactly.
    pub fn partition(&self, parts: usize) -> Result<Vec<ComputationSlice>> {
        let level = self.level.child();
        Ok(split_range(&self.k_range, parts)?
            .into_iter()
            .map(|k_range| ComputationSlice {
                level,
                series_index: self.series_index,
                k_range,
            })
            .collect())
    }
}

/// Operation form of [`ComputationSlice::partition`].
pub fn partition(slice: &ComputationSlice, parts: usize) -> Result<Vec<ComputationSlice>> {
    slice.partition(parts)
}

pub(crate) fn split_range(range: &Range<u64>, parts: usize) -> Result<Vec<Range<u64>>> {
    if parts == 0 {
        return Err(Error::ZeroPartitions);
    }
    let len = range.end - range.start;
    let m = (parts as u64).min(len);
    if m == 0 {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(m as usize);
    let (base, rem) = (len / m, len % m);
    let mut start = range.start;
    for i in 0..m {
        let size = base + (i < rem) as u64;
        out.push(start..start + size);
        start += size;
    }
    debug_assert_eq!(start, range.end);
    Ok(out)
}

/// Evaluates a slice to its exact mod-1 partial sum: jobs partition into
/// tasks, tasks into thread slices, thread slices delegate to the series
/// sum. Exactness of mod-1 addition makes the result independent of the
/// grouping, so this is also the single-process reference for a whole run.
pub fn compute(
    params: &RunParams,
    slice: &ComputationSlice,
    tasks_per_job: usize,
    threads_per_task: usize,
) -> Result<FixedFraction> {
    let spec = params
        .formula
        .series()
        .get(slice.series_index)
        .ok_or_else(|| {
            Error::PlanMismatch(format!("series index {} out of range", slice.series_index))
        })?;
    match slice.level {
        SliceLevel::Thread => {
            sum_series_range(spec, params.n, slice.k_range.clone(), params.precision_bits)
        }
        level => {
            let parts = slice.partition(match level {
                SliceLevel::Job => tasks_per_job,
                _ => threads_per_task,
            })?;
            let mut acc = FixedFraction::zero(params.precision_bits)?;
            for part in &parts {
                acc = acc.add_mod1(&compute(params, part, tasks_per_job, threads_per_task)?)?;
            }
            Ok(acc)
        }
    }
}

/// How job slices are sized when building a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanSizing {
    /// Split every sub-series into this many job slices.
    JobsPerSeries(usize),
    /// Size job slices to about this many terms each.
    TermsPerJob(u64),
}

impl PlanSizing {
    /// Stable text form stored in the run header.
    pub fn label(&self) -> String {
        match self {
            PlanSizing::JobsPerSeries(j) => format!("count:{j}"),
            PlanSizing::TermsPerJob(t) => format!("terms:{t}"),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::MalformedCheckpoint(format!("bad plan sizing `{text}`"));
        let (kind, value) = text.split_once(':').ok_or_else(bad)?;
        match kind {
            "count" => Ok(PlanSizing::JobsPerSeries(
                value.parse().map_err(|_| bad())?,
            )),
            "terms" => Ok(PlanSizing::TermsPerJob(value.parse().map_err(|_| bad())?)),
            _ => Err(bad()),
        }
    }
}

/// The full decomposition of a request: job slices covering every
/// sub-series up to its cutoff, plus the task and thread fan-out applied
/// below each job.
#[derive(Debug, Clone)]
pub struct PartitionPlan {
    pub sizing: PlanSizing,
    pub tasks_per_job: usize,
    pub threads_per_task: usize,
    job_slices: Vec<ComputationSlice>,
}

impl PartitionPlan {
    pub fn new(
        request: &ExtractionRequest,
        sizing: PlanSizing,
        tasks_per_job: usize,
        threads_per_task: usize,
    ) -> Result<Self> {
        request.validate()?;
        if tasks_per_job == 0 || threads_per_task == 0 {
            return Err(Error::ZeroPartitions);
        }
        match sizing {
            PlanSizing::JobsPerSeries(0) | PlanSizing::TermsPerJob(0) => {
                return Err(Error::ZeroPartitions)
            }
            _ => {}
        }
        let n = request.exponent();
        let p = request.precision_bits;
        let mut job_slices = Vec::new();
        for (series_index, spec) in request.formula.series().iter().enumerate() {
            let cutoff = tail_cutoff(spec, n, p);
            if cutoff == 0 {
                continue;
            }
            let parts = match sizing {
                PlanSizing::JobsPerSeries(j) => j,
                PlanSizing::TermsPerJob(t) => cutoff.div_ceil(t).min(usize::MAX as u64) as usize,
            };
            for k_range in split_range(&(0..cutoff), parts)? {
                job_slices.push(ComputationSlice {
                    level: SliceLevel::Job,
                    series_index,
                    k_range,
                });
            }
        }
        Ok(PartitionPlan {
            sizing,
            tasks_per_job,
            threads_per_task,
            job_slices,
        })
    }

    pub fn job_slices(&self) -> &[ComputationSlice] {
        &self.job_slices
    }

    pub fn total_terms(&self) -> u64 {
        self.job_slices.iter().map(|s| s.term_count()).sum()
    }

    /// Checks that the job slices are exactly a disjoint ascending cover of
    /// [0, cutoff) for every sub-series of the request.
    pub fn validate_cover(&self, request: &ExtractionRequest) -> Result<()> {
        let n = request.exponent();
        let p = request.precision_bits;
        for (series_index, spec) in request.formula.series().iter().enumerate() {
            let cutoff = tail_cutoff(spec, n, p);
            let mut next = 0u64;
            for s in self
                .job_slices
                .iter()
                .filter(|s| s.series_index == series_index)
            {
                if s.k_range.start != next || s.k_range.end <= s.k_range.start {
                    return Err(Error::PlanMismatch(format!(
                        "series {series_index} slices are not a disjoint ascending cover"
                    )));
                }
                next = s.k_range.end;
            }
            if next != cutoff {
                return Err(Error::PlanMismatch(format!(
                    "series {series_index} covered to {next}, cutoff is {cutoff}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::extract;

    fn slice(range: Range<u64>) -> ComputationSlice {
        ComputationSlice {
            level: SliceLevel::Job,
            series_index: 0,
            k_range: range,
        }
    }

    #[test]
    fn partition_even_split() {
        let parts = slice(0..100).partition(4).unwrap();
        let ranges: Vec<_> = parts.iter().map(|s| s.k_range.clone()).collect();
        assert_eq!(ranges, vec![0..25, 25..50, 50..75, 75..100]);
        assert!(parts.iter().all(|s| s.level == SliceLevel::Task));
    }

    #[test]
    fn partition_degenerate() {
        let parts = slice(0..3).partition(5).unwrap();
        let ranges: Vec<_> = parts.iter().map(|s| s.k_range.clone()).collect();
        assert_eq!(ranges, vec![0..1, 1..2, 2..3]);
        assert!(slice(0..3).partition(0).is_err());
        assert!(slice(7..7).partition(3).unwrap().is_empty());
    }

    #[test]
    fn partition_covers_parent() {
        for (len, m) in [(1u64, 1usize), (17, 4), (100, 7), (3, 3), (1000, 13)] {
            let parent = slice(10..10 + len);
            let parts = parent.partition(m).unwrap();
            let mut next = 10;
            for s in &parts {
                assert_eq!(s.k_range.start, next);
                next = s.k_range.end;
            }
            assert_eq!(next, 10 + len);
            let sizes: Vec<u64> = parts.iter().map(|s| s.term_count()).collect();
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            assert!(hi - lo <= 1, "sizes differ by more than one: {sizes:?}");
        }
    }

    #[test]
    fn compute_matches_extract_per_series() {
        let request = ExtractionRequest::from_reported(Formula::bbp16(), 101, 64, 64).unwrap();
        let params = RunParams::from_request(&request);
        let plan = PartitionPlan::new(&request, PlanSizing::JobsPerSeries(3), 2, 2).unwrap();
        plan.validate_cover(&request).unwrap();

        // fold every job slice with the series signs: must equal extract()
        let p = request.precision_bits;
        let mut per_series =
            vec![FixedFraction::zero(p).unwrap(); request.formula.series().len()];
        for s in plan.job_slices() {
            let sum = compute(&params, s, plan.tasks_per_job, plan.threads_per_task).unwrap();
            per_series[s.series_index] = per_series[s.series_index].add_mod1(&sum).unwrap();
        }
        let mut total = FixedFraction::zero(p).unwrap();
        for (spec, sum) in request.formula.series().iter().zip(&per_series) {
            total = if spec.sign.is_plus() {
                total.add_mod1(sum).unwrap()
            } else {
                total.sub_mod1(sum).unwrap()
            };
        }
        let direct = extract(&request).unwrap();
        assert_eq!(total, direct.fraction);
    }

    #[test]
    fn compute_is_shape_invariant() {
        let request = ExtractionRequest::from_reported(Formula::bellard(), 50, 64, 64).unwrap();
        let params = RunParams::from_request(&request);
        let job = ComputationSlice {
            level: SliceLevel::Job,
            series_index: 0,
            k_range: 0..40,
        };
        let one = compute(&params, &job, 1, 1).unwrap();
        let wide = compute(&params, &job, 5, 8).unwrap();
        assert_eq!(one, wide, "thread fan-out must not change the limbs");
    }

    #[test]
    fn empty_slice_is_zero() {
        let request = ExtractionRequest::from_reported(Formula::bbp16(), 10, 64, 64).unwrap();
        let params = RunParams::from_request(&request);
        let empty = ComputationSlice {
            level: SliceLevel::Thread,
            series_index: 2,
            k_range: 9..9,
        };
        assert!(compute(&params, &empty, 1, 1).unwrap().is_zero());
    }

    #[test]
    fn sizing_labels_roundtrip() {
        for sizing in [PlanSizing::JobsPerSeries(64), PlanSizing::TermsPerJob(800_000)] {
            assert_eq!(PlanSizing::parse(&sizing.label()).unwrap(), sizing);
        }
        assert!(PlanSizing::parse("bogus").is_err());
        assert!(PlanSizing::parse("count:x").is_err());
    }

    #[test]
    fn term_budget_plan_sizes_jobs() {
        let request = ExtractionRequest::from_reported(Formula::bbp16(), 100_001, 64, 64).unwrap();
        let plan = PartitionPlan::new(&request, PlanSizing::TermsPerJob(5_000), 2, 2).unwrap();
        plan.validate_cover(&request).unwrap();
        assert!(plan.job_slices().iter().all(|s| s.term_count() <= 5_000));
        // slice ids are unique
        let params = RunParams::from_request(&request);
        let mut ids: Vec<String> = plan.job_slices().iter().map(|s| s.id(&params)).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), plan.job_slices().len());
    }
}
