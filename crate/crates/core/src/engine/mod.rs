//! The elastic summation engine.
//!
//! A single-threaded controller drives the run: it partitions the request
//! into job slices, submits each job as map-side or reduce-side work
//! depending on free slots, fans the job out to task parts on a worker
//! pool, folds task sums into the job's partial sum, and persists every
//! completed job before moving on. Because all arithmetic is exact mod 1,
//! the final limbs depend only on the request, not on plan shape, worker
//! count, scheduling order, or how often the run was interrupted and
//! resumed.

mod checkpoint;
mod pool;
mod slice;
mod slots;

pub use checkpoint::{CheckpointRecord, CheckpointStore, RunMeta, FORMAT_VERSION};
pub use slice::{
    compute, partition, ComputationSlice, PartitionPlan, PlanSizing, RunParams, SliceLevel,
};
pub use slots::{schedule_step, LoadTrace, ScheduleDecision, Side, SlotModel};

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crossbeam_channel::RecvTimeoutError;

use crate::error::{Error, Result};
use crate::fixedpoint::FixedFraction;
use crate::series::{ExtractionRequest, ExtractionResult};

use pool::{Completion, WorkItem, WorkerPool};

/// How often the controller wakes to advance the load trace and retry
/// dispatching when nothing has completed.
const TICK: Duration = Duration::from_millis(2);

/// Worker budgets and scheduling knobs; orthogonal to the result.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub map_slots: usize,
    pub reduce_slots: usize,
    /// Free slots a side must show before a job is submitted there.
    pub submit_threshold: usize,
    /// Cap on outstanding jobs.
    pub concurrent_jobs: usize,
    /// Seed for the synthetic background-load trace; `None` disables it.
    pub load_seed: Option<u64>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            map_slots: 4,
            reduce_slots: 2,
            submit_threshold: 1,
            concurrent_jobs: 60,
            load_seed: None,
        }
    }
}

impl EngineConfig {
    fn validate(&self) -> Result<()> {
        if self.concurrent_jobs == 0 {
            return Err(Error::InvalidConfig("concurrent job cap must be positive".into()));
        }
        // slot invariants are checked by SlotModel::new
        SlotModel::new(self.map_slots, self.reduce_slots, self.submit_threshold).map(|_| ())
    }
}

/// Cooperative interruption: once the flag is set the controller stops
/// dispatching, abandons in-flight parts, and returns
/// [`Error::Interrupted`]; every already-completed job stays persisted.
#[derive(Debug, Clone, Default)]
pub struct RunControl {
    interrupt: Arc<AtomicBool>,
}

impl RunControl {
    pub fn new() -> Self {
        Self::default()
    }

    /// Shares an existing flag (e.g. one set from a signal handler).
    pub fn with_flag(flag: Arc<AtomicBool>) -> Self {
        RunControl { interrupt: flag }
    }

    pub fn flag(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.interrupt)
    }

    pub fn request_interrupt(&self) {
        self.interrupt.store(true, Ordering::SeqCst);
    }

    pub fn is_interrupted(&self) -> bool {
        self.interrupt.load(Ordering::SeqCst)
    }
}

/// Timing and scheduling facts about one run.
#[derive(Debug, Clone, Default)]
pub struct RunStats {
    pub elapsed: Duration,
    /// Total worker time across all parts (the "CPU time" of the run).
    pub cpu_time: Duration,
    pub jobs_total: usize,
    pub jobs_computed: usize,
    pub jobs_resumed: usize,
    pub map_side_jobs: usize,
    pub reduce_side_jobs: usize,
    /// High-water marks of concurrently running parts per side.
    pub max_map_in_use: usize,
    pub max_reduce_in_use: usize,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub result: ExtractionResult,
    pub stats: RunStats,
}

/// Executes the request under the plan, persisting each job slice's
/// partial sum as it completes. A store that already holds records for
/// this exact run (matching `run.meta`) is continued, not recomputed.
pub fn run(
    request: &ExtractionRequest,
    plan: &PartitionPlan,
    store: &CheckpointStore,
    config: &EngineConfig,
    control: &RunControl,
) -> Result<RunOutcome> {
    execute(request, plan, store, config, control)
}

/// Continues a run from whatever subset of job records the store holds,
/// recomputing only the missing slices. Headers are validated against the
/// request so records from a different run are refused. An empty store
/// behaves exactly like [`run`].
pub fn resume(
    request: &ExtractionRequest,
    plan: &PartitionPlan,
    store: &CheckpointStore,
    config: &EngineConfig,
    control: &RunControl,
) -> Result<RunOutcome> {
    execute(request, plan, store, config, control)
}

/// State of one submitted job.
struct JobRun {
    side: Side,
    /// Parts not yet dispatched. A reduce-side job starts with the single
    /// partition step (which occupies a map slot); its task parts arrive
    /// once that step reports back.
    queue: VecDeque<Part>,
    in_flight: usize,
    tasks_expected: Option<usize>,
    tasks_done: usize,
    acc: FixedFraction,
}

enum Part {
    Partition,
    Task(ComputationSlice),
}

fn execute(
    request: &ExtractionRequest,
    plan: &PartitionPlan,
    store: &CheckpointStore,
    config: &EngineConfig,
    control: &RunControl,
) -> Result<RunOutcome> {
    let started = Instant::now();
    request.validate()?;
    config.validate()?;
    plan.validate_cover(request)?;

    let params = Arc::new(RunParams::from_request(request));
    let meta = meta_for(request, plan);
    match store.read_meta()? {
        Some(existing) => existing.ensure_matches(&meta)?,
        None => store.write_meta(&meta)?,
    }

    let jobs = plan.job_slices();
    let expected_ids: Vec<String> = jobs.iter().map(|s| s.id(&params)).collect();
    let mut stats = RunStats {
        jobs_total: jobs.len(),
        ..RunStats::default()
    };

    // Load whatever this run already persisted.
    let mut sums: Vec<Option<FixedFraction>> = vec![None; jobs.len()];
    for (index, expected_id) in expected_ids.iter().enumerate() {
        if let Some(record) = store.read_job(index)? {
            if record.slice_id != *expected_id {
                return Err(Error::MetaMismatch {
                    field: "slice",
                    stored: record.slice_id,
                    requested: expected_id.clone(),
                });
            }
            if record.partial_sum.precision_bits() != request.precision_bits {
                return Err(Error::MalformedCheckpoint(format!(
                    "job {index} stored at {} bits, run uses {}",
                    record.partial_sum.precision_bits(),
                    request.precision_bits
                )));
            }
            sums[index] = Some(record.partial_sum);
            stats.jobs_resumed += 1;
        }
    }

    let mut pending: VecDeque<usize> = (0..jobs.len()).filter(|&i| sums[i].is_none()).collect();

    if !pending.is_empty() {
        let mut slots = SlotModel::new(config.map_slots, config.reduce_slots, config.submit_threshold)?;
        let mut trace = config.load_seed.map(LoadTrace::new);
        let mut last_tick = Instant::now();
        let pool = WorkerPool::spawn(
            Arc::clone(&params),
            plan.threads_per_task,
            config.map_slots + config.reduce_slots,
        );
        let mut outstanding: BTreeMap<usize, JobRun> = BTreeMap::new();

        loop {
            if control.is_interrupted() {
                return Err(Error::Interrupted);
            }
            if let Some(trace) = trace.as_mut() {
                if last_tick.elapsed() >= TICK {
                    trace.step(&mut slots);
                    last_tick = Instant::now();
                }
            }

            // dispatch queued parts of outstanding jobs while slots are free
            for (&index, job) in outstanding.iter_mut() {
                while let Some(part) = job.queue.front() {
                    let side = match part {
                        Part::Partition => Side::Map,
                        Part::Task(_) => job.side,
                    };
                    if !slots.try_acquire(side) {
                        break;
                    }
                    job.in_flight += 1;
                    match job.queue.pop_front().expect("front exists") {
                        Part::Partition => pool.submit(WorkItem::PartitionJob {
                            job_index: index,
                            slice: jobs[index].clone(),
                            parts: plan.tasks_per_job,
                        }),
                        Part::Task(slice) => pool.submit(WorkItem::Task {
                            job_index: index,
                            slice,
                        }),
                    }
                }
            }

            // submit at most one job per observation of the slot state, so
            // the side decision always reflects the load just dispatched
            if outstanding.len() < config.concurrent_jobs && !pending.is_empty() {
                match schedule_step(&slots, pending.len()) {
                    ScheduleDecision::SubmitMapSide => {
                        let index = pending.pop_front().expect("pending non-empty");
                        // map-side: the controller partitions up front and
                        // every task part runs in its own map-slot worker
                        let tasks = jobs[index].partition(plan.tasks_per_job)?;
                        outstanding.insert(
                            index,
                            JobRun {
                                side: Side::Map,
                                tasks_expected: Some(tasks.len()),
                                queue: tasks.into_iter().map(Part::Task).collect(),
                                in_flight: 0,
                                tasks_done: 0,
                                acc: FixedFraction::zero(request.precision_bits)?,
                            },
                        );
                        stats.map_side_jobs += 1;
                        continue;
                    }
                    ScheduleDecision::SubmitReduceSide => {
                        let index = pending.pop_front().expect("pending non-empty");
                        // reduce-side: a single partitioning step (on a map
                        // slot) feeds task parts to reduce-slot workers
                        outstanding.insert(
                            index,
                            JobRun {
                                side: Side::Reduce,
                                tasks_expected: None,
                                queue: VecDeque::from([Part::Partition]),
                                in_flight: 0,
                                tasks_done: 0,
                                acc: FixedFraction::zero(request.precision_bits)?,
                            },
                        );
                        stats.reduce_side_jobs += 1;
                        continue;
                    }
                    ScheduleDecision::Wait => {}
                }
            }

            if outstanding.is_empty() && pending.is_empty() {
                stats.max_map_in_use = slots.max_in_use(Side::Map);
                stats.max_reduce_in_use = slots.max_in_use(Side::Reduce);
                break;
            }

            match pool.completions().recv_timeout(TICK) {
                Ok(Completion::Task {
                    job_index,
                    sum,
                    cpu,
                }) => {
                    stats.cpu_time += cpu;
                    let job = outstanding.get_mut(&job_index).expect("job outstanding");
                    slots.release(job.side);
                    job.in_flight -= 1;
                    job.tasks_done += 1;
                    job.acc = job.acc.add_mod1(&sum)?;
                    if job.tasks_expected == Some(job.tasks_done)
                        && job.queue.is_empty()
                        && job.in_flight == 0
                    {
                        store.write_job(job_index, &expected_ids[job_index], &job.acc)?;
                        let job = outstanding.remove(&job_index).expect("job outstanding");
                        sums[job_index] = Some(job.acc);
                        stats.jobs_computed += 1;
                    }
                }
                Ok(Completion::Partitioned {
                    job_index,
                    tasks,
                    cpu,
                }) => {
                    stats.cpu_time += cpu;
                    let job = outstanding.get_mut(&job_index).expect("job outstanding");
                    // the partition step ran on a map slot
                    slots.release(Side::Map);
                    job.in_flight -= 1;
                    job.tasks_expected = Some(tasks.len());
                    job.queue.extend(tasks.into_iter().map(Part::Task));
                }
                Ok(Completion::Failed { error }) => return Err(error),
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::InvalidConfig("worker pool vanished".into()))
                }
            }
        }
    }

    // Final sum: fold per series, then combine with the fixed signs mod 1.
    let p = request.precision_bits;
    let series_count = request.formula.series().len();
    let mut per_series = vec![FixedFraction::zero(p)?; series_count];
    for (slice, sum) in jobs.iter().zip(&sums) {
        let sum = sum.as_ref().expect("all jobs complete");
        per_series[slice.series_index] = per_series[slice.series_index].add_mod1(sum)?;
    }
    let mut total = FixedFraction::zero(p)?;
    for (spec, sum) in request.formula.series().iter().zip(&per_series) {
        total = if spec.sign.is_plus() {
            total.add_mod1(sum)?
        } else {
            total.sub_mod1(sum)?
        };
    }
    let result =
        ExtractionResult::new(total, request.start_position, request.reported_bits())?;
    stats.elapsed = started.elapsed();
    Ok(RunOutcome { result, stats })
}

/// The header describing this request/plan pair.
pub fn meta_for(request: &ExtractionRequest, plan: &PartitionPlan) -> RunMeta {
    RunMeta {
        version: FORMAT_VERSION,
        formula: request.formula.name().to_string(),
        n: request.exponent(),
        precision_bits: request.precision_bits,
        guard_bits: request.guard_bits,
        plan: plan.sizing.label(),
        tasks_per_job: plan.tasks_per_job,
        threads_per_task: plan.threads_per_task,
        jobs: plan.job_slices().len(),
    }
}
