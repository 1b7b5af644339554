//! `pibits`: compute, verify and estimate bits of pi at arbitrary
//! positions, on top of the checkpointed summation engine.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 storage or interruption,
//! 3 verification disagreement.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, OnceLock};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use pibits_core::engine::{
    self, CheckpointStore, EngineConfig, PartitionPlan, PlanSizing, RunControl, RunOutcome,
};
use pibits_core::render::thousands;
use pibits_core::series::{ExtractionRequest, ExtractionResult, Formula};
use pibits_core::verify::{monte_carlo_error, overlap_check, term_count, ErrorModel};
use pibits_core::{Error, FixedFraction};

const EXIT_CONFIG: u8 = 1;
const EXIT_STORAGE: u8 = 2;
const EXIT_DISAGREEMENT: u8 = 3;

/// Task fan-out below one job: tasks per job, thread slices per task.
const TASKS_PER_JOB: usize = 4;
const THREADS_PER_TASK: usize = 2;

#[derive(Parser)]
#[command(
    name = "pibits",
    version,
    about = "Bits of pi at arbitrary positions via BBP-type series",
    after_help = "Every flag can also be set through the environment with the \
                  PIBITS_ prefix, e.g. PIBITS_POS=9 PIBITS_BITS=8 pibits compute."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute bits of pi starting at a 1-based fraction position
    Compute(ComputeArgs),
    /// Run at --pos and --pos - 4 and accept only bits both runs agree on
    Verify(ComputeArgs),
    /// Print the rounding-error model for a planned computation
    Estimate(EstimateArgs),
    /// Continue an interrupted run from its checkpoint directory
    Resume(ResumeArgs),
}

#[derive(Args, Clone)]
struct ComputeArgs {
    /// 1-based bit position of the first reported bit
    #[arg(long, env = "PIBITS_POS")]
    pos: u64,

    /// Number of bits to report
    #[arg(long, env = "PIBITS_BITS", default_value_t = 256)]
    bits: u32,

    /// Formula preset: bbp16 or bellard
    #[arg(long, env = "PIBITS_FORMULA", default_value = "bellard")]
    formula: String,

    /// Extra low-order bits carried to absorb accumulated rounding
    #[arg(long, env = "PIBITS_GUARD", default_value_t = 64)]
    guard: u32,

    /// Map-side worker slots
    #[arg(long, env = "PIBITS_MAP_SLOTS", default_value_t = 4)]
    map_slots: usize,

    /// Reduce-side worker slots
    #[arg(long, env = "PIBITS_REDUCE_SLOTS", default_value_t = 2)]
    reduce_slots: usize,

    /// Cap on concurrently outstanding jobs
    #[arg(long, env = "PIBITS_JOBS", default_value_t = 60)]
    jobs: usize,

    /// Terms per thread slice (jobs are sized from this fan-out)
    #[arg(long, env = "PIBITS_TERMS_PER_THREAD", default_value_t = 100_000)]
    terms_per_thread: u64,

    /// Checkpoint directory; omitted means an ephemeral run
    #[arg(long, env = "PIBITS_CKPT_DIR")]
    ckpt_dir: Option<PathBuf>,

    /// Machine-readable output
    #[arg(long, env = "PIBITS_JSON")]
    json: bool,

    /// Seed for the synthetic background-load trace (exercises the
    /// elastic map/reduce scheduling; omit for an unloaded run)
    #[arg(long, env = "PIBITS_SEED")]
    seed: Option<u64>,
}

#[derive(Args)]
struct EstimateArgs {
    /// 1-based bit position the computation would start at
    #[arg(long, env = "PIBITS_POS")]
    pos: u64,

    /// Working precision of the modeled arithmetic in bits (52 models
    /// IEEE 754 doubles)
    #[arg(long, env = "PIBITS_PRECISION", default_value_t = 52)]
    precision: u32,

    /// Center of the printed range of error-bound exponents b in
    /// P(|E| < 2^-b)
    #[arg(long, env = "PIBITS_BOUND", default_value_t = 29)]
    bound: i32,

    /// Formula preset the term count is derived from
    #[arg(long, env = "PIBITS_FORMULA", default_value = "bellard")]
    formula: String,

    /// Cross-check the analytic figures by seeded simulation with this
    /// many trials (scaled-down term count)
    #[arg(long, env = "PIBITS_TRIALS")]
    trials: Option<u64>,

    #[arg(long, env = "PIBITS_JSON")]
    json: bool,
}

#[derive(Args)]
struct ResumeArgs {
    /// Checkpoint directory of the interrupted run
    #[arg(long, env = "PIBITS_CKPT_DIR")]
    ckpt_dir: PathBuf,

    /// Expected start position (validated against the stored run)
    #[arg(long, env = "PIBITS_POS")]
    pos: Option<u64>,

    /// Expected reported bits (validated against the stored run)
    #[arg(long, env = "PIBITS_BITS")]
    bits: Option<u32>,

    /// Expected formula (validated against the stored run)
    #[arg(long, env = "PIBITS_FORMULA")]
    formula: Option<String>,

    #[arg(long, env = "PIBITS_MAP_SLOTS", default_value_t = 4)]
    map_slots: usize,

    #[arg(long, env = "PIBITS_REDUCE_SLOTS", default_value_t = 2)]
    reduce_slots: usize,

    #[arg(long, env = "PIBITS_JOBS", default_value_t = 60)]
    jobs: usize,

    #[arg(long, env = "PIBITS_JSON")]
    json: bool,

    #[arg(long, env = "PIBITS_SEED")]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Compute(args) => cmd_compute(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Resume(args) => cmd_resume(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::Storage(_) | Error::MalformedCheckpoint(_) | Error::Interrupted => EXIT_STORAGE,
        _ => EXIT_CONFIG,
    }
}

/// A SIGINT sets this flag; the engine notices it between dispatches,
/// leaves every completed job persisted, and returns with an error.
static INTERRUPT_FLAG: OnceLock<Arc<AtomicBool>> = OnceLock::new();

extern "C" fn on_sigint(_: libc::c_int) {
    if let Some(flag) = INTERRUPT_FLAG.get() {
        flag.store(true, Ordering::SeqCst);
    }
}

fn interruptible_control() -> RunControl {
    let flag = INTERRUPT_FLAG
        .get_or_init(|| Arc::new(AtomicBool::new(false)))
        .clone();
    unsafe {
        libc::signal(
            libc::SIGINT,
            on_sigint as extern "C" fn(libc::c_int) as usize,
        );
    }
    RunControl::with_flag(flag)
}

struct Store {
    store: CheckpointStore,
    /// Keeps an ephemeral directory alive for the duration of the run.
    _ephemeral: Option<tempfile::TempDir>,
}

fn open_store(dir: &Option<PathBuf>) -> Result<Store, Error> {
    match dir {
        Some(path) => Ok(Store {
            store: CheckpointStore::create_or_open(path)?,
            _ephemeral: None,
        }),
        None => {
            let tmp = tempfile::tempdir().map_err(Error::Storage)?;
            Ok(Store {
                store: CheckpointStore::create_or_open(tmp.path())?,
                _ephemeral: Some(tmp),
            })
        }
    }
}

fn build_request(args: &ComputeArgs) -> Result<ExtractionRequest, Error> {
    let formula = Formula::by_name(&args.formula)?;
    ExtractionRequest::from_reported(formula, args.pos, args.bits, args.guard)
}

fn build_plan(args: &ComputeArgs, request: &ExtractionRequest) -> Result<PartitionPlan, Error> {
    let job_terms = args
        .terms_per_thread
        .saturating_mul(THREADS_PER_TASK as u64)
        .saturating_mul(TASKS_PER_JOB as u64)
        .max(1);
    PartitionPlan::new(
        request,
        PlanSizing::TermsPerJob(job_terms),
        TASKS_PER_JOB,
        THREADS_PER_TASK,
    )
}

fn engine_config(map_slots: usize, reduce_slots: usize, jobs: usize, seed: Option<u64>) -> EngineConfig {
    EngineConfig {
        map_slots,
        reduce_slots,
        submit_threshold: 1,
        concurrent_jobs: jobs,
        load_seed: seed,
    }
}

#[derive(Serialize)]
struct JsonResult<'a> {
    position: u64,
    bits: u32,
    hex: &'a str,
    elapsed: f64,
    cpu_seconds: f64,
}

fn print_outcome(outcome: &RunOutcome, json: bool) {
    if json {
        let payload = JsonResult {
            position: outcome.result.start_position,
            bits: outcome.result.reported_bits,
            hex: &outcome.result.hex,
            elapsed: outcome.stats.elapsed.as_secs_f64(),
            cpu_seconds: outcome.stats.cpu_time.as_secs_f64(),
        };
        println!("{}", serde_json::to_string(&payload).expect("flat struct"));
    } else {
        println!("position: {}", thousands(outcome.result.start_position));
        println!("bits: {}", outcome.result.reported_bits);
        println!("hex: {}", outcome.result.hex);
        println!("time used: {:.2} s", outcome.stats.elapsed.as_secs_f64());
        println!("cpu time: {:.2} s", outcome.stats.cpu_time.as_secs_f64());
    }
}

fn cmd_compute(args: ComputeArgs) -> Result<u8, Error> {
    let request = build_request(&args)?;
    let plan = build_plan(&args, &request)?;
    let config = engine_config(args.map_slots, args.reduce_slots, args.jobs, args.seed);
    let store = open_store(&args.ckpt_dir)?;
    let control = interruptible_control();
    let outcome = engine::run(&request, &plan, &store.store, &config, &control)?;
    print_outcome(&outcome, args.json);
    Ok(0)
}

fn cmd_verify(args: ComputeArgs) -> Result<u8, Error> {
    if args.pos < 5 {
        return Err(Error::InvalidRequest(
            "verify needs --pos >= 5 (the second run starts 4 bits earlier)".into(),
        ));
    }
    let control = interruptible_control();
    let config = engine_config(args.map_slots, args.reduce_slots, args.jobs, args.seed);

    let run_at = |pos: u64, suffix: &str| -> Result<RunOutcome, Error> {
        let mut sub = args.clone();
        sub.pos = pos;
        sub.ckpt_dir = args.ckpt_dir.as_ref().map(|d| d.join(suffix));
        let request = build_request(&sub)?;
        let plan = build_plan(&sub, &request)?;
        let store = open_store(&sub.ckpt_dir)?;
        engine::run(&request, &plan, &store.store, &config, &control)
    };

    let outcome_a = run_at(args.pos, "run-a")?;
    let mut outcome_b = run_at(args.pos - 4, "run-b")?;

    // fault-injection hook for the test suite: flip one reported bit of
    // the second run before intersecting
    if let Ok(bit) = std::env::var("PIBITS_TEST_FLIP_BIT") {
        let bit: u32 = bit
            .parse()
            .map_err(|_| Error::InvalidRequest("bad PIBITS_TEST_FLIP_BIT".into()))?;
        outcome_b.result = flip_fraction_bit(&outcome_b.result, bit)?;
    }

    let report = overlap_check(&outcome_a.result, &outcome_b.result)?;
    if args.json {
        #[derive(Serialize)]
        struct JsonVerify<'a> {
            position: u64,
            verified_bits: u32,
            hex: &'a str,
            first_disagreement: Option<u64>,
            elapsed: f64,
            cpu_seconds: f64,
        }
        let payload = JsonVerify {
            position: report.overlap_start,
            verified_bits: report.verified_bits,
            hex: &report.verified_hex,
            first_disagreement: report.first_disagreement,
            elapsed: (outcome_a.stats.elapsed + outcome_b.stats.elapsed).as_secs_f64(),
            cpu_seconds: (outcome_a.stats.cpu_time + outcome_b.stats.cpu_time).as_secs_f64(),
        };
        println!("{}", serde_json::to_string(&payload).expect("flat struct"));
    } else {
        println!("{report}");
        println!(
            "time used: {:.2} s",
            (outcome_a.stats.elapsed + outcome_b.stats.elapsed).as_secs_f64()
        );
        println!(
            "cpu time: {:.2} s",
            (outcome_a.stats.cpu_time + outcome_b.stats.cpu_time).as_secs_f64()
        );
    }
    Ok(if report.agrees() { 0 } else { EXIT_DISAGREEMENT })
}

fn flip_fraction_bit(result: &ExtractionResult, bit: u32) -> Result<ExtractionResult, Error> {
    let mut limbs = result.fraction.limbs().to_vec();
    let index = (bit.max(1) - 1) as usize;
    limbs[index / 64] ^= 1 << (63 - index % 64);
    ExtractionResult::new(
        FixedFraction::from_limbs(limbs)?,
        result.start_position,
        result.reported_bits,
    )
}

fn cmd_estimate(args: EstimateArgs) -> Result<u8, Error> {
    let formula = Formula::by_name(&args.formula)?;
    if args.pos == 0 {
        return Err(Error::InvalidRequest("positions are 1-based".into()));
    }
    let n = args.pos - 1;
    let terms = term_count(&formula, n, args.precision);
    let model = ErrorModel::new(terms, args.precision)?;
    let bounds: Vec<i32> = (args.bound - 3..=args.bound + 3).collect();

    // optional seeded simulation at a scaled-down term count
    let simulated = args.trials.map(|trials| {
        let scaled = ErrorModel::new(model.term_count().min(10_000), args.precision)
            .expect("at least one term");
        let sim = monte_carlo_error(&scaled, trials, 1);
        (scaled, sim)
    });

    if args.json {
        #[derive(Serialize)]
        struct Row {
            bound: i32,
            probability: f64,
        }
        #[derive(Serialize)]
        struct JsonEstimate {
            position: u64,
            formula: String,
            terms: u64,
            precision: u32,
            sigma: f64,
            confidence: Vec<Row>,
        }
        let payload = JsonEstimate {
            position: args.pos,
            formula: args.formula.clone(),
            terms,
            precision: args.precision,
            sigma: model.sigma(),
            confidence: bounds
                .iter()
                .map(|&b| Row {
                    bound: b,
                    probability: model.confidence(b),
                })
                .collect(),
        };
        println!("{}", serde_json::to_string(&payload).expect("flat struct"));
    } else {
        println!("position: {}", thousands(args.pos));
        println!("formula: {}", args.formula);
        println!("terms: {}", thousands(terms));
        println!("precision: {} bits", args.precision);
        println!("sigma: {:.4e}", model.sigma());
        for &b in &bounds {
            println!("P(|E| < 2^-{b}) = {:.4}%", 100.0 * model.confidence(b));
        }
        if let Some((scaled, sim)) = &simulated {
            println!(
                "simulation at m={} (analytic vs {} trials):",
                thousands(scaled.term_count()),
                thousands(sim.trials)
            );
            for &b in &bounds {
                // simulated comparison only makes sense at the scaled m
                let shift = (model.sigma() / scaled.sigma()).log2();
                let b_scaled = b + shift.round() as i32;
                println!(
                    "P(|E| < 2^-{b_scaled}) = {:.4}% analytic, {:.4}% simulated",
                    100.0 * scaled.confidence(b_scaled),
                    100.0 * sim.empirical_probability(b_scaled)
                );
            }
        }
    }
    Ok(0)
}

fn cmd_resume(args: ResumeArgs) -> Result<u8, Error> {
    if !args.ckpt_dir.is_dir() {
        return Err(Error::InvalidRequest(format!(
            "checkpoint directory {} does not exist",
            args.ckpt_dir.display()
        )));
    }
    let store = CheckpointStore::create_or_open(&args.ckpt_dir)?;
    let meta = store.read_meta()?.ok_or_else(|| {
        Error::InvalidRequest(format!(
            "{} has no run.meta; nothing to resume",
            args.ckpt_dir.display()
        ))
    })?;

    // rebuild the request and plan from the stored header; explicit flags
    // must agree with it
    let formula = Formula::by_name(&meta.formula)?;
    let request = ExtractionRequest {
        start_position: meta.n + 1,
        precision_bits: meta.precision_bits,
        guard_bits: meta.guard_bits,
        formula,
    };
    if let Some(pos) = args.pos {
        if pos != request.start_position {
            return Err(Error::MetaMismatch {
                field: "pos",
                stored: request.start_position.to_string(),
                requested: pos.to_string(),
            });
        }
    }
    if let Some(bits) = args.bits {
        if bits != request.reported_bits() {
            return Err(Error::MetaMismatch {
                field: "bits",
                stored: request.reported_bits().to_string(),
                requested: bits.to_string(),
            });
        }
    }
    if let Some(ref name) = args.formula {
        if *name != meta.formula {
            return Err(Error::MetaMismatch {
                field: "formula",
                stored: meta.formula.clone(),
                requested: name.clone(),
            });
        }
    }
    let plan = PartitionPlan::new(
        &request,
        PlanSizing::parse(&meta.plan)?,
        meta.tasks_per_job,
        meta.threads_per_task,
    )?;
    let config = engine_config(args.map_slots, args.reduce_slots, args.jobs, args.seed);
    let control = interruptible_control();
    let outcome = engine::resume(&request, &plan, &store, &config, &control)?;
    print_outcome(&outcome, args.json);
    Ok(0)
}
