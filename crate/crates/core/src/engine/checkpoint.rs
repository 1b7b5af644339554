//! Durable run state: one directory per run holding a `run.meta` header
//! and one `job-<index>.sum` file per completed job slice. Every write
//! lands under a temporary name, is synced, then renamed, so a torn file
//! can never be mistaken for a complete record.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use crate::error::{Error, Result};
use crate::fixedpoint::FixedFraction;

pub const FORMAT_VERSION: u32 = 1;

/// The run header: everything needed to check that a store belongs to a
/// given request/plan pair and to rebuild the plan on resume.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunMeta {
    pub version: u32,
    pub formula: String,
    pub n: u64,
    pub precision_bits: u32,
    pub guard_bits: u32,
    /// Plan sizing label, e.g. `count:64` or `terms:800000`.
    pub plan: String,
    pub tasks_per_job: usize,
    pub threads_per_task: usize,
    /// Total number of job slices.
    pub jobs: usize,
}

impl RunMeta {
    fn to_text(&self) -> String {
        format!(
            "version={}\nformula={}\nn={}\np={}\nguard={}\nplan={}\ntasks_per_job={}\nthreads_per_task={}\njobs={}\n",
            self.version,
            self.formula,
            self.n,
            self.precision_bits,
            self.guard_bits,
            self.plan,
            self.tasks_per_job,
            self.threads_per_task,
            self.jobs,
        )
    }

    fn parse(text: &str) -> Result<Self> {
        let mut fields = std::collections::HashMap::new();
        for line in text.lines() {
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::MalformedCheckpoint(format!("run.meta line without `=`: `{line}`"))
            })?;
            fields.insert(key.to_string(), value.to_string());
        }
        let get = |key: &str| {
            fields
                .get(key)
                .cloned()
                .ok_or_else(|| Error::MalformedCheckpoint(format!("run.meta missing `{key}`")))
        };
        let num = |key: &str| -> Result<u64> {
            get(key)?
                .parse()
                .map_err(|_| Error::MalformedCheckpoint(format!("run.meta bad number for `{key}`")))
        };
        Ok(RunMeta {
            version: num("version")? as u32,
            formula: get("formula")?,
            n: num("n")?,
            precision_bits: num("p")? as u32,
            guard_bits: num("guard")? as u32,
            plan: get("plan")?,
            tasks_per_job: num("tasks_per_job")? as usize,
            threads_per_task: num("threads_per_task")? as usize,
            jobs: num("jobs")? as usize,
        })
    }

    /// Field-by-field comparison; the first difference is reported so a
    /// store from a different run is refused rather than mixed in.
    pub fn ensure_matches(&self, requested: &RunMeta) -> Result<()> {
        let check = |field: &'static str, stored: String, wanted: String| -> Result<()> {
            if stored != wanted {
                Err(Error::MetaMismatch {
                    field,
                    stored,
                    requested: wanted,
                })
            } else {
                Ok(())
            }
        };
        check("version", self.version.to_string(), requested.version.to_string())?;
        check("formula", self.formula.clone(), requested.formula.clone())?;
        check("n", self.n.to_string(), requested.n.to_string())?;
        check("p", self.precision_bits.to_string(), requested.precision_bits.to_string())?;
        check("guard", self.guard_bits.to_string(), requested.guard_bits.to_string())?;
        check("plan", self.plan.clone(), requested.plan.clone())?;
        check(
            "tasks_per_job",
            self.tasks_per_job.to_string(),
            requested.tasks_per_job.to_string(),
        )?;
        check(
            "threads_per_task",
            self.threads_per_task.to_string(),
            requested.threads_per_task.to_string(),
        )?;
        check("jobs", self.jobs.to_string(), requested.jobs.to_string())
    }
}

/// A persisted partial sum for one completed job slice.
#[derive(Debug, Clone)]
pub struct CheckpointRecord {
    pub slice_id: String,
    pub partial_sum: FixedFraction,
    /// When the record landed (file modification time on read).
    pub timestamp: SystemTime,
}

/// Directory-backed store; the controller is the only writer.
#[derive(Debug)]
pub struct CheckpointStore {
    dir: PathBuf,
}

impl CheckpointStore {
    pub fn create_or_open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(CheckpointStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn meta_path(&self) -> PathBuf {
        self.dir.join("run.meta")
    }

    fn job_path(&self, index: usize) -> PathBuf {
        self.dir.join(format!("job-{index}.sum"))
    }

    fn write_atomic(&self, path: &Path, contents: &str) -> Result<()> {
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        {
            let mut f = File::create(&tmp)?;
            f.write_all(contents.as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read_meta(&self) -> Result<Option<RunMeta>> {
        match fs::read_to_string(self.meta_path()) {
            Ok(text) => Ok(Some(RunMeta::parse(&text)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn write_meta(&self, meta: &RunMeta) -> Result<()> {
        self.write_atomic(&self.meta_path(), &meta.to_text())
    }

    /// Persists a completed job slice. Records exist only for fully
    /// completed slices; partial sums in flight never touch disk.
    pub fn write_job(&self, index: usize, slice_id: &str, sum: &FixedFraction) -> Result<()> {
        let body = format!("slice={slice_id}\nsum={}\n", sum.to_checkpoint_hex());
        self.write_atomic(&self.job_path(index), &body)
    }

    pub fn read_job(&self, index: usize) -> Result<Option<CheckpointRecord>> {
        let path = self.job_path(index);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let mut slice_id = None;
        let mut sum = None;
        for line in text.lines() {
            if let Some(v) = line.strip_prefix("slice=") {
                slice_id = Some(v.to_string());
            } else if let Some(v) = line.strip_prefix("sum=") {
                sum = Some(FixedFraction::from_checkpoint_hex(v)?);
            }
        }
        let (slice_id, partial_sum) = match (slice_id, sum) {
            (Some(s), Some(f)) => (s, f),
            _ => {
                return Err(Error::MalformedCheckpoint(format!(
                    "{} is missing slice or sum",
                    path.display()
                )))
            }
        };
        let timestamp = fs::metadata(&path)
            .and_then(|m| m.modified())
            .unwrap_or(SystemTime::UNIX_EPOCH);
        Ok(Some(CheckpointRecord {
            slice_id,
            partial_sum,
            timestamp,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_meta() -> RunMeta {
        RunMeta {
            version: FORMAT_VERSION,
            formula: "bbp16".into(),
            n: 1_000_000,
            precision_bits: 320,
            guard_bits: 64,
            plan: "count:64".into(),
            tasks_per_job: 4,
            threads_per_task: 2,
            jobs: 256,
        }
    }

    #[test]
    fn meta_roundtrip() {
        let meta = sample_meta();
        let parsed = RunMeta::parse(&meta.to_text()).unwrap();
        assert_eq!(parsed, meta);
        meta.ensure_matches(&parsed).unwrap();
    }

    #[test]
    fn meta_mismatch_is_reported_by_field() {
        let meta = sample_meta();
        let mut other = sample_meta();
        other.n = 42;
        match meta.ensure_matches(&other) {
            Err(Error::MetaMismatch { field: "n", .. }) => {}
            other => panic!("expected n mismatch, got {other:?}"),
        }
    }

    #[test]
    fn job_record_roundtrip() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CheckpointStore::create_or_open(tmp.path()).unwrap();
        assert!(store.read_job(0).unwrap().is_none());

        let sum = FixedFraction::from_limbs(vec![0xdead_beef_cafe_f00d, 42]).unwrap();
        store.write_job(3, "bbp16/n=9/p=128/s=0/k=0..100", &sum).unwrap();
        let rec = store.read_job(3).unwrap().unwrap();
        assert_eq!(rec.slice_id, "bbp16/n=9/p=128/s=0/k=0..100");
        assert_eq!(rec.partial_sum, sum);

        // the file content is the documented two-line format
        let body = std::fs::read_to_string(tmp.path().join("job-3.sum")).unwrap();
        assert_eq!(
            body,
            "slice=bbp16/n=9/p=128/s=0/k=0..100\nsum=p=128:deadbeefcafef00d000000000000002a\n"
        );
    }

    #[test]
    fn torn_record_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CheckpointStore::create_or_open(tmp.path()).unwrap();
        std::fs::write(tmp.path().join("job-0.sum"), "slice=abc\n").unwrap();
        assert!(store.read_job(0).is_err());
    }

    #[test]
    fn no_meta_reads_none() {
        let tmp = tempfile::tempdir().unwrap();
        let store = CheckpointStore::create_or_open(tmp.path()).unwrap();
        assert!(store.read_meta().unwrap().is_none());
        store.write_meta(&sample_meta()).unwrap();
        assert_eq!(store.read_meta().unwrap().unwrap(), sample_meta());
    }
}
