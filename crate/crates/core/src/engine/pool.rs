//! A fixed pool of worker threads executing slice computations. Workers
//! share nothing mutable: each item carries its slice, results flow back
//! over a completion channel, and the controller does all bookkeeping.

use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, Sender};

use crate::engine::slice::{compute, ComputationSlice, RunParams};
use crate::error::Error;
use crate::fixedpoint::FixedFraction;

pub(crate) enum WorkItem {
    /// One task part of a job: evaluated at thread granularity inside the
    /// worker (the thread slices are summed sequentially there).
    Task {
        job_index: usize,
        slice: ComputationSlice,
    },
    /// The single partitioning step of a reduce-side job.
    PartitionJob {
        job_index: usize,
        slice: ComputationSlice,
        parts: usize,
    },
}

pub(crate) enum Completion {
    Task {
        job_index: usize,
        sum: FixedFraction,
        cpu: Duration,
    },
    Partitioned {
        job_index: usize,
        tasks: Vec<ComputationSlice>,
        cpu: Duration,
    },
    Failed { error: Error },
}

pub(crate) struct WorkerPool {
    work_tx: Option<Sender<WorkItem>>,
    completion_rx: Receiver<Completion>,
    handles: Vec<JoinHandle<()>>,
}

impl WorkerPool {
    pub fn spawn(params: Arc<RunParams>, threads_per_task: usize, workers: usize) -> Self {
        let (work_tx, work_rx) = unbounded::<WorkItem>();
        let (completion_tx, completion_rx) = unbounded::<Completion>();
        let handles = (0..workers.max(1))
            .map(|i| {
                let work_rx = work_rx.clone();
                let completion_tx = completion_tx.clone();
                let params = Arc::clone(&params);
                std::thread::Builder::new()
                    .name(format!("worker-{i}"))
                    .spawn(move || worker_loop(&params, threads_per_task, &work_rx, &completion_tx))
                    .expect("spawn worker thread")
            })
            .collect();
        WorkerPool {
            work_tx: Some(work_tx),
            completion_rx,
            handles,
        }
    }

    pub fn submit(&self, item: WorkItem) {
        self.work_tx
            .as_ref()
            .expect("pool is live")
            .send(item)
            .expect("workers alive while pool is live");
    }

    pub fn completions(&self) -> &Receiver<Completion> {
        &self.completion_rx
    }
}

impl Drop for WorkerPool {
    fn drop(&mut self) {
        // closing the channel stops the workers after their current item
        self.work_tx.take();
        for h in self.handles.drain(..) {
            let _ = h.join();
        }
    }
}

fn worker_loop(
    params: &RunParams,
    threads_per_task: usize,
    work_rx: &Receiver<WorkItem>,
    completion_tx: &Sender<Completion>,
) {
    while let Ok(item) = work_rx.recv() {
        let started = Instant::now();
        let completion = match item {
            WorkItem::Task { job_index, slice } => {
                match compute(params, &slice, 1, threads_per_task) {
                    Ok(sum) => Completion::Task {
                        job_index,
                        sum,
                        cpu: started.elapsed(),
                    },
                    Err(error) => Completion::Failed { error },
                }
            }
            WorkItem::PartitionJob {
                job_index,
                slice,
                parts,
            } => match slice.partition(parts) {
                Ok(tasks) => Completion::Partitioned {
                    job_index,
                    tasks,
                    cpu: started.elapsed(),
                },
                Err(error) => Completion::Failed { error },
            },
        };
        if completion_tx.send(completion).is_err() {
            return; // controller went away
        }
    }
}
