//! Published sketches and training jobs.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use deepsketch::mscn::EpochRecord;
use deepsketch::sketch::{DeepSketch, Phase, ProgressEvent, ProgressSink};
use serde::Serialize;
use tokio::sync::watch;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JobSnapshot {
    pub id: u64,
    pub name: String,
    pub phase: Phase,
    pub fraction: f64,
    /// Last completed epoch.
    pub epoch: Option<usize>,
    pub epochs: Vec<EpochRecord>,
    pub error: Option<String>,
}

fn rank(phase: Phase) -> u8 {
    match phase {
        Phase::Queued => 0,
        Phase::Generating => 1,
        Phase::Labeling => 2,
        Phase::Training => 3,
        Phase::Done | Phase::Failed | Phase::Cancelled => 4,
    }
}

pub struct Job {
    pub id: u64,
    pub name: String,
    cancel: AtomicBool,
    state: watch::Sender<JobSnapshot>,
}

impl Job {
    fn new(id: u64, name: String) -> Self {
        let snapshot = JobSnapshot {
            id,
            name: name.clone(),
            phase: Phase::Queued,
            fraction: 0.0,
            epoch: None,
            epochs: Vec::new(),
            error: None,
        };
        Job {
            id,
            name,
            cancel: AtomicBool::new(false),
            state: watch::Sender::new(snapshot),
        }
    }

    pub fn snapshot(&self) -> JobSnapshot {
        self.state.borrow().clone()
    }

    pub fn subscribe(&self) -> watch::Receiver<JobSnapshot> {
        self.state.subscribe()
    }

    pub fn phase(&self) -> Phase {
        self.state.borrow().phase
    }

    /// Requests cooperative cancellation. A job still waiting for a worker
    /// slot is cancelled on the spot.
    pub fn cancel(&self) {
        self.cancel.store(true, Ordering::SeqCst);
        self.state.send_if_modified(|s| {
            if s.phase == Phase::Queued {
                s.phase = Phase::Cancelled;
                true
            } else {
                false
            }
        });
    }

    pub fn is_cancel_requested(&self) -> bool {
        self.cancel.load(Ordering::SeqCst)
    }

    /// Applies a progress event unless it would move the job backwards.
    /// `Done` is left to [`Registry::publish`].
    pub fn advance(&self, event: ProgressEvent) {
        if event.phase.is_terminal() {
            return;
        }
        self.state.send_if_modified(|s| {
            if s.phase.is_terminal() || rank(event.phase) < rank(s.phase) {
                return false;
            }
            if event.phase == s.phase {
                s.fraction = s.fraction.max(event.fraction);
            } else {
                s.phase = event.phase;
                s.fraction = event.fraction;
            }
            if let Some(record) = event.epoch {
                s.epoch = Some(record.epoch);
                s.epochs.push(record);
            }
            true
        });
    }

    /// Moves a running job to a terminal phase. No effect once terminal.
    pub fn finish(&self, phase: Phase, error: Option<String>) {
        debug_assert!(phase.is_terminal());
        self.state.send_if_modified(|s| {
            if s.phase.is_terminal() {
                return false;
            }
            s.phase = phase;
            if phase == Phase::Done {
                s.fraction = 1.0;
            }
            s.error = error;
            true
        });
    }
}

impl ProgressSink for Job {
    fn report(&self, event: ProgressEvent) {
        self.advance(event);
    }

    fn cancelled(&self) -> bool {
        self.is_cancel_requested()
    }
}

#[derive(Debug, PartialEq, Eq)]
pub enum Reservation {
    NameTaken,
}

#[derive(Default)]
struct Inner {
    sketches: BTreeMap<String, Arc<DeepSketch>>,
    jobs: BTreeMap<u64, Arc<Job>>,
}

/// Sketch and job tables behind one lock, so a sketch becomes visible in
/// the same step its job turns `done`.
#[derive(Default)]
pub struct Registry {
    inner: RwLock<Inner>,
    next_id: AtomicU64,
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    pub fn sketches(&self) -> Vec<(String, Arc<DeepSketch>)> {
        let inner = self.inner.read().expect("registry lock");
        inner.sketches.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }

    pub fn sketch(&self, name: &str) -> Option<Arc<DeepSketch>> {
        self.inner.read().expect("registry lock").sketches.get(name).cloned()
    }

    /// Adds a sketch outside any job, e.g. one loaded from disk.
    pub fn insert(&self, name: &str, sketch: DeepSketch) -> Result<(), Reservation> {
        let mut inner = self.inner.write().expect("registry lock");
        if name_in_use(&inner, name) {
            return Err(Reservation::NameTaken);
        }
        inner.sketches.insert(name.to_string(), Arc::new(sketch));
        Ok(())
    }

    pub fn remove(&self, name: &str) -> Option<Arc<DeepSketch>> {
        self.inner.write().expect("registry lock").sketches.remove(name)
    }

    /// Creates a queued job, reserving `name` against other sketches and
    /// unfinished jobs.
    pub fn start_job(&self, name: &str) -> Result<Arc<Job>, Reservation> {
        let mut inner = self.inner.write().expect("registry lock");
        if name_in_use(&inner, name) {
            return Err(Reservation::NameTaken);
        }
        let id = self.next_id.fetch_add(1, Ordering::SeqCst) + 1;
        let job = Arc::new(Job::new(id, name.to_string()));
        inner.jobs.insert(id, job.clone());
        Ok(job)
    }

    pub fn job(&self, id: u64) -> Option<Arc<Job>> {
        self.inner.read().expect("registry lock").jobs.get(&id).cloned()
    }

    pub fn jobs(&self) -> Vec<Arc<Job>> {
        self.inner
            .read()
            .expect("registry lock")
            .jobs
            .values()
            .cloned()
            .collect()
    }

    /// Publishes the job's sketch and marks it done, unless it was
    /// cancelled meanwhile. Returns whether the sketch was published.
    pub fn publish(&self, job: &Job, sketch: DeepSketch) -> bool {
        let mut inner = self.inner.write().expect("registry lock");
        if job.is_cancel_requested() || job.phase().is_terminal() {
            job.finish(Phase::Cancelled, None);
            return false;
        }
        inner.sketches.insert(job.name.clone(), Arc::new(sketch));
        job.finish(Phase::Done, None);
        true
    }
}

fn name_in_use(inner: &Inner, name: &str) -> bool {
    inner.sketches.contains_key(name) || inner.jobs.values().any(|j| j.name == name && !j.phase().is_terminal())
}

#[cfg(test)]
mod tests {
    use super::*;
    use deepsketch::mscn::EpochRecord;

    fn event(phase: Phase, fraction: f64) -> ProgressEvent {
        ProgressEvent {
            phase,
            fraction,
            epoch: None,
        }
    }

    #[test]
    fn names_are_unique_across_jobs_and_sketches() {
        let reg = Registry::new();
        let job = reg.start_job("s").unwrap();
        assert_eq!(reg.start_job("s").err(), Some(Reservation::NameTaken));
        job.finish(Phase::Failed, Some("boom".into()));
        let again = reg.start_job("s").unwrap();
        assert_ne!(again.id, job.id);
    }

    #[test]
    fn progress_never_moves_backwards() {
        let job = Job::new(1, "j".into());
        job.advance(event(Phase::Labeling, 0.5));
        job.advance(event(Phase::Labeling, 0.2));
        assert_eq!(job.snapshot().fraction, 0.5);
        job.advance(event(Phase::Generating, 0.9));
        assert_eq!(job.phase(), Phase::Labeling);
        job.advance(ProgressEvent {
            phase: Phase::Training,
            fraction: 0.1,
            epoch: Some(EpochRecord {
                epoch: 1,
                train_qerror: 2.0,
                validation_qerror: Some(3.0),
                wall_ms: 5,
            }),
        });
        let s = job.snapshot();
        assert_eq!((s.phase, s.epoch, s.epochs.len()), (Phase::Training, Some(1), 1));
        job.advance(event(Phase::Done, 1.0));
        assert_eq!(job.phase(), Phase::Training);
        job.finish(Phase::Failed, None);
        job.advance(event(Phase::Training, 1.0));
        job.finish(Phase::Done, None);
        assert_eq!(job.phase(), Phase::Failed);
    }

    #[test]
    fn cancelling_a_queued_job_is_immediate() {
        let job = Job::new(1, "j".into());
        job.cancel();
        assert_eq!(job.phase(), Phase::Cancelled);
        let running = Job::new(2, "k".into());
        running.advance(event(Phase::Generating, 0.0));
        running.cancel();
        assert_eq!(running.phase(), Phase::Generating);
        assert!(running.cancelled());
    }

    fn phase_of(i: u8) -> Phase {
        [
            Phase::Queued,
            Phase::Generating,
            Phase::Labeling,
            Phase::Training,
            Phase::Done,
            Phase::Failed,
            Phase::Cancelled,
        ][i as usize % 7]
    }

    proptest::proptest! {
        // Interleaved writers feeding arbitrary events: observed snapshots
        // stay monotone.
        #[test]
        fn snapshots_are_monotone(ops in proptest::collection::vec((0u8..9, 0.0f64..=1.0), 1..60)) {
            let job = Arc::new(Job::new(1, "j".into()));
            let mut rx = job.subscribe();
            let writers: Vec<_> = ops
                .chunks(ops.len().div_ceil(3))
                .map(|chunk| {
                    let job = job.clone();
                    let chunk = chunk.to_vec();
                    std::thread::spawn(move || {
                        for (code, f) in chunk {
                            match code {
                                7 => job.cancel(),
                                8 => job.finish(phase_of(4 + (f * 3.0) as u8 % 3), None),
                                c => job.advance(event(phase_of(c), f)),
                            }
                        }
                    })
                })
                .collect();
            let mut last = rx.borrow_and_update().clone();
            let mut check = |s: &JobSnapshot| {
                proptest::prop_assert!(rank(s.phase) >= rank(last.phase));
                if s.phase == last.phase && !s.phase.is_terminal() {
                    proptest::prop_assert!(s.fraction >= last.fraction);
                }
                if last.phase.is_terminal() {
                    proptest::prop_assert_eq!(s.phase, last.phase);
                }
                last = s.clone();
                Ok(())
            };
            while writers.iter().any(|w| !w.is_finished()) {
                let s = rx.borrow_and_update().clone();
                check(&s)?;
            }
            for w in writers {
                w.join().unwrap();
            }
            let s = job.snapshot();
            check(&s)?;
        }
    }
}
