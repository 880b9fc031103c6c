//! Background jobs on a bounded worker pool, persisted on every change.

use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use concern_core::ingest::SkippedRecord;

use crate::store::{Store, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    Ingest,
    Annotate,
    Train,
    Classify,
    Trend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }

    fn can_move_to(self, to: JobState) -> bool {
        matches!(
            (self, to),
            (JobState::Queued, JobState::Running)
                | (JobState::Queued, JobState::Failed)
                | (JobState::Running, JobState::Done)
                | (JobState::Running, JobState::Failed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub kind: JobKind,
    pub state: JobState,
    pub progress: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result_ref: Option<String>,
    #[serde(default)]
    pub document_ids: Vec<String>,
    #[serde(default)]
    pub skipped: Vec<SkippedRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("illegal job transition {from:?} -> {to:?}")]
pub struct TransitionError {
    pub from: JobState,
    pub to: JobState,
}

impl Job {
    pub fn new(kind: JobKind) -> Job {
        let now = Utc::now();
        Job {
            job_id: uuid::Uuid::new_v4().to_string(),
            kind,
            state: JobState::Queued,
            progress: 0.0,
            result_ref: None,
            document_ids: Vec::new(),
            skipped: Vec::new(),
            error: None,
            created_at: now,
            updated_at: now,
        }
    }

    pub fn transition(&mut self, to: JobState) -> Result<(), TransitionError> {
        if !self.state.can_move_to(to) {
            return Err(TransitionError { from: self.state, to });
        }
        self.state = to;
        if to == JobState::Done {
            self.progress = 1.0;
        }
        self.updated_at = Utc::now();
        Ok(())
    }

    /// Progress never goes backwards and stays within [0, 1].
    pub fn advance(&mut self, progress: f64) {
        if progress.is_finite() {
            self.progress = self.progress.max(progress.clamp(0.0, 1.0));
        }
    }
}

/// What a successful job leaves behind.
#[derive(Debug, Clone, Default)]
pub struct JobOutput {
    pub result_ref: Option<String>,
    pub document_ids: Vec<String>,
    pub skipped: Vec<SkippedRecord>,
}

/// Handle given to running work for progress reports.
pub struct JobContext {
    job_id: String,
    runner: Arc<Inner>,
}

impl JobContext {
    pub fn job_id(&self) -> &str {
        &self.job_id
    }

    pub fn progress(&self, fraction: f64) {
        let _ = self.runner.update(&self.job_id, |j| {
            j.advance(fraction);
            Ok(())
        });
    }
}

struct Inner {
    store: Store,
    // Serialises read-modify-write of job files.
    lock: Mutex<()>,
}

impl Inner {
    fn update(&self, id: &str, f: impl FnOnce(&mut Job) -> Result<(), TransitionError>) -> Result<Job, StoreError> {
        let _g = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut job: Job = self.store.load_json("jobs", id)?;
        if let Err(e) = f(&mut job) {
            tracing::warn!("job {id}: {e}");
            return Ok(job);
        }
        self.store.save_json("jobs", id, &job)?;
        Ok(job)
    }
}

#[derive(Clone)]
pub struct JobRunner {
    inner: Arc<Inner>,
    permits: Arc<Semaphore>,
}

impl JobRunner {
    pub fn new(store: Store, workers: usize) -> JobRunner {
        JobRunner {
            inner: Arc::new(Inner { store, lock: Mutex::new(()) }),
            permits: Arc::new(Semaphore::new(workers.max(1))),
        }
    }

    /// Marks jobs left queued or running by a previous process as failed.
    /// Returns how many were affected.
    pub fn recover(&self) -> Result<usize, StoreError> {
        let jobs: Vec<Job> = self.inner.store.load_all("jobs")?;
        let mut n = 0;
        for j in jobs.into_iter().filter(|j| !j.state.is_terminal()) {
            self.inner.update(&j.job_id, |job| {
                job.transition(JobState::Failed)?;
                job.error = Some("interrupted by a service restart; resubmit to run again".into());
                Ok(())
            })?;
            n += 1;
        }
        Ok(n)
    }

    pub fn get(&self, id: &str) -> Result<Job, StoreError> {
        self.inner.store.load_json("jobs", id)
    }

    /// Persists a queued job and schedules `work` on the blocking pool once
    /// a worker slot is free. Must be called inside a tokio runtime.
    pub fn submit<F>(&self, kind: JobKind, work: F) -> Result<Job, StoreError>
    where
        F: FnOnce(&JobContext) -> Result<JobOutput, String> + Send + 'static,
    {
        let job = Job::new(kind);
        self.inner.store.save_json("jobs", &job.job_id, &job)?;
        let inner = self.inner.clone();
        let permits = self.permits.clone();
        let id = job.job_id.clone();
        tokio::spawn(async move {
            let Ok(_permit) = permits.acquire_owned().await else { return };
            if let Err(e) = inner.update(&id, |j| j.transition(JobState::Running)) {
                tracing::error!("job {id}: {e}");
                return;
            }
            let ctx = JobContext { job_id: id.clone(), runner: inner.clone() };
            let outcome = tokio::task::spawn_blocking(move || work(&ctx)).await;
            let res = inner.update(&id, |j| {
                match outcome {
                    Ok(Ok(out)) => {
                        j.result_ref = out.result_ref;
                        j.document_ids = out.document_ids;
                        j.skipped = out.skipped;
                        j.transition(JobState::Done)?;
                    }
                    Ok(Err(msg)) => {
                        j.error = Some(msg);
                        j.transition(JobState::Failed)?;
                    }
                    Err(join) => {
                        j.error = Some(format!("job aborted: {join}"));
                        j.transition(JobState::Failed)?;
                    }
                }
                Ok(())
            });
            if let Err(e) = res {
                tracing::error!("job {id}: could not record outcome: {e}");
            }
        });
        Ok(job)
    }
}
