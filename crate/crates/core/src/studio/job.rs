use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

/// Pipeline stages in execution order; a job only ever moves forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Embedding,
    Classifying,
    Fusing,
    Projecting,
    Scoring,
    Done,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JobState::Queued => "queued",
            JobState::Embedding => "embedding",
            JobState::Classifying => "classifying",
            JobState::Fusing => "fusing",
            JobState::Projecting => "projecting",
            JobState::Scoring => "scoring",
            JobState::Done => "done",
            JobState::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectJob {
    pub id: String,
    pub session_id: String,
    pub state: JobState,
    /// Fraction of the pipeline completed, in [0, 1].
    pub progress: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Stage that was running when the job failed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<JobState>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bundle_id: Option<String>,
}

/// Shared, forward-only view of a job's state.
#[derive(Debug, Clone)]
pub struct JobHandle(Arc<Mutex<ProjectJob>>);

impl JobHandle {
    pub fn new(id: impl Into<String>, session_id: impl Into<String>) -> Self {
        JobHandle(Arc::new(Mutex::new(ProjectJob {
            id: id.into(),
            session_id: session_id.into(),
            state: JobState::Queued,
            progress: 0.0,
            error: None,
            failed_stage: None,
            bundle_id: None,
        })))
    }

    /// A handle nobody else observes, for batch runs.
    pub fn detached() -> Self {
        Self::new("local", "local")
    }

    fn with<R>(&self, f: impl FnOnce(&mut ProjectJob) -> R) -> R {
        f(&mut self.0.lock().unwrap_or_else(|e| e.into_inner()))
    }

    pub fn snapshot(&self) -> ProjectJob {
        self.with(|j| j.clone())
    }

    pub fn state(&self) -> JobState {
        self.with(|j| j.state)
    }

    /// Moves to `state` if that is forward of the current, non-terminal state.
    /// Returns whether the transition happened.
    pub fn advance(&self, state: JobState) -> bool {
        self.with(|j| {
            if j.state.is_terminal() || state <= j.state || state == JobState::Failed {
                return false;
            }
            j.state = state;
            true
        })
    }

    /// Raises progress; never lowers it.
    pub fn progress(&self, fraction: f64) {
        self.with(|j| {
            if !j.state.is_terminal() {
                j.progress = j.progress.max(fraction.clamp(0.0, 1.0));
            }
        })
    }

    pub fn fail(&self, message: impl Into<String>) {
        self.with(|j| {
            if !j.state.is_terminal() {
                j.failed_stage = Some(j.state);
                j.state = JobState::Failed;
                j.error = Some(message.into());
            }
        })
    }

    pub fn finish(&self, bundle_id: impl Into<String>) {
        self.with(|j| {
            if !j.state.is_terminal() {
                j.state = JobState::Done;
                j.progress = 1.0;
                j.bundle_id = Some(bundle_id.into());
            }
        })
    }
}
