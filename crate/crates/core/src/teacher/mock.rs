//! In-process teachers for tests and offline runs.

use std::sync::atomic::{AtomicUsize, Ordering};

use super::{Teacher, TeacherError};

/// Teacher backed by a closure over the prompt.
pub struct FnTeacher<F> {
    name: String,
    f: F,
    calls: AtomicUsize,
}

impl<F> FnTeacher<F>
where
    F: Fn(&str) -> Result<String, TeacherError> + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnTeacher { name: name.into(), f, calls: AtomicUsize::new(0) }
    }

    /// Number of `complete` calls so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<F> Teacher for FnTeacher<F>
where
    F: Fn(&str) -> Result<String, TeacherError> + Send + Sync,
{
    fn model_name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &str) -> Result<String, TeacherError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.f)(prompt)
    }
}
