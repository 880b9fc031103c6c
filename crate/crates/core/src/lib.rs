pub mod analytics;
pub mod evaluation;
pub mod ingest;
pub mod interventions;
pub mod par;
pub mod student;
pub mod synthetic;
pub mod taxonomy;
pub mod teacher;
