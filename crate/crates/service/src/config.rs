//! Service configuration: a TOML file, then environment overrides.

use std::collections::HashMap;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use concern_core::teacher::TeacherConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid value for {var}: `{value}`")]
    Env { var: &'static str, value: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: IpAddr,
    pub port: u16,
    pub data_dir: PathBuf,
    /// Concurrent background jobs.
    pub workers: usize,
    /// Keyword-cloud size in summaries.
    pub cloud_size: usize,
    /// Optional intervention store (JSONL); the bundled example otherwise.
    pub interventions: Option<PathBuf>,
    pub teacher: TeacherConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: 8080,
            data_dir: PathBuf::from("data"),
            workers: 2,
            cloud_size: concern_core::analytics::DEFAULT_CLOUD_SIZE,
            interventions: None,
            teacher: TeacherConfig::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(source: &str) -> Result<Self, ConfigError> {
        toml::from_str(source).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Reads `path` if given, then applies overrides from the process
    /// environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let src = std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.into(), source })?;
                Self::from_toml(&src)?
            }
            None => ServiceConfig::default(),
        };
        cfg.apply_env(&std::env::vars().collect())?;
        Ok(cfg)
    }

    /// Recognised variables: `CONCERNS_PORT`, `CONCERNS_BIND`,
    /// `CONCERNS_DATA_DIR`, `CONCERNS_WORKERS`, `CONCERNS_TEACHER_ENDPOINT`,
    /// `CONCERNS_TEACHER_MODEL`, `CONCERNS_TEACHER_API_KEY` (falls back to
    /// `OPENAI_API_KEY`).
    pub fn apply_env(&mut self, env: &HashMap<String, String>) -> Result<(), ConfigError> {
        fn parsed<T: std::str::FromStr>(env: &HashMap<String, String>, var: &'static str) -> Result<Option<T>, ConfigError> {
            env.get(var)
                .map(|v| v.trim().parse().map_err(|_| ConfigError::Env { var, value: v.clone() }))
                .transpose()
        }
        if let Some(p) = parsed(env, "CONCERNS_PORT")? {
            self.port = p;
        }
        if let Some(b) = parsed(env, "CONCERNS_BIND")? {
            self.bind = b;
        }
        if let Some(w) = parsed::<usize>(env, "CONCERNS_WORKERS")? {
            if w == 0 {
                return Err(ConfigError::Env { var: "CONCERNS_WORKERS", value: "0".into() });
            }
            self.workers = w;
        }
        if let Some(d) = env.get("CONCERNS_DATA_DIR") {
            self.data_dir = PathBuf::from(d);
        }
        if let Some(e) = env.get("CONCERNS_TEACHER_ENDPOINT") {
            self.teacher.endpoint = e.clone();
        }
        if let Some(m) = env.get("CONCERNS_TEACHER_MODEL") {
            self.teacher.model_name = m.clone();
        }
        if let Some(k) = env.get("CONCERNS_TEACHER_API_KEY").or_else(|| env.get("OPENAI_API_KEY")) {
            self.teacher.api_key = Some(k.clone());
        }
        Ok(())
    }

    pub fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.bind, self.port)
    }
}
