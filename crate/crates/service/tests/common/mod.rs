#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde_json::Value;

use concern_core::student::Classifier;
use concern_service::classify::Models;
use concern_service::{router, AppState, Store};

pub struct Server {
    pub base: String,
    pub client: reqwest::Client,
    pub state: AppState,
    pub dir: PathBuf,
    _tmp: Option<tempfile::TempDir>,
}

pub fn models(ml: impl Classifier + 'static) -> Models {
    Models { relevance: None, multilabel: Some(Arc::new(ml)) }
}

pub async fn start(models: Models) -> Server {
    let tmp = tempfile::tempdir().unwrap();
    let mut s = start_in(tmp.path(), models).await;
    s._tmp = Some(tmp);
    s
}

pub async fn start_in(dir: &Path, models: Models) -> Server {
    let store = Store::open(dir).unwrap();
    let t = concern_core::taxonomy::Taxonomy::default_vaccine();
    let state = AppState::builder(store, t).models(models).workers(2).build().unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(state.clone());
    tokio::spawn(async move { axum::serve(listener, app).await });
    Server {
        base: format!("http://{addr}"),
        client: reqwest::Client::new(),
        state,
        dir: dir.to_path_buf(),
        _tmp: None,
    }
}

impl Server {
    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let r = self.client.get(self.url(path)).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap())
    }

    pub async fn get_text(&self, path: &str) -> (u16, String) {
        let r = self.client.get(self.url(path)).send().await.unwrap();
        (r.status().as_u16(), r.text().await.unwrap())
    }

    pub async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let r = self.client.post(self.url(path)).json(&body).send().await.unwrap();
        let status = r.status().as_u16();
        (status, r.json().await.unwrap())
    }

    /// Polls a job until it is done or failed.
    pub async fn wait_job(&self, job_id: &str) -> Value {
        for _ in 0..1000 {
            let (status, job) = self.get(&format!("/api/jobs/{job_id}")).await;
            assert_eq!(status, 200, "{job}");
            if job["state"] == "done" || job["state"] == "failed" {
                return job;
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        panic!("job {job_id} did not finish");
    }

    /// Submits text and returns the finished job.
    pub async fn upload_text(&self, body: Value) -> Value {
        let (status, accepted) = self.post("/api/upload/text", body).await;
        assert_eq!(status, 202, "{accepted}");
        self.wait_job(accepted["job_id"].as_str().unwrap()).await
    }
}

fn fixture_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Compares `actual` with a recorded fixture. `UPDATE_FIXTURES=1` rewrites it.
pub fn assert_fixture(name: &str, actual: &Value) {
    let path = fixture_path(name);
    let rendered = serde_json::to_string_pretty(actual).unwrap() + "\n";
    if std::env::var_os("UPDATE_FIXTURES").is_some() {
        std::fs::write(&path, &rendered).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("fixture {}: {e}", path.display()));
    let expected: Value = serde_json::from_str(&expected).unwrap();
    assert_eq!(actual, &expected, "response differs from fixture {name}");
}

/// Replaces volatile fields (job ids, timestamps) before fixture comparison.
pub fn scrub(mut v: Value, keys: &[&str]) -> Value {
    fn walk(v: &mut Value, keys: &[&str]) {
        match v {
            Value::Object(m) => {
                for (k, x) in m.iter_mut() {
                    if keys.contains(&k.as_str()) {
                        *x = Value::String("<scrubbed>".into());
                    } else {
                        walk(x, keys);
                    }
                }
            }
            Value::Array(a) => a.iter_mut().for_each(|x| walk(x, keys)),
            _ => {}
        }
    }
    walk(&mut v, keys);
    v
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_concerns")
}
