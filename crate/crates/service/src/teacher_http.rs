//! Teacher backed by an OpenAI-compatible chat-completions endpoint.

use serde::{Deserialize, Serialize};

use concern_core::teacher::{Teacher, TeacherConfig, TeacherError};

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [Message<'a>; 1],
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Blocking client; build it outside any async executor thread.
pub struct HttpTeacher {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    temperature: Option<f64>,
}

impl HttpTeacher {
    pub fn new(cfg: &TeacherConfig) -> Result<Self, TeacherError> {
        cfg.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| TeacherError::Config(e.to_string()))?;
        Ok(HttpTeacher {
            client,
            endpoint: cfg.endpoint.clone(),
            model: cfg.model_name.clone(),
            api_key: cfg.api_key.clone(),
            temperature: cfg.temperature,
        })
    }
}

impl Teacher for HttpTeacher {
    fn model_name(&self) -> &str {
        &self.model
    }

    fn complete(&self, prompt: &str) -> Result<String, TeacherError> {
        let body = ChatRequest {
            model: &self.model,
            messages: [Message { role: "user", content: prompt }],
            temperature: self.temperature,
        };
        let mut req = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_connect() || e.is_timeout() {
                TeacherError::Unreachable(e.to_string())
            } else {
                TeacherError::Request(e.to_string())
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(TeacherError::Request(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>())));
        }
        let parsed: ChatResponse = resp.json().map_err(|e| TeacherError::Request(format!("bad response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| TeacherError::Request("response has no message content".into()))
    }
}
