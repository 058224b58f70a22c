use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Capabilities, CellKey, OcrBackend, Recognition};
use crate::error::{Error, Result};
use crate::imagecore::{encode_png, GrayImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteOcrConfig {
    pub endpoint: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_base_secs: f64,
    pub rate_limit_per_sec: f64,
}

impl Default for RemoteOcrConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8080".into(),
            timeout_secs: 30.0,
            max_retries: 3,
            backoff_base_secs: 0.5,
            rate_limit_per_sec: 5.0,
        }
    }
}

impl RemoteOcrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate_limit_per_sec > 0.0 && self.rate_limit_per_sec.is_finite()) {
            return Err(Error::Parameter(format!("rate limit {} must be positive", self.rate_limit_per_sec)));
        }
        if !(self.timeout_secs > 0.0) || !(self.backoff_base_secs >= 0.0) {
            return Err(Error::Parameter("timeout must be positive and backoff non-negative".into()));
        }
        if self.endpoint.is_empty() {
            return Err(Error::Parameter("endpoint is empty".into()));
        }
        Ok(())
    }
}

/// Start times are handed out at fixed spacing; shared by every client of
/// the same endpoint in the process.
struct RateLimiter {
    next_slot: Option<Instant>,
}

fn limiter_for(endpoint: &str) -> Arc<Mutex<RateLimiter>> {
    static REGISTRY: OnceLock<Mutex<HashMap<String, Arc<Mutex<RateLimiter>>>>> = OnceLock::new();
    let mut map = REGISTRY.get_or_init(Default::default).lock().expect("rate limiter registry poisoned");
    map.entry(endpoint.to_string()).or_insert_with(|| Arc::new(Mutex::new(RateLimiter { next_slot: None }))).clone()
}

fn acquire(limiter: &Mutex<RateLimiter>, per_sec: f64) {
    let slot = {
        let mut l = limiter.lock().expect("rate limiter poisoned");
        let now = Instant::now();
        let slot = l.next_slot.map_or(now, |n| n.max(now));
        l.next_slot = Some(slot + Duration::from_secs_f64(1.0 / per_sec));
        slot
    };
    let now = Instant::now();
    if slot > now {
        std::thread::sleep(slot - now);
    }
}

#[derive(Serialize)]
struct RecognizeRequest<'a> {
    image_png_base64: &'a str,
    hint: &'a str,
}

#[derive(Deserialize)]
struct RecognizeResponse {
    text: String,
    confidence: f64,
}

/// HTTP client for an external recognition service.
pub struct RemoteOcrBackend {
    config: RemoteOcrConfig,
    agent: ureq::Agent,
    limiter: Arc<Mutex<RateLimiter>>,
}

impl RemoteOcrBackend {
    pub fn new(config: RemoteOcrConfig) -> Result<Self> {
        config.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let limiter = limiter_for(&config.endpoint);
        Ok(Self { config, agent, limiter })
    }

    fn url(&self) -> String {
        format!("{}/recognize", self.config.endpoint.trim_end_matches('/'))
    }

    /// One request; `Ok(Err(_))` is a retryable failure.
    fn try_once(&self, body: &str) -> Result<std::result::Result<RecognizeResponse, String>> {
        acquire(&self.limiter, self.config.rate_limit_per_sec);
        let resp = self.agent.post(&self.url()).header("content-type", "application/json").send(body);
        let mut resp = match resp {
            Ok(r) => r,
            Err(e) => return Ok(Err(e.to_string())),
        };
        let status = resp.status().as_u16();
        if status != 200 {
            return Ok(Err(format!("HTTP {status}")));
        }
        let text = resp.body_mut().read_to_string().map_err(|e| Error::Protocol(e.to_string()))?;
        let parsed: RecognizeResponse =
            serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("{e}: {text:.200}")))?;
        if !(0.0..=1.0).contains(&parsed.confidence) {
            return Err(Error::Protocol(format!("confidence {} outside [0, 1]", parsed.confidence)));
        }
        Ok(Ok(parsed))
    }
}

impl OcrBackend for RemoteOcrBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { recognize_cell: true, word_boxes: false, concurrent: true }
    }

    fn recognize_cell(&self, key: &CellKey, cell: &GrayImage) -> Result<Recognition> {
        let png = base64::engine::general_purpose::STANDARD.encode(encode_png(cell)?);
        let body = serde_json::to_string(&RecognizeRequest { image_png_base64: &png, hint: "digits" })?;
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let wait = self.config.backoff_base_secs * 2f64.powi(attempt as i32 - 1);
                log::debug!("retrying {} in {wait:.2}s after {last}", key.cell_id());
                std::thread::sleep(Duration::from_secs_f64(wait));
            }
            match self.try_once(&body)? {
                Ok(r) => return Ok(Recognition { text: r.text, confidence: r.confidence, attempts: attempt + 1 }),
                Err(why) => last = why,
            }
        }
        Err(Error::BackendUnavailable { attempts: self.config.max_retries + 1, reason: last })
    }
}
