//! Image generator adapters.

use std::io::Cursor;
use std::time::Duration;

use image::{ImageFormat, Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub accepts_seed: bool,
    pub max_concurrency: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationRequest {
    pub prompt: String,
    pub seed: Option<u64>,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedImage {
    pub bytes: Vec<u8>,
    /// File extension without the dot, e.g. `png`.
    pub format: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdapterError {
    /// Worth retrying: timeouts, rate limits, server errors.
    #[error("transient: {0}")]
    Transient(String),
    /// The generator refused this prompt; retrying will not help.
    #[error("rejected: {0}")]
    Rejected(String),
    #[error("failed: {0}")]
    Failed(String),
}

impl AdapterError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, Self::Transient(_))
    }
}

pub trait GeneratorAdapter: Send + Sync {
    fn capabilities(&self) -> Capabilities;
    fn generate(&self, req: &GenerationRequest) -> Result<GeneratedImage, AdapterError>;
}

/// Procedural PNGs keyed by `sha256(prompt)` with per-seed jitter: images of
/// one prompt share a coarse colour layout, different prompts do not.
#[derive(Debug, Clone)]
pub struct StubAdapter {
    pub max_concurrency: usize,
}

impl Default for StubAdapter {
    fn default() -> Self {
        Self { max_concurrency: 4 }
    }
}

const STUB_GRID: u32 = 4;
const STUB_JITTER: i32 = 24;

impl StubAdapter {
    pub fn render(prompt: &str, seed: Option<u64>, width: u32, height: u32) -> RgbImage {
        let layout: [u8; 32] = Sha256::digest(prompt.as_bytes()).into();
        let mut h = Sha256::new();
        h.update(prompt.as_bytes());
        h.update(seed.unwrap_or(0).to_le_bytes());
        let noise: [u8; 32] = h.finalize().into();
        let cell = |x: u32, y: u32| -> Rgb<u8> {
            let gx = (x * STUB_GRID / width.max(1)).min(STUB_GRID - 1);
            let gy = (y * STUB_GRID / height.max(1)).min(STUB_GRID - 1);
            let c = (gy * STUB_GRID + gx) as usize;
            let mut px = [0u8; 3];
            for (ch, p) in px.iter_mut().enumerate() {
                let base = i32::from(layout[(c * 3 + ch) % 32]);
                let jitter = i32::from(noise[(c * 3 + ch) % 32]) * 2 * STUB_JITTER / 255 - STUB_JITTER;
                *p = (base + jitter).clamp(0, 255) as u8;
            }
            Rgb(px)
        };
        RgbImage::from_fn(width, height, cell)
    }
}

impl GeneratorAdapter for StubAdapter {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            accepts_seed: true,
            max_concurrency: self.max_concurrency.max(1),
        }
    }

    fn generate(&self, req: &GenerationRequest) -> Result<GeneratedImage, AdapterError> {
        if req.width == 0 || req.height == 0 {
            return Err(AdapterError::Rejected("zero-sized image".into()));
        }
        let img = Self::render(&req.prompt, req.seed, req.width, req.height);
        let mut bytes = Vec::new();
        img.write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)
            .map_err(|e| AdapterError::Failed(e.to_string()))?;
        Ok(GeneratedImage {
            bytes,
            format: "png".into(),
        })
    }
}

/// `POST <endpoint>` with `{"prompt", "seed"?, "width", "height"}`; the
/// response body is the image and its content type names the format.
pub struct HttpAdapter {
    endpoint: String,
    api_key: Option<String>,
    capabilities: Capabilities,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct HttpRequestBody<'a> {
    prompt: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    width: u32,
    height: u32,
}

impl HttpAdapter {
    pub fn new(
        endpoint: impl Into<String>,
        api_key: Option<String>,
        capabilities: Capabilities,
        timeout: Duration,
    ) -> Result<Self, AdapterError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| AdapterError::Failed(format!("HTTP client: {e}")))?;
        Ok(Self {
            endpoint: endpoint.into(),
            api_key,
            capabilities,
            client,
        })
    }
}

pub fn format_from_content_type(ct: &str) -> Option<&'static str> {
    let mime = ct.split(';').next()?.trim().to_ascii_lowercase();
    match mime.as_str() {
        "image/png" => Some("png"),
        "image/jpeg" | "image/jpg" => Some("jpg"),
        "image/webp" => Some("webp"),
        "image/gif" => Some("gif"),
        _ => None,
    }
}

impl GeneratorAdapter for HttpAdapter {
    fn capabilities(&self) -> Capabilities {
        self.capabilities
    }

    fn generate(&self, req: &GenerationRequest) -> Result<GeneratedImage, AdapterError> {
        let body = HttpRequestBody {
            prompt: &req.prompt,
            seed: if self.capabilities.accepts_seed { req.seed } else { None },
            width: req.width,
            height: req.height,
        };
        let mut r = self.client.post(&self.endpoint).json(&body);
        if let Some(k) = &self.api_key {
            r = r.bearer_auth(k);
        }
        let resp = r.send().map_err(|e| {
            if e.is_timeout() || e.is_connect() {
                AdapterError::Transient(e.to_string())
            } else {
                AdapterError::Failed(e.to_string())
            }
        })?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            408 | 429 | 500..=599 => return Err(AdapterError::Transient(format!("HTTP {status}"))),
            _ => return Err(AdapterError::Rejected(format!("HTTP {status}"))),
        }
        let ct = resp
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .unwrap_or("")
            .to_string();
        let format = format_from_content_type(&ct)
            .ok_or_else(|| AdapterError::Failed(format!("unsupported content type {ct:?}")))?;
        let bytes = resp
            .bytes()
            .map_err(|e| AdapterError::Transient(e.to_string()))?
            .to_vec();
        Ok(GeneratedImage {
            bytes,
            format: format.into(),
        })
    }
}
