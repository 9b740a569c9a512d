//! JSON-over-HTTP client for a model sidecar.
//!
//! Routes (all `POST`, UTF-8 JSON bodies):
//!
//! | route             | request                                   | response                                   |
//! |-------------------|-------------------------------------------|--------------------------------------------|
//! | `/v1/caption`     | `{"image_b64"}`                           | `{"caption"}`                              |
//! | `/v1/embed/image` | `{"image_b64", "region"?: [x0,y0,x1,y1]}` | `{"embedding": [..], "dim"}`               |
//! | `/v1/embed/text`  | `{"text"}`                                | `{"embedding": [..], "dim"}`               |
//! | `/v1/detect`      | `{"image_b64", "caption"}`                | `{"objects": [{"phrase","box","confidence"}]}` |
//!
//! Any non-2xx status becomes [`Error::Remote`]. Requests are not retried.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::{BBox, ImageRef, ObjectDetection, Provider};
use crate::error::{Error, Result};
use crate::representation::Embedding;

const BODY_EXCERPT: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub timeout_secs: f64,
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            timeout_secs: 30.0,
            max_in_flight: 8,
        }
    }
}

/// Counting semaphore bounding concurrent requests.
struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().expect("gate poisoned");
        while *n >= self.limit {
            n = self.freed.wait(n).expect("gate poisoned");
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().expect("gate poisoned") -= 1;
        self.0.freed.notify_one();
    }
}

pub struct RemoteProvider {
    base: String,
    dim: usize,
    agent: Agent,
    gate: Gate,
}

#[derive(Serialize)]
struct ImageRequest<'a> {
    image_b64: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    region: Option<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    caption: Option<&'a str>,
}

#[derive(Serialize)]
struct TextRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct CaptionResponse {
    caption: String,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embedding: Vec<f64>,
    dim: usize,
}

#[derive(Deserialize)]
struct RawDetection {
    phrase: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    confidence: f64,
}

#[derive(Deserialize)]
struct DetectResponse {
    objects: Vec<RawDetection>,
}

impl RemoteProvider {
    pub fn new(endpoint: &str, dim: usize, cfg: &RemoteConfig) -> Result<Self> {
        if !(cfg.timeout_secs > 0.0 && cfg.timeout_secs.is_finite()) {
            return Err(Error::InvalidConfig("remote timeout must be > 0".into()));
        }
        if cfg.max_in_flight == 0 {
            return Err(Error::InvalidConfig("max_in_flight must be >= 1".into()));
        }
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            base: endpoint.trim_end_matches('/').to_string(),
            dim,
            agent,
            gate: Gate {
                in_flight: Mutex::new(0),
                freed: Condvar::new(),
                limit: cfg.max_in_flight,
            },
        })
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, route: &str, body: &B) -> Result<R> {
        let url = format!("{}{route}", self.base);
        let _permit = self.gate.acquire();
        let mut resp = self.agent.post(&url).send_json(body).map_err(|e| transport(&url, e))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| transport(&url, e))?;
        if !(200..300).contains(&status) {
            let body = text.chars().take(BODY_EXCERPT).collect();
            return Err(Error::Remote { status, body });
        }
        serde_json::from_str(&text)
            .map_err(|e| Error::ProtocolViolation(format!("{route}: malformed response: {e}")))
    }

    fn image_request<'a>(image: &ImageRef, caption: Option<&'a str>) -> Result<ImageRequest<'a>> {
        Ok(ImageRequest {
            image_b64: STANDARD.encode(image.bytes()?),
            region: image.region.map(|r| r.coords()),
            caption,
        })
    }

    fn check_embedding(&self, route: &str, resp: EmbedResponse) -> Result<Embedding> {
        if resp.embedding.len() != resp.dim {
            return Err(Error::ProtocolViolation(format!(
                "{route}: dim field {} but {} values",
                resp.dim,
                resp.embedding.len()
            )));
        }
        if resp.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: resp.dim,
            });
        }
        Embedding::new(resp.embedding).map_err(|e| Error::ProtocolViolation(format!("{route}: {e}")))
    }
}

fn transport(url: &str, e: ureq::Error) -> Error {
    match e {
        ureq::Error::Timeout(t) => Error::Timeout(format!("{url}: {t}")),
        other => Error::Transport(format!("{url}: {other}")),
    }
}

impl Provider for RemoteProvider {
    fn embedding_dim(&self) -> usize {
        self.dim
    }

    fn caption(&self, image: &ImageRef) -> Result<String> {
        let req = Self::image_request(&ImageRef { region: None, ..image.clone() }, None)?;
        let resp: CaptionResponse = self.post("/v1/caption", &req)?;
        if resp.caption.trim().is_empty() {
            return Err(Error::ProtocolViolation("/v1/caption: empty caption".into()));
        }
        Ok(resp.caption)
    }

    fn embed_image(&self, image: &ImageRef) -> Result<Embedding> {
        let resp = self.post("/v1/embed/image", &Self::image_request(image, None)?)?;
        self.check_embedding("/v1/embed/image", resp)
    }

    fn embed_text(&self, text: &str) -> Result<Embedding> {
        if text.trim().is_empty() {
            return Err(Error::InvalidInput("cannot embed empty text".into()));
        }
        let resp = self.post("/v1/embed/text", &TextRequest { text })?;
        self.check_embedding("/v1/embed/text", resp)
    }

    fn detect_objects(&self, image: &ImageRef, caption: &str) -> Result<Vec<ObjectDetection>> {
        if caption.trim().is_empty() {
            return Err(Error::InvalidInput("caption is empty".into()));
        }
        let req = Self::image_request(&ImageRef { region: None, ..image.clone() }, Some(caption))?;
        let resp: DetectResponse = self.post("/v1/detect", &req)?;
        resp.objects
            .into_iter()
            .map(|raw| {
                let violation = |m: String| Error::ProtocolViolation(format!("/v1/detect: {m}"));
                let bbox = BBox::try_from(raw.bbox).map_err(|e| violation(e.to_string()))?;
                let det = ObjectDetection {
                    phrase: raw.phrase,
                    bbox,
                    confidence: raw.confidence,
                };
                det.validate().map_err(|e| violation(e.to_string()))?;
                if !caption.contains(&det.phrase) {
                    return Err(violation(format!("phrase {:?} is not part of the caption", det.phrase)));
                }
                Ok(det)
            })
            .collect()
    }

    fn wants_pixels(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;
    use std::thread;

    type Handler = dyn Fn(&str, &serde_json::Value) -> (u16, String) + Send + Sync;

    /// Minimal HTTP/1.1 server: one thread per connection, `Connection: close`.
    fn serve(handler: Arc<Handler>) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let handler = handler.clone();
                thread::spawn(move || {
                    let mut reader = BufReader::new(stream.try_clone().unwrap());
                    let mut request_line = String::new();
                    reader.read_line(&mut request_line).unwrap();
                    let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
                    let mut len = 0;
                    loop {
                        let mut line = String::new();
                        reader.read_line(&mut line).unwrap();
                        if line == "\r\n" || line.is_empty() {
                            break;
                        }
                        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                            len = v.trim().parse().unwrap();
                        }
                    }
                    let mut body = vec![0; len];
                    reader.read_exact(&mut body).unwrap();
                    let json = serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);
                    let (status, out) = handler(&path, &json);
                    let _ = write!(
                        stream,
                        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{out}",
                        out.len()
                    );
                });
            }
        });
        format!("http://{addr}")
    }

    fn provider(url: &str, dim: usize) -> RemoteProvider {
        RemoteProvider::new(url, dim, &RemoteConfig::default()).unwrap()
    }

    fn image() -> ImageRef {
        ImageRef::inline(b"pixels".to_vec())
    }

    #[test]
    fn happy_path_routes() {
        let url = serve(Arc::new(|path, body| {
            let ok = |v: serde_json::Value| (200, v.to_string());
            match path {
                "/v1/caption" => {
                    assert_eq!(body["image_b64"], STANDARD.encode(b"pixels"));
                    ok(serde_json::json!({"caption": "a cat on a mat"}))
                }
                "/v1/embed/image" => {
                    let x = if body.get("region").is_some() { 9.0 } else { 1.0 };
                    ok(serde_json::json!({"embedding": [x, 2.0, 3.0], "dim": 3}))
                }
                "/v1/embed/text" => ok(serde_json::json!({"embedding": [body["text"].as_str().unwrap().len(), 0, 1], "dim": 3})),
                "/v1/detect" => {
                    assert_eq!(body["caption"], "a cat on a mat");
                    ok(serde_json::json!({"objects": [{"phrase": "cat", "box": [0.1, 0.2, 0.3, 0.4], "confidence": 0.9}]}))
                }
                _ => (404, "no route".into()),
            }
        }));
        let p = provider(&url, 3);
        assert_eq!(p.caption(&image()).unwrap(), "a cat on a mat");
        assert_eq!(p.embed_image(&image()).unwrap().values(), &[1.0, 2.0, 3.0]);
        let region = image().with_region(BBox::new(0.0, 0.0, 0.5, 0.5).unwrap());
        assert_eq!(p.embed_image(&region).unwrap().values()[0], 9.0);
        assert_eq!(p.embed_text("abcd").unwrap().values(), &[4.0, 0.0, 1.0]);
        let dets = p.detect_objects(&image(), "a cat on a mat").unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].bbox.coords(), [0.1, 0.2, 0.3, 0.4]);
        assert!(matches!(p.embed_text(""), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn server_error_surfaces_status() {
        let url = serve(Arc::new(|_, _| (500, "model exploded".into())));
        match provider(&url, 3).caption(&image()) {
            Err(Error::Remote { status, body }) => {
                assert_eq!(status, 500);
                assert!(body.contains("model exploded"));
            }
            other => panic!("expected remote error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_dim_is_mismatch() {
        let url = serve(Arc::new(|_, _| {
            (200, serde_json::json!({"embedding": vec![0.5; 512], "dim": 512}).to_string())
        }));
        assert!(matches!(
            provider(&url, 768).embed_image(&image()),
            Err(Error::DimensionMismatch { expected: 768, actual: 512 })
        ));
    }

    #[test]
    fn invalid_boxes_and_phrases_are_violations() {
        let url = serve(Arc::new(|_, body| {
            let phrase = if body["caption"] == "use bad phrase" { "zebra" } else { "cat" };
            let bbox = if body["caption"] == "a cat, bad box" { [0.6, 0.1, 0.5, 0.4] } else { [0.1, 0.1, 0.5, 0.4] };
            (200, serde_json::json!({"objects": [{"phrase": phrase, "box": bbox, "confidence": 0.7}]}).to_string())
        }));
        let p = provider(&url, 3);
        assert!(matches!(p.detect_objects(&image(), "a cat, bad box"), Err(Error::ProtocolViolation(_))));
        assert!(matches!(p.detect_objects(&image(), "use bad phrase"), Err(Error::ProtocolViolation(_))));
        assert!(p.detect_objects(&image(), "a cat").is_ok());
    }

    #[test]
    fn malformed_json_is_violation() {
        let url = serve(Arc::new(|_, _| (200, "{not json".into())));
        assert!(matches!(provider(&url, 3).embed_text("x"), Err(Error::ProtocolViolation(_))));
    }

    #[test]
    fn slow_server_times_out() {
        let url = serve(Arc::new(|_, _| {
            thread::sleep(Duration::from_millis(1500));
            (200, r#"{"caption": "late"}"#.into())
        }));
        let cfg = RemoteConfig { timeout_secs: 0.2, max_in_flight: 1 };
        let p = RemoteProvider::new(&url, 3, &cfg).unwrap();
        assert!(matches!(p.caption(&image()), Err(Error::Timeout(_))));
    }

    #[test]
    fn unreachable_server_is_transport_error() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let p = provider(&format!("http://{addr}"), 3);
        let err = p.embed_text("x").unwrap_err();
        assert!(matches!(err, Error::Transport(_) | Error::Timeout(_)), "{err:?}");
    }

    #[test]
    fn in_flight_requests_are_bounded() {
        let current = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let (c, pk) = (current.clone(), peak.clone());
        let url = serve(Arc::new(move |_, _| {
            let now = c.fetch_add(1, Ordering::SeqCst) + 1;
            pk.fetch_max(now, Ordering::SeqCst);
            thread::sleep(Duration::from_millis(80));
            c.fetch_sub(1, Ordering::SeqCst);
            (200, serde_json::json!({"embedding": [1.0, 0.0, 0.0], "dim": 3}).to_string())
        }));
        let cfg = RemoteConfig { timeout_secs: 10.0, max_in_flight: 2 };
        let p = Arc::new(RemoteProvider::new(&url, 3, &cfg).unwrap());
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let p = p.clone();
                thread::spawn(move || p.embed_text("hello").unwrap())
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
        assert!(peak.load(Ordering::SeqCst) >= 1);
    }
}
