//! The remote backend against a scripted local HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use base64::Engine;
use ledgerlens::ocr::{batch_recognize, CellKey, OcrBackend, RemoteOcrBackend, RemoteOcrConfig};
use ledgerlens::{Error, GrayImage};

struct FakeServer {
    endpoint: String,
    hits: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<String>>>,
}

/// Serves `POST /recognize`; `reply(n)` gives status and body for the n-th
/// request, counting from zero.
fn serve(reply: impl Fn(usize) -> (u16, String) + Send + Sync + 'static) -> FakeServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let (h, b) = (hits.clone(), bodies.clone());
    let reply = Arc::new(reply);
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let (h, b, reply) = (h.clone(), b.clone(), reply.clone());
            std::thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                b.lock().unwrap().push(String::from_utf8(body).unwrap());
                let n = h.fetch_add(1, Ordering::SeqCst);
                let (status, payload) = reply(n);
                let head = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n",
                    payload.len()
                );
                stream.write_all(head.as_bytes()).unwrap();
                stream.write_all(payload.as_bytes()).unwrap();
            });
        }
    });
    FakeServer { endpoint, hits, bodies }
}

fn backend(endpoint: &str, rate: f64) -> RemoteOcrBackend {
    RemoteOcrBackend::new(RemoteOcrConfig {
        endpoint: endpoint.to_string(),
        timeout_secs: 5.0,
        max_retries: 3,
        backoff_base_secs: 0.01,
        rate_limit_per_sec: rate,
    })
    .unwrap()
}

fn cell() -> GrayImage {
    GrayImage::from_fn(20, 10, |x, y| ((x * 13 + y * 7) % 256) as u8).unwrap()
}

const OK: &str = r#"{"text": "1234", "confidence": 0.9}"#;

#[test]
fn two_failures_then_success_takes_three_attempts() {
    let srv = serve(|n| if n < 2 { (503, "{}".into()) } else { (200, OK.into()) });
    let r = backend(&srv.endpoint, 100.0).recognize_cell(&CellKey::new("d", "BUILDINGS", 0), &cell()).unwrap();
    assert_eq!((r.text.as_str(), r.confidence, r.attempts), ("1234", 0.9, 3));
    assert_eq!(srv.hits.load(Ordering::SeqCst), 3);

    let body: serde_json::Value = serde_json::from_str(&srv.bodies.lock().unwrap()[0]).unwrap();
    assert_eq!(body["hint"], "digits");
    let png = base64::engine::general_purpose::STANDARD.decode(body["image_png_base64"].as_str().unwrap()).unwrap();
    assert_eq!(&png[1..4], b"PNG");
}

#[test]
fn persistent_failure_reports_every_attempt() {
    let srv = serve(|_| (500, "{}".into()));
    let err = backend(&srv.endpoint, 100.0).recognize_cell(&CellKey::new("d", "BUILDINGS", 0), &cell()).unwrap_err();
    match err {
        Error::BackendUnavailable { attempts, reason } => {
            assert_eq!(attempts, 4);
            assert!(reason.contains("500"), "{reason}");
        }
        e => panic!("unexpected {e:?}"),
    }
    assert_eq!(srv.hits.load(Ordering::SeqCst), 4);
}

#[test]
fn malformed_response_is_not_retried() {
    let srv = serve(|_| (200, "not json".into()));
    let err = backend(&srv.endpoint, 100.0).recognize_cell(&CellKey::new("d", "BUILDINGS", 0), &cell()).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err:?}");
    assert_eq!(srv.hits.load(Ordering::SeqCst), 1);

    let srv = serve(|_| (200, r#"{"text": "1", "confidence": 1.5}"#.into()));
    let err = backend(&srv.endpoint, 100.0).recognize_cell(&CellKey::new("d", "BUILDINGS", 0), &cell()).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err:?}");
}

#[test]
fn concurrent_batch_respects_the_rate_limit() {
    let srv = serve(|_| (200, OK.into()));
    let b = backend(&srv.endpoint, 5.0);
    let cells: Vec<(CellKey, GrayImage)> = (0..20).map(|i| (CellKey::new(format!("d{i:02}"), "BUILDINGS", 0), cell())).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
    let start = Instant::now();
    let out = pool.install(|| batch_recognize(&b, cells));
    let elapsed = start.elapsed();
    assert!(elapsed >= Duration::from_millis(3800), "{elapsed:?}");
    assert_eq!(out.len(), 20);
    assert!(out.iter().all(|e| e.outcome.is_ok() && e.attempts == 1));
    // output order follows input order regardless of completion order
    assert!(out.windows(2).all(|w| w[0].key < w[1].key));
}

#[test]
fn unreachable_endpoint_is_unavailable() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = backend(&format!("http://127.0.0.1:{port}"), 100.0)
        .recognize_cell(&CellKey::new("d", "BUILDINGS", 0), &cell())
        .unwrap_err();
    assert!(matches!(err, Error::BackendUnavailable { attempts: 4, .. }), "{err:?}");
}
