use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use talklearn_core::translation::{FailureReason, RemoteBackend, RemoteRequest};

/// Read one HTTP request and return its body.
fn read_request(stream: &mut TcpStream) -> String {
    let mut reader = BufReader::new(stream);
    let mut length = 0;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        if line == "\r\n" || line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                length = value.trim().parse().unwrap();
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    String::from_utf8(body).unwrap()
}

/// A stub endpoint answering every request with `reply`, after `delay`.
/// Returns the base URL and the request bodies received so far.
fn stub(status: u16, reply: &'static str, delay: Duration) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let log = log.clone();
            thread::spawn(move || {
                log.lock().unwrap().push(read_request(&mut stream));
                thread::sleep(delay);
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                    reply.len()
                );
            });
        }
    });
    (url, seen)
}

fn request() -> RemoteRequest {
    RemoteRequest {
        text: "where is the tea".into(),
        src: "en".into(),
        dst: "fr".into(),
    }
}

#[test]
fn successful_translation() {
    let (url, seen) = stub(200, r#"{"text":"où est le thé"}"#, Duration::ZERO);
    let backend = RemoteBackend::new(&url, Duration::from_secs(5), 2);
    let (outcome, attempts) = backend.remote_translate(&request());
    assert_eq!(outcome.unwrap(), "où est le thé");
    assert_eq!(attempts, 1);
    let body: serde_json::Value = serde_json::from_str(&seen.lock().unwrap()[0]).unwrap();
    assert_eq!(body, serde_json::json!({"text": "where is the tea", "src": "en", "dst": "fr"}));
}

#[test]
fn error_status_is_not_retried() {
    let (url, seen) = stub(503, "{}", Duration::ZERO);
    let (outcome, attempts) = RemoteBackend::new(&url, Duration::from_secs(5), 3).remote_translate(&request());
    assert_eq!(outcome.unwrap_err().reason, FailureReason::Status);
    assert_eq!(attempts, 1);
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn malformed_reply() {
    let (url, _) = stub(200, r#"{"translation":1}"#, Duration::ZERO);
    let (outcome, _) = RemoteBackend::new(&url, Duration::from_secs(5), 0).remote_translate(&request());
    assert_eq!(outcome.unwrap_err().reason, FailureReason::Malformed);
}

#[test]
fn timeouts_are_retried() {
    let (url, seen) = stub(200, r#"{"text":"late"}"#, Duration::from_millis(600));
    let (outcome, attempts) = RemoteBackend::new(&url, Duration::from_millis(150), 2).remote_translate(&request());
    assert_eq!(outcome.unwrap_err().reason, FailureReason::Timeout);
    assert_eq!(attempts, 3);
    thread::sleep(Duration::from_millis(100));
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn unreachable_endpoint() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let backend = RemoteBackend::new(&format!("http://127.0.0.1:{port}/"), Duration::from_secs(2), 1);
    assert_eq!(backend.url(), format!("http://127.0.0.1:{port}/translate"));
    let (outcome, attempts) = backend.remote_translate(&request());
    assert_eq!(outcome.unwrap_err().reason, FailureReason::Unreachable);
    assert_eq!(attempts, 1);
}
