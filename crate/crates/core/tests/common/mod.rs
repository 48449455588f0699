//! A scripted HTTP/1.1 completions server for gateway tests.

#![allow(dead_code)]

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub enum Reply {
    Ok(String),
    Status(u16),
    /// Status with a `Retry-After` header in seconds.
    RetryAfter(u16, String),
    /// Hold the connection open without answering.
    Hang(Duration),
}

#[derive(Debug, Clone)]
pub struct Hit {
    pub start: Instant,
    pub body: String,
    pub authorization: Option<String>,
}

struct Shared {
    script: Mutex<VecDeque<Reply>>,
    fallback: Reply,
    delay: Duration,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    hits: Mutex<Vec<Hit>>,
    stop: AtomicBool,
}

pub struct StubServer {
    pub url: String,
    shared: Arc<Shared>,
    started: Instant,
}

impl StubServer {
    /// Serve `script` in arrival order, then `fallback` forever. Every answer
    /// is delayed by `delay` so concurrent requests overlap.
    pub fn start(script: Vec<Reply>, fallback: Reply, delay: Duration) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub");
        let url = format!("http://{}/v1/completions", listener.local_addr().unwrap());
        let shared = Arc::new(Shared {
            script: Mutex::new(script.into()),
            fallback,
            delay,
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            hits: Mutex::new(Vec::new()),
            stop: AtomicBool::new(false),
        });
        let s = Arc::clone(&shared);
        thread::spawn(move || {
            for stream in listener.incoming() {
                if s.stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let s = Arc::clone(&s);
                thread::spawn(move || handle(stream, &s));
            }
        });
        Self {
            url,
            shared,
            started: Instant::now(),
        }
    }

    pub fn hits(&self) -> Vec<Hit> {
        let mut h = self.shared.hits.lock().unwrap().clone();
        h.sort_by_key(|x| x.start);
        h
    }

    pub fn peak_in_flight(&self) -> usize {
        self.shared.peak.load(Ordering::SeqCst)
    }

    /// Gaps between consecutive request arrivals.
    pub fn arrival_gaps(&self) -> Vec<Duration> {
        self.hits().windows(2).map(|w| w[1].start - w[0].start).collect()
    }

    pub fn started(&self) -> Instant {
        self.started
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop.
        let _ = TcpStream::connect(self.url.trim_start_matches("http://").split('/').next().unwrap());
    }
}

fn read_request(stream: &TcpStream) -> Option<(String, Option<String>)> {
    let mut reader = BufReader::new(stream);
    let mut length = 0usize;
    let mut auth = None;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            match k.trim().to_ascii_lowercase().as_str() {
                "content-length" => length = v.trim().parse().ok()?,
                "authorization" => auth = Some(v.trim().to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).ok()?;
    Some((String::from_utf8_lossy(&body).into_owned(), auth))
}

fn handle(mut stream: TcpStream, s: &Shared) {
    let Some((body, authorization)) = read_request(&stream) else { return };
    let start = Instant::now();
    let now = s.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    s.peak.fetch_max(now, Ordering::SeqCst);
    s.hits.lock().unwrap().push(Hit {
        start,
        body,
        authorization,
    });
    let reply = s.script.lock().unwrap().pop_front().unwrap_or_else(|| s.fallback.clone());
    thread::sleep(s.delay);
    let response = match &reply {
        Reply::Ok(text) => {
            let json = serde_json::json!({"id": "stub", "choices": [{"text": text}]}).to_string();
            format!(
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{json}",
                json.len()
            )
        }
        Reply::Status(code) => {
            format!("HTTP/1.1 {code} Stub\r\nContent-Length: 4\r\nConnection: close\r\n\r\nnope")
        }
        Reply::RetryAfter(code, after) => format!(
            "HTTP/1.1 {code} Stub\r\nRetry-After: {after}\r\nContent-Length: 4\r\nConnection: close\r\n\r\nslow"
        ),
        Reply::Hang(d) => {
            thread::sleep(*d);
            String::new()
        }
    };
    s.in_flight.fetch_sub(1, Ordering::SeqCst);
    let _ = stream.write_all(response.as_bytes());
    let _ = stream.flush();
}
