//! Byte-level request/response model of the backend protocol.
//!
//! The remote driver never talks to a socket directly; it sends
//! [`HttpRequest`]s and reads event frames through a [`Transport`]. That
//! makes the exact bytes it puts on the wire observable: a
//! [`RecordingTransport`] writes every exchange to a fixture directory and a
//! [`ReplayTransport`] plays a fixture back, flagging any request whose
//! bytes differ from the recording.
//!
//! Fixture layout: `NNN-request.http` / `NNN-response.http` pairs in
//! exchange order, plus `events.jsonl` with one event-channel text frame per
//! line. Messages are stored as `<start line>\r\n<name>: <value>\r\n…\r\n\r\n<body>`.

use std::fs;
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct TransportError(pub String);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub method: String,
    /// Path plus query string, e.g. `/view?filename=a.png`.
    pub target: String,
    /// Header names are lowercase; order is significant on the wire.
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl HttpRequest {
    pub fn get(target: impl Into<String>) -> Self {
        Self {
            method: "GET".into(),
            target: target.into(),
            headers: Vec::new(),
            body: Vec::new(),
        }
    }

    pub fn post(target: impl Into<String>, content_type: &str, body: Vec<u8>) -> Self {
        Self {
            method: "POST".into(),
            target: target.into(),
            headers: vec![("content-type".into(), content_type.into())],
            body,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        encode_message(&format!("{} {} HTTP/1.1", self.method, self.target), &self.headers, &self.body)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TransportError> {
        let (start, headers, body) = decode_message(bytes)?;
        let mut parts = start.splitn(3, ' ');
        let (Some(method), Some(target)) = (parts.next(), parts.next()) else {
            return Err(TransportError(format!("bad request line {start:?}")));
        };
        Ok(Self {
            method: method.into(),
            target: target.into(),
            headers,
            body,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn new(status: u16, content_type: &str, body: Vec<u8>) -> Self {
        Self {
            status,
            headers: vec![("content-type".into(), content_type.into())],
            body,
        }
    }

    pub fn json(status: u16, value: &serde_json::Value) -> Self {
        Self::new(status, "application/json", serde_json::to_vec(value).expect("json value serializes"))
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    pub fn encode(&self) -> Vec<u8> {
        encode_message(
            &format!("HTTP/1.1 {} {}", self.status, reason_phrase(self.status)),
            &self.headers,
            &self.body,
        )
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TransportError> {
        let (start, headers, body) = decode_message(bytes)?;
        let status = start
            .split(' ')
            .nth(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| TransportError(format!("bad status line {start:?}")))?;
        Ok(Self { status, headers, body })
    }
}

fn reason_phrase(status: u16) -> &'static str {
    match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Unknown",
    }
}

fn encode_message(start: &str, headers: &[(String, String)], body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(start.len() + body.len() + 64);
    out.extend_from_slice(start.as_bytes());
    out.extend_from_slice(b"\r\n");
    for (k, v) in headers {
        out.extend_from_slice(format!("{k}: {v}\r\n").as_bytes());
    }
    out.extend_from_slice(b"\r\n");
    out.extend_from_slice(body);
    out
}

type Decoded = (String, Vec<(String, String)>, Vec<u8>);

fn decode_message(bytes: &[u8]) -> Result<Decoded, TransportError> {
    let split = bytes
        .windows(4)
        .position(|w| w == b"\r\n\r\n")
        .ok_or_else(|| TransportError("message has no header terminator".into()))?;
    let head = std::str::from_utf8(&bytes[..split]).map_err(|e| TransportError(e.to_string()))?;
    let mut lines = head.split("\r\n");
    let start = lines.next().unwrap_or_default().to_owned();
    let headers = lines
        .map(|l| {
            l.split_once(": ")
                .map(|(k, v)| (k.to_owned(), v.to_owned()))
                .ok_or_else(|| TransportError(format!("bad header line {l:?}")))
        })
        .collect::<Result<_, _>>()?;
    Ok((start, headers, bytes[split + 4..].to_vec()))
}

/// A `multipart/form-data` upload body as the backend's image upload
/// endpoint expects it: the file under `image` plus `overwrite=true`. The
/// boundary is derived from the content so identical uploads produce
/// identical bytes.
pub fn multipart_image(filename: &str, bytes: &[u8]) -> (String, Vec<u8>) {
    let mut h = Sha256::new();
    h.update(filename.as_bytes());
    h.update(bytes);
    let boundary = format!("----easel{}", &hex::encode(h.finalize())[..24]);
    let mut body = Vec::with_capacity(bytes.len() + 256);
    body.extend_from_slice(
        format!(
            "--{boundary}\r\nContent-Disposition: form-data; name=\"image\"; filename=\"{filename}\"\r\nContent-Type: image/png\r\n\r\n"
        )
        .as_bytes(),
    );
    body.extend_from_slice(bytes);
    body.extend_from_slice(
        format!("\r\n--{boundary}\r\nContent-Disposition: form-data; name=\"overwrite\"\r\n\r\ntrue\r\n--{boundary}--\r\n")
            .as_bytes(),
    );
    (format!("multipart/form-data; boundary={boundary}"), body)
}

/// Server-push channel carrying JSON text frames.
pub trait EventStream: Send {
    /// The next text frame, or `None` if none arrived within the stream's
    /// read timeout. Non-text frames are skipped.
    fn next_frame(&mut self) -> Result<Option<String>, TransportError>;
}

pub trait Transport: Send + Sync {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError>;
    /// Opens the event channel for `client_id`.
    fn events(&self, client_id: &str) -> Result<Box<dyn EventStream>, TransportError>;
}

fn exchange_paths(dir: &Path, n: usize) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{n:03}-request.http")),
        dir.join(format!("{n:03}-response.http")),
    )
}

pub const EVENTS_FILE: &str = "events.jsonl";

/// A recorded request that the driver did not reproduce byte for byte.
#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub index: usize,
    pub expected: Vec<u8>,
    pub actual: Vec<u8>,
}

/// Plays back a recorded fixture.
pub struct ReplayTransport {
    exchanges: Vec<(Vec<u8>, HttpResponse)>,
    frames: Vec<String>,
    cursor: Mutex<usize>,
    mismatches: Mutex<Vec<Mismatch>>,
}

impl ReplayTransport {
    pub fn load(dir: &Path) -> Result<Self, TransportError> {
        let io = |e: std::io::Error| TransportError(e.to_string());
        let mut exchanges = Vec::new();
        for n in 1.. {
            let (req, resp) = exchange_paths(dir, n);
            if !req.exists() {
                break;
            }
            exchanges.push((fs::read(req).map_err(io)?, HttpResponse::decode(&fs::read(resp).map_err(io)?)?));
        }
        let frames = match fs::read_to_string(dir.join(EVENTS_FILE)) {
            Ok(s) => s.lines().filter(|l| !l.is_empty()).map(str::to_owned).collect(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io(e)),
        };
        Ok(Self {
            exchanges,
            frames,
            cursor: Mutex::new(0),
            mismatches: Mutex::new(Vec::new()),
        })
    }

    /// Requests that differed from the recording.
    pub fn mismatches(&self) -> Vec<Mismatch> {
        self.mismatches.lock().clone()
    }

    /// True once every recorded exchange has been replayed.
    pub fn exhausted(&self) -> bool {
        *self.cursor.lock() == self.exchanges.len()
    }

    pub fn len(&self) -> usize {
        self.exchanges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exchanges.is_empty()
    }
}

impl Transport for ReplayTransport {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let mut cursor = self.cursor.lock();
        let index = *cursor;
        let Some((expected, response)) = self.exchanges.get(index) else {
            return Err(TransportError(format!("unexpected request #{}: {} {}", index + 1, req.method, req.target)));
        };
        *cursor += 1;
        let actual = req.encode();
        if &actual != expected {
            self.mismatches.lock().push(Mismatch {
                index: index + 1,
                expected: expected.clone(),
                actual,
            });
            return Err(TransportError(format!("request #{} differs from the recording", index + 1)));
        }
        Ok(response.clone())
    }

    fn events(&self, _client_id: &str) -> Result<Box<dyn EventStream>, TransportError> {
        Ok(Box::new(ReplayEvents {
            frames: self.frames.clone().into_iter(),
        }))
    }
}

struct ReplayEvents {
    frames: std::vec::IntoIter<String>,
}

impl EventStream for ReplayEvents {
    fn next_frame(&mut self) -> Result<Option<String>, TransportError> {
        self.frames
            .next()
            .map(Some)
            .ok_or_else(|| TransportError("event channel closed".into()))
    }
}

/// Wraps a transport and records every exchange and event frame into a
/// fixture directory.
pub struct RecordingTransport<T> {
    inner: T,
    dir: PathBuf,
    count: Mutex<usize>,
}

impl<T: Transport> RecordingTransport<T> {
    /// Starts a fresh recording in `dir` (existing fixture files are
    /// removed).
    pub fn new(inner: T, dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if name.ends_with(".http") || name == EVENTS_FILE {
                fs::remove_file(&path)?;
            }
        }
        Ok(Self {
            inner,
            dir,
            count: Mutex::new(0),
        })
    }

    pub fn inner(&self) -> &T {
        &self.inner
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let resp = self.inner.send(req)?;
        let mut count = self.count.lock();
        *count += 1;
        let (rq, rs) = exchange_paths(&self.dir, *count);
        let io = |e: std::io::Error| TransportError(e.to_string());
        fs::write(rq, req.encode()).map_err(io)?;
        fs::write(rs, resp.encode()).map_err(io)?;
        Ok(resp)
    }

    fn events(&self, client_id: &str) -> Result<Box<dyn EventStream>, TransportError> {
        Ok(Box::new(RecordingEvents {
            inner: self.inner.events(client_id)?,
            path: self.dir.join(EVENTS_FILE),
        }))
    }
}

struct RecordingEvents {
    inner: Box<dyn EventStream>,
    path: PathBuf,
}

impl EventStream for RecordingEvents {
    fn next_frame(&mut self) -> Result<Option<String>, TransportError> {
        let frame = self.inner.next_frame()?;
        if let Some(f) = &frame {
            use std::io::Write;
            let mut file = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(&self.path)
                .map_err(|e| TransportError(e.to_string()))?;
            writeln!(file, "{f}").map_err(|e| TransportError(e.to_string()))?;
        }
        Ok(frame)
    }
}
