//! Driver for a ComfyUI-compatible backend.
//!
//! Per job: open the event channel (`/ws?clientId=…`) first so no event is
//! missed, upload every input file (`POST /upload/image`), submit the graph
//! (`POST /prompt`), then follow `progress`/`executing` frames until the
//! backend reports the prompt finished, and finally collect outputs from
//! `GET /history/{prompt_id}` and `GET /view`.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use super::wire::{multipart_image, EventStream, HttpRequest, HttpResponse, Transport, TransportError};
use super::{Driver, DriverError, Execution, JobOutput, Step, Upload};
use crate::easel::graph::WorkflowGraph;
use crate::ids::JobId;
use crate::media::AssetKind;

/// Progress reported while the backend is still executing is capped below
/// 1 so that only completion reaches 1.
pub const MAX_RUNNING_PROGRESS: f64 = 0.99;

impl From<TransportError> for DriverError {
    fn from(e: TransportError) -> Self {
        DriverError::Transport(e.0)
    }
}

pub struct RemoteDriver {
    transport: Arc<dyn Transport>,
    client_id: String,
}

impl RemoteDriver {
    pub fn new(transport: Arc<dyn Transport>, client_id: impl Into<String>) -> Self {
        Self {
            transport,
            client_id: client_id.into(),
        }
    }

    /// A driver speaking HTTP and WebSocket to `base_url`.
    pub fn connect(base_url: &str, client_id: impl Into<String>) -> Result<Self, DriverError> {
        Ok(Self::new(Arc::new(HttpTransport::new(base_url)?), client_id))
    }

    pub fn client_id(&self) -> &str {
        &self.client_id
    }
}

fn json_body(resp: &HttpResponse, what: &str) -> Result<Value, DriverError> {
    serde_json::from_slice(&resp.body).map_err(|e| DriverError::Protocol(format!("{what}: {e}")))
}

/// Maps a non-success HTTP status: server errors are transient, client
/// errors mean the backend refused the request.
fn check_status(resp: &HttpResponse, what: &str) -> Result<(), DriverError> {
    if resp.is_success() {
        return Ok(());
    }
    let detail = String::from_utf8_lossy(&resp.body);
    if resp.status >= 500 {
        Err(DriverError::Transport(format!("{what}: HTTP {}: {detail}", resp.status)))
    } else {
        Err(DriverError::Rejected(format!("{what}: HTTP {}: {detail}", resp.status)))
    }
}

/// Body of a prompt submission: `{"client_id":…,"prompt":…}` with the graph
/// in compact canonical form.
pub fn prompt_body(client_id: &str, graph: &WorkflowGraph) -> Vec<u8> {
    let mut body = br#"{"client_id":"#.to_vec();
    body.extend_from_slice(serde_json::to_string(client_id).expect("strings serialize").as_bytes());
    body.extend_from_slice(br#","prompt":"#);
    body.extend_from_slice(&graph.compact_json());
    body.push(b'}');
    body
}

fn rejection_reason(v: &Value) -> String {
    let mut reason = v["error"]["message"].as_str().unwrap_or("prompt rejected").to_owned();
    if let Some(errors) = v["node_errors"].as_object() {
        for (node, e) in errors {
            for err in e["errors"].as_array().into_iter().flatten() {
                let msg = err["message"].as_str().unwrap_or_default();
                let details = err["details"].as_str().unwrap_or_default();
                reason.push_str(&format!("; node {node}: {msg} {details}"));
            }
        }
    }
    reason.trim_end().to_owned()
}

impl Driver for RemoteDriver {
    fn name(&self) -> &'static str {
        "remote"
    }

    fn start(&self, job: &JobId, graph: &WorkflowGraph, uploads: &[Upload]) -> Result<Box<dyn Execution>, DriverError> {
        let events = self.transport.events(&self.client_id)?;
        for u in uploads {
            let (content_type, body) = multipart_image(&u.name, &u.bytes);
            let resp = self.transport.send(&HttpRequest::post("/upload/image", &content_type, body))?;
            check_status(&resp, "upload")?;
            let v = json_body(&resp, "upload response")?;
            if v["name"].as_str() != Some(u.name.as_str()) {
                return Err(DriverError::Protocol(format!(
                    "backend stored {} as {}",
                    u.name, v["name"]
                )));
            }
        }
        let resp = self
            .transport
            .send(&HttpRequest::post("/prompt", "application/json", prompt_body(&self.client_id, graph)))?;
        if resp.status == 400 {
            return Err(DriverError::Rejected(rejection_reason(&json_body(&resp, "prompt error")?)));
        }
        check_status(&resp, "prompt")?;
        let v = json_body(&resp, "prompt response")?;
        let prompt_id = v["prompt_id"]
            .as_str()
            .ok_or_else(|| DriverError::Protocol("prompt response has no prompt_id".into()))?
            .to_owned();
        log::info!("job {job}: backend prompt {prompt_id}");
        Ok(Box::new(RemoteExecution {
            transport: self.transport.clone(),
            events,
            prompt_id,
            outputs: graph
                .output_nodes()
                .into_iter()
                .map(|(id, kind)| (id.to_owned(), kind))
                .collect(),
            total_nodes: graph.nodes.len().max(1),
            cached: 0,
            executed: BTreeSet::new(),
            current: None,
            partial: 0.0,
        }))
    }
}

struct RemoteExecution {
    transport: Arc<dyn Transport>,
    events: Box<dyn EventStream>,
    prompt_id: String,
    outputs: Vec<(String, AssetKind)>,
    total_nodes: usize,
    cached: usize,
    executed: BTreeSet<String>,
    current: Option<String>,
    partial: f64,
}

impl RemoteExecution {
    fn progress(&self) -> f64 {
        let done = self.cached + self.executed.len();
        ((done as f64 + self.partial) / self.total_nodes as f64).min(MAX_RUNNING_PROGRESS)
    }

    fn finish_current(&mut self) {
        if let Some(node) = self.current.take() {
            self.executed.insert(node);
        }
        self.partial = 0.0;
    }

    fn view(&self, file: &Value) -> Result<(String, Vec<u8>), DriverError> {
        let filename = file["filename"]
            .as_str()
            .ok_or_else(|| DriverError::Protocol("output entry without filename".into()))?;
        let query = url::form_urlencoded::Serializer::new(String::new())
            .append_pair("filename", filename)
            .append_pair("subfolder", file["subfolder"].as_str().unwrap_or_default())
            .append_pair("type", file["type"].as_str().unwrap_or("output"))
            .finish();
        let resp = self.transport.send(&HttpRequest::get(format!("/view?{query}")))?;
        check_status(&resp, "view")?;
        Ok((filename.to_owned(), resp.body))
    }

    fn collect(&mut self) -> Result<Step, DriverError> {
        let resp = self
            .transport
            .send(&HttpRequest::get(format!("/history/{}", self.prompt_id)))?;
        check_status(&resp, "history")?;
        let v = json_body(&resp, "history")?;
        let entry = &v[&self.prompt_id];
        if entry.is_null() {
            return Err(DriverError::Protocol(format!("history has no entry for {}", self.prompt_id)));
        }
        if entry["status"]["status_str"].as_str() == Some("error") {
            return Ok(Step::Failed(history_error(&entry["status"])));
        }
        let mut out = Vec::new();
        for (node, kind) in self.outputs.clone() {
            let produced = &entry["outputs"][&node];
            if kind == AssetKind::Text {
                let text: Vec<&str> = produced["text"]
                    .as_array()
                    .into_iter()
                    .flatten()
                    .filter_map(Value::as_str)
                    .collect();
                if !text.is_empty() {
                    out.push(JobOutput {
                        node: node.clone(),
                        kind,
                        filename: String::new(),
                        bytes: text.join("\n").into_bytes(),
                    });
                }
                continue;
            }
            let Some(lists) = produced.as_object() else { continue };
            for files in lists.values() {
                for file in files.as_array().into_iter().flatten().filter(|f| f["filename"].is_string()) {
                    let (filename, bytes) = self.view(file)?;
                    out.push(JobOutput {
                        node: node.clone(),
                        kind,
                        filename,
                        bytes,
                    });
                }
            }
        }
        Ok(Step::Done(out))
    }
}

fn history_error(status: &Value) -> String {
    status["messages"]
        .as_array()
        .into_iter()
        .flatten()
        .find(|m| m[0] == "execution_error")
        .and_then(|m| m[1]["exception_message"].as_str())
        .unwrap_or("generation failed")
        .to_owned()
}

impl Execution for RemoteExecution {
    fn poll(&mut self) -> Result<Step, DriverError> {
        let Some(frame) = self.events.next_frame()? else {
            return Ok(Step::Pending);
        };
        let Ok(msg) = serde_json::from_str::<Value>(&frame) else {
            log::debug!("ignoring non-JSON event frame");
            return Ok(Step::Pending);
        };
        let data = &msg["data"];
        match data["prompt_id"].as_str() {
            Some(id) if id == self.prompt_id => {}
            // Queue status broadcasts and other clients' prompts.
            _ => return Ok(Step::Pending),
        }
        match msg["type"].as_str().unwrap_or_default() {
            "execution_start" => Ok(Step::Progress(0.0)),
            "execution_cached" => {
                self.cached += data["nodes"].as_array().map_or(0, Vec::len);
                Ok(Step::Progress(self.progress()))
            }
            "executing" => match data["node"].as_str() {
                Some(node) => {
                    self.finish_current();
                    self.current = Some(node.to_owned());
                    Ok(Step::Progress(self.progress()))
                }
                None => {
                    self.finish_current();
                    self.collect()
                }
            },
            "progress" => {
                let (value, max) = (data["value"].as_f64().unwrap_or(0.0), data["max"].as_f64().unwrap_or(0.0));
                if max > 0.0 {
                    self.partial = (value / max).clamp(0.0, 1.0);
                }
                Ok(Step::Progress(self.progress()))
            }
            "execution_success" => {
                self.finish_current();
                self.collect()
            }
            "execution_error" => Ok(Step::Failed(
                data["exception_message"]
                    .as_str()
                    .unwrap_or("generation failed")
                    .trim()
                    .to_owned(),
            )),
            "execution_interrupted" => Ok(Step::Failed("interrupted on the backend".into())),
            _ => Ok(Step::Pending),
        }
    }

    fn cancel(&mut self) -> Result<(), DriverError> {
        let body = serde_json::to_vec(&json!({ "prompt_id": self.prompt_id })).expect("json value serializes");
        let resp = self
            .transport
            .send(&HttpRequest::post("/interrupt", "application/json", body))?;
        check_status(&resp, "interrupt")
    }
}

/// Blocking HTTP + WebSocket transport.
pub struct HttpTransport {
    base: String,
    client: reqwest::blocking::Client,
    read_timeout: Duration,
}

impl HttpTransport {
    pub fn new(base_url: &str) -> Result<Self, DriverError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| DriverError::Transport(e.to_string()))?;
        Ok(Self {
            base: base_url.trim_end_matches('/').to_owned(),
            client,
            read_timeout: Duration::from_millis(200),
        })
    }
}

impl Transport for HttpTransport {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let method = reqwest::Method::from_bytes(req.method.as_bytes()).map_err(|e| TransportError(e.to_string()))?;
        let mut builder = self.client.request(method, format!("{}{}", self.base, req.target));
        for (k, v) in &req.headers {
            builder = builder.header(k, v);
        }
        let resp = builder
            .body(req.body.clone())
            .send()
            .map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status().as_u16();
        let headers = resp
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .map(|v| vec![("content-type".to_owned(), v.to_owned())])
            .unwrap_or_default();
        let body = resp.bytes().map_err(|e| TransportError(e.to_string()))?.to_vec();
        Ok(HttpResponse { status, headers, body })
    }

    fn events(&self, client_id: &str) -> Result<Box<dyn EventStream>, TransportError> {
        let ws_base = self
            .base
            .strip_prefix("http")
            .map(|rest| format!("ws{rest}"))
            .unwrap_or_else(|| self.base.clone());
        let query = url::form_urlencoded::Serializer::new(String::new())
            .append_pair("clientId", client_id)
            .finish();
        let (mut socket, _) =
            tungstenite::connect(format!("{ws_base}/ws?{query}")).map_err(|e| TransportError(e.to_string()))?;
        if let tungstenite::stream::MaybeTlsStream::Plain(s) = socket.get_mut() {
            s.set_read_timeout(Some(self.read_timeout))
                .map_err(|e| TransportError(e.to_string()))?;
        }
        Ok(Box::new(WsEvents { socket }))
    }
}

struct WsEvents {
    socket: tungstenite::WebSocket<tungstenite::stream::MaybeTlsStream<std::net::TcpStream>>,
}

impl EventStream for WsEvents {
    fn next_frame(&mut self) -> Result<Option<String>, TransportError> {
        use tungstenite::{Error, Message};
        match self.socket.read() {
            Ok(Message::Text(t)) => Ok(Some(t.to_string())),
            Ok(Message::Close(_)) => Err(TransportError("event channel closed".into())),
            // Binary frames carry latent previews.
            Ok(_) => Ok(None),
            Err(Error::Io(e)) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {
                Ok(None)
            }
            Err(e) => Err(TransportError(e.to_string())),
        }
    }
}
