//! Job queue between compiled workflow graphs and a generation backend.
//!
//! Jobs move `queued → running(progress) → {done, failed, cancelled}`.
//! Exactly one dispatcher drains the FIFO queue, keeping at most
//! `max_inflight` jobs on the backend. The dispatcher is either driven by
//! hand with [`Gateway::pump`] (deterministic tests) or by a background
//! thread started with [`Gateway::spawn_dispatcher`].
//!
//! Backends sit behind the [`Driver`] trait: [`mock::MockDriver`] renders
//! deterministic placeholder outputs in-process, [`remote::RemoteDriver`]
//! talks to a ComfyUI-compatible server.

pub mod mock;
pub mod remote;
pub mod wire;

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::easel::graph::{GraphError, WorkflowGraph};
use crate::ids::{JobId, RunId, Timestamp};
use crate::media::AssetKind;

/// A file the backend must have before it can run a graph (an input image,
/// control map or mask), under the name the graph refers to it by.
#[derive(Debug, Clone, PartialEq)]
pub struct Upload {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// One file (or text) produced by a job's output node.
#[derive(Debug, Clone, PartialEq)]
pub struct JobOutput {
    pub node: String,
    pub kind: AssetKind,
    pub filename: String,
    pub bytes: Vec<u8>,
}

/// Lightweight description of an output, carried in the `done` status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRef {
    pub node: String,
    pub kind: AssetKind,
    pub filename: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running { progress: f64 },
    Done { outputs: Vec<OutputRef> },
    Failed { reason: String },
    Cancelled,
}

impl JobStatus {
    pub fn is_terminal(&self) -> bool {
        matches!(self, JobStatus::Done { .. } | JobStatus::Failed { .. } | JobStatus::Cancelled)
    }

    pub fn name(&self) -> &'static str {
        match self {
            JobStatus::Queued => "queued",
            JobStatus::Running { .. } => "running",
            JobStatus::Done { .. } => "done",
            JobStatus::Failed { .. } => "failed",
            JobStatus::Cancelled => "cancelled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationJob {
    pub job_id: JobId,
    pub run_id: RunId,
    pub graph_hash: String,
    pub status: JobStatus,
    pub submitted_at: Timestamp,
    pub finished_at: Option<Timestamp>,
}

/// One entry of a job's event stream. `seq` counts events per job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobEvent {
    pub job_id: JobId,
    pub run_id: RunId,
    pub seq: u64,
    pub at: Timestamp,
    pub status: JobStatus,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid graph: {0}")]
    InvalidGraph(#[from] GraphError),
    #[error("unknown job {0}")]
    UnknownJob(JobId),
    #[error("job {job} is {state}, not done")]
    NotDone { job: JobId, state: &'static str },
    #[error("job {job} is already {state}")]
    NotCancellable { job: JobId, state: &'static str },
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DriverError {
    /// The backend could not be reached; retried once.
    #[error("transport: {0}")]
    Transport(String),
    /// The backend answered with something we do not understand.
    #[error("protocol: {0}")]
    Protocol(String),
    /// The backend refused the graph; not retried.
    #[error("rejected: {0}")]
    Rejected(String),
}

/// Result of advancing a running job once.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    /// Nothing new happened.
    Pending,
    Progress(f64),
    Done(Vec<JobOutput>),
    Failed(String),
}

/// A generation backend.
pub trait Driver: Send + Sync {
    fn name(&self) -> &'static str;
    /// Uploads inputs and starts `graph`.
    fn start(&self, job: &JobId, graph: &WorkflowGraph, uploads: &[Upload]) -> Result<Box<dyn Execution>, DriverError>;
}

/// A graph running on a backend.
pub trait Execution: Send {
    fn poll(&mut self) -> Result<Step, DriverError>;
    fn cancel(&mut self) -> Result<(), DriverError>;
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub max_inflight: usize,
    /// How long an idle background dispatcher sleeps between checks.
    pub idle_wait: Duration,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            max_inflight: 1,
            idle_wait: Duration::from_millis(20),
        }
    }
}

struct JobEntry {
    job: GenerationJob,
    graph: WorkflowGraph,
    uploads: Vec<Upload>,
    outputs: Vec<JobOutput>,
    events: Vec<JobEvent>,
    watchers: Vec<Sender<JobEvent>>,
    cancel_requested: bool,
}

#[derive(Default)]
struct State {
    jobs: BTreeMap<JobId, JobEntry>,
    queue: VecDeque<JobId>,
    inflight: Vec<JobId>,
    issued: u64,
    subscribers: Vec<Sender<JobEvent>>,
}

struct Running {
    exec: Box<dyn Execution>,
    transport_failures: u32,
}

struct Inner {
    driver: Arc<dyn Driver>,
    clock: Arc<dyn Clock>,
    config: GatewayConfig,
    state: Mutex<State>,
    wake: Condvar,
    /// Owned by whoever is pumping; the lock also serializes pumps.
    executions: Mutex<BTreeMap<JobId, Running>>,
    dispatcher: Mutex<Option<JoinHandle<()>>>,
    stop: AtomicBool,
}

/// Cheaply cloneable handle to one job queue.
#[derive(Clone)]
pub struct Gateway {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("driver", &self.inner.driver.name())
            .field("max_inflight", &self.inner.config.max_inflight)
            .finish_non_exhaustive()
    }
}

/// Attempts allowed per call that fails with a transport error.
const TRANSPORT_ATTEMPTS: u32 = 2;

impl State {
    /// Moves a job to `status`, enforcing the state machine: terminal
    /// states are final and progress never decreases.
    fn transition(&mut self, id: &JobId, status: JobStatus, at: Timestamp) {
        let Some(entry) = self.jobs.get_mut(id) else {
            return;
        };
        let current = &entry.job.status;
        if current.is_terminal() {
            return;
        }
        let status = match (current, status) {
            (JobStatus::Running { progress: old }, JobStatus::Running { progress }) => {
                let p = progress.clamp(0.0, 1.0).max(*old);
                if p == *old {
                    return;
                }
                JobStatus::Running { progress: p }
            }
            (JobStatus::Queued, JobStatus::Running { progress }) => JobStatus::Running {
                progress: progress.clamp(0.0, 1.0),
            },
            (_, s) => s,
        };
        if status.is_terminal() {
            entry.job.finished_at = Some(at);
        }
        entry.job.status = status.clone();
        let event = JobEvent {
            job_id: id.clone(),
            run_id: entry.job.run_id.clone(),
            seq: entry.events.len() as u64,
            at,
            status,
        };
        entry.events.push(event.clone());
        entry.watchers.retain(|w| w.send(event.clone()).is_ok());
        if event.status.is_terminal() {
            // Dropping the senders ends every watch stream.
            entry.watchers.clear();
            self.inflight.retain(|j| j != id);
            self.queue.retain(|j| j != id);
        }
        self.subscribers.retain(|w| w.send(event.clone()).is_ok());
    }
}

impl Gateway {
    pub fn new(driver: Arc<dyn Driver>, clock: Arc<dyn Clock>, config: GatewayConfig) -> Self {
        Self {
            inner: Arc::new(Inner {
                driver,
                clock,
                config: GatewayConfig {
                    max_inflight: config.max_inflight.max(1),
                    ..config
                },
                state: Mutex::new(State::default()),
                wake: Condvar::new(),
                executions: Mutex::new(BTreeMap::new()),
                dispatcher: Mutex::new(None),
                stop: AtomicBool::new(false),
            }),
        }
    }

    pub fn driver_name(&self) -> &'static str {
        self.inner.driver.name()
    }

    pub fn max_inflight(&self) -> usize {
        self.inner.config.max_inflight
    }

    fn now(&self) -> Timestamp {
        self.inner.clock.now()
    }

    /// Queues `graph` for `run`. Only schema-valid graphs are accepted.
    pub fn submit(&self, graph: WorkflowGraph, run_id: RunId, uploads: Vec<Upload>) -> Result<JobId, GatewayError> {
        graph.validate()?;
        let at = self.now();
        let mut st = self.inner.state.lock();
        st.issued += 1;
        let job_id = JobId::from_seq(st.issued);
        let job = GenerationJob {
            job_id: job_id.clone(),
            run_id: run_id.clone(),
            graph_hash: graph.hash(),
            status: JobStatus::Queued,
            submitted_at: at,
            finished_at: None,
        };
        let event = JobEvent {
            job_id: job_id.clone(),
            run_id,
            seq: 0,
            at,
            status: JobStatus::Queued,
        };
        st.jobs.insert(
            job_id.clone(),
            JobEntry {
                job,
                graph,
                uploads,
                outputs: Vec::new(),
                events: vec![event.clone()],
                watchers: Vec::new(),
                cancel_requested: false,
            },
        );
        st.queue.push_back(job_id.clone());
        st.subscribers.retain(|w| w.send(event.clone()).is_ok());
        drop(st);
        self.inner.wake.notify_all();
        Ok(job_id)
    }

    pub fn job(&self, id: &JobId) -> Result<GenerationJob, GatewayError> {
        self.inner
            .state
            .lock()
            .jobs
            .get(id)
            .map(|e| e.job.clone())
            .ok_or_else(|| GatewayError::UnknownJob(id.clone()))
    }

    pub fn jobs(&self) -> Vec<GenerationJob> {
        self.inner.state.lock().jobs.values().map(|e| e.job.clone()).collect()
    }

    /// Jobs waiting for a backend slot, in dispatch order.
    pub fn queued(&self) -> Vec<JobId> {
        self.inner.state.lock().queue.iter().cloned().collect()
    }

    /// Jobs currently on the backend.
    pub fn inflight(&self) -> Vec<JobId> {
        self.inner.state.lock().inflight.clone()
    }

    /// Everything that happened to a job so far, then live events until it
    /// reaches a terminal status, at which point the stream ends.
    pub fn watch(&self, id: &JobId) -> Result<Watch, GatewayError> {
        let mut st = self.inner.state.lock();
        let entry = st.jobs.get_mut(id).ok_or_else(|| GatewayError::UnknownJob(id.clone()))?;
        let (tx, rx) = mpsc::channel();
        for e in &entry.events {
            let _ = tx.send(e.clone());
        }
        if !entry.job.status.is_terminal() {
            entry.watchers.push(tx);
        }
        Ok(Watch { rx })
    }

    /// Live events of every job submitted from now on (and later events of
    /// existing jobs).
    pub fn subscribe(&self) -> Receiver<JobEvent> {
        let (tx, rx) = mpsc::channel();
        self.inner.state.lock().subscribers.push(tx);
        rx
    }

    /// Outputs of a finished job.
    pub fn fetch_outputs(&self, id: &JobId) -> Result<Vec<JobOutput>, GatewayError> {
        let st = self.inner.state.lock();
        let entry = st.jobs.get(id).ok_or_else(|| GatewayError::UnknownJob(id.clone()))?;
        match entry.job.status {
            JobStatus::Done { .. } => Ok(entry.outputs.clone()),
            ref s => Err(GatewayError::NotDone {
                job: id.clone(),
                state: s.name(),
            }),
        }
    }

    /// Cancels a queued job immediately; a running job is cancelled on the
    /// next dispatcher tick. Cancelling twice is harmless; cancelling a
    /// finished job is an error.
    pub fn cancel(&self, id: &JobId) -> Result<JobStatus, GatewayError> {
        let at = self.now();
        let mut st = self.inner.state.lock();
        let entry = st.jobs.get_mut(id).ok_or_else(|| GatewayError::UnknownJob(id.clone()))?;
        match &entry.job.status {
            JobStatus::Cancelled => Ok(JobStatus::Cancelled),
            s @ (JobStatus::Done { .. } | JobStatus::Failed { .. }) => Err(GatewayError::NotCancellable {
                job: id.clone(),
                state: s.name(),
            }),
            JobStatus::Running { .. } => {
                entry.cancel_requested = true;
                let status = entry.job.status.clone();
                drop(st);
                self.inner.wake.notify_all();
                Ok(status)
            }
            JobStatus::Queued => {
                if st.inflight.contains(id) {
                    // Being started right now; the dispatcher finishes the job.
                    st.jobs.get_mut(id).expect("present").cancel_requested = true;
                    return Ok(JobStatus::Queued);
                }
                st.transition(id, JobStatus::Cancelled, at);
                Ok(JobStatus::Cancelled)
            }
        }
    }

    /// One dispatcher tick: honour cancellations, start queued jobs while
    /// slots are free, then poll every running job once. Returns whether
    /// any job is still queued or running.
    pub fn pump(&self) -> bool {
        let mut executions = self.inner.executions.lock();
        self.cancel_requested(&mut executions);
        self.dispatch(&mut executions);
        let ids: Vec<JobId> = executions.keys().cloned().collect();
        for id in ids {
            let Some(running) = executions.get_mut(&id) else { continue };
            let step = running.exec.poll();
            let at = self.now();
            let mut st = self.inner.state.lock();
            match step {
                Ok(Step::Pending) => continue,
                Ok(Step::Progress(p)) => {
                    running.transport_failures = 0;
                    st.transition(&id, JobStatus::Running { progress: p }, at);
                    continue;
                }
                Ok(Step::Done(outputs)) => {
                    if outputs.is_empty() {
                        st.transition(
                            &id,
                            JobStatus::Failed {
                                reason: "backend reported no outputs".into(),
                            },
                            at,
                        );
                    } else {
                        let refs = outputs
                            .iter()
                            .map(|o| OutputRef {
                                node: o.node.clone(),
                                kind: o.kind,
                                filename: o.filename.clone(),
                            })
                            .collect();
                        if let Some(e) = st.jobs.get_mut(&id) {
                            e.outputs = outputs;
                        }
                        st.transition(&id, JobStatus::Running { progress: 1.0 }, at);
                        st.transition(&id, JobStatus::Done { outputs: refs }, at);
                    }
                }
                Ok(Step::Failed(reason)) => st.transition(&id, JobStatus::Failed { reason }, at),
                Err(DriverError::Transport(e)) => {
                    running.transport_failures += 1;
                    if running.transport_failures < TRANSPORT_ATTEMPTS {
                        log::warn!("job {id}: transport error, retrying: {e}");
                        continue;
                    }
                    st.transition(
                        &id,
                        JobStatus::Failed {
                            reason: format!("backend unavailable: {e}"),
                        },
                        at,
                    );
                }
                Err(e) => st.transition(&id, JobStatus::Failed { reason: e.to_string() }, at),
            }
            drop(st);
            executions.remove(&id);
        }
        let st = self.inner.state.lock();
        !(st.queue.is_empty() && st.inflight.is_empty())
    }

    fn cancel_requested(&self, executions: &mut BTreeMap<JobId, Running>) {
        let wanted: Vec<JobId> = {
            let st = self.inner.state.lock();
            executions
                .keys()
                .filter(|id| st.jobs.get(*id).is_some_and(|e| e.cancel_requested))
                .cloned()
                .collect()
        };
        for id in wanted {
            if let Some(mut r) = executions.remove(&id) {
                if let Err(e) = r.exec.cancel() {
                    log::warn!("job {id}: backend cancel failed: {e}");
                }
            }
            let at = self.now();
            self.inner.state.lock().transition(&id, JobStatus::Cancelled, at);
        }
    }

    fn dispatch(&self, executions: &mut BTreeMap<JobId, Running>) {
        loop {
            let (id, graph, uploads) = {
                let mut st = self.inner.state.lock();
                if st.inflight.len() >= self.inner.config.max_inflight {
                    return;
                }
                let Some(id) = st.queue.pop_front() else { return };
                st.inflight.push(id.clone());
                let e = &st.jobs[&id];
                (id, e.graph.clone(), e.uploads.clone())
            };
            let mut attempt = 0;
            let started = loop {
                attempt += 1;
                match self.inner.driver.start(&id, &graph, &uploads) {
                    Err(DriverError::Transport(e)) if attempt < TRANSPORT_ATTEMPTS => {
                        log::warn!("job {id}: transport error on submit, retrying: {e}");
                    }
                    other => break other,
                }
            };
            let at = self.now();
            let mut st = self.inner.state.lock();
            match started {
                Ok(mut exec) => {
                    if st.jobs[&id].cancel_requested {
                        drop(st);
                        let _ = exec.cancel();
                        self.inner.state.lock().transition(&id, JobStatus::Cancelled, at);
                        continue;
                    }
                    st.transition(&id, JobStatus::Running { progress: 0.0 }, at);
                    executions.insert(
                        id,
                        Running {
                            exec,
                            transport_failures: 0,
                        },
                    );
                }
                Err(DriverError::Transport(e)) => st.transition(
                    &id,
                    JobStatus::Failed {
                        reason: format!("backend unavailable: {e}"),
                    },
                    at,
                ),
                Err(e) => st.transition(&id, JobStatus::Failed { reason: e.to_string() }, at),
            }
        }
    }

    /// Pumps until nothing is queued or running. Only for gateways without
    /// a background dispatcher.
    pub fn run_until_idle(&self) {
        while self.pump() {}
    }

    /// Blocks until `id` reaches a terminal status and returns it. Drives
    /// the queue itself when no background dispatcher is running.
    pub fn wait(&self, id: &JobId) -> Result<JobStatus, GatewayError> {
        if self.inner.dispatcher.lock().is_none() {
            loop {
                let status = self.job(id)?.status;
                if status.is_terminal() {
                    return Ok(status);
                }
                self.pump();
            }
        }
        let watch = self.watch(id)?;
        let mut last = None;
        for e in watch {
            last = Some(e.status);
        }
        Ok(last.unwrap_or(self.job(id)?.status))
    }

    /// Starts the single background dispatcher thread (idempotent).
    pub fn spawn_dispatcher(&self) {
        let mut slot = self.inner.dispatcher.lock();
        if slot.is_some() {
            return;
        }
        self.inner.stop.store(false, Ordering::SeqCst);
        let inner = Arc::downgrade(&self.inner);
        *slot = Some(
            std::thread::Builder::new()
                .name("gateway-dispatcher".into())
                .spawn(move || loop {
                    let Some(inner) = inner.upgrade() else { return };
                    if inner.stop.load(Ordering::SeqCst) {
                        return;
                    }
                    let gw = Gateway { inner };
                    if !gw.pump() {
                        let mut st = gw.inner.state.lock();
                        if st.queue.is_empty() && !gw.inner.stop.load(Ordering::SeqCst) {
                            gw.inner.wake.wait_for(&mut st, gw.inner.config.idle_wait);
                        }
                    }
                })
                .expect("spawn dispatcher thread"),
        );
    }

    /// Stops the background dispatcher and waits for it to exit.
    pub fn shutdown(&self) {
        self.inner.stop.store(true, Ordering::SeqCst);
        self.inner.wake.notify_all();
        let handle = self.inner.dispatcher.lock().take();
        if let Some(h) = handle {
            let _ = h.join();
        }
    }
}

/// A job's event stream; iteration ends after the terminal event.
pub struct Watch {
    rx: Receiver<JobEvent>,
}

impl Watch {
    /// Next event, waiting at most `timeout`. `None` on timeout or end.
    pub fn next_timeout(&self, timeout: Duration) -> Option<JobEvent> {
        self.rx.recv_timeout(timeout).ok()
    }
}

impl Iterator for Watch {
    type Item = JobEvent;

    fn next(&mut self) -> Option<JobEvent> {
        self.rx.recv().ok()
    }
}
