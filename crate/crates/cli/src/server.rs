//! `serve`: the simulation paced against the wall clock, plus the HTTP/WS API.
//!
//! The loop thread owns the [`Simulation`]. Handlers only see the snapshot of
//! the last completed tick and push into the inbox, which the loop drains
//! right before its next step. Both live behind one mutex that the loop holds
//! for the whole drain-step-publish sequence, so an acknowledged command lands
//! on exactly the tick the reply names.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use atl_core::runtime::{
    ApiError, CommandAck, Disturbance, EventKind, RunConfig, Simulation, StateSnapshot, TraceWriter,
};
use atl_core::sequencer::{check_command, OperatorCommand};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};

/// Stream frame interval.
pub const STREAM_PERIOD: Duration = Duration::from_millis(100);

#[derive(Debug, Clone)]
pub struct ServeOptions {
    /// Simulated seconds per wall-clock second.
    pub rate: f64,
    pub trace: Option<PathBuf>,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self { rate: 1.0, trace: None }
    }
}

struct Shared {
    snapshot: Arc<StateSnapshot>,
    inbox: Vec<OperatorCommand>,
    disturbances: Vec<Disturbance>,
    /// The clock does not run until the first accepted command.
    started: bool,
}

#[derive(Clone)]
pub struct ApiState {
    shared: Arc<Mutex<Shared>>,
}

impl ApiState {
    fn lock(&self) -> MutexGuard<'_, Shared> {
        self.shared.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn snapshot(&self) -> Arc<StateSnapshot> {
        self.lock().snapshot.clone()
    }

    /// Interlock check against the last tick, then queue.
    pub fn submit(&self, cmd: OperatorCommand) -> Result<CommandAck, atl_core::sequencer::Refusal> {
        let mut g = self.lock();
        let snap = g.snapshot.clone();
        check_command(snap.phase, snap.manual_busy, &cmd)?;
        let ahead = (snap.pending_commands + g.inbox.len()) as u64;
        let ack = CommandAck {
            queued: true,
            command: cmd.name().to_string(),
            ticks_completed: snap.ticks_completed,
            applies_at_tick: snap.ticks_completed + ahead,
        };
        log::info!("queued {cmd:?} for tick {}", ack.applies_at_tick);
        g.inbox.push(cmd);
        g.started = true;
        Ok(ack)
    }

    pub fn inject(&self, d: Disturbance) {
        let mut g = self.lock();
        g.disturbances.push(d);
        g.started = true;
    }
}

/// Running simulation thread. Dropping it stops the thread.
pub struct Server {
    state: ApiState,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<anyhow::Result<()>>>,
}

impl Server {
    pub fn start(cfg: RunConfig, opts: ServeOptions) -> anyhow::Result<Self> {
        if !(opts.rate.is_finite() && opts.rate > 0.0) {
            bail!("rate must be a positive number, got {}", opts.rate);
        }
        let trace = opts.trace.clone().or_else(|| cfg.trace.clone());
        let writer = match &trace {
            Some(p) => Some(TraceWriter::create(p).with_context(|| format!("creating trace {}", p.display()))?),
            None => None,
        };
        let sim = Simulation::new(cfg).context("building the simulation")?;
        if let Some(addr) = sim.modbus_addr() {
            log::info!("force device on modbus tcp {addr}");
        }
        let shared = Arc::new(Mutex::new(Shared {
            snapshot: Arc::new(StateSnapshot::of(&sim)),
            inbox: Vec::new(),
            disturbances: Vec::new(),
            started: false,
        }));
        let stop = Arc::new(AtomicBool::new(false));
        let thread = {
            let shared = shared.clone();
            let stop = stop.clone();
            std::thread::Builder::new()
                .name("atl-loop".into())
                .spawn(move || sim_loop(sim, shared, stop, opts.rate, writer))?
        };
        Ok(Self {
            state: ApiState { shared },
            stop,
            thread: Some(thread),
        })
    }

    pub fn api(&self) -> ApiState {
        self.state.clone()
    }

    pub fn router(&self) -> Router {
        router(self.api())
    }

    /// Stops the loop and flushes the trace.
    pub fn shutdown(mut self) -> anyhow::Result<()> {
        self.halt()
    }

    fn halt(&mut self) -> anyhow::Result<()> {
        self.stop.store(true, Ordering::Relaxed);
        match self.thread.take() {
            Some(t) => t.join().map_err(|_| anyhow::anyhow!("simulation thread panicked"))?,
            None => Ok(()),
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Err(e) = self.halt() {
            log::error!("{e:#}");
        }
    }
}

fn sim_loop(
    mut sim: Simulation,
    shared: Arc<Mutex<Shared>>,
    stop: Arc<AtomicBool>,
    rate: f64,
    mut writer: Option<TraceWriter<BufWriter<File>>>,
) -> anyhow::Result<()> {
    let period = Duration::from_secs_f64(sim.config().control_period / rate);
    let mut clock: Option<(Instant, u64)> = None;
    while !stop.load(Ordering::Relaxed) {
        let out = {
            let mut g = shared.lock().unwrap_or_else(|e| e.into_inner());
            if !g.started {
                drop(g);
                std::thread::sleep(Duration::from_millis(5));
                continue;
            }
            for d in g.disturbances.drain(..) {
                sim.inject(d);
            }
            for c in g.inbox.drain(..) {
                sim.enqueue(c);
            }
            let out = sim.step();
            g.snapshot = Arc::new(StateSnapshot::of(&sim));
            out
        };
        for e in &out.events {
            match &e.kind {
                EventKind::Transition { from, to } => log::info!("t={:.2} {from:?} -> {to:?}", e.t),
                EventKind::Alarm { alarm } => log::warn!("t={:.2} alarm {alarm:?}", e.t),
                EventKind::Refusal { refusal } => log::warn!("t={:.2} refused {refusal:?}", e.t),
                _ => log::debug!("{e:?}"),
            }
        }
        if let Some(w) = writer.as_mut() {
            w.record(&out.record)?;
            for e in &out.events {
                w.event(e)?;
            }
        }

        let (t0, n0) = *clock.get_or_insert((Instant::now(), sim.tick_count()));
        let due = t0 + period.mul_f64((sim.tick_count() - n0) as f64);
        let now = Instant::now();
        if due > now {
            std::thread::sleep(due - now);
        }
    }
    if let Some(w) = writer.as_mut() {
        w.flush()?;
    }
    Ok(())
}

pub fn router(state: ApiState) -> Router {
    Router::new()
        .route("/state", get(get_state))
        .route("/command", post(post_command))
        .route("/inject", post(post_inject))
        .route("/stream", get(stream))
        .with_state(state)
}

fn bad_request(error: String) -> Response {
    (StatusCode::BAD_REQUEST, Json(ApiError { error })).into_response()
}

async fn get_state(State(api): State<ApiState>) -> Json<StateSnapshot> {
    Json(api.snapshot().as_ref().clone())
}

async fn post_command(State(api): State<ApiState>, body: String) -> Response {
    let cmd: OperatorCommand = match serde_json::from_str(&body) {
        Ok(c) => c,
        Err(e) => return bad_request(format!("malformed command: {e}")),
    };
    if let Err(e) = cmd.validate() {
        return bad_request(format!("{}: {e}", cmd.name()));
    }
    match api.submit(cmd) {
        Ok(ack) => (StatusCode::ACCEPTED, Json(ack)).into_response(),
        Err(refusal) => (StatusCode::CONFLICT, Json(refusal)).into_response(),
    }
}

async fn post_inject(State(api): State<ApiState>, body: String) -> Response {
    match serde_json::from_str::<Disturbance>(&body) {
        Ok(d) => {
            if let Disturbance::ZoneTemperatureStep { zone, .. } | Disturbance::HeaterFailure { zone } = d {
                if zone > 2 {
                    return bad_request("zone must be 0, 1 or 2".into());
                }
            }
            api.inject(d);
            StatusCode::ACCEPTED.into_response()
        }
        Err(e) => bad_request(format!("malformed disturbance: {e}")),
    }
}

async fn stream(State(api): State<ApiState>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| push_frames(socket, api))
}

/// One frame per period, only when a new tick has completed, so a stalled
/// loop shows up as silence on the socket.
async fn push_frames(mut socket: WebSocket, api: ApiState) {
    let mut interval = tokio::time::interval(STREAM_PERIOD);
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let mut last: Option<u64> = None;
    loop {
        tokio::select! {
            _ = interval.tick() => {
                let snap = api.snapshot();
                if last == Some(snap.ticks_completed) {
                    continue;
                }
                last = Some(snap.ticks_completed);
                let text = serde_json::to_string(snap.as_ref()).expect("snapshot serializes");
                if socket.send(Message::Text(text.into())).await.is_err() {
                    return;
                }
            }
            msg = socket.recv() => match msg {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

/// Binds `addr`, serves until Ctrl-C, then stops the loop.
pub async fn serve(cfg: RunConfig, opts: ServeOptions, addr: &str) -> anyhow::Result<()> {
    let server = Server::start(cfg, opts)?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    let local = listener.local_addr()?;
    log::info!("api on http://{local}");
    eprintln!("serving on http://{local} (GET /state, POST /command, WS /stream)");
    axum::serve(listener, server.router())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    server.shutdown()
}
