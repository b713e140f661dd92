//! Realtime websocket gateway around a live episode.
//!
//! One blocking thread owns the episode and ticks it on a fixed wall-clock
//! interval. Human messages from the controlling connection cross a queue
//! and are applied at the next tick boundary. Everything the episode emits
//! goes out on a broadcast channel; each connection task stamps its own
//! `seq` as it writes, so clients never see gaps.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc as std_mpsc;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use thiserror::Error;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::broadcast;
use tokio::task::JoinSet;
use tokio_tungstenite::tungstenite::Message;

use sharedrive::arbitration::Arbiter;
use sharedrive::scenario::Scenario;
use sharedrive::sim::episode::{
    Episode, EpisodeError, EpisodeEvent, EpisodeOptions, EpisodeResult, HumanEvent, Mode, SimConfig,
};

use crate::protocol::{encode, ActorView, ClientMessage, CommandView, EgoView, Role, ServerMessage, WorldSnapshot};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error("gateway I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("simulation thread panicked")]
    SimPanicked,
}

pub struct GatewayConfig {
    pub scenario: Scenario,
    pub sim: SimConfig,
    pub arbiter: Arbiter,
    pub mode: Mode,
    pub seed: u64,
    /// Wall-clock time per tick; zero ticks as fast as possible.
    pub tick_interval: Duration,
    /// Ticks between world snapshots.
    pub snapshot_every: u64,
    /// Holds the clock at tick 0 until a controller connects.
    pub wait_for_controller: bool,
    /// How long connections may take to flush after the episode ends.
    pub linger: Duration,
    /// Ends the episode at this tick when earlier than the scenario budget.
    pub max_ticks: Option<u64>,
}

impl GatewayConfig {
    pub fn new(scenario: Scenario, sim: SimConfig, arbiter: Arbiter, mode: Mode, seed: u64) -> Self {
        let tick_interval = Duration::from_secs_f64(sim.simulator.tick_s);
        Self {
            scenario,
            sim,
            arbiter,
            mode,
            seed,
            tick_interval,
            snapshot_every: 2,
            wait_for_controller: true,
            linger: Duration::from_secs(2),
            max_ticks: None,
        }
    }
}

type Outbound = Arc<ServerMessage>;

struct Shared {
    tx: broadcast::Sender<Outbound>,
    inputs: Mutex<std_mpsc::Sender<(HumanEvent, Option<u64>)>>,
    start: Mutex<Option<std_mpsc::Sender<()>>>,
    controller: Mutex<Option<u64>>,
    next_id: AtomicU64,
    hello: ServerMessage,
}

impl Shared {
    fn queue(&self, ev: HumanEvent, seq: Option<u64>) {
        // the episode may already be over
        let _ = self.inputs.lock().expect("input queue lock").send((ev, seq));
    }
}

pub struct Gateway {
    listener: TcpListener,
    cfg: GatewayConfig,
}

impl Gateway {
    pub async fn bind(addr: &str, cfg: GatewayConfig) -> Result<Self, GatewayError> {
        let listener = TcpListener::bind(addr).await?;
        Ok(Self { listener, cfg })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, GatewayError> {
        Ok(self.listener.local_addr()?)
    }

    /// Serves until the episode ends and returns its result with the log.
    pub async fn run(self) -> Result<EpisodeResult, GatewayError> {
        let Gateway { listener, cfg } = self;
        let (tx, _) = broadcast::channel(4096);
        let (input_tx, input_rx) = std_mpsc::channel();
        let (start_tx, start_rx) = std_mpsc::channel();
        let hello = ServerMessage::Hello {
            role: Role::Controller,
            connection_id: 0,
            scenario: cfg.scenario.name.clone(),
            mode: cfg.mode,
            arbiter: cfg.arbiter.name().to_string(),
            tick_hz: 1.0 / cfg.sim.simulator.tick_s,
            snapshot_hz: 1.0 / (cfg.sim.simulator.tick_s * cfg.snapshot_every.max(1) as f64),
            theta_u: cfg.sim.uncertainty.theta_u,
            road: cfg.scenario.road.clone(),
            gates: cfg.scenario.gates(),
        };
        let shared = Arc::new(Shared {
            tx: tx.clone(),
            inputs: Mutex::new(input_tx),
            start: Mutex::new(Some(start_tx.clone())),
            controller: Mutex::new(None),
            next_id: AtomicU64::new(1),
            hello,
        });
        if !cfg.wait_for_controller {
            let _ = start_tx.send(());
        }
        drop(start_tx);
        let linger = cfg.linger;
        let mut sim = tokio::task::spawn_blocking(move || simulate(cfg, tx, input_rx, start_rx));

        let mut conns = JoinSet::new();
        let result = loop {
            tokio::select! {
                accepted = listener.accept() => match accepted {
                    Ok((stream, peer)) => {
                        log::debug!("connection from {peer}");
                        conns.spawn(connection(stream, shared.clone()));
                    }
                    Err(e) => log::warn!("accept failed: {e}"),
                },
                done = &mut sim => break done.map_err(|_| GatewayError::SimPanicked)?,
            }
        };
        drop(listener);
        let _ = tokio::time::timeout(linger, async { while conns.join_next().await.is_some() {} }).await;
        conns.abort_all();
        result
    }
}

fn snapshot(ep: &Episode<'_>, human_input_seq: Option<u64>) -> ServerMessage {
    let ego = ep.ego();
    let (cmd, source) = ep.last_command();
    ServerMessage::WorldSnapshot(WorldSnapshot {
        tick: ep.tick(),
        time_s: ep.tick() as f64 * ep.tick_s(),
        ego: EgoView {
            position: ego.position,
            heading: ego.heading,
            speed: ego.speed,
            half_extents: ego.half_extents,
        },
        command: CommandView {
            steering: cmd.steering,
            throttle: cmd.throttle,
            brake: cmd.brake,
            source: source.to_string(),
        },
        human: ep.human_controls(),
        human_input_seq,
        actors: ep.actors().iter().map(ActorView::from).collect(),
        route_completion: ep.route_completion(),
    })
}

fn episode_message(e: EpisodeEvent) -> Option<ServerMessage> {
    match e {
        EpisodeEvent::RequestShown {
            correlation_id,
            request,
        } => Some(ServerMessage::ArbitrationRequestShown {
            correlation_id,
            tick: request.frame,
            human_plan: request.human_plan,
            human_intent: request.human_plan.describe().to_string(),
            autonomy_plan: request.autonomy_plan,
            uncertainty: request.autonomy_uncertainty.u,
        }),
        EpisodeEvent::Decision(d) => Some(ServerMessage::ArbitrationDecision {
            correlation_id: d.correlation_id,
            tick: d.tick,
            choice: d.decision.choice,
            grounded_plan: d.decision.grounded_plan,
            follow_up: d.decision.follow_up,
            rationale: d.decision.rationale,
            fallback: d.fallback,
            executed: d.executed,
            latency_ms: d.decision.latency_ms,
        }),
        EpisodeEvent::Handover { .. } => None,
    }
}

fn simulate(
    cfg: GatewayConfig,
    tx: broadcast::Sender<Outbound>,
    inputs: std_mpsc::Receiver<(HumanEvent, Option<u64>)>,
    start: std_mpsc::Receiver<()>,
) -> Result<EpisodeResult, GatewayError> {
    let opts = EpisodeOptions {
        live: true,
        horizon_end: cfg.max_ticks,
        ..EpisodeOptions::new(cfg.mode, cfg.seed)
    };
    let mut ep = Episode::new(&cfg.scenario, &cfg.sim, Some(&cfg.arbiter), &opts)?;
    // no receivers is fine: nobody may be watching yet
    let send = |m: ServerMessage| {
        let _ = tx.send(Arc::new(m));
    };
    // every start sender dropping without a signal also starts the clock
    let _ = start.recv();
    let mut last_seq = None;
    send(snapshot(&ep, last_seq));
    let every = cfg.snapshot_every.max(1);
    let mut next = Instant::now();
    let mut batch = Vec::new();
    while !ep.is_finished() {
        if !cfg.tick_interval.is_zero() {
            next += cfg.tick_interval;
            if let Some(wait) = next.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
        batch.clear();
        while let Ok((ev, seq)) = inputs.try_recv() {
            batch.push(ev);
            last_seq = seq.or(last_seq);
        }
        ep.step(&batch, &mut |e| {
            if let Some(m) = episode_message(e) {
                send(m);
            }
        });
        if let Some(s) = ep.last_score() {
            send(ServerMessage::UncertaintyUpdate {
                tick: s.frame,
                u: s.u,
                intra_raw: s.intra_raw,
                inter_raw: s.inter_raw,
                triggered: s.triggered,
            });
        }
        if ep.tick() % every == 0 || ep.is_finished() {
            send(snapshot(&ep, last_seq));
        }
    }
    let result = ep.finish();
    send(ServerMessage::EpisodeEnd {
        ticks: result.ticks,
        reason: result.end_reason,
        collided: result.collided,
        collision_with: result.collision.as_ref().map(|c| c.actor_id.clone()),
        route_completion: result.route_completion,
        interventions: result.interventions,
        first_trigger: result.first_trigger,
    });
    Ok(result)
}

async fn connection(stream: TcpStream, shared: Arc<Shared>) {
    let ws = match tokio_tungstenite::accept_async(stream).await {
        Ok(ws) => ws,
        Err(e) => {
            log::warn!("websocket handshake failed: {e}");
            return;
        }
    };
    let (mut sink, mut source) = ws.split();
    let mut rx = shared.tx.subscribe();
    let id = shared.next_id.fetch_add(1, Ordering::Relaxed);
    let role = {
        let mut c = shared.controller.lock().expect("controller lock");
        if c.is_none() {
            *c = Some(id);
            Role::Controller
        } else {
            Role::Observer
        }
    };
    log::info!("connection {id} joined as {role:?}");
    let mut seq = 0u64;
    let mut hello = shared.hello.clone();
    if let ServerMessage::Hello {
        role: r, connection_id, ..
    } = &mut hello
    {
        *r = role;
        *connection_id = id;
    }
    macro_rules! send {
        ($msg:expr) => {{
            seq += 1;
            sink.send(Message::text(encode(seq, $msg))).await.is_ok()
        }};
    }
    if send!(&hello) && role == Role::Controller {
        if let Some(start) = shared.start.lock().expect("start lock").take() {
            let _ = start.send(());
        }
    }
    loop {
        tokio::select! {
            out = rx.recv() => match out {
                Ok(msg) => {
                    if !send!(&msg) {
                        break;
                    }
                    if matches!(*msg, ServerMessage::EpisodeEnd { .. }) {
                        let _ = sink.close().await;
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    let note = ServerMessage::Error { message: format!("connection fell behind; {n} frames skipped") };
                    if !send!(&note) {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Closed) => break,
            },
            incoming = source.next() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    let reply = match ClientMessage::parse(text.as_str()) {
                        Err(message) => Some(message),
                        Ok(_) if role == Role::Observer => Some("observers cannot send controls".to_string()),
                        Ok(msg) => {
                            shared.queue(human_event(msg), msg.seq());
                            None
                        }
                    };
                    if let Some(message) = reply {
                        if !send!(&ServerMessage::Error { message }) {
                            break;
                        }
                    }
                }
                Some(Ok(Message::Binary(_))) => {
                    if !send!(&ServerMessage::Error { message: "binary frames are not supported".into() }) {
                        break;
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
    if role == Role::Controller {
        *shared.controller.lock().expect("controller lock") = None;
        shared.queue(HumanEvent::Disengage, None);
        log::info!("controller {id} left; human disengaged");
    }
}

fn human_event(msg: ClientMessage) -> HumanEvent {
    match msg {
        ClientMessage::HumanInput {
            steering,
            throttle,
            brake,
            ..
        } => HumanEvent::HumanInput {
            controls: sharedrive::HumanControls {
                steering,
                throttle,
                brake,
            },
        },
        ClientMessage::Intervention { plan, controls, .. } => HumanEvent::Intervention { plan, controls },
    }
}
