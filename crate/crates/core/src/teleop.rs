//! Teleoperation service: a WebSocket endpoint that runs the shared controller
//! on joystick-style twist commands and streams the robot state back.

use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tungstenite::{Message, WebSocket};

use crate::config::TeleopConfig;
use crate::controller::{MpcParams, SharedController, Twist};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_metrics, normalized_objective, Sample, Trajectory};
use crate::robot::{sphere_centers, step_kinematics, RobotState, N_SPHERES};
use crate::sim::{EvalConfig, Scene, SolveClock};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Baseline,
    Optimized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeAction {
    Start,
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Cmd { vx: f64, vy: f64, omega: f64 },
    Episode { action: EpisodeAction, condition: Condition },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State { t: f64, ee: [f64; 3], q: [f64; 3], spheres: Vec<[f64; 2]>, min_sd: f64, feasible: bool },
    Metrics {
        d_ob: f64,
        t_ob: f64,
        f_ps: f64,
        f_cc: f64,
        f_vs: f64,
        #[serde(rename = "t_C")]
        t_c: f64,
        objective: f64,
    },
    Error { msg: String },
    /// Sent only when a command was altered before use.
    Ack { clamped: bool, vx: f64, vy: f64, omega: f64 },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

/// Everything a session needs, shared by all connections.
pub struct TeleopContext {
    pub scene: Scene,
    pub eval: EvalConfig,
    pub baseline: MpcParams,
    pub optimized: MpcParams,
    pub teleop: TeleopConfig,
}

/// One robot and its controller, driven by client frames and ticks.
pub struct Session {
    ctx: Arc<TeleopContext>,
    clock: Box<dyn SolveClock>,
    controller: SharedController,
    condition: Condition,
    state: RobotState,
    ticks: usize,
    command: Twist,
    episode: Option<Vec<Sample>>,
}

impl Session {
    pub fn new(ctx: Arc<TeleopContext>) -> Result<Self> {
        let controller =
            SharedController::new(ctx.baseline, ctx.eval.controller.clone(), ctx.scene.geometry.clone(), ctx.scene.esdf.clone())?;
        let state = RobotState::from_joints(ctx.teleop.home, &ctx.scene.geometry);
        let clock = ctx.eval.clock.build();
        Ok(Self { ctx, clock, controller, condition: Condition::Baseline, state, ticks: 0, command: [0.0; 3], episode: None })
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn in_episode(&self) -> bool {
        self.episode.is_some()
    }

    /// Handles one client text frame; returns the frames to send back.
    pub fn handle_text(&mut self, text: &str) -> Vec<ServerMessage> {
        let msg: ClientMessage = match serde_json::from_str(text) {
            Ok(m) => m,
            Err(e) => return vec![ServerMessage::Error { msg: format!("malformed message: {e}") }],
        };
        match msg {
            ClientMessage::Cmd { vx, vy, omega } => self.set_command(vx, vy, omega),
            ClientMessage::Episode { action: EpisodeAction::Start, condition } => self.start_episode(condition),
            ClientMessage::Episode { action: EpisodeAction::End, .. } => self.end_episode(),
        }
    }

    fn set_command(&mut self, vx: f64, vy: f64, omega: f64) -> Vec<ServerMessage> {
        if ![vx, vy, omega].iter().all(|v| v.is_finite()) {
            return vec![ServerMessage::Error { msg: "command components must be finite".into() }];
        }
        let vmax = self.ctx.eval.controller.limits.ee_speed_max;
        let speed = vx.hypot(vy);
        if speed > vmax {
            let s = vmax / speed;
            self.command = [vx * s, vy * s, omega];
            return vec![ServerMessage::Ack { clamped: true, vx: vx * s, vy: vy * s, omega }];
        }
        self.command = [vx, vy, omega];
        vec![]
    }

    fn start_episode(&mut self, condition: Condition) -> Vec<ServerMessage> {
        if self.episode.is_some() {
            return vec![ServerMessage::Error { msg: "an episode is already running".into() }];
        }
        let params = match condition {
            Condition::Baseline => self.ctx.baseline,
            Condition::Optimized => self.ctx.optimized,
        };
        if let Err(e) = self.controller.set_params(params) {
            return vec![ServerMessage::Error { msg: e.to_string() }];
        }
        self.condition = condition;
        self.state = RobotState::from_joints(self.ctx.teleop.home, &self.ctx.scene.geometry);
        self.ticks = 0;
        self.command = [0.0; 3];
        self.episode = Some(Vec::new());
        vec![]
    }

    fn end_episode(&mut self) -> Vec<ServerMessage> {
        let Some(samples) = self.episode.take() else {
            return vec![ServerMessage::Error { msg: "no episode is running".into() }];
        };
        let duration = samples.len() as f64 * self.ctx.eval.controller.ts;
        let traj = Trajectory { samples, duration };
        let cfg = &self.ctx.eval;
        let scored = evaluate_metrics(&traj, &cfg.metrics)
            .and_then(|m| normalized_objective(&m, &cfg.weights, &cfg.normalization).map(|j| (m, j)));
        match scored {
            Ok((m, objective)) => vec![ServerMessage::Metrics {
                d_ob: m.d_ob,
                t_ob: m.t_ob,
                f_ps: m.f_ps,
                f_cc: m.f_cc,
                f_vs: m.f_vs,
                t_c: m.t_c,
                objective,
            }],
            Err(e) => vec![ServerMessage::Error { msg: format!("episode metrics unavailable: {e}") }],
        }
    }

    /// Drop the running episode without metrics (client went away).
    pub fn discard_episode(&mut self) {
        self.episode = None;
    }

    /// Runs one control cycle with the latest command and reports the state
    /// reached at its end.
    pub fn tick(&mut self) -> ServerMessage {
        let geom = self.ctx.scene.geometry.clone();
        let distances = self.ctx.scene.sphere_distances(&self.state.joints);
        let start = Instant::now();
        let r = self.controller.step(&self.state, self.command);
        let wall = start.elapsed().as_secs_f64();
        if let Some(ep) = self.episode.as_mut() {
            ep.push(Sample {
                t: self.ticks as f64 * self.ctx.eval.controller.ts,
                state: self.state,
                u: r.u0,
                distances,
                solve_time: self.clock.solve_time(wall, &r, self.controller.params()),
                feasible: r.feasible,
            });
        }
        let ts = self.ctx.eval.controller.ts;
        self.state = step_kinematics(&self.state, r.u0, ts, &geom);
        self.ticks += 1;
        let spheres = sphere_centers(&self.state.joints, &geom);
        let min_sd = spheres.iter().map(|c| self.ctx.scene.esdf.signed_distance(*c)).fold(f64::INFINITY, f64::min);
        debug_assert_eq!(spheres.len(), N_SPHERES);
        ServerMessage::State {
            t: self.ticks as f64 * ts,
            ee: [self.state.ee.x, self.state.ee.y, self.state.ee.theta],
            q: self.state.joints.to_array(),
            spheres,
            min_sd,
            feasible: r.feasible,
        }
    }
}

fn send(ws: &mut WebSocket<TcpStream>, msg: &ServerMessage) -> tungstenite::Result<()> {
    ws.send(Message::text(msg.to_json()))
}

fn is_timeout(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut))
}

/// Serves one client until it disconnects.
pub fn handle_connection(stream: TcpStream, ctx: Arc<TeleopContext>) -> Result<()> {
    stream.set_nodelay(true)?;
    let mut ws = tungstenite::accept(stream.try_clone()?).map_err(|e| Error::Protocol(e.to_string()))?;
    let mut session = Session::new(ctx.clone())?;
    let period = Duration::from_secs_f64(1.0 / ctx.teleop.tick_hz);
    let mut next_tick = Instant::now() + period;
    let lockstep = ctx.teleop.lockstep;
    let result = loop {
        if !lockstep {
            let now = Instant::now();
            if now >= next_tick {
                let frame = session.tick();
                if let Err(e) = send(&mut ws, &frame) {
                    break Err(e);
                }
                next_tick += period;
                if next_tick < now {
                    next_tick = now + period;
                }
                continue;
            }
            stream.set_read_timeout(Some((next_tick - now).max(Duration::from_millis(1))))?;
        }
        let msg = match ws.read() {
            Ok(m) => m,
            Err(e) if is_timeout(&e) => continue,
            Err(e) => break Err(e),
        };
        let text = match msg {
            Message::Text(t) => t.to_string(),
            Message::Close(_) => break Ok(()),
            Message::Binary(_) => {
                if let Err(e) = send(&mut ws, &ServerMessage::Error { msg: "binary frames are not supported".into() }) {
                    break Err(e);
                }
                continue;
            }
            _ => continue,
        };
        let mut out = session.handle_text(&text);
        if lockstep && out.iter().all(|m| !matches!(m, ServerMessage::Error { .. })) {
            if let Ok(ClientMessage::Cmd { .. }) = serde_json::from_str::<ClientMessage>(&text) {
                out.push(session.tick());
            }
        }
        if let Some(e) = out.iter().try_for_each(|m| send(&mut ws, m)).err() {
            break Err(e);
        }
    };
    session.discard_episode();
    match result {
        Ok(()) | Err(tungstenite::Error::ConnectionClosed) | Err(tungstenite::Error::AlreadyClosed) => Ok(()),
        Err(tungstenite::Error::Protocol(tungstenite::error::ProtocolError::ResetWithoutClosingHandshake)) => Ok(()),
        Err(e) => Err(Error::Protocol(e.to_string())),
    }
}

/// Accepts clients forever, one thread per connection.
pub fn serve(listener: TcpListener, ctx: Arc<TeleopContext>) -> Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let ctx = ctx.clone();
        std::thread::spawn(move || {
            if let Err(e) = handle_connection(stream, ctx) {
                log::warn!("teleop connection ended: {e}");
            }
        });
    }
    Ok(())
}

/// Binds `address` and serves in a background thread.
pub fn spawn(address: &str, ctx: Arc<TeleopContext>) -> Result<(SocketAddr, JoinHandle<Result<()>>)> {
    let listener = TcpListener::bind(address)?;
    let addr = listener.local_addr()?;
    Ok((addr, std::thread::spawn(move || serve(listener, ctx))))
}
