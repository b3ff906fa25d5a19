//! The live session: one thread owns the simulation, one thread accepts
//! connections, one thread per client relays frames and commands.

use std::collections::VecDeque;
use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use pursuit_core::{Point, Simulation};
use tungstenite::{Message, WebSocket};

use crate::protocol::{parse_command, Command, Frame, Reply};
use crate::ServiceError;

const POLL: Duration = Duration::from_millis(5);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BridgeOptions {
    /// Upper bound on frames per second sent to clients.
    pub max_frame_rate: f64,
    /// Pace ticks at the control rate; otherwise step as fast as possible.
    pub realtime: bool,
}

impl Default for BridgeOptions {
    fn default() -> Self {
        Self {
            max_frame_rate: 30.0,
            realtime: true,
        }
    }
}

#[derive(Default)]
struct Inbox {
    /// Latest velocity; overwritten by each new command.
    velocity: Option<[f64; 2]>,
    controls: VecDeque<Command>,
}

struct Shared {
    inbox: Mutex<Inbox>,
    clients: Mutex<Vec<Sender<Arc<str>>>>,
    last_seq: AtomicU64,
    stop: Arc<AtomicBool>,
}

/// A bound listener waiting to serve a simulation.
pub struct Bridge {
    listener: TcpListener,
    stop: Arc<AtomicBool>,
}

impl Bridge {
    pub fn bind(addr: impl ToSocketAddrs) -> Result<Self, ServiceError> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        Ok(Self {
            listener,
            stop: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, ServiceError> {
        Ok(self.listener.local_addr()?)
    }

    /// Setting the flag ends [`Bridge::run`] within one tick.
    pub fn stop_handle(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }

    /// Step `sim` until stopped, broadcasting frames and applying commands.
    pub fn run(self, mut sim: Simulation, opts: BridgeOptions) -> Result<(), ServiceError> {
        let shared = Arc::new(Shared {
            inbox: Mutex::new(Inbox::default()),
            clients: Mutex::new(Vec::new()),
            last_seq: AtomicU64::new(0),
            stop: self.stop.clone(),
        });
        let acceptor = {
            let shared = shared.clone();
            let listener = self.listener;
            thread::spawn(move || accept_loop(listener, shared))
        };

        let result = sim_loop(&mut sim, &shared, opts);
        shared.stop.store(true, Ordering::SeqCst);
        let handlers = acceptor.join().unwrap_or_default();
        for h in handlers {
            let _ = h.join();
        }
        result
    }
}

fn sim_loop(sim: &mut Simulation, shared: &Shared, opts: BridgeOptions) -> Result<(), ServiceError> {
    let rate = sim.config().control_rate;
    let period = Duration::from_secs_f64(1.0 / rate);
    let wire_every = (rate / opts.max_frame_rate).ceil().max(1.0) as u64;
    let started = Instant::now();
    let mut paused = false;
    let mut seq = 0u64;

    for k in 1u64.. {
        if shared.stop.load(Ordering::SeqCst) {
            break;
        }
        let (velocity, controls) = {
            let mut inbox = shared.inbox.lock().expect("inbox lock");
            (inbox.velocity, std::mem::take(&mut inbox.controls))
        };
        for c in controls {
            match c {
                Command::Pause => paused = true,
                Command::Resume => paused = false,
                Command::Reset => {
                    sim.reset()?;
                    paused = false;
                }
                Command::SetMode(m) => sim.set_mode(m),
                Command::EvaderVelocity(_) => {}
            }
        }
        if let Some(v) = velocity {
            sim.set_evader_command(Point::new(v[0], v[1]));
        }
        if !paused {
            sim.step()?;
        }

        if k % wire_every == 0 {
            if let Some(frame) = Frame::latest(sim, seq + 1) {
                seq += 1;
                broadcast(shared, frame.to_json().into());
                shared.last_seq.store(seq, Ordering::SeqCst);
            }
        }

        if opts.realtime {
            let due = started + period * k as u32;
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
        }
    }
    Ok(())
}

fn broadcast(shared: &Shared, text: Arc<str>) {
    let mut clients = shared.clients.lock().expect("client list lock");
    clients.retain(|tx| tx.send(text.clone()).is_ok());
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) -> Vec<JoinHandle<()>> {
    let mut handlers = Vec::new();
    while !shared.stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => match handshake(stream) {
                Ok(ws) => {
                    log::info!("client {peer} connected");
                    let (tx, rx) = mpsc::channel();
                    shared.clients.lock().expect("client list lock").push(tx);
                    let shared = shared.clone();
                    handlers.push(thread::spawn(move || {
                        client_loop(ws, rx, &shared);
                        log::info!("client {peer} disconnected");
                    }));
                }
                Err(e) => log::warn!("handshake with {peer} failed: {e}"),
            },
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(POLL);
            }
        }
    }
    handlers
}

fn handshake(stream: TcpStream) -> Result<WebSocket<TcpStream>, ServiceError> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let ws = tungstenite::accept(stream).map_err(|e| ServiceError::Handshake(e.to_string()))?;
    // short reads let one thread interleave receiving and sending
    ws.get_ref().set_read_timeout(Some(POLL))?;
    Ok(ws)
}

fn client_loop(mut ws: WebSocket<TcpStream>, frames: Receiver<Arc<str>>, shared: &Shared) {
    while !shared.stop.load(Ordering::SeqCst) {
        match ws.read() {
            Ok(Message::Text(text)) => {
                let reply = match parse_command(&text) {
                    Ok(cmd) => {
                        let mut inbox = shared.inbox.lock().expect("inbox lock");
                        match cmd {
                            Command::EvaderVelocity(v) => inbox.velocity = Some(v),
                            other => inbox.controls.push_back(other),
                        }
                        Reply::ack(&cmd, shared.last_seq.load(Ordering::SeqCst))
                    }
                    Err(e) => Reply::error(&e),
                };
                if ws.send(Message::text(reply.to_json())).is_err() {
                    return;
                }
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(_) => return,
        }
        loop {
            match frames.try_recv() {
                Ok(text) => {
                    if ws.send(Message::text(&*text)).is_err() {
                        return;
                    }
                }
                Err(mpsc::TryRecvError::Empty) => break,
                Err(mpsc::TryRecvError::Disconnected) => return,
            }
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
}
