//! Network front end for a [`LiveRunner`].
//!
//! Two listeners:
//!
//! * a websocket endpoint speaking JSON [`ConsoleMessage`]s, which carries
//!   operator commands in and `trial_state`, `target` and `telemetry`
//!   messages out;
//! * a raw TCP port that streams the binary telemetry frames of every stream
//!   back to back, for recorders and external tools.
//!
//! Commands from all clients go through one queue into the runner thread, so
//! they are applied strictly in arrival order.

use std::io::{self, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use tungstenite::Message;

use crate::telemetry::{encode_frame_into, StreamId, TelemetryBus};

use super::live::{telemetry_message, ConsoleMessage, LiveRunner};

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub ws_addr: SocketAddr,
    /// Raw binary frame port; `None` disables it.
    pub frames_addr: Option<SocketAddr>,
    /// Simulation seconds per wall-clock second.
    pub speed: f64,
    /// Runner tick.
    pub tick: Duration,
}

impl ServeOptions {
    pub fn local(port: u16) -> Self {
        ServeOptions {
            ws_addr: SocketAddr::from(([127, 0, 0, 1], port)),
            frames_addr: Some(SocketAddr::from(([127, 0, 0, 1], if port == 0 { 0 } else { port + 1 }))),
            speed: 1.0,
            tick: Duration::from_millis(10),
        }
    }
}

struct Request {
    text: String,
    reply: mpsc::Sender<String>,
}

struct Shared {
    bus: TelemetryBus,
    commands: Mutex<mpsc::Sender<Request>>,
    broadcast: Mutex<Vec<mpsc::Sender<String>>>,
    shutdown: AtomicBool,
}

impl Shared {
    fn stopping(&self) -> bool {
        self.shutdown.load(Ordering::Relaxed)
    }
}

/// A running server; dropping it without [`Server::shutdown`] leaves the
/// threads running until the process exits.
pub struct Server {
    ws_addr: SocketAddr,
    frames_addr: Option<SocketAddr>,
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
}

impl Server {
    pub fn start(runner: LiveRunner, opts: ServeOptions) -> io::Result<Server> {
        let ws = TcpListener::bind(opts.ws_addr)?;
        ws.set_nonblocking(true)?;
        let frames = opts.frames_addr.map(TcpListener::bind).transpose()?;
        if let Some(f) = &frames {
            f.set_nonblocking(true)?;
        }
        let (tx, rx) = mpsc::channel();
        let shared = Arc::new(Shared {
            bus: runner.bus().clone(),
            commands: Mutex::new(tx),
            broadcast: Mutex::new(Vec::new()),
            shutdown: AtomicBool::new(false),
        });
        let mut threads = Vec::new();
        let s = shared.clone();
        threads.push(std::thread::spawn(move || run_runner(runner, rx, s, opts.speed, opts.tick)));
        let ws_addr = ws.local_addr()?;
        let s = shared.clone();
        threads.push(std::thread::spawn(move || accept_loop(ws, s, serve_websocket)));
        let frames_addr = match frames {
            Some(f) => {
                let a = f.local_addr()?;
                let s = shared.clone();
                threads.push(std::thread::spawn(move || accept_loop(f, s, serve_frames)));
                Some(a)
            }
            None => None,
        };
        Ok(Server { ws_addr, frames_addr, shared, threads })
    }

    pub fn ws_addr(&self) -> SocketAddr {
        self.ws_addr
    }

    pub fn frames_addr(&self) -> Option<SocketAddr> {
        self.frames_addr
    }

    /// Blocks until [`Server::shutdown`] is called from elsewhere or the
    /// runner thread exits.
    pub fn wait(self) {
        for t in self.threads {
            let _ = t.join();
        }
    }

    pub fn shutdown(self) {
        self.shared.shutdown.store(true, Ordering::Relaxed);
        self.shared.bus.close();
        self.wait();
    }
}

fn run_runner(mut runner: LiveRunner, rx: mpsc::Receiver<Request>, shared: Arc<Shared>, speed: f64, tick: Duration) {
    let mut last = Instant::now();
    while !shared.stopping() {
        match rx.recv_timeout(tick) {
            Ok(req) => {
                let reply = runner.handle_text(&req.text).to_json();
                let _ = req.reply.send(reply);
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => break,
        }
        let now = Instant::now();
        let dt = (now - last).as_secs_f64() * speed;
        last = now;
        let mut out = match runner.advance(dt) {
            Ok(()) => Vec::new(),
            Err(e) => vec![ConsoleMessage::TrialState(runner.state(None, Some(e.to_string())))],
        };
        out.splice(0..0, runner.drain_outbox());
        if !out.is_empty() {
            let text: Vec<String> = out.iter().map(ConsoleMessage::to_json).collect();
            let mut subs = shared.broadcast.lock().unwrap();
            subs.retain(|s| text.iter().all(|t| s.send(t.clone()).is_ok()));
        }
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>, handler: fn(TcpStream, Arc<Shared>)) {
    let mut clients = Vec::new();
    while !shared.stopping() {
        match listener.accept() {
            Ok((stream, _)) => {
                let s = shared.clone();
                clients.push(std::thread::spawn(move || handler(stream, s)));
            }
            Err(_) => std::thread::sleep(Duration::from_millis(10)),
        }
    }
    for c in clients {
        let _ = c.join();
    }
}

fn is_timeout(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut))
}

fn serve_websocket(stream: TcpStream, shared: Arc<Shared>) {
    if stream.set_nonblocking(false).is_err() {
        return;
    }
    let _ = stream.set_nodelay(true);
    let Ok(mut ws) = tungstenite::accept(stream) else { return };
    if ws.get_ref().set_read_timeout(Some(Duration::from_millis(5))).is_err() {
        return;
    }
    let sub = shared.bus.subscribe_filtered(
        8192,
        Some(vec![StreamId::Imu, StreamId::Pressure, StreamId::Ctrl, StreamId::Event]),
    );
    let (btx, brx) = mpsc::channel();
    shared.broadcast.lock().unwrap().push(btx);
    let commands = shared.commands.lock().unwrap().clone();
    while !shared.stopping() {
        match ws.read() {
            Ok(Message::Text(text)) => {
                let (rtx, rrx) = mpsc::channel();
                if commands.send(Request { text, reply: rtx }).is_err() {
                    break;
                }
                match rrx.recv_timeout(Duration::from_secs(5)) {
                    Ok(reply) => {
                        if ws.send(Message::Text(reply)).is_err() {
                            break;
                        }
                    }
                    Err(_) => break,
                }
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(e) if is_timeout(&e) => {}
            Err(_) => break,
        }
        let mut pending = false;
        for f in sub.drain() {
            pending = true;
            if ws.write(Message::Text(telemetry_message(&f).to_json())).is_err() {
                return;
            }
        }
        for text in brx.try_iter() {
            pending = true;
            if ws.write(Message::Text(text)).is_err() {
                return;
            }
        }
        if pending && ws.flush().is_err() {
            return;
        }
    }
    let _ = ws.close(None);
}

fn serve_frames(mut stream: TcpStream, shared: Arc<Shared>) {
    if stream.set_nonblocking(false).is_err() {
        return;
    }
    let sub = shared.bus.subscribe(65536);
    let mut buf = Vec::new();
    while !shared.stopping() {
        buf.clear();
        for f in sub.drain() {
            if encode_frame_into(&f, &mut buf).is_err() {
                return;
            }
        }
        if buf.is_empty() {
            std::thread::sleep(Duration::from_millis(5));
        } else if stream.write_all(&buf).is_err() {
            return;
        }
    }
}
