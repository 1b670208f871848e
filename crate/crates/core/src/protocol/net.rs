//! TCP transport. Connections run on their own threads; every request is
//! funnelled to one actor thread that owns the meter state.

use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::registers::MeterState;

use super::frame::{Frame, FrameParser};
use super::service::{control, handle_request};

enum Command {
    Request(Frame, Sender<Option<Frame>>),
    Snapshot(Sender<MeterState>),
}

fn mutates(control: u8) -> bool {
    !matches!(control, control::READ_DATA | control::READ_DEMAND | control::READ_EVENT)
}

fn actor(mut meter: MeterState, rx: Receiver<Command>, persist: Option<PathBuf>) -> MeterState {
    for cmd in rx {
        match cmd {
            Command::Request(frame, reply) => {
                let response = handle_request(&frame, &mut meter);
                if mutates(frame.control) {
                    if let Some(path) = &persist {
                        if let Err(e) = std::fs::write(path, meter.to_json()) {
                            log::warn!("cannot persist state to {}: {e}", path.display());
                        }
                    }
                }
                let _ = reply.send(response);
            }
            Command::Snapshot(reply) => {
                let _ = reply.send(meter.clone());
            }
        }
    }
    meter
}

fn serve_connection(mut stream: TcpStream, tx: Sender<Command>) -> io::Result<()> {
    let mut parser = FrameParser::new();
    let mut buf = [0u8; 1024];
    loop {
        let n = stream.read(&mut buf)?;
        if n == 0 {
            return Ok(());
        }
        parser.push(&buf[..n]);
        while let Some(parsed) = parser.next_frame() {
            let frame = match parsed {
                Ok(f) => f,
                Err(e) => {
                    log::debug!("dropping bytes: {e}");
                    continue;
                }
            };
            let (reply_tx, reply_rx) = mpsc::channel();
            if tx.send(Command::Request(frame, reply_tx)).is_err() {
                return Ok(());
            }
            if let Ok(Some(resp)) = reply_rx.recv() {
                let bytes = resp
                    .encode()
                    .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
                stream.write_all(&bytes)?;
            }
        }
    }
}

/// Running server; dropping it without [`Server::shutdown`] leaves the
/// threads running until the process exits.
pub struct Server {
    addr: SocketAddr,
    tx: Sender<Command>,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
    actor: Option<JoinHandle<MeterState>>,
}

impl Server {
    /// Binds `addr` and starts serving `meter`. With `persist`, the state is
    /// written there as JSON after every non-read request.
    pub fn start(addr: impl ToSocketAddrs, meter: MeterState, persist: Option<PathBuf>) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let local = listener.local_addr()?;
        let (tx, rx) = mpsc::channel();
        let actor = thread::spawn(move || actor(meter, rx, persist));
        let stop = Arc::new(AtomicBool::new(false));
        let acceptor = {
            let tx = tx.clone();
            let stop = Arc::clone(&stop);
            thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    match stream {
                        Ok(s) => {
                            let tx = tx.clone();
                            thread::spawn(move || {
                                if let Err(e) = serve_connection(s, tx) {
                                    log::debug!("connection closed: {e}");
                                }
                            });
                        }
                        Err(e) => log::warn!("accept failed: {e}"),
                    }
                }
            })
        };
        Ok(Self {
            addr: local,
            tx,
            stop,
            acceptor: Some(acceptor),
            actor: Some(actor),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Consistent copy of the current meter state.
    pub fn snapshot(&self) -> Option<MeterState> {
        let (tx, rx) = mpsc::channel();
        self.tx.send(Command::Snapshot(tx)).ok()?;
        rx.recv().ok()
    }

    /// Blocks until the accept loop ends.
    pub fn wait(mut self) {
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }

    /// Stops accepting connections and returns the final state once every
    /// open connection has closed.
    pub fn shutdown(mut self) -> Option<MeterState> {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
        let final_state = self.snapshot();
        drop(self.tx);
        if let Some(h) = self.actor.take() {
            return h.join().ok();
        }
        final_state
    }
}

/// Blocking request/response client.
pub struct Client {
    stream: TcpStream,
    parser: FrameParser,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_read_timeout(Some(Duration::from_secs(5)))?;
        Ok(Self {
            stream,
            parser: FrameParser::new(),
        })
    }

    /// Sends raw bytes without waiting for anything.
    pub fn send_raw(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.stream.write_all(bytes)
    }

    pub fn send(&mut self, frame: &Frame) -> io::Result<()> {
        let bytes = frame
            .encode()
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
        self.send_raw(&bytes)
    }

    /// Reads the next well-formed frame; returns it with its wire bytes.
    pub fn receive(&mut self) -> io::Result<(Frame, Vec<u8>)> {
        let mut buf = [0u8; 512];
        loop {
            while let Some(parsed) = self.parser.next_frame() {
                if let Ok(frame) = parsed {
                    let bytes = frame
                        .encode()
                        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
                    return Ok((frame, bytes));
                }
            }
            let n = self.stream.read(&mut buf)?;
            if n == 0 {
                return Err(io::Error::new(
                    io::ErrorKind::UnexpectedEof,
                    "server closed the connection",
                ));
            }
            self.parser.push(&buf[..n]);
        }
    }

    pub fn request(&mut self, frame: &Frame) -> io::Result<Frame> {
        self.send(frame)?;
        self.receive().map(|(f, _)| f)
    }

    pub fn close(self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}
