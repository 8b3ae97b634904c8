//! Point-to-point message delivery between cluster nodes. Delivery is
//! FIFO per sender/receiver pair; there is no ordering across senders.

use std::io::{BufReader, BufWriter, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};
use parking_lot::Mutex;

use super::wire::Frame;
use crate::error::{Error, Result};

#[derive(Debug)]
pub enum Event {
    Frame(usize, Frame),
    /// The connection from this node ended.
    Closed(usize),
}

pub trait Transport: Send + Sync {
    fn id(&self) -> usize;
    fn nodes(&self) -> usize;
    fn send(&self, to: usize, frame: &Frame) -> Result<()>;
    /// `None` on timeout.
    fn recv(&self, timeout: Duration) -> Result<Option<Event>>;
}

/// In-process transport over channels.
pub struct ChannelTransport {
    id: usize,
    inbox: Receiver<Event>,
    peers: Vec<Sender<Event>>,
}

/// A fully connected set of `n` channel transports.
pub fn channel_mesh(n: usize) -> Vec<ChannelTransport> {
    let (txs, rxs): (Vec<_>, Vec<_>) = (0..n).map(|_| unbounded()).unzip();
    rxs.into_iter()
        .enumerate()
        .map(|(id, inbox)| ChannelTransport {
            id,
            inbox,
            peers: txs.clone(),
        })
        .collect()
}

impl Transport for ChannelTransport {
    fn id(&self) -> usize {
        self.id
    }

    fn nodes(&self) -> usize {
        self.peers.len()
    }

    fn send(&self, to: usize, frame: &Frame) -> Result<()> {
        let tx = self
            .peers
            .get(to)
            .ok_or_else(|| Error::Transport(format!("no node {to}")))?;
        tx.send(Event::Frame(self.id, frame.clone()))
            .map_err(|_| Error::Transport(format!("node {to} is gone")))
    }

    fn recv(&self, timeout: Duration) -> Result<Option<Event>> {
        match self.inbox.recv_timeout(timeout) {
            Ok(e) => Ok(Some(e)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(Error::Transport("inbox closed".into())),
        }
    }
}

impl Drop for ChannelTransport {
    fn drop(&mut self) {
        for (i, tx) in self.peers.iter().enumerate() {
            if i != self.id {
                let _ = tx.send(Event::Closed(self.id));
            }
        }
    }
}

/// TCP transport. Each node listens on its own address and opens one
/// outbound connection per peer on first send, announcing itself with a
/// `u32` node id.
pub struct TcpTransport {
    id: usize,
    addrs: Vec<SocketAddr>,
    inbox: Receiver<Event>,
    out: Vec<Mutex<Option<BufWriter<TcpStream>>>>,
    streams: Arc<Mutex<Vec<TcpStream>>>,
    stop: Arc<AtomicBool>,
    connect_timeout: Duration,
}

impl TcpTransport {
    /// Takes over a bound listener; `addrs[id]` must be its address.
    pub fn new(id: usize, listener: TcpListener, addrs: Vec<SocketAddr>) -> Result<TcpTransport> {
        let (tx, inbox) = unbounded();
        let streams = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        {
            let streams = streams.clone();
            let stop = stop.clone();
            std::thread::spawn(move || accept_loop(listener, tx, streams, stop));
        }
        Ok(TcpTransport {
            id,
            out: addrs.iter().map(|_| Mutex::new(None)).collect(),
            addrs,
            inbox,
            streams,
            stop,
            connect_timeout: Duration::from_secs(10),
        })
    }

    pub fn bind(id: usize, addrs: Vec<SocketAddr>) -> Result<TcpTransport> {
        let listener = TcpListener::bind(addrs[id])?;
        Self::new(id, listener, addrs)
    }

    fn connect(&self, to: usize) -> Result<BufWriter<TcpStream>> {
        let deadline = Instant::now() + self.connect_timeout;
        loop {
            match TcpStream::connect(self.addrs[to]) {
                Ok(s) => {
                    s.set_nodelay(true)?;
                    self.streams.lock().push(s.try_clone()?);
                    let mut w = BufWriter::new(s);
                    w.write_all(&(self.id as u32).to_le_bytes())?;
                    return Ok(w);
                }
                Err(e) if Instant::now() >= deadline => {
                    return Err(Error::Transport(format!(
                        "connect to node {to} at {}: {e}",
                        self.addrs[to]
                    )))
                }
                Err(_) => std::thread::sleep(Duration::from_millis(20)),
            }
        }
    }
}

fn accept_loop(listener: TcpListener, tx: Sender<Event>, streams: Arc<Mutex<Vec<TcpStream>>>, stop: Arc<AtomicBool>) {
    for conn in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            return;
        }
        let Ok(conn) = conn else { continue };
        let Ok(clone) = conn.try_clone() else { continue };
        streams.lock().push(clone);
        let tx = tx.clone();
        let stop = stop.clone();
        std::thread::spawn(move || {
            let mut r = BufReader::new(conn);
            let mut hello = [0u8; 4];
            if r.read_exact(&mut hello).is_err() {
                return;
            }
            let from = u32::from_le_bytes(hello) as usize;
            loop {
                match Frame::read_from(&mut r) {
                    Ok(Some(f)) => {
                        if tx.send(Event::Frame(from, f)).is_err() {
                            return;
                        }
                    }
                    _ => {
                        if !stop.load(Ordering::SeqCst) {
                            let _ = tx.send(Event::Closed(from));
                        }
                        return;
                    }
                }
            }
        });
    }
}

impl Transport for TcpTransport {
    fn id(&self) -> usize {
        self.id
    }

    fn nodes(&self) -> usize {
        self.addrs.len()
    }

    fn send(&self, to: usize, frame: &Frame) -> Result<()> {
        let slot = self
            .out
            .get(to)
            .ok_or_else(|| Error::Transport(format!("no node {to}")))?;
        let mut slot = slot.lock();
        if slot.is_none() {
            *slot = Some(self.connect(to)?);
        }
        let w = slot.as_mut().unwrap();
        let r = frame.write_to(w).and_then(|_| w.flush());
        if let Err(e) = r {
            *slot = None;
            return Err(Error::Transport(format!("send to node {to}: {e}")));
        }
        Ok(())
    }

    fn recv(&self, timeout: Duration) -> Result<Option<Event>> {
        match self.inbox.recv_timeout(timeout) {
            Ok(e) => Ok(Some(e)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(Error::Transport("listener stopped".into())),
        }
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for s in self.streams.lock().drain(..) {
            let _ = s.shutdown(Shutdown::Both);
        }
        // Wake the accept loop so it can observe the stop flag.
        let _ = TcpStream::connect_timeout(&self.addrs[self.id], Duration::from_millis(200));
    }
}
