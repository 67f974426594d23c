//! Frame delivery between parties.
//!
//! Both transports carry opaque byte frames. [`Bus`] sits on top, encodes
//! messages, counts bytes per role and hashes the transcript.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::{Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::field::PrimeField;

use super::message::{Message, Party};
use super::ProtocolError;

pub trait Transport: Send {
    fn send(&mut self, from: Party, to: Party, frame: Vec<u8>) -> Result<(), ProtocolError>;
    /// Next frame addressed to `at`, in arrival order.
    fn recv(&mut self, at: Party) -> Result<Vec<u8>, ProtocolError>;
}

/// Per-party FIFO queues in memory.
#[derive(Debug, Default)]
pub struct InProcTransport {
    queues: HashMap<Party, VecDeque<Vec<u8>>>,
}

impl InProcTransport {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Transport for InProcTransport {
    fn send(&mut self, _from: Party, to: Party, frame: Vec<u8>) -> Result<(), ProtocolError> {
        self.queues.entry(to).or_default().push_back(frame);
        Ok(())
    }

    fn recv(&mut self, at: Party) -> Result<Vec<u8>, ProtocolError> {
        self.queues
            .get_mut(&at)
            .and_then(VecDeque::pop_front)
            .ok_or(ProtocolError::NothingToReceive(at))
    }
}

/// Loopback TCP: every party holds one connection to a relay that forwards
/// length-prefixed frames to their destination.
///
/// Party to relay: `to: u32 | len: u32 | frame`. Relay to party:
/// `len: u32 | frame`. Each connection opens with the party's `u32` id.
pub struct TcpTransport {
    streams: HashMap<Party, TcpStream>,
    inboxes: HashMap<Party, Receiver<Vec<u8>>>,
    timeout: Duration,
    threads: Vec<JoinHandle<()>>,
}

const MAX_FRAME: usize = 1 << 30;

fn read_u32(s: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    s.read_exact(&mut b)?;
    Ok(u32::from_be_bytes(b))
}

fn read_frame(s: &mut impl Read) -> std::io::Result<Vec<u8>> {
    let len = read_u32(s)? as usize;
    if len > MAX_FRAME {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "frame too large"));
    }
    let mut buf = vec![0u8; len];
    s.read_exact(&mut buf)?;
    Ok(buf)
}

impl TcpTransport {
    /// Starts the relay on an ephemeral loopback port and connects `parties`.
    pub fn start(parties: &[Party]) -> Result<Self, ProtocolError> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let routes: Arc<Mutex<HashMap<u32, TcpStream>>> = Arc::default();
        let (ready_tx, ready_rx) = mpsc::channel::<()>();
        let expected = parties.len();
        let mut threads = Vec::new();

        let accept_routes = Arc::clone(&routes);
        threads.push(thread::spawn(move || {
            let mut relays = Vec::new();
            for _ in 0..expected {
                let Ok((mut conn, _)) = listener.accept() else { break };
                let Ok(id) = read_u32(&mut conn) else { continue };
                let Ok(writer) = conn.try_clone() else { continue };
                accept_routes.lock().expect("route table").insert(id, writer);
                let routes = Arc::clone(&accept_routes);
                relays.push(thread::spawn(move || relay(conn, routes)));
                let _ = ready_tx.send(());
            }
            for r in relays {
                let _ = r.join();
            }
        }));

        let mut streams = HashMap::new();
        let mut inboxes = HashMap::new();
        for &p in parties {
            let mut s = TcpStream::connect(addr)?;
            s.set_nodelay(true)?;
            s.write_all(&p.to_wire().to_be_bytes())?;
            let mut reader = s.try_clone()?;
            let (tx, rx) = mpsc::channel();
            threads.push(thread::spawn(move || {
                while let Ok(frame) = read_frame(&mut reader) {
                    if tx.send(frame).is_err() {
                        break;
                    }
                }
            }));
            streams.insert(p, s);
            inboxes.insert(p, rx);
        }
        for _ in 0..expected {
            ready_rx
                .recv_timeout(Duration::from_secs(30))
                .map_err(|_| ProtocolError::Transport("relay did not register every party".into()))?;
        }
        Ok(TcpTransport {
            streams,
            inboxes,
            timeout: Duration::from_secs(120),
            threads,
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

fn relay(mut conn: TcpStream, routes: Arc<Mutex<HashMap<u32, TcpStream>>>) {
    loop {
        let Ok(to) = read_u32(&mut conn) else { return };
        let Ok(frame) = read_frame(&mut conn) else { return };
        let dest = routes.lock().expect("route table").get(&to).and_then(|s| s.try_clone().ok());
        let Some(mut dest) = dest else {
            log::warn!("relay: dropping frame for unknown party {to}");
            continue;
        };
        let mut out = Vec::with_capacity(4 + frame.len());
        out.extend_from_slice(&(frame.len() as u32).to_be_bytes());
        out.extend_from_slice(&frame);
        if dest.write_all(&out).is_err() {
            return;
        }
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, from: Party, to: Party, frame: Vec<u8>) -> Result<(), ProtocolError> {
        let s = self.streams.get_mut(&from).ok_or(ProtocolError::UnknownParty(from))?;
        let mut out = Vec::with_capacity(8 + frame.len());
        out.extend_from_slice(&to.to_wire().to_be_bytes());
        out.extend_from_slice(&(frame.len() as u32).to_be_bytes());
        out.extend_from_slice(&frame);
        s.write_all(&out)?;
        Ok(())
    }

    fn recv(&mut self, at: Party) -> Result<Vec<u8>, ProtocolError> {
        let rx = self.inboxes.get(&at).ok_or(ProtocolError::UnknownParty(at))?;
        rx.recv_timeout(self.timeout).map_err(|e| match e {
            RecvTimeoutError::Timeout => ProtocolError::Transport(format!("timed out waiting for a frame to {at}")),
            RecvTimeoutError::Disconnected => ProtocolError::Transport(format!("connection of {at} closed")),
        })
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        for s in self.streams.values() {
            let _ = s.shutdown(Shutdown::Both);
        }
        self.streams.clear();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

/// Bytes on the wire, split by the role of the endpoint.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteCounts {
    pub server_sent: u64,
    pub server_received: u64,
    pub clients_sent: u64,
    pub clients_received: u64,
}

impl ByteCounts {
    pub fn total(&self) -> u64 {
        // every frame is sent once and received once
        self.server_sent + self.clients_sent
    }

    pub fn since(&self, earlier: &ByteCounts) -> ByteCounts {
        ByteCounts {
            server_sent: self.server_sent - earlier.server_sent,
            server_received: self.server_received - earlier.server_received,
            clients_sent: self.clients_sent - earlier.clients_sent,
            clients_received: self.clients_received - earlier.clients_received,
        }
    }
}

/// Typed messaging over a [`Transport`].
pub struct Bus<F: PrimeField> {
    transport: Box<dyn Transport>,
    bytes: ByteCounts,
    transcript: Sha256,
    /// `(receiver is server, tag) -> frames delivered`.
    delivered: BTreeMap<(bool, u8), u64>,
    _field: std::marker::PhantomData<F>,
}

impl<F: PrimeField> Bus<F> {
    pub fn new(transport: Box<dyn Transport>) -> Self {
        Bus {
            transport,
            bytes: ByteCounts::default(),
            transcript: Sha256::new(),
            delivered: BTreeMap::new(),
            _field: std::marker::PhantomData,
        }
    }

    pub fn send(&mut self, to: Party, msg: &Message<F>) -> Result<(), ProtocolError> {
        let frame = msg.encode();
        let n = frame.len() as u64;
        if msg.sender.is_server() {
            self.bytes.server_sent += n;
        } else {
            self.bytes.clients_sent += n;
        }
        self.transcript.update(to.to_wire().to_be_bytes());
        self.transcript.update((frame.len() as u32).to_be_bytes());
        self.transcript.update(&frame);
        self.transport.send(msg.sender, to, frame)
    }

    pub fn recv(&mut self, at: Party) -> Result<Message<F>, ProtocolError> {
        let frame = self.transport.recv(at)?;
        let n = frame.len() as u64;
        if at.is_server() {
            self.bytes.server_received += n;
        } else {
            self.bytes.clients_received += n;
        }
        let msg = Message::decode(&frame)?;
        *self.delivered.entry((at.is_server(), msg.payload.tag())).or_default() += 1;
        Ok(msg)
    }

    pub fn bytes(&self) -> ByteCounts {
        self.bytes
    }

    /// SHA-256 of every frame sent so far, with its destination, in order.
    pub fn transcript_digest(&self) -> [u8; 32] {
        self.transcript.clone().finalize().into()
    }

    /// Frames of message type `tag` delivered to the server (`true`) or to
    /// clients (`false`).
    pub fn delivered(&self, to_server: bool, tag: u8) -> u64 {
        self.delivered.get(&(to_server, tag)).copied().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Fr;
    use crate::protocol::message::Payload;

    fn exercise(transport: Box<dyn Transport>) -> (ByteCounts, [u8; 32]) {
        let mut bus = Bus::<Fr>::new(transport);
        for i in 0..3u32 {
            let m = Message::new(0, Party::Client(i), Payload::HashCommit(Fr::from_u64(i as u64)));
            bus.send(Party::Server, &m).unwrap();
        }
        let mut got: Vec<u32> = (0..3)
            .map(|_| bus.recv(Party::Server).unwrap().sender.to_wire())
            .collect();
        got.sort();
        assert_eq!(got, vec![0, 1, 2]);
        let big = Message::<Fr>::new(1, Party::Server, Payload::InitialModel(vec![0.25; 50_000]));
        for i in 0..3 {
            bus.send(Party::Client(i), &big).unwrap();
        }
        for i in 0..3 {
            assert_eq!(bus.recv(Party::Client(i)).unwrap(), big);
        }
        assert_eq!(bus.delivered(true, 5), 3);
        assert_eq!(bus.delivered(false, 6), 3);
        assert_eq!(bus.delivered(true, 2), 0);
        (bus.bytes(), bus.transcript_digest())
    }

    #[test]
    fn transports_agree_on_bytes_and_transcript() {
        let parties = [Party::Server, Party::Client(0), Party::Client(1), Party::Client(2)];
        let a = exercise(Box::new(InProcTransport::new()));
        let b = exercise(Box::new(TcpTransport::start(&parties).unwrap()));
        assert_eq!(a, b);
        let frame = Message::<Fr>::new(0, Party::Client(0), Payload::HashCommit(Fr::ZERO)).encode();
        assert_eq!(a.0.clients_sent, 3 * frame.len() as u64);
        assert_eq!(a.0.server_received, a.0.clients_sent);
        assert_eq!(a.0.clients_received, a.0.server_sent);
    }

    #[test]
    fn empty_inbox() {
        let mut t = InProcTransport::new();
        assert!(matches!(t.recv(Party::Server), Err(ProtocolError::NothingToReceive(Party::Server))));
        let mut tcp = TcpTransport::start(&[Party::Server])
            .unwrap()
            .with_timeout(Duration::from_millis(50));
        assert!(tcp.recv(Party::Server).is_err());
        assert!(tcp.recv(Party::Client(9)).is_err());
    }
}
