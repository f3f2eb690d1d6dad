use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc;
use std::time::Duration;

use super::message::{decode_body, encode_message, frame_len, Message, LEN_PREFIX};
use crate::error::{Error, Result};

/// Ordered, reliable, whole-message delivery between two endpoints.
pub trait Channel: Send {
    fn send(&mut self, msg: &Message) -> Result<()>;
    fn recv(&mut self) -> Result<Message>;
}

impl<C: Channel + ?Sized> Channel for Box<C> {
    fn send(&mut self, msg: &Message) -> Result<()> {
        (**self).send(msg)
    }

    fn recv(&mut self) -> Result<Message> {
        (**self).recv()
    }
}

/// One end of an in-process link. Messages cross the link as encoded frames,
/// so this exercises the same codec as the TCP transport.
pub struct InProcessChannel {
    tx: mpsc::Sender<Vec<u8>>,
    rx: mpsc::Receiver<Vec<u8>>,
}

pub fn in_process_pair() -> (InProcessChannel, InProcessChannel) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    (
        InProcessChannel { tx: a_tx, rx: a_rx },
        InProcessChannel { tx: b_tx, rx: b_rx },
    )
}

impl Channel for InProcessChannel {
    fn send(&mut self, msg: &Message) -> Result<()> {
        let frame = encode_message(msg)?;
        self.tx
            .send(frame)
            .map_err(|_| Error::Channel("in-process peer has hung up".into()))
    }

    fn recv(&mut self) -> Result<Message> {
        let frame = self
            .rx
            .recv()
            .map_err(|_| Error::Channel("in-process peer has hung up".into()))?;
        super::message::decode_message(&frame)
    }
}

/// Length-prefixed frames over a TCP stream.
pub struct TcpChannel {
    stream: TcpStream,
}

fn io_err(what: &str, e: std::io::Error) -> Error {
    Error::Channel(format!("{what}: {e}"))
}

impl TcpChannel {
    pub fn new(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true).map_err(|e| io_err("set_nodelay", e))?;
        Ok(Self { stream })
    }

    /// Connect to a serving endpoint, retrying until `timeout` elapses.
    pub fn connect(addr: impl ToSocketAddrs, timeout: Duration) -> Result<Self> {
        let addrs: Vec<SocketAddr> = addr
            .to_socket_addrs()
            .map_err(|e| io_err("resolve address", e))?
            .collect();
        let deadline = std::time::Instant::now() + timeout;
        loop {
            match TcpStream::connect(&addrs[..]) {
                Ok(stream) => return Self::new(stream),
                Err(e) if std::time::Instant::now() >= deadline => return Err(io_err("connect", e)),
                Err(_) => std::thread::sleep(Duration::from_millis(20)),
            }
        }
    }

    pub fn peer_addr(&self) -> Option<SocketAddr> {
        self.stream.peer_addr().ok()
    }
}

impl Channel for TcpChannel {
    fn send(&mut self, msg: &Message) -> Result<()> {
        let frame = encode_message(msg)?;
        self.stream.write_all(&frame).map_err(|e| io_err("send", e))
    }

    fn recv(&mut self) -> Result<Message> {
        let mut prefix = [0u8; LEN_PREFIX];
        self.stream.read_exact(&mut prefix).map_err(|e| io_err("recv length prefix", e))?;
        let len = frame_len(prefix)?;
        let mut body = vec![0u8; len];
        self.stream.read_exact(&mut body).map_err(|e| io_err("recv frame body", e))?;
        decode_body(&body, LEN_PREFIX)
    }
}

/// Listening side of the TCP transport.
pub struct TcpServer {
    listener: TcpListener,
}

impl TcpServer {
    pub fn bind(addr: impl ToSocketAddrs) -> Result<Self> {
        let listener = TcpListener::bind(addr).map_err(|e| io_err("bind", e))?;
        Ok(Self { listener })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        self.listener.local_addr().map_err(|e| io_err("local_addr", e))
    }

    pub fn accept(&self) -> Result<TcpChannel> {
        let (stream, _) = self.listener.accept().map_err(|e| io_err("accept", e))?;
        TcpChannel::new(stream)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn in_process_round_trip_and_hangup() {
        let (mut a, mut b) = in_process_pair();
        a.send(&Message::RoundComplete { round: 3 }).unwrap();
        assert_eq!(b.recv().unwrap(), Message::RoundComplete { round: 3 });
        drop(a);
        assert!(matches!(b.recv(), Err(Error::Channel(_))));
    }

    #[test]
    fn tcp_round_trip_and_hangup() {
        let server = TcpServer::bind("127.0.0.1:0").unwrap();
        let addr = server.local_addr().unwrap();
        let client = std::thread::spawn(move || {
            let mut c = TcpChannel::connect(addr, Duration::from_secs(5)).unwrap();
            c.send(&Message::RoundComplete { round: 9 }).unwrap();
            c.recv().unwrap()
        });
        let mut s = server.accept().unwrap();
        assert_eq!(s.recv().unwrap(), Message::RoundComplete { round: 9 });
        s.send(&Message::RoundComplete { round: 10 }).unwrap();
        assert_eq!(client.join().unwrap(), Message::RoundComplete { round: 10 });
        assert!(matches!(s.recv(), Err(Error::Channel(_))));
    }
}
