//! TCP transport: one request and one reply per connection.

use std::io::{BufReader, BufWriter};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::transport::read_error;
use super::{is_timeout, read_message, write_message, Message, ReadError, Service, Transport, TransportError, WireConfig, WireError};

#[derive(Debug, Clone, Copy, Default)]
pub struct SocketTransport {
    config: WireConfig,
}

impl SocketTransport {
    pub fn new(config: WireConfig) -> Self {
        SocketTransport { config }
    }
}

fn resolve(endpoint: &str) -> Result<SocketAddr, TransportError> {
    endpoint
        .to_socket_addrs()
        .ok()
        .and_then(|mut a| a.next())
        .ok_or_else(|| TransportError::ConnectionRefused { endpoint: endpoint.to_string(), reason: "cannot resolve address".into() })
}

impl Transport for SocketTransport {
    fn call(&self, endpoint: &str, request: &Message, timeout: Duration) -> Result<Message, TransportError> {
        let addr = resolve(endpoint)?;
        let stream = TcpStream::connect_timeout(&addr, timeout).map_err(|e| {
            if is_timeout(&e) {
                TransportError::Timeout { endpoint: endpoint.to_string(), timeout }
            } else {
                TransportError::ConnectionRefused { endpoint: endpoint.to_string(), reason: e.to_string() }
            }
        })?;
        let io_err = |e: ReadError| match e {
            ReadError::Io(ref io) if is_timeout(io) => TransportError::Timeout { endpoint: endpoint.to_string(), timeout },
            other => read_error(other),
        };
        stream.set_read_timeout(Some(timeout)).ok();
        stream.set_write_timeout(Some(timeout)).ok();
        stream.set_nodelay(true).ok();
        let cid = super::new_correlation_id();
        write_message(&mut BufWriter::new(&stream), request, cid, &self.config).map_err(io_err)?;
        stream.shutdown(Shutdown::Write).ok();
        let (reply, reply_cid) = read_message(&mut BufReader::new(&stream), &self.config).map_err(io_err)?;
        if reply_cid != cid && !matches!(reply, Message::Error(_)) {
            return Err(TransportError::ProtocolViolation(format!("reply correlation {reply_cid:032x} != {cid:032x}")));
        }
        Ok(reply)
    }
}

/// Accept loop serving one [`Service`] on a TCP port.
pub struct WireServer;

impl WireServer {
    /// Binds `addr` (use port 0 for an ephemeral port) and serves in a
    /// background thread until the handle is stopped or dropped.
    pub fn spawn(
        addr: &str,
        service: Arc<dyn Service>,
        config: WireConfig,
        read_timeout: Duration,
    ) -> std::io::Result<ServerHandle> {
        let listener = TcpListener::bind(addr)?;
        let local = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let stop_flag = Arc::clone(&stop);
        let join = thread::Builder::new().name(format!("wire-{local}")).spawn(move || {
            for conn in listener.incoming() {
                if stop_flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = conn else { continue };
                let service = Arc::clone(&service);
                let _ = thread::Builder::new()
                    .name("wire-conn".into())
                    .spawn(move || serve_connection(stream, service.as_ref(), &config, read_timeout));
            }
        })?;
        Ok(ServerHandle { addr: local, stop, join: Some(join) })
    }
}

fn serve_connection(stream: TcpStream, service: &dyn Service, config: &WireConfig, read_timeout: Duration) {
    stream.set_read_timeout(Some(read_timeout)).ok();
    stream.set_write_timeout(Some(read_timeout)).ok();
    stream.set_nodelay(true).ok();
    let (reply, cid) = match read_message(&mut BufReader::new(&stream), config) {
        Ok((request, cid)) => (service.handle(request), cid),
        Err(e) => {
            let message = match e {
                ReadError::Wire(w) => w.to_string(),
                ReadError::Io(io) => WireError::MalformedPayload(io.to_string()).to_string(),
            };
            (Message::error("ProtocolViolation", message), 0)
        }
    };
    let _ = write_message(&mut BufWriter::new(&stream), &reply, cid, config);
    stream.shutdown(Shutdown::Both).ok();
}

pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    join: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn endpoint(&self) -> String {
        self.addr.to_string()
    }

    pub fn stop(&mut self) {
        if let Some(join) = self.join.take() {
            self.stop.store(true, Ordering::SeqCst);
            // Wake the blocking accept.
            let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
            let _ = join.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};

    fn echo_server() -> ServerHandle {
        WireServer::spawn("127.0.0.1:0", Arc::new(|m: Message| m), WireConfig::default(), Duration::from_millis(500)).unwrap()
    }

    #[test]
    fn socket_echo() {
        let server = echo_server();
        let t = SocketTransport::new(WireConfig { max_chunk: 1000, ..WireConfig::default() });
        let m = Message::SkyQuery("q".repeat(5000));
        assert_eq!(t.call(&server.endpoint(), &m, Duration::from_secs(5)).unwrap(), m);
    }

    #[test]
    fn garbage_gets_protocol_violation() {
        let server = echo_server();
        let mut s = TcpStream::connect(server.local_addr()).unwrap();
        s.write_all(b"GET / HTTP/1.1\r\n\r\n").unwrap();
        s.shutdown(Shutdown::Write).unwrap();
        let mut buf = Vec::new();
        s.read_to_end(&mut buf).unwrap();
        let (m, _) = read_message(&mut buf.as_slice(), &WireConfig::default()).unwrap();
        match m {
            Message::Error(e) => assert_eq!(e.kind, "ProtocolViolation"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn closed_port_is_refused() {
        let addr = {
            let l = TcpListener::bind("127.0.0.1:0").unwrap();
            l.local_addr().unwrap()
        };
        let err = SocketTransport::default().call(&addr.to_string(), &Message::MetadataRequest, Duration::from_secs(2)).unwrap_err();
        assert!(matches!(err, TransportError::ConnectionRefused { .. }), "{err:?}");
    }
}
