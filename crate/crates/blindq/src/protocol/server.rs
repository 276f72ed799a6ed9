//! The server role: a job handler over the wire codec, an in-process
//! transport for tests and demos, and a threaded TCP front end.
//!
//! The server validates each submitted circuit against the closed gate set
//! (enforced by the codec), applies resource guards, runs the sampler, and
//! replies with counts. It keeps an append-only audit log of every received
//! instruction batch — the raw submit lines — for the blindness audit.

use crate::protocol::wire::{decode, encode, WireError, WireMessage};
use crate::qsim::run_shots;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};

/// Upper bounds a desk-scale server is willing to execute.
pub const MAX_SHOTS: u64 = 1 << 26;
pub const MAX_INSTRUCTIONS: usize = 100_000;

#[derive(Default)]
pub struct Server {
    audit: Mutex<Vec<String>>,
}

impl Server {
    pub fn new() -> Server {
        Server::default()
    }

    /// Snapshot of the audit log: one raw submit line per job received.
    pub fn audit_log(&self) -> Vec<String> {
        self.audit.lock().expect("audit lock").clone()
    }

    /// Full request/reply cycle on encoded lines; malformed input yields an
    /// error reply, never a dropped connection.
    pub fn handle_line(&self, line: &str) -> String {
        let reply = match decode(line) {
            Ok(msg) => self.handle(msg, line),
            Err(e) => WireMessage::Error {
                job_id: 0,
                message: e.to_string(),
            },
        };
        encode(&reply)
    }

    fn handle(&self, msg: WireMessage, raw_line: &str) -> WireMessage {
        let WireMessage::Submit {
            job_id,
            circuit,
            shots,
            seed,
        } = msg
        else {
            return WireMessage::Error {
                job_id: msg.job_id(),
                message: "expected a submit message".to_string(),
            };
        };
        self.audit
            .lock()
            .expect("audit lock")
            .push(raw_line.trim_end().to_string());
        if shots == 0 || shots > MAX_SHOTS {
            return WireMessage::Error {
                job_id,
                message: format!("shots must be in 1..={MAX_SHOTS}"),
            };
        }
        if circuit.instructions.len() > MAX_INSTRUCTIONS {
            return WireMessage::Error {
                job_id,
                message: format!("circuit exceeds {MAX_INSTRUCTIONS} instructions"),
            };
        }
        match run_shots(&circuit, shots, seed) {
            Ok(counts) => WireMessage::Result { job_id, counts },
            Err(e) => WireMessage::Error {
                job_id,
                message: e.to_string(),
            },
        }
    }
}

/// A request/reply channel to a server.
pub trait Transport {
    fn request(&mut self, msg: &WireMessage) -> Result<WireMessage, WireError>;
}

/// Runs the server in the same process, still passing every message through
/// the byte codec so the wire discipline is identical to the socket path.
pub struct InProcTransport {
    pub server: Arc<Server>,
}

impl InProcTransport {
    pub fn new() -> InProcTransport {
        InProcTransport {
            server: Arc::new(Server::new()),
        }
    }
}

impl Default for InProcTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl Transport for InProcTransport {
    fn request(&mut self, msg: &WireMessage) -> Result<WireMessage, WireError> {
        let reply = self.server.handle_line(&encode(msg));
        decode(&reply)
    }
}

pub struct TcpTransport {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl TcpTransport {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<TcpTransport, WireError> {
        let stream = TcpStream::connect(addr)?;
        let reader = BufReader::new(stream.try_clone()?);
        Ok(TcpTransport {
            reader,
            writer: stream,
        })
    }
}

impl Transport for TcpTransport {
    fn request(&mut self, msg: &WireMessage) -> Result<WireMessage, WireError> {
        let mut line = encode(msg);
        line.push('\n');
        self.writer.write_all(line.as_bytes())?;
        self.writer.flush()?;
        let mut reply = String::new();
        if self.reader.read_line(&mut reply)? == 0 {
            return Err(WireError::Closed);
        }
        decode(&reply)
    }
}

/// Accept loop: one thread per connection, one reply line per request line.
/// Returns only if the listener fails.
pub fn serve(listener: TcpListener, server: Arc<Server>) -> std::io::Result<()> {
    loop {
        let (stream, _) = listener.accept()?;
        let server = Arc::clone(&server);
        std::thread::spawn(move || {
            let _ = serve_connection(stream, &server);
        });
    }
}

fn serve_connection(stream: TcpStream, server: &Server) -> std::io::Result<()> {
    let mut writer = stream.try_clone()?;
    let reader = BufReader::new(stream);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut reply = server.handle_line(&line);
        reply.push('\n');
        writer.write_all(reply.as_bytes())?;
        writer.flush()?;
    }
    Ok(())
}
