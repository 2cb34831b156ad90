//! Client and server for the delegated-rotation protocol over a newline-delimited JSON stream.
//!
//! A session uses two byte streams. The classical channel carries [`Envelope`] lines and is
//! the only thing either party logs. The second stream emulates the photon's physical
//! back-action on the server's matter qubit: it feeds the server's simulator directly and
//! never reaches the server's protocol logic or transcript. A classical simulation of
//! steering needs the measurement angle where the qubit is simulated, so this line is the
//! stand-in for nature rather than a message the server reads.
//!
//! Loss and dark counts are sampled by the client. Teleportation outcomes and final
//! measurements are sampled by the server. Each side draws from its own seeded stream, so a
//! session is reproduced exactly by [`simulate_in_process`].

use crate::blindgate::{sample_detection, AngleSet, BGateOutcome, BGateProtocol, BGateSession, Detection, ErrorModel, Event, Phase};
use crate::circuitgen::{CircuitIR, CliffordOp, GateEntry, GateKind};
use crate::error::{Error, Result};
use crate::pauliframe::{MeasurementKind, PauliFrame};
use crate::rng;
use crate::statevec::{Gate, StateVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::time::{Duration, Instant};

pub const TIMEOUT_ENV: &str = "BQCSIM_TIMEOUT_MS";
pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;
/// Largest register the server simulates.
pub const MAX_QUBITS: usize = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Message {
    Hello { c: u32, n_qubits: usize },
    /// Server emitted a photon for the current delegated rotation.
    Photon { gate_session: u64 },
    Click { success: bool, s: bool },
    TeleportResult { m: bool },
    /// Revealed operations, then Z measurements, then optionally one delegated rotation.
    LocalOps {
        ops: Vec<GateEntry>,
        #[serde(default)]
        measure: Vec<usize>,
        #[serde(default)]
        blind: Option<usize>,
    },
    Syndrome { record: Vec<bool> },
    FrameSync { digest: String },
    Done { transcript: String },
    Error { code: String, message: String },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "HELLO",
            Message::Photon { .. } => "PHOTON",
            Message::Click { .. } => "CLICK",
            Message::TeleportResult { .. } => "TELEPORT_RESULT",
            Message::LocalOps { .. } => "LOCAL_OPS",
            Message::Syndrome { .. } => "SYNDROME",
            Message::FrameSync { .. } => "FRAME_SYNC",
            Message::Done { .. } => "DONE",
            Message::Error { .. } => "ERROR",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub seq: u64,
    pub session: u64,
    #[serde(flatten)]
    pub msg: Message,
}

/// Physical effect of one detected photon on the server's qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct Pulse {
    qubit: usize,
    phi: u64,
    dark: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ClientToServer,
    ServerToClient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub t_us: u64,
    pub dir: Direction,
    pub line: String,
}

/// Program run by a client: a circuit from |0...0> followed by Z measurements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetProgram {
    pub circuit: CircuitIR,
    #[serde(default)]
    pub measure: Vec<usize>,
}

impl NetProgram {
    pub fn validate(&self) -> Result<()> {
        self.circuit.validate()?;
        if self.circuit.n_qubits > MAX_QUBITS {
            return Err(Error::capacity(format!("{} qubits > {MAX_QUBITS}", self.circuit.n_qubits)));
        }
        for g in &self.circuit.gates {
            if g.op == Some(CliffordOp::Uc) {
                return Err(Error::invalid("revealed entangling bricks are not supported over the wire"));
            }
        }
        if self.measure.iter().any(|&q| q >= self.circuit.n_qubits) {
            return Err(Error::invalid("measured qubit out of range"));
        }
        Ok(())
    }

    /// Random program of `n_gates` entries on `n` qubits mixing Cliffords, CZ/CX and
    /// delegated rotations, measuring every qubit.
    pub fn random(n: usize, n_gates: usize, c: u32, seed: u64) -> Result<Self> {
        let mut r = rng::stream(seed, &[0x6e70]);
        let size = AngleSet::new(c)?.size();
        let mut ir = CircuitIR::new("net_random", n, c);
        for _ in 0..n_gates {
            let q = r.gen_range(0..n);
            let roll = r.gen_range(0..10);
            ir.gates.push(match roll {
                0..=3 => GateEntry::btheta(q, r.gen_range(0..size)),
                4 | 5 => GateEntry::clifford(CliffordOp::H, q),
                6 => GateEntry::clifford([CliffordOp::S, CliffordOp::X, CliffordOp::Z][r.gen_range(0..3)], q),
                7 => GateEntry::rotation(q, r.gen_range(0..size)),
                _ if n > 1 => {
                    let t = (q + r.gen_range(1..n)) % n;
                    GateEntry::two(if roll == 8 { CliffordOp::Cz } else { CliffordOp::Cx }, q, t, None)
                }
                _ => GateEntry::clifford(CliffordOp::H, q),
            });
        }
        Ok(NetProgram { circuit: ir, measure: (0..n).collect() })
    }
}

/// What both transports must agree on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    /// Measurement outcomes with the client's frame removed.
    pub outcomes: Vec<bool>,
    pub raw_outcomes: Vec<bool>,
    pub gates: Vec<BGateOutcome>,
    pub photons_sent: u64,
    pub photons_measured: u64,
    /// SHA-256 of the server's final amplitudes.
    pub state_digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    pub classical_bytes: usize,
    pub messages: usize,
    /// Delegated-rotation entries that leaked into revealed operation lists.
    pub blind_entries_sent: usize,
    /// Lines with an angle-like key or a literal of a secret angle.
    pub angle_mentions: usize,
    pub unexpected_kinds: usize,
}

impl Audit {
    pub fn clean(&self) -> bool {
        self.blind_entries_sent == 0 && self.angle_mentions == 0 && self.unexpected_kinds == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientReport {
    pub session: u64,
    pub outcomes: Vec<bool>,
    pub raw_outcomes: Vec<bool>,
    pub gates: Vec<BGateOutcome>,
    pub photons_sent: u64,
    pub photons_measured: u64,
    pub transcript_hash: String,
    pub audit: Audit,
    pub transcript: Vec<TranscriptEntry>,
    pub elapsed_us: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServerReport {
    pub session: u64,
    pub raw_outcomes: Vec<bool>,
    pub photons_sent: u64,
    pub photons_measured: u64,
    pub state_digest: String,
    pub transcript_hash: String,
    pub transcript: Vec<TranscriptEntry>,
}

/// Server state written when a session aborts on a transport failure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServerDump {
    pub session: u64,
    pub error: String,
    pub next_seq_in: u64,
    pub next_seq_out: u64,
    pub gate_session: u64,
    pub protocol: Option<BGateProtocol>,
    pub record: Vec<(bool, bool)>,
    pub amplitudes: Vec<(f64, f64)>,
}

pub fn timeout_from_env() -> Duration {
    let ms = std::env::var(TIMEOUT_ENV).ok().and_then(|v| v.parse().ok()).unwrap_or(DEFAULT_TIMEOUT_MS);
    Duration::from_millis(ms)
}

fn state_digest(st: &StateVector) -> String {
    let mut h = Sha256::new();
    for a in st.amplitudes() {
        h.update(a.re.to_le_bytes());
        h.update(a.im.to_le_bytes());
    }
    format!("{:x}", h.finalize())
}

fn record_digest(rec: &[(bool, bool)]) -> String {
    let mut h = Sha256::new();
    for &(s, m) in rec {
        h.update([s as u8, m as u8]);
    }
    format!("{:x}", h.finalize())
}

/// Hash of both directions of a transcript, excluding the closing DONE exchange.
pub fn transcript_hash(entries: &[TranscriptEntry]) -> String {
    let mut c2s = Sha256::new();
    let mut s2c = Sha256::new();
    for e in entries {
        if e.line.contains("\"kind\":\"DONE\"") {
            continue;
        }
        let h = if e.dir == Direction::ClientToServer { &mut c2s } else { &mut s2c };
        h.update(e.line.as_bytes());
        h.update(b"\n");
    }
    let mut h = Sha256::new();
    h.update(c2s.finalize());
    h.update(s2c.finalize());
    format!("{:x}", h.finalize())
}

// ---- framing ---------------------------------------------------------------------------

struct Line<R, W> {
    reader: R,
    writer: W,
}

impl<R: BufRead, W: Write> Line<R, W> {
    fn send(&mut self, line: &str) -> Result<()> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<String> {
        let mut s = String::new();
        if self.reader.read_line(&mut s)? == 0 {
            return Err(Error::Io(std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "peer closed the stream")));
        }
        Ok(s.trim_end().to_string())
    }
}

struct Channel<R, W> {
    line: Line<R, W>,
    session: u64,
    me: Direction,
    next_out: u64,
    next_in: u64,
    start: Instant,
    transcript: Vec<TranscriptEntry>,
}

impl<R: BufRead, W: Write> Channel<R, W> {
    fn new(reader: R, writer: W, me: Direction, session: u64) -> Self {
        Channel { line: Line { reader, writer }, session, me, next_out: 0, next_in: 0, start: Instant::now(), transcript: Vec::new() }
    }

    fn log(&mut self, dir: Direction, line: &str) {
        let t_us = self.start.elapsed().as_micros() as u64;
        self.transcript.push(TranscriptEntry { t_us, dir, line: line.to_string() });
    }

    fn send(&mut self, msg: Message) -> Result<()> {
        let env = Envelope { seq: self.next_out, session: self.session, msg };
        let line = serde_json::to_string(&env)?;
        self.line.send(&line)?;
        self.next_out += 1;
        self.log(self.me, &line);
        Ok(())
    }

    fn recv(&mut self) -> Result<Message> {
        let line = self.line.recv()?;
        let other = if self.me == Direction::ClientToServer { Direction::ServerToClient } else { Direction::ClientToServer };
        self.log(other, &line);
        let env: Envelope = serde_json::from_str(&line).map_err(|e| Error::Protocol(format!("malformed line: {e}")))?;
        if env.seq != self.next_in {
            return Err(Error::Protocol(format!("seq {} where {} was expected", env.seq, self.next_in)));
        }
        if env.session != self.session {
            return Err(Error::Protocol(format!("session {} where {} was expected", env.session, self.session)));
        }
        self.next_in += 1;
        if let Message::Error { code, message } = env.msg {
            return Err(Error::Protocol(format!("peer reported {code}: {message}")));
        }
        Ok(env.msg)
    }

    fn hash(&self) -> String {
        transcript_hash(&self.transcript)
    }
}

fn unexpected(want: &str, got: &Message) -> Error {
    Error::Protocol(format!("expected {want}, got {}", got.kind()))
}

// ---- server ----------------------------------------------------------------------------

#[derive(Clone, Debug, Default)]
pub struct ServerOptions {
    pub seed: u64,
    /// NDJSON transcript; a failed session also writes `<path>.dump.json`.
    pub transcript: Option<PathBuf>,
    pub timeout: Option<Duration>,
}

struct ServerState {
    state: StateVector,
    rng: rng::Rng,
    angles: AngleSet,
    record: Vec<(bool, bool)>,
    gate_session: u64,
    proto: Option<BGateProtocol>,
    photons_sent: u64,
    photons_measured: u64,
    raw: Vec<bool>,
}

impl ServerState {
    fn apply_ops(&mut self, ops: &[GateEntry]) -> Result<()> {
        for g in ops {
            if g.kind == GateKind::BTheta || g.is_blind() {
                return Err(Error::Protocol("delegated rotations cannot be sent as revealed operations".into()));
            }
            if g.qubits.iter().any(|&q| q >= self.state.n_qubits()) {
                return Err(Error::Protocol("operation on a qubit outside the register".into()));
            }
            for (gate, qs) in g.expand(&self.angles, false) {
                self.state.apply(&gate, &qs)?;
            }
        }
        Ok(())
    }

    fn dump(&self, session: u64, error: &Error, next_in: u64, next_out: u64) -> ServerDump {
        ServerDump {
            session,
            error: error.to_string(),
            next_seq_in: next_in,
            next_seq_out: next_out,
            gate_session: self.gate_session,
            protocol: self.proto.clone(),
            record: self.record.clone(),
            amplitudes: self.state.amplitudes().iter().map(|a| (a.re, a.im)).collect(),
        }
    }
}

/// Apply the back-action of one detected photon followed by the teleportation outcome.
fn back_action(st: &mut StateVector, angles: &AngleSet, pulse: Pulse, s: bool, m: bool) -> Result<()> {
    if pulse.dark {
        // nothing reached the detector: the qubit is untouched and s is noise
        return Ok(());
    }
    let phi = if m { angles.neg(pulse.phi) } else { pulse.phi };
    st.apply(&Gate::Rz(angles.angle(phi)), &[pulse.qubit])?;
    if s {
        st.apply(&Gate::Z, &[pulse.qubit])?;
    }
    Ok(())
}

fn run_blind_gate<R: BufRead, W: Write, QR: BufRead, QW: Write>(
    ch: &mut Channel<R, W>,
    qu: &mut Line<QR, QW>,
    sv: &mut ServerState,
    q: usize,
) -> Result<()> {
    if q >= sv.state.n_qubits() {
        return Err(Error::Protocol(format!("delegated rotation on qubit {q} outside the register")));
    }
    sv.gate_session += 1;
    sv.proto = Some(BGateProtocol::new(sv.angles.c())?);
    loop {
        ch.send(Message::Photon { gate_session: sv.gate_session })?;
        sv.photons_sent += 1;
        let proto = sv.proto.as_mut().expect("protocol set above");
        proto.apply(Event::PhotonSent)?;
        match ch.recv()? {
            Message::Click { success: false, .. } => {
                proto.apply(Event::Lost)?;
            }
            Message::Click { success: true, s } => {
                proto.apply(Event::Click)?;
                sv.photons_measured += 1;
                let pulse: Pulse = serde_json::from_str(&qu.recv()?)?;
                if pulse.qubit != q {
                    return Err(Error::Protocol("photon back-action on the wrong qubit".into()));
                }
                let m: bool = sv.rng.gen();
                back_action(&mut sv.state, &sv.angles, pulse, s, m)?;
                sv.record.push((s, m));
                ch.send(Message::TeleportResult { m })?;
                let proto = sv.proto.as_mut().expect("protocol set above");
                if proto.apply(Event::Teleport { m })? == Phase::Done {
                    sv.proto = None;
                    return Ok(());
                }
            }
            other => return Err(unexpected("CLICK", &other)),
        }
    }
}

fn serve_loop<R: BufRead, W: Write, QR: BufRead, QW: Write>(
    ch: &mut Channel<R, W>,
    qu: &mut Line<QR, QW>,
    sv: &mut ServerState,
) -> Result<()> {
    loop {
        match ch.recv()? {
            Message::LocalOps { ops, measure, blind } => {
                sv.apply_ops(&ops)?;
                if !measure.is_empty() {
                    let mut record = Vec::with_capacity(measure.len());
                    for &q in &measure {
                        if q >= sv.state.n_qubits() {
                            return Err(Error::Protocol("measured qubit outside the register".into()));
                        }
                        record.push(sv.state.measure(q, &mut sv.rng)?);
                    }
                    sv.raw.extend(&record);
                    ch.send(Message::Syndrome { record })?;
                }
                if let Some(q) = blind {
                    run_blind_gate(ch, qu, sv, q)?;
                }
            }
            Message::FrameSync { digest } => {
                let mine = record_digest(&sv.record);
                ch.send(Message::FrameSync { digest: mine.clone() })?;
                if digest != mine {
                    return Err(Error::Protocol("frame digest mismatch".into()));
                }
            }
            Message::Done { .. } => {
                let h = ch.hash();
                ch.send(Message::Done { transcript: h })?;
                return Ok(());
            }
            other => return Err(unexpected("LOCAL_OPS, FRAME_SYNC or DONE", &other)),
        }
    }
}

/// Serve one session over an already-open classical stream and back-action stream.
pub fn serve_streams<R: BufRead, W: Write, QR: BufRead, QW: Write>(
    reader: R,
    writer: W,
    q_reader: QR,
    q_writer: QW,
    model: &ErrorModel,
    opts: &ServerOptions,
) -> Result<ServerReport> {
    model.validate()?;
    let mut ch = Channel::new(reader, writer, Direction::ServerToClient, 0);
    let mut qu = Line { reader: q_reader, writer: q_writer };
    // the session id is taken from the opening line
    let first = ch.line.recv()?;
    let env: Envelope = serde_json::from_str(&first).map_err(|e| Error::Protocol(format!("malformed HELLO: {e}")))?;
    ch.session = env.session;
    ch.log(Direction::ClientToServer, &first);
    ch.next_in = 1;
    let (c, n) = match env.msg {
        Message::Hello { c, n_qubits } if env.seq == 0 => (c, n_qubits),
        other => {
            let e = unexpected("HELLO", &other);
            let _ = ch.send(Message::Error { code: "protocol".into(), message: e.to_string() });
            return Err(e);
        }
    };
    let setup = (|| -> Result<ServerState> {
        if c != model.c {
            return Err(Error::Protocol(format!("client resolution c = {c}, server runs c = {}", model.c)));
        }
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::capacity(format!("{n} qubits outside 1..={MAX_QUBITS}")));
        }
        Ok(ServerState {
            state: StateVector::new(n)?,
            rng: rng::stream(opts.seed, &[env.session]),
            angles: AngleSet::new(c)?,
            record: Vec::new(),
            gate_session: 0,
            proto: None,
            photons_sent: 0,
            photons_measured: 0,
            raw: Vec::new(),
        })
    })();
    let mut sv = match setup {
        Ok(sv) => sv,
        Err(e) => {
            let _ = ch.send(Message::Error { code: error_code(&e).into(), message: e.to_string() });
            return Err(e);
        }
    };
    let res = ch.send(Message::Hello { c, n_qubits: n }).and_then(|_| serve_loop(&mut ch, &mut qu, &mut sv));
    if let Some(p) = &opts.transcript {
        write_transcript(p, &ch.transcript)?;
    }
    if let Err(e) = res {
        match &e {
            Error::Io(_) => {
                if let Some(p) = &opts.transcript {
                    let dump = sv.dump(ch.session, &e, ch.next_in, ch.next_out);
                    std::fs::write(dump_path(p), serde_json::to_string_pretty(&dump)?)?;
                }
            }
            _ => {
                let _ = ch.send(Message::Error { code: error_code(&e).into(), message: e.to_string() });
            }
        }
        return Err(e);
    }
    Ok(ServerReport {
        session: ch.session,
        raw_outcomes: sv.raw.clone(),
        photons_sent: sv.photons_sent,
        photons_measured: sv.photons_measured,
        state_digest: state_digest(&sv.state),
        transcript_hash: ch.hash(),
        transcript: ch.transcript,
    })
}

fn error_code(e: &Error) -> &'static str {
    match e {
        Error::Capacity(_) => "capacity",
        Error::Protocol(_) => "protocol",
        Error::Io(_) => "transport",
        _ => "invalid",
    }
}

pub fn dump_path(transcript: &std::path::Path) -> PathBuf {
    let mut s = transcript.as_os_str().to_owned();
    s.push(".dump.json");
    PathBuf::from(s)
}

pub fn write_transcript(path: &std::path::Path, entries: &[TranscriptEntry]) -> Result<()> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn prepare(stream: &TcpStream, timeout: Duration) -> Result<()> {
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(timeout))?;
    stream.set_write_timeout(Some(timeout))?;
    Ok(())
}

/// TCP listener serving sessions one at a time.
pub struct Server {
    listener: TcpListener,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs) -> Result<Self> {
        Ok(Server { listener: TcpListener::bind(addr)? })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accept the classical connection, then the back-action connection, and run one session.
    pub fn serve_one(&self, model: &ErrorModel, opts: &ServerOptions) -> Result<ServerReport> {
        let timeout = opts.timeout.unwrap_or_else(timeout_from_env);
        let (cl, _) = self.listener.accept()?;
        prepare(&cl, timeout)?;
        let (qu, _) = self.listener.accept()?;
        prepare(&qu, timeout)?;
        serve_streams(BufReader::new(cl.try_clone()?), cl, BufReader::new(qu.try_clone()?), qu, model, opts)
    }
}

/// Bind, serve exactly one session, and return its transcript.
pub fn serve(bind: &str, model: &ErrorModel, opts: &ServerOptions) -> Result<ServerReport> {
    Server::bind(bind)?.serve_one(model, opts)
}

// ---- client ----------------------------------------------------------------------------

#[derive(Clone, Debug, Default)]
pub struct ClientOptions {
    pub seed: u64,
    pub session: u64,
    pub timeout: Option<Duration>,
    /// Artificial round trip added before every CLICK.
    pub rtt: Duration,
    pub transcript: Option<PathBuf>,
}

fn angle_literals(ir: &CircuitIR) -> Result<Vec<String>> {
    let angles = ir.angles()?;
    let mut v = Vec::new();
    for p in ir.blind_angles() {
        if p == 0 {
            continue;
        }
        let t = angles.angle(p);
        v.push(format!("{t}"));
        v.push(format!("{t:.6}"));
    }
    Ok(v)
}

/// Inspect what the client put on the classical channel.
pub fn audit_transcript(entries: &[TranscriptEntry], secrets: &[String]) -> Audit {
    const KEYS: [&str; 4] = ["\"theta\"", "\"phi\"", "\"angle\"", "\"target\""];
    let mut a = Audit { classical_bytes: 0, messages: 0, blind_entries_sent: 0, angle_mentions: 0, unexpected_kinds: 0 };
    for e in entries.iter().filter(|e| e.dir == Direction::ClientToServer) {
        a.classical_bytes += e.line.len() + 1;
        a.messages += 1;
        if KEYS.iter().any(|k| e.line.contains(k)) || secrets.iter().any(|s| e.line.contains(s.as_str())) {
            a.angle_mentions += 1;
        }
        match serde_json::from_str::<Envelope>(&e.line).map(|env| env.msg) {
            Ok(Message::LocalOps { ops, .. }) => {
                a.blind_entries_sent += ops.iter().filter(|g| g.is_blind() || g.kind == GateKind::BTheta).count();
            }
            Ok(Message::Hello { .. } | Message::Click { .. } | Message::FrameSync { .. } | Message::Done { .. }) => {}
            _ => a.unexpected_kinds += 1,
        }
    }
    a
}

struct ClientState {
    frame: PauliFrame,
    record: Vec<(bool, bool)>,
    synced: usize,
    gates: Vec<BGateOutcome>,
}

fn sync<R: BufRead, W: Write>(ch: &mut Channel<R, W>, cs: &mut ClientState) -> Result<()> {
    if cs.synced == cs.record.len() {
        return Ok(());
    }
    let mine = record_digest(&cs.record);
    ch.send(Message::FrameSync { digest: mine.clone() })?;
    match ch.recv()? {
        Message::FrameSync { digest } if digest == mine => {
            cs.synced = cs.record.len();
            Ok(())
        }
        Message::FrameSync { .. } => Err(Error::Protocol("frame digest mismatch".into())),
        other => Err(unexpected("FRAME_SYNC", &other)),
    }
}

#[allow(clippy::too_many_arguments)]
fn client_blind_gate<R: BufRead, W: Write, QR: BufRead, QW: Write>(
    ch: &mut Channel<R, W>,
    qu: &mut Line<QR, QW>,
    cs: &mut ClientState,
    rng: &mut rng::Rng,
    model: &ErrorModel,
    angles: AngleSet,
    q: usize,
    target: u64,
    rtt: Duration,
) -> Result<()> {
    let mut sess = BGateSession::new(target, angles)?;
    let mut gate_session = None;
    loop {
        match ch.recv()? {
            Message::Photon { gate_session: g } => {
                if *gate_session.get_or_insert(g) != g {
                    return Err(Error::Protocol("photon from another gate session".into()));
                }
            }
            other => return Err(unexpected("PHOTON", &other)),
        }
        sess.photon_sent()?;
        let det = sample_detection(model, rng);
        let phi = sess.measurement_index();
        sess.detection(det)?;
        if !rtt.is_zero() {
            std::thread::sleep(rtt);
        }
        match det {
            Detection::Lost => ch.send(Message::Click { success: false, s: false })?,
            Detection::Click { s, dark } => {
                qu.send(&serde_json::to_string(&Pulse { qubit: q, phi, dark })?)?;
                ch.send(Message::Click { success: true, s })?;
                let m = match ch.recv()? {
                    Message::TeleportResult { m } => m,
                    other => return Err(unexpected("TELEPORT_RESULT", &other)),
                };
                cs.record.push((s, m));
                if sess.teleport(m)? == Phase::Done {
                    let out = sess.outcome();
                    cs.frame.absorb_measurement(q, out.s, MeasurementKind::PhotonZ);
                    cs.gates.push(out);
                    return Ok(());
                }
            }
        }
    }
}

/// Move a revealed entry past the frame: rotations flip sign under X, Cliffords conjugate it.
fn frame_through(frame: &mut PauliFrame, g: &GateEntry, angles: &AngleSet) -> Result<GateEntry> {
    let mut g = g.clone();
    if g.kind == GateKind::LocalRotation {
        if frame.get(g.qubits[0]).0 {
            g.p = g.p.map(|p| angles.neg(p));
        }
        return Ok(g);
    }
    for (gate, qs) in g.expand(angles, false) {
        frame.conjugate(&gate, &qs)?;
    }
    Ok(g)
}

/// Drive one session over already-open streams.
pub fn run_client_streams<R: BufRead, W: Write, QR: BufRead, QW: Write>(
    reader: R,
    writer: W,
    q_reader: QR,
    q_writer: QW,
    program: &NetProgram,
    model: &ErrorModel,
    opts: &ClientOptions,
) -> Result<ClientReport> {
    program.validate()?;
    model.validate()?;
    let ir = &program.circuit;
    let angles = ir.angles()?;
    if ir.c != model.c {
        return Err(Error::invalid(format!("program resolution c = {} but model c = {}", ir.c, model.c)));
    }
    let start = Instant::now();
    let mut ch = Channel::new(reader, writer, Direction::ClientToServer, opts.session);
    let mut qu = Line { reader: q_reader, writer: q_writer };
    let mut rng = rng::stream(opts.seed, &[opts.session]);
    let mut cs = ClientState { frame: PauliFrame::new(ir.n_qubits), record: Vec::new(), synced: 0, gates: Vec::new() };

    ch.send(Message::Hello { c: ir.c, n_qubits: ir.n_qubits })?;
    match ch.recv()? {
        Message::Hello { c, n_qubits } if c == ir.c && n_qubits == ir.n_qubits => {}
        other => return Err(unexpected("matching HELLO", &other)),
    }
    let mut batch = Vec::new();
    for g in &ir.gates {
        if g.kind == GateKind::BTheta {
            let q = g.qubits[0];
            let p = g.p.unwrap_or(0);
            let target = if cs.frame.get(q).0 { angles.neg(p) } else { p };
            sync(&mut ch, &mut cs)?;
            ch.send(Message::LocalOps { ops: std::mem::take(&mut batch), measure: vec![], blind: Some(q) })?;
            client_blind_gate(&mut ch, &mut qu, &mut cs, &mut rng, model, angles, q, target, opts.rtt)?;
        } else {
            batch.push(frame_through(&mut cs.frame, g, &angles)?);
        }
    }
    let mut raw = Vec::new();
    if !batch.is_empty() || !program.measure.is_empty() {
        sync(&mut ch, &mut cs)?;
        ch.send(Message::LocalOps { ops: batch, measure: program.measure.clone(), blind: None })?;
        if !program.measure.is_empty() {
            raw = match ch.recv()? {
                Message::Syndrome { record } if record.len() == program.measure.len() => record,
                other => return Err(unexpected("SYNDROME", &other)),
            };
        }
    }
    let outcomes = program.measure.iter().zip(&raw).map(|(&q, &r)| r ^ cs.frame.get(q).0).collect();
    let hash = ch.hash();
    ch.send(Message::Done { transcript: hash.clone() })?;
    match ch.recv()? {
        Message::Done { transcript } if transcript == hash => {}
        Message::Done { .. } => return Err(Error::Protocol("transcript hash mismatch".into())),
        other => return Err(unexpected("DONE", &other)),
    }
    if let Some(p) = &opts.transcript {
        write_transcript(p, &ch.transcript)?;
    }
    let audit = audit_transcript(&ch.transcript, &angle_literals(ir)?);
    Ok(ClientReport {
        session: opts.session,
        outcomes,
        raw_outcomes: raw,
        photons_sent: cs.gates.iter().map(|g| g.photons_sent).sum(),
        photons_measured: cs.gates.iter().map(|g| g.photons_measured).sum(),
        gates: cs.gates,
        transcript_hash: hash,
        audit,
        transcript: ch.transcript,
        elapsed_us: start.elapsed().as_micros() as u64,
    })
}

pub fn run_client(addr: impl ToSocketAddrs, program: &NetProgram, model: &ErrorModel, opts: &ClientOptions) -> Result<ClientReport> {
    let timeout = opts.timeout.unwrap_or_else(timeout_from_env);
    let addrs: Vec<SocketAddr> = addr.to_socket_addrs()?.collect();
    let connect = || -> Result<TcpStream> {
        let a = addrs.first().ok_or_else(|| Error::invalid("no address to connect to"))?;
        let s = TcpStream::connect_timeout(a, timeout)?;
        prepare(&s, timeout)?;
        Ok(s)
    };
    let cl = connect()?;
    let qu = connect()?;
    run_client_streams(BufReader::new(cl.try_clone()?), cl, BufReader::new(qu.try_clone()?), qu, program, model, opts)
}

// ---- in-process reference --------------------------------------------------------------

/// The same session without any transport: the delegated-rotation state machine and the
/// simulator are driven directly with the client and server streams.
pub fn simulate_in_process(program: &NetProgram, model: &ErrorModel, client_seed: u64, server_seed: u64, session: u64) -> Result<SessionResult> {
    program.validate()?;
    model.validate()?;
    if model.eta <= 0.0 && model.p_dark <= 0.0 {
        return Err(Error::invalid("eta = 0: the protocol would never terminate"));
    }
    let ir = &program.circuit;
    let angles = ir.angles()?;
    let mut crng = rng::stream(client_seed, &[session]);
    let mut srng = rng::stream(server_seed, &[session]);
    let mut st = StateVector::new(ir.n_qubits)?;
    let mut frame = PauliFrame::new(ir.n_qubits);
    let mut gates = Vec::new();
    for g in &ir.gates {
        match g.kind {
            GateKind::BTheta => {
                let q = g.qubits[0];
                let p = g.p.unwrap_or(0);
                let (a, _) = frame.get(q);
                let mut sess = BGateSession::new(if a { angles.neg(p) } else { p }, angles)?;
                loop {
                    sess.photon_sent()?;
                    let det = sample_detection(model, &mut crng);
                    let phi = sess.measurement_index();
                    sess.detection(det)?;
                    if let Detection::Click { s, dark } = det {
                        let m: bool = srng.gen();
                        back_action(&mut st, &angles, Pulse { qubit: q, phi, dark }, s, m)?;
                        if sess.teleport(m)? == Phase::Done {
                            break;
                        }
                    }
                }
                let out = sess.outcome();
                frame.absorb_measurement(q, out.s, MeasurementKind::PhotonZ);
                gates.push(out);
            }
            GateKind::LocalRotation => {
                let q = g.qubits[0];
                let p = g.p.unwrap_or(0);
                let p = if frame.get(q).0 { angles.neg(p) } else { p };
                st.apply(&Gate::Rz(angles.angle(p)), &[q])?;
            }
            _ => {
                for (gate, qs) in g.expand(&angles, false) {
                    st.apply(&gate, &qs)?;
                    frame.conjugate(&gate, &qs)?;
                }
            }
        }
    }
    let mut raw = Vec::new();
    for &q in &program.measure {
        raw.push(st.measure(q, &mut srng)?);
    }
    let outcomes = program.measure.iter().zip(&raw).map(|(&q, &r)| r ^ frame.get(q).0).collect();
    Ok(SessionResult {
        outcomes,
        raw_outcomes: raw,
        photons_sent: gates.iter().map(|g| g.photons_sent).sum(),
        photons_measured: gates.iter().map(|g| g.photons_measured).sum(),
        gates,
        state_digest: state_digest(&st),
    })
}

// ---- transcript invariants -------------------------------------------------------------

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PairingStats {
    pub photons: usize,
    pub clicks: usize,
    pub successful_clicks: usize,
    pub teleports: usize,
}

/// Check sequence numbers and message pairing on a transcript.
pub fn check_pairing(entries: &[TranscriptEntry]) -> Result<PairingStats> {
    let mut st = PairingStats::default();
    let mut last: [Option<u64>; 2] = [None, None];
    let mut pending_photon = false;
    let mut pending_click = false;
    for e in entries {
        let env: Envelope = serde_json::from_str(&e.line)?;
        let k = (e.dir == Direction::ServerToClient) as usize;
        if last[k].is_some_and(|l| env.seq <= l) {
            return Err(Error::Protocol(format!("seq {} not increasing", env.seq)));
        }
        last[k] = Some(env.seq);
        match (&env.msg, e.dir) {
            (Message::Photon { .. }, Direction::ServerToClient) => {
                if pending_photon || pending_click {
                    return Err(Error::Protocol("PHOTON before the previous one was resolved".into()));
                }
                st.photons += 1;
                pending_photon = true;
            }
            (Message::Click { success, .. }, Direction::ClientToServer) => {
                if !pending_photon {
                    return Err(Error::Protocol("CLICK without a PHOTON".into()));
                }
                pending_photon = false;
                st.clicks += 1;
                if *success {
                    st.successful_clicks += 1;
                    pending_click = true;
                }
            }
            (Message::TeleportResult { .. }, Direction::ServerToClient) => {
                if !pending_click {
                    return Err(Error::Protocol("TELEPORT_RESULT without a successful CLICK".into()));
                }
                pending_click = false;
                st.teleports += 1;
            }
            _ => {
                if pending_photon || pending_click {
                    return Err(Error::Protocol(format!("{} while a photon was unresolved", env.msg.kind())));
                }
            }
        }
    }
    if pending_photon || pending_click {
        return Err(Error::Protocol("transcript ends with an unresolved photon".into()));
    }
    Ok(st)
}

pub fn kind_sequence(entries: &[TranscriptEntry]) -> Vec<String> {
    entries
        .iter()
        .filter_map(|e| serde_json::from_str::<Envelope>(&e.line).ok())
        .map(|env| env.msg.kind().to_string())
        .collect()
}
