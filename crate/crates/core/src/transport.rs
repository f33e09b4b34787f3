//! Length-prefixed frame channels.
//!
//! A [`FramedChannel`] owns one writer lane and one reader lane, each a
//! dedicated thread. [`FramedChannel::send_async`] only enqueues; the writer
//! lane drains the queue in FIFO order and records when the OS accepted each
//! frame. Frames are `[kind:1][index:4 BE][payload_len:4 BE][payload]`.
//!
//! The same channel runs over TCP ([`connect`], [`Listener`]) or over an
//! in-process pipe ([`mem_pair`]).

use std::collections::BTreeMap;
use std::io::{self, BufReader, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, Receiver, RecvTimeoutError, Sender};

use crate::error::{Error, Result};

pub const FRAME_PREFIX_LEN: usize = 9;

/// Frame kinds.
pub mod kind {
    /// Message header (payload is an encoded wire header).
    pub const HEADER: u8 = 0x10;
    /// One chunk of concatenated ciphertext segments.
    pub const CHUNK: u8 = 0x11;
    /// Handshake: DER-encoded public key.
    pub const PUBKEY: u8 = 0x20;
    /// Handshake: wrapped symmetric keys.
    pub const WRAPPED_KEYS: u8 = 0x21;
    /// Unencrypted benchmark payload.
    pub const RAW: u8 = 0x30;
    /// Benchmark acknowledgement.
    pub const ACK: u8 = 0x31;
}

#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: u8,
    pub index: u32,
    pub payload: Vec<u8>,
}

impl std::fmt::Debug for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Frame")
            .field("kind", &format_args!("{:#04x}", self.kind))
            .field("index", &self.index)
            .field("payload_len", &self.payload.len())
            .finish()
    }
}

impl Frame {
    pub fn new(kind: u8, index: u32, payload: Vec<u8>) -> Self {
        Self { kind, index, payload }
    }

    pub fn prefix(&self) -> [u8; FRAME_PREFIX_LEN] {
        let mut p = [0u8; FRAME_PREFIX_LEN];
        p[0] = self.kind;
        p[1..5].copy_from_slice(&self.index.to_be_bytes());
        p[5..9].copy_from_slice(&(self.payload.len() as u32).to_be_bytes());
        p
    }

    pub fn wire_len(&self) -> usize {
        FRAME_PREFIX_LEN + self.payload.len()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(&self.prefix())?;
        w.write_all(&self.payload)
    }

    /// Reads one frame. `Ok(None)` means a clean end of stream at a frame
    /// boundary; a stream ending inside a frame is an error.
    pub fn read_from<R: Read>(r: &mut R, max_payload: usize) -> Result<Option<Frame>> {
        let mut prefix = [0u8; FRAME_PREFIX_LEN];
        let mut filled = 0;
        while filled < FRAME_PREFIX_LEN {
            match r.read(&mut prefix[filled..]) {
                Ok(0) if filled == 0 => return Ok(None),
                Ok(0) => return Err(Error::MalformedFrame("stream ended inside frame prefix".into())),
                Ok(n) => filled += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        let kind = prefix[0];
        let index = u32::from_be_bytes(prefix[1..5].try_into().unwrap());
        let len = u32::from_be_bytes(prefix[5..9].try_into().unwrap()) as usize;
        if len > max_payload {
            return Err(Error::MalformedFrame(format!("payload of {len} bytes exceeds cap {max_payload}")));
        }
        let mut payload = vec![0u8; len];
        r.read_exact(&mut payload).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::MalformedFrame("stream ended inside frame payload".into()),
            _ => Error::Transport(e),
        })?;
        Ok(Some(Frame { kind, index, payload }))
    }
}

#[derive(Clone, Debug)]
pub struct ChannelOptions {
    /// Frames that may sit in the writer queue before `send_async` reports
    /// backpressure.
    pub max_inflight: usize,
    pub nodelay: bool,
    pub max_frame_payload: usize,
    /// Artificial per-frame link delay applied by the writer lane.
    pub send_delay: Option<Duration>,
}

impl Default for ChannelOptions {
    fn default() -> Self {
        Self {
            max_inflight: 128,
            nodelay: true,
            max_frame_payload: 1 << 30,
            send_delay: None,
        }
    }
}

/// Handle for one enqueued frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ticket(pub u64);

#[derive(Clone, Copy, Debug)]
pub struct Completion {
    pub ticket: Ticket,
    pub enqueued: Instant,
    pub written: Instant,
    pub bytes: usize,
}

#[derive(Clone, Debug, Default)]
pub struct CompletionReport {
    pub completions: Vec<Completion>,
}

impl CompletionReport {
    pub fn bytes(&self) -> u64 {
        self.completions.iter().map(|c| c.bytes as u64).sum()
    }

    pub fn last_written(&self) -> Option<Instant> {
        self.completions.iter().map(|c| c.written).max()
    }
}

/// Sending half of a frame transport.
pub trait FrameSink {
    fn send_async(&self, frame: Frame) -> Result<Ticket>;
    fn wait(&self, tickets: &[Ticket]) -> Result<CompletionReport>;
    fn wait_all(&self) -> Result<CompletionReport>;
    /// Blocks until the writer queue has room for another frame.
    fn wait_for_capacity(&self) -> Result<()>;
    /// Frames posted with `send_async` and not yet waited for.
    fn outstanding(&self) -> usize;
}

/// Receiving half of a frame transport.
pub trait FrameSource {
    fn recv(&self) -> Result<Frame>;
    fn recv_timeout(&self, timeout: Duration) -> Result<Option<Frame>>;
}

struct Outgoing {
    seq: u64,
    frame: Frame,
    enqueued: Instant,
}

#[derive(Default)]
struct WriterState {
    queued: usize,
    /// seq -> completion, for tickets not yet waited.
    done: BTreeMap<u64, Completion>,
    /// Tickets posted and not yet waited.
    pending: std::collections::BTreeSet<u64>,
    error: Option<(io::ErrorKind, String)>,
}

struct Shared {
    state: Mutex<WriterState>,
    cond: Condvar,
    aborted: AtomicBool,
}

impl Shared {
    fn error(state: &WriterState) -> Option<Error> {
        state
            .error
            .as_ref()
            .map(|(kind, msg)| Error::Transport(io::Error::new(*kind, msg.clone())))
    }
}

/// Bidirectional framed channel with asynchronous sends.
pub struct FramedChannel {
    queue: Option<Sender<Outgoing>>,
    incoming: Receiver<Result<Frame>>,
    shared: Arc<Shared>,
    next_seq: AtomicU64,
    opts: ChannelOptions,
    closer: Option<Box<dyn FnOnce() + Send + Sync>>,
    peer: Option<SocketAddr>,
}

impl std::fmt::Debug for FramedChannel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FramedChannel").field("peer", &self.peer).finish_non_exhaustive()
    }
}

impl FramedChannel {
    pub fn from_parts<R, W>(reader: R, writer: W, opts: ChannelOptions) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let shared = Arc::new(Shared {
            state: Mutex::new(WriterState::default()),
            cond: Condvar::new(),
            aborted: AtomicBool::new(false),
        });

        let (queue_tx, queue_rx) = unbounded::<Outgoing>();
        let writer_shared = Arc::clone(&shared);
        let delay = opts.send_delay;
        thread::Builder::new()
            .name("frame-writer".into())
            .spawn(move || writer_lane(writer, queue_rx, writer_shared, delay))
            .expect("spawn writer lane");

        let (in_tx, in_rx) = bounded(opts.max_inflight.max(1));
        let max_payload = opts.max_frame_payload;
        thread::Builder::new()
            .name("frame-reader".into())
            .spawn(move || reader_lane(reader, in_tx, max_payload))
            .expect("spawn reader lane");

        Self {
            queue: Some(queue_tx),
            incoming: in_rx,
            shared,
            next_seq: AtomicU64::new(0),
            opts,
            closer: None,
            peer: None,
        }
    }

    fn from_tcp(stream: TcpStream, opts: ChannelOptions) -> Result<Self> {
        stream.set_nodelay(opts.nodelay)?;
        let peer = stream.peer_addr().ok();
        let reader = stream.try_clone()?;
        let writer = stream.try_clone()?;
        let mut chan = Self::from_parts(BufReader::with_capacity(1 << 16, reader), writer, opts);
        chan.peer = peer;
        chan.closer = Some(Box::new(move || {
            let _ = stream.shutdown(Shutdown::Both);
        }));
        Ok(chan)
    }

    pub fn options(&self) -> &ChannelOptions {
        &self.opts
    }

    pub fn peer_addr(&self) -> Option<SocketAddr> {
        self.peer
    }

    /// Waits for every queued frame, then closes the channel.
    pub fn finish(self) -> Result<CompletionReport> {
        self.wait_all()
    }

    /// Abandons the channel immediately, dropping queued frames.
    pub fn abort(self) {
        drop(self)
    }
}

impl Drop for FramedChannel {
    fn drop(&mut self) {
        self.shared.aborted.store(true, Ordering::SeqCst);
        self.queue.take();
        if let Some(close) = self.closer.take() {
            close();
        }
    }
}

fn writer_lane<W: Write>(mut writer: W, queue: Receiver<Outgoing>, shared: Arc<Shared>, delay: Option<Duration>) {
    for item in queue.iter() {
        let outcome = if shared.aborted.load(Ordering::SeqCst) {
            Err(io::Error::new(io::ErrorKind::ConnectionAborted, "channel aborted"))
        } else {
            if let Some(d) = delay {
                thread::sleep(d);
            }
            item.frame.write_to(&mut writer).and_then(|_| writer.flush())
        };
        let mut st = shared.state.lock().unwrap();
        st.queued -= 1;
        match outcome {
            Ok(()) => {
                st.done.insert(
                    item.seq,
                    Completion {
                        ticket: Ticket(item.seq),
                        enqueued: item.enqueued,
                        written: Instant::now(),
                        bytes: item.frame.wire_len(),
                    },
                );
            }
            Err(e) => {
                st.error.get_or_insert((e.kind(), e.to_string()));
            }
        }
        shared.cond.notify_all();
        if st.error.is_some() {
            // Fail every frame still queued.
            drop(st);
            for _ in queue.try_iter() {
                let mut st = shared.state.lock().unwrap();
                st.queued -= 1;
            }
            shared.cond.notify_all();
        }
    }
}

fn reader_lane<R: Read>(mut reader: R, out: Sender<Result<Frame>>, max_payload: usize) {
    loop {
        match Frame::read_from(&mut reader, max_payload) {
            Ok(Some(frame)) => {
                if out.send(Ok(frame)).is_err() {
                    return;
                }
            }
            Ok(None) => return,
            Err(e) => {
                let _ = out.send(Err(e));
                return;
            }
        }
    }
}

impl FrameSink for FramedChannel {
    fn send_async(&self, frame: Frame) -> Result<Ticket> {
        let queue = self.queue.as_ref().ok_or(Error::ChannelClosed)?;
        let seq = {
            let mut st = self.shared.state.lock().unwrap();
            if let Some(e) = Shared::error(&st) {
                return Err(e);
            }
            if st.queued >= self.opts.max_inflight {
                return Err(Error::Backpressure(st.queued));
            }
            let seq = self.next_seq.fetch_add(1, Ordering::SeqCst);
            st.queued += 1;
            st.pending.insert(seq);
            seq
        };
        queue
            .send(Outgoing { seq, frame, enqueued: Instant::now() })
            .map_err(|_| Error::ChannelClosed)?;
        Ok(Ticket(seq))
    }

    fn wait(&self, tickets: &[Ticket]) -> Result<CompletionReport> {
        let mut st = self.shared.state.lock().unwrap();
        let mut report = CompletionReport::default();
        for t in tickets {
            loop {
                if let Some(c) = st.done.remove(&t.0) {
                    st.pending.remove(&t.0);
                    report.completions.push(c);
                    break;
                }
                if !st.pending.contains(&t.0) {
                    return Err(Error::Transport(io::Error::new(
                        io::ErrorKind::InvalidInput,
                        format!("unknown or already waited ticket {}", t.0),
                    )));
                }
                if let Some(e) = Shared::error(&st) {
                    st.pending.remove(&t.0);
                    return Err(e);
                }
                st = self.shared.cond.wait(st).unwrap();
            }
        }
        Ok(report)
    }

    fn wait_all(&self) -> Result<CompletionReport> {
        let tickets: Vec<Ticket> = {
            let st = self.shared.state.lock().unwrap();
            st.pending.iter().map(|&s| Ticket(s)).collect()
        };
        self.wait(&tickets)
    }

    fn wait_for_capacity(&self) -> Result<()> {
        let mut st = self.shared.state.lock().unwrap();
        loop {
            if let Some(e) = Shared::error(&st) {
                return Err(e);
            }
            if st.queued < self.opts.max_inflight {
                return Ok(());
            }
            st = self.shared.cond.wait(st).unwrap();
        }
    }

    fn outstanding(&self) -> usize {
        self.shared.state.lock().unwrap().pending.len()
    }
}

impl FrameSource for FramedChannel {
    fn recv(&self) -> Result<Frame> {
        match self.incoming.recv() {
            Ok(r) => r,
            Err(_) => Err(Error::ChannelClosed),
        }
    }

    fn recv_timeout(&self, timeout: Duration) -> Result<Option<Frame>> {
        match self.incoming.recv_timeout(timeout) {
            Ok(r) => r.map(Some),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(Error::ChannelClosed),
        }
    }
}

/// Sends one frame and waits for it to be written.
pub fn send_blocking<S: FrameSink + ?Sized>(sink: &S, frame: Frame) -> Result<()> {
    let ticket = loop {
        match sink.send_async(frame.clone()) {
            Err(Error::Backpressure(_)) => sink.wait_for_capacity()?,
            other => break other?,
        }
    };
    sink.wait(&[ticket]).map(|_| ())
}

/// Enqueues a frame, blocking only while the writer queue is full.
pub fn send_queued<S: FrameSink + ?Sized>(sink: &S, frame: Frame) -> Result<Ticket> {
    loop {
        match sink.send_async(frame.clone()) {
            Err(Error::Backpressure(_)) => sink.wait_for_capacity()?,
            other => return other,
        }
    }
}

pub fn connect<A: ToSocketAddrs>(addr: A, opts: ChannelOptions) -> Result<FramedChannel> {
    let stream = TcpStream::connect(addr)?;
    FramedChannel::from_tcp(stream, opts)
}

/// Retries `connect` until it succeeds or `deadline` elapses.
pub fn connect_retry<A: ToSocketAddrs + Clone>(
    addr: A,
    opts: ChannelOptions,
    deadline: Duration,
) -> Result<FramedChannel> {
    let start = Instant::now();
    loop {
        match TcpStream::connect(addr.clone()) {
            Ok(stream) => return FramedChannel::from_tcp(stream, opts),
            Err(e) if start.elapsed() >= deadline => {
                log::debug!("giving up connecting: {e}");
                return Err(Error::HandshakeTimeout(deadline));
            }
            Err(_) => thread::sleep(Duration::from_millis(20)),
        }
    }
}

pub struct Listener {
    inner: TcpListener,
    opts: ChannelOptions,
}

impl Listener {
    pub fn bind<A: ToSocketAddrs>(addr: A, opts: ChannelOptions) -> Result<Self> {
        Ok(Self { inner: TcpListener::bind(addr)?, opts })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.inner.local_addr()?)
    }

    pub fn accept(&self) -> Result<FramedChannel> {
        let (stream, _) = self.inner.accept()?;
        FramedChannel::from_tcp(stream, self.opts.clone())
    }

    /// Accepts with a deadline.
    pub fn accept_timeout(&self, timeout: Duration) -> Result<Option<FramedChannel>> {
        self.inner.set_nonblocking(true)?;
        let start = Instant::now();
        let result = loop {
            match self.inner.accept() {
                Ok((stream, _)) => {
                    stream.set_nonblocking(false)?;
                    break Ok(Some(FramedChannel::from_tcp(stream, self.opts.clone())?));
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                    if start.elapsed() >= timeout {
                        break Ok(None);
                    }
                    thread::sleep(Duration::from_millis(5));
                }
                Err(e) => break Err(e.into()),
            }
        };
        self.inner.set_nonblocking(false)?;
        result
    }
}

/// In-process byte pipe, writer half.
pub struct PipeWriter {
    tx: Sender<Vec<u8>>,
}

/// In-process byte pipe, reader half.
pub struct PipeReader {
    rx: Receiver<Vec<u8>>,
    buf: Vec<u8>,
    pos: usize,
}

pub fn pipe() -> (PipeWriter, PipeReader) {
    let (tx, rx) = bounded(256);
    (PipeWriter { tx }, PipeReader { rx, buf: Vec::new(), pos: 0 })
}

impl Write for PipeWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        if buf.is_empty() {
            return Ok(0);
        }
        self.tx
            .send(buf.to_vec())
            .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "pipe reader closed"))?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Read for PipeReader {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        if self.pos == self.buf.len() {
            match self.rx.recv() {
                Ok(next) => {
                    self.buf = next;
                    self.pos = 0;
                }
                Err(_) => return Ok(0),
            }
        }
        let n = out.len().min(self.buf.len() - self.pos);
        out[..n].copy_from_slice(&self.buf[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

/// Two connected in-process channels.
pub fn mem_pair(opts: ChannelOptions) -> (FramedChannel, FramedChannel) {
    mem_pair_with(opts.clone(), opts)
}

pub fn mem_pair_with(a_opts: ChannelOptions, b_opts: ChannelOptions) -> (FramedChannel, FramedChannel) {
    let (a_w, b_r) = pipe();
    let (b_w, a_r) = pipe();
    (
        FramedChannel::from_parts(a_r, a_w, a_opts),
        FramedChannel::from_parts(b_r, b_w, b_opts),
    )
}
