//! (k,t)-chopping over a frame transport.
//!
//! The sender emits one header frame, then `k` chunk frames of `t`
//! segments each. Chunk `i+1` is encrypted by the lane pool while chunk `i`
//! sits in the transport's writer queue. The receiver decrypts each chunk as
//! it arrives and releases the plaintext only after every segment has
//! authenticated.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use rand::{CryptoRng, RngCore};
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{Error, Result};
use crate::segcrypt::{
    self, derive_subkey, prepare_chopped, small_decrypt, small_encrypt, ChoppedHeader, KeyPairing,
    SegmentCipher, SegmentLayout, SegmentedCiphertext, Seed, WireHeader, PATH_THRESHOLD,
};
use crate::transport::{kind, send_queued, CompletionReport, Frame, FrameSink, FrameSource, Ticket};

/// Chosen (k, t) schedule for one message.
#[derive(Clone, Copy, PartialEq, Eq, Debug, serde::Serialize)]
pub struct ChopPlan {
    /// Number of chunks.
    pub k: usize,
    /// Segments per chunk.
    pub t: usize,
    /// Plaintext bytes per segment.
    pub seg_size: usize,
    /// Worker lanes actually used.
    pub eff_threads: usize,
}

impl ChopPlan {
    /// Plan with `seg_size = ceil(m / (k t))`.
    pub fn for_message(m: usize, k: usize, t: usize, eff_threads: usize) -> Result<Self> {
        if k == 0 || t == 0 {
            return Err(Error::Plan(format!("k={k} and t={t} must be positive")));
        }
        let segments = k
            .checked_mul(t)
            .ok_or_else(|| Error::Plan("k*t overflows".into()))?;
        Ok(Self {
            k,
            t,
            seg_size: m.div_ceil(segments).max(1),
            eff_threads: eff_threads.clamp(1, t),
        })
    }

    /// Pure multi-threading: one chunk of `t` segments.
    pub fn multithread(m: usize, t: usize) -> Result<Self> {
        Self::for_message(m, 1, t, t)
    }

    /// Single-lane, single-chunk encryption of the whole message.
    pub fn naive(m: usize) -> Self {
        Self { k: 1, t: 1, seg_size: m.max(1), eff_threads: 1 }
    }

    /// Segment layout this plan produces for an `m`-byte message.
    pub fn layout(&self, m: usize) -> Result<SegmentLayout> {
        let seg = u32::try_from(self.seg_size)
            .map_err(|_| Error::Plan(format!("segment size {} exceeds 4 bytes", self.seg_size)))?;
        SegmentLayout::new(m as u64, seg)
    }

    /// Checks that the plan covers `m` bytes without empty segments.
    pub fn check(&self, m: usize) -> Result<()> {
        if self.k == 0 || self.t == 0 || self.seg_size == 0 || self.eff_threads == 0 {
            return Err(Error::Plan(format!("degenerate plan {self:?}")));
        }
        if self.eff_threads > self.t {
            return Err(Error::Plan(format!("eff_threads {} exceeds t {}", self.eff_threads, self.t)));
        }
        if (self.seg_size as u128) * (self.k as u128) * (self.t as u128) < m as u128 {
            return Err(Error::Plan(format!("plan {self:?} covers fewer than {m} bytes")));
        }
        Ok(())
    }
}

/// Worker pools are cached by lane count and live for the process.
pub(crate) fn lane_pool(lanes: usize) -> Result<Arc<ThreadPool>> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<ThreadPool>>>> = OnceLock::new();
    let lanes = lanes.max(1);
    let mut pools = POOLS.get_or_init(Default::default).lock().unwrap_or_else(|e| e.into_inner());
    if let Some(pool) = pools.get(&lanes) {
        return Ok(pool.clone());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(lanes)
        .thread_name(|i| format!("crypt-lane-{i}"))
        .build()
        .map_err(|e| Error::Plan(format!("cannot start {lanes} lanes: {e}")))?;
    let pool = Arc::new(pool);
    pools.insert(lanes, pool.clone());
    Ok(pool)
}

/// Encrypts one chunk's segments into a single contiguous payload.
fn seal_chunk(pool: &ThreadPool, cipher: &SegmentCipher, msg: &[u8], chunk: u32, width: u32) -> Vec<u8> {
    let layout = cipher.layout();
    let indices = layout.chunk_segments(chunk, width);
    let lens: Vec<usize> = indices.clone().map(|i| layout.ciphertext_len(i)).collect();
    let mut payload = vec![0u8; lens.iter().sum()];
    let mut slices = Vec::with_capacity(lens.len());
    let mut rest = payload.as_mut_slice();
    for (i, len) in indices.zip(&lens) {
        let (head, tail) = rest.split_at_mut(*len);
        slices.push((i, head));
        rest = tail;
    }
    pool.install(|| {
        slices
            .into_par_iter()
            .for_each(|(i, out)| cipher.seal_into(i, msg, out));
    });
    payload
}

pub fn encrypt_parallel<R: RngCore + CryptoRng>(
    keys: &KeyPairing,
    msg: &[u8],
    plan: &ChopPlan,
    rng: &mut R,
) -> Result<SegmentedCiphertext> {
    encrypt_parallel_seeded(keys, msg, plan, plan.eff_threads, Seed::generate(rng))
}

/// Encrypts every segment of the plan on `lanes` workers. The ciphertext
/// depends on the plan and seed only, never on `lanes`.
pub fn encrypt_parallel_seeded(
    keys: &KeyPairing,
    msg: &[u8],
    plan: &ChopPlan,
    lanes: usize,
    seed: Seed,
) -> Result<SegmentedCiphertext> {
    let (header, cipher) = prepare_chopped(keys, msg, plan, seed)?;
    let count = cipher.layout().count();
    let pool = lane_pool(lanes.clamp(1, count as usize))?;
    let segments = pool.install(|| (1..=count).into_par_iter().map(|i| cipher.seal(i, msg)).collect());
    Ok(SegmentedCiphertext { header: WireHeader::Chopped(header), segments })
}

/// Decrypts a chopped ciphertext on `lanes` workers.
pub fn decrypt_parallel(keys: &KeyPairing, ct: &SegmentedCiphertext, lanes: usize) -> Result<Vec<u8>> {
    let WireHeader::Chopped(header) = &ct.header else {
        return segcrypt::decrypt(keys, ct);
    };
    let layout = header.validate()?;
    if ct.segments.len() as u64 != layout.count() as u64 {
        return Err(Error::SegmentCountMismatch {
            expected: layout.count() as u64,
            actual: ct.segments.len() as u64,
        });
    }
    let cipher = SegmentCipher::new(&derive_subkey(keys, &header.seed), header)?;
    let pool = lane_pool(lanes.clamp(1, layout.count() as usize))?;
    let mut out = vec![0u8; layout.msg_len() as usize];
    let slices = split_plaintext(&mut out, &layout, 1..=layout.count());
    pool.install(|| {
        slices
            .into_par_iter()
            .try_for_each(|(i, buf)| cipher.open_into(i, &ct.segments[i as usize - 1], buf))
    })?;
    Ok(out)
}

fn split_plaintext<'a>(
    buf: &'a mut [u8],
    layout: &SegmentLayout,
    indices: std::ops::RangeInclusive<u32>,
) -> Vec<(u32, &'a mut [u8])> {
    let mut out = Vec::new();
    let mut rest = buf;
    for i in indices {
        let (head, tail) = rest.split_at_mut(layout.range(i).len());
        out.push((i, head));
        rest = tail;
    }
    out
}

/// Timing of one chunk on the sending side.
#[derive(Clone, Copy, Debug)]
pub struct ChunkTiming {
    pub chunk: u32,
    pub encrypt_start: Instant,
    pub encrypt_end: Instant,
    pub ticket: Ticket,
}

#[derive(Clone, Debug)]
pub struct SendReport {
    pub opcode: u8,
    pub bytes_sent: u64,
    pub chunks_sent: u32,
    pub plan: Option<ChopPlan>,
    pub started: Instant,
    pub finished: Instant,
    pub chunks: Vec<ChunkTiming>,
    /// Writer-lane completions; empty when the send was not waited.
    pub completions: CompletionReport,
}

impl SendReport {
    pub fn elapsed(&self) -> Duration {
        self.finished - self.started
    }

    pub fn encrypt_time(&self) -> Duration {
        self.chunks.iter().map(|c| c.encrypt_end - c.encrypt_start).sum()
    }

    /// True when chunk `i+1` started encrypting before chunk `i` finished
    /// transmitting, for every interior chunk.
    pub fn overlapped(&self) -> bool {
        if self.chunks.len() < 2 {
            return true;
        }
        self.chunks.windows(2).all(|w| {
            let written = self
                .completions
                .completions
                .iter()
                .find(|c| c.ticket == w[0].ticket)
                .map(|c| c.written);
            matches!(written, Some(t) if w[1].encrypt_start < t)
        })
    }
}

/// Whether [`send_pipelined_with`] blocks until every frame is written.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SendCompletion {
    Wait,
    /// Leave frames outstanding; the caller waits later (windowed sends).
    Detach,
}

pub fn send_pipelined<S, R>(
    sink: &S,
    keys: &KeyPairing,
    msg: &[u8],
    plan: &ChopPlan,
    rng: &mut R,
) -> Result<SendReport>
where
    S: FrameSink + ?Sized,
    R: RngCore + CryptoRng,
{
    send_pipelined_with(sink, keys, msg, plan, Seed::generate(rng), SendCompletion::Wait)
}

/// Sends a message of any size: small messages go out as a header frame
/// plus one chunk frame on the direct path.
pub fn send_message<S, R>(
    sink: &S,
    keys: &KeyPairing,
    msg: &[u8],
    plan: &ChopPlan,
    rng: &mut R,
    completion: SendCompletion,
) -> Result<SendReport>
where
    S: FrameSink + ?Sized,
    R: RngCore + CryptoRng,
{
    if msg.len() < PATH_THRESHOLD {
        let started = Instant::now();
        let ct = small_encrypt(keys, msg, rng)?;
        let encrypt_end = Instant::now();
        let header = ct.header.encode();
        let mut bytes = header.len() as u64;
        send_queued(sink, Frame::new(kind::HEADER, 0, header))?;
        let seg = ct.segments.into_iter().next().expect("one segment");
        bytes += seg.len() as u64;
        let ticket = send_queued(sink, Frame::new(kind::CHUNK, 1, seg))?;
        let completions = match completion {
            SendCompletion::Wait => sink.wait_all()?,
            SendCompletion::Detach => CompletionReport::default(),
        };
        return Ok(SendReport {
            opcode: segcrypt::OPCODE_SMALL,
            bytes_sent: bytes,
            chunks_sent: 1,
            plan: None,
            started,
            finished: Instant::now(),
            chunks: vec![ChunkTiming { chunk: 1, encrypt_start: started, encrypt_end, ticket }],
            completions,
        });
    }
    send_pipelined_with(sink, keys, msg, plan, Seed::generate(rng), completion)
}

/// Chopped-path send with an explicit seed.
pub fn send_pipelined_with<S>(
    sink: &S,
    keys: &KeyPairing,
    msg: &[u8],
    plan: &ChopPlan,
    seed: Seed,
    completion: SendCompletion,
) -> Result<SendReport>
where
    S: FrameSink + ?Sized,
{
    let started = Instant::now();
    plan.check(msg.len())?;
    let (header, cipher) = prepare_chopped(keys, msg, plan, seed)?;
    let layout = *cipher.layout();
    let width = header.threads_hint as u32;
    let chunk_count = layout.chunk_count(width);
    let pool = lane_pool(plan.eff_threads.clamp(1, layout.count() as usize))?;

    let header_bytes = header.encode().to_vec();
    let mut bytes_sent = header_bytes.len() as u64;
    send_queued(sink, Frame::new(kind::HEADER, 0, header_bytes))?;

    let mut chunks = Vec::with_capacity(chunk_count as usize);
    for chunk in 1..=chunk_count {
        let encrypt_start = Instant::now();
        let payload = seal_chunk(&pool, &cipher, msg, chunk, width);
        let encrypt_end = Instant::now();
        bytes_sent += payload.len() as u64;
        let ticket = send_queued(sink, Frame::new(kind::CHUNK, chunk, payload)).map_err(|e| {
            log::warn!("send aborted after {} of {chunk_count} chunks: {e}", chunk - 1);
            e
        })?;
        chunks.push(ChunkTiming { chunk, encrypt_start, encrypt_end, ticket });
    }

    let completions = match completion {
        SendCompletion::Wait => sink.wait_all()?,
        SendCompletion::Detach => CompletionReport::default(),
    };
    Ok(SendReport {
        opcode: segcrypt::OPCODE_CHOPPED,
        bytes_sent,
        chunks_sent: chunk_count,
        plan: Some(*plan),
        started,
        finished: Instant::now(),
        chunks,
        completions,
    })
}

#[derive(Clone, Debug)]
pub struct RecvOptions {
    /// Largest message the receiver accepts.
    pub size_cap: u64,
    /// Decryption lanes; defaults to the sender's threads hint.
    pub lanes: Option<usize>,
    /// Size the receiver posted before seeing the header.
    pub posted_len: Option<u64>,
}

impl Default for RecvOptions {
    fn default() -> Self {
        Self { size_cap: 1 << 32, lanes: None, posted_len: None }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecvReport {
    pub opcode: u8,
    pub msg_len: u64,
    pub segments: u32,
    pub chunks: u32,
    pub lanes: usize,
    /// Chunk expectations implied by the posted size.
    pub posted_chunks: u32,
    /// Posted expectations dropped once the header revealed the real size.
    pub canceled_chunks: u32,
}

pub fn recv_pipelined<S: FrameSource + ?Sized>(source: &S, keys: &KeyPairing) -> Result<Vec<u8>> {
    recv_pipelined_with(source, keys, &RecvOptions::default()).map(|(pt, _)| pt)
}

fn eof_is_transport(e: Error) -> Error {
    match e {
        Error::ChannelClosed => Error::Transport(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            "channel closed mid-message",
        )),
        other => other,
    }
}

/// Receives one message (either path).
pub fn recv_pipelined_with<S: FrameSource + ?Sized>(
    source: &S,
    keys: &KeyPairing,
    opts: &RecvOptions,
) -> Result<(Vec<u8>, RecvReport)> {
    let frame = source.recv()?;
    if frame.kind != kind::HEADER || frame.index != 0 {
        return Err(Error::MalformedFrame(format!("expected header frame, got {frame:?}")));
    }
    let header = WireHeader::decode(&frame.payload)?;
    let msg_len = header.msg_len();
    let cap = opts.posted_len.map_or(opts.size_cap, |p| p.min(opts.size_cap));
    if msg_len > cap {
        return Err(Error::SizeCapExceeded { len: msg_len, cap });
    }
    match header {
        WireHeader::Small { .. } => {
            let frame = source.recv().map_err(eof_is_transport)?;
            expect_chunk(&frame, 1)?;
            let ct = SegmentedCiphertext { header, segments: vec![frame.payload] };
            let pt = small_decrypt(keys, &ct)?;
            let posted_chunks = opts.posted_len.map_or(1, |_| 1);
            Ok((
                pt,
                RecvReport {
                    opcode: segcrypt::OPCODE_SMALL,
                    msg_len,
                    segments: 1,
                    chunks: 1,
                    lanes: 1,
                    posted_chunks,
                    canceled_chunks: 0,
                },
            ))
        }
        WireHeader::Chopped(h) => recv_chopped(source, keys, &h, opts),
    }
}

fn expect_chunk(frame: &Frame, index: u32) -> Result<()> {
    if frame.kind != kind::CHUNK {
        return Err(Error::MalformedFrame(format!("expected chunk frame, got {frame:?}")));
    }
    if frame.index != index {
        return Err(Error::ChunkSequence { expected: index, actual: frame.index });
    }
    Ok(())
}

fn recv_chopped<S: FrameSource + ?Sized>(
    source: &S,
    keys: &KeyPairing,
    header: &ChoppedHeader,
    opts: &RecvOptions,
) -> Result<(Vec<u8>, RecvReport)> {
    let layout = header.validate()?;
    let cipher = SegmentCipher::new(&derive_subkey(keys, &header.seed), header)?;
    let width = header.threads_hint as u32;
    let chunk_count = layout.chunk_count(width);
    let lanes = opts.lanes.unwrap_or(width as usize).clamp(1, layout.count() as usize);
    let pool = lane_pool(lanes)?;

    let posted_chunks = match opts.posted_len {
        Some(p) => {
            let posted_segments = p.div_ceil(layout.seg_size() as u64).max(1);
            posted_segments.div_ceil(width as u64).min(u32::MAX as u64) as u32
        }
        None => chunk_count,
    };
    let canceled_chunks = posted_chunks.saturating_sub(chunk_count);
    if canceled_chunks > 0 {
        log::debug!("canceling {canceled_chunks} posted chunk expectations");
    }

    // Plaintext stays private to this function until every chunk verifies.
    let mut plaintext = vec![0u8; layout.msg_len() as usize];
    let mut per_chunk: Vec<Vec<(u32, &mut [u8])>> = Vec::with_capacity(chunk_count as usize);
    {
        let mut rest = plaintext.as_mut_slice();
        for chunk in 1..=chunk_count {
            let indices = layout.chunk_segments(chunk, width);
            let bytes: usize = indices.clone().map(|i| layout.range(i).len()).sum();
            let (head, tail) = rest.split_at_mut(bytes);
            per_chunk.push(split_plaintext(head, &layout, indices));
            rest = tail;
        }
    }

    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let record = |e: Error| {
        let mut slot = failure.lock().unwrap();
        if slot.is_none() {
            *slot = Some(e);
        }
    };
    let cipher_ref = &cipher;
    let failure_ref = &failure;
    pool.in_place_scope(|scope| {
        for (chunk, slices) in (1..=chunk_count).zip(per_chunk) {
            if failure_ref.lock().unwrap().is_some() {
                break;
            }
            let frame = match source.recv().map_err(eof_is_transport) {
                Ok(f) => f,
                Err(e) => {
                    record(e);
                    break;
                }
            };
            if let Err(e) = expect_chunk(&frame, chunk) {
                record(e);
                break;
            }
            let expected: usize = slices.iter().map(|(_, s)| s.len() + segcrypt::TAG_LEN).sum();
            if frame.payload.len() != expected {
                let full = layout.ciphertext_len(1) as u64;
                let before = (chunk as u64 - 1) * width as u64;
                record(Error::SegmentCountMismatch {
                    expected: layout.count() as u64,
                    actual: before + frame.payload.len() as u64 / full,
                });
                break;
            }
            let record = &record;
            scope.spawn(move |_| {
                let mut offsets = Vec::with_capacity(slices.len());
                let mut pos = 0;
                for (_, s) in &slices {
                    offsets.push(pos);
                    pos += s.len() + segcrypt::TAG_LEN;
                }
                let payload = &frame.payload;
                let result = slices.into_par_iter().zip(offsets).try_for_each(|((i, out), off)| {
                    let ct = &payload[off..off + out.len() + segcrypt::TAG_LEN];
                    cipher_ref.open_into(i, ct, out)
                });
                if let Err(e) = result {
                    record(e);
                }
            });
        }
    });

    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok((
        plaintext,
        RecvReport {
            opcode: segcrypt::OPCODE_CHOPPED,
            msg_len: layout.msg_len(),
            segments: layout.count(),
            chunks: chunk_count,
            lanes,
            posted_chunks,
            canceled_chunks,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segcrypt::chop_encrypt_seeded;
    use crate::transport::{mem_pair, ChannelOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn keys() -> KeyPairing {
        KeyPairing::new([1; 16], [2; 16]).unwrap()
    }

    fn message(len: usize) -> Vec<u8> {
        (0..len).map(|i| (i % 251) as u8).collect()
    }

    #[test]
    fn plan_arithmetic() {
        let p = ChopPlan::for_message(4 << 20, 8, 8, 8).unwrap();
        assert_eq!(p.seg_size, 64 << 10);
        let l = p.layout(4 << 20).unwrap();
        assert_eq!(l.count(), 64);
        assert_eq!(l.chunk_count(8), 8);
        assert!(ChopPlan::for_message(10, 0, 1, 1).is_err());
        assert_eq!(ChopPlan::for_message(100, 1, 4, 16).unwrap().eff_threads, 4);
        assert!(ChopPlan { k: 1, t: 1, seg_size: 10, eff_threads: 1 }.check(11).is_err());
    }

    #[test]
    fn parallel_matches_sequential() {
        let msg = message(300_000);
        let plan = ChopPlan::multithread(msg.len(), 8).unwrap();
        let seed = Seed([4; 16]);
        let seq = chop_encrypt_seeded(&keys(), &msg, &plan, seed).unwrap();
        for lanes in [1, 3, 8, 64] {
            assert_eq!(encrypt_parallel_seeded(&keys(), &msg, &plan, lanes, seed).unwrap(), seq);
        }
        assert_eq!(decrypt_parallel(&keys(), &seq, 4).unwrap(), msg);
    }

    #[test]
    fn four_mib_framing() {
        let (a, b) = mem_pair(ChannelOptions::default());
        let msg = message(4 << 20);
        let plan = ChopPlan::for_message(msg.len(), 8, 8, 8).unwrap();
        let k = keys();
        let handle = std::thread::spawn(move || {
            let frames: Vec<Frame> = (0..9).map(|_| b.recv().unwrap()).collect();
            frames
        });
        let report = send_pipelined_with(&a, &k, &msg, &plan, Seed([0; 16]), SendCompletion::Wait).unwrap();
        assert_eq!(report.chunks_sent, 8);
        let frames = handle.join().unwrap();
        assert_eq!(frames[0].kind, kind::HEADER);
        for (i, f) in frames[1..].iter().enumerate() {
            assert_eq!(f.kind, kind::CHUNK);
            assert_eq!(f.index, i as u32 + 1);
            assert_eq!(f.payload.len(), 8 * (65536 + 16));
        }
    }

    #[test]
    fn pipelined_roundtrip_both_paths() {
        let (a, b) = mem_pair(ChannelOptions::default());
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for len in [0usize, 1000, 65535, 65536, 200_000, 1 << 20] {
            let msg = message(len);
            let plan = ChopPlan::for_message(len, 2, 3, 2).unwrap();
            send_message(&a, &keys(), &msg, &plan, &mut rng, SendCompletion::Wait).unwrap();
            let (pt, report) = recv_pipelined_with(&b, &keys(), &RecvOptions::default()).unwrap();
            assert_eq!(pt, msg);
            assert_eq!(report.msg_len, len as u64);
        }
    }

    #[test]
    fn degenerate_schedules() {
        let (a, b) = mem_pair(ChannelOptions::default());
        let msg = message(512 << 10);
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        // k = 1: one chunk of t segments.
        let plan = ChopPlan::for_message(msg.len(), 1, 4, 4).unwrap();
        let report = send_pipelined(&a, &keys(), &msg, &plan, &mut rng).unwrap();
        assert_eq!(report.chunks_sent, 1);
        let (pt, r) = recv_pipelined_with(&b, &keys(), &RecvOptions::default()).unwrap();
        assert_eq!((pt == msg, r.chunks, r.segments), (true, 1, 4));
        // t = 1: pure pipelining, one segment per chunk.
        let plan = ChopPlan::for_message(msg.len(), 8, 1, 1).unwrap();
        let report = send_pipelined(&a, &keys(), &msg, &plan, &mut rng).unwrap();
        assert_eq!(report.chunks_sent, 8);
        let (pt, r) = recv_pipelined_with(&b, &keys(), &RecvOptions::default()).unwrap();
        assert_eq!((pt == msg, r.chunks, r.segments), (true, 8, 8));
    }

    #[test]
    fn oversized_posted_receive_cancels_extra_chunks() {
        let (a, b) = mem_pair(ChannelOptions::default());
        let msg = message(256 << 10);
        let plan = ChopPlan::for_message(msg.len(), 4, 2, 2).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        send_pipelined(&a, &keys(), &msg, &plan, &mut rng).unwrap();
        let opts = RecvOptions { posted_len: Some(1 << 20), ..Default::default() };
        let (pt, r) = recv_pipelined_with(&b, &keys(), &opts).unwrap();
        assert_eq!(pt, msg);
        assert_eq!(r.chunks, 4);
        assert_eq!(r.posted_chunks, 16);
        assert_eq!(r.canceled_chunks, 12);
    }

    #[test]
    fn receive_cap_enforced() {
        let (a, b) = mem_pair(ChannelOptions::default());
        let msg = message(128 << 10);
        let plan = ChopPlan::for_message(msg.len(), 1, 1, 1).unwrap();
        send_pipelined(&a, &keys(), &msg, &plan, &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
        let opts = RecvOptions { size_cap: 64 << 10, ..Default::default() };
        assert!(matches!(recv_pipelined_with(&b, &keys(), &opts), Err(Error::SizeCapExceeded { .. })));
    }

    #[test]
    fn sender_dying_midway_fails_closed() {
        let (a, b) = mem_pair(ChannelOptions::default());
        let msg = message(1 << 20);
        let plan = ChopPlan::for_message(msg.len(), 8, 2, 2).unwrap();
        let (header, cipher) = prepare_chopped(&keys(), &msg, &plan, Seed([8; 16])).unwrap();
        let pool = lane_pool(2).unwrap();
        a.send_async(Frame::new(kind::HEADER, 0, header.encode().to_vec())).unwrap();
        for chunk in 1..=2 {
            a.send_async(Frame::new(kind::CHUNK, chunk, seal_chunk(&pool, &cipher, &msg, chunk, 2))).unwrap();
        }
        a.wait_all().unwrap();
        drop(a);
        let err = recv_pipelined(&b, &keys()).unwrap_err();
        assert!(err.is_transport(), "{err:?}");
    }

    #[test]
    fn chunk_gap_aborts() {
        let (a, b) = mem_pair(ChannelOptions::default());
        let msg = message(256 << 10);
        let plan = ChopPlan::for_message(msg.len(), 4, 1, 1).unwrap();
        let (header, cipher) = prepare_chopped(&keys(), &msg, &plan, Seed([8; 16])).unwrap();
        let pool = lane_pool(1).unwrap();
        a.send_async(Frame::new(kind::HEADER, 0, header.encode().to_vec())).unwrap();
        a.send_async(Frame::new(kind::CHUNK, 1, seal_chunk(&pool, &cipher, &msg, 1, 1))).unwrap();
        a.send_async(Frame::new(kind::CHUNK, 3, seal_chunk(&pool, &cipher, &msg, 3, 1))).unwrap();
        assert!(matches!(
            recv_pipelined(&b, &keys()),
            Err(Error::ChunkSequence { expected: 2, actual: 3 })
        ));
    }

    #[test]
    fn overlap_with_slow_link() {
        let delay = Duration::from_millis(40);
        let opts = ChannelOptions { send_delay: Some(delay), ..Default::default() };
        let (a, b) = mem_pair(opts);
        let msg = message(1 << 20);
        let plan = ChopPlan::for_message(msg.len(), 8, 1, 1).unwrap();
        let reader = std::thread::spawn(move || recv_pipelined(&b, &keys()).unwrap());
        let report = send_pipelined(&a, &keys(), &msg, &plan, &mut ChaCha20Rng::seed_from_u64(3)).unwrap();
        assert_eq!(reader.join().unwrap(), msg);
        assert!(report.overlapped());
        // 9 frames at 40 ms each dominate; serialized encryption would add to it.
        let link = delay * 9;
        let serialized = link + report.encrypt_time();
        let elapsed = report.elapsed();
        assert!(elapsed < serialized + Duration::from_millis(5) || elapsed < link.mul_f64(1.3));
    }
}
