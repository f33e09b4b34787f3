//! Ping-pong, multi-pair and encryption benchmarks.
//!
//! All timings use [`Instant`]. One-way time is half a round trip and
//! throughput is bytes per microsecond, i.e. MB/s.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{lane_pool, recv_pipelined_with, send_message, ChopPlan, RecvOptions, SendCompletion};
use crate::segcrypt::{ChoppedHeader, KeyPairing, Seed, SegmentCipher, SubKey, PATH_THRESHOLD, TAG_LEN};
use crate::stats::{repeat_until_stable, RunPolicy, RunStats};
use crate::transport::{kind, send_blocking, send_queued, ChannelOptions, Frame, FrameSink, FrameSource, FramedChannel, Listener};
use crate::tuner::{effective_threads, plan_message, SystemProfile};

const MIB: usize = 1024 * 1024;
const STOP_INDEX: u32 = u32::MAX;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Unencrypted,
    Naive,
    Chopped,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Unencrypted, Mode::Naive, Mode::Chopped];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Unencrypted => "unencrypted",
            Mode::Naive => "naive",
            Mode::Chopped => "chopped",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Harness(format!("unknown mode {s:?}")))
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSample {
    pub scenario: String,
    pub size_bytes: u64,
    pub threads: usize,
    pub k: usize,
    pub mode: String,
    pub reps: usize,
    pub median_us: f64,
    pub stddev_us: f64,
    pub throughput_mbs: f64,
}

pub fn write_csv<W: Write>(w: W, rows: &[BenchSample]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row).map_err(|e| Error::Harness(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

/// Round trips per run: 10,000 below 1 MiB, 1,000 at or above.
pub fn paper_reps(size: usize) -> usize {
    if size < MIB {
        10_000
    } else {
        1_000
    }
}

pub const DESK_REPS: usize = 100;

/// The plan a mode uses for an `m`-byte message with `live` outstanding
/// sends. `None` means no encryption.
pub fn plan_for(mode: Mode, m: usize, profile: &SystemProfile, live: usize) -> Result<Option<ChopPlan>> {
    match mode {
        Mode::Unencrypted => Ok(None),
        Mode::Naive => Ok(Some(ChopPlan::naive(m))),
        Mode::Chopped if m < PATH_THRESHOLD => Ok(Some(ChopPlan::naive(m))),
        Mode::Chopped => plan_message(m as u64, profile, live).map(Some),
    }
}

/// Opens a connected TCP pair on 127.0.0.1.
pub fn loopback_pair(opts: ChannelOptions) -> Result<(FramedChannel, FramedChannel)> {
    let listener = Listener::bind("127.0.0.1:0", opts.clone())?;
    let addr = listener.local_addr()?;
    let connector = thread::spawn(move || crate::transport::connect(addr, opts));
    let server = listener.accept()?;
    let client = connector.join().map_err(|_| Error::Harness("connect thread panicked".into()))??;
    Ok((client, server))
}

/// Puts one already-received frame back in front of a source.
struct Pushback<'a, S: ?Sized> {
    first: Mutex<Option<Frame>>,
    inner: &'a S,
}

impl<S: FrameSource + ?Sized> FrameSource for Pushback<'_, S> {
    fn recv(&self) -> Result<Frame> {
        match self.first.lock().unwrap().take() {
            Some(f) => Ok(f),
            None => self.inner.recv(),
        }
    }
    fn recv_timeout(&self, timeout: Duration) -> Result<Option<Frame>> {
        match self.first.lock().unwrap().take() {
            Some(f) => Ok(Some(f)),
            None => self.inner.recv_timeout(timeout),
        }
    }
}

fn stop_frame() -> Frame {
    Frame::new(kind::ACK, STOP_INDEX, Vec::new())
}

fn is_stop(frame: &Frame) -> bool {
    frame.kind == kind::ACK && frame.index == STOP_INDEX
}

/// Sends one message in `mode`. Unencrypted payloads are moved, not copied.
fn send_one<C, R>(chan: &C, keys: &KeyPairing, plan: Option<&ChopPlan>, msg: Vec<u8>, rng: &mut R, completion: SendCompletion) -> Result<()>
where
    C: FrameSink + ?Sized,
    R: RngCore + CryptoRng,
{
    match plan {
        None => {
            send_queued(chan, Frame::new(kind::RAW, 0, msg))?;
            if completion == SendCompletion::Wait {
                chan.wait_all()?;
            }
        }
        Some(plan) => {
            send_message(chan, keys, &msg, plan, rng, completion)?;
        }
    }
    Ok(())
}

/// Receives one message of either kind; `None` on the stop frame.
fn recv_one<C>(chan: &C, keys: &KeyPairing, lanes: Option<usize>) -> Result<Option<Vec<u8>>>
where
    C: FrameSource + ?Sized,
{
    let first = chan.recv()?;
    if is_stop(&first) {
        return Ok(None);
    }
    if first.kind == kind::RAW {
        return Ok(Some(first.payload));
    }
    let src = Pushback { first: Mutex::new(Some(first)), inner: chan };
    let opts = RecvOptions { lanes, ..RecvOptions::default() };
    recv_pipelined_with(&src, keys, &opts).map(|(pt, _)| Some(pt))
}

#[derive(Clone, Debug)]
pub struct PingPongConfig {
    pub mode: Mode,
    pub sizes: Vec<usize>,
    /// Round trips per run; `None` selects [`paper_reps`].
    pub reps: Option<usize>,
    pub policy: RunPolicy,
    pub profile: SystemProfile,
}

impl PingPongConfig {
    pub fn new(mode: Mode, sizes: Vec<usize>) -> Self {
        Self {
            mode,
            sizes,
            reps: Some(DESK_REPS),
            policy: RunPolicy::PINGPONG,
            profile: SystemProfile::noleland(),
        }
    }

    pub fn reps_for(&self, size: usize) -> usize {
        self.reps.unwrap_or_else(|| paper_reps(size)).max(1)
    }
}

#[derive(Clone, Debug)]
pub struct PingPongResult {
    pub sample: BenchSample,
    pub plan: Option<ChopPlan>,
    /// One-way microseconds per run.
    pub stats: RunStats,
}

/// Initiator side: for each size, runs round trips until the run policy is
/// satisfied, then sends the stop frame.
pub fn pingpong_initiator<C, R>(chan: &C, keys: &KeyPairing, cfg: &PingPongConfig, rng: &mut R) -> Result<Vec<PingPongResult>>
where
    C: FrameSink + FrameSource + ?Sized,
    R: RngCore + CryptoRng,
{
    let mut results = Vec::with_capacity(cfg.sizes.len());
    for &size in &cfg.sizes {
        let plan = plan_for(cfg.mode, size, &cfg.profile, chan.outstanding())?;
        if let Some(p) = &plan {
            log::info!("pingpong {} bytes: mode={} k={} t={} eff_threads={}", size, cfg.mode, p.k, p.t, p.eff_threads);
        }
        let reps = cfg.reps_for(size);
        let lanes = plan.map(|p| p.eff_threads);
        let mut buf: Vec<u8> = (0..size).map(|i| (i % 251) as u8).collect();
        let stats = repeat_until_stable(&cfg.policy, || -> Result<f64> {
            let start = Instant::now();
            for _ in 0..reps {
                let outgoing = std::mem::take(&mut buf);
                let keep = plan.is_some().then(|| outgoing.clone());
                send_one(chan, keys, plan.as_ref(), outgoing, rng, SendCompletion::Wait)?;
                let echoed = recv_one(chan, keys, lanes)?.ok_or(Error::ChannelClosed)?;
                if echoed.len() != size {
                    return Err(Error::Harness(format!("echo of {} bytes for {size}", echoed.len())));
                }
                buf = keep.unwrap_or(echoed);
            }
            Ok(start.elapsed().as_secs_f64() * 1e6 / (2.0 * reps as f64))
        })?;
        let median = stats.median;
        results.push(PingPongResult {
            sample: BenchSample {
                scenario: "pingpong".into(),
                size_bytes: size as u64,
                threads: plan.map_or(0, |p| p.t),
                k: plan.map_or(0, |p| p.k),
                mode: cfg.mode.name().into(),
                reps,
                median_us: median,
                stddev_us: stats.stddev,
                throughput_mbs: size as f64 / median,
            },
            plan,
            stats,
        });
    }
    send_blocking(chan, stop_frame())?;
    Ok(results)
}

/// Responder side: echoes every message in `mode` until the stop frame.
/// Returns the number of messages echoed.
pub fn pingpong_responder<C, R>(chan: &C, keys: &KeyPairing, mode: Mode, profile: &SystemProfile, rng: &mut R) -> Result<usize>
where
    C: FrameSink + FrameSource + ?Sized,
    R: RngCore + CryptoRng,
{
    let mut echoed = 0;
    let mut cached: Option<(usize, Option<ChopPlan>)> = None;
    loop {
        let lanes = cached.and_then(|(_, p)| p.map(|p| p.eff_threads));
        let Some(msg) = recv_one(chan, keys, lanes)? else {
            return Ok(echoed);
        };
        let plan = match cached {
            Some((len, plan)) if len == msg.len() => plan,
            _ => {
                let plan = plan_for(mode, msg.len(), profile, 0)?;
                cached = Some((msg.len(), plan));
                plan
            }
        };
        send_one(chan, keys, plan.as_ref(), msg, rng, SendCompletion::Wait)?;
        echoed += 1;
    }
}

/// Runs both sides over a TCP loopback connection in one process.
pub fn pingpong_loopback(cfg: &PingPongConfig, keys: &KeyPairing, opts: ChannelOptions) -> Result<Vec<PingPongResult>> {
    let (client, server) = loopback_pair(opts)?;
    let profile = cfg.profile.clone();
    let mode = cfg.mode;
    let responder_keys = keys.clone();
    let responder = thread::spawn(move || {
        let mut rng = ChaCha20Rng::from_entropy();
        let r = pingpong_responder(&server, &responder_keys, mode, &profile, &mut rng);
        let _ = server.finish();
        r
    });
    let mut rng = ChaCha20Rng::from_entropy();
    let results = pingpong_initiator(&client, keys, cfg, &mut rng);
    if results.is_err() {
        client.abort();
    } else {
        let _ = client.finish();
    }
    let responded = responder.join().map_err(|_| Error::Harness("responder panicked".into()))?;
    let results = results?;
    responded?;
    Ok(results)
}

#[derive(Clone, Debug)]
pub struct MultiPairConfig {
    pub pairs: usize,
    pub size: usize,
    pub mode: Mode,
    /// Messages posted per round before waiting.
    pub window: usize,
    pub rounds: usize,
    /// Node profile; `ranks_per_node` is set to `pairs`.
    pub profile: SystemProfile,
}

impl MultiPairConfig {
    pub fn new(pairs: usize, size: usize, mode: Mode) -> Self {
        Self { pairs, size, mode, window: 64, rounds: 100, profile: SystemProfile::noleland() }
    }

    fn rank_profile(&self) -> SystemProfile {
        self.profile.clone().with_ranks(self.pairs.max(1))
    }
}

#[derive(Clone, Debug)]
pub struct MultiPairResult {
    pub sample: BenchSample,
    /// Plans chosen for each message of the first round, per pair.
    pub plans: Vec<Vec<Option<ChopPlan>>>,
    pub elapsed: Duration,
}

fn multipair_sender<C>(chan: &C, keys: &KeyPairing, cfg: &MultiPairConfig, rng: &mut ChaCha20Rng) -> Result<(Vec<Option<ChopPlan>>, Vec<f64>)>
where
    C: FrameSink + FrameSource + ?Sized,
{
    let profile = cfg.rank_profile();
    let msg: Vec<u8> = (0..cfg.size).map(|i| (i % 253) as u8).collect();
    let mut logged = Vec::with_capacity(cfg.window);
    let mut round_us = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        let start = Instant::now();
        for _ in 0..cfg.window {
            let plan = plan_for(cfg.mode, cfg.size, &profile, chan.outstanding())?;
            if round == 0 {
                if let Some(p) = &plan {
                    log::debug!("multipair message {}: k={} t={} eff_threads={}", logged.len() + 1, p.k, p.t, p.eff_threads);
                }
                logged.push(plan);
            }
            send_one(chan, keys, plan.as_ref(), msg.clone(), rng, SendCompletion::Detach)?;
        }
        chan.wait_all()?;
        let ack = chan.recv()?;
        if ack.kind != kind::ACK {
            return Err(Error::MalformedFrame(format!("expected ack, got {ack:?}")));
        }
        round_us.push(start.elapsed().as_secs_f64() * 1e6);
    }
    send_blocking(chan, stop_frame())?;
    Ok((logged, round_us))
}

fn multipair_receiver<C>(chan: &C, keys: &KeyPairing, cfg: &MultiPairConfig) -> Result<()>
where
    C: FrameSink + FrameSource + ?Sized,
{
    let profile = cfg.rank_profile();
    let lanes = effective_threads(usize::MAX, &profile);
    let mut received = 0usize;
    loop {
        let Some(msg) = recv_one(chan, keys, Some(lanes))? else {
            return Ok(());
        };
        if msg.len() != cfg.size {
            return Err(Error::Harness(format!("received {} bytes, expected {}", msg.len(), cfg.size)));
        }
        received += 1;
        if received % cfg.window == 0 {
            send_blocking(chan, Frame::new(kind::ACK, (received / cfg.window) as u32, Vec::new()))?;
        }
    }
}

/// Runs `pairs` sender/receiver pairs over loopback, each on its own
/// connection, and reports aggregate throughput.
pub fn multipair_loopback(cfg: &MultiPairConfig, keys: &KeyPairing, opts: ChannelOptions) -> Result<MultiPairResult> {
    if cfg.pairs == 0 || cfg.window == 0 || cfg.rounds == 0 {
        return Err(Error::Harness("pairs, window and rounds must be positive".into()));
    }
    let mut conns = Vec::with_capacity(cfg.pairs);
    for _ in 0..cfg.pairs {
        conns.push(loopback_pair(opts.clone())?);
    }
    let start = Instant::now();
    let outcomes: Vec<Result<(Vec<Option<ChopPlan>>, Vec<f64>)>> = thread::scope(|s| {
        let handles: Vec<_> = conns
            .iter()
            .map(|(client, server)| {
                let rx = s.spawn(move || multipair_receiver(server, keys, cfg));
                let tx = s.spawn(move || {
                    let mut rng = ChaCha20Rng::from_entropy();
                    multipair_sender(client, keys, cfg, &mut rng)
                });
                (tx, rx)
            })
            .collect();
        handles
            .into_iter()
            .map(|(tx, rx)| {
                let sent = tx.join().map_err(|_| Error::Harness("sender panicked".into()))?;
                let got = rx.join().map_err(|_| Error::Harness("receiver panicked".into()))?;
                let sent = sent?;
                got?;
                Ok(sent)
            })
            .collect()
    });
    let elapsed = start.elapsed();
    let mut plans = Vec::with_capacity(cfg.pairs);
    let mut per_message_us = Vec::new();
    for outcome in outcomes {
        let (logged, rounds) = outcome?;
        plans.push(logged);
        per_message_us.extend(rounds.iter().map(|r| r / cfg.window as f64));
    }
    let stats = RunStats::from_values(per_message_us, &RunPolicy::fixed(cfg.rounds));
    let total_bytes = (cfg.pairs * cfg.window * cfg.rounds * cfg.size) as f64;
    let first = plans.first().and_then(|p| p.first().copied()).flatten();
    Ok(MultiPairResult {
        sample: BenchSample {
            scenario: format!("multipair-{}", cfg.pairs),
            size_bytes: cfg.size as u64,
            threads: first.map_or(0, |p| p.eff_threads),
            k: first.map_or(0, |p| p.k),
            mode: cfg.mode.name().into(),
            reps: cfg.rounds,
            median_us: stats.median,
            stddev_us: stats.stddev,
            throughput_mbs: total_bytes / (elapsed.as_secs_f64() * 1e6),
        },
        plans,
        elapsed,
    })
}

#[derive(Clone, Debug)]
pub struct EncBenchConfig {
    pub sizes: Vec<usize>,
    pub lanes: Vec<usize>,
    /// Encryptions per run.
    pub reps: usize,
    pub policy: RunPolicy,
}

impl EncBenchConfig {
    pub fn new(sizes: Vec<usize>, lanes: Vec<usize>) -> Self {
        Self { sizes, lanes, reps: 100, policy: RunPolicy::ENCRYPTION }
    }
}

/// One `size`-byte message cut into `t` segments and sealed on `t` lanes.
struct EncJob {
    cipher: SegmentCipher,
    msg: Vec<u8>,
    out: Vec<Vec<u8>>,
}

impl EncJob {
    fn new(size: usize, t: usize, rng: &mut ChaCha20Rng) -> Result<Self> {
        let mut key = [0u8; 16];
        rng.fill_bytes(&mut key);
        let seg_size = size.div_ceil(t).max(1);
        let header = ChoppedHeader {
            seed: Seed::generate(rng),
            msg_len: size as u64,
            seg_size: u32::try_from(seg_size).map_err(|_| Error::Plan("segment size".into()))?,
            threads_hint: u16::try_from(t).map_err(|_| Error::Plan("lane count".into()))?,
        };
        let cipher = SegmentCipher::unchecked(&SubKey(key), &header)?;
        let layout = *cipher.layout();
        let out = (1..=layout.count()).map(|i| vec![0u8; layout.ciphertext_len(i)]).collect();
        let msg = (0..size).map(|i| i as u8).collect();
        Ok(Self { cipher, msg, out })
    }

    fn run(&mut self) {
        let (cipher, msg) = (&self.cipher, &self.msg);
        self.out
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, out)| cipher.seal_into(i as u32 + 1, msg, out));
    }
}

/// Median encryption throughput per (size, lanes).
pub fn encbench(cfg: &EncBenchConfig) -> Result<Vec<BenchSample>> {
    let mut rng = ChaCha20Rng::from_entropy();
    let mut rows = Vec::new();
    for &t in &cfg.lanes {
        let t = t.max(1);
        let pool = lane_pool(t)?;
        for &size in &cfg.sizes {
            let mut job = EncJob::new(size, t, &mut rng)?;
            let reps = cfg.reps.max(1);
            let stats = pool.install(|| {
                job.run();
                repeat_until_stable(&cfg.policy, || -> Result<f64> {
                    let start = Instant::now();
                    for _ in 0..reps {
                        job.run();
                    }
                    Ok(start.elapsed().as_secs_f64() * 1e6 / reps as f64)
                })
            })?;
            debug_assert!(job.out.iter().all(|o| o.len() >= TAG_LEN));
            rows.push(BenchSample {
                scenario: "encbench".into(),
                size_bytes: size as u64,
                threads: t,
                k: 1,
                mode: Mode::Chopped.name().into(),
                reps,
                median_us: stats.median,
                stddev_us: stats.stddev,
                throughput_mbs: size as f64 / stats.median,
            });
        }
    }
    Ok(rows)
}
