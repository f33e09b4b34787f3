use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::thread;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ktchop::bench::{self, BenchSample, EncBenchConfig, Mode, MultiPairConfig, PingPongConfig};
use ktchop::keyexchange::{self, DEFAULT_HANDSHAKE_TIMEOUT};
use ktchop::perfmodel::{self, FitOptions, Tier};
use ktchop::profile::Profile;
use ktchop::stats::RunPolicy;
use ktchop::transport::{ChannelOptions, Listener};
use ktchop::{adversary, tuner, Error, KeyPairing};
use rand::rngs::OsRng;

mod sizes;

use sizes::{parse_size, parse_sizes, SizeList};

const EXIT_FAILURE: u8 = 1;
const EXIT_FIT_POLICY: u8 = 2;
const EXIT_TRANSPORT: u8 = 3;
const EXIT_SECURITY: u8 = 4;

#[derive(Parser)]
#[command(name = "ktchop", version, about = "Pipelined segmented AES-GCM: benchmarks, model fitting and tuning")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Round-trip benchmark between two endpoints
    Pingpong(PingPongArgs),
    /// Windowed throughput over several connection pairs (loopback)
    Multipair(MultiPairArgs),
    /// Multi-lane encryption throughput
    Encbench(EncBenchArgs),
    /// Fit model parameters from benchmark CSV
    Fit(FitArgs),
    /// Predicted one-way time of a chopped transfer
    Predict(PredictArgs),
    /// Plan a message with the profile's tables
    Tune(TuneArgs),
    /// Run the key distribution handshake
    HandshakeDemo(HandshakeArgs),
    /// Run the shared-key forgery with and without key separation
    AttackDemo,
}

#[derive(Args, Clone)]
struct ChannelArgs {
    /// Disable Nagle's algorithm
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    nodelay: bool,
    /// Writer queue limit, in frames
    #[arg(long, default_value_t = 128)]
    max_inflight: usize,
}

impl ChannelArgs {
    fn options(&self) -> ChannelOptions {
        ChannelOptions { nodelay: self.nodelay, max_inflight: self.max_inflight.max(1), ..ChannelOptions::default() }
    }
}

#[derive(Args)]
struct PingPongArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Chopped)]
    mode: ModeArg,
    /// Single message size, e.g. 4MiB
    #[arg(long, value_parser = parse_size, conflicts_with = "sizes")]
    size: Option<usize>,
    /// Comma-separated sizes
    #[arg(long, value_parser = parse_sizes)]
    sizes: Option<SizeList>,
    /// Builtin profile name or TOML path
    #[arg(long, default_value = "noleland")]
    profile: String,
    /// Round trips per run
    #[arg(long, default_value_t = bench::DESK_REPS, conflicts_with = "paper_reps")]
    reps: usize,
    /// 10,000 round trips below 1 MiB and 1,000 above
    #[arg(long)]
    paper_reps: bool,
    /// Exact number of runs per size instead of the stddev rule
    #[arg(long)]
    runs: Option<usize>,
    /// Wait for a peer here and echo its messages
    #[arg(long, conflicts_with = "connect")]
    bind: Option<String>,
    /// Connect to a peer and measure
    #[arg(long)]
    connect: Option<String>,
    #[arg(long)]
    csv_out: Option<PathBuf>,
    #[command(flatten)]
    channel: ChannelArgs,
}

#[derive(Args)]
struct MultiPairArgs {
    #[arg(long, default_value_t = 1)]
    pairs: usize,
    #[arg(long, value_parser = parse_size, default_value = "4MiB")]
    size: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Chopped)]
    mode: ModeArg,
    /// Rounds of windowed sends
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Messages in flight per round per pair
    #[arg(long, default_value_t = 64)]
    window: usize,
    #[arg(long, default_value = "noleland")]
    profile: String,
    #[arg(long)]
    csv_out: Option<PathBuf>,
    #[command(flatten)]
    channel: ChannelArgs,
}

#[derive(Args)]
struct EncBenchArgs {
    #[arg(long, value_parser = parse_sizes, default_value = "4KiB,32KiB,256KiB,1MiB,4MiB")]
    sizes: SizeList,
    /// Comma-separated lane counts
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    lanes: Vec<usize>,
    /// Encryptions per run
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Exact number of runs instead of the stddev rule
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    csv_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitKind {
    Hockney,
    Maxrate,
}

#[derive(Args)]
struct FitArgs {
    /// Benchmark CSV
    #[arg(long = "csv")]
    csv: PathBuf,
    #[arg(long, value_enum)]
    kind: FitKind,
    /// Only rows whose scenario starts with this
    #[arg(long)]
    scenario: Option<String>,
    /// Profile whose remaining values fill the output
    #[arg(long, default_value = "paper-tables")]
    profile: String,
    #[arg(long, value_parser = parse_size)]
    eager_threshold: Option<usize>,
    /// Write the profile here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long, value_parser = parse_size)]
    size: usize,
    #[arg(long)]
    k: u64,
    #[arg(long)]
    t: u32,
    #[arg(long, default_value = "paper-tables")]
    profile: String,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long, value_parser = parse_size)]
    size: usize,
    #[arg(long, default_value = "noleland")]
    profile: String,
    /// Outstanding sends at the time of the call
    #[arg(long, default_value_t = 0)]
    live: usize,
    #[arg(long)]
    ranks_per_node: Option<usize>,
    /// Search (k, t) against the profile's model instead of the tables
    #[arg(long)]
    search: bool,
}

#[derive(Args)]
struct HandshakeArgs {
    /// Number of peers
    #[arg(long, default_value_t = 2)]
    peers: usize,
    /// Act as coordinator on this address
    #[arg(long, conflicts_with = "connect")]
    bind: Option<String>,
    /// Act as a peer of the coordinator at this address
    #[arg(long)]
    connect: Option<String>,
    /// Handshake timeout in seconds
    #[arg(long, default_value_t = DEFAULT_HANDSHAKE_TIMEOUT.as_secs_f64())]
    timeout: f64,
    #[command(flatten)]
    channel: ChannelArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Unencrypted,
    Naive,
    Chopped,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Unencrypted => Mode::Unencrypted,
            ModeArg::Naive => Mode::Naive,
            ModeArg::Chopped => Mode::Chopped,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Fit(_) | Error::FitNotConverged { .. } | Error::Policy(_) | Error::Plan(_) | Error::Profile(_)) => {
            EXIT_FIT_POLICY
        }
        Some(err) if err.is_transport() => EXIT_TRANSPORT,
        _ => EXIT_FAILURE,
    }
}

fn run(cmd: Command) -> anyhow::Result<u8> {
    match cmd {
        Command::Pingpong(a) => pingpong(a),
        Command::Multipair(a) => multipair(a),
        Command::Encbench(a) => encbench(a),
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Tune(a) => tune(a),
        Command::HandshakeDemo(a) => handshake(a),
        Command::AttackDemo => attack(),
    }
}

fn emit_csv(rows: &[BenchSample], out: Option<&PathBuf>) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            bench::write_csv(file, rows)?;
        }
        None => bench::write_csv(io::stdout().lock(), rows)?,
    }
    Ok(())
}

fn run_policy(runs: Option<usize>, default: RunPolicy) -> RunPolicy {
    runs.map_or(default, RunPolicy::fixed)
}

fn pingpong(a: PingPongArgs) -> anyhow::Result<u8> {
    let profile = Profile::resolve(&a.profile)?;
    let sizes = match (a.size, a.sizes) {
        (Some(s), _) => vec![s],
        (None, Some(v)) => v.0,
        (None, None) => vec![1 << 20],
    };
    let mut cfg = PingPongConfig::new(a.mode.into(), sizes);
    cfg.reps = if a.paper_reps { None } else { Some(a.reps) };
    cfg.policy = run_policy(a.runs, RunPolicy::PINGPONG);
    cfg.profile = profile.system;
    let opts = a.channel.options();
    let timeout = DEFAULT_HANDSHAKE_TIMEOUT;

    let rows = if let Some(addr) = &a.bind {
        let listener = Listener::bind(addr.as_str(), opts)?;
        eprintln!("waiting on {}", listener.local_addr()?);
        let (keys, chans) = keyexchange::serve_handshake(&listener, 1, &mut OsRng, Duration::from_secs(3600))?;
        let echoed = bench::pingpong_responder(&chans[0], &keys, cfg.mode, &cfg.profile, &mut OsRng)?;
        eprintln!("echoed {echoed} messages");
        return Ok(0);
    } else if let Some(addr) = &a.connect {
        let (keys, chan) = keyexchange::join_handshake(addr.as_str(), opts, &mut OsRng, timeout)?;
        bench::pingpong_initiator(&chan, &keys, &cfg, &mut OsRng)?
    } else {
        let keys = KeyPairing::generate(&mut OsRng);
        bench::pingpong_loopback(&cfg, &keys, opts)?
    };
    for r in &rows {
        if let Some(p) = r.plan {
            eprintln!(
                "size={} plan k={} t={} seg_size={} eff_threads={}",
                r.sample.size_bytes, p.k, p.t, p.seg_size, p.eff_threads
            );
        }
    }
    let samples: Vec<_> = rows.into_iter().map(|r| r.sample).collect();
    emit_csv(&samples, a.csv_out.as_ref())?;
    Ok(0)
}

fn multipair(a: MultiPairArgs) -> anyhow::Result<u8> {
    let profile = Profile::resolve(&a.profile)?;
    let cfg = MultiPairConfig {
        rounds: a.reps,
        window: a.window,
        profile: profile.system,
        ..MultiPairConfig::new(a.pairs, a.size, a.mode.into())
    };
    let keys = KeyPairing::generate(&mut OsRng);
    let result = bench::multipair_loopback(&cfg, &keys, a.channel.options())?;
    if let Some(plans) = result.plans.first() {
        let ks: Vec<String> = plans.iter().map(|p| p.map_or("-".into(), |p| p.k.to_string())).collect();
        eprintln!("pair 1 round 1 k per message: {}", ks.join(" "));
        if let Some(Some(p)) = plans.first() {
            eprintln!("plan t={} eff_threads={}", p.t, p.eff_threads);
        }
    }
    emit_csv(&[result.sample], a.csv_out.as_ref())?;
    Ok(0)
}

fn encbench(a: EncBenchArgs) -> anyhow::Result<u8> {
    let cfg = EncBenchConfig {
        reps: a.reps,
        policy: run_policy(a.runs, RunPolicy::ENCRYPTION),
        ..EncBenchConfig::new(a.sizes.0, a.lanes)
    };
    let rows = bench::encbench(&cfg)?;
    emit_csv(&rows, a.csv_out.as_ref())?;
    Ok(0)
}

fn fit(a: FitArgs) -> anyhow::Result<u8> {
    let file = File::open(&a.csv).with_context(|| format!("opening {}", a.csv.display()))?;
    let rows: Vec<_> = perfmodel::read_samples(file)?
        .into_iter()
        .filter(|r| a.scenario.as_ref().map_or(true, |s| r.scenario.starts_with(s.as_str())))
        .collect();
    let mut profile = Profile::resolve(&a.profile)?;
    let mut model = profile.model.take().unwrap_or_else(ktchop::PerfParamsF64::noleland_infiniband);
    match a.kind {
        FitKind::Hockney => {
            let threshold = a.eager_threshold.map_or(model.comm.eager_threshold, |t| t as u64);
            let samples: Vec<(u64, f64)> = rows.iter().map(|r| (r.size_bytes, r.median_us)).collect();
            model.comm = perfmodel::fit_hockney(&samples, threshold)?;
        }
        FitKind::Maxrate => {
            let samples: Vec<(u64, u32, f64)> = rows.iter().map(|r| (r.size_bytes, r.threads, r.median_us)).collect();
            let fitted = perfmodel::fit_maxrate(&samples, FitOptions::default())?;
            for tier in Tier::ALL {
                match fitted.get(&tier) {
                    Some(p) => *model.enc.get_mut(tier) = p.clone(),
                    None => log::warn!("no samples in the {} tier; keeping the base profile's row", tier.name()),
                }
            }
        }
    }
    model.validate()?;
    profile.model = Some(model);
    let text = profile.to_toml();
    match a.out {
        Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(0)
}

fn predict(a: PredictArgs) -> anyhow::Result<u8> {
    let profile = Profile::resolve(&a.profile)?;
    let us = perfmodel::t_total(a.size as u64, a.k, a.t, profile.model()?)?;
    println!("{us}");
    Ok(0)
}

fn tune(a: TuneArgs) -> anyhow::Result<u8> {
    let profile = Profile::resolve(&a.profile)?;
    let mut system = profile.system.clone();
    if let Some(r) = a.ranks_per_node {
        system = system.with_ranks(r);
    }
    system.validate()?;
    if a.search {
        let t_values: Vec<u32> = system.t_table.iter().map(|s| s.t as u32).chain([1]).collect();
        let Some(hit) = tuner::search_plan(a.size as u64, profile.model()?, &t_values) else {
            return Err(Error::Policy(format!("no feasible (k, t) for {} bytes", a.size)).into());
        };
        println!("k={} t={} predicted_us={}", hit.k, hit.t, hit.predicted_us);
        return Ok(0);
    }
    let plan = tuner::plan_message(a.size as u64, &system, a.live)?;
    println!("k={} t={} seg_size={} eff_threads={}", plan.k, plan.t, plan.seg_size, plan.eff_threads);
    Ok(0)
}

fn handshake(a: HandshakeArgs) -> anyhow::Result<u8> {
    if a.peers == 0 {
        bail!("need at least one peer");
    }
    let timeout = Duration::from_secs_f64(a.timeout.max(0.001));
    let opts = a.channel.options();
    if let Some(addr) = &a.connect {
        let (keys, _chan) = keyexchange::join_handshake(addr.as_str(), opts, &mut OsRng, timeout)?;
        println!("peer fingerprint {}", keys.fingerprint());
        return Ok(0);
    }
    let listener = Listener::bind(a.bind.as_deref().unwrap_or("127.0.0.1:0"), opts.clone())?;
    let addr = listener.local_addr()?;
    let local_peers: Vec<_> = if a.bind.is_none() {
        (0..a.peers)
            .map(|_| {
                let opts = opts.clone();
                thread::spawn(move || keyexchange::join_handshake(addr, opts, &mut OsRng, timeout))
            })
            .collect()
    } else {
        eprintln!("coordinator waiting on {addr} for {} peers", a.peers);
        Vec::new()
    };
    let (keys, _chans) = keyexchange::serve_handshake(&listener, a.peers, &mut OsRng, timeout)?;
    println!("coordinator fingerprint {}", keys.fingerprint());
    let mut mismatched = 0;
    for (i, h) in local_peers.into_iter().enumerate() {
        let (peer_keys, _) = h.join().map_err(|_| anyhow::anyhow!("peer thread panicked"))??;
        let same = peer_keys.to_bytes() == keys.to_bytes();
        println!("peer {} fingerprint {} {}", i + 1, peer_keys.fingerprint(), if same { "match" } else { "MISMATCH" });
        mismatched += usize::from(!same);
    }
    Ok(if mismatched == 0 { 0 } else { EXIT_SECURITY })
}

fn attack() -> anyhow::Result<u8> {
    let open = adversary::attack_demo(false)?;
    let closed = adversary::attack_demo(true)?;
    match open.accepted_counter {
        Some(c) if open.forged() => {
            println!("shared key: forgery accepted (seed = nonce || [{c}]_4), {} bytes delivered", open.target.len())
        }
        _ => println!("shared key: forgery rejected"),
    }
    if closed.forged() || closed.accepted_counter.is_some() {
        println!("separated keys: forgery ACCEPTED");
        return Ok(EXIT_SECURITY);
    }
    println!("separated keys: forgery rejected");
    Ok(if open.forged() { 0 } else { EXIT_FAILURE })
}
