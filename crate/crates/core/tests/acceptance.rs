//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if a gating criterion fails.
//!
//! Run with `cargo test -p ktchop --test acceptance`.

use std::panic::{self, AssertUnwindSafe};
use std::thread;
use std::time::Instant;

use ktchop::adversary::{self, random_attack, rearrangements, Attack};
use ktchop::bench::{self, EncBenchConfig, Mode, PingPongConfig};
use ktchop::keyexchange;
use ktchop::perfmodel::{self, FitOptions, HockneyParams, Tier};
use ktchop::pipeline::{self, encrypt_parallel_seeded, recv_pipelined, send_message, ChopPlan, SendCompletion};
use ktchop::scalar::{pow2, Scalar};
use ktchop::segcrypt::{self, chop_encrypt_seeded, decrypt, Seed, PATH_THRESHOLD};
use ktchop::stats::RunPolicy;
use ktchop::transport::{mem_pair, ChannelOptions, Listener};
use ktchop::tuner::{plan_message, select_k, select_t, SystemProfile};
use ktchop::{Error, ExactPerfParams, KeyPairing, PerfParamsF32, PerfParamsF64};
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

const KIB: u64 = 1024;
const MIB: usize = 1 << 20;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn main() {
    let criteria: Vec<(u32, &str, fn() -> Outcome)> = vec![
        (1, "model arithmetic", c1_model_arithmetic),
        (2, "parameter tables", c2_parameter_tables),
        (3, "security properties", c3_security),
        (4, "key-separation forgery", c4_forgery),
        (5, "fit recovery", c5_fit_recovery),
        (6, "parallel determinism", c6_parallel_determinism),
        (7, "handshake", c7_handshake),
        (8, "desk-scale performance direction", c8_performance),
        (9, "seed-distinctness bound", c9_seed_bound),
    ];
    let cpus = thread::available_parallelism().map_or(1, |n| n.get());
    let mut gating_failures = 0;
    for (id, name, run) in criteria {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        let mut note = String::new();
        if !result.pass {
            if id == 8 && cpus < 2 {
                note = format!(" [hardware-bound: {cpus} CPU available, not gating]");
            } else {
                gating_failures += 1;
            }
        }
        println!("{verdict} criterion {id} ({name}, {secs:.1}s): {}{note}", result.detail);
    }
    if gating_failures > 0 {
        println!("{gating_failures} gating criteria failed");
        std::process::exit(1);
    }
}

fn rat(s: &str) -> BigRational {
    BigRational::from_decimal(s).unwrap()
}

fn int(n: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn rel_err(x: f64, exact: &BigRational) -> f64 {
    let e = exact.as_f64();
    ((x - e) / e).abs()
}

fn c1_model_arithmetic() -> Outcome {
    let f = PerfParamsF64::noleland_infiniband();
    let x = ExactPerfParams::noleland_infiniband();
    let g = PerfParamsF32::noleland_infiniband();
    let s = 524_288u64;
    let m = 4u64 << 20;

    // independent exact oracles, written out from the table rows
    let rdv_alpha = rat("5.75");
    let rdv_beta = rat("7.86e-5");
    let large = rat("5.07") + int(s) / (rat("5893") + int(7) * rat("5769"));
    let small = rat("4.278") + int(16384) / (rat("5265") + int(3) * rat("843"));
    let comm_4m = rdv_alpha.clone() + rdv_beta.clone() * int(m);
    let comm_1k = rat("5.54") + rat("7.29e-5") * int(1024);
    let beta_s = rdv_beta.clone() * int(s);
    let steady = if large > beta_s { large.clone() } else { beta_s.clone() };
    let total = int(2) * large.clone() + int(7) * steady + rdv_alpha + beta_s.clone();

    let checks: Vec<(&str, f64, BigRational, BigRational, f64, f64)> = vec![
        (
            "t_comm(4MiB)",
            perfmodel::t_comm(m, &f.comm),
            perfmodel::t_comm(m, &x.comm),
            comm_4m,
            335.42,
            0.01,
        ),
        ("t_comm(1KiB)", perfmodel::t_comm(1024, &f.comm), perfmodel::t_comm(1024, &x.comm), comm_1k, 5.6147, 1e-4),
        (
            "t_enc(16KiB,4,small)",
            f.enc.get(Tier::Small).time(16384, 4),
            x.enc.get(Tier::Small).time(16384, 4),
            small,
            6.3802,
            1e-4,
        ),
        (
            "t_enc(512KiB,8,large)",
            f.enc.get(Tier::Large).time(s, 8),
            x.enc.get(Tier::Large).time(s, 8),
            large,
            16.399,
            1e-3,
        ),
        (
            "t_total(4MiB,8,8)",
            perfmodel::t_total(m, 8, 8, &f).unwrap(),
            perfmodel::t_total(m, 8, 8, &x).unwrap(),
            total,
            368.22,
            0.01,
        ),
    ];
    let mut failures = Vec::new();
    let mut worst = 0f64;
    for (name, got, exact_lib, oracle, printed, last_place) in &checks {
        if exact_lib != oracle {
            failures.push(format!("{name}: exact instance disagrees with oracle"));
        }
        let r = rel_err(*got, oracle);
        worst = worst.max(r);
        if r > 1e-9 {
            failures.push(format!("{name}: f64 {got} vs exact {} (rel {r:.2e})", oracle.as_f64()));
        }
        // the printed decimals are truncated, so allow one unit in the last shown place
        if (got - printed).abs() > *last_place {
            failures.push(format!("{name}: {got} is not within one last-place unit of {printed}"));
        }
    }
    let f32_total = perfmodel::t_total(m, 8, 8, &g).unwrap() as f64;
    if rel_err(f32_total, &checks[4].3) > 1e-5 {
        failures.push(format!("f32 t_total {f32_total}"));
    }
    if failures.is_empty() {
        outcome(
            true,
            format!(
                "5 values match exact rationals (worst rel err {worst:.1e}); t_total(4MiB,8,8) = {:.4} us",
                checks[4].1
            ),
        )
    } else {
        outcome(false, failures.join("; "))
    }
}

fn c2_parameter_tables() -> Outcome {
    let n = SystemProfile::noleland();
    let b = SystemProfile::bridges();
    let t_cases: [(&SystemProfile, u64, usize); 16] = [
        (&n, 64, 2),
        (&n, 127, 2),
        (&n, 128, 4),
        (&n, 511, 4),
        (&n, 512, 8),
        (&n, 4096, 8),
        (&n, 65536, 8),
        (&b, 64, 4),
        (&b, 255, 4),
        (&b, 256, 8),
        (&b, 511, 8),
        (&b, 512, 16),
        (&b, 4096, 16),
        (&n, 100, 2),
        (&b, 300, 8),
        (&n, 300, 4),
    ];
    let mut failures = Vec::new();
    for (p, kib, want) in t_cases {
        match select_t(kib * KIB, p) {
            Ok(t) if t == want => {}
            other => failures.push(format!("t({} KiB, {}) = {other:?}, want {want}", kib, p.name)),
        }
    }
    for p in [&n, &b] {
        if !matches!(select_t(64 * KIB - 1, p), Err(Error::Policy(_))) {
            failures.push(format!("{}: below-floor size not rejected", p.name));
        }
    }
    // k = floor(max(1, m / 512)) with m in KiB, checked against integer division of the byte count
    for m_bytes in [1u64, 64 * KIB, 511 * KIB, 512 * KIB, 1023 * KIB, 1024 * KIB, 1536 * KIB, 4096 * KIB, 4096 * KIB + 1, 65536 * KIB] {
        let oracle = std::cmp::max(1, m_bytes / (512 * KIB)) as usize;
        if select_k(m_bytes, &n) != oracle || select_k(m_bytes, &b) != oracle {
            failures.push(format!("k({m_bytes}) = {}, want {oracle}", select_k(m_bytes, &n)));
        }
    }
    let plan = plan_message(4096 * KIB, &n, 0).unwrap();
    if (plan.k, plan.t) != (8, 8) {
        failures.push(format!("4096 KiB plan {plan:?}"));
    }
    if failures.is_empty() {
        outcome(true, "all Noleland/Bridges t branches, k formula and 4096 KiB -> (k=8, t=8) reproduced")
    } else {
        outcome(false, failures.join("; "))
    }
}

fn message(rng: &mut ChaCha20Rng, len: usize) -> Vec<u8> {
    let mut v = vec![0u8; len];
    rng.fill_bytes(&mut v);
    v
}

fn c3_security() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let keys = KeyPairing::generate(&mut rng);
    let profile = SystemProfile::noleland();
    let mut failures = Vec::new();

    // roundtrips, both directly and through the pipelined transport
    let sizes = [0usize, 1, 64 * 1024 - 1, 64 * 1024, 100 * 1024, MIB, 8 * MIB];
    for &len in &sizes {
        let msg = message(&mut rng, len);
        let plan = if len < PATH_THRESHOLD { ChopPlan::naive(len) } else { plan_message(len as u64, &profile, 0).unwrap() };
        let ct = segcrypt::encrypt(&keys, &msg, &plan, &mut rng).unwrap();
        if decrypt(&keys, &ct).ok().as_deref() != Some(msg.as_slice()) {
            failures.push(format!("roundtrip {len}"));
        }
        let (a, b) = mem_pair(ChannelOptions::default());
        let got = thread::scope(|s| {
            let rx = s.spawn(|| recv_pipelined(&b, &keys));
            send_message(&a, &keys, &msg, &plan, &mut ChaCha20Rng::seed_from_u64(len as u64), SendCompletion::Wait).unwrap();
            rx.join().unwrap()
        });
        if got.ok().as_deref() != Some(msg.as_slice()) {
            failures.push(format!("pipelined roundtrip {len}"));
        }
    }

    // randomized mutations: 1000 of each kind
    const PER_KIND: usize = 1000;
    let kinds = ["bitflip", "swap", "drop", "duplicate", "truncate", "header"];
    let mut counts = [0usize; 6];
    let mut accepted = 0usize;
    let mut serialized_flips = 0usize;
    let mut cases = 0u64;
    while counts.iter().any(|&c| c < PER_KIND) {
        cases += 1;
        let small = cases % 7 == 0;
        let len = if small { rng.gen_range(0..PATH_THRESHOLD) } else { rng.gen_range(PATH_THRESHOLD..PATH_THRESHOLD * 3) };
        let msg = message(&mut rng, len);
        let plan = if small {
            ChopPlan::naive(len)
        } else {
            let k = rng.gen_range(1..=3);
            let t = rng.gen_range(1..=4);
            ChopPlan::for_message(len, k, t, t).unwrap()
        };
        let ct = segcrypt::encrypt(&keys, &msg, &plan, &mut rng).unwrap();
        for _ in 0..8 {
            let attack = random_attack(&mut rng, &ct);
            let slot = match attack {
                Attack::BitFlip { .. } => 0,
                Attack::Swap(..) => 1,
                Attack::Drop(_) => 2,
                Attack::Duplicate(_) => 3,
                Attack::Truncate(_) => 4,
                Attack::HeaderField(_) => 5,
            };
            if counts[slot] >= PER_KIND {
                continue;
            }
            counts[slot] += 1;
            let bad = adversary::mutate(&ct, attack).unwrap();
            if decrypt(&keys, &bad).is_ok() {
                accepted += 1;
                failures.push(format!("accepted {attack:?}"));
            }
        }
        // flips anywhere in the serialized form, header included
        let bytes = ct.to_bytes();
        let bit = rng.gen_range(0..bytes.len() * 8);
        let flipped = adversary::flip_serialized_bit(&bytes, bit).unwrap();
        serialized_flips += 1;
        if let Ok(parsed) = segcrypt::SegmentedCiphertext::from_bytes(&flipped) {
            if decrypt(&keys, &parsed).is_ok() {
                accepted += 1;
                failures.push(format!("accepted serialized flip of bit {bit}"));
            }
        }
    }

    // exhaustive rearrangements for 2 to 4 segments
    let mut exhaustive = 0usize;
    for n in 2..=4usize {
        let len = PATH_THRESHOLD * n;
        let msg = message(&mut rng, len);
        let plan = ChopPlan::for_message(len, 1, n, n).unwrap();
        let ct = chop_encrypt_seeded(&keys, &msg, &plan, Seed::generate(&mut rng)).unwrap();
        for bad in rearrangements(&ct) {
            exhaustive += 1;
            if decrypt(&keys, &bad).is_ok() {
                failures.push(format!("accepted rearrangement of {} segments", bad.segments.len()));
            }
        }
    }

    let trials: usize = counts.iter().sum::<usize>() + serialized_flips;
    if failures.is_empty() {
        outcome(
            true,
            format!(
                "7 sizes roundtrip; {trials} randomized mutations ({}) all rejected; {exhaustive} permutations/subsets rejected",
                kinds.iter().zip(counts).map(|(k, c)| format!("{k} {c}")).collect::<Vec<_>>().join(", ")
            ),
        )
    } else {
        outcome(false, format!("{accepted} accepted; {}", failures.into_iter().take(5).collect::<Vec<_>>().join("; ")))
    }
}

fn c4_forgery() -> Outcome {
    let open = adversary::attack_demo(false).unwrap();
    let closed = adversary::attack_demo(true).unwrap();
    let again = adversary::attack_demo(false).unwrap();
    let pass = open.forged() && !closed.forged() && closed.accepted_counter.is_none() && again == open;
    outcome(
        pass,
        format!(
            "shared key: forged={} (counter {:?}); separated: forged={}; deterministic={}",
            open.forged(),
            open.accepted_counter,
            closed.forged(),
            again == open
        ),
    )
}

fn c5_fit_recovery() -> Outcome {
    let base = PerfParamsF64::noleland_infiniband();
    let mut failures = Vec::new();

    // Hockney: noiseless CSV from both Noleland rows
    let mut csv = String::from("scenario,size_bytes,threads,k,mode,reps,median_us,stddev_us,throughput_mbs\n");
    let sizes: Vec<u64> = vec![1024, 4096, 8192, 16384, 32768, 65536, 262144, 1 << 20, 4 << 20];
    for &m in &sizes {
        let us = perfmodel::t_comm(m, &base.comm);
        csv.push_str(&format!("pingpong,{m},0,0,unencrypted,100,{us:?},0,{:?}\n", m as f64 / us));
    }
    let rows = perfmodel::read_samples(csv.as_bytes()).unwrap();
    let samples: Vec<(u64, f64)> = rows.iter().map(|r| (r.size_bytes, r.median_us)).collect();
    let comm = perfmodel::fit_hockney(&samples, base.comm.eager_threshold).unwrap();
    let mut worst_h = 0f64;
    for (got, want) in [(&comm.eager, &base.comm.eager), (&comm.rendezvous, &base.comm.rendezvous)] {
        let HockneyParams { alpha_us, beta_us_per_byte } = got;
        for (g, w) in [(*alpha_us, want.alpha_us), (*beta_us_per_byte, want.beta_us_per_byte)] {
            worst_h = worst_h.max(((g - w) / w).abs());
        }
    }
    if worst_h > 1e-9 {
        failures.push(format!("hockney rel err {worst_h:.2e}"));
    }

    // plant (5.0, 1e-4) at {1K, 4K, 16K, 64K}
    let plant = HockneyParams { alpha_us: 5.0, beta_us_per_byte: 1e-4 };
    let pts: Vec<(u64, f64)> = [1024u64, 4096, 16384, 65536].iter().map(|&m| (m, plant.time(m))).collect();
    let line = perfmodel::fit_line(&pts).unwrap();
    let line_err = ((line.alpha_us - 5.0) / 5.0).abs().max(((line.beta_us_per_byte - 1e-4) / 1e-4).abs());
    if line_err > 1e-9 {
        failures.push(format!("line rel err {line_err:.2e}"));
    }

    // max-rate: noiseless CSV from every Noleland tier
    let mut csv = String::from("scenario,size_bytes,threads,k,mode,reps,median_us,stddev_us,throughput_mbs\n");
    let tier_sizes: [(Tier, &[u64]); 3] = [
        (Tier::Small, &[1024, 4096, 8192, 16384, 32767]),
        (Tier::Moderate, &[32768, 65536, 262144, 524288, 1048575]),
        (Tier::Large, &[1 << 20, 2 << 20, 4 << 20, 8 << 20]),
    ];
    for (tier, ms) in tier_sizes {
        for &m in ms {
            for t in [1u32, 2, 4, 8] {
                let us = base.enc.get(tier).time(m, t);
                csv.push_str(&format!("encbench,{m},{t},1,chopped,100,{us:?},0,{:?}\n", m as f64 / us));
            }
        }
    }
    let rows = perfmodel::read_samples(csv.as_bytes()).unwrap();
    let samples: Vec<(u64, u32, f64)> = rows.iter().map(|r| (r.size_bytes, r.threads, r.median_us)).collect();
    let fitted = perfmodel::fit_maxrate(&samples, FitOptions::default()).unwrap();
    let mut worst_m = 0f64;
    for tier in Tier::ALL {
        let (g, w) = (&fitted[&tier], base.enc.get(tier));
        for (a, b) in [(g.alpha_us, w.alpha_us), (g.a_rate, w.a_rate), (g.b_rate, w.b_rate)] {
            worst_m = worst_m.max(((a - b) / b).abs());
        }
    }
    if worst_m > 0.02 {
        failures.push(format!("max-rate rel err {worst_m:.3}"));
    }
    if failures.is_empty() {
        outcome(
            true,
            format!("hockney worst rel err {worst_h:.1e} (<= 1e-9), line {line_err:.1e}; max-rate worst {worst_m:.1e} (<= 2%)"),
        )
    } else {
        outcome(false, failures.join("; "))
    }
}

fn c6_parallel_determinism() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let keys = KeyPairing::generate(&mut rng);
    let mut failures = Vec::new();
    for case in 0..20 {
        let len = rng.gen_range(PATH_THRESHOLD..2 * MIB);
        let msg = message(&mut rng, len);
        let k = rng.gen_range(1..=8);
        let t = rng.gen_range(1..=8);
        let plan = ChopPlan::for_message(len, k, t, t).unwrap();
        let seed = Seed::generate(&mut rng);
        let reference = chop_encrypt_seeded(&keys, &msg, &plan, seed).unwrap();
        for lanes in [1, 2, 4, 8] {
            let ct = encrypt_parallel_seeded(&keys, &msg, &plan, lanes, seed).unwrap();
            if ct.to_bytes() != reference.to_bytes() {
                failures.push(format!("message {case} differs at {lanes} lanes"));
            }
        }
        if pipeline::decrypt_parallel(&keys, &reference, 4).unwrap() != msg {
            failures.push(format!("message {case} did not decrypt"));
        }
    }
    if failures.is_empty() {
        outcome(true, "20 messages byte-identical across lanes {1,2,4,8} and equal to sequential encryption")
    } else {
        outcome(false, failures.join("; "))
    }
}

fn c7_handshake() -> Outcome {
    let timeout = keyexchange::DEFAULT_HANDSHAKE_TIMEOUT;
    let profile = SystemProfile::noleland();
    let mut report = Vec::new();
    for n in [2usize, 4, 8] {
        let listener = Listener::bind("127.0.0.1:0", ChannelOptions::default()).unwrap();
        let addr = listener.local_addr().unwrap();
        let result = thread::scope(|s| {
            let peers: Vec<_> = (0..n)
                .map(|i| {
                    let profile = &profile;
                    s.spawn(move || -> ktchop::Result<[u8; 32]> {
                        let mut rng = ChaCha20Rng::seed_from_u64(700 + i as u64);
                        let (keys, chan) = keyexchange::join_handshake(addr, ChannelOptions::default(), &mut rng, timeout)?;
                        bench::pingpong_responder(&chan, &keys, Mode::Chopped, profile, &mut rng)?;
                        Ok(keys.to_bytes())
                    })
                })
                .collect();
            let mut rng = ChaCha20Rng::seed_from_u64(7000 + n as u64);
            let (keys, chans) = keyexchange::serve_handshake(&listener, n, &mut rng, timeout)?;
            let cfg = PingPongConfig {
                reps: Some(2),
                policy: RunPolicy::fixed(1),
                ..PingPongConfig::new(Mode::Chopped, vec![1000, MIB])
            };
            for chan in &chans {
                bench::pingpong_initiator(chan, &keys, &cfg, &mut rng)?;
            }
            let peer_keys: Vec<[u8; 32]> = peers.into_iter().map(|h| h.join().unwrap()).collect::<ktchop::Result<_>>()?;
            Ok::<_, Error>((keys.to_bytes(), peer_keys))
        });
        match result {
            Ok((coord, peers)) if peers.iter().all(|p| *p == coord) => report.push(format!("N={n} ok")),
            Ok(_) => return outcome(false, format!("N={n}: peers disagree on (K1, K2)")),
            Err(e) => return outcome(false, format!("N={n}: {e}")),
        }
    }
    outcome(true, format!("{}; identical (K1, K2) everywhere, encrypted ping-pong at 1000 B and 1 MiB succeeded", report.join(", ")))
}

fn c8_performance() -> Outcome {
    let policy = RunPolicy { min_runs: 10, ..RunPolicy::ENCRYPTION };
    let enc = EncBenchConfig { reps: 10, policy, ..EncBenchConfig::new(vec![4 * MIB], vec![1, 2]) };
    let rows = bench::encbench(&enc).unwrap();
    let (t1, t2) = (rows[0].throughput_mbs, rows[1].throughput_mbs);
    let ratio = t2 / t1;
    let a = ratio >= 1.3;

    let keys = KeyPairing::generate(&mut ChaCha20Rng::seed_from_u64(8));
    let mut b = true;
    let mut pp = Vec::new();
    for size in [MIB, 4 * MIB] {
        let mut thr = [0f64; 2];
        for (slot, mode) in [Mode::Naive, Mode::Chopped].into_iter().enumerate() {
            let cfg = PingPongConfig {
                reps: Some(10),
                policy: RunPolicy { min_runs: 10, max_runs: 30, ..RunPolicy::PINGPONG },
                ..PingPongConfig::new(mode, vec![size])
            };
            let r = bench::pingpong_loopback(&cfg, &keys, ChannelOptions::default()).unwrap();
            thr[slot] = r[0].sample.throughput_mbs;
        }
        b &= thr[1] >= thr[0];
        pp.push(format!("{} MiB chopped {:.0} vs naive {:.0} MB/s", size / MIB, thr[1], thr[0]));
    }
    outcome(
        a && b,
        format!(
            "(a) encbench 4 MiB t=2/t=1 = {ratio:.2} ({t2:.0}/{t1:.0} MB/s, need >= 1.30): {}; (b) {}: {}",
            if a { "ok" } else { "not met" },
            pp.join(", "),
            if b { "ok" } else { "not met" }
        ),
    )
}

fn c9_seed_bound() -> Outcome {
    let one = BigRational::from_integer(BigInt::from(1));
    let cases: [(u128, BigRational); 3] = [
        (1, one.clone() - one.clone() / pow2(129)),
        (1 << 32, one.clone() - one.clone() / pow2(65)),
        (1 << 64, one.clone() / pow2(1)),
    ];
    let mut failures = Vec::new();
    for (q, want) in &cases {
        let got = segcrypt::seed_distinctness_bound(*q);
        if &got != want {
            failures.push(format!("q={q}: {got} != {want}"));
        }
    }
    if failures.is_empty() {
        outcome(true, "q = 1, 2^32, 2^64 give exactly 1 - 2^-129, 1 - 2^-65, 1/2")
    } else {
        outcome(false, failures.join("; "))
    }
}
