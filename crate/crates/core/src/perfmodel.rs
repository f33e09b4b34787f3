//! Analytic cost model for (k,t)-chopped ping-pong.
//!
//! Communication follows the Hockney model `T_comm(m) = alpha + beta m`
//! with one parameter row per protocol regime. Multi-lane encryption follows
//! the max-rate model `T_enc(m, t) = alpha_enc + m / (A + B (t - 1))` with one
//! row per message-size tier. A full (k,t) transfer of `m` bytes with chunk
//! size `s = ceil(m / k)` costs
//!
//! ```text
//! 2 T_enc(s, t) + (k - 1) max(T_enc(s, t), beta s) + T_comm(s)
//! ```
//!
//! Times are microseconds, sizes bytes, rates bytes per microsecond.

use std::collections::BTreeMap;
use std::io::Read;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default eager/rendezvous switch point, in bytes.
pub const DEFAULT_EAGER_THRESHOLD: u64 = 17 * 1024;

pub const SMALL_TIER_END: u64 = 32 * 1024;
pub const MODERATE_TIER_END: u64 = 1024 * 1024;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Eager,
    Rendezvous,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Small,
    Moderate,
    Large,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Small, Tier::Moderate, Tier::Large];

    pub fn name(self) -> &'static str {
        match self {
            Tier::Small => "small",
            Tier::Moderate => "moderate",
            Tier::Large => "large",
        }
    }
}

pub fn tier_of(m: u64) -> Tier {
    if m < SMALL_TIER_END {
        Tier::Small
    } else if m < MODERATE_TIER_END {
        Tier::Moderate
    } else {
        Tier::Large
    }
}

/// One Hockney row.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct HockneyParams<S = f64> {
    pub alpha_us: S,
    pub beta_us_per_byte: S,
}

impl<S: Scalar> HockneyParams<S> {
    pub fn time(&self, m: u64) -> S {
        self.alpha_us.clone() + self.beta_us_per_byte.clone() * S::from_u64(m)
    }
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct CommParams<S = f64> {
    pub eager: HockneyParams<S>,
    pub rendezvous: HockneyParams<S>,
    /// Largest message sent eagerly.
    pub eager_threshold: u64,
}

impl<S: Scalar> CommParams<S> {
    pub fn regime(&self, m: u64) -> Regime {
        if m <= self.eager_threshold {
            Regime::Eager
        } else {
            Regime::Rendezvous
        }
    }

    pub fn row(&self, regime: Regime) -> &HockneyParams<S> {
        match regime {
            Regime::Eager => &self.eager,
            Regime::Rendezvous => &self.rendezvous,
        }
    }

    pub fn row_for(&self, m: u64) -> &HockneyParams<S> {
        self.row(self.regime(m))
    }
}

/// One max-rate row.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct EncParams<S = f64> {
    pub alpha_us: S,
    /// Throughput of the first lane.
    pub a_rate: S,
    /// Throughput added by each further lane.
    pub b_rate: S,
}

impl<S: Scalar> EncParams<S> {
    pub fn time(&self, m: u64, t: u32) -> S {
        let lanes = S::from_u64(t.saturating_sub(1) as u64);
        let rate = self.a_rate.clone() + self.b_rate.clone() * lanes;
        self.alpha_us.clone() + S::from_u64(m) / rate
    }
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct EncTiers<S = f64> {
    pub small: EncParams<S>,
    pub moderate: EncParams<S>,
    pub large: EncParams<S>,
}

impl<S> EncTiers<S> {
    pub fn get(&self, tier: Tier) -> &EncParams<S> {
        match tier {
            Tier::Small => &self.small,
            Tier::Moderate => &self.moderate,
            Tier::Large => &self.large,
        }
    }

    pub fn get_mut(&mut self, tier: Tier) -> &mut EncParams<S> {
        match tier {
            Tier::Small => &mut self.small,
            Tier::Moderate => &mut self.moderate,
            Tier::Large => &mut self.large,
        }
    }
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct PerfParams<S = f64> {
    #[serde(default)]
    pub name: String,
    pub comm: CommParams<S>,
    pub enc: EncTiers<S>,
}

fn dec<S: Scalar>(s: &str) -> S {
    S::from_decimal(s).expect("literal parameter")
}

impl<S: Scalar> PerfParams<S> {
    /// Fitted parameters for the InfiniBand cluster used to derive the
    /// published thread tables.
    pub fn noleland_infiniband() -> Self {
        let enc = |a: &str, b: &str, c: &str| EncParams { alpha_us: dec(a), a_rate: dec(b), b_rate: dec(c) };
        Self {
            name: "noleland".into(),
            comm: CommParams {
                eager: HockneyParams { alpha_us: dec("5.54"), beta_us_per_byte: dec("7.29e-5") },
                rendezvous: HockneyParams { alpha_us: dec("5.75"), beta_us_per_byte: dec("7.86e-5") },
                eager_threshold: DEFAULT_EAGER_THRESHOLD,
            },
            enc: EncTiers {
                small: enc("4.278", "5265", "843"),
                moderate: enc("4.643", "6072", "4106"),
                large: enc("5.07", "5893", "5769"),
            },
        }
    }

    /// Converts to another scalar through the shortest decimal form of each
    /// `f64` value.
    pub fn cast<T: Scalar>(&self) -> PerfParams<T> {
        let c = |v: &S| -> T { T::from_decimal(&format!("{:e}", v.as_f64())).expect("finite parameter") };
        let h = |p: &HockneyParams<S>| HockneyParams { alpha_us: c(&p.alpha_us), beta_us_per_byte: c(&p.beta_us_per_byte) };
        let e = |p: &EncParams<S>| EncParams { alpha_us: c(&p.alpha_us), a_rate: c(&p.a_rate), b_rate: c(&p.b_rate) };
        PerfParams {
            name: self.name.clone(),
            comm: CommParams {
                eager: h(&self.comm.eager),
                rendezvous: h(&self.comm.rendezvous),
                eager_threshold: self.comm.eager_threshold,
            },
            enc: EncTiers { small: e(&self.enc.small), moderate: e(&self.enc.moderate), large: e(&self.enc.large) },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let zero = S::zero();
        for (name, row) in [("eager", &self.comm.eager), ("rendezvous", &self.comm.rendezvous)] {
            if row.alpha_us < zero || row.beta_us_per_byte <= zero {
                return Err(Error::Profile(format!("{name} row needs alpha >= 0 and beta > 0")));
            }
        }
        for tier in Tier::ALL {
            let row = self.enc.get(tier);
            if row.alpha_us < zero || row.a_rate <= zero || row.b_rate < zero {
                return Err(Error::Profile(format!("{} tier needs alpha >= 0, A > 0, B >= 0", tier.name())));
            }
        }
        Ok(())
    }
}

pub fn t_comm<S: Scalar>(m: u64, comm: &CommParams<S>) -> S {
    comm.row_for(m).time(m)
}

/// Encryption time of `m` bytes on `t` lanes, with the row chosen by `m`.
pub fn t_enc<S: Scalar>(m: u64, t: u32, enc: &EncTiers<S>) -> S {
    enc.get(tier_of(m)).time(m, t)
}

/// Which size picks the encryption tier inside [`t_total`].
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum TierBasis {
    /// The whole message `m`.
    #[default]
    Message,
    /// The chunk size `s`.
    Chunk,
}

/// Predicted one-way time of an `m`-byte message under (k,t)-chopping.
/// The encryption tier follows `m`; see [`t_total_with`].
pub fn t_total<S: Scalar>(m: u64, k: u64, t: u32, p: &PerfParams<S>) -> Result<S> {
    t_total_with(m, k, t, p, TierBasis::Message)
}

/// [`t_total`] with an explicit tier basis. The communication regime
/// always follows the chunk size.
pub fn t_total_with<S: Scalar>(m: u64, k: u64, t: u32, p: &PerfParams<S>, basis: TierBasis) -> Result<S> {
    if k == 0 || t == 0 {
        return Err(Error::Plan(format!("k={k} and t={t} must be positive")));
    }
    if m < k * t as u64 {
        return Err(Error::Plan(format!("{m} bytes cannot fill {k}x{t} segments")));
    }
    let s = m.div_ceil(k);
    let tier = match basis {
        TierBasis::Message => tier_of(m),
        TierBasis::Chunk => tier_of(s),
    };
    let enc = p.enc.get(tier).time(s, t);
    let wire = p.comm.row_for(s).beta_us_per_byte.clone() * S::from_u64(s);
    let steady = S::from_u64(k - 1) * S::max_of(enc.clone(), wire);
    Ok(S::from_u64(2) * enc + steady + t_comm(s, &p.comm))
}

// ---------------------------------------------------------------------------
// Fitting

fn ols<F: Float>(points: &[(F, F)]) -> Result<(F, F)> {
    let n = F::from(points.len()).unwrap();
    let mean_x = points.iter().fold(F::zero(), |a, p| a + p.0) / n;
    let mean_y = points.iter().fold(F::zero(), |a, p| a + p.1) / n;
    let (sxx, sxy) = points.iter().fold((F::zero(), F::zero()), |(sxx, sxy), &(x, y)| {
        let dx = x - mean_x;
        (sxx + dx * dx, sxy + dx * (y - mean_y))
    });
    if sxx <= F::zero() {
        return Err(Error::Fit("all sample sizes are equal".into()));
    }
    let slope = sxy / sxx;
    Ok((mean_y - slope * mean_x, slope))
}

/// Least-squares Hockney line through `(size, microseconds)` samples.
pub fn fit_line<F: Float>(samples: &[(u64, F)]) -> Result<HockneyParams<F>> {
    if samples.len() < 2 {
        return Err(Error::Fit(format!("need at least 2 samples, got {}", samples.len())));
    }
    let points: Vec<(F, F)> = samples.iter().map(|&(m, y)| (F::from(m).unwrap(), y)).collect();
    let (alpha, beta) = ols(&points)?;
    Ok(HockneyParams { alpha_us: alpha, beta_us_per_byte: beta })
}

/// Fits one Hockney row per regime.
pub fn fit_hockney<F: Float>(samples: &[(u64, F)], eager_threshold: u64) -> Result<CommParams<F>> {
    let (eager, rendezvous): (Vec<_>, Vec<_>) = samples.iter().partition(|(m, _)| *m <= eager_threshold);
    let fit = |name: &str, rows: &[(u64, F)]| {
        fit_line(rows).and_then(|p| {
            if p.beta_us_per_byte > F::zero() {
                Ok(p)
            } else {
                Err(Error::Fit(format!("{name} regime has non-positive slope")))
            }
        })
        .map_err(|e| Error::Fit(format!("{name} regime: {e}")))
    };
    Ok(CommParams {
        eager: fit("eager", &eager)?,
        rendezvous: fit("rendezvous", &rendezvous)?,
        eager_threshold,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Stop when every parameter moves by less than this relative amount.
    pub rel_step_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iterations: 10_000, rel_step_tol: 1e-10 }
    }
}

/// Rough starting point for the nonlinear fit.
fn initial_guess<F: Float>(samples: &[(u64, u32, F)]) -> [F; 3] {
    let mut by_t: BTreeMap<u32, Vec<(u64, F)>> = BTreeMap::new();
    for &(m, t, y) in samples {
        by_t.entry(t).or_default().push((m, y));
    }
    let min_time = samples.iter().map(|s| s.2).fold(F::infinity(), F::min);
    let smallest = samples.iter().min_by_key(|s| s.0).map(|s| s.2).unwrap_or(min_time);

    // Intercept and rate of each lane group, when its sizes vary.
    let lines: Vec<(u32, Option<(F, F)>)> = by_t
        .iter()
        .map(|(&t, pts)| (t, fit_line(pts).ok().map(|h| (h.alpha_us, h.beta_us_per_byte))))
        .collect();
    let alpha = lines
        .first()
        .and_then(|(_, l)| l.map(|(a, _)| a))
        .filter(|a| *a > F::zero() && *a < smallest)
        .unwrap_or(smallest * F::from(0.5).unwrap());

    let rate_of = |t: u32| -> F {
        let pts = &by_t[&t];
        match lines.iter().find(|(lt, _)| *lt == t).and_then(|(_, l)| *l) {
            Some((_, slope)) if slope > F::zero() => F::one() / slope,
            _ => {
                let (m, y) = pts[0];
                F::from(m).unwrap() / (y - alpha).max(F::epsilon())
            }
        }
    };
    let ts: Vec<u32> = by_t.keys().copied().collect();
    let t1 = ts[0];
    let r1 = rate_of(t1);
    let (a, b) = if ts.len() >= 2 {
        let t2 = ts[1];
        let r2 = rate_of(t2);
        let b = ((r2 - r1) / F::from(t2 - t1).unwrap()).max(r1 * F::from(0.01).unwrap());
        (r1 - b * F::from(t1 - 1).unwrap(), b)
    } else {
        (r1, F::zero())
    };
    [alpha.max(F::zero()), a.max(r1 * F::from(0.1).unwrap()), b.max(F::zero())]
}

fn model<F: Float>(p: &[F; 3], m: u64, t: u32) -> F {
    p[0] + F::from(m).unwrap() / (p[1] + p[2] * F::from(t - 1).unwrap())
}

fn cost<F: Float>(p: &[F; 3], samples: &[(u64, u32, F)]) -> F {
    samples.iter().fold(F::zero(), |acc, &(m, t, y)| {
        let r = model(p, m, t) - y;
        acc + r * r
    })
}

fn solve3<F: Float>(mut a: [[F; 3]; 3], mut b: [F; 3]) -> Option<[F; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[pivot][col].abs() <= F::min_positive_value() {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] = a[row][k] - f * a[col][k];
            }
            b[row] = b[row] - f * b[col];
        }
    }
    let mut x = [F::zero(); 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for k in row + 1..3 {
            acc = acc - a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Projected Levenberg-Marquardt fit of one max-rate row to
/// `(size, lanes, microseconds)` samples.
pub fn fit_maxrate_row<F: Float>(samples: &[(u64, u32, F)], opts: FitOptions) -> Result<EncParams<F>> {
    if samples.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 samples, got {}", samples.len())));
    }
    if samples.iter().any(|s| s.1 == 0) {
        return Err(Error::Fit("lane count must be positive".into()));
    }
    let first_t = samples[0].1;
    if samples.iter().all(|s| s.1 == first_t) {
        return Err(Error::Fit("samples span a single lane count; B is unidentifiable".into()));
    }

    let project = |p: [F; 3], floor_a: F| [p[0].max(F::zero()), p[1].max(floor_a), p[2].max(F::zero())];
    let mut p = initial_guess(samples);
    let floor_a = p[1] * F::from(1e-6).unwrap();
    let mut current = cost(&p, samples);
    let mut best = (p, current);
    let mut lambda = F::from(1e-3).unwrap();
    let tol = F::from(opts.rel_step_tol).unwrap();

    for _ in 0..opts.max_iterations {
        if current == F::zero() {
            return Ok(to_row(p));
        }
        let mut jtj = [[F::zero(); 3]; 3];
        let mut jtr = [F::zero(); 3];
        for &(m, t, y) in samples {
            let lanes = F::from(t - 1).unwrap();
            let denom = p[1] + p[2] * lanes;
            let mf = F::from(m).unwrap();
            let d = -mf / (denom * denom);
            let j = [F::one(), d, d * lanes];
            let r = model(&p, m, t) - y;
            for a in 0..3 {
                jtr[a] = jtr[a] + j[a] * r;
                for b in 0..3 {
                    jtj[a][b] = jtj[a][b] + j[a] * j[b];
                }
            }
        }

        let mut accepted = false;
        for _ in 0..64 {
            let mut damped = jtj;
            for (i, row) in damped.iter_mut().enumerate() {
                row[i] = row[i] + lambda * jtj[i][i].max(F::epsilon());
            }
            let Some(step) = solve3(damped, [-jtr[0], -jtr[1], -jtr[2]]) else {
                lambda = lambda * F::from(10.0).unwrap();
                continue;
            };
            let candidate = project([p[0] + step[0], p[1] + step[1], p[2] + step[2]], floor_a);
            let c = cost(&candidate, samples);
            if c <= current {
                let moved = (0..3).all(|i| {
                    let scale = candidate[i].abs().max(p[i].abs()).max(F::epsilon());
                    (candidate[i] - p[i]).abs() <= tol * scale
                });
                p = candidate;
                current = c;
                lambda = (lambda / F::from(10.0).unwrap()).max(F::from(1e-12).unwrap());
                accepted = true;
                if current < best.1 {
                    best = (p, current);
                }
                if moved {
                    return Ok(to_row(p));
                }
                break;
            }
            lambda = lambda * F::from(10.0).unwrap();
            if lambda > F::from(1e16).unwrap() {
                break;
            }
        }
        if !accepted {
            // No downhill step exists at any damping: a stationary point.
            return Ok(to_row(best.0));
        }
    }
    let b = best.0;
    Err(Error::FitNotConverged {
        iterations: opts.max_iterations,
        best: (b[0].to_f64().unwrap(), b[1].to_f64().unwrap(), b[2].to_f64().unwrap()),
    })
}

fn to_row<F: Float>(p: [F; 3]) -> EncParams<F> {
    EncParams { alpha_us: p[0], a_rate: p[1], b_rate: p[2] }
}

/// Fits every tier that has samples. Tiers with no samples are omitted; a
/// tier with too few samples is an error.
pub fn fit_maxrate<F: Float>(samples: &[(u64, u32, F)], opts: FitOptions) -> Result<BTreeMap<Tier, EncParams<F>>> {
    let mut by_tier: BTreeMap<Tier, Vec<(u64, u32, F)>> = BTreeMap::new();
    for &s in samples {
        by_tier.entry(tier_of(s.0)).or_default().push(s);
    }
    if by_tier.is_empty() {
        return Err(Error::Fit("no samples".into()));
    }
    by_tier
        .into_iter()
        .map(|(tier, rows)| {
            fit_maxrate_row(&rows, opts)
                .map(|p| (tier, p))
                .map_err(|e| match e {
                    Error::Fit(msg) => Error::Fit(format!("{} tier: {msg}", tier.name())),
                    other => other,
                })
        })
        .collect()
}

/// One benchmark row as ingested for fitting. Extra CSV columns are ignored.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct SampleRow {
    pub scenario: String,
    pub size_bytes: u64,
    pub threads: u32,
    pub reps: u64,
    pub median_us: f64,
    pub stddev_us: f64,
}

pub fn read_samples<R: Read>(reader: R) -> Result<Vec<SampleRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize()
        .map(|row| row.map_err(|e| Error::Fit(format!("bad sample row: {e}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> PerfParams<f64> {
        PerfParams::noleland_infiniband()
    }

    #[test]
    fn tier_boundaries() {
        assert_eq!(tier_of(32767), Tier::Small);
        assert_eq!(tier_of(32768), Tier::Moderate);
        assert_eq!(tier_of(1048575), Tier::Moderate);
        assert_eq!(tier_of(1048576), Tier::Large);
        assert_eq!(tier_of(0), Tier::Small);
    }

    #[test]
    fn zero_size_costs_are_the_latencies() {
        let p = reference();
        assert_eq!(t_comm(0, &p.comm), 5.54);
        assert_eq!(t_enc(0, 7, &p.enc), 4.278);
    }

    #[test]
    fn regime_switch() {
        let p = reference();
        assert_eq!(p.comm.regime(DEFAULT_EAGER_THRESHOLD), Regime::Eager);
        assert_eq!(p.comm.regime(DEFAULT_EAGER_THRESHOLD + 1), Regime::Rendezvous);
    }

    #[test]
    fn t_total_rejects_degenerate_plans() {
        let p = reference();
        assert!(t_total(100, 0, 1, &p).is_err());
        assert!(t_total(10, 4, 4, &p).is_err());
    }

    #[test]
    fn tier_basis() {
        let p = reference();
        let m = 4 << 20;
        // s = 512 KiB sits in the moderate tier, m in the large one
        let by_message = t_total_with(m, 8, 8, &p, TierBasis::Message).unwrap();
        let by_chunk = t_total_with(m, 8, 8, &p, TierBasis::Chunk).unwrap();
        let beta_s = 7.86e-5 * 524288.0;
        let comm = 5.75 + beta_s;
        let large = 5.07 + 524288.0 / 46276.0;
        let moderate = 4.643 + 524288.0 / (6072.0 + 7.0 * 4106.0);
        assert!((by_message - (2.0 * large + 7.0 * beta_s + comm)).abs() < 1e-9);
        assert!((by_chunk - (2.0 * moderate + 7.0 * beta_s + comm)).abs() < 1e-9);
        assert_eq!(t_total(m, 8, 8, &p).unwrap(), by_message);
        // k = 1 has s = m, so the basis does not matter
        assert_eq!(
            t_total_with(m, 1, 8, &p, TierBasis::Chunk).unwrap(),
            t_total_with(m, 1, 8, &p, TierBasis::Message).unwrap()
        );
    }

    #[test]
    fn single_lane_group_is_unidentifiable() {
        let rows: Vec<_> = [1000u64, 2000, 3000].iter().map(|&m| (m, 2u32, 1.0 + m as f64 / 100.0)).collect();
        assert!(matches!(fit_maxrate_row(&rows, FitOptions::default()), Err(Error::Fit(_))));
    }

    #[test]
    fn equal_sizes_are_degenerate() {
        assert!(matches!(fit_line(&[(10u64, 1.0f64), (10, 2.0)]), Err(Error::Fit(_))));
    }

    #[test]
    fn two_points_interpolate_exactly() {
        let h = fit_line(&[(1000u64, 6.0f64), (3000, 8.0)]).unwrap();
        assert!((h.alpha_us - 5.0).abs() < 1e-12);
        assert!((h.beta_us_per_byte - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn exhausted_iterations_report_best() {
        let p = EncParams { alpha_us: 4.0, a_rate: 5000.0, b_rate: 900.0 };
        let rows: Vec<_> = [1024u64, 4096, 8192, 16384]
            .iter()
            .flat_map(|&m| [1u32, 2, 4].map(|t| (m, t, p.time(m, t) * (1.0 + 0.01 * ((m + t as u64) % 3) as f64))))
            .collect();
        let opts = FitOptions { max_iterations: 1, rel_step_tol: 0.0 };
        match fit_maxrate_row(&rows, opts) {
            Err(Error::FitNotConverged { iterations: 1, best }) => assert!(best.1 > 0.0),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn sample_csv_ignores_extra_columns() {
        let text = "scenario,size_bytes,threads,k,mode,reps,median_us,stddev_us,throughput_mbs\n\
                    pingpong,1024,1,1,unencrypted,100,5.6,0.1,182.0\n";
        let rows = read_samples(text.as_bytes()).unwrap();
        assert_eq!(rows[0].size_bytes, 1024);
        assert_eq!(rows[0].median_us, 5.6);
    }
}
