use std::io;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("segment counter {0} outside 1..=2^32-1")]
    NonceRange(u64),

    #[error("message of {len} bytes does not belong on this path (threshold {threshold})")]
    PathMismatch { len: usize, threshold: usize },

    #[error("k_large and k_small must differ")]
    KeySeparation,

    #[error("authentication failed on segment {segment}")]
    AuthFailure { segment: u32 },

    #[error("expected {expected} segments, got {actual}")]
    SegmentCountMismatch { expected: u64, actual: u64 },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("malformed frame: {0}")]
    MalformedFrame(String),

    #[error("chunk frames out of sequence: expected {expected}, got {actual}")]
    ChunkSequence { expected: u32, actual: u32 },

    #[error("announced message of {len} bytes exceeds receive cap {cap}")]
    SizeCapExceeded { len: u64, cap: u64 },

    #[error("plan does not fit message: {0}")]
    Plan(String),

    #[error("policy: {0}")]
    Policy(String),

    #[error("fit failed: {0}")]
    Fit(String),

    /// Nonlinear fit ran out of iterations; `best` is (alpha, a_rate, b_rate)
    /// at the lowest residual seen.
    #[error("fit did not converge after {iterations} iterations (best so far {best:?})")]
    FitNotConverged { iterations: usize, best: (f64, f64, f64) },

    #[error("send queue full ({0} frames in flight)")]
    Backpressure(usize),

    #[error("transport: {0}")]
    Transport(#[from] io::Error),

    #[error("channel closed")]
    ChannelClosed,

    #[error("key generation failed: {0}")]
    KeyGen(String),

    #[error("key exchange failed for peer {peer}: {reason}")]
    KeyExchange { peer: usize, reason: String },

    #[error("handshake timed out after {0:?}")]
    HandshakeTimeout(std::time::Duration),

    #[error("profile: {0}")]
    Profile(String),

    #[error("attack harness: {0}")]
    Harness(String),
}

impl Error {
    /// True for errors that originate in the byte channel rather than in
    /// the cryptography or the configuration.
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            Error::Transport(_) | Error::ChannelClosed | Error::MalformedFrame(_) | Error::HandshakeTimeout(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
