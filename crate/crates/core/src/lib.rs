//! Segmented AES-GCM with pipelined (k,t)-chopping over framed channels,
//! plus the cost model, tuner, key distribution and benchmark harness that
//! go with it.

pub mod adversary;
pub mod bench;
pub mod error;
pub mod keyexchange;
pub mod perfmodel;
pub mod pipeline;
pub mod profile;
pub mod scalar;
pub mod segcrypt;
pub mod stats;
pub mod transport;
pub mod tuner;

pub use error::{Error, Result};
pub use pipeline::ChopPlan;
pub use segcrypt::{KeyPairing, SegmentedCiphertext};

use num_rational::BigRational;

pub type PerfParamsF64 = perfmodel::PerfParams<f64>;
pub type PerfParamsF32 = perfmodel::PerfParams<f32>;
/// Model parameters held as exact rationals.
pub type ExactPerfParams = perfmodel::PerfParams<BigRational>;
pub type CommParamsF64 = perfmodel::CommParams<f64>;
pub type EncTiersF64 = perfmodel::EncTiers<f64>;
