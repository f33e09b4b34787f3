//! System profiles: tuner tables plus optional model parameters, stored as
//! TOML.
//!
//! ```toml
//! [system]
//! name = "noleland"
//! total_hyperthreads = 32
//! ranks_per_node = 1
//! comm_reserved = 2
//! chunk_divisor_kib = 512
//! outstanding_cap = 64
//! max_inflight = 128
//! t_table = [{ min_kib = 64, t = 2 }, { min_kib = 128, t = 4 }, { min_kib = 512, t = 8 }]
//!
//! [model.comm]
//! eager_threshold = 17408
//! eager = { alpha_us = 5.54, beta_us_per_byte = 7.29e-5 }
//! rendezvous = { alpha_us = 5.75, beta_us_per_byte = 7.86e-5 }
//!
//! [model.enc]
//! small = { alpha_us = 4.278, a_rate = 5265.0, b_rate = 843.0 }
//! moderate = { alpha_us = 4.643, a_rate = 6072.0, b_rate = 4106.0 }
//! large = { alpha_us = 5.07, a_rate = 5893.0, b_rate = 5769.0 }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perfmodel::PerfParams;
use crate::tuner::SystemProfile;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub system: SystemProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PerfParams<f64>>,
}

pub const BUILTIN: [&str; 3] = ["noleland", "paper-tables", "bridges"];

impl Profile {
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "noleland" | "paper-tables" => Some(Self {
                system: SystemProfile::noleland(),
                model: Some(PerfParams::noleland_infiniband()),
            }),
            "bridges" => Some(Self { system: SystemProfile::bridges(), model: None }),
            _ => None,
        }
    }

    /// A builtin name, or a path to a TOML profile.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if let Some(p) = Self::builtin(name_or_path) {
            return Ok(p);
        }
        Self::load(name_or_path)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Profile(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut profile: Profile = toml::from_str(text).map_err(|e| Error::Profile(e.to_string()))?;
        profile.system.validate()?;
        if let Some(model) = &mut profile.model {
            if model.name.is_empty() {
                model.name = profile.system.name.clone();
            }
            model.validate()?;
        }
        Ok(profile)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }

    pub fn model(&self) -> Result<&PerfParams<f64>> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::Profile(format!("profile {} has no model parameters", self.system.name)))
    }
}
