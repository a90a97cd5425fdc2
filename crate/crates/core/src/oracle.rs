//! Latency oracles: anything that can put a number on a slice's upstream
//! latency. The optimizer only sees the [`LatencyOracle`] trait; concrete
//! oracles are registered by name and picked at runtime.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::des::{simulate_slice, SimConfig};
use crate::latmodel::{analytic_latency_us, AnalyticalParams};
use crate::slice::{LatencyError, LatencyEstimate, LatencySource, OltSite, VPonSlice};

pub trait LatencyOracle: Send + Sync {
    fn name(&self) -> &str;

    fn source(&self) -> LatencySource;

    /// Mean (and, when available, tail) upstream latency of the slice.
    fn evaluate(&self, slice: &VPonSlice) -> Result<LatencyEstimate, LatencyError>;
}

impl fmt::Debug for dyn LatencyOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LatencyOracle").field("name", &self.name()).finish()
    }
}

#[derive(Clone, Debug, Default)]
pub struct AnalyticalOracle {
    pub params: AnalyticalParams,
}

impl LatencyOracle for AnalyticalOracle {
    fn name(&self) -> &str {
        "analytical"
    }

    fn source(&self) -> LatencySource {
        LatencySource::Analytical
    }

    fn evaluate(&self, slice: &VPonSlice) -> Result<LatencyEstimate, LatencyError> {
        analytic_latency_us(slice, &self.params)
    }
}

/// Runs the discrete-event simulator. The seed is mixed with the slice
/// membership so the same slice always gets the same estimate.
#[derive(Clone, Debug, Default)]
pub struct SimulatedOracle {
    pub config: SimConfig,
}

impl SimulatedOracle {
    fn slice_seed(&self, slice: &VPonSlice) -> u64 {
        // FNV-1a over the site and member ids.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.config.seed;
        let mut mix = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        mix(match slice.olt_site {
            OltSite::Mec(id) => id as u64,
            OltSite::Co => u64::MAX,
        });
        for m in &slice.members {
            mix(m.ru_id as u64);
        }
        h
    }
}

impl LatencyOracle for SimulatedOracle {
    fn name(&self) -> &str {
        "simulated"
    }

    fn source(&self) -> LatencySource {
        LatencySource::Simulated
    }

    fn evaluate(&self, slice: &VPonSlice) -> Result<LatencyEstimate, LatencyError> {
        let config = SimConfig {
            seed: self.slice_seed(slice),
            record_trace: false,
            ..self.config.clone()
        };
        simulate_slice(slice, &config).map(|r| r.estimate)
    }
}

/// Everything a registered oracle may need to configure itself.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleContext {
    pub analytical: AnalyticalParams,
    pub sim: SimConfig,
}

pub type OracleFactory = fn(&OracleContext) -> Box<dyn LatencyOracle>;

#[derive(Debug, Error, PartialEq)]
#[error("unknown latency oracle `{name}` (available: {available})")]
pub struct UnknownOracle {
    pub name: String,
    pub available: String,
}

struct Entry {
    description: &'static str,
    factory: OracleFactory,
}

/// Name-to-factory map of latency oracles.
pub struct OracleRegistry {
    entries: BTreeMap<String, Entry>,
}

impl Default for OracleRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl OracleRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// Registry holding `analytical` and `simulated`.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("analytical", "closed-form M/G/1 vacation model", |ctx| {
            Box::new(AnalyticalOracle {
                params: ctx.analytical.clone(),
            })
        });
        r.register("simulated", "discrete-event simulation", |ctx| {
            Box::new(SimulatedOracle {
                config: ctx.sim.clone(),
            })
        });
        r
    }

    /// Adds or replaces an oracle.
    pub fn register(&mut self, name: &str, description: &'static str, factory: OracleFactory) {
        self.entries
            .insert(name.to_string(), Entry { description, factory });
    }

    pub fn build(&self, name: &str, ctx: &OracleContext) -> Result<Box<dyn LatencyOracle>, UnknownOracle> {
        self.entries
            .get(name)
            .map(|e| (e.factory)(ctx))
            .ok_or_else(|| UnknownOracle {
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn describe(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries
            .iter()
            .map(|(k, e)| (k.as_str(), e.description))
    }
}
