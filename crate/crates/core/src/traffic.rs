//! Fronthaul traffic: split-dependent bit rates and cell-load dynamics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TrafficError {
    #[error("load {0} outside [0, 1]")]
    LoadOutOfRange(f64),
    #[error("horizon must be positive, got {0} s")]
    NonPositiveHorizon(f64),
    #[error("invalid traffic parameter: {0}")]
    InvalidParameter(String),
}

/// Low-layer functional split of a radio unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    #[serde(rename = "7.1")]
    Split71,
    #[serde(rename = "7.2")]
    Split72,
}

impl Split {
    pub fn label(self) -> &'static str {
        match self {
            Split::Split71 => "7.1",
            Split::Split72 => "7.2",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Linear,
}

/// Fronthaul rate envelope of one split, for 4 antennas, 4 MIMO layers and
/// 100 MHz of cell bandwidth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRateModel {
    pub split: Split,
    pub rate_min_bps: f64,
    pub rate_max_bps: f64,
    #[serde(default)]
    pub interpolation: Interpolation,
}

impl SplitRateModel {
    pub const SPLIT_71: SplitRateModel = SplitRateModel {
        split: Split::Split71,
        rate_min_bps: 1.378e9,
        rate_max_bps: 7.384e9,
        interpolation: Interpolation::Linear,
    };

    pub const SPLIT_72: SplitRateModel = SplitRateModel {
        split: Split::Split72,
        rate_min_bps: 273.98e6,
        rate_max_bps: 2.92e9,
        interpolation: Interpolation::Linear,
    };

    pub fn for_split(split: Split) -> SplitRateModel {
        match split {
            Split::Split71 => Self::SPLIT_71,
            Split::Split72 => Self::SPLIT_72,
        }
    }
}

/// Fronthaul bit rate of an RU at the given cell load.
pub fn fronthaul_rate(model: &SplitRateModel, load: f64) -> Result<f64, TrafficError> {
    if !(0.0..=1.0).contains(&load) {
        return Err(TrafficError::LoadOutOfRange(load));
    }
    Ok(match model.interpolation {
        Interpolation::Linear => {
            model.rate_min_bps + load * (model.rate_max_bps - model.rate_min_bps)
        }
    })
}

/// Per-RU traffic description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuTraffic {
    pub split: Split,
    pub load: f64,
    /// Connection arrivals per second; only used by [`evolve_load`].
    #[serde(default)]
    pub arrival_rate: f64,
    /// Mean connection holding time in seconds.
    #[serde(default = "default_holding_time")]
    pub mean_holding_time: f64,
}

fn default_holding_time() -> f64 {
    1.0
}

impl RuTraffic {
    pub fn static_load(split: Split, load: f64) -> Self {
        Self {
            split,
            load,
            arrival_rate: 0.0,
            mean_holding_time: default_holding_time(),
        }
    }

    pub fn rate_bps(&self) -> Result<f64, TrafficError> {
        fronthaul_rate(&SplitRateModel::for_split(self.split), self.load)
    }
}

/// Traffic of every RU in a layout, indexed by small-cell id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficProfile {
    pub rus: Vec<RuTraffic>,
    /// Connections corresponding to a fully loaded cell.
    #[serde(default = "default_max_connections")]
    pub max_connections: u32,
}

fn default_max_connections() -> u32 {
    100
}

impl TrafficProfile {
    /// Every RU keeps the split it was given and runs at `load`.
    pub fn uniform(splits: impl IntoIterator<Item = Split>, load: f64) -> Self {
        Self {
            rus: splits
                .into_iter()
                .map(|s| RuTraffic::static_load(s, load))
                .collect(),
            max_connections: default_max_connections(),
        }
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        for ru in &self.rus {
            if !(0.0..=1.0).contains(&ru.load) {
                return Err(TrafficError::LoadOutOfRange(ru.load));
            }
        }
        if self.max_connections == 0 {
            return Err(TrafficError::InvalidParameter("max_connections must be >= 1".into()));
        }
        Ok(())
    }
}

/// Piecewise-constant load trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadSeries {
    /// `(time_s, load)` change points; the load holds until the next point.
    pub points: Vec<(f64, f64)>,
    pub horizon_s: f64,
}

impl LoadSeries {
    /// Time-weighted mean load over the horizon.
    pub fn time_average(&self) -> f64 {
        let mut acc = 0.0;
        for (i, &(t, load)) in self.points.iter().enumerate() {
            let end = self.points.get(i + 1).map_or(self.horizon_s, |p| p.0);
            acc += load * (end - t);
        }
        acc / self.horizon_s
    }

    pub fn events(&self) -> usize {
        self.points.len().saturating_sub(1)
    }
}

/// Evolves one RU's load as a birth-death process: Poisson connection
/// arrivals, exponential holding times, normalised by `max_connections` and
/// clamped to [0, 1].
pub fn evolve_load(
    ru: &RuTraffic,
    max_connections: u32,
    seed: u64,
    horizon_s: f64,
) -> Result<LoadSeries, TrafficError> {
    if !(horizon_s > 0.0) {
        return Err(TrafficError::NonPositiveHorizon(horizon_s));
    }
    if !(0.0..=1.0).contains(&ru.load) {
        return Err(TrafficError::LoadOutOfRange(ru.load));
    }
    if ru.arrival_rate < 0.0 || !(ru.mean_holding_time > 0.0) || max_connections == 0 {
        return Err(TrafficError::InvalidParameter(
            "arrival_rate must be >= 0, mean_holding_time and max_connections > 0".into(),
        ));
    }
    let max = max_connections as f64;
    let mut connections = (ru.load * max).round() as u64;
    let to_load = |n: u64| (n as f64 / max).clamp(0.0, 1.0);
    let mut points = vec![(0.0, to_load(connections))];
    // Zero arrival rate means the RU is not in dynamic mode: load is static.
    if ru.arrival_rate == 0.0 {
        return Ok(LoadSeries { points, horizon_s });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Exp::new(1.0).expect("unit rate");
    let death_rate = 1.0 / ru.mean_holding_time;
    let mut t = 0.0;
    loop {
        // Competing exponentials: next arrival vs next of `connections` departures.
        let total = ru.arrival_rate + connections as f64 * death_rate;
        if total == 0.0 {
            break;
        }
        t += unit.sample(&mut rng) / total;
        if t >= horizon_s {
            break;
        }
        if rng.random::<f64>() * total < ru.arrival_rate {
            connections += 1;
        } else {
            connections -= 1;
        }
        points.push((t, to_load(connections)));
    }
    Ok(LoadSeries { points, horizon_s })
}
