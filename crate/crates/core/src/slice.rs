//! vPON slices and the channel model shared by both latency sources.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatencyError {
    #[error("invalid slice: {0}")]
    InvalidSlice(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("wavelength {wavelength} is unstable (utilisation {rho:.4} >= 1)")]
    Unstable { wavelength: u32, rho: f64 },
}

/// OLT endpoint of a slice: a MEC node at a macro site, or the central office.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OltSite {
    Mec(usize),
    Co,
}

impl std::fmt::Display for OltSite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OltSite::Mec(id) => write!(f, "mec{id}"),
            OltSite::Co => f.write_str("co"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceMember {
    pub ru_id: usize,
    /// One-way fiber distance from the RU to the slice's OLT.
    pub distance_km: f64,
    pub rate_bps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VPonSlice {
    pub olt_site: OltSite,
    pub members: Vec<SliceMember>,
    pub wavelengths: Vec<u32>,
}

impl VPonSlice {
    pub fn validate(&self) -> Result<(), LatencyError> {
        let bad = |m: String| Err(LatencyError::InvalidSlice(m));
        if self.members.is_empty() {
            return bad("slice has no members".into());
        }
        if self.wavelengths.is_empty() {
            return bad("slice has no wavelengths".into());
        }
        for m in &self.members {
            if !(m.distance_km >= 0.0 && m.distance_km.is_finite()) {
                return bad(format!("member {} has invalid distance", m.ru_id));
            }
            if !(m.rate_bps > 0.0 && m.rate_bps.is_finite()) {
                return bad(format!("member {} has invalid rate", m.ru_id));
            }
        }
        Ok(())
    }

    pub fn offered_rate_bps(&self) -> f64 {
        self.members.iter().map(|m| m.rate_bps).sum()
    }

    pub fn max_distance_km(&self) -> f64 {
        self.members.iter().map(|m| m.distance_km).fold(0.0, f64::max)
    }

    pub fn min_distance_km(&self) -> f64 {
        self.members
            .iter()
            .map(|m| m.distance_km)
            .fold(f64::INFINITY, f64::min)
    }

    /// Static member-to-wavelength mapping: members in order, each to the
    /// currently least-loaded wavelength (ties to the lower index).
    /// Returns member indices per entry of `wavelengths`.
    pub fn wavelength_groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.wavelengths.len()];
        let mut load = vec![0.0f64; self.wavelengths.len()];
        for (i, m) in self.members.iter().enumerate() {
            let w = (0..load.len())
                .min_by(|&a, &b| load[a].total_cmp(&load[b]))
                .expect("at least one wavelength");
            groups[w].push(i);
            load[w] += m.rate_bps;
        }
        groups
    }
}

/// Physical channel parameters of one TWDM wavelength.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub channel_rate_bps: f64,
    pub grant_cycle_us: f64,
    /// Burst overhead reserved per member ONU in every grant cycle.
    pub guard_time_us: f64,
    pub packet_bits: f64,
    pub propagation_us_per_km: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            channel_rate_bps: 50e9,
            grant_cycle_us: 62.5,
            guard_time_us: 0.5,
            packet_bits: 8000.0,
            propagation_us_per_km: 5.0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), LatencyError> {
        let fields = [
            self.channel_rate_bps,
            self.grant_cycle_us,
            self.packet_bits,
            self.propagation_us_per_km,
        ];
        if fields.iter().any(|v| !(*v > 0.0 && v.is_finite())) || !(self.guard_time_us >= 0.0) {
            return Err(LatencyError::InvalidConfig(
                "channel rate, grant cycle, packet size and propagation must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Fraction of each grant cycle left for payload once `n_onus` guard
    /// intervals are reserved. Zero when guards fill the cycle.
    pub fn payload_fraction(&self, n_onus: usize) -> f64 {
        ((self.grant_cycle_us - n_onus as f64 * self.guard_time_us) / self.grant_cycle_us).max(0.0)
    }

    /// Payload capacity of a wavelength shared by `n_onus` ONUs.
    pub fn wavelength_capacity_bps(&self, n_onus: usize) -> f64 {
        self.channel_rate_bps * self.payload_fraction(n_onus)
    }

    /// Raw serialization time of one packet at the line rate.
    pub fn serialization_us(&self) -> f64 {
        self.packet_bits / self.channel_rate_bps * 1e6
    }

    pub fn propagation_us(&self, km: f64) -> f64 {
        km * self.propagation_us_per_km
    }
}

/// Offered load of one wavelength of a slice.
#[derive(Clone, Debug, PartialEq)]
pub struct WavelengthLoad {
    pub wavelength: u32,
    pub members: Vec<usize>,
    pub offered_bps: f64,
    pub capacity_bps: f64,
}

impl WavelengthLoad {
    pub fn rho(&self) -> f64 {
        if self.capacity_bps > 0.0 {
            self.offered_bps / self.capacity_bps
        } else {
            f64::INFINITY
        }
    }
}

/// Maps members to wavelengths and rejects any wavelength whose offered
/// rate reaches its payload capacity.
pub fn wavelength_loads(
    slice: &VPonSlice,
    channel: &ChannelParams,
) -> Result<Vec<WavelengthLoad>, LatencyError> {
    slice.validate()?;
    channel.validate()?;
    let loads: Vec<WavelengthLoad> = slice
        .wavelength_groups()
        .into_iter()
        .zip(&slice.wavelengths)
        .map(|(members, &wavelength)| WavelengthLoad {
            wavelength,
            offered_bps: members.iter().map(|&i| slice.members[i].rate_bps).sum(),
            capacity_bps: channel.wavelength_capacity_bps(members.len()),
            members,
        })
        .collect();
    if let Some(w) = loads.iter().find(|w| !w.members.is_empty() && w.rho() >= 1.0) {
        return Err(LatencyError::Unstable {
            wavelength: w.wavelength,
            rho: w.rho(),
        });
    }
    Ok(loads)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencySource {
    Simulated,
    Analytical,
}

/// Upstream latency of a slice. The analytical source reports the mean only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyEstimate {
    pub mean_us: f64,
    pub p99_us: Option<f64>,
    pub frames_measured: u64,
    pub source: LatencySource,
}
