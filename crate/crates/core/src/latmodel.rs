//! Closed-form upstream latency of a vPON slice.
//!
//! Each wavelength is treated as an M/G/1 queue with multiple vacations: the
//! superposed Poisson frame streams of its members are served at the
//! guard-discounted payload rate, and an idle wavelength waits one full
//! grant cycle before serving again. The mean latency is
//!
//! ```text
//! T = d_max + GC/2 + λ·E[S²] / (2(1 − ρ)) + E[S]
//! ```
//!
//! where `d_max` is the largest member propagation delay and `S` the frame
//! serialization time on the payload rate. With several wavelengths the
//! per-wavelength queueing terms are averaged by frame rate.

use serde::{Deserialize, Serialize};

use crate::slice::{
    wavelength_loads, ChannelParams, LatencyError, LatencyEstimate, LatencySource, OltSite,
    SliceMember, VPonSlice,
};
use crate::traffic::{fronthaul_rate, SplitRateModel, TrafficError};

/// Version tag of the queueing approximation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueueModel {
    /// M/G/1 waiting time plus half a grant cycle of vacation.
    #[default]
    Mg1VacationV1,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticalParams {
    pub channel: ChannelParams,
    pub model: QueueModel,
}

impl AnalyticalParams {
    /// Share of the line rate lost to guard intervals for `n_onus` members.
    pub fn guard_overhead_fraction(&self, n_onus: usize) -> f64 {
        1.0 - self.channel.payload_fraction(n_onus)
    }
}

/// Components of the analytical mean latency, in microseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub propagation_us: f64,
    pub grant_wait_us: f64,
    pub queueing_us: f64,
    pub serialization_us: f64,
}

impl LatencyBreakdown {
    pub fn total_us(&self) -> f64 {
        self.propagation_us + self.grant_wait_us + self.queueing_us + self.serialization_us
    }
}

pub fn analytic_breakdown(
    slice: &VPonSlice,
    params: &AnalyticalParams,
) -> Result<LatencyBreakdown, LatencyError> {
    let ch = &params.channel;
    let loads = wavelength_loads(slice, ch)?;
    let mut total_rate = 0.0;
    let mut queueing = 0.0;
    let mut serialization = 0.0;
    for w in loads.iter().filter(|w| !w.members.is_empty()) {
        let lambda = w.offered_bps / ch.packet_bits / 1e6; // frames per us
        let service = ch.packet_bits / (w.capacity_bps / 1e6); // us
        let second_moment = service * service;
        let rho = lambda * service;
        let wait = match params.model {
            QueueModel::Mg1VacationV1 => lambda * second_moment / (2.0 * (1.0 - rho)),
        };
        total_rate += lambda;
        queueing += lambda * wait;
        serialization += lambda * service;
    }
    Ok(LatencyBreakdown {
        propagation_us: ch.propagation_us(slice.max_distance_km()),
        grant_wait_us: ch.grant_cycle_us / 2.0,
        queueing_us: queueing / total_rate,
        serialization_us: serialization / total_rate,
    })
}

/// Mean upstream latency of `slice` from the closed-form model.
pub fn analytic_latency_us(
    slice: &VPonSlice,
    params: &AnalyticalParams,
) -> Result<LatencyEstimate, LatencyError> {
    let b = analytic_breakdown(slice, params)?;
    Ok(LatencyEstimate {
        mean_us: b.total_us(),
        p99_us: None,
        frames_measured: 0,
        source: LatencySource::Analytical,
    })
}

/// A slice of `n71` split-7.1 RUs followed by `n72` split-7.2 RUs, all at
/// `load` and `distance_km` from the OLT.
pub fn composed_slice(
    n71: usize,
    n72: usize,
    load: f64,
    distance_km: f64,
    wavelengths: usize,
) -> Result<VPonSlice, TrafficError> {
    let r71 = fronthaul_rate(&SplitRateModel::SPLIT_71, load)?;
    let r72 = fronthaul_rate(&SplitRateModel::SPLIT_72, load)?;
    let members = std::iter::repeat_n(r71, n71)
        .chain(std::iter::repeat_n(r72, n72))
        .enumerate()
        .map(|(ru_id, rate_bps)| SliceMember {
            ru_id,
            distance_km,
            rate_bps,
        })
        .collect();
    Ok(VPonSlice {
        olt_site: OltSite::Mec(0),
        members,
        wavelengths: (0..wavelengths as u32).collect(),
    })
}

/// Whether a single-wavelength slice of `n71` split-7.1 and `n72` split-7.2
/// RUs at `load` meets `threshold_us`. The empty slice is feasible; unstable
/// slices are not.
pub fn max_members_feasible(
    n71: usize,
    n72: usize,
    load: f64,
    threshold_us: f64,
    distance_km: f64,
    params: &AnalyticalParams,
) -> bool {
    if n71 + n72 == 0 {
        return true;
    }
    let Ok(slice) = composed_slice(n71, n72, load, distance_km, 1) else {
        return false;
    };
    analytic_latency_us(&slice, params).is_ok_and(|e| e.mean_us <= threshold_us)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> AnalyticalParams {
        AnalyticalParams::default()
    }

    #[test]
    fn light_single_onu_is_propagation_plus_half_cycle() {
        let s = VPonSlice {
            olt_site: OltSite::Mec(0),
            members: vec![SliceMember {
                ru_id: 0,
                distance_km: 1.0,
                rate_bps: 1e3,
            }],
            wavelengths: vec![0],
        };
        let e = analytic_latency_us(&s, &params()).unwrap();
        let service = 8000.0 / (50e9 * 62.0 / 62.5) * 1e6;
        assert!((e.mean_us - (5.0 + 31.25 + service)).abs() < 1e-6, "{}", e.mean_us);
        assert_eq!(e.source, LatencySource::Analytical);
        assert_eq!(e.p99_us, None);
    }

    #[test]
    fn queue_term_diverges_near_saturation() {
        let ch = ChannelParams::default();
        let cap = ch.wavelength_capacity_bps(1);
        let s = VPonSlice {
            olt_site: OltSite::Mec(0),
            members: vec![SliceMember {
                ru_id: 0,
                distance_km: 0.0,
                rate_bps: 0.999 * cap,
            }],
            wavelengths: vec![0],
        };
        let b = analytic_breakdown(&s, &params()).unwrap();
        // rho/(2(1-rho)) * S = 499.5 * S
        assert!((b.queueing_us - 499.5 * b.serialization_us).abs() < 1e-6);
        assert!(b.total_us() > 100.0);
    }

    #[test]
    fn unstable_slice_errors() {
        let s = composed_slice(16, 0, 0.5, 1.0, 1).unwrap();
        assert!(matches!(
            analytic_latency_us(&s, &params()),
            Err(LatencyError::Unstable { .. })
        ));
    }

    #[test]
    fn empty_slice_is_feasible() {
        assert!(max_members_feasible(0, 0, 0.9, 100.0, 1.0, &params()));
        assert!(!max_members_feasible(16, 0, 0.5, f64::INFINITY, 1.0, &params()));
    }

    #[test]
    fn mixed_slice_uses_superposed_rate() {
        let s = composed_slice(2, 3, 0.5, 1.0, 1).unwrap();
        let b = analytic_breakdown(&s, &params()).unwrap();
        let lambda = s.offered_rate_bps() / 8000.0 / 1e6;
        let service = 8000.0 / (50e9 * (62.5 - 2.5) / 62.5 / 1e6);
        let rho = lambda * service;
        assert!((b.queueing_us - lambda * service * service / (2.0 * (1.0 - rho))).abs() < 1e-12);
    }

    #[test]
    fn region_is_downward_closed_and_nested() {
        let p = params();
        for n71 in 0..10 {
            for n72 in 0..30 {
                let hi = max_members_feasible(n71, n72, 0.9, 100.0, 1.0, &p);
                let lo = max_members_feasible(n71, n72, 0.5, 100.0, 1.0, &p);
                assert!(!hi || lo, "({n71},{n72}) feasible at 0.9 but not 0.5");
                if hi && n72 > 0 {
                    assert!(max_members_feasible(n71, n72 - 1, 0.9, 100.0, 1.0, &p));
                }
                if hi && n71 > 0 {
                    assert!(max_members_feasible(n71 - 1, n72, 0.9, 100.0, 1.0, &p));
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn monotone_in_members_load_and_split(
                n71 in 0usize..8, n72 in 1usize..20, load in 0.0f64..0.95, dl in 0.0f64..0.05,
            ) {
                let p = params();
                let lat = |a: usize, b: usize, l: f64| {
                    composed_slice(a, b, l, 1.0, 1)
                        .ok()
                        .and_then(|s| analytic_latency_us(&s, &p).ok())
                        .map_or(f64::INFINITY, |e| e.mean_us)
                };
                let base = lat(n71, n72, load);
                prop_assert!(lat(n71, n72 + 1, load) >= base);
                prop_assert!(lat(n71 + 1, n72, load) >= base);
                prop_assert!(lat(n71, n72, (load + dl).min(1.0)) >= base);
                // Swapping a 7.2 RU for a 7.1 RU never helps.
                prop_assert!(lat(n71 + 1, n72 - 1, load) >= base);
            }
        }
    }
}
