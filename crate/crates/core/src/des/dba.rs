//! Cooperative DBA: demand is known at the start of each grant round, so no
//! report/grant round trip is needed.

use serde::{Deserialize, Serialize};

/// Timing and capacity of the grant round being scheduled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleState {
    pub start_us: f64,
    /// Transmission capacity of the round before guard overhead, in the
    /// same unit as the demands.
    pub capacity: f64,
    /// Units transmitted per microsecond.
    pub rate_per_us: f64,
    /// Idle interval preceding every burst.
    pub guard_us: f64,
    /// Grant granularity (e.g. one frame); 0 grants arbitrary amounts.
    pub quantum: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grant {
    pub onu: usize,
    pub size: f64,
    pub start_us: f64,
    pub end_us: f64,
}

/// Splits `capacity` among `demands`: everyone gets their demand when it
/// all fits, otherwise shares are proportional to demand.
pub fn proportional_shares(demands: &[f64], capacity: f64) -> Vec<f64> {
    let total: f64 = demands.iter().sum();
    if total <= capacity {
        return demands.to_vec();
    }
    let scale = capacity.max(0.0) / total;
    demands.iter().map(|d| d * scale).collect()
}

/// Proportional shares rounded to whole `quantum` units by largest
/// remainder (ties to the lower index). The total is the capacity rounded
/// down to whole units, but at least one unit so a round always progresses.
pub fn quantized_shares(demands: &[f64], capacity: f64, quantum: f64) -> Vec<f64> {
    let units: Vec<u64> = demands.iter().map(|d| (d / quantum).round() as u64).collect();
    let total: u64 = units.iter().sum();
    let cap = ((capacity / quantum + 1e-9).floor() as u64).max(1);
    if total <= cap {
        return units.iter().map(|&u| u as f64 * quantum).collect();
    }
    let exact: Vec<f64> = units.iter().map(|&u| u as f64 * cap as f64 / total as f64).collect();
    let mut out: Vec<u64> = exact.iter().map(|e| e.floor() as u64).collect();
    let mut left = cap - out.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..units.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for i in order {
        if left == 0 {
            break;
        }
        if out[i] < units[i] {
            out[i] += 1;
            left -= 1;
        }
    }
    out.iter().map(|&u| u as f64 * quantum).collect()
}

/// Grants for one round. ONUs with positive demand get one burst each, in
/// ONU-id order, laid back to back with a guard interval before each burst.
/// The capacity left after the guards is shared proportionally, so the
/// round never idles while demand remains and capacity is left.
pub fn scheduler_grant(state: &CycleState, demands: &[f64]) -> Vec<Grant> {
    let active = demands.iter().filter(|&&d| d > 0.0).count();
    let usable = (state.capacity - active as f64 * state.guard_us * state.rate_per_us).max(0.0);
    let shares = if state.quantum > 0.0 {
        quantized_shares(demands, usable, state.quantum)
    } else {
        proportional_shares(demands, usable)
    };
    let mut t = state.start_us;
    let mut grants = Vec::with_capacity(active);
    for (onu, (&demand, &size)) in demands.iter().zip(&shares).enumerate() {
        if demand <= 0.0 {
            continue;
        }
        t += state.guard_us;
        let end_us = t + size / state.rate_per_us;
        grants.push(Grant {
            onu,
            size,
            start_us: t,
            end_us,
        });
        t = end_us;
    }
    grants
}
