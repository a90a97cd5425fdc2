#![allow(dead_code)]

use std::collections::HashMap;

use meshpon_core::latmodel::AnalyticalParams;
use meshpon_core::maio::{MaioParams, MaioProblem};
use meshpon_core::oracle::AnalyticalOracle;
use meshpon_core::slice::ChannelParams;
use meshpon_core::topology::{generate_layout, CoPlacement, LayoutParams};
use meshpon_core::traffic::TrafficProfile;
use meshpon_core::{LatencyOracle, OltSite, SliceMember, VPonSlice};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small random instance (up to 8 RUs, up to 3 MECs) and a matching
/// analytical oracle. Line rates of 10-50 Gb/s make a few RUs enough to
/// saturate a wavelength, so latency cuts bind regularly.
pub fn small_instance(seed: u64) -> (MaioProblem, AnalyticalOracle) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let channel = ChannelParams {
        channel_rate_bps: [10e9, 25e9, 50e9][rng.random_range(0..3)],
        ..ChannelParams::default()
    };
    let n_macro = rng.random_range(1..=3);
    let n_small = rng.random_range(n_macro.max(2)..=8);
    let lp = LayoutParams {
        n_macro,
        n_small,
        area_width_km: rng.random_range(2.0..12.0),
        area_height_km: rng.random_range(2.0..12.0),
        mec_capacity: rng.random_range(4..=8),
        split71_fraction: 0.8,
        level2_fanout: rng.random_range(1..=3),
        co: CoPlacement::Fiber {
            km: if rng.random_bool(0.15) { 3.0 } else { 20.0 },
        },
        ..LayoutParams::default()
    };
    let layout = generate_layout(seed, &lp).expect("valid layout params");
    let load = [0.3, 0.5, 0.7, 0.9][rng.random_range(0..4)];
    let traffic = TrafficProfile::uniform(layout.small_cells.iter().map(|c| c.split), load);
    let params = MaioParams {
        threshold_us: [80.0, 100.0][rng.random_range(0..2)],
        wavelengths_per_tree: rng.random_range(2..=4),
        channel: channel.clone(),
        ..MaioParams::default()
    };
    let oracle = AnalyticalOracle {
        params: AnalyticalParams {
            channel,
            ..AnalyticalParams::default()
        },
    };
    (
        MaioProblem {
            layout,
            traffic,
            params,
        },
        oracle,
    )
}

/// Minimum MEC count over every assignment of RUs to sites, checked
/// directly against the constraints and the oracle. `None` if infeasible.
pub fn brute_force_min_mecs(problem: &MaioProblem, oracle: &dyn LatencyOracle) -> Option<usize> {
    let layout = &problem.layout;
    let p = &problem.params;
    let n = layout.small_cells.len();
    let mut sites: Vec<OltSite> = layout.macro_sites.iter().map(|m| OltSite::Mec(m.id)).collect();
    sites.push(OltSite::Co);
    let rates: Vec<f64> = problem.traffic.rus.iter().map(|t| t.rate_bps().unwrap()).collect();
    let per_tree = p.wavelengths_per_tree / p.max_slices_wavelengths;
    let mut cache: HashMap<(usize, Vec<usize>), bool> = HashMap::new();
    let mut best: Option<usize> = None;
    let mut assign = vec![0usize; n];
    let total = sites.len().pow(n as u32);
    'outer: for code in 0..total {
        let mut c = code;
        for a in assign.iter_mut() {
            *a = c % sites.len();
            c /= sites.len();
        }
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); sites.len()];
        for (r, &s) in assign.iter().enumerate() {
            groups[s].push(r);
        }
        let used: Vec<usize> = (0..layout.macro_sites.len()).filter(|&m| !groups[m].is_empty()).collect();
        if best.is_some_and(|b| used.len() >= b) {
            continue;
        }
        for &m in &used {
            if groups[m].len() > layout.macro_sites[m].mec_capacity {
                continue 'outer;
            }
        }
        let mut per: HashMap<usize, usize> = HashMap::new();
        for &m in &used {
            *per.entry(layout.macro_sites[m].level2_id).or_default() += 1;
        }
        if per.values().any(|&k| k > per_tree) {
            continue;
        }
        for (s, rus) in groups.iter().enumerate() {
            if rus.is_empty() {
                continue;
            }
            let ok = *cache.entry((s, rus.clone())).or_insert_with(|| {
                let mut members = Vec::new();
                for &r in rus {
                    match layout.distance_to_site_km(&layout.small_cells[r], sites[s]) {
                        Some(d) => members.push(SliceMember {
                            ru_id: r,
                            distance_km: d,
                            rate_bps: rates[r],
                        }),
                        None => return false,
                    }
                }
                let slice = VPonSlice {
                    olt_site: sites[s],
                    members,
                    wavelengths: (0..p.max_slices_wavelengths as u32).collect(),
                };
                oracle
                    .evaluate(&slice)
                    .is_ok_and(|e| e.mean_us <= p.threshold_us)
            });
            if !ok {
                continue 'outer;
            }
        }
        best = Some(used.len());
    }
    best
}
