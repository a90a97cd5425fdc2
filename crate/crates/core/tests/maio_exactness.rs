mod common;

use common::{brute_force_min_mecs, small_instance};
use meshpon_core::maio::{maio_optimize, solve_ilp, IlpModel, IlpSite, NoGoodCut, SolveStatus};
use meshpon_core::oracle::AnalyticalOracle;
use meshpon_core::{LatencyOracle, OltSite, SliceMember, VPonSlice};
use proptest::prelude::*;

#[test]
fn matches_brute_force_on_small_instances() {
    let mut infeasible = 0;
    let mut needed_cuts = 0;
    for seed in 0..50 {
        let (p, oracle) = small_instance(seed);
        let sol = maio_optimize(&p, &oracle).unwrap();
        let expected = brute_force_min_mecs(&p, &oracle);
        match expected {
            None => {
                infeasible += 1;
                assert_eq!(sol.status, SolveStatus::Infeasible, "seed {seed}");
            }
            Some(k) => {
                assert_ne!(sol.status, SolveStatus::Infeasible, "seed {seed}");
                assert_eq!(sol.mec_count(), k, "seed {seed}");
                needed_cuts += usize::from(sol.cuts_added > 0);
            }
        }
    }
    assert!(infeasible < 25, "corpus is mostly infeasible ({infeasible}/50)");
    assert!(needed_cuts >= 3, "latency rarely binds ({needed_cuts} instances with cuts)");
}

#[test]
fn cuts_never_remove_feasible_slices() {
    // Replay: every cut must name a slice the oracle rejects.
    let mut replayed = 0;
    for seed in 0..30 {
        let (p, oracle) = small_instance(seed);
        let sol = maio_optimize(&p, &oracle).unwrap();
        for cut in &sol.cuts {
            let members = cut
                .ru_ids
                .iter()
                .map(|&r| SliceMember {
                    ru_id: r,
                    distance_km: p
                        .layout
                        .distance_to_site_km(&p.layout.small_cells[r], cut.olt_site)
                        .unwrap(),
                    rate_bps: p.traffic.rus[r].rate_bps().unwrap(),
                })
                .collect();
            let slice = VPonSlice {
                olt_site: cut.olt_site,
                members,
                wavelengths: vec![0],
            };
            let verdict = oracle.evaluate(&slice);
            assert!(
                verdict.as_ref().map_or(true, |e| e.mean_us > p.params.threshold_us),
                "seed {seed}: cut {cut:?} removes a feasible slice ({verdict:?})"
            );
            replayed += 1;
        }
        for s in &sol.slices {
            assert!(s.latency.mean_us <= p.params.threshold_us);
            let replay = oracle.evaluate(&s.slice).unwrap();
            assert_eq!(replay.mean_us, s.latency.mean_us);
        }
    }
    assert!(replayed > 10);
}

fn site(id: usize, capacity: usize) -> IlpSite {
    IlpSite {
        site: OltSite::Mec(id),
        capacity: Some(capacity),
        tree: Some(0),
        cost: 1,
    }
}

/// Exhaustive ILP optimum over every enable pattern and assignment.
fn ilp_brute_force(model: &IlpModel) -> Option<usize> {
    let n_sites = model.sites.len();
    let mut best = None;
    for mask in 0u32..(1 << n_sites) {
        let enabled: Vec<usize> = (0..n_sites).filter(|&s| mask & (1 << s) != 0).collect();
        if enabled.len() < model.min_enabled || best.is_some_and(|b| enabled.len() >= b) {
            continue;
        }
        let total = n_sites.pow(model.n_rus as u32);
        let mut assign = vec![0; model.n_rus];
        for code in 0..total {
            let mut c = code;
            for a in assign.iter_mut() {
                *a = c % n_sites;
                c /= n_sites;
            }
            if model.is_feasible(&enabled, &assign) {
                best = Some(enabled.len());
                break;
            }
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ilp_matches_exhaustive_enumeration(
        caps in prop::collection::vec(1usize..5, 3),
        reach in prop::collection::vec(prop::collection::vec(any::<bool>(), 3), 1..=7),
        cut_specs in prop::collection::vec((0usize..3, prop::collection::vec(0usize..7, 1..4)), 0..4),
        tree_limit in 1usize..=3,
        weights in prop::collection::vec(0.1f64..10.0, 7),
        priority in prop::collection::vec(0.0f64..5.0, 3),
        min_enabled in 0usize..=2,
    ) {
        let n = reach.len();
        let reachable: Vec<Vec<usize>> = reach
            .iter()
            .map(|row| (0..3).filter(|&s| row[s]).collect())
            .collect();
        let cuts = cut_specs
            .into_iter()
            .map(|(s, m)| NoGoodCut::new(s, m.into_iter().map(|r| r % n).collect()))
            .collect();
        let model = IlpModel {
            n_rus: n,
            sites: caps.iter().enumerate().map(|(i, &c)| site(i, c)).collect(),
            reachable,
            tree_limits: [(0, tree_limit)].into_iter().collect(),
            cuts,
            min_enabled,
            weights: weights[..n].to_vec(),
            site_priority: priority,
            node_limit: None,
        };
        let got = solve_ilp(&model).ok();
        prop_assert_eq!(got.as_ref().map(|s| s.objective), ilp_brute_force(&model));
        prop_assert!(got.as_ref().is_none_or(|s| s.proven));
        if let Some(sol) = got {
            prop_assert!(model.is_feasible(&sol.enabled, &sol.assignment));
        }
    }

    #[test]
    fn violating_slices_stay_violating_when_grown(
        n in 1usize..12, extra in 1usize..4, rate in 1e9f64..8e9, km in 0.1f64..15.0,
    ) {
        // Monotonicity that makes the cuts valid.
        let oracle = AnalyticalOracle::default();
        let mk = |k: usize| VPonSlice {
            olt_site: OltSite::Mec(0),
            members: (0..k).map(|i| SliceMember { ru_id: i, distance_km: km, rate_bps: rate }).collect(),
            wavelengths: vec![0],
        };
        let lat = |k: usize| oracle.evaluate(&mk(k)).map_or(f64::INFINITY, |e| e.mean_us);
        prop_assert!(lat(n + extra) >= lat(n));
    }
}
