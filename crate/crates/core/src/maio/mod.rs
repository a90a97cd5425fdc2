//! Minimum-MEC slice assignment under a latency threshold.
//!
//! The loop alternates between a latency-free ILP ([`ilp`]) and a latency
//! oracle. The first ILP solve gives a lower bound on the MEC count. Every
//! slice the oracle rejects becomes a no-good cut, which also excludes its
//! supersets because latency grows with membership. When a level runs out of
//! iterations, the optimizer allows one more MEC and carries on with all
//! cuts kept.

pub mod ilp;

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::LatencyOracle;
use crate::slice::{ChannelParams, LatencyError, LatencyEstimate, OltSite, SliceMember, VPonSlice};
use crate::topology::NetworkLayout;
use crate::traffic::{TrafficError, TrafficProfile};

pub use ilp::{solve_ilp, IlpError, IlpModel, IlpSite, IlpSolution, NoGoodCut};

#[derive(Debug, Error)]
pub enum MaioError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error("latency oracle failed on {site}: {source}")]
    Oracle { site: OltSite, source: LatencyError },
    #[error(transparent)]
    Ilp(IlpError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaioParams {
    pub threshold_us: f64,
    /// Wavelengths available on each level-2 tree.
    pub wavelengths_per_tree: usize,
    /// Wavelengths given to each vPON slice.
    pub max_slices_wavelengths: usize,
    /// Iteration budget per MEC-count level.
    pub max_iterations: usize,
    /// Registry name of the latency oracle.
    pub latency_oracle: String,
    /// Shrink each violating slice to a minimal violating subset before
    /// cutting. The smaller cut is still valid because latency grows with
    /// membership, and it excludes far more assignments.
    pub minimize_cuts: bool,
    /// Search nodes per enable pattern in each ILP solve; `None` is unlimited.
    pub ilp_node_limit: Option<u64>,
    /// Used only to drop paths whose propagation alone exceeds the threshold.
    pub channel: ChannelParams,
}

impl Default for MaioParams {
    fn default() -> Self {
        Self {
            threshold_us: 100.0,
            wavelengths_per_tree: 4,
            max_slices_wavelengths: 1,
            max_iterations: 100,
            latency_oracle: "analytical".into(),
            minimize_cuts: true,
            ilp_node_limit: Some(5_000),
            channel: ChannelParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaioProblem {
    pub layout: NetworkLayout,
    pub traffic: TrafficProfile,
    pub params: MaioParams,
}

impl MaioProblem {
    pub fn validate(&self) -> Result<(), MaioError> {
        let bad = |m: &str| Err(MaioError::InvalidProblem(m.into()));
        let p = &self.params;
        if !(p.threshold_us > 0.0) {
            return bad("threshold_us must be positive");
        }
        if p.max_iterations == 0 {
            return bad("max_iterations must be >= 1");
        }
        if p.max_slices_wavelengths == 0 || p.wavelengths_per_tree < p.max_slices_wavelengths {
            return bad("each tree needs room for at least one slice's wavelengths");
        }
        if self.traffic.rus.len() != self.layout.small_cells.len() {
            return bad("traffic profile must list one entry per small cell");
        }
        self.traffic.validate()?;
        self.layout
            .validate()
            .map_err(|e| MaioError::InvalidProblem(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// Every smaller MEC count was proven infeasible.
    Optimal,
    /// Feasible, but found after the iteration budget forced extra MECs.
    FeasibleAtBound,
    Infeasible,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasibleReason {
    /// Some RU has no optical path to any OLT site.
    Reachability,
    /// Capacities or per-tree wavelength limits cannot host every RU.
    Capacity,
    /// The latency cuts exclude every assignment.
    Latency,
    /// The budget ran out with every MEC already allowed.
    IterationLimit,
    /// The ILP search limit stopped the solver before any assignment was found.
    SearchLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceResult {
    pub slice: VPonSlice,
    pub latency: LatencyEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Minimum MEC count imposed on the ILP.
    pub level: usize,
    /// MECs actually serving RUs in this iteration's assignment.
    pub mec_count: usize,
    pub violations: usize,
    pub cuts_total: usize,
    pub feasible: bool,
    pub elapsed_s: f64,
}

/// A no-good cut: these RUs may not all share this site's slice.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutRecord {
    pub olt_site: OltSite,
    pub ru_ids: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaioSolution {
    pub status: SolveStatus,
    pub infeasible_reason: Option<InfeasibleReason>,
    /// Macro-site ids of MECs serving at least one RU.
    pub enabled_mecs: Vec<usize>,
    /// OLT site per small-cell id; empty when infeasible.
    pub assignment: Vec<OltSite>,
    pub slices: Vec<SliceResult>,
    pub n_mec_lower_bound: Option<usize>,
    pub iterations_used: usize,
    pub cuts_added: usize,
    pub wall_time_s: f64,
    pub threshold_us: f64,
    pub oracle: String,
    pub iteration_log: Vec<IterationRecord>,
    pub cuts: Vec<CutRecord>,
}

impl MaioSolution {
    pub fn mec_count(&self) -> usize {
        self.enabled_mecs.len()
    }
}

/// ILP skeleton plus the data needed to turn an ILP assignment into slices.
struct Instance {
    model: IlpModel,
    distance: Vec<BTreeMap<usize, f64>>,
    rates: Vec<f64>,
}

fn build_instance(problem: &MaioProblem) -> Result<Result<Instance, InfeasibleReason>, MaioError> {
    let layout = &problem.layout;
    let p = &problem.params;
    let mut sites: Vec<IlpSite> = layout
        .macro_sites
        .iter()
        .map(|m| IlpSite {
            site: OltSite::Mec(m.id),
            capacity: Some(m.mec_capacity),
            tree: Some(m.level2_id),
            cost: 1,
        })
        .collect();
    sites.push(IlpSite {
        site: OltSite::Co,
        capacity: None,
        tree: None,
        cost: 0,
    });
    let per_tree = p.wavelengths_per_tree / p.max_slices_wavelengths;
    let tree_limits = layout
        .level2_splitters
        .iter()
        .map(|l| (l.id, per_tree))
        .collect();

    let rates = problem
        .traffic
        .rus
        .iter()
        .map(|t| t.rate_bps())
        .collect::<Result<Vec<f64>, _>>()?;
    let mut reachable = Vec::with_capacity(layout.small_cells.len());
    let mut distance = Vec::with_capacity(layout.small_cells.len());
    let mut no_path = false;
    for cell in &layout.small_cells {
        let mut row = Vec::new();
        let mut dist = BTreeMap::new();
        let mut any_path = false;
        for (s, site) in sites.iter().enumerate() {
            let Some(d) = layout.distance_to_site_km(cell, site.site) else {
                continue;
            };
            any_path = true;
            if p.channel.propagation_us(d) < p.threshold_us {
                row.push(s);
                dist.insert(s, d);
            }
        }
        no_path |= !any_path;
        reachable.push(row);
        distance.push(dist);
    }
    if no_path {
        return Ok(Err(InfeasibleReason::Reachability));
    }
    if reachable.iter().any(Vec::is_empty) {
        return Ok(Err(InfeasibleReason::Latency));
    }
    Ok(Ok(Instance {
        model: IlpModel {
            n_rus: layout.small_cells.len(),
            sites,
            reachable,
            tree_limits,
            cuts: Vec::new(),
            min_enabled: 0,
            weights: rates.clone(),
            site_priority: Vec::new(),
            node_limit: p.ilp_node_limit,
        },
        distance,
        rates,
    }))
}

impl Instance {
    fn cut_records(&self) -> Vec<CutRecord> {
        self.model
            .cuts
            .iter()
            .map(|c| CutRecord {
                olt_site: self.model.sites[c.site].site,
                ru_ids: c.members.clone(),
            })
            .collect()
    }

    /// One slice per used site, in site order, members in RU order.
    fn slices(&self, assignment: &[usize], wavelengths_per_slice: usize) -> Vec<(usize, VPonSlice)> {
        let mut by_site: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (r, &s) in assignment.iter().enumerate() {
            by_site.entry(s).or_default().push(r);
        }
        let mut next_in_tree: BTreeMap<Option<usize>, u32> = BTreeMap::new();
        by_site
            .into_iter()
            .map(|(s, rus)| {
                let site = &self.model.sites[s];
                let first = next_in_tree.entry(site.tree).or_insert(0);
                let wavelengths = (*first..*first + wavelengths_per_slice as u32).collect();
                *first += wavelengths_per_slice as u32;
                let members = rus
                    .iter()
                    .map(|&r| SliceMember {
                        ru_id: r,
                        distance_km: self.distance[r][&s],
                        rate_bps: self.rates[r],
                    })
                    .collect();
                (
                    s,
                    VPonSlice {
                        olt_site: site.site,
                        members,
                        wavelengths,
                    },
                )
            })
            .collect()
    }
}

/// `Ok(Some(estimate))` when the slice meets the threshold, `Ok(None)` when
/// it violates it (including instability).
fn judge(
    oracle: &dyn LatencyOracle,
    slice: &VPonSlice,
    threshold_us: f64,
) -> Result<Option<LatencyEstimate>, MaioError> {
    match oracle.evaluate(slice) {
        Ok(e) if e.mean_us <= threshold_us => Ok(Some(e)),
        Ok(_) | Err(LatencyError::Unstable { .. }) => Ok(None),
        Err(source) => Err(MaioError::Oracle {
            site: slice.olt_site,
            source,
        }),
    }
}

/// Deletion filter: drops members one at a time (lowest rate first) while
/// the rest still violates. Returns the RU ids of the remaining members.
fn minimal_violating_subset(
    oracle: &dyn LatencyOracle,
    slice: &VPonSlice,
    threshold_us: f64,
) -> Result<Vec<usize>, MaioError> {
    let mut order: Vec<usize> = (0..slice.members.len()).collect();
    order.sort_by(|&a, &b| {
        let (ma, mb) = (&slice.members[a], &slice.members[b]);
        ma.rate_bps
            .total_cmp(&mb.rate_bps)
            .then(ma.distance_km.total_cmp(&mb.distance_km))
            .then(a.cmp(&b))
    });
    let mut keep = vec![true; slice.members.len()];
    for i in order {
        keep[i] = false;
        let trial = VPonSlice {
            members: slice
                .members
                .iter()
                .zip(&keep)
                .filter(|(_, &k)| k)
                .map(|(m, _)| m.clone())
                .collect(),
            ..slice.clone()
        };
        if trial.members.is_empty() || judge(oracle, &trial, threshold_us)?.is_some() {
            keep[i] = true;
        }
    }
    Ok(slice
        .members
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(m, _)| m.ru_id)
        .collect())
}

fn infeasible(
    problem: &MaioProblem,
    reason: InfeasibleReason,
    lower_bound: Option<usize>,
    log: Vec<IterationRecord>,
    cuts: Vec<CutRecord>,
    start: Instant,
) -> MaioSolution {
    MaioSolution {
        status: SolveStatus::Infeasible,
        infeasible_reason: Some(reason),
        enabled_mecs: Vec::new(),
        assignment: Vec::new(),
        slices: Vec::new(),
        n_mec_lower_bound: lower_bound,
        iterations_used: log.len(),
        cuts_added: cuts.len(),
        wall_time_s: start.elapsed().as_secs_f64(),
        threshold_us: problem.params.threshold_us,
        oracle: String::new(),
        iteration_log: log,
        cuts,
    }
}

/// Runs the optimization loop with `oracle` as the latency constraint.
///
/// Infeasible instances are reported through [`SolveStatus::Infeasible`];
/// errors are reserved for malformed problems and oracle failures.
pub fn maio_optimize(problem: &MaioProblem, oracle: &dyn LatencyOracle) -> Result<MaioSolution, MaioError> {
    let start = Instant::now();
    problem.validate()?;
    let p = &problem.params;
    let with_oracle = |mut s: MaioSolution| {
        s.oracle = oracle.name().to_string();
        s
    };
    let mut inst = match build_instance(problem)? {
        Ok(i) => i,
        Err(reason) => return Ok(with_oracle(infeasible(problem, reason, None, vec![], vec![], start))),
    };

    // Screen single-RU slices: a pair that fails alone fails in any slice.
    let pairs: Vec<(usize, usize)> = inst
        .model
        .reachable
        .iter()
        .enumerate()
        .flat_map(|(r, row)| row.iter().map(move |&s| (r, s)))
        .collect();
    let verdicts = pairs
        .par_iter()
        .map(|&(r, s)| {
            let slice = VPonSlice {
                olt_site: inst.model.sites[s].site,
                members: vec![SliceMember {
                    ru_id: r,
                    distance_km: inst.distance[r][&s],
                    rate_bps: inst.rates[r],
                }],
                wavelengths: (0..p.max_slices_wavelengths as u32).collect(),
            };
            judge(oracle, &slice, p.threshold_us).map(|v| v.is_some())
        })
        .collect::<Result<Vec<bool>, _>>()?;
    for (&(r, s), ok) in pairs.iter().zip(verdicts) {
        if !ok {
            inst.model.reachable[r].retain(|&x| x != s);
        }
    }
    if inst.model.reachable.iter().any(Vec::is_empty) {
        return Ok(with_oracle(infeasible(problem, InfeasibleReason::Latency, None, vec![], vec![], start)));
    }

    let mut current = match solve_ilp(&inst.model) {
        Ok(s) => s,
        Err(IlpError::Infeasible) => {
            return Ok(with_oracle(infeasible(problem, InfeasibleReason::Capacity, None, vec![], vec![], start)))
        }
        Err(IlpError::SearchLimit) => {
            return Ok(with_oracle(infeasible(problem, InfeasibleReason::SearchLimit, None, vec![], vec![], start)))
        }
        Err(e) => return Err(MaioError::Ilp(e)),
    };
    let lower_bound = current.objective;
    // Every MEC count below this is proven infeasible under the current cuts.
    let mut proven_floor = if current.proven { lower_bound } else { 0 };
    // Cuts seen per level-2 tree; steers which MECs a larger level enables.
    let mut pressure: BTreeMap<Option<usize>, f64> = BTreeMap::new();
    let n_candidates = inst.model.candidates().len();
    let mut level = lower_bound;
    let mut at_level = 0usize;
    let mut log = Vec::new();

    loop {
        let slices = inst.slices(&current.assignment, p.max_slices_wavelengths);
        let verdicts = slices
            .par_iter()
            .map(|(_, s)| {
                let v = judge(oracle, s, p.threshold_us)?;
                let cut = match (&v, p.minimize_cuts) {
                    (Some(_), _) => None,
                    (None, false) => Some(s.members.iter().map(|m| m.ru_id).collect()),
                    (None, true) => Some(minimal_violating_subset(oracle, s, p.threshold_us)?),
                };
                Ok((v, cut))
            })
            .collect::<Result<Vec<_>, MaioError>>()?;
        let mut violations = 0;
        for ((s, _), (_, cut)) in slices.iter().zip(&verdicts) {
            if let Some(members) = cut {
                violations += 1;
                *pressure.entry(inst.model.sites[*s].tree).or_default() += 1.0;
                inst.model.cuts.push(NoGoodCut::new(*s, members.clone()));
            }
        }
        at_level += 1;
        let used: Vec<usize> = slices
            .iter()
            .filter_map(|(_, s)| match s.olt_site {
                OltSite::Mec(id) => Some(id),
                OltSite::Co => None,
            })
            .collect();
        log.push(IterationRecord {
            iteration: log.len() + 1,
            level,
            mec_count: used.len(),
            violations,
            cuts_total: inst.model.cuts.len(),
            feasible: violations == 0,
            elapsed_s: start.elapsed().as_secs_f64(),
        });

        if violations == 0 {
            let status = if used.len() <= proven_floor {
                SolveStatus::Optimal
            } else {
                SolveStatus::FeasibleAtBound
            };
            let site_of = |s: usize| inst.model.sites[s].site;
            return Ok(with_oracle(MaioSolution {
                status,
                infeasible_reason: None,
                enabled_mecs: used,
                assignment: current.assignment.iter().map(|&s| site_of(s)).collect(),
                slices: slices
                    .into_iter()
                    .zip(verdicts)
                    .map(|((_, slice), (v, _))| SliceResult {
                        slice,
                        latency: v.expect("no violations"),
                    })
                    .collect(),
                n_mec_lower_bound: Some(lower_bound),
                iterations_used: log.len(),
                cuts_added: inst.model.cuts.len(),
                wall_time_s: start.elapsed().as_secs_f64(),
                threshold_us: p.threshold_us,
                oracle: String::new(),
                iteration_log: log,
                cuts: inst.cut_records(),
            }));
        }

        if at_level >= p.max_iterations {
            if current.objective >= n_candidates {
                let cuts = inst.cut_records();
                return Ok(with_oracle(infeasible(
                    problem,
                    InfeasibleReason::IterationLimit,
                    Some(lower_bound),
                    log,
                    cuts,
                    start,
                )));
            }
            // Allocate one more MEC than the last attempt used.
            level = current.objective + 1;
            at_level = 0;
        }
        inst.model.min_enabled = level;
        inst.model.site_priority = inst
            .model
            .sites
            .iter()
            .map(|site| pressure.get(&site.tree).copied().unwrap_or(0.0))
            .collect();
        current = match solve_ilp(&inst.model) {
            Ok(s) => s,
            Err(IlpError::Infeasible) => {
                let cuts = inst.cut_records();
                return Ok(with_oracle(infeasible(
                    problem,
                    InfeasibleReason::Latency,
                    Some(lower_bound),
                    log,
                    cuts,
                    start,
                )));
            }
            Err(IlpError::SearchLimit) => {
                let cuts = inst.cut_records();
                return Ok(with_oracle(infeasible(
                    problem,
                    InfeasibleReason::SearchLimit,
                    Some(lower_bound),
                    log,
                    cuts,
                    start,
                )));
            }
            Err(e) => return Err(MaioError::Ilp(e)),
        };
        if level <= proven_floor && current.proven {
            proven_floor = current.objective;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceValidation {
    pub olt_site: OltSite,
    pub ru_ids: Vec<usize>,
    /// `None` when the oracle found the slice unstable.
    pub estimate: Option<LatencyEstimate>,
    pub within_threshold: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub oracle: String,
    pub threshold_us: f64,
    pub slices: Vec<SliceValidation>,
}

impl ValidationReport {
    /// Slices that miss the threshold under the validating oracle.
    pub fn flagged(&self) -> impl Iterator<Item = &SliceValidation> {
        self.slices.iter().filter(|s| !s.within_threshold)
    }
}

/// Re-evaluates every slice of `solution` with `oracle` (normally the
/// simulator). Violations are reported, not raised.
pub fn evaluate_solution(
    solution: &MaioSolution,
    oracle: &dyn LatencyOracle,
) -> Result<ValidationReport, MaioError> {
    let slices = solution
        .slices
        .par_iter()
        .map(|r| {
            let estimate = match oracle.evaluate(&r.slice) {
                Ok(e) => Some(e),
                Err(LatencyError::Unstable { .. }) => None,
                Err(source) => {
                    return Err(MaioError::Oracle {
                        site: r.slice.olt_site,
                        source,
                    })
                }
            };
            Ok(SliceValidation {
                olt_site: r.slice.olt_site,
                ru_ids: r.slice.members.iter().map(|m| m.ru_id).collect(),
                within_threshold: estimate
                    .as_ref()
                    .is_some_and(|e| e.mean_us <= solution.threshold_us),
                estimate,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ValidationReport {
        oracle: oracle.name().to_string(),
        threshold_us: solution.threshold_us,
        slices,
    })
}
