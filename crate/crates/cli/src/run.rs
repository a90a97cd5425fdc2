use std::collections::BTreeSet;
use std::fmt;

use meshpon_core::des::FrameRecord;
use meshpon_core::latmodel::{composed_slice, max_members_feasible};
use meshpon_core::maio::{IterationRecord, ValidationReport};
use meshpon_core::oracle::OracleContext;
use meshpon_core::powerbudget::budget_table;
use meshpon_core::{
    analytic_latency_us, evaluate_solution, maio_optimize, simulate_slice, LatencyError, LatencyEstimate,
    LatencyOracle, MaioError, MaioProblem, MaioSolution, NetworkLayout, OltSite, OracleRegistry, SolveStatus,
    VPonSlice,
};
use serde::Serialize;

use crate::artifact::{self, tidy, Artifact};
use crate::config::{load_label, read_json, ExperimentConfig};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Budget,
    Simulate,
    Region,
    Optimize,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Budget => "budget",
            Command::Simulate => "simulate",
            Command::Region => "region",
            Command::Optimize => "optimize",
        })
    }
}

/// What a run produced. `infeasible` lists runs that ended without a
/// feasible answer; their artifacts are still written.
#[derive(Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub summary: Vec<String>,
    pub infeasible: Vec<String>,
}

/// Validates the config, runs `cmd` and writes its artifacts to `out_dir`.
pub fn execute(cmd: Command, cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let outcome = match cmd {
        Command::Budget => run_budget(cfg)?,
        Command::Simulate => run_simulate(cfg)?,
        Command::Region => run_region(cfg)?,
        Command::Optimize => run_optimize(cfg)?,
    };
    artifact::write_all(&cfg.out_dir, &outcome.artifacts)?;
    Ok(outcome)
}

pub fn run_budget(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let b = &cfg.budget;
    let mut rows = budget_table(&b.configurations, &b.params, &b.target_class)
        .map_err(|e| CliError::Config(format!("budget: {e}")))?;
    for r in &mut rows {
        r.loss_db = tidy(r.loss_db);
        r.edfa_gain_db = tidy(r.edfa_gain_db);
        r.loss_with_edfa_db = tidy(r.loss_with_edfa_db);
        r.required_gain_db = tidy(r.required_gain_db);
    }
    let summary = rows
        .iter()
        .map(|r| {
            format!(
                "{:>4} {:<9} {:?}: {:6.2} dB {:<10} | with {:>2} dB EDFA: {:6.2} dB {}",
                r.total_split,
                r.configuration,
                r.reflect_at,
                r.loss_db,
                r.class,
                r.edfa_gain_db,
                r.loss_with_edfa_db,
                r.class_with_edfa
            )
        })
        .collect();
    Ok(Outcome {
        artifacts: vec![
            artifact::csv("budget.csv", "budget", cfg, &rows)?,
            artifact::json("budget.json", "budget", cfg, &rows)?,
        ],
        summary,
        infeasible: vec![],
    })
}

#[derive(Serialize)]
struct SimulateResult<'a> {
    slice: &'a VPonSlice,
    simulated: &'a LatencyEstimate,
    min_us: f64,
    max_us: f64,
    frames_generated: u64,
    frames_delivered: u64,
    frames_in_flight: u64,
    end_time_us: f64,
    rho: &'a [f64],
    analytical: Option<LatencyEstimate>,
}

#[derive(Serialize)]
struct SimulateRow {
    members: usize,
    wavelengths: usize,
    mean_us: f64,
    p99_us: Option<f64>,
    min_us: f64,
    max_us: f64,
    frames_measured: u64,
    frames_generated: u64,
    frames_delivered: u64,
    frames_in_flight: u64,
    max_rho: f64,
    analytical_mean_us: Option<f64>,
}

fn resolve_slice(cfg: &ExperimentConfig) -> Result<VPonSlice, CliError> {
    let s = &cfg.simulate;
    let slice = match (&s.slice_file, &s.slice) {
        (Some(p), _) => read_json(p, "simulate.slice_file")?,
        (None, Some(slice)) => slice.clone(),
        (None, None) => composed_slice(s.n71, s.n72, s.load, s.distance_km, s.wavelengths)
            .map_err(|e| CliError::Config(format!("simulate: {e}")))?,
    };
    slice
        .validate()
        .map_err(|e| CliError::Config(format!("simulate: {e}")))?;
    Ok(slice)
}

fn latency_failure(e: LatencyError) -> CliError {
    match e {
        LatencyError::Unstable { .. } => CliError::Infeasible(e.to_string()),
        _ => CliError::Config(e.to_string()),
    }
}

pub fn run_simulate(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let slice = resolve_slice(cfg)?;
    let report = simulate_slice(&slice, &cfg.sim_config()).map_err(latency_failure)?;
    let analytical = analytic_latency_us(&slice, &cfg.analytical_params()).ok();
    let est = &report.estimate;
    let row = SimulateRow {
        members: slice.members.len(),
        wavelengths: slice.wavelengths.len(),
        mean_us: est.mean_us,
        p99_us: est.p99_us,
        min_us: report.min_us,
        max_us: report.max_us,
        frames_measured: est.frames_measured,
        frames_generated: report.frames_generated,
        frames_delivered: report.frames_delivered,
        frames_in_flight: report.frames_in_flight,
        max_rho: report.rho.iter().copied().fold(0.0, f64::max),
        analytical_mean_us: analytical.as_ref().map(|a| a.mean_us),
    };
    let result = SimulateResult {
        slice: &slice,
        simulated: est,
        min_us: report.min_us,
        max_us: report.max_us,
        frames_generated: report.frames_generated,
        frames_delivered: report.frames_delivered,
        frames_in_flight: report.frames_in_flight,
        end_time_us: report.end_time_us,
        rho: &report.rho,
        analytical: analytical.clone(),
    };
    let mut artifacts = vec![
        artifact::json("simulate.json", "simulate", cfg, &result)?,
        artifact::csv("simulate.csv", "simulate", cfg, &[row])?,
    ];
    if let Some(trace) = &report.trace {
        artifacts.push(artifact::csv::<FrameRecord>("trace.csv", "simulate", cfg, trace)?);
    }
    let mut summary = vec![format!(
        "{} members on {} wavelength(s): simulated mean {:.3} us, p99 {:.3} us over {} frames",
        slice.members.len(),
        slice.wavelengths.len(),
        est.mean_us,
        est.p99_us.unwrap_or(f64::NAN),
        est.frames_measured
    )];
    if let Some(a) = &analytical {
        summary.push(format!("analytical mean {:.3} us", a.mean_us));
    }
    Ok(Outcome {
        artifacts,
        summary,
        infeasible: vec![],
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RegionPoint {
    pub load: f64,
    pub n71: usize,
    pub n72: usize,
    /// Empty for the empty slice and for unstable slices.
    pub mean_us: Option<f64>,
    pub feasible: bool,
    /// Feasible, with an infeasible neighbour one RU further along an axis.
    pub boundary: bool,
    pub sim_mean_us: Option<f64>,
    pub sim_feasible: Option<bool>,
}

#[derive(Serialize)]
struct RegionSummary {
    load: f64,
    feasible_points: usize,
    /// Largest feasible n72 for each n71, when any.
    max_n72: Vec<Option<usize>>,
    downward_closed: bool,
}

#[derive(Serialize)]
struct RegionResult {
    threshold_us: f64,
    distance_km: f64,
    regions: Vec<RegionSummary>,
    /// Each region contains every region at a higher load.
    nested: bool,
}

/// Feasibility of every `(n71, n72)` slice at `load` against the analytical model.
pub fn region_grid(cfg: &ExperimentConfig, load: f64) -> Result<Vec<RegionPoint>, CliError> {
    let r = &cfg.region;
    let params = cfg.analytical_params();
    let (w, h) = (r.max_n71 + 1, r.max_n72 + 1);
    let mut points = Vec::with_capacity(w * h);
    for n71 in 0..w {
        for n72 in 0..h {
            let feasible = max_members_feasible(n71, n72, load, cfg.threshold_us, r.distance_km, &params);
            let mean_us = if n71 + n72 == 0 {
                None
            } else {
                let slice = composed_slice(n71, n72, load, r.distance_km, 1)
                    .map_err(|e| CliError::Config(format!("region: {e}")))?;
                analytic_latency_us(&slice, &params).ok().map(|e| e.mean_us)
            };
            points.push(RegionPoint {
                load,
                n71,
                n72,
                mean_us,
                feasible,
                boundary: false,
                sim_mean_us: None,
                sim_feasible: None,
            });
        }
    }
    let at = |a: usize, b: usize| points[a * h + b].feasible;
    let boundary: Vec<bool> = points
        .iter()
        .map(|p| p.feasible && ((p.n71 + 1 < w && !at(p.n71 + 1, p.n72)) || (p.n72 + 1 < h && !at(p.n71, p.n72 + 1))))
        .collect();
    for (p, b) in points.iter_mut().zip(boundary) {
        p.boundary = b;
    }
    Ok(points)
}

fn downward_closed(points: &[RegionPoint], h: usize) -> bool {
    points.iter().filter(|p| p.feasible).all(|p| {
        (p.n71 == 0 || points[(p.n71 - 1) * h + p.n72].feasible)
            && (p.n72 == 0 || points[p.n71 * h + p.n72 - 1].feasible)
    })
}

pub fn run_region(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let r = &cfg.region;
    let h = r.max_n72 + 1;
    let sim = cfg.sim_config();
    let mut grids = Vec::new();
    for &load in &r.loads {
        let mut points = region_grid(cfg, load)?;
        if r.cross_check {
            for p in points.iter_mut().filter(|p| p.boundary && p.n71 + p.n72 > 0) {
                let slice = composed_slice(p.n71, p.n72, load, r.distance_km, 1)
                    .map_err(|e| CliError::Config(format!("region: {e}")))?;
                match simulate_slice(&slice, &sim) {
                    Ok(rep) => {
                        p.sim_mean_us = Some(rep.estimate.mean_us);
                        p.sim_feasible = Some(rep.estimate.mean_us <= cfg.threshold_us);
                    }
                    Err(LatencyError::Unstable { .. }) => p.sim_feasible = Some(false),
                    Err(e) => return Err(CliError::Config(e.to_string())),
                }
            }
        }
        grids.push((load, points));
    }

    let feasible_set = |pts: &[RegionPoint]| -> BTreeSet<(usize, usize)> {
        pts.iter().filter(|p| p.feasible).map(|p| (p.n71, p.n72)).collect()
    };
    let mut by_load: Vec<(f64, BTreeSet<(usize, usize)>)> =
        grids.iter().map(|(l, pts)| (*l, feasible_set(pts))).collect();
    by_load.sort_by(|a, b| a.0.total_cmp(&b.0));
    let nested = by_load.windows(2).all(|w| w[1].1.is_subset(&w[0].1));

    let mut artifacts = Vec::new();
    let mut regions = Vec::new();
    let mut summary = Vec::new();
    for (load, points) in &grids {
        let max_n72 = (0..=r.max_n71)
            .map(|n71| points[n71 * h..(n71 + 1) * h].iter().filter(|p| p.feasible).map(|p| p.n72).max())
            .collect();
        let feasible_points = points.iter().filter(|p| p.feasible).count();
        summary.push(format!("load {}: {feasible_points} feasible slice configurations", load_label(*load)));
        regions.push(RegionSummary {
            load: *load,
            feasible_points,
            max_n72,
            downward_closed: downward_closed(points, h),
        });
        artifacts.push(artifact::csv(
            format!("region_load{}.csv", load_label(*load)),
            "region",
            cfg,
            points,
        )?);
    }
    summary.push(format!("regions nested across loads: {nested}"));
    let result = RegionResult {
        threshold_us: cfg.threshold_us,
        distance_km: r.distance_km,
        regions,
        nested,
    };
    artifacts.push(artifact::json("region.json", "region", cfg, &result)?);
    Ok(Outcome {
        artifacts,
        summary,
        infeasible: vec![],
    })
}

#[derive(Serialize)]
struct OptimizeResult<'a> {
    load: &'a str,
    max_iterations: usize,
    solution: &'a MaioSolution,
    validation: Option<ValidationReport>,
}

#[derive(Serialize)]
struct SliceView {
    olt_site: OltSite,
    ru_ids: Vec<usize>,
    wavelengths: Vec<u32>,
    mean_us: f64,
}

#[derive(Serialize)]
struct LayoutView<'a> {
    layout: &'a NetworkLayout,
    enabled_mecs: &'a [usize],
    assignment: &'a [OltSite],
    slices: Vec<SliceView>,
}

#[derive(Serialize)]
struct CellRow {
    ru_id: usize,
    x_km: f64,
    y_km: f64,
    parent_macro: usize,
    split: &'static str,
    fiber_to_level1_km: f64,
}

/// One line of `optimize_summary.csv`.
#[derive(Clone, Debug, Serialize)]
pub struct OptimizeRow {
    pub load: String,
    pub max_iterations: usize,
    pub status: SolveStatus,
    pub infeasible_reason: String,
    pub mec_count: usize,
    pub n_mec_lower_bound: Option<usize>,
    pub iterations_used: usize,
    pub cuts_added: usize,
    pub flagged_slices: Option<usize>,
    pub wall_time_s: f64,
}

fn build_oracle(cfg: &ExperimentConfig, name: &str) -> Result<Box<dyn LatencyOracle>, CliError> {
    let ctx = OracleContext {
        analytical: cfg.analytical_params(),
        sim: cfg.sim_config(),
    };
    OracleRegistry::with_builtins()
        .build(name, &ctx)
        .map_err(|e| CliError::Config(e.to_string()))
}

fn maio_failure(e: MaioError) -> CliError {
    match e {
        MaioError::InvalidProblem(m) => CliError::Config(m),
        MaioError::Traffic(t) => CliError::Config(t.to_string()),
        other => CliError::Other(other.into()),
    }
}

pub fn run_optimize(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let layout = cfg.resolve_layout()?;
    let runs = cfg.resolve_traffic(&layout)?;
    let oracle = build_oracle(cfg, &cfg.oracle)?;
    let validator = cfg
        .optimize
        .validate_with
        .as_deref()
        .map(|n| build_oracle(cfg, n))
        .transpose()?;

    let cells: Vec<CellRow> = layout
        .small_cells
        .iter()
        .map(|c| CellRow {
            ru_id: c.id,
            x_km: c.position.x,
            y_km: c.position.y,
            parent_macro: c.parent_macro,
            split: c.split.label(),
            fiber_to_level1_km: c.fiber_to_level1_km,
        })
        .collect();
    let mut out = Outcome {
        artifacts: vec![artifact::csv("cells.csv", "optimize", cfg, &cells)?],
        ..Outcome::default()
    };
    let mut rows = Vec::new();
    for (label, traffic) in &runs {
        for it in cfg.iteration_sweep() {
            let problem = MaioProblem {
                layout: layout.clone(),
                traffic: traffic.clone(),
                params: cfg.maio_params(it),
            };
            let sol = maio_optimize(&problem, oracle.as_ref()).map_err(maio_failure)?;
            let validation = match &validator {
                Some(v) => Some(evaluate_solution(&sol, v.as_ref()).map_err(maio_failure)?),
                None => None,
            };
            let tag = format!("load{label}_it{it}");
            let reason = sol
                .infeasible_reason
                .map(|r| serde_json::to_value(r).map_or(String::new(), |v| v.as_str().unwrap_or("").to_string()))
                .unwrap_or_default();
            let row = OptimizeRow {
                load: label.clone(),
                max_iterations: it,
                status: sol.status,
                infeasible_reason: reason.clone(),
                mec_count: sol.mec_count(),
                n_mec_lower_bound: sol.n_mec_lower_bound,
                iterations_used: sol.iterations_used,
                cuts_added: sol.cuts_added,
                flagged_slices: validation.as_ref().map(|v| v.flagged().count()),
                wall_time_s: sol.wall_time_s,
            };
            if sol.status == SolveStatus::Infeasible {
                out.infeasible.push(format!("load {label}, max_iterations {it}: {reason}"));
                out.summary.push(format!("load {label} max_iterations {it}: infeasible ({reason})"));
            } else {
                out.summary.push(format!(
                    "load {label} max_iterations {it}: {:?}, {} MEC(s) (lower bound {}), {} iterations, {} cuts, {:.2} s",
                    sol.status,
                    sol.mec_count(),
                    sol.n_mec_lower_bound.map_or("-".into(), |n| n.to_string()),
                    sol.iterations_used,
                    sol.cuts_added,
                    sol.wall_time_s
                ));
            }
            if let Some(n) = row.flagged_slices.filter(|&n| n > 0) {
                out.summary.push(format!("  {n} slice(s) over threshold under the validating oracle"));
            }

            let view = LayoutView {
                layout: &layout,
                enabled_mecs: &sol.enabled_mecs,
                assignment: &sol.assignment,
                slices: sol
                    .slices
                    .iter()
                    .map(|s| SliceView {
                        olt_site: s.slice.olt_site,
                        ru_ids: s.slice.members.iter().map(|m| m.ru_id).collect(),
                        wavelengths: s.slice.wavelengths.clone(),
                        mean_us: s.latency.mean_us,
                    })
                    .collect(),
            };
            let result = OptimizeResult {
                load: label,
                max_iterations: it,
                solution: &sol,
                validation,
            };
            out.artifacts.extend([
                artifact::json(format!("solution_{tag}.json"), "optimize", cfg, &result)?,
                artifact::csv::<IterationRecord>(format!("iterations_{tag}.csv"), "optimize", cfg, &sol.iteration_log)?,
                artifact::json(format!("layout_{tag}.json"), "optimize", cfg, &view)?,
            ]);
            rows.push(row);
        }
    }
    out.artifacts
        .push(artifact::csv("optimize_summary.csv", "optimize", cfg, &rows)?);
    Ok(out)
}
