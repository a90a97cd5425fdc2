use std::path::{Path, PathBuf};

use meshpon_core::latmodel::QueueModel;
use meshpon_core::powerbudget::{reference_configurations, BudgetParams, SplitterConfiguration};
use meshpon_core::slice::ChannelParams;
use meshpon_core::traffic::TrafficProfile;
use meshpon_core::{LayoutParams, NetworkLayout, OracleRegistry, VPonSlice};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// One experiment, as read from a JSON document. Every field has a default,
/// so `{}` is a valid config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seeds layout generation and the simulator.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Latency oracle used by `optimize`.
    pub oracle: String,
    pub threshold_us: f64,
    pub channel: ChannelParams,
    pub queue_model: QueueModel,
    pub layout: LayoutParams,
    /// A saved layout; replaces generation from `layout` when set.
    pub layout_file: Option<PathBuf>,
    pub traffic: TrafficSection,
    pub sim: SimSection,
    pub maio: MaioSection,
    pub budget: BudgetSection,
    pub simulate: SimulateSection,
    pub region: RegionSection,
    pub optimize: OptimizeSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out_dir: PathBuf::from("out"),
            oracle: "analytical".into(),
            threshold_us: 100.0,
            channel: ChannelParams::default(),
            queue_model: QueueModel::default(),
            layout: LayoutParams::default(),
            layout_file: None,
            traffic: TrafficSection::default(),
            sim: SimSection::default(),
            maio: MaioSection::default(),
            budget: BudgetSection::default(),
            simulate: SimulateSection::default(),
            region: RegionSection::default(),
            optimize: OptimizeSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSection {
    /// Uniform cell loads to run; each RU keeps the split of its small cell.
    pub loads: Vec<f64>,
    /// Per-RU traffic; replaces `loads` when set.
    pub profile_file: Option<PathBuf>,
}

impl Default for TrafficSection {
    fn default() -> Self {
        Self {
            loads: vec![0.5],
            profile_file: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub warmup_frames: u64,
    pub measured_frames: u64,
    pub record_trace: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            warmup_frames: 1_000,
            measured_frames: 20_000,
            record_trace: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaioSection {
    pub wavelengths_per_tree: usize,
    pub max_slices_wavelengths: usize,
    pub max_iterations: usize,
    pub minimize_cuts: bool,
    pub ilp_node_limit: Option<u64>,
}

impl Default for MaioSection {
    fn default() -> Self {
        let p = meshpon_core::MaioParams::default();
        Self {
            wavelengths_per_tree: p.wavelengths_per_tree,
            max_slices_wavelengths: p.max_slices_wavelengths,
            max_iterations: p.max_iterations,
            minimize_cuts: p.minimize_cuts,
            ilp_node_limit: p.ilp_node_limit,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSection {
    pub params: BudgetParams,
    pub configurations: Vec<SplitterConfiguration>,
    /// Class the level-2 EDFA gain is sized for.
    pub target_class: String,
}

impl Default for BudgetSection {
    fn default() -> Self {
        Self {
            params: BudgetParams::default(),
            configurations: reference_configurations(),
            target_class: "N1".into(),
        }
    }
}

/// The slice handed to `simulate`: a file, an inline slice, or one composed
/// of `n71` split-7.1 and `n72` split-7.2 RUs at a common load and distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub slice_file: Option<PathBuf>,
    pub slice: Option<VPonSlice>,
    pub n71: usize,
    pub n72: usize,
    pub load: f64,
    pub distance_km: f64,
    pub wavelengths: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            slice_file: None,
            slice: None,
            n71: 0,
            n72: 16,
            load: 0.5,
            distance_km: 1.0,
            wavelengths: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionSection {
    pub loads: Vec<f64>,
    pub max_n71: usize,
    pub max_n72: usize,
    pub distance_km: f64,
    /// Re-evaluate boundary points with the simulator.
    pub cross_check: bool,
}

impl Default for RegionSection {
    fn default() -> Self {
        Self {
            loads: vec![0.5, 0.7, 0.9],
            max_n71: 16,
            max_n72: 40,
            distance_km: 1.0,
            cross_check: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeSection {
    /// Iteration budgets to sweep; empty means just `maio.max_iterations`.
    pub max_iterations: Vec<usize>,
    /// Oracle that re-checks every returned slice (e.g. "simulated").
    pub validate_with: Option<String>,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub oracle: Option<String>,
    pub max_iterations: Option<usize>,
}

impl ExperimentConfig {
    /// Reads a config file. Relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.layout_file,
            &mut cfg.traffic.profile_file,
            &mut cfg.simulate.slice_file,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out_dir {
            self.out_dir = out.clone();
        }
        if let Some(oracle) = &o.oracle {
            self.oracle = oracle.clone();
        }
        if let Some(n) = o.max_iterations {
            self.maio.max_iterations = n;
            self.optimize.max_iterations = vec![n];
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.threshold_us > 0.0) {
            return bad("threshold_us: must be positive".into());
        }
        if let Err(e) = self.channel.validate() {
            return bad(format!("channel: {e}"));
        }
        let registry = OracleRegistry::with_builtins();
        for name in std::iter::once(&self.oracle).chain(&self.optimize.validate_with) {
            if !registry.names().contains(&name.as_str()) {
                return bad(format!(
                    "oracle: unknown `{name}` (available: {})",
                    registry.names().join(", ")
                ));
            }
        }
        if self.sim.measured_frames == 0 {
            return bad("sim.measured_frames: must be >= 1".into());
        }
        if self.maio.max_iterations == 0 || self.optimize.max_iterations.contains(&0) {
            return bad("max_iterations: must be >= 1".into());
        }
        for (field, loads) in [("traffic.loads", &self.traffic.loads), ("region.loads", &self.region.loads)] {
            if loads.is_empty() {
                return bad(format!("{field}: needs at least one load"));
            }
            if let Some(l) = loads.iter().find(|l| !(0.0..=1.0).contains(*l)) {
                return bad(format!("{field}: load {l} outside [0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.simulate.load) {
            return bad(format!("simulate.load: {} outside [0, 1]", self.simulate.load));
        }
        if self.simulate.wavelengths == 0 {
            return bad("simulate.wavelengths: must be >= 1".into());
        }
        if !(self.region.distance_km >= 0.0 && self.simulate.distance_km >= 0.0) {
            return bad("distance_km: must be non-negative".into());
        }
        for (field, p) in [
            ("layout_file", &self.layout_file),
            ("traffic.profile_file", &self.traffic.profile_file),
            ("simulate.slice_file", &self.simulate.slice_file),
        ] {
            if let Some(p) = p {
                if !p.is_file() {
                    return bad(format!("{field}: {} does not exist", p.display()));
                }
            }
        }
        Ok(())
    }

    pub fn sim_config(&self) -> meshpon_core::SimConfig {
        meshpon_core::SimConfig {
            channel: self.channel.clone(),
            warmup_frames: self.sim.warmup_frames,
            measured_frames: self.sim.measured_frames,
            seed: self.seed,
            record_trace: self.sim.record_trace,
        }
    }

    pub fn analytical_params(&self) -> meshpon_core::AnalyticalParams {
        meshpon_core::AnalyticalParams {
            channel: self.channel.clone(),
            model: self.queue_model,
        }
    }

    pub fn maio_params(&self, max_iterations: usize) -> meshpon_core::MaioParams {
        meshpon_core::MaioParams {
            threshold_us: self.threshold_us,
            wavelengths_per_tree: self.maio.wavelengths_per_tree,
            max_slices_wavelengths: self.maio.max_slices_wavelengths,
            max_iterations,
            latency_oracle: self.oracle.clone(),
            minimize_cuts: self.maio.minimize_cuts,
            ilp_node_limit: self.maio.ilp_node_limit,
            channel: self.channel.clone(),
        }
    }

    pub fn iteration_sweep(&self) -> Vec<usize> {
        if self.optimize.max_iterations.is_empty() {
            vec![self.maio.max_iterations]
        } else {
            self.optimize.max_iterations.clone()
        }
    }

    pub fn resolve_layout(&self) -> Result<NetworkLayout, CliError> {
        match &self.layout_file {
            Some(p) => {
                let layout: NetworkLayout = read_json(p, "layout_file")?;
                layout
                    .validate()
                    .map_err(|e| CliError::Config(format!("layout_file: {e}")))?;
                Ok(layout)
            }
            None => meshpon_core::generate_layout(self.seed, &self.layout)
                .map_err(|e| CliError::Config(format!("layout: {e}"))),
        }
    }

    /// Traffic runs as `(label, profile)` pairs, one per configured load.
    pub fn resolve_traffic(&self, layout: &NetworkLayout) -> Result<Vec<(String, TrafficProfile)>, CliError> {
        if let Some(p) = &self.traffic.profile_file {
            let profile: TrafficProfile = read_json(p, "traffic.profile_file")?;
            if profile.rus.len() != layout.small_cells.len() {
                return Err(CliError::Config(format!(
                    "traffic.profile_file: {} entries for {} small cells",
                    profile.rus.len(),
                    layout.small_cells.len()
                )));
            }
            return Ok(vec![("profile".into(), profile)]);
        }
        let splits: Vec<_> = layout.small_cells.iter().map(|c| c.split).collect();
        Ok(self
            .traffic
            .loads
            .iter()
            .map(|&l| (load_label(l), TrafficProfile::uniform(splits.iter().copied(), l)))
            .collect())
    }
}

pub fn load_label(load: f64) -> String {
    format!("{load:.2}")
}

pub fn read_json<T: DeserializeOwned>(path: &Path, field: &str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{field}: cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{field}: {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        let cfg: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_field_names_the_field() {
        let err = serde_json::from_str::<ExperimentConfig>("{\n  \"maio\": {\"max_iter\": 3}\n}")
            .unwrap_err()
            .to_string();
        assert!(err.contains("max_iter") && err.contains("line 2"), "{err}");
    }

    #[test]
    fn flags_override_file_values() {
        let mut cfg = ExperimentConfig::default();
        cfg.optimize.max_iterations = vec![1, 10];
        cfg.apply(&Overrides {
            seed: Some(9),
            out_dir: Some("x".into()),
            oracle: Some("simulated".into()),
            max_iterations: Some(5),
        });
        assert_eq!((cfg.seed, cfg.oracle.as_str()), (9, "simulated"));
        assert_eq!(cfg.out_dir, PathBuf::from("x"));
        assert_eq!(cfg.iteration_sweep(), vec![5]);
        assert_eq!(cfg.maio_params(5).max_iterations, 5);
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = ExperimentConfig::default();
        cfg.oracle = "psychic".into();
        assert!(matches!(cfg.validate(), Err(CliError::Config(m)) if m.contains("psychic")));
        let mut cfg = ExperimentConfig::default();
        cfg.traffic.loads = vec![1.5];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.layout_file = Some("/nonexistent/layout.json".into());
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn traffic_follows_layout_splits() {
        let cfg = ExperimentConfig {
            traffic: TrafficSection {
                loads: vec![0.3, 0.9],
                profile_file: None,
            },
            ..Default::default()
        };
        let layout = cfg.resolve_layout().unwrap();
        let runs = cfg.resolve_traffic(&layout).unwrap();
        assert_eq!(runs.iter().map(|r| r.0.as_str()).collect::<Vec<_>>(), ["0.30", "0.90"]);
        for (c, ru) in layout.small_cells.iter().zip(&runs[1].1.rus) {
            assert_eq!((c.split, ru.load), (ru.split, 0.9));
        }
    }
}
